#!/usr/bin/env python3
"""
mmforge - Launcher Script
"""
import os
import sys

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.cli.main import run

if __name__ == "__main__":
    try:
        sys.exit(run())
    except KeyboardInterrupt:
        print("\nStopped by user")
        sys.exit(130)
