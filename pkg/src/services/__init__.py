# Services module

