# Models module

