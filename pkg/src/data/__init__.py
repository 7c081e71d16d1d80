# Static data module
