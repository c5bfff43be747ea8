# This is src/field/__init__.py
