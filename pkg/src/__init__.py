# This is src/__init__.py
