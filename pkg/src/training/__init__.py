# This is src/training/__init__.py
