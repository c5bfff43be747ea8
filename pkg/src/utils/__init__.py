# This is src/utils/__init__.py
