# This is src/render/__init__.py
