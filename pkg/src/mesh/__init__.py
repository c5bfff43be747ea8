# This is src/mesh/__init__.py
