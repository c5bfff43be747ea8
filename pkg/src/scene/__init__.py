# This is src/scene/__init__.py
