# retypelab/schemas/__init__.py
