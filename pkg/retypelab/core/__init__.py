# retypelab/core/__init__.py
