# retypelab/services/__init__.py
