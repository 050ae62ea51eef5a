# retypelab/__init__.py
"""Return-type inference for 32-bit x86 functions from their disassembly."""
