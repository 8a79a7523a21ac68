"""Toolkit de edición por score distillation sobre un oráculo analítico"""

__version__ = "1.0.0"
