"""Low-rank LDL^T evaluation of Lyapunov-operator phi-functions."""

__version__ = "0.1.0"
