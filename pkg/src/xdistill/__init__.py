"""Cross-embodiment generalist/specialist policy distillation on a surrogate humanoid world."""

__version__ = "0.1.0"
