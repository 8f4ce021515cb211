"""micoach: a deterministic dialogue-training engine for MI practice."""

__version__ = "0.1.0"
