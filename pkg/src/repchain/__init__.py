"""Two-layer lightweight blockchain with reputation-fused consensus: library and simulator."""

__version__ = "0.1.0"
