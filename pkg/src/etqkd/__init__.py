"""Energy-time entangled QKD over dispersive fiber: link budget, peak model,
event-level Monte Carlo and BB84 sifting."""

__version__ = "0.1.0"
