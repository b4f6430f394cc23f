"""Block spin (multi-block mean-field) Ising models: exact laws, sampling, limit theorems."""

__version__ = "0.1.0"
