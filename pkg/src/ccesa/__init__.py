"""Communication-efficient secure aggregation over sparse random graphs."""

__version__ = "0.1.0"
