"""Co-sufficient sampling and conditional inference through a recursive proxy of conditional densities."""

__version__ = "0.1.0"
