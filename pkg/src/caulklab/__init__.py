"""Transfer learning by caulking: adapters between frozen pre-trained maps."""

__version__ = "0.1.0"
