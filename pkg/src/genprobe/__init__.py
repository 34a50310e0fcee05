"""genprobe: probeable weight-spectrum quality metrics and their evaluation."""

__version__ = "0.1.0"
