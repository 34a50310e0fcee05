"""genprobe-exporter: bridge framework checkpoints into genprobe containers."""

__version__ = "0.1.0"
