"""Modality-separated domain adaptation on frozen vision-language features."""

__version__ = "0.1.0"
