"""Post-processing toolkit for behavior-based browser fingerprinting scans."""

__version__ = "0.1.0"
