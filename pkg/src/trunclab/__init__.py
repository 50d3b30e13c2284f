"""trunclab: truncation-sensitivity lab for KV-cache compression studies."""

__version__ = "0.1.0"
