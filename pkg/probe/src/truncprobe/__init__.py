"""truncprobe: real-model truncation and cache-policy measurements."""

__version__ = "0.1.0"
