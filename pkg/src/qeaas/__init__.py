"""Entropy-as-a-service over CoAP with a post-quantum secure channel."""

__version__ = "0.1.0"
