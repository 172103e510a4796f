"""Pure numpy ML-KEM and ML-DSA."""
