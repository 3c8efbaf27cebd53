"""Self-similar blowup for equivariant wave maps and Yang-Mills fields:
explicit profiles, Heun-series stability spectrum, moving-mesh evolution."""

__version__ = "0.1.0"
