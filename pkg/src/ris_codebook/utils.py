"""Small shared helpers: angle wrapping and reproducible seed derivation."""

from __future__ import annotations

import hashlib

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_phase(x):
    """Reduce angles to the interval (-pi, pi]; -pi maps to +pi."""
    x = np.asarray(x, dtype=float)
    w = np.mod(x, TWO_PI)
    w = np.where(w > np.pi, w - TWO_PI, w)
    if w.ndim == 0:
        return float(w)
    return w


def derive_seed(master: int, *parts) -> int:
    """Stable 63-bit seed for a named substream of a master seed.

    Hash-based so that independent tasks (stage, cluster, level, group)
    get decorrelated streams regardless of execution order.
    """
    text = repr((int(master),) + tuple(parts))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
