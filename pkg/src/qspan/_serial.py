"""Complex arrays as nested ``[re, im]`` pairs for the JSON file formats."""

from __future__ import annotations

import numpy as np


def encode(arr) -> list:
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim == 0:
        return [float(arr.real), float(arr.imag)]
    return [encode(a) for a in arr]


def decode(obj) -> np.ndarray:
    """Inverse of ``encode``; plain real numbers are accepted as well."""
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 0:
        return arr.astype(complex)
    if arr.shape[-1] == 2 and _looks_paired(obj):
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(complex)


def _looks_paired(obj) -> bool:
    # innermost element is a 2-list of numbers
    while isinstance(obj, list) and obj and isinstance(obj[0], list):
        obj = obj[0]
    return isinstance(obj, list) and len(obj) == 2 and all(
        isinstance(v, (int, float)) for v in obj
    )
