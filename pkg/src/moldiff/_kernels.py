"""Hot loops with numba and pure-numpy implementations.

The numba path is used when numba imports and ``MOLDIFF_DISABLE_NUMBA`` is
not set to ``1``. Both paths return identical results; tests run each.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from typing import Iterator

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

_state = {"numba": HAVE_NUMBA and os.environ.get("MOLDIFF_DISABLE_NUMBA", "") != "1"}


def backend() -> str:
    return "numba" if _state["numba"] else "numpy"


@contextmanager
def use_backend(name: str) -> Iterator[None]:
    """Temporarily select ``"numba"`` or ``"numpy"``."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    old = _state["numba"]
    _state["numba"] = name == "numba"
    try:
        yield
    finally:
        _state["numba"] = old


# --- Levenshtein -----------------------------------------------------------

def _levenshtein_np(a: np.ndarray, b: np.ndarray) -> int:
    if a.size == 0 or b.size == 0:
        return int(a.size + b.size)
    m = b.size
    cols = np.arange(m + 1)
    prev = cols.copy()
    for i in range(1, a.size + 1):
        tmp = np.empty(m + 1, dtype=np.int64)
        tmp[0] = i
        tmp[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (b != a[i - 1]))
        # row-internal insertions: new[j] = min_k (tmp[k] + j - k)
        prev = np.minimum.accumulate(tmp - cols) + cols
    return int(prev[m])


if HAVE_NUMBA:

    @njit(cache=True)
    def _levenshtein_nb(a, b):
        n, m = a.size, b.size
        if n == 0 or m == 0:
            return n + m
        prev = np.arange(m + 1)
        cur = np.empty(m + 1, dtype=prev.dtype)
        for i in range(1, n + 1):
            cur[0] = i
            ai = a[i - 1]
            for j in range(1, m + 1):
                best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                sub = prev[j - 1] + (0 if b[j - 1] == ai else 1)
                if sub < best:
                    best = sub
                cur[j] = best
            prev, cur = cur, prev
        return prev[m]


def _codes(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32).astype(np.int64)


def levenshtein_codes(a: np.ndarray, b: np.ndarray) -> int:
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if _state["numba"]:
        return int(_levenshtein_nb(a, b))
    return _levenshtein_np(a, b)


def levenshtein(a: str, b: str) -> int:
    """Character edit distance (insert, delete, substitute; unit costs)."""
    return levenshtein_codes(_codes(a), _codes(b))


# --- nearest embedding rows ------------------------------------------------

def _nearest_np(x: np.ndarray, table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((x[:, None, :] - table[None, :, :]) ** 2).sum(axis=-1)
    idx = np.argmin(d2, axis=1)
    return idx, d2[np.arange(x.shape[0]), idx]


if HAVE_NUMBA:

    @njit(cache=True)
    def _nearest_nb(x, table):
        n, d = x.shape
        v = table.shape[0]
        idx = np.zeros(n, dtype=np.int64)
        best = np.empty(n, dtype=x.dtype)
        for i in range(n):
            bi = 0
            bd = np.inf
            for k in range(v):
                acc = 0.0
                for j in range(d):
                    diff = x[i, j] - table[k, j]
                    acc += diff * diff
                if acc < bd:
                    bd = acc
                    bi = k
            idx[i] = bi
            best[i] = bd
        return idx, best


def nearest_rows(x: np.ndarray, table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest ``table`` row (squared L2) for each row of ``x``.

    Ties resolve to the lowest row index. Returns ``(indices, squared distances)``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    table = np.ascontiguousarray(table, dtype=np.float64)
    if x.ndim != 2 or table.ndim != 2 or x.shape[1] != table.shape[1]:
        raise ValueError(f"shape mismatch: {x.shape} vs {table.shape}")
    if _state["numba"]:
        return _nearest_nb(x, table)
    return _nearest_np(x, table)


# --- error recursions ------------------------------------------------------

def _gamma_np(gamma: np.ndarray, delta: np.ndarray) -> np.ndarray:
    trials, T = delta.shape
    out = np.zeros((trials, T + 1))
    dev = np.zeros(trials)
    for t in range(T, 0, -1):
        dev = gamma[t - 1] * (dev + delta[:, t - 1])
        out[:, T - t + 1] = dev
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def _gamma_nb(gamma, delta):
        trials, T = delta.shape
        out = np.zeros((trials, T + 1))
        for r in range(trials):
            dev = 0.0
            for t in range(T, 0, -1):
                dev = gamma[t - 1] * (dev + delta[r, t - 1])
                out[r, T - t + 1] = dev
        return out


def gamma_recursion(gamma: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Run ``D_{t-1} = gamma_t (D_t + delta_t)`` from ``D_T = 0`` down to ``D_0``.

    Args:
        gamma: shape ``(T,)``, ``gamma[t-1]`` is the coefficient of step ``t``.
        delta: shape ``(trials, T)``, injected error at each step.

    Returns:
        ``(trials, T + 1)`` array; column ``k`` is the deviation after ``k``
        reverse steps, so the last column is ``D_0``.
    """
    gamma = np.ascontiguousarray(gamma, dtype=np.float64)
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    if delta.ndim != 2 or delta.shape[1] != gamma.shape[0]:
        raise ValueError(f"shape mismatch: gamma {gamma.shape}, delta {delta.shape}")
    if _state["numba"]:
        return _gamma_nb(gamma, delta)
    return _gamma_np(gamma, delta)


def _cumsum_np(steps: np.ndarray) -> np.ndarray:
    return np.cumsum(steps, axis=1)


if HAVE_NUMBA:

    @njit(cache=True)
    def _cumsum_nb(steps):
        trials, Z = steps.shape
        out = np.empty_like(steps)
        for r in range(trials):
            acc = 0.0
            for z in range(Z):
                acc += steps[r, z]
                out[r, z] = acc
        return out


def accumulate(steps: np.ndarray) -> np.ndarray:
    """Running sum along axis 1 of a ``(trials, Z)`` array."""
    steps = np.ascontiguousarray(steps, dtype=np.float64)
    if _state["numba"]:
        return _cumsum_nb(steps)
    return _cumsum_np(steps)
