"""Batched Hermitian linear algebra on per-node ``(n, n)`` coefficient stacks.

Closed forms are used for ``n <= 2`` (the common case, and far faster than
LAPACK on millions of tiny matrices); larger ``n`` falls back to numpy.
"""

from __future__ import annotations

import numpy as np


def hermitian_part(h: np.ndarray) -> np.ndarray:
    return 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))


def min_eigenvalue(h: np.ndarray) -> np.ndarray:
    n = h.shape[-1]
    if n == 1:
        return h[..., 0, 0].real.copy()
    if n == 2:
        a = h[..., 0, 0].real
        d = h[..., 1, 1].real
        b = h[..., 0, 1]
        half_tr = 0.5 * (a + d)
        disc = np.sqrt((0.5 * (a - d)) ** 2 + (b.real**2 + b.imag**2))
        return half_tr - disc
    return np.linalg.eigvalsh(h)[..., 0]


def eigenvalues(h: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of Hermitian stacks."""
    return np.linalg.eigvalsh(h)


def det(h: np.ndarray) -> np.ndarray:
    """Determinant of Hermitian stacks (real part)."""
    n = h.shape[-1]
    if n == 1:
        return h[..., 0, 0].real.copy()
    if n == 2:
        b = h[..., 0, 1]
        return h[..., 0, 0].real * h[..., 1, 1].real - (b.real**2 + b.imag**2)
    return np.linalg.det(h).real


def inv(h: np.ndarray) -> np.ndarray:
    n = h.shape[-1]
    if n == 1:
        return 1.0 / h
    if n == 2:
        dt = det(h)[..., None, None]
        out = np.empty_like(h)
        out[..., 0, 0] = h[..., 1, 1]
        out[..., 1, 1] = h[..., 0, 0]
        out[..., 0, 1] = -h[..., 0, 1]
        out[..., 1, 0] = -h[..., 1, 0]
        return out / dt
    return np.linalg.inv(h)


def trace_product(ginv: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``sum_{a,b} ginv[b, a] h[a, b]``, i.e. ``tr(ginv @ h)``."""
    return np.einsum("...ba,...ab->...", ginv, h)


def whitening(g: np.ndarray) -> np.ndarray:
    """``W`` with ``W^H g W = I`` (columns form a unitary frame for ``g``)."""
    n = g.shape[-1]
    if n == 1:
        return 1.0 / np.sqrt(g.real)
    if n == 2:
        l11 = np.sqrt(g[..., 0, 0].real)
        l21 = np.conj(g[..., 0, 1]) / l11
        l22 = np.sqrt(g[..., 1, 1].real - (l21.real**2 + l21.imag**2))
        w = np.zeros(g.shape, dtype=complex)
        w[..., 0, 0] = 1.0 / l11
        w[..., 0, 1] = -np.conj(l21) / (l11 * l22)
        w[..., 1, 1] = 1.0 / l22
        return w
    chol = np.linalg.cholesky(g)
    eye = np.broadcast_to(np.eye(n, dtype=complex), g.shape)
    linv = np.linalg.solve(chol, eye)
    return np.conj(np.swapaxes(linv, -1, -2))


def relative_det_excess(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``det(g + h) / det(g) - 1`` without cancellation for small ``h``."""
    n = g.shape[-1]
    if n == 1:
        return (h[..., 0, 0] / g[..., 0, 0]).real
    if n == 2:
        gi = inv(g)
        return trace_product(gi, h).real + det(h) / det(g)
    w = whitening(g)
    k = hermitian_part(np.conj(np.swapaxes(w, -1, -2)) @ h @ w)
    lam = np.linalg.eigvalsh(k)
    return np.expm1(np.sum(np.log1p(lam), axis=-1))
