"""Small complex linear-algebra helpers.

Vectors and matrices are plain numpy arrays of dtype complex128; nothing
here keeps state. Inner products are always reduced over a contiguous 1-D
buffer so that a column-by-column loop and the vectorised adjoint product
sum in the same order and give identical bits.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """Power iteration ran out of iterations; ``last`` holds the final iterate."""

    def __init__(self, message: str, last: np.ndarray, sigma: float):
        super().__init__(message)
        self.last = last
        self.sigma = sigma


def as_cvec(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.complex128)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_cmat(x, name: str = "matrix") -> np.ndarray:
    m = np.asarray(x, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _conj_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise ``conj(a) * b`` with the imaginary part exactly 0 when a == b."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.complex128)
    out.real = a.real * b.real + a.imag * b.imag
    out.imag = a.real * b.imag - a.imag * b.real
    return out


def cdot(a, b) -> complex:
    """Hermitian inner product ``sum_j conj(a_j) * b_j``."""
    a = as_cvec(a, "a")
    b = as_cvec(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    return complex(_conj_mul(a, b).sum())


def matvec_adjoint(M, x) -> np.ndarray:
    """Return ``M^H x``; entry j equals ``cdot(M[:, j], x)`` bit for bit."""
    M = as_cmat(M, "M")
    x = as_cvec(x, "x")
    if M.shape[0] != x.size:
        raise ValueError(f"dimension mismatch: M has {M.shape[0]} rows, x has {x.size} entries")
    # one contiguous row per column of M, reduced along the last axis
    rows = _conj_mul(np.ascontiguousarray(M.T), x)
    return rows.sum(axis=1)


def phase_normalize(u: np.ndarray) -> np.ndarray:
    """Rotate ``u`` so its largest-modulus entry is real and nonnegative.

    Ties on the modulus go to the lowest index (``argmax`` semantics).
    """
    mags = np.abs(u)
    j = int(np.argmax(mags))
    if mags[j] == 0.0:
        return u.copy()
    out = u * (np.conj(u[j]) / mags[j])
    # remove rounding residue on the pivot so it is exactly real
    out[j] = mags[j]
    return out


def dominant_left_sv(H, tol: float = 1e-10, max_iter: int = 10_000):
    """Dominant left singular vector and singular value of ``H``.

    Power iteration on the Gram matrix ``H H^H`` started from the
    normalised all-ones vector. If that start lies in the null space of the
    Gram matrix the iteration restarts once from the first basis vector.

    Returns
    -------
    u : ndarray
        Unit-norm, phase-normalised left singular vector.
    sigma : float
        ``||H^H u||_2``.

    Raises
    ------
    ValueError
        If ``H`` is the zero matrix or the tolerances are invalid.
    ConvergenceError
        If the eigen-residual does not drop below ``tol`` within
        ``max_iter`` iterations.
    """
    H = as_cmat(H, "H")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not np.any(H):
        raise ValueError("zero matrix")

    n = H.shape[0]
    G = H @ np.conj(H.T)
    starts = [np.full(n, 1.0 / np.sqrt(n), dtype=np.complex128)]
    e0 = np.zeros(n, dtype=np.complex128)
    e0[0] = 1.0
    starts.append(e0)

    u = starts[0]
    lam = 0.0
    for start in starts:
        u = start
        w = G @ u
        if np.linalg.norm(w) == 0.0:
            # Rayleigh quotient stuck at zero, try the next start vector
            continue
        for _ in range(max_iter):
            lam = float(np.real(np.vdot(u, w)))
            resid = np.linalg.norm(w - lam * u)
            if resid <= tol * abs(lam):
                u = phase_normalize(u)
                sigma = float(np.linalg.norm(np.conj(H.T) @ u))
                return u, sigma
            u = w / np.linalg.norm(w)
            w = G @ u
        u = phase_normalize(u)
        sigma = float(np.linalg.norm(np.conj(H.T) @ u))
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(residual {resid:.3e}, tol {tol:.1e})",
            last=u,
            sigma=sigma,
        )
    raise ConvergenceError(
        "power iteration stagnated at zero from every start vector",
        last=phase_normalize(u),
        sigma=0.0,
    )


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a real vector."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64, ndmin=1)
    grad = np.empty_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        grad[j] = (f(xp) - f(xm)) / (2.0 * h)
    return grad
