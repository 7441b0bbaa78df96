"""Similarity-based prediction network.

Forward pass for an input channel ``h``::

    c = D^H h               correlation with every dictionary column
    s = HT_k(c)             keep the k largest-modulus correlations
    y = |s| / ||s||_1       nonnegative weights summing to one
    t_hat = P y

With ``D`` holding the training channels and ``P`` the training targets this
is a top-k Nadaraya-Watson estimate; both matrices are then trainable.
Gradients with respect to the complex dictionary are returned as complex
arrays ``dL/dRe + 1j * dL/dIm``, which is the real/imaginary stacking in
compact form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkernel import as_cvec


class SimilarityModel:
    """Trainable dictionary ``D`` (input_dim x L, complex) and prediction
    matrix ``P`` (target_dim x L, real) with sparsity level ``k``.

    ``self_exclusion`` marks a model whose column ``i`` was built from sample
    ``i`` of its training set; fine-tuning on that set then hides column
    ``i`` from sample ``i``.
    """

    def __init__(self, D, P, k: int, self_exclusion: bool = False):
        D = np.array(D, dtype=np.complex128, ndmin=2)
        P = np.array(P, dtype=np.float64, ndmin=2)
        if D.shape[1] != P.shape[1]:
            raise ValueError(f"D has {D.shape[1]} columns but P has {P.shape[1]}")
        L = D.shape[1]
        if not 1 <= k <= L:
            raise ValueError(f"k={k} must lie in [1, {L}]")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(P))):
            raise ValueError("model weights must be finite")
        zero_cols = np.flatnonzero(~np.any(D, axis=0))
        if zero_cols.size:
            raise ValueError(f"dictionary has all-zero columns {zero_cols[:5].tolist()}")
        self.D = D
        self.P = P
        self.k = int(k)
        self.self_exclusion = bool(self_exclusion)

    @property
    def L(self) -> int:
        return self.D.shape[1]

    @property
    def input_dim(self) -> int:
        return self.D.shape[0]

    @property
    def target_dim(self) -> int:
        return self.P.shape[0]

    @property
    def n_params(self) -> int:
        return 2 * self.D.size + self.P.size

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.D.real.ravel(), self.D.imag.ravel(), self.P.ravel()])

    def set_params(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        nd = self.D.size
        self.D = (theta[:nd] + 1j * theta[nd : 2 * nd]).reshape(self.D.shape)
        self.P = theta[2 * nd :].reshape(self.P.shape).copy()

    @staticmethod
    def flatten_grads(gradD: np.ndarray, gradP: np.ndarray) -> np.ndarray:
        return np.concatenate([gradD.real.ravel(), gradD.imag.ravel(), gradP.ravel()])

    def copy(self) -> "SimilarityModel":
        return SimilarityModel(self.D.copy(), self.P.copy(), self.k, self.self_exclusion)


@dataclass
class ForwardTrace:
    c: np.ndarray
    support: np.ndarray
    s: np.ndarray
    y: np.ndarray
    t_hat: np.ndarray
    exclude: int | None = None


def init_from_dataset(ds, k: int) -> SimilarityModel:
    """Nadaraya-Watson initialisation: columns of D and P are the samples."""
    if len(ds) == 0:
        raise ValueError("cannot initialise from an empty dataset")
    if not 1 <= k <= len(ds):
        raise ValueError(f"k={k} must lie in [1, L={len(ds)}]")
    return SimilarityModel(ds.inputs.T.copy(), ds.targets.T.copy(), k, self_exclusion=True)


def _topk_mask(A: np.ndarray, k: int) -> np.ndarray:
    """Row-wise mask of the k largest entries of ``A``, ties to lowest index."""
    L = A.shape[1]
    kth = np.partition(A, L - k, axis=1)[:, L - k][:, None]
    mask = A >= kth
    if np.all(mask.sum(axis=1) == k):
        return mask
    # ties at the threshold: keep the lowest-index ones
    strict = A > kth
    need = k - strict.sum(axis=1, keepdims=True)
    eq = A == kth
    return strict | (eq & (np.cumsum(eq, axis=1) <= need))


def hard_threshold(c, k: int):
    """Keep the k entries of ``c`` with the largest modulus.

    Returns ``(s, support)`` with ``support`` in ascending index order. Equal
    moduli are resolved in favour of the lower index.
    """
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 1:
        raise ValueError("c must be 1-D")
    if not 1 <= k <= c.size:
        raise ValueError(f"k={k} must lie in [1, {c.size}]")
    mask = _topk_mask(np.abs(c)[None, :], k)[0]
    s = np.where(mask, c, 0)
    return s, np.flatnonzero(mask)


def kernel(h, h_i, selected: bool) -> float:
    """Top-k similarity kernel ``|h_i^H h|`` for selected columns, else 0."""
    h = as_cvec(h, "h")
    h_i = as_cvec(h_i, "h_i")
    if h.shape != h_i.shape:
        raise ValueError(f"dimension mismatch: {h.size} vs {h_i.size}")
    if not selected:
        return 0.0
    return float(abs(np.vdot(h_i, h)))


def _select(m: SimilarityModel, C: np.ndarray, exclude) -> np.ndarray:
    """Supports (B, k) for correlation rows C (B, L); excluded columns never win."""
    A = np.abs(C)
    if exclude is not None:
        A[np.arange(A.shape[0]), exclude] = -1.0
    mask = _topk_mask(A, m.k)
    return np.nonzero(mask)[1].reshape(A.shape[0], m.k)


def _weights(a: np.ndarray) -> np.ndarray:
    tot = a.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = np.where(tot > 0, a / np.where(tot > 0, tot, 1.0), 0.0)
    return y


def forward(m: SimilarityModel, h, exclude: int | None = None) -> ForwardTrace:
    h = as_cvec(h, "h")
    if h.size != m.input_dim:
        raise ValueError(f"input has length {h.size}, model expects {m.input_dim}")
    if exclude is not None:
        if not 0 <= exclude < m.L:
            raise ValueError(f"exclude={exclude} outside [0, {m.L})")
        if m.k > m.L - 1:
            raise ValueError("exclusion needs k <= L - 1")
    c = np.conj(m.D.T @ np.conj(h))
    support = _select(m, c[None, :], None if exclude is None else [exclude])[0]
    s = np.zeros_like(c)
    s[support] = c[support]
    y = np.zeros(m.L)
    y[support] = _weights(np.abs(c[support]))
    t_hat = m.P[:, support] @ y[support]
    return ForwardTrace(c=c, support=support, s=s, y=y, t_hat=t_hat, exclude=exclude)


def backward(m: SimilarityModel, trace: ForwardTrace, h, dL_dthat):
    """Gradients of a loss with respect to D (complex form) and P.

    The support found by the forward pass is held fixed. Columns whose
    correlation is exactly zero, and the all-zero ``s`` case, get no
    gradient.
    """
    h = as_cvec(h, "h")
    g = np.asarray(dL_dthat, dtype=np.float64)
    if g.shape != (m.target_dim,):
        raise ValueError(f"dL_dthat has shape {g.shape}, expected ({m.target_dim},)")
    sup = trace.support
    gradP = np.outer(g, trace.y)
    gradD = np.zeros_like(m.D)
    cs = trace.c[sup]
    a = np.abs(cs)
    tot = a.sum()
    if tot == 0:
        return gradD, gradP
    ys = trace.y[sup]
    gy = m.P[:, sup].T @ g
    ga = (gy - gy @ ys) / tot
    with np.errstate(invalid="ignore", divide="ignore"):
        gc = np.where(a > 0, ga * cs / np.where(a > 0, a, 1.0), 0.0)
    gradD[:, sup] = np.outer(h, np.conj(gc))
    return gradD, gradP


def predict_batch(m: SimilarityModel, channels) -> list[np.ndarray]:
    out = []
    for i, h in enumerate(channels):
        try:
            out.append(forward(m, h).t_hat)
        except ValueError as exc:
            raise ValueError(f"sample {i}: {exc}") from exc
    return out


def forward_many(m: SimilarityModel, H: np.ndarray, exclude=None):
    """Batched forward for training: returns (C, support, y, t_hat).

    ``H`` is (B, input_dim); ``support`` and ``y`` are (B, k) restricted to
    the selected columns.
    """
    C = np.conj(np.conj(H) @ m.D)
    support = _select(m, C, exclude)
    a = np.abs(np.take_along_axis(C, support, axis=1))
    y = _weights(a)
    t_hat = np.einsum("bkt,bk->bt", m.P.T[support], y)
    return C, support, y, t_hat


def backward_many(m: SimilarityModel, H, C, support, y, G):
    """Summed gradients over a batch; ``G`` is (B, target_dim) per-sample dL/dt_hat.

    Scatter-adds run in ascending sample order so results are reproducible.
    """
    B, k = support.shape
    gradP = np.zeros_like(m.P)
    gradD = np.zeros_like(m.D)
    cs = np.take_along_axis(C, support, axis=1)
    a = np.abs(cs)
    tot = a.sum(axis=1, keepdims=True)
    Psup = m.P.T[support]  # (B, k, T)
    gy = np.einsum("bkt,bt->bk", Psup, G)
    with np.errstate(invalid="ignore", divide="ignore"):
        ga = np.where(tot > 0, (gy - (gy * y).sum(axis=1, keepdims=True)) / np.where(tot > 0, tot, 1.0), 0.0)
        gc = np.where(a > 0, ga * cs / np.where(a > 0, a, 1.0), 0.0)
    flat = support.ravel()
    np.add.at(gradP.T, flat, (y[:, :, None] * G[:, None, :]).reshape(B * k, -1))
    np.add.at(gradD.T, flat, (np.conj(gc)[:, :, None] * H[:, None, :]).reshape(B * k, -1))
    return gradD, gradP
