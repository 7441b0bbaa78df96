"""Task losses, Adam and the minibatch fine-tuning loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .chanscene import unstack_real
from .simnet import SimilarityModel, backward_many, forward_many

log = logging.getLogger(__name__)

LOSS_KINDS = ("spectral_efficiency", "positioning")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1000
    epochs: int = 100
    loss_kind: str = "spectral_efficiency"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


# -- losses ---------------------------------------------------------------

def _per_subcarrier(h: np.ndarray, S: int) -> np.ndarray:
    """(..., N*S) antenna-major -> (..., S, N)."""
    if h.shape[-1] % S:
        raise ValueError(f"channel length {h.shape[-1]} not divisible by S={S}")
    N = h.shape[-1] // S
    return np.swapaxes(h.reshape(*h.shape[:-1], N, S), -1, -2)


def _se_parts(h_true, h_hat, S):
    h_true = np.asarray(h_true)
    if not np.iscomplexobj(h_true):
        h_true = unstack_real(h_true)
    hh = unstack_real(h_hat)
    if h_true.shape != hh.shape:
        raise ValueError(f"shape mismatch: true {h_true.shape}, estimate {hh.shape}")
    ht = _per_subcarrier(h_true, S)
    he = _per_subcarrier(hh, S)
    a = np.einsum("...sn,...sn->...s", np.conj(ht), he)
    b = np.einsum("...sn,...sn->...s", np.conj(he), he).real
    return ht, he, a, b


def se_loss(h_true, h_hat, S: int) -> float | np.ndarray:
    """Negative spectral efficiency (bit/s/Hz) averaged over subcarriers.

    ``h_true`` is the downlink channel (complex, or real-stacked) and
    ``h_hat`` the real-stacked estimate used as precoder. Leading batch
    axes are allowed. A subcarrier whose estimate is zero contributes 0.
    """
    _, _, a, b = _se_parts(h_true, h_hat, S)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(b > 0, np.abs(a) ** 2 / np.where(b > 0, b, 1.0), 0.0)
    out = -np.log2(1.0 + q).mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def se_loss_grad(h_true, h_hat, S: int):
    """Loss and its gradient with respect to the real-stacked estimate."""
    ht, he, a, b = _se_parts(h_true, h_hat, S)
    pos = b > 0
    bs = np.where(pos, b, 1.0)
    q = np.where(pos, np.abs(a) ** 2 / bs, 0.0)
    loss = -np.log2(1.0 + q).mean(axis=-1)
    # d|a|^2 = 2 a h_true, d b = 2 h_hat (complex gradient convention)
    dq = (2.0 * a[..., None] * ht * bs[..., None] - 2.0 * (np.abs(a) ** 2)[..., None] * he) / (bs**2)[..., None]
    coef = np.where(pos, -1.0 / ((1.0 + q) * np.log(2.0) * S), 0.0)
    gc = coef[..., None] * dq  # (..., S, N)
    gc = np.swapaxes(gc, -1, -2).reshape(*gc.shape[:-2], -1)
    grad = np.concatenate([gc.real, gc.imag], axis=-1)
    return loss, grad


def se_upper_bound(h_true, S: int) -> float | np.ndarray:
    """Spectral efficiency obtained with the true channel as precoder."""
    h_true = np.asarray(h_true)
    if not np.iscomplexobj(h_true):
        h_true = unstack_real(h_true)
    ht = _per_subcarrier(h_true, S)
    out = np.log2(1.0 + np.einsum("...sn,...sn->...s", np.conj(ht), ht).real).mean(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pos_loss(p, p_hat) -> float | np.ndarray:
    """Euclidean localisation error; vectorised over leading axes."""
    d = np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(p_hat, dtype=float), axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def pos_loss_grad(p, p_hat):
    diff = np.asarray(p_hat, dtype=float) - np.asarray(p, dtype=float)
    d = np.linalg.norm(diff, axis=-1, keepdims=True)
    grad = np.where(d > 0, diff / np.where(d > 0, d, 1.0), 0.0)
    return d[..., 0], grad


def loss_and_grad(kind: str, targets, t_hat, n_subcarriers: int | None = None):
    if kind == "positioning":
        return pos_loss_grad(targets, t_hat)
    if kind == "spectral_efficiency":
        if n_subcarriers is None:
            raise ValueError("spectral_efficiency loss needs n_subcarriers")
        return se_loss_grad(targets, t_hat, n_subcarriers)
    raise ValueError(f"unknown loss kind {kind!r}")


# -- optimizer ------------------------------------------------------------

def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; returns new params and new state."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"length mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    t = state.step_count + 1
    m = b1 * state.first_moment + (1.0 - b1) * grads
    v = b2 * state.second_moment + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new, AdamState(m, v, t)


# -- fine-tuning ----------------------------------------------------------

def fine_tune(m: SimilarityModel, ds, cfg: TrainConfig, n_subcarriers: int | None = None):
    """Minibatch Adam fine-tuning of D and P.

    When the model was initialised from ``ds`` each sample is hidden from
    its own dictionary column. Gradients are averaged over the minibatch.
    Returns a new model and the per-epoch mean training loss.
    """
    L = len(ds)
    if L == 0:
        raise ValueError("cannot fine-tune on an empty dataset")
    if ds.input_dim != m.input_dim or ds.target_dim != m.target_dim:
        raise ValueError("dataset and model dimensions differ")
    exclusion = m.self_exclusion and L == m.L
    if exclusion and m.k > m.L - 1:
        raise ValueError(f"k={m.k} too large for self-exclusion with L={m.L}")
    if cfg.loss_kind == "spectral_efficiency" and n_subcarriers is None:
        n_subcarriers = ds.n_subcarriers

    model = m.copy()
    if cfg.epochs == 0:
        return model, []
    theta = model.get_params()
    state = AdamState.zeros(theta.size)
    rng = np.random.default_rng(cfg.shuffle_seed)
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(L)
        total = 0.0
        for bi, start in enumerate(range(0, L, cfg.batch_size)):
            rows = perm[start : start + cfg.batch_size]
            H = ds.inputs[rows]
            C, support, y, t_hat = forward_many(model, H, rows if exclusion else None)
            losses, G = loss_and_grad(cfg.loss_kind, ds.targets[rows], t_hat, n_subcarriers)
            batch_loss = float(np.mean(losses))
            if not np.isfinite(batch_loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += float(np.sum(losses))
            gradD, gradP = backward_many(model, H, C, support, y, G / len(rows))
            theta, state = adam_step(theta, model.flatten_grads(gradD, gradP), state, cfg)
            model.set_params(theta)
        history.append(total / L)
        log.debug("epoch %d mean loss %.6g", epoch, history[-1])
    return model, history
