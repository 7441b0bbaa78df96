"""Positioning baselines and the shared input reduction.

Positioning models never see the full antenna x subcarrier channel: each
channel matrix is replaced by its dominant left singular vector. The MLP
and ELM baselines consume that vector real-stacked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .chanscene import LabeledDataset, channel_matrix, stack_real
from .numkernel import dominant_left_sv
from .train import AdamState, TrainConfig, adam_step, pos_loss_grad


def reduce_input(ch, stacked: bool = False, tol: float = 1e-10, max_iter: int = 10_000):
    """Dominant left singular vector of an (antennas x subcarriers) channel.

    With ``stacked=True`` the result is the real vector ``[re, im]`` of
    length ``2 * N``.
    """
    u, _ = dominant_left_sv(ch, tol=tol, max_iter=max_iter)
    return stack_real(u) if stacked else u


def reduce_dataset(ds: LabeledDataset, **kw) -> LabeledDataset:
    n_in = len(ds.antenna_subset) if ds.antenna_subset is not None else ds.n_antennas
    red = np.array([reduce_input(channel_matrix(h, n_in), **kw) for h in ds.inputs])
    red = red.reshape(len(ds), n_in)
    return ds.with_inputs(red, n_subcarriers=1)


def _features(x) -> np.ndarray:
    x = np.asarray(x)
    if np.iscomplexobj(x):
        x = stack_real(x)
    return np.asarray(x, dtype=np.float64)


def _relu(z):
    return np.maximum(z, 0.0)


# -- multilayer perceptron -----------------------------------------------

class MlpModel:
    """input -> hidden -> hidden -> 3 with ReLU after each hidden layer.

    Predictions are ``target_offset + target_scale * net(x)``; the affine
    output map is fixed at training time from the target statistics.
    """

    def __init__(self, weights, biases, target_offset=None, target_scale=1.0):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != 3 or len(self.biases) != 3:
            raise ValueError("MLP needs exactly three layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bias shape {b.shape} vs weight {w.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input size does not match layer {i - 1} output")
        out = self.weights[-1].shape[0]
        self.target_offset = np.zeros(out) if target_offset is None else np.asarray(target_offset, dtype=np.float64)
        self.target_scale = float(target_scale)

    @classmethod
    def init(cls, input_dim: int, hidden: int = 112, out_dim: int = 3, seed: int = 0, zero_last: bool = False):
        rng = np.random.default_rng([seed, 0x31F])
        dims = [input_dim, hidden, hidden, out_dim]
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            bs.append(rng.uniform(-bound, bound, size=fan_out))
        if zero_last:
            ws[-1][:] = 0.0
            bs[-1][:] = 0.0
        return cls(ws, bs)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    def get_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.weights, self.biases) for p in pair])

    def set_params(self, theta) -> None:
        i = 0
        for layer in range(3):
            for arr in (self.weights[layer], self.biases[layer]):
                n = arr.size
                arr[...] = np.reshape(theta[i : i + n], arr.shape)
                i += n

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.target_offset.copy(), self.target_scale)

    def _forward(self, X):
        acts = [X]
        z = X
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = z @ w.T + b
            if i < 2:
                z = _relu(z)
            acts.append(z)
        return acts

    def predict(self, X) -> np.ndarray:
        X = _features(X)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"input has {X.shape[1]} features, model expects {self.input_dim}")
        out = self.target_offset + self.target_scale * self._forward(X)[-1]
        return out[0] if single else out

    def gradients(self, X, dL_dout) -> np.ndarray:
        """Flattened parameter gradient given dL/d(prediction) per sample (summed)."""
        acts = self._forward(X)
        delta = np.asarray(dL_dout) * self.target_scale
        grads = [None] * 3
        for i in (2, 1, 0):
            gw = delta.T @ acts[i]
            gb = delta.sum(axis=0)
            grads[i] = (gw, gb)
            if i:
                delta = (delta @ self.weights[i]) * (acts[i] > 0)
        return np.concatenate([g.ravel() for pair in grads for g in pair])


def mlp_train(ds: LabeledDataset, cfg: TrainConfig, hidden: int = 112, seed: int = 0,
              standardize: bool = True):
    """Fit the MLP to positions with the mean-distance loss and Adam.

    Returns the model and the per-epoch mean training loss.
    """
    if ds.target_dim != 3:
        raise ValueError("MLP baseline expects 3-D position targets")
    X = _features(ds.inputs)
    T = ds.targets
    model = MlpModel.init(X.shape[1], hidden=hidden, out_dim=3, seed=seed)
    if standardize and len(ds):
        model.target_offset = T.mean(axis=0)
        model.target_scale = float(np.sqrt(((T - model.target_offset) ** 2).sum(axis=1).mean())) or 1.0
    if cfg.epochs == 0 or len(ds) == 0:
        return model, []
    theta = model.get_params()
    state = AdamState.zeros(theta.size)
    rng = np.random.default_rng(cfg.shuffle_seed)
    L = len(ds)
    history = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(L)
        total = 0.0
        for bi, start in enumerate(range(0, L, cfg.batch_size)):
            rows = perm[start : start + cfg.batch_size]
            pred = model.predict(X[rows])
            losses, g = pos_loss_grad(T[rows], pred)
            if not np.all(np.isfinite(losses)):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
            total += float(losses.sum())
            grad = model.gradients(X[rows], g / len(rows))
            theta, state = adam_step(theta, grad, state, cfg)
            model.set_params(theta)
        history.append(total / L)
    return model, history


# -- extreme learning machine ---------------------------------------------

@dataclass
class ElmModel:
    hidden_weights: np.ndarray
    output_weights: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        self.hidden_weights = np.array(self.hidden_weights, dtype=np.float64)
        self.hidden_weights.flags.writeable = False
        # C order so predictions do not depend on how the weights were produced
        self.output_weights = np.ascontiguousarray(self.output_weights, dtype=np.float64)

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def hidden(self) -> int:
        return self.hidden_weights.shape[0]

    def features(self, X) -> np.ndarray:
        return _relu(X @ self.hidden_weights.T)

    def predict(self, X) -> np.ndarray:
        X = _features(X)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise ValueError(f"input has {X.shape[1]} features, model expects {self.input_dim}")
        out = self.features(X) @ self.output_weights
        return out[0] if single else out


def elm_hidden_weights(input_dim: int, hidden: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0xE1A])
    return rng.standard_normal((hidden, input_dim))


def elm_train(ds: LabeledDataset, hidden: int = 2000, ridge: float = 1e-6, seed: int = 0) -> ElmModel:
    """Random ReLU layer plus closed-form ridge output layer.

    The penalty actually applied is ``ridge * trace(Z^T Z)`` so the default
    is insensitive to feature scale. The smaller of the primal and
    dual normal equations is solved; both give the same minimiser.
    """
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    X = _features(ds.inputs)
    W = elm_hidden_weights(X.shape[1], hidden, seed)
    model = ElmModel(W, np.zeros((hidden, ds.target_dim)))
    if len(ds) == 0:
        return model
    Z = model.features(X)  # (L, H)
    lam = ridge * float(np.einsum("ij,ij->", Z, Z))
    L = Z.shape[0]
    if lam == 0.0 and (hidden > L or np.linalg.matrix_rank(Z) < hidden):
        raise np.linalg.LinAlgError("singular normal equations; use ridge > 0")
    if hidden <= L:
        A = Z.T @ Z + lam * np.eye(hidden)
        B = _spd_solve(A, Z.T @ ds.targets)
    else:
        A = Z @ Z.T + lam * np.eye(L)
        B = Z.T @ _spd_solve(A, ds.targets)
    model.output_weights = np.ascontiguousarray(B)
    model.ridge = lam
    return model


def _spd_solve(A, rhs):
    try:
        factor = cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular normal equations; use ridge > 0") from exc
    return cho_solve(factor, rhs)


def baseline_predict(model, x) -> np.ndarray:
    """Evaluate an MLP or ELM baseline on one input or a batch."""
    if not isinstance(model, (MlpModel, ElmModel)):
        raise TypeError(f"not a baseline model: {type(model).__name__}")
    return model.predict(x)
