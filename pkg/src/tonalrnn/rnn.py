"""
Single-layer recurrent networks with a sigmoid output layer.

Five cell kinds are supported: ``vanilla``, ``lstm``, ``gru`` and the
multiplicative-integration variants ``vanilla_mi`` and ``lstm_mi``.

Every kind keeps its gate weights stacked row-wise:

=========  ==================  ===========================================
kind       gate order          pre-activation
=========  ==================  ===========================================
vanilla    h                   W x + U h + b
lstm       i, f, g, o          W x + U h + b
gru        r, u, n             r, u: W x + U h + b;  n: W x + U (r*h) + b
*_mi       as additive kind    alpha*(W x)*(U h) + beta1*(W x) + beta2*(U h) + b
=========  ==================  ===========================================

The output layer is ``y = sigmoid(W_out h + b_out)`` for every kind.
Arrays are batched: inputs are ``(batch, time, N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "CELL_KINDS",
    "CellParams",
    "RnnState",
    "Cache",
    "init_params",
    "param_count",
    "mi_aggregate",
    "step",
    "forward",
    "forward_batch",
    "backward_batch",
    "sigmoid",
]

CELL_KINDS = ("vanilla", "lstm", "gru", "vanilla_mi", "lstm_mi")
_GATES = {"vanilla": 1, "lstm": 4, "gru": 3, "vanilla_mi": 1, "lstm_mi": 4}


def _check_kind(kind: str):
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}; expected one of {CELL_KINDS}")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(eq=False)
class CellParams:
    """Weights of one network; ``arrays`` maps parameter names to arrays."""

    kind: str
    n_in: int
    n_hidden: int
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        _check_kind(self.kind)
        expected = _shapes(self.kind, self.n_in, self.n_hidden)
        if set(expected) != set(self.arrays):
            raise ValueError(f"{self.kind} expects parameters {sorted(expected)}, "
                             f"got {sorted(self.arrays)}")
        for name, shape in expected.items():
            a = self.arrays[name]
            if a.shape != shape:
                raise ValueError(f"{name}: shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name}: non-finite values")

    def __getitem__(self, name) -> np.ndarray:
        return self.arrays[name]

    @property
    def is_mi(self) -> bool:
        return self.kind.endswith("_mi")

    @property
    def gates(self) -> int:
        return _GATES[self.kind]

    def copy(self) -> "CellParams":
        return CellParams(self.kind, self.n_in, self.n_hidden,
                          {k: v.copy() for k, v in self.arrays.items()})

    def names(self) -> list[str]:
        return list(_shapes(self.kind, self.n_in, self.n_hidden))


@dataclass(eq=False)
class RnnState:
    hidden: np.ndarray
    cell: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, params: CellParams, batch: Optional[int] = None) -> "RnnState":
        shape = (params.n_hidden,) if batch is None else (batch, params.n_hidden)
        cell = np.zeros(shape) if params.kind.startswith("lstm") else None
        return cls(np.zeros(shape), cell)


def _shapes(kind: str, n: int, h: int) -> dict[str, tuple]:
    g = _GATES[kind]
    shapes = {"W_in": (g * h, n), "W_rec": (g * h, h), "b": (g * h,)}
    if kind.endswith("_mi"):
        shapes.update(alpha=(g * h,), beta1=(g * h,), beta2=(g * h,))
    shapes.update(W_out=(n, h), b_out=(n,))
    return shapes


def param_count(kind: str, n_in: int, n_hidden: int) -> int:
    _check_kind(kind)
    return sum(int(np.prod(s)) for s in _shapes(kind, n_in, n_hidden).values())


def _glorot(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(kind: str, n_in: int = 334, n_hidden: int = 75, seed: int = 0) -> CellParams:
    """Glorot-uniform input/output weights, orthogonal recurrent blocks.

    Biases start at zero except the LSTM forget gate (1). MI gating vectors
    start at alpha=1, beta1=beta2=0.5.
    """
    _check_kind(kind)
    if n_in < 1 or n_hidden < 1:
        raise ValueError("n_in and n_hidden must be >= 1")
    rng = np.random.default_rng(seed)
    g = _GATES[kind]
    h = n_hidden
    arrays = {
        "W_in": np.concatenate([_glorot(rng, h, n_in) for _ in range(g)]),
        "W_rec": np.concatenate([_orthogonal(rng, h) for _ in range(g)]),
        "b": np.zeros(g * h),
    }
    if kind.startswith("lstm"):
        arrays["b"][h:2 * h] = 1.0
    if kind.endswith("_mi"):
        arrays["alpha"] = np.ones(g * h)
        arrays["beta1"] = np.full(g * h, 0.5)
        arrays["beta2"] = np.full(g * h, 0.5)
    arrays["W_out"] = _glorot(rng, n_in, h)
    arrays["b_out"] = np.zeros(n_in)
    return CellParams(kind, n_in, n_hidden, arrays)


def mi_aggregate(a, b, alpha, beta1, beta2, bias):
    """``alpha*a*b + beta1*a + beta2*b + bias``, elementwise."""
    arrs = [np.asarray(v, dtype=np.float64) for v in (a, b, alpha, beta1, beta2, bias)]
    if len({v.shape[-1] for v in arrs}) != 1:
        raise ValueError("mi_aggregate: length mismatch")
    a, b, alpha, beta1, beta2, bias = arrs
    return alpha * a * b + beta1 * a + beta2 * b + bias


# -- cell arithmetic -----------------------------------------------------
#
# ``a`` is the input projection W x, ``r`` the recurrent projection U h.
# For additive kinds the recurrent bias ``b`` is already folded into ``a``.

def _combine(p: CellParams, a, r):
    if p.is_mi:
        return mi_aggregate(a, r, p["alpha"], p["beta1"], p["beta2"], p["b"])
    return a + r


def _combine_back(p: CellParams, a, r, dz, grads):
    if not p.is_mi:
        return dz, dz
    grads["alpha"] += np.sum(dz * a * r, axis=0)
    grads["beta1"] += np.sum(dz * a, axis=0)
    grads["beta2"] += np.sum(dz * r, axis=0)
    grads["b"] += np.sum(dz, axis=0)
    da = dz * (p["alpha"] * r + p["beta1"])
    dr = dz * (p["alpha"] * a + p["beta2"])
    return da, dr


def _input_projection(p: CellParams, x):
    a = x @ p["W_in"].T
    return a if p.is_mi else a + p["b"]


def _cell_step(p: CellParams, a_t, h, c):
    """One recurrent update; returns ``(h', c', step cache)``."""
    H = p.n_hidden
    U = p["W_rec"]
    if p.kind in ("vanilla", "vanilla_mi"):
        r = h @ U.T
        h_new = np.tanh(_combine(p, a_t, r))
        return h_new, None, (h, r, h_new)
    if p.kind in ("lstm", "lstm_mi"):
        r = h @ U.T
        z = _combine(p, a_t, r)
        i = sigmoid(z[..., :H])
        f = sigmoid(z[..., H:2 * H])
        g = np.tanh(z[..., 2 * H:3 * H])
        o = sigmoid(z[..., 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, c_new, (h, c, r, i, f, g, o, tc)
    # gru
    s = a_t[..., :2 * H] + h @ U[:2 * H].T
    rg = sigmoid(s[..., :H])
    u = sigmoid(s[..., H:])
    q = rg * h
    n = np.tanh(a_t[..., 2 * H:] + q @ U[2 * H:].T)
    h_new = (1.0 - u) * h + u * n
    return h_new, None, (h, rg, u, q, n)


def _cell_back(p: CellParams, a_t, cache, dh, dc, grads):
    """Backpropagate one step; returns ``(da_t, dh_prev, dc_prev)``."""
    H = p.n_hidden
    U = p["W_rec"]
    if p.kind in ("vanilla", "vanilla_mi"):
        h_prev, r, h_new = cache
        dz = dh * (1.0 - h_new ** 2)
        da, dr = _combine_back(p, a_t, r, dz, grads)
        grads["W_rec"] += dr.T @ h_prev
        return da, dr @ U, None
    if p.kind in ("lstm", "lstm_mi"):
        h_prev, c_prev, r, i, f, g, o, tc = cache
        dc = dc + dh * o * (1.0 - tc ** 2)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g ** 2),
            dh * tc * o * (1.0 - o),
        ], axis=-1)
        da, dr = _combine_back(p, a_t, r, dz, grads)
        grads["W_rec"] += dr.T @ h_prev
        return da, dr @ U, dc * f
    h_prev, rg, u, q, n = cache
    dn = dh * u * (1.0 - n ** 2)
    du = dh * (n - h_prev) * u * (1.0 - u)
    dh_prev = dh * (1.0 - u)
    grads["W_rec"][2 * H:] += dn.T @ q
    dq = dn @ U[2 * H:]
    dr = dq * h_prev * rg * (1.0 - rg)
    dh_prev += dq * rg
    ds = np.concatenate([dr, du], axis=-1)
    grads["W_rec"][:2 * H] += ds.T @ h_prev
    dh_prev += ds @ U[:2 * H]
    return np.concatenate([ds, dn], axis=-1), dh_prev, None


# -- public evaluation -----------------------------------------------------

def step(params: CellParams, state: RnnState, x_t) -> tuple[RnnState, np.ndarray]:
    """Advance one time step; returns the new state and the prediction for ``x_{t+1}``."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != params.n_in:
        raise ValueError(f"input has {x_t.shape[-1]} bins, model expects {params.n_in}")
    a_t = _input_projection(params, x_t)
    h, c, _ = _cell_step(params, a_t, state.hidden, state.cell)
    y = sigmoid(h @ params["W_out"].T + params["b_out"])
    return RnnState(h, c), y


@dataclass(eq=False)
class Cache:
    x: np.ndarray
    a: np.ndarray
    hs: np.ndarray
    y: np.ndarray
    steps: list = field(default_factory=list)


def forward_batch(params: CellParams, x, state: Optional[RnnState] = None,
                  keep_cache: bool = True):
    """Run a batch of sequences ``x`` of shape ``(B, T, N)``.

    Returns ``(y, final_state, cache)``; ``y`` has the shape of ``x`` and
    ``y[:, t]`` is the prediction of ``x[:, t + 1]``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[-1] != params.n_in:
        raise ValueError(f"expected (batch, time, {params.n_in}) input, got {x.shape}")
    B, T, _ = x.shape
    if state is None:
        state = RnnState.zeros(params, B)
    a = _input_projection(params, x)
    h, c = state.hidden, state.cell
    hs = np.empty((B, T, params.n_hidden))
    steps = []
    for t in range(T):
        h, c, sc = _cell_step(params, a[:, t], h, c)
        hs[:, t] = h
        if keep_cache:
            steps.append(sc)
    y = sigmoid(hs @ params["W_out"].T + params["b_out"])
    cache = Cache(x, a, hs, y, steps) if keep_cache else None
    return y, RnnState(h, c), cache


def backward_batch(params: CellParams, cache: Cache, d_logits) -> dict[str, np.ndarray]:
    """Gradients of a loss given its derivative w.r.t. the output logits.

    ``d_logits`` has shape ``(B, T, N)``. Gradients do not flow into the
    initial state, so successive calls on consecutive chunks implement
    truncated backpropagation through time.
    """
    grads = {name: np.zeros_like(v) for name, v in params.arrays.items()}
    B, T, N = d_logits.shape
    flat_d = d_logits.reshape(B * T, N)
    grads["W_out"] = flat_d.T @ cache.hs.reshape(B * T, -1)
    grads["b_out"] = flat_d.sum(axis=0)
    dhs = d_logits @ params["W_out"]
    da = np.empty_like(cache.a)
    dh = np.zeros((B, params.n_hidden))
    dc = np.zeros((B, params.n_hidden)) if params.kind.startswith("lstm") else None
    for t in range(T - 1, -1, -1):
        da[:, t], dh, dc = _cell_back(params, cache.a[:, t], cache.steps[t],
                                      dh + dhs[:, t], dc, grads)
    flat_da = da.reshape(B * T, -1)
    grads["W_in"] = flat_da.T @ cache.x.reshape(B * T, N)
    if not params.is_mi:
        grads["b"] = flat_da.sum(axis=0)
    return grads


def forward(params: CellParams, frames) -> tuple[np.ndarray, RnnState]:
    """Predictions for a single ``(T, N)`` sequence starting from the zero state."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or len(frames) == 0:
        raise ValueError("forward expects a nonempty (T, N) sequence")
    y, state, _ = forward_batch(params, frames[None], keep_cache=False)
    cell = state.cell[0] if state.cell is not None else None
    return y[0], RnnState(state.hidden[0], cell)
