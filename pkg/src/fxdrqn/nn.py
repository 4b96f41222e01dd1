"""Numpy recurrent Q-network: dense-ELU x2 -> LSTM -> linear, with hand-written BPTT and Adam.

Parameters live in a plain ``dict[str, np.ndarray]``:

    W1 (H1, D)  b1 (H1,)      first dense layer
    W2 (H1, H1) b2 (H1,)      second dense layer
    Wx (4L, H1) Wh (4L, L)    LSTM input/recurrent weights, gate blocks [i, f, o, g]
    bl (4L,)                  LSTM biases
    Wo (A, L)   bo (A,)       output layer

All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wx", "Wh", "bl", "Wo", "bo")
OUTPUT_NONZEROS = 15
OUTPUT_INIT_VAR = 0.001


class NumericalFault(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetSpec:
    input_dim: int = 198
    hidden: int = 256
    lstm: int = 256
    n_actions: int = 3

    def shapes(self) -> dict[str, tuple[int, ...]]:
        D, H, L, A = self.input_dim, self.hidden, self.lstm, self.n_actions
        return {
            "W1": (H, D), "b1": (H,),
            "W2": (H, H), "b2": (H,),
            "Wx": (4 * L, H), "Wh": (4 * L, L), "bl": (4 * L,),
            "Wo": (A, L), "bo": (A,),
        }

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())


def spec_of(params: dict[str, np.ndarray]) -> NetSpec:
    H, D = params["W1"].shape
    A, L = params["Wo"].shape
    return NetSpec(D, H, L, A)


def elu(x, alpha: float = 1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def _elu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def zero_state(params: dict[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    L = params["Wh"].shape[1]
    return np.zeros(L), np.zeros(L)


def init_network(seed, spec: NetSpec = NetSpec()) -> dict[str, np.ndarray]:
    """He-normal dense and LSTM input weights, identity recurrent blocks,
    forget-gate bias 1, and a sparse Gaussian output layer.

    ``seed`` may be an int or a ``np.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    D, H, L, A = spec.input_dim, spec.hidden, spec.lstm, spec.n_actions
    p = {
        "W1": rng.normal(0.0, np.sqrt(2.0 / D), (H, D)),
        "b1": np.zeros(H),
        "W2": rng.normal(0.0, np.sqrt(2.0 / H), (H, H)),
        "b2": np.zeros(H),
        "Wx": rng.normal(0.0, np.sqrt(2.0 / H), (4 * L, H)),
        "Wh": np.vstack([np.eye(L)] * 4),
        "bl": np.zeros(4 * L),
        "Wo": np.zeros((A, L)),
        "bo": np.zeros(A),
    }
    p["bl"][L:2 * L] = 1.0
    k = min(OUTPUT_NONZEROS, L)
    for row in range(A):
        cols = rng.choice(L, size=k, replace=False)
        p["Wo"][row, cols] = rng.normal(0.0, np.sqrt(OUTPUT_INIT_VAR), k)
    return p


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalFault(f"non-finite values in {name}")


def _lstm_cell(p, a2: np.ndarray, h: np.ndarray, c: np.ndarray):
    """One LSTM step; works for a single vector or a batch of rows."""
    L = p["Wh"].shape[1]
    pre = a2 @ p["Wx"].T + h @ p["Wh"].T + p["bl"]
    i = _sigmoid(pre[..., :L])
    f = _sigmoid(pre[..., L:2 * L])
    o = _sigmoid(pre[..., 2 * L:3 * L])
    g = np.tanh(pre[..., 3 * L:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return i, f, o, g, c_new, o * tc, tc


def forward_sequence(params, xs, state=None):
    """Run ``T`` inputs through the network from ``state`` (zeros by default).

    Returns ``(q, cache, (h_T, c_T))`` with ``q`` of shape (T, A). The cache
    also holds the hidden/cell state after every step (``cache["h"][t]``).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    h0, c0 = zero_state(params) if state is None else state
    z1 = xs @ params["W1"].T + params["b1"]
    a1 = elu(z1)
    z2 = a1 @ params["W2"].T + params["b2"]
    a2 = elu(z2)
    T, L = len(xs), params["Wh"].shape[1]
    gates = np.empty((T, 4, L))
    hs = np.empty((T, L))
    cs = np.empty((T, L))
    tcs = np.empty((T, L))
    h, c = h0, c0
    for t in range(T):
        i, f, o, g, c, h, tc = _lstm_cell(params, a2[t], h, c)
        gates[t] = (i, f, o, g)
        hs[t], cs[t], tcs[t] = h, c, tc
    q = hs @ params["Wo"].T + params["bo"]
    _check_finite("q", q)
    cache = {"x": xs, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "gates": gates,
             "h": hs, "c": cs, "tc": tcs, "h0": np.asarray(h0), "c0": np.asarray(c0)}
    return q, cache, (hs[-1].copy(), cs[-1].copy())


def forward_step(params, state, x):
    """Single step: returns ``(q, new_state, cache)``."""
    q, cache, new_state = forward_sequence(params, np.asarray(x)[None, :], state)
    return q[0], new_state, cache


def q_from_states(params, xs, h, c) -> np.ndarray:
    """Q-values for a batch of inputs, each advanced one step from its own (h, c) row."""
    a2 = elu(elu(xs @ params["W1"].T + params["b1"]) @ params["W2"].T + params["b2"])
    *_, h_new, _ = _lstm_cell(params, a2, h, c)
    q = h_new @ params["Wo"].T + params["bo"]
    _check_finite("q", q)
    return q


def backward_sequence(params, cache, dq) -> dict[str, np.ndarray]:
    """Gradients of a scalar whose partials w.r.t. the sequence outputs are ``dq`` (T, A)."""
    dq = np.asarray(dq, dtype=np.float64)
    hs, cs, tcs, gates = cache["h"], cache["c"], cache["tc"], cache["gates"]
    if dq.shape != (len(hs), params["Wo"].shape[0]):
        raise ValueError(f"dq shape {dq.shape} does not match outputs {(len(hs), params['Wo'].shape[0])}")
    T, L = hs.shape
    g_ = {"Wo": dq.T @ hs, "bo": dq.sum(axis=0)}
    dH = dq @ params["Wo"]
    h_prev = np.vstack([cache["h0"][None, :], hs[:-1]])
    c_prev = np.vstack([cache["c0"][None, :], cs[:-1]])
    dpre = np.empty((T, 4 * L))
    dh_next = np.zeros(L)
    dc_next = np.zeros(L)
    Wh = params["Wh"]
    for t in range(T - 1, -1, -1):
        i, f, o, g = gates[t]
        dh = dH[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tcs[t] ** 2)
        dpre[t, :L] = dc * g * i * (1.0 - i)
        dpre[t, L:2 * L] = dc * c_prev[t] * f * (1.0 - f)
        dpre[t, 2 * L:3 * L] = dh * tcs[t] * o * (1.0 - o)
        dpre[t, 3 * L:] = dc * i * (1.0 - g ** 2)
        dc_next = dc * f
        dh_next = dpre[t] @ Wh
    g_["Wx"] = dpre.T @ cache["a2"]
    g_["Wh"] = dpre.T @ h_prev
    g_["bl"] = dpre.sum(axis=0)
    dz2 = (dpre @ params["Wx"]) * _elu_grad(cache["z2"])
    g_["W2"] = dz2.T @ cache["a1"]
    g_["b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ params["W2"]) * _elu_grad(cache["z1"])
    g_["W1"] = dz1.T @ cache["x"]
    g_["b1"] = dz1.sum(axis=0)
    return {k: g_[k] for k in PARAM_NAMES}


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their global norm is at most ``max_norm``; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    def __init__(self, params, lr: float = 2.5e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adam_step(params, grads, adam: Adam, lr: float | None = None) -> None:
    if lr is not None:
        adam.lr = lr
    adam.step(params, grads)


def copy_params(params) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def numerical_gradient(f, params, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of the scalar ``f()`` w.r.t. every entry of ``params`` (perturbed in place)."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = f()
            flat[j] = orig - eps
            fm = f()
            flat[j] = orig
            gflat[j] = (fp - fm) / (2.0 * eps)
        grads[name] = g
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """max over entries of |a - n| / max(|a| + |n|, floor)."""
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        err = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    passed: bool


def grad_check(loss_and_grads, params, tolerance: float = 1e-4, eps: float = 1e-5) -> GradCheckReport:
    """Compare ``loss_and_grads(params) -> (loss, grads)`` against central differences."""
    _, analytic = loss_and_grads(params)
    numeric = numerical_gradient(lambda: loss_and_grads(params)[0], params, eps)
    per = {k: max_relative_error({k: analytic[k]}, {k: numeric[k]}) for k in params}
    worst = max(per.values()) if per else 0.0
    return GradCheckReport(worst, per, worst < tolerance)
