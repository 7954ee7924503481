"""Reverse-mode differentiation of weighted robustness.

:func:`forward_record` runs the same evaluator as
:func:`wstl.semantics.robustness_weighted` while recording a tape;
:func:`backward` walks the tape in reverse and returns the gradient with
respect to every scalar of :func:`wstl.formula.params`, in that order.
Gradients with respect to the signal are not exposed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .formula import Formula, Pred, Weighted, as_dtype, params
from .semantics import _weighted_batch, as_signal

PRED, CONST, NEG, AGG = "pred", "const", "neg", "aggregate"

_EXP_CAP = 700.0


@dataclass
class TapeNode:
    kind: str
    inputs: tuple[int, ...]
    value: np.ndarray
    local: dict = field(default_factory=dict)


class Tape:
    """Topologically ordered record of one (batched) forward pass."""

    def __init__(self, phi: Formula, sigma: float):
        self.view = params(phi)
        self.sigma = sigma
        self.nodes: list[TapeNode] = []
        self.output = -1

    def __len__(self):
        return len(self.nodes)

    def count(self, kind: str) -> int:
        return sum(n.kind == kind for n in self.nodes)

    def _push(self, node: TapeNode) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def record_pred(self, pred: Pred, x, val) -> int:
        return self._push(TapeNode(PRED, (), val, {"x": x, "offset": self.view.offsets[id(pred)], "dim": pred.dim}))

    def record_const(self, val) -> int:
        return self._push(TapeNode(CONST, (), val))

    def record_neg(self, child: int, val) -> int:
        return self._push(TapeNode(NEG, (child,), val))

    def record_aggregate(self, op: Weighted, inputs, dual, R, y, local, val) -> int:
        support, ws, Rs, s, wbar, den = local
        return self._push(TapeNode(AGG, tuple(inputs), val, {
            "offset": self.view.offsets[id(op)],
            "m": len(op.weights),
            "weights": op.weights,
            "mask": op.gate_sample,
            "gated": op.gates is not None,
            "dual": dual,
            "R": R, "y": y, "support": support, "ws": ws, "Rs": Rs,
            "s": s, "wbar": wbar, "den": den,
        }))


def forward_record(s, phi: Formula, k: int = 0, sigma: float = 1.0):
    """Evaluate weighted robustness and record a tape for :func:`backward`.

    Returns ``(value, tape)``; ``value`` is a float for a single signal and
    an array for a batch ``(n, l, T)``.
    """
    S, single = as_signal(s)
    tape = Tape(phi, sigma)
    val, idx = _weighted_batch(S, phi, k, sigma, tape)
    tape.output = idx
    return (float(val[0]) if single else val), tape


def _aggregate_backward(loc, g_out, sigma):
    """Adjoints of one aggregate node.

    With ``p_i = wbar_i s_i / den`` the output is ``y = sum p_i r_i`` and
    ``dy/dr_i = p_i (1 - (r_i - y)/sigma)``;
    ``dy/dw_i = s_i (r_i - y) / (den * W)`` for the effective raw weights.
    """
    dual = loc["dual"]
    g_y = -g_out if dual else g_out
    y, Rs, s, wbar, den, support = loc["y"], loc["Rs"], loc["s"], loc["wbar"], loc["den"], loc["support"]
    ok = np.isfinite(y)
    if not ok.all():
        g_y = np.where(ok, g_y, 0.0)
        y = np.where(ok, y, 0.0)
    fin = np.isfinite(Rs)
    Rz = np.where(fin, Rs, 0.0) if not fin.all() else Rs
    dev = Rz - y[:, None]
    p = wbar * s / den[:, None]
    dR_s = g_y[:, None] * p * (1.0 - dev / sigma)
    if not fin.all():
        dR_s = np.where(fin, dR_s, 0.0)
    m = loc["R"].shape[1]
    if support.all():
        dR = dR_s
    else:
        dR = np.zeros((len(y), m), dtype=dR_s.dtype)
        dR[:, support] = dR_s
    d_child = -dR if dual else dR

    W = loc["ws"].sum()
    if support.all():
        dw_eff = (g_y[:, None] * s * dev / den[:, None]).sum(axis=0) / W
    else:
        # masked columns still have a weight derivative; rebuild their softmin factor
        R = loc["R"]
        finite_rows = np.isfinite(Rs)
        shift = np.where(finite_rows, Rs, np.inf).min(axis=1, keepdims=True)
        shift = np.where(np.isfinite(shift), shift, 0.0)
        tot = np.where(finite_rows, np.exp(-(np.where(finite_rows, Rs, 0.0) - shift) / sigma), 0.0).sum(axis=1, keepdims=True)
        Rfull = np.where(np.isfinite(R), R, 0.0)
        expo = np.minimum(-(Rfull - shift) / sigma, _EXP_CAP)
        s_full = np.where(np.isfinite(R), np.exp(expo), 0.0) / tot
        s_full[:, support] = s
        dev_full = Rfull - y[:, None]
        dw_eff = (g_y[:, None] * s_full * dev_full / den[:, None]).sum(axis=0) / W
    return d_child, dw_eff


def backward(tape: Tape, seed=None) -> np.ndarray:
    """Gradient of the recorded output with respect to every parameter.

    ``seed`` is the adjoint of the output (one value per batch row, default
    ones); gradients are summed over the batch.
    """
    nodes = tape.nodes
    out = nodes[tape.output]
    n = out.value.shape[0]
    dtype = out.value.dtype
    grad = np.zeros(len(tape.view), dtype=dtype)
    adj: list = [None] * len(nodes)
    adj[tape.output] = np.ones(n, dtype=dtype) if seed is None else np.broadcast_to(np.asarray(seed, dtype=dtype), (n,)).copy()
    for i in range(tape.output, -1, -1):
        g = adj[i]
        if g is None:
            continue
        node = nodes[i]
        if node.kind == PRED:
            off, dim = node.local["offset"], node.local["dim"]
            x = node.local["x"]
            for j in range(dim):
                grad[off + j] -= (g * x[:, j]).sum()
            grad[off + dim] += g.sum()
        elif node.kind == NEG:
            _accumulate(adj, node.inputs[0], -g)
        elif node.kind == AGG:
            loc = node.local
            d_child, dw_eff = _aggregate_backward(loc, g, tape.sigma)
            for col, j in enumerate(node.inputs):
                _accumulate(adj, j, d_child[:, col])
            off, m = loc["offset"], loc["m"]
            mask = loc["mask"]
            if mask is None:
                grad[off:off + m] += dw_eff
                if loc["gated"]:
                    grad[off + m:off + 2 * m] += dw_eff * loc["weights"]
            else:
                grad[off:off + m] += dw_eff * mask
                # straight-through: the sampled mask is treated as the gate itself
                grad[off + m:off + 2 * m] += dw_eff * loc["weights"]
    return grad


def _accumulate(adj, j, g):
    if adj[j] is None:
        adj[j] = g.copy()
    else:
        adj[j] += g


def value_and_grad(s, phi: Formula, k: int = 0, sigma: float = 1.0, seed=None):
    val, tape = forward_record(s, phi, k, sigma)
    return val, backward(tape, seed)


# -- finite-difference checking ----------------------------------------------

def finite_difference(s, phi: Formula, k: int = 0, sigma: float = 1.0, h: float = 1e-5,
                      dtype=np.longdouble) -> np.ndarray:
    """Central differences of weighted robustness for every parameter.

    Evaluated in extended precision so cancellation in ``f(x+h) - f(x-h)``
    does not swamp small derivatives.
    """
    S, _ = as_signal(s)
    S = S[:1].astype(dtype)
    work = as_dtype(phi, dtype)
    view = params(work)
    base = view.values().astype(dtype)
    out = np.empty(len(view), dtype=np.float64)
    h = dtype(h)
    for i, ref in enumerate(view):
        x0 = base[i]
        ref.value = x0 + h
        up = _weighted_batch(S, work, k, sigma)[0][0]
        ref.value = x0 - h
        down = _weighted_batch(S, work, k, sigma)[0][0]
        ref.value = x0
        out[i] = float((up - down) / (2 * h))
    return out


def relative_error(g_ad, g_fd) -> np.ndarray:
    g_ad, g_fd = np.asarray(g_ad), np.asarray(g_fd)
    return np.abs(g_ad - g_fd) / np.maximum(1e-8, np.abs(g_ad) + np.abs(g_fd))


@dataclass
class GradCheckReport:
    trials: int
    tolerance: float
    worst_error: float
    worst_param: str
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: {self.trials} trials, worst relative error {self.worst_error:.3e} "
                f"({self.worst_param}), tolerance {self.tolerance:.1e}")


def grad_check(phi: Formula, trials: int = 10, tolerance: float = 1e-4, sigma: float = 1.0,
               seed: int = 0, h: float = 1e-5, T: int | None = None) -> GradCheckReport:
    """Compare :func:`backward` with central differences on random inputs.

    Each trial draws a fresh signal and fresh parameters (positive weights)
    for a copy of ``phi``. Failures are reported, not raised.
    """
    from .formula import horizon, signal_dim
    from .generate import randomize_params

    rng = np.random.default_rng(seed)
    dim = signal_dim(phi) or 1
    T = T or horizon(phi)
    worst, worst_where, failures = 0.0, "-", []
    for t in range(trials):
        work = as_dtype(phi, np.float64)
        randomize_params(work, rng)
        s = rng.normal(size=(dim, T))
        _, tape = forward_record(s, work, 0, sigma)
        g_ad = backward(tape)
        g_fd = finite_difference(s, work, 0, sigma, h)
        err = relative_error(g_ad, g_fd)
        if err.size:
            j = int(np.argmax(err))
            if err[j] > worst:
                worst, worst_where = float(err[j]), f"trial {t}, {tape.view.describe(j)}"
            for j in np.flatnonzero(err > tolerance):
                failures.append(f"trial {t}: {tape.view.describe(j)} ad={g_ad[j]:.6e} fd={g_fd[j]:.6e} rel={err[j]:.2e}")
    return GradCheckReport(trials, tolerance, worst, worst_where, failures)
