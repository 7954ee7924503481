"""Random formulas and parameters for property tests and self-checks."""
from __future__ import annotations

import numpy as np

from .formula import (Always, And, Eventually, Formula, Interval, Not, Or, Pred,
                      TrueF, Weighted, horizon)


def random_formula(rng: np.random.Generator, depth: int, dim: int, max_horizon: int,
                   allow_true: bool = False, max_width: int = 4) -> Formula:
    """Random formula of depth at most ``depth`` with ``horizon <= max_horizon``."""
    if max_horizon < 1:
        raise ValueError("max_horizon must be >= 1")
    if depth <= 1:
        if allow_true and rng.random() < 0.15:
            return TrueF()
        return _random_pred(rng, dim)
    choice = rng.integers(0, 5)
    if choice == 0:
        return Not(random_formula(rng, depth - 1, dim, max_horizon, allow_true, max_width))
    if choice in (1, 2):
        cls = And if choice == 1 else Or
        left = random_formula(rng, depth - 1, dim, max_horizon, allow_true, max_width)
        right = random_formula(rng, depth - 1, dim, max_horizon, allow_true, max_width)
        return cls(left, right, weights=rng.uniform(0.5, 1.5, size=2))
    budget = max_horizon - 1
    if budget < 1:
        return _random_pred(rng, dim)
    k2 = int(rng.integers(0, min(budget, max_width + 2) + 1))
    k1 = int(rng.integers(0, k2 + 1))
    if k2 - k1 + 1 > max_width:
        k1 = k2 - max_width + 1
    child = random_formula(rng, depth - 1, dim, max_horizon - k2, allow_true, max_width)
    cls = Always if choice == 3 else Eventually
    out = cls(Interval(k1, k2), child, weights=rng.uniform(0.5, 1.5, size=k2 - k1 + 1))
    assert horizon(out) <= max_horizon
    return out


def _random_pred(rng, dim):
    return Pred(rng.normal(size=dim), float(rng.normal()))


def randomize_params(phi: Formula, rng: np.random.Generator) -> None:
    """Redraw every parameter in place: weights uniform(0.5, 1.5), predicates normal."""
    for _, node in phi.walk():
        if isinstance(node, Pred):
            node.a[:] = rng.normal(size=node.dim)
            node.c = node.a.dtype.type(rng.normal())
        elif isinstance(node, Weighted):
            if node.sparsified:
                keep = node.weights > 0
                node.weights[keep] = rng.uniform(0.5, 1.5, size=int(keep.sum()))
            else:
                node.weights[:] = rng.uniform(0.5, 1.5, size=len(node.weights))
