"""Self-verification suites behind ``wstl check``.

Each check draws randomized instances from a seeded generator and reports
the worst deviation seen; nothing here raises on a failed property.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .formula import (Always, And, Eventually, Formula, Interval, Not, Or, Pred,
                      copy_formula, horizon, weighted_nodes)
from .generate import random_formula
from .grad import grad_check, value_and_grad
from .semantics import robustness_classical, robustness_weighted, softmin_aggregate


@dataclass
class CheckResult:
    name: str
    instances: int
    tolerance: float
    worst: float = 0.0
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        line = (f"{status} {self.name}: {self.instances} instances, worst {self.worst:.3e} "
                f"(tol {self.tolerance:.0e}), {self.seconds:.2f}s")
        if self.failures:
            line += "\n  " + "\n  ".join(self.failures[:5])
        return line


def _run(name, n, tol, body) -> CheckResult:
    res = CheckResult(name, n, tol)
    t0 = time.perf_counter()
    for i in range(n):
        err, detail = body(i)
        res.worst = max(res.worst, err)
        if err > tol:
            res.failures.append(f"instance {i}: {detail} (deviation {err:.3e})")
    res.seconds = time.perf_counter() - t0
    return res


def _random_weights(rng, m):
    return rng.uniform(0.1, 2.0, size=m)


def _random_case(rng, depth=3):
    dim = int(rng.integers(1, 4))
    phi = random_formula(rng, depth, dim, 8)
    s = rng.normal(size=(dim, horizon(phi) + int(rng.integers(0, 3))))
    return phi, s


def check_zero_weight(rng, n=1000) -> CheckResult:
    """Inputs behind a zero weight cannot change the output, to the bit."""
    def body(i):
        m = int(rng.integers(2, 8))
        w = _random_weights(rng, m)
        w[rng.random(m) < 0.4] = 0.0
        if not w.any():
            w[0] = 1.0
        r = rng.normal(scale=3.0, size=m)
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        r2 = r.copy()
        zero = w == 0
        r2[zero] = rng.normal(scale=100.0, size=int(zero.sum()))
        a, b = softmin_aggregate(w, r, sigma), softmin_aggregate(w, r2, sigma)
        return (0.0 if a == b else 1.0), f"w={w} r={r} -> {a!r} vs {b!r}"
    return _run("zero-weight non-influence", n, 0.0, body)


def check_zero_weight_temporal(rng, n=1000) -> CheckResult:
    """Same property through a whole formula: a zero-weighted time point is ignored."""
    def body(i):
        m = int(rng.integers(2, 7))
        w = _random_weights(rng, m)
        j = int(rng.integers(0, m))
        w[j] = 0.0
        op = Always if rng.random() < 0.5 else Eventually
        phi = op(Interval(0, m - 1), Pred(rng.normal(size=2), float(rng.normal())), weights=w)
        s = rng.normal(size=(2, m))
        s2 = s.copy()
        s2[:, j] += rng.normal(scale=50.0, size=2)
        a, b = robustness_weighted(s, phi), robustness_weighted(s2, phi)
        return (0.0 if a == b else 1.0), f"{phi}: {a!r} vs {b!r}"
    return _run("zero-weight non-influence (formula)", n, 0.0, body)


def check_monotonicity(rng, n=1000) -> CheckResult:
    """Adding a common d >= 0 to every input never lowers a conjunctive aggregate."""
    def body(i):
        m = int(rng.integers(1, 8))
        w = _random_weights(rng, m)
        r = rng.normal(scale=3.0, size=m)
        d = float(rng.choice([0.0, rng.uniform(0, 1e-3), rng.uniform(0, 5.0)]))
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        a, b = softmin_aggregate(w, r, sigma), softmin_aggregate(w, r + d, sigma)
        return max(0.0, a - b), f"w={w} r={r} d={d}"
    return _run("monotonicity", n, 0.0, body)


def check_ordering(rng, n=1000) -> CheckResult:
    """Equal inputs: the heavier-weighted one has the larger gradient magnitude."""
    def body(i):
        r = float(rng.normal())
        w1, w2 = sorted(rng.uniform(0.1, 2.0, size=2), reverse=True)
        if w1 == w2:
            w1 += 0.1
        other = float(rng.normal())
        phi = And(And(Pred([0.0], r), Pred([0.0], r), weights=[w1, w2]), Pred([0.0], other),
                  weights=[1.0, 1.0])
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        _, g = value_and_grad(np.zeros((1, 1)), phi, 0, sigma)
        # parameters: outer weights, inner weights, a1, c1, a2, c2, a3, c3
        g1, g2 = abs(g[5]), abs(g[7])
        if g1 == 0 and g2 == 0:
            return 0.0, "both gradients vanish"
        return (0.0 if g1 > g2 else 1.0), f"w=({w1}, {w2}) |d/dr1|={g1} |d/dr2|={g2}"
    return _run("ordering of influence", n, 0.0, body)


def check_demorgan(rng, n=1000) -> CheckResult:
    """not(not a and not b) == a or b, and not G not a == F a, same weights."""
    def body(i):
        phi1, s = _random_case(rng)
        if i % 2 == 0:
            phi2 = random_formula(rng, 3, s.shape[0], 8)
            s = np.concatenate([s, rng.normal(size=(s.shape[0], max(0, horizon(phi2) - s.shape[1])))], axis=1)
            w = _random_weights(rng, 2)
            lhs = Not(And(Not(phi1), Not(phi2), weights=w))
            rhs = Or(phi1, phi2, weights=w)
        else:
            m = int(rng.integers(1, 4))
            w = _random_weights(rng, m)
            s = np.concatenate([s, rng.normal(size=(s.shape[0], m))], axis=1)
            lhs = Not(Always(Interval(0, m - 1), Not(phi1), weights=w))
            rhs = Eventually(Interval(0, m - 1), phi1, weights=w)
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        a, b = robustness_weighted(s, lhs, 0, sigma), robustness_weighted(s, rhs, 0, sigma)
        return abs(a - b), f"{rhs}"
    return _run("DeMorgan duality", n, 1e-12, body)


def check_double_negation(rng, n=1000) -> CheckResult:
    def body(i):
        phi, s = _random_case(rng)
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        a, b = robustness_weighted(s, Not(Not(phi)), 0, sigma), robustness_weighted(s, phi, 0, sigma)
        return (0.0 if a == b else 1.0), f"{phi}: {a!r} vs {b!r}"
    return _run("double negation", n, 0.0, body)


def check_convex_bounds(rng, n=1000) -> CheckResult:
    """The aggregate stays within [min r, max r] over inputs with positive weight."""
    def body(i):
        m = int(rng.integers(1, 8))
        w = _random_weights(rng, m)
        w[rng.random(m) < 0.3] = 0.0
        if not w.any():
            w[-1] = 0.5
        r = rng.normal(scale=float(rng.choice([1e-3, 1.0, 1e3])), size=m)
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        y = softmin_aggregate(w, r, sigma)
        live = r[w > 0]
        return max(0.0, live.min() - y, y - live.max()), f"w={w} r={r} y={y!r}"
    return _run("convex-combination bounds", n, 0.0, body)


def check_scaling(rng, n=1000) -> CheckResult:
    """Scaling one operator's weight vector leaves robustness unchanged."""
    def body(i):
        for _ in range(20):
            phi, s = _random_case(rng)
            ops = weighted_nodes(phi)
            if ops:
                break
        else:
            return 0.0, "no weighted operator drawn"
        scaled = copy_formula(phi)
        _, node = weighted_nodes(scaled)[int(rng.integers(0, len(ops)))]
        node.weights = node.weights * float(rng.choice([3.0, rng.uniform(0.05, 20.0)]))
        sigma = float(rng.choice([0.1, 1.0, 10.0]))
        a, b = robustness_weighted(s, phi, 0, sigma), robustness_weighted(s, scaled, 0, sigma)
        return abs(a - b), f"{phi}"
    return _run("weight-scaling invariance", n, 1e-10, body)


def _separated(rng, m, gap=0.1):
    vals = np.cumsum(rng.uniform(gap, 1.0, size=m)) - rng.uniform(0, 3.0)
    return vals[rng.permutation(m)]


def check_sigma_limit(rng, n=1000, sigma=1e-3) -> CheckResult:
    """Equal weights and well separated inputs: weighted ~ classical as sigma -> 0."""
    def body(i):
        kind = i % 3
        if kind == 0:
            m = int(rng.integers(2, 8))
            op = Always if rng.random() < 0.5 else Eventually
            phi = op(Interval(0, m - 1), Pred([1.0], 0.0), weights=np.ones(m))
            s = -_separated(rng, m)[None, :]
        elif kind == 1:
            v = _separated(rng, 2)
            op = And if rng.random() < 0.5 else Or
            phi = op(Pred([0.0], v[0]), Pred([0.0], v[1]), weights=[1.0, 1.0])
            s = np.zeros((1, 1))
        else:
            # G over a conjunction of two predicates, every inner value spaced apart
            m = int(rng.integers(2, 5))
            while True:
                v = _separated(rng, 2 * m)
                inner = np.concatenate([-v[:m], v[m:]])
                gaps = np.abs(np.subtract.outer(inner, inner)) + np.eye(2 * m)
                if gaps.min() >= 0.1:
                    break
            s = np.vstack([v[:m], v[m:]])
            conj = And(Pred([1.0, 0.0], 0.0), Pred([0.0, -1.0], 0.0), weights=[1.0, 1.0])
            phi = Always(Interval(0, m - 1), conj, weights=np.ones(m))
        a, b = robustness_weighted(s, phi, 0, sigma), robustness_classical(s, phi)
        return abs(a - b), f"{phi} on {s.ravel()}"
    return _run(f"sigma -> 0 limit (sigma={sigma:g})", n, 1e-6, body)


PROPERTY_CHECKS = (check_zero_weight, check_zero_weight_temporal, check_monotonicity, check_ordering,
                   check_demorgan, check_double_negation, check_convex_bounds, check_scaling,
                   check_sigma_limit)


def run_properties(n: int = 1000, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check(rng, n) for check in PROPERTY_CHECKS]


def run_grad(trials: int = 100, tolerance: float = 1e-4, seed: int = 0, max_depth: int = 4,
             max_dim: int = 5, max_T: int = 12, sigmas=(0.1, 1.0, 10.0)) -> CheckResult:
    """Reverse-mode gradients against central differences on random formulas."""
    rng = np.random.default_rng(seed)
    res = CheckResult("gradient vs finite differences", trials, tolerance)
    t0 = time.perf_counter()
    for i in range(trials):
        depth = int(rng.integers(1, max_depth + 1))
        dim = int(rng.integers(1, max_dim + 1))
        phi = random_formula(rng, depth, dim, max_T)
        T = int(rng.integers(horizon(phi), max_T + 1))
        sigma = sigmas[i % len(sigmas)]
        rep = grad_check(phi, trials=1, tolerance=tolerance, sigma=sigma,
                         seed=int(rng.integers(2**31)), T=T)
        if rep.worst_error > res.worst:
            res.worst = rep.worst_error
        res.failures.extend(f"formula {i} ({phi}, sigma={sigma:g}): {f}" for f in rep.failures)
    res.seconds = time.perf_counter() - t0
    return res


__all__ = ["CheckResult", "PROPERTY_CHECKS", "run_grad", "run_properties"] + [
    c.__name__ for c in PROPERTY_CHECKS]
