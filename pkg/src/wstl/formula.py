"""Abstract syntax for weighted STL formulas.

A formula is a tree of :class:`Formula` nodes. Operator weights are stored
un-normalized; normalization happens at evaluation time. Every trainable
scalar is reachable through :func:`params`, which returns a flat,
deterministic view that writes back into the tree.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class Interval:
    k1: int
    k2: int

    def length(self) -> int:
        return self.k2 - self.k1 + 1

    def __iter__(self):
        return iter(range(self.k1, self.k2 + 1))


class Formula:
    """Base class of all formula nodes."""

    def children(self) -> tuple["Formula", ...]:
        return ()

    def walk(self) -> Iterator[tuple[tuple[int, ...], "Formula"]]:
        """Depth-first, left-to-right traversal yielding ``(path, node)``."""
        stack = [((), self)]
        while stack:
            path, node = stack.pop()
            yield path, node
            kids = node.children()
            for i in reversed(range(len(kids))):
                stack.append((path + (i,), kids[i]))

    def __str__(self):
        from .text import to_text

        return to_text(self)


@dataclass(eq=False)
class TrueF(Formula):
    pass


@dataclass(eq=False)
class Pred(Formula):
    """Affine predicate ``a^T s <= c``; robustness is ``c - a^T s``."""

    a: np.ndarray
    c: float

    def __post_init__(self):
        self.a = np.array(self.a, dtype=np.result_type(np.asarray(self.a).dtype, np.float64))
        self.c = self.a.dtype.type(self.c)

    @property
    def dim(self) -> int:
        return self.a.shape[0]


@dataclass(eq=False)
class Not(Formula):
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(eq=False)
class Weighted(Formula):
    """Shared state of operators that carry a weight vector.

    ``sparsified`` marks weights zeroed by pruning (legal), as opposed to a
    zero weight at construction (invalid). ``gates`` holds gate
    probabilities during gated training; ``gate_sample`` is the current
    Bernoulli mask (``None`` means all gates open).
    """

    weights: np.ndarray = field(kw_only=True)
    sparsified: bool = field(default=False, kw_only=True)
    gates: np.ndarray | None = field(default=None, kw_only=True)
    gate_sample: np.ndarray | None = field(default=None, kw_only=True)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.result_type(np.asarray(self.weights).dtype, np.float64)).reshape(-1)
        if self.gates is not None:
            self.gates = np.array(self.gates, dtype=self.weights.dtype)

    def effective_weights(self) -> np.ndarray:
        if self.gate_sample is None:
            return self.weights
        return self.weights * self.gate_sample


@dataclass(eq=False)
class And(Weighted):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(eq=False)
class Or(Weighted):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(eq=False)
class Always(Weighted):
    interval: Interval
    child: Formula

    def children(self):
        return (self.child,)


@dataclass(eq=False)
class Eventually(Weighted):
    interval: Interval
    child: Formula

    def children(self):
        return (self.child,)


Temporal = (Always, Eventually)
Binary = (And, Or)


# -- convenience constructors -------------------------------------------------

def conj(w1, left, w2, right) -> And:
    return And(left, right, weights=[w1, w2])


def disj(w1, left, w2, right) -> Or:
    return Or(left, right, weights=[w1, w2])


def always(k1, k2, child, weights=None) -> Always:
    n = k2 - k1 + 1
    return Always(Interval(k1, k2), child, weights=np.ones(n) if weights is None else weights)


def eventually(k1, k2, child, weights=None) -> Eventually:
    n = k2 - k1 + 1
    return Eventually(Interval(k1, k2), child, weights=np.ones(n) if weights is None else weights)


# -- structural queries -------------------------------------------------------

def horizon(phi: Formula) -> int:
    """Number of samples needed to evaluate ``phi`` at time 0."""
    if isinstance(phi, (TrueF, Pred)):
        return 1
    if isinstance(phi, Not):
        return horizon(phi.child)
    if isinstance(phi, Binary):
        return max(horizon(phi.left), horizon(phi.right))
    if isinstance(phi, Temporal):
        return phi.interval.k2 + horizon(phi.child)
    raise TypeError(f"not a formula node: {phi!r}")


def validate(phi: Formula, dim: int) -> list[str]:
    """Return every invariant violation found in ``phi`` (empty if valid)."""
    problems = []
    seen = set()
    for path, node in phi.walk():
        where = "root" if not path else "/".join(map(str, path))
        if id(node) in seen:
            problems.append(f"{where}: subformula object is shared between branches")
        seen.add(id(node))
        if isinstance(node, Pred):
            if node.a.ndim != 1 or node.dim != dim:
                problems.append(f"{where}: predicate dimension {node.a.shape[-1] if node.a.ndim else 0} != signal dimension {dim}")
            if not (np.all(np.isfinite(node.a)) and np.isfinite(node.c)):
                problems.append(f"{where}: non-finite predicate parameter")
        elif isinstance(node, Weighted):
            w = node.weights
            if isinstance(node, Temporal):
                iv = node.interval
                if iv.k1 < 0 or iv.k2 < 0:
                    problems.append(f"{where}: negative interval bound [{iv.k1},{iv.k2}]")
                if iv.k1 > iv.k2:
                    problems.append(f"{where}: empty interval [{iv.k1},{iv.k2}]")
                elif len(w) != iv.length():
                    problems.append(f"{where}: weight length {len(w)} != interval length {iv.length()}")
            elif len(w) != 2:
                problems.append(f"{where}: binary operator needs 2 weights, got {len(w)}")
            if not np.all(np.isfinite(w)):
                problems.append(f"{where}: non-finite weight")
            elif node.sparsified:
                if np.any(w < 0) or not np.any(w > 0):
                    problems.append(f"{where}: non-positive weight (sparsified operator needs weights >= 0, one > 0)")
            elif np.any(w <= 0):
                problems.append(f"{where}: non-positive weight")
            if node.gates is not None and node.gates.shape != w.shape:
                problems.append(f"{where}: gate count {node.gates.shape[0]} != weight count {len(w)}")
        elif not isinstance(node, (TrueF, Not)):
            problems.append(f"{where}: unknown node type {type(node).__name__}")
    return problems


def signal_dim(phi: Formula) -> int | None:
    """Dimension of the first predicate found, or None for predicate-free formulas."""
    for _, node in phi.walk():
        if isinstance(node, Pred):
            return node.dim
    return None


def weighted_nodes(phi: Formula) -> list[tuple[tuple[int, ...], Weighted]]:
    return [(p, n) for p, n in phi.walk() if isinstance(n, Weighted)]


def copy_formula(phi: Formula) -> Formula:
    return copy.deepcopy(phi)


def as_dtype(phi: Formula, dtype) -> Formula:
    """Deep copy of ``phi`` with every parameter cast to ``dtype``."""
    out = copy.deepcopy(phi)
    for _, node in out.walk():
        if isinstance(node, Pred):
            node.a = node.a.astype(dtype)
            node.c = node.a.dtype.type(node.c)
        elif isinstance(node, Weighted):
            node.weights = node.weights.astype(dtype)
            if node.gates is not None:
                node.gates = node.gates.astype(dtype)
    return out


def structurally_equal(f: Formula, g: Formula, rtol: float = 1e-6, atol: float = 0.0) -> bool:
    """Same tree shape, intervals and markers; scalars equal within tolerance."""
    if type(f) is not type(g):
        return False
    if isinstance(f, Pred):
        return (f.dim == g.dim and np.allclose(f.a, g.a, rtol=rtol, atol=atol)
                and np.isclose(f.c, g.c, rtol=rtol, atol=atol))
    if isinstance(f, Weighted):
        if f.sparsified != g.sparsified or f.weights.shape != g.weights.shape:
            return False
        if not np.allclose(f.weights, g.weights, rtol=rtol, atol=atol):
            return False
        if isinstance(f, Temporal) and f.interval != g.interval:
            return False
    fk, gk = f.children(), g.children()
    return len(fk) == len(gk) and all(structurally_equal(a, b, rtol, atol) for a, b in zip(fk, gk))


# -- parameter view -----------------------------------------------------------

PREDICATE_COEFFICIENT = "predicate-coefficient"
PREDICATE_OFFSET = "predicate-offset"
OPERATOR_WEIGHT = "operator-weight"
GATE = "gate"


@dataclass(eq=False)
class ParamRef:
    path: tuple[int, ...]
    kind: str
    index: int
    node: Formula = field(repr=False, compare=False)

    @property
    def value(self):
        if self.kind == PREDICATE_OFFSET:
            return self.node.c
        return self._array()[self.index]

    @value.setter
    def value(self, v: float) -> None:
        if self.kind == PREDICATE_OFFSET:
            self.node.c = self.node.a.dtype.type(v)
        else:
            self._array()[self.index] = v

    def _array(self) -> np.ndarray:
        if self.kind == PREDICATE_COEFFICIENT:
            return self.node.a
        if self.kind == OPERATOR_WEIGHT:
            return self.node.weights
        return self.node.gates


class ParamView:
    """Flat, ordered view of every trainable scalar in a formula.

    Order is depth-first, left-to-right; within a node, operator weights
    come before gates and predicate coefficients before the offset.
    """

    def __init__(self, phi: Formula):
        self.formula = phi
        self.refs: list[ParamRef] = []
        self.offsets: dict[int, int] = {}
        for path, node in phi.walk():
            self.offsets[id(node)] = len(self.refs)
            if isinstance(node, Pred):
                self.refs += [ParamRef(path, PREDICATE_COEFFICIENT, i, node) for i in range(node.dim)]
                self.refs.append(ParamRef(path, PREDICATE_OFFSET, 0, node))
            elif isinstance(node, Weighted):
                self.refs += [ParamRef(path, OPERATOR_WEIGHT, i, node) for i in range(len(node.weights))]
                if node.gates is not None:
                    self.refs += [ParamRef(path, GATE, i, node) for i in range(len(node.gates))]

    def __len__(self):
        return len(self.refs)

    def __iter__(self):
        return iter(self.refs)

    def __getitem__(self, i):
        return self.refs[i]

    def kinds(self) -> np.ndarray:
        return np.array([r.kind for r in self.refs], dtype=object)

    def mask(self, kind: str) -> np.ndarray:
        return np.array([r.kind == kind for r in self.refs], dtype=bool)

    def values(self) -> np.ndarray:
        out = []
        for _, node in self.formula.walk():
            if isinstance(node, Pred):
                out.extend(node.a)
                out.append(node.c)
            elif isinstance(node, Weighted):
                out.extend(node.weights)
                if node.gates is not None:
                    out.extend(node.gates)
        return np.array(out) if out else np.zeros(0)

    def assign(self, vec) -> None:
        vec = np.asarray(vec)
        if vec.shape != (len(self.refs),):
            raise ValueError(f"expected {len(self.refs)} values, got shape {vec.shape}")
        i = 0
        for _, node in self.formula.walk():
            if isinstance(node, Pred):
                n = node.dim
                node.a[:] = vec[i:i + n]
                node.c = node.a.dtype.type(vec[i + n])
                i += n + 1
            elif isinstance(node, Weighted):
                n = len(node.weights)
                node.weights[:] = vec[i:i + n]
                i += n
                if node.gates is not None:
                    node.gates[:] = vec[i:i + n]
                    i += n

    def describe(self, i: int) -> str:
        r = self.refs[i]
        where = "root" if not r.path else "/".join(map(str, r.path))
        return f"{r.kind}[{r.index}] at {where}"


def params(phi: Formula) -> ParamView:
    return ParamView(phi)
