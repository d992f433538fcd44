"""Matrix-valued measures and the quadrature used to integrate against them.

A :class:`WeightMatrix` is an absolutely continuous part on ``[lo, hi]``
plus finitely many matrix atoms.  The density is stored in *reduced* form:

    density(x) = (hi - x)**p * (x - lo)**q * reduced(x)

with ``reduced`` smooth on the closed interval.  Gauss-Jacobi nodes for the
weight ``(1 - t)**p (1 + t)**q`` then integrate the endpoint behaviour
exactly.  The common case p = q = 1/2 is Gauss-Chebyshev of the second kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import QuadratureUnconverged

DEFAULT_NODES = 512
MAX_NODES = 16384
DEFAULT_QUAD_TOL = 1e-9


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule on [-1, 1] for the weight (1 - t)**p (1 + t)**q."""

    nodes: np.ndarray
    weights: np.ndarray
    p: float = 0.5
    q: float = 0.5

    @property
    def size(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=32)
def _jacobi_table(n: int, p: float, q: float):
    if p == 0.5 and q == 0.5:
        k = np.arange(1, n + 1)
        theta = k * np.pi / (n + 1)
        t = np.cos(theta)
        w = np.pi / (n + 1) * np.sin(theta) ** 2
    else:
        t, w = special.roots_jacobi(n, p, q)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def gauss_rule(n: int = DEFAULT_NODES, p: float = 0.5, q: float = 0.5) -> QuadratureRule:
    if n < 1:
        raise ValueError("need at least one node")
    t, w = _jacobi_table(int(n), float(p), float(q))
    return QuadratureRule(nodes=t, weights=w, p=p, q=q)


@dataclass(frozen=True)
class Atom:
    location: float
    mass: np.ndarray


@dataclass(frozen=True)
class WeightMatrix:
    """Matrix measure: continuous part on [lo, hi] plus matrix atoms.

    ``reduced(x)`` maps a 1-d array of points to an array (len(x), N, N).
    ``reduced`` may be None for a purely discrete measure.
    """

    dim: int
    lo: float
    hi: float
    reduced: Optional[Callable[[np.ndarray], np.ndarray]]
    atoms: tuple = ()
    p: float = 0.5
    q: float = 0.5
    label: str = field(default="", compare=False)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def density(self, x) -> np.ndarray:
        """Density at x (scalar or 1-d array); zero outside [lo, hi]."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((len(xs), self.dim, self.dim))
        if self.reduced is not None:
            inside = (xs >= self.lo) & (xs <= self.hi)
            if inside.any():
                xi = xs[inside]
                factor = np.clip(self.hi - xi, 0.0, None) ** self.p * np.clip(xi - self.lo, 0.0, None) ** self.q
                out[inside] = factor[:, None, None] * self.reduced(xi)
        return out[0] if np.ndim(x) == 0 else out

    def with_atoms(self, atoms) -> "WeightMatrix":
        return WeightMatrix(self.dim, self.lo, self.hi, self.reduced, tuple(atoms), self.p, self.q, self.label)

    def nodes(self, rule: QuadratureRule):
        """Points x_k and effective weights so that sum_k w_k R(x_k) g(x_k) ~ the integral of g dW_c."""
        h = self.halfwidth
        x = self.midpoint + h * rule.nodes
        w = rule.weights * h ** (self.p + self.q + 1.0)
        return x, w


def _evaluate(weight: WeightMatrix, rule: QuadratureRule, scalar, left, right) -> np.ndarray:
    N = weight.dim
    total = np.zeros((N, N), dtype=complex)
    if weight.reduced is not None:
        x, w = weight.nodes(rule)
        vals = weight.reduced(x).astype(complex)
        if scalar is not None:
            vals = vals * np.asarray(scalar(x))[:, None, None]
        if left is not None:
            vals = np.matmul(left(x), vals)
        if right is not None:
            vals = np.matmul(vals, np.swapaxes(right(x), -1, -2))
        total += np.tensordot(w, vals, axes=(0, 0))
    for atom in weight.atoms:
        xa = np.array([atom.location])
        m = atom.mass.astype(complex)
        if scalar is not None:
            m = m * np.asarray(scalar(xa))[0]
        if left is not None:
            m = left(xa)[0] @ m
        if right is not None:
            m = m @ right(xa)[0].T
        total += m
    return total


def integrate(
    weight: WeightMatrix,
    rule: QuadratureRule | None = None,
    *,
    scalar=None,
    left=None,
    right=None,
    tol: float = DEFAULT_QUAD_TOL,
    check: bool = True,
    max_nodes: int = MAX_NODES,
):
    """Integral of ``scalar(x) * left(x) @ dW(x) @ right(x).T``.

    Each callable takes a 1-d array of points and returns values stacked along
    the first axis.  The continuous part uses ``rule`` (rebuilt with the
    weight's endpoint exponents if they differ); atoms are summed exactly.
    With ``check`` the node count is doubled until no entry moves by more
    than ``tol`` (relative to max(1, |value|)); :class:`QuadratureUnconverged`
    is raised if that has not happened by ``max_nodes``.
    Returns a real array unless the integrand is complex.
    """
    n = rule.size if rule is not None else DEFAULT_NODES
    if rule is None or rule.p != weight.p or rule.q != weight.q:
        rule = gauss_rule(n, weight.p, weight.q)
    value = _evaluate(weight, rule, scalar, left, right)
    if check and weight.reduced is not None:
        size = rule.size
        while True:
            size *= 2
            finer = _evaluate(weight, gauss_rule(size, weight.p, weight.q), scalar, left, right)
            scale = np.maximum(1.0, np.abs(finer))
            err = np.max(np.abs(finer - value) / scale)
            value = finer
            if np.isfinite(err) and err <= tol:
                break
            if size >= max_nodes:
                raise QuadratureUnconverged(
                    f"doubling {size // 2} -> {size} nodes changed the result by {err:.3e}"
                )
    if np.all(value.imag == 0):
        return value.real
    return value


def total_mass(weight: WeightMatrix, rule: QuadratureRule | None = None) -> np.ndarray:
    return integrate(weight, rule)
