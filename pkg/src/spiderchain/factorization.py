"""Reflecting-absorbing factorization P = P_R P_A and the Darboux transform P_A P_R.

P_R is upper block bidiagonal with blocks (Y_n, X_n) and P_A is lower block
bidiagonal with blocks (R_n, S_n).  On leg m the entries are solved one
depth at a time from the free parameter beta_m:

    s_1 = alpha_m / beta_m,  r_n = 1 - s_n,  y_n = c_n / r_n,
    x_n = 1 - y_n,           s_{n+1} = a_n / x_n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain_model import BlockTriple, SpiderChain
from .errors import (
    DegenerateDivision,
    InvalidBeta,
    NegativeAtomMass,
    NotStochastic,
    SingularGeronimus,
    ZeroInSupport,
)
from .km_spectral import eval_matrix_polys, eval_scalar_polys
from .quadrature import Atom, WeightMatrix
from .stieltjes import CF_TOL, cf_limit

ENTRY_TOL = 1e-12
DIVISION_TOL = 1e-13
FREEZE_TOL = 1e-14
DEFAULT_DEPTH = 100
NAMES = ("x", "y", "r", "s")


class ThresholdReport(NamedTuple):
    values: tuple
    feasible: bool


def thresholds(chain: SpiderChain, tol: float = CF_TOL) -> ThresholdReport:
    """Per-leg lower bounds H_m for beta_m; feasible iff sum(H_m) < 1."""
    values = tuple(cf_limit(chain, m, tol=tol).value for m in range(1, chain.N + 1))
    return ThresholdReport(values, sum(values) < 1.0)


def beta_vector(chain: SpiderChain, beta) -> np.ndarray:
    """Full (beta_0, beta_1, ..., beta_N) from the N free parameters."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (chain.N,):
        raise InvalidBeta(f"expected {chain.N} free parameters, got shape {beta.shape}")
    if np.any(beta <= 0.0) or np.any(beta > 1.0):
        raise InvalidBeta(f"each beta_m must lie in (0, 1], got {beta.tolist()}")
    beta0 = 1.0 - beta.sum()
    if beta0 < -ENTRY_TOL:
        raise InvalidBeta(f"beta_0 = 1 - sum(beta) = {beta0!r} is negative")
    return np.concatenate(([max(beta0, 0.0)], beta))


@dataclass(frozen=True, eq=False)
class FactorPair:
    """Entries x, y, r, s per leg and depth, plus the blocks built from them.

    ``table[name]`` has shape (N, depth + 1); column n holds depth n (column 0
    is unused).  ``frozen[m - 1]`` is the depth from which leg m sat on a fixed
    point of its constant tail, or None.
    """

    chain: SpiderChain
    beta: np.ndarray
    depth: int
    table: dict
    frozen: tuple

    def value(self, name: str, n: int, leg: int) -> float:
        arr = self.table[name][leg - 1]
        if 1 <= n <= self.depth:
            return float(arr[n])
        start = self.frozen[leg - 1]
        if n > self.depth and start is not None:
            return float(arr[self.depth])
        raise IndexError(f"{name}_{{{n},{leg}}} was not computed (depth {self.depth})")

    def _diag(self, name: str, n: int) -> np.ndarray:
        N = self.chain.N
        vals = [self.value(name, n, N)] + [self.value(name, n + 1, k) for k in range(1, N)]
        return np.diag(vals)

    def Y(self, n: int) -> np.ndarray:
        if n == 0:
            N = self.chain.N
            out = np.zeros((N, N))
            out[0, :] = self.beta[:N]
            for k in range(1, N):
                out[k, k] = self.value("y", 1, k)
            return out
        return self._diag("y", n)

    def X(self, n: int) -> np.ndarray:
        if n == 0:
            N = self.chain.N
            return np.diag([self.beta[N]] + [self.value("x", 1, k) for k in range(1, N)])
        return self._diag("x", n)

    def S(self, n: int) -> np.ndarray:
        if n == 0:
            N = self.chain.N
            out = np.eye(N)
            for k in range(1, N):
                out[k, 0] = self.value("r", 1, k)
                out[k, k] = self.value("s", 1, k)
            return out
        return self._diag("s", n)

    def R(self, n: int) -> np.ndarray:
        if n == 0:
            raise ValueError("R_n starts at n = 1")
        return self._diag("r", n)

    def leg_table(self, leg: int) -> list:
        """Rows (depth, x, y, r, s) of one leg for reporting."""
        return [
            (n,) + tuple(float(self.table[name][leg - 1][n]) for name in NAMES)
            for n in range(1, self.depth + 1)
        ]


def _check_entry(value, n, leg, name):
    if not -ENTRY_TOL <= value <= 1.0 + ENTRY_TOL:
        raise NotStochastic(n, leg, name, float(value))


def ul_factorize(chain: SpiderChain, beta, L: int = DEFAULT_DEPTH, freeze: bool = True) -> FactorPair:
    """Solve P = P_R P_A for the given beta_1..beta_N down to block level L.

    Raises :class:`NotStochastic` at the first entry outside [0, 1] (the
    constructive witness that some beta_m is below its threshold) and
    :class:`DegenerateDivision` when a pivot r_n or x_n vanishes.

    With ``freeze``, once a leg's (x, y, r, s) repeat to within 1e-14 inside
    its constant tail the values are held fixed for every deeper level.
    """
    if L < 0:
        raise ValueError("depth must be nonnegative")
    full = beta_vector(chain, beta)
    N = chain.N
    depth = L + 2  # level L needs depth L + 2 on legs 1..N-1
    table = {name: np.full((N, depth + 1), np.nan) for name in NAMES}
    frozen = []
    for m in range(1, N + 1):
        x, y, r, s = (table[name][m - 1] for name in NAMES)
        s[1] = chain.alpha[m] / full[m]
        _check_entry(s[1], 1, m, "s")
        tail_from = chain.prefix_length(m) + 2
        fixed = None
        for n in range(1, depth + 1):
            if fixed is not None:
                x[n], y[n], r[n], s[n] = x[n - 1], y[n - 1], r[n - 1], s[n - 1]
                continue
            r[n] = 1.0 - s[n]
            _check_entry(r[n], n, m, "r")
            if r[n] < DIVISION_TOL:
                raise DegenerateDivision(n, m, "y")
            a_n, _, c_n = chain.rates(m, n)
            y[n] = c_n / r[n]
            _check_entry(y[n], n, m, "y")
            x[n] = 1.0 - y[n]
            _check_entry(x[n], n, m, "x")
            if (
                freeze
                and n >= tail_from
                and max(abs(t[n] - t[n - 1]) for t in (x, y, r, s)) < FREEZE_TOL
            ):
                fixed = n
            if n < depth:
                if x[n] < DIVISION_TOL:
                    raise DegenerateDivision(n + 1, m, "s")
                s[n + 1] = a_n / x[n]
                _check_entry(s[n + 1], n + 1, m, "s")
        frozen.append(fixed)
    return FactorPair(chain=chain, beta=full, depth=depth, table=table, frozen=tuple(frozen))


def verify_product(chain: SpiderChain, pair: FactorPair, L: int) -> float:
    """Largest entrywise |P - P_R P_A| over block levels 0..L."""
    worst = 0.0
    for n in range(L + 1):
        t = chain.blocks(n)
        A = pair.X(n) @ pair.S(n + 1)
        B = pair.X(n) @ pair.R(n + 1) + pair.Y(n) @ pair.S(n)
        worst = max(worst, np.max(np.abs(t.A - A)), np.max(np.abs(t.B - B)))
        if n >= 1:
            worst = max(worst, np.max(np.abs(t.C - pair.Y(n) @ pair.R(n))))
    return float(worst)


def factor_matrices(pair: FactorPair, L: int) -> tuple:
    """Dense truncations of P_R and P_A on block levels 0..L."""
    N = pair.chain.N
    size = (L + 1) * N
    PR = np.zeros((size, size))
    PA = np.zeros((size, size))
    for n in range(L + 1):
        sl = slice(n * N, (n + 1) * N)
        PR[sl, sl] = pair.Y(n)
        PA[sl, sl] = pair.S(n)
        if n < L:
            PR[sl, (n + 1) * N:(n + 2) * N] = pair.X(n)
        if n > 0:
            PA[sl, (n - 1) * N:n * N] = pair.R(n)
    return PR, PA


# ---------------------------------------------------------------------------
# Darboux transform
# ---------------------------------------------------------------------------


def pi_y_s(chain: SpiderChain, beta) -> np.ndarray:
    """Pi_0 Y_0 S_0 in closed form (a symmetric matrix)."""
    full = beta_vector(chain, beta)
    N = chain.N
    alpha = chain.alpha
    out = np.zeros((N, N))
    out[0, 0] = alpha[0] + alpha[N] - full[N]
    out[0, 1:] = alpha[1:N]
    out[1:, 0] = alpha[1:N]
    for k in range(1, N):
        out[k, k] = alpha[k] ** 2 / (full[k] - alpha[k])
    return out


def x_matrix(chain: SpiderChain, beta) -> np.ndarray:
    """X = (Pi_0 Y_0 S_0)^{-1} from its entrywise closed form."""
    full = beta_vector(chain, beta)
    if full[0] < DIVISION_TOL:
        raise SingularGeronimus(f"beta_0 = {full[0]!r} is zero; Pi_0 Y_0 S_0 is singular")
    N = chain.N
    alpha = chain.alpha
    # w[i] = 1 - beta_i / alpha_i for the leg coordinates i = 1..N-1
    w = np.ones(N)
    w[1:] = 1.0 - full[1:N] / alpha[1:N]
    X = np.outer(w, w)
    for i in range(1, N):
        X[i, i] = w[i] * (1.0 - full[0] / alpha[i] - full[i] / alpha[i])
    return X / full[0]


class DarbouxChain:
    """The chain P_A P_R: block tridiagonal with a dense level-0 coupling."""

    def __init__(self, chain: SpiderChain, pair: FactorPair, weight: WeightMatrix | None = None):
        self.chain = chain
        self.pair = pair
        self.weight = weight

    @property
    def dim(self) -> int:
        return self.chain.N

    @property
    def beta(self) -> np.ndarray:
        return self.pair.beta

    def blocks(self, n: int) -> BlockTriple:
        p = self.pair
        A = p.S(n) @ p.X(n)
        if n == 0:
            return BlockTriple(0, A, p.S(0) @ p.Y(0), None)
        B = p.R(n) @ p.X(n - 1) + p.S(n) @ p.Y(n)
        C = p.R(n) @ p.Y(n - 1)
        return BlockTriple(n, A, B, C)

    def extra_transitions(self) -> np.ndarray:
        """d[i-1, j-1] = beta_j r_{1,i}: first state of leg i to first state of leg j (i != j)."""
        N = self.chain.N
        r1 = np.array([self.pair.value("r", 1, i) for i in range(1, N + 1)])
        d = np.outer(r1, self.pair.beta[1:])
        np.fill_diagonal(d, 0.0)
        return d

    def potential(self, n: int) -> np.ndarray:
        return darboux_potential(self.chain, self.pair, n)

    def polys(self, n_max: int, x) -> np.ndarray:
        return darboux_polys(self.chain, self.pair, n_max, x)


def darboux(chain: SpiderChain, pair: FactorPair, weight: WeightMatrix | None = None) -> DarbouxChain:
    return DarbouxChain(chain, pair, weight)


def darboux_potential(chain: SpiderChain, pair: FactorPair, n: int) -> np.ndarray:
    """Pi~_n = Y_n^T Pi_n S_n^{-1}; diagonal with positive entries."""
    if n == 0:
        full = pair.beta
        N = chain.N
        diag = [full[0]]
        for k in range(1, N):
            r1 = pair.value("r", 1, k)
            if r1 < DIVISION_TOL:
                raise DegenerateDivision(1, k, "pi")
            diag.append(full[k] / r1)
        return np.diag(diag)
    out = pair.Y(n).T @ chain.potential(n) @ np.linalg.inv(pair.S(n))
    return out


def darboux_polys(chain: SpiderChain, pair: FactorPair, n_max: int, x) -> np.ndarray:
    """Q~_n = (R_n Q_{n-1} + S_n Q_n) S_0^{-1}, with Q~_0 = I."""
    Q = eval_matrix_polys(chain, n_max, x)
    S0_inv = np.linalg.inv(pair.S(0))
    out = np.empty_like(Q)
    out[0] = np.eye(chain.N)
    for n in range(1, n_max + 1):
        U = np.matmul(pair.R(n), Q[n - 1]) + np.matmul(pair.S(n), Q[n])
        out[n] = np.matmul(U, S0_inv)
    return out


def darboux_polys_from_scalars(chain: SpiderChain, pair: FactorPair, n_max: int, x, legs_q=None) -> np.ndarray:
    """Q~_n assembled entry by entry from the scalar leg polynomials.

    ``legs_q[m - 1]`` is the (Q, Q0) pair of leg m evaluated up to degree
    n_max (computed from the chain when omitted).  Only needs n >= 1 values
    of R_n, S_n; Q~_0 is the identity.
    """
    N = chain.N
    if legs_q is None:
        legs_q = [eval_scalar_polys(chain, m, n_max, x) for m in range(1, N + 1)]
    x = np.asarray(x, dtype=float)
    out = np.zeros((n_max + 1,) + x.shape + (N, N))
    out[0] = np.eye(N)
    QN, QN0 = legs_q[N - 1]
    alpha = chain.alpha
    s1 = {k: pair.value("s", 1, k) for k in range(1, N)}
    r1 = {k: pair.value("r", 1, k) for k in range(1, N)}
    shift = sum(r1[k] * alpha[k] / s1[k] for k in range(1, N))
    for n in range(1, n_max + 1):
        sN, rN = pair.value("s", n, N), pair.value("r", n, N)
        RN0 = sN * QN0[n] + rN * QN0[n - 1]
        out[n, ..., 0, 0] = sN * QN[n] + rN * QN[n - 1] - RN0 * shift
        for k in range(1, N):
            Qk, Qk0 = legs_q[k - 1]
            sk, rk = pair.value("s", n + 1, k), pair.value("r", n + 1, k)
            main = sk * Qk[n] + rk * Qk[n - 1]
            out[n, ..., 0, k] = alpha[k] / s1[k] * RN0
            out[n, ..., k, k] = main / s1[k]
            out[n, ..., k, 0] = sk * Qk0[n] + rk * Qk0[n - 1] - r1[k] / s1[k] * main
    return out


def geronimus_weight(
    chain: SpiderChain,
    pair: FactorPair,
    weight: WeightMatrix,
    m_minus1: np.ndarray,
) -> WeightMatrix:
    """Spectral matrix of the Darboux chain: S_0 (W(x)/x + [X - M_{-1}] delta_0) S_0^T."""
    if weight.reduced is not None and weight.lo <= 0.0 <= weight.hi:
        raise ZeroInSupport(f"0 lies in the support [{weight.lo}, {weight.hi}]")
    if any(abs(atom.location) < DIVISION_TOL for atom in weight.atoms):
        raise ZeroInSupport("the weight has an atom at 0")
    S0 = pair.S(0)
    X = x_matrix(chain, pair.beta[1:])
    mass0 = S0 @ (X - np.asarray(m_minus1, dtype=float)) @ S0.T
    mass0 = 0.5 * (mass0 + mass0.T)
    if np.linalg.eigvalsh(mass0).min() < -1e-9:
        raise NegativeAtomMass(f"atom at 0 has eigenvalues {np.linalg.eigvalsh(mass0)}")
    atoms = [Atom(atom.location, S0 @ atom.mass @ S0.T / atom.location) for atom in weight.atoms]
    atoms.append(Atom(0.0, mass0))

    reduced = None
    if weight.reduced is not None:
        base = weight.reduced

        def reduced(x):
            vals = np.matmul(np.matmul(S0, base(x)), S0.T)
            return vals / np.asarray(x)[:, None, None]

    return WeightMatrix(
        weight.dim, weight.lo, weight.hi, reduced, tuple(atoms), p=weight.p, q=weight.q, label="geronimus"
    )
