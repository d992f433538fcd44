"""Closed forms for the random walk on a spider with constant rates.

Every leg moves out with probability ``a``, stays with ``b`` and moves in
with ``c``; the body stays with alpha_0 and enters leg m with alpha_m.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import integrate as sp_integrate

from .chain_model import SpiderChain, SpiderParams, is_exact, validate
from .errors import (
    DegenerateDirection,
    OutOfSupport,
    PoleTooClose,
    ZeroInSupport,
)
from .quadrature import Atom, WeightMatrix
from .stieltjes import branch_sqrt, cf_limit, constant_transform

GUARD = 1e-13
EQUAL_RATE_TOL = 1e-14


@dataclass(frozen=True)
class RWParams:
    N: int
    a: float | Fraction
    b: float | Fraction
    c: float | Fraction
    alpha: tuple

    @classmethod
    def from_chain(cls, chain: SpiderChain) -> "RWParams":
        if not chain.is_constant:
            raise ValueError("chain does not have constant rates")
        a, b, c = chain.params.legs[0].tail
        return cls(N=chain.N, a=a, b=b, c=c, alpha=tuple(chain.params.alpha))

    def to_params(self) -> SpiderParams:
        return SpiderParams.constant(self.N, self.alpha, self.a, self.b, self.c)

    def chain(self) -> SpiderChain:
        return validate(self.to_params())

    @property
    def rates(self) -> tuple:
        return float(self.a), float(self.b), float(self.c)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([float(v) for v in self.alpha])


class SupportInterval(NamedTuple):
    lower: float
    upper: float


def support(params: RWParams) -> SupportInterval:
    a, _, c = params.rates
    return SupportInterval(1.0 - (math.sqrt(a) + math.sqrt(c)) ** 2, 1.0 - (math.sqrt(a) - math.sqrt(c)) ** 2)


def _linear(params: RWParams, x):
    a, _, c = params.rates
    a0 = params.alphas[0]
    return (1.0 - a - a0) * x + c - a0 * (1.0 - a + c - a0)


def second_atom_location(params: RWParams) -> float:
    a, _, c = params.rates
    a0 = params.alphas[0]
    return (a0 * (1.0 - a + c - a0) - c) / (1.0 - a - a0)


def _r_poly(params: RWParams, x):
    a, b, c = params.rates
    a0 = params.alphas[0]
    return x * x - (a0 + b) * x - c + a0 * (1.0 - a)


def _p_poly(params: RWParams, z):
    a, b, c = params.rates
    a0 = params.alphas[0]
    return (
        -z ** 3
        + (a0 + 2 * b) * z ** 2
        - (a0 * (2 - 2 * a - c) + b * b - 2 * a * c - c) * z
        - b * c
        + a0 * (b - a * (1 - a + c))
    )


def _block_matrix(N, b11, b12, diag22, ones22):
    dtype = np.result_type(b11, b12, diag22, ones22)
    out = np.empty((N, N), dtype=dtype)
    out[0, 0] = b11
    out[0, 1:] = b12
    out[1:, 0] = b12
    out[1:, 1:] = np.diag(diag22) + ones22
    return out


def rw_leg_transforms(params: RWParams):
    """Closed-form leg transforms B(z; omega_k) as a callable (leg, z)."""
    a, b, c = params.rates
    alpha = params.alphas
    N = params.N

    def transform(leg, z):
        assoc = constant_transform(a, b, c, z)
        if leg == N:
            return -1.0 / (z - alpha[0] + alpha[N] * c * assoc)
        return assoc

    return transform


def _check_pole(params: RWParams, z: complex) -> None:
    lo, hi = support(params)
    if abs(z.imag) <= 1e-9 and lo - 1e-9 <= z.real <= hi + 1e-9:
        raise PoleTooClose(f"z={z!r} lies on the support [{lo}, {hi}]")
    if abs(2.0 * (1.0 - z) * _linear(params, z)) < 1e-9:
        raise PoleTooClose(f"z={z!r} is at a pole of the rational prefactor")


def rw_stieltjes(params: RWParams, z) -> np.ndarray:
    """Closed-form Stieltjes transform of the random walk's weight matrix.

    Written through the common leg transform t(z) so it stays accurate for
    large |z|; algebraically identical to :func:`rw_stieltjes_rationalized`.
    """
    z = complex(z)
    _check_pole(params, z)
    a, b, c = params.rates
    a0 = params.alphas[0]
    N = params.N
    t = complex(constant_transform(a, b, c, z))
    b11 = -1.0 / (z - a0 + c * t * (1.0 - a0))
    ct = c * t
    return _block_matrix(N, b11, -b11 * ct, ct / params.alphas[1:N], np.full((N - 1, N - 1), b11 * ct * ct))


def rw_stieltjes_rationalized(params: RWParams, z) -> np.ndarray:
    """The same transform with the square root isolated in each block (loses accuracy for |z| >> 1)."""
    z = complex(z)
    _check_pole(params, z)
    a, b, c = params.rates
    lo, hi = support(params)
    denom = 2.0 * (1.0 - z) * _linear(params, z)
    a0 = params.alphas[0]
    N = params.N
    s = complex(branch_sqrt(z, lo, hi))
    b11 = ((1 - 2 * a - a0) * z - b + a0 * (1 + a - c) + (1 - a0) * s) / denom
    b12 = (2 * c - a0 * (1 - a + c) + (b + a0) * z - z * z + (z - a0) * s) / denom
    diag22 = (b - z + s) / (2 * a) / params.alphas[1:N]
    ones22 = (_p_poly(params, z) + _r_poly(params, z) * s) / (a * denom)
    return _block_matrix(N, b11, b12, diag22, np.full((N - 1, N - 1), ones22))


def _is_null(params: RWParams) -> bool:
    if is_exact(params.a, params.c):
        return params.a == params.c
    return abs(float(params.a) - float(params.c)) <= EQUAL_RATE_TOL


def _reduced_density(params: RWParams):
    """Density divided by its endpoint factor, vectorized over x."""
    a, _, c = params.rates
    lo, hi = support(params)
    h = 0.5 * (hi - lo)
    alpha = params.alphas
    a0 = alpha[0]
    N = params.N
    null = _is_null(params)
    inv_alpha = 1.0 / alpha[1:N]

    def reduced(x):
        x = np.array(x, dtype=float, copy=True)
        denom = _linear(params, x) if null else (1.0 - x) * _linear(params, x)
        near = np.abs(denom) < GUARD
        if near.any():
            x[near] += 1e-10 * h
            denom = _linear(params, x) if null else (1.0 - x) * _linear(params, x)
        scale = 1.0 / (2.0 * np.pi * denom)
        first22 = (1.0 - x) / (2 * np.pi * a) if null else np.full_like(x, 1.0 / (2 * np.pi * a))
        out = np.zeros((len(x), N, N))
        out[:, 0, 0] = (1.0 - a0) * scale
        out[:, 0, 1:] = ((x - a0) * scale)[:, None]
        out[:, 1:, 0] = ((x - a0) * scale)[:, None]
        out[:, 1:, 1:] = (_r_poly(params, x) * scale / a)[:, None, None]
        idx = np.arange(1, N)
        out[:, idx, idx] += first22[:, None] * inv_alpha[None, :]
        return out

    return reduced, (-0.5 if null else 0.5), 0.5


def rw_density(params: RWParams, x: float) -> np.ndarray:
    """Absolutely continuous part of the weight matrix at a point of the support."""
    lo, hi = support(params)
    if not lo <= x <= hi:
        raise OutOfSupport(f"x={x!r} outside [{lo}, {hi}]")
    reduced, p, q = _reduced_density(params)
    factor = (hi - x) ** p * (x - lo) ** q if not (p < 0 and x == hi) else math.inf
    return factor * reduced(np.array([x]))[0]


@dataclass(frozen=True)
class RWAtom:
    location: float
    coefficient: float
    direction: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        return self.coefficient * np.outer(self.direction, self.direction)


@dataclass(frozen=True)
class AtomReport:
    at_one: RWAtom | None
    at_z2: RWAtom | None

    @property
    def atoms(self) -> tuple:
        return tuple(x for x in (self.at_one, self.at_z2) if x is not None)


def rw_atoms(params: RWParams, strict: bool = True) -> AtomReport:
    """Point masses of the weight matrix.

    Mass at 1 exists iff c > a; mass at z2 exists iff (1 - alpha_0 - a)^2 > ac.
    When 1 - alpha_0 - a vanishes the z2 direction is undefined; ``strict``
    raises, otherwise the (then absent) z2 atom is simply omitted.
    """
    a, _, c = params.rates
    a0 = params.alphas[0]
    N = params.N
    gap = 1.0 - a0 - a
    at_one = None
    if c > a and not _is_null(params):
        at_one = RWAtom(1.0, (c - a) / (c - a + 1.0 - a0), np.ones(N))
    if abs(gap) < GUARD and strict:
        raise DegenerateDirection("1 - alpha_0 - a vanishes; the second atom direction is undefined")
    at_z2 = None
    if abs(gap) >= GUARD and gap * gap > a * c:
        coefficient = (gap * gap - a * c) / (gap * (gap + c))
        direction = np.concatenate(([-1.0], np.full(N - 1, c / gap)))
        at_z2 = RWAtom(second_atom_location(params), coefficient, direction)
    return AtomReport(at_one, at_z2)


def rw_weight(params: RWParams) -> WeightMatrix:
    lo, hi = support(params)
    reduced, p, q = _reduced_density(params)
    atoms = tuple(Atom(x.location, x.mass) for x in rw_atoms(params, strict=False).atoms)
    return WeightMatrix(params.N, lo, hi, reduced, atoms, p=p, q=q, label="random walk on a spider")


def rw_m_minus1(params: RWParams) -> np.ndarray:
    """Integral of dW(x) / x in closed form; requires 0 outside the support."""
    a, b, c = params.rates
    lo, hi = support(params)
    if lo <= 0.0:
        raise ZeroInSupport(f"support [{lo}, {hi}] contains 0")
    report = rw_atoms(params, strict=False)
    if any(abs(x.location) < GUARD for x in report.atoms):
        raise ZeroInSupport("the weight has an atom at 0")
    a0 = params.alphas[0]
    N = params.N
    root = math.sqrt(hi * lo)
    den = 2.0 * (c - a0 * (1 - a + c - a0))
    mu11 = (a0 * (1 + a - c) - b - (1 - a0) * root) / den
    mu12 = (2 * c - a0 * (1 - a + c) + a0 * root) / den
    diag22 = (b - root) / (2 * a) / params.alphas[1:N]
    ones22 = (a0 * (b - a * (1 - a + c)) - b * c - (a0 * (1 - a) - c) * root) / (a * den)
    return _block_matrix(N, mu11, mu12, diag22, np.full((N - 1, N - 1), ones22))


def chebyshev_tu(n_max: int, y):
    """T_0..T_{n_max} and U_{-1}..U_{n_max} at y via their three-term recurrences."""
    y = np.asarray(y, dtype=float)
    T = np.zeros((n_max + 1,) + y.shape)
    U = np.zeros((n_max + 2,) + y.shape)  # U[k] holds U_{k-1}
    T[0] = 1.0
    U[1] = 1.0
    if n_max >= 1:
        T[1] = y
        U[2] = 2 * y
    for n in range(1, n_max):
        T[n + 1] = 2 * y * T[n] - T[n - 1]
        U[n + 2] = 2 * y * U[n + 1] - U[n]
    return T, U


def rw_polys(params: RWParams, n_max: int, x) -> np.ndarray:
    """Q_0..Q_{n_max} at x assembled from the Chebyshev closed forms."""
    a, b, c = params.rates
    alpha = params.alphas
    N = params.N
    aN, a0 = alpha[N], alpha[0]
    x = np.asarray(x, dtype=float)
    y = (x - b) / (2 * math.sqrt(a * c))
    T, U = chebyshev_tu(n_max, y)
    ratio = c / a
    out = np.zeros((n_max + 1,) + x.shape + (N, N))
    for n in range(n_max + 1):
        Un, Un1 = U[n + 1], U[n]
        qN = (ratio ** (n / 2) / aN) * (
            2 * (aN - a) * T[n] + (2 * a - aN) * Un + math.sqrt(a / c) * (b - a0) * Un1
        )
        qN0 = -(ratio ** ((n - 1) / 2)) / aN * Un1
        qk = ratio ** (n / 2) * Un
        qk0 = -(ratio ** ((n + 1) / 2)) * Un1
        out[n, ..., 0, 0] = qN
        for k in range(1, N):
            out[n, ..., 0, k] = alpha[k] * qN0
            out[n, ..., k, 0] = qk0
            out[n, ..., k, k] = qk
    return out


class Recurrence(str, enum.Enum):
    TRANSIENT = "transient"
    NULL_RECURRENT = "null_recurrent"
    POSITIVE_RECURRENT = "positive_recurrent"


def rw_classify(params: RWParams) -> Recurrence:
    if _is_null(params):
        return Recurrence.NULL_RECURRENT
    if is_exact(params.a, params.c):
        bigger = params.a > params.c
    else:
        bigger = float(params.a) > float(params.c)
    return Recurrence.TRANSIENT if bigger else Recurrence.POSITIVE_RECURRENT


class Thresholds(NamedTuple):
    values: tuple
    feasible: bool
    method: str


def period_two_value(a: float, c: float) -> float | None:
    """Value of 1 - c/(1 - a/(1 - c/(1 - ...))), or None when it has no real closed form."""
    disc = (1 + c - a) ** 2 - 4 * c
    if disc < 0:
        return None
    return 0.5 * (1 + a - c + math.sqrt(disc))


def rw_thresholds(params: RWParams) -> Thresholds:
    """Lower bounds H_m on the free parameters of the reflecting-absorbing factorization."""
    a, _, c = params.rates
    alpha = params.alphas
    if is_exact(params.a, params.c):
        disc = float((1 + params.c - params.a) ** 2 - 4 * params.c)
    else:
        disc = (1 + c - a) ** 2 - 4 * c
        if -EQUAL_RATE_TOL < disc < 0:
            disc = 0.0
    if disc >= 0:
        root = math.sqrt(disc)
        values = tuple(float(alpha[m] * (1 + a - c - root) / (2 * a)) for m in range(1, params.N + 1))
        feasible = alpha[0] > 0.5 * (1 - a + c - root)
        return Thresholds(values, bool(feasible), "closed_form")
    chain = params.chain()
    values = tuple(cf_limit(chain, m).value for m in range(1, params.N + 1))
    return Thresholds(values, sum(values) < 1.0, "convergents")


def rw_darboux_level0(params: RWParams, beta) -> tuple:
    """Closed forms of the level-0 blocks (B0, A0) of the Darboux transformed walk.

    ``beta`` lists beta_1..beta_N; beta_0 is 1 - sum(beta).
    """
    _, _, c = params.rates
    alpha = params.alphas
    N = params.N
    beta = np.asarray(beta, dtype=float)
    full = np.concatenate(([1.0 - beta.sum()], beta))
    B0 = np.zeros((N, N))
    A0 = np.zeros((N, N))
    B0[0, :] = full[:N]
    A0[0, 0] = full[N]
    for k in range(1, N):
        keep = 1.0 - alpha[k] / full[k]
        B0[k, :] = full[:N] * keep
        B0[k, k] = full[k] - alpha[k] + c * alpha[k] / (full[k] - alpha[k])
        A0[k, 0] = full[N] * keep
        A0[k, k] = alpha[k] / full[k] - c * alpha[k] / (full[k] - alpha[k])
    return B0, A0


def recurrence_diagnostic(params: RWParams, phase: int = 0, cutoffs=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6)) -> dict:
    """Numerical look at the recurrence integral of dW_jj / (1 - x).

    Integrates the continuous part up to 1 - eps for each cutoff and adds the
    atoms.  Growth like eps^(-1/2) signals divergence (null recurrence); an
    atom at 1 makes the integral infinite outright.  This is a diagnostic
    only; classification itself comes from :func:`rw_classify`.
    """
    lo, hi = support(params)
    reduced, p, q = _reduced_density(params)
    T0_inv = 1.0 / math.sqrt(params.chain().potential_diagonal(0)[phase])

    def integrand(x):
        dens = (hi - x) ** p * (x - lo) ** q * reduced(np.array([x]))[0, phase, phase]
        return dens / (1.0 - x)

    atoms = rw_atoms(params, strict=False)
    atom_part = 0.0
    for atom in atoms.atoms:
        if abs(1.0 - atom.location) < GUARD:
            atom_part = math.inf
        else:
            atom_part += atom.mass[phase, phase] / (1.0 - atom.location)
    values = []
    for eps in cutoffs:
        top = min(hi, 1.0 - eps)
        with warnings.catch_warnings():
            # near a divergent endpoint quad warns; the growth across cutoffs is the signal
            warnings.simplefilter("ignore", sp_integrate.IntegrationWarning)
            val, _ = sp_integrate.quad(integrand, lo, top, limit=400)
        values.append((eps, (val + atom_part) * T0_inv))
    finite = [v for _, v in values if math.isfinite(v)]
    growth = finite[-1] / finite[0] if len(finite) == len(values) and finite[0] > 0 else math.inf
    return {
        "phase": phase,
        "values": values,
        "growth": growth,
        "divergent": (not math.isfinite(growth)) or growth > 2.0,
    }


def rw_darboux(params: RWParams, beta, L: int = 100):
    """Darboux transformed walk together with its Geronimus weight built from the closed forms."""
    from .factorization import darboux, geronimus_weight, ul_factorize

    chain = params.chain()
    pair = ul_factorize(chain, beta, L=L)
    weight = geronimus_weight(chain, pair, rw_weight(params), rw_m_minus1(params))
    return darboux(chain, pair, weight)
