"""Stieltjes transforms, their block assembly, and the leg continued fractions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .chain_model import SpiderChain
from .errors import DepthExceeded, HypothesisViolated, PoleTooClose, SingularAssembly
from .quadrature import DEFAULT_QUAD_TOL, QuadratureRule, WeightMatrix, integrate

POLE_DISTANCE = 1e-9
SINGULAR_TOL = 1e-13
CF_TOL = 1e-14
CF_MAX_DEPTH = 10**6
RESCALE_BELOW = 1e-150


def branch_sqrt(z, lo: float, hi: float):
    """sqrt((z - hi)(z - lo)) analytic off [lo, hi] and ~ z at infinity."""
    z = np.asarray(z, dtype=complex)
    return np.sqrt(z - hi) * np.sqrt(z - lo)


def constant_transform(a: float, b: float, c: float, z):
    """Stieltjes transform of the spectral measure of x p_n = a p_{n+1} + b p_n + c p_{n-1}.

    Equal to (b - z + s) / (2ac) with s = sqrt((z - b)^2 - 4ac); the form
    2 / (b - z - s) avoids cancellation for large |z|.
    """
    root = 2.0 * np.sqrt(a * c)
    s = branch_sqrt(z, b - root, b + root)
    return 2.0 / (b - z - s)


def leg_transform_relations(chain: SpiderChain, leg: int, assoc_transform, z):
    """B(z; omega_leg) from the transform of the leg's associated measure."""
    N = chain.N
    if leg == N:
        shift = chain.alpha[0]
        coupling = chain.alpha[N] * chain.rates(N, 1)[2]
    else:
        a1, b1, _ = chain.rates(leg, 1)
        shift = b1
        coupling = a1 * chain.rates(leg, 2)[2]
    denom = z - shift + coupling * assoc_transform
    if np.any(np.abs(denom) < SINGULAR_TOL):
        raise SingularAssembly(f"leg {leg}: vanishing denominator at z={z!r}")
    return -1.0 / denom


def _tail_start(chain: SpiderChain, leg: int) -> int:
    # first n from which the leg's recurrence coefficients are all the tail rates
    if leg == chain.N:
        return chain.prefix_length(leg) + 1
    return chain.prefix_length(leg)


def leg_stieltjes(chain: SpiderChain, leg: int, z):
    """B(z; omega_leg) for a prefix-plus-constant-tail leg.

    The tail transform is closed form; the prefix is unwound by the
    backward continued fraction B^(n) = -1 / (z - B_n + A_n C_{n+1} B^(n+1)).
    """
    start = _tail_start(chain, leg)
    if leg == chain.N:
        a, b, c = chain.rates(leg, start)
    else:
        a, b, c = chain.rates(leg, start + 1)
    value = constant_transform(a, b, c, z)
    for n in range(start - 1, -1, -1):
        A, B, _ = chain.leg_recurrence(leg, n)
        C_next = chain.leg_recurrence(leg, n + 1)[2]
        value = -1.0 / (z - B + A * C_next * value)
    return value


def assemble_stieltjes(chain: SpiderChain, leg_transforms: Callable, z) -> np.ndarray:
    """Stieltjes transform of the weight matrix from the N scalar leg transforms.

    ``leg_transforms(leg, z)`` must return B(z; omega_leg) for leg = 1..N.
    """
    N = chain.N
    z = complex(z)
    BN = complex(leg_transforms(N, z))
    if N == 1:
        return np.array([[BN]])
    alpha = chain.alpha[1:N]
    cvec = np.array([chain.rates(k, 1)[2] for k in range(1, N)])
    Bd = np.array([complex(leg_transforms(k, z)) for k in range(1, N)])
    denom = 1.0 / BN - np.sum(alpha * Bd * cvec)
    if abs(denom) < SINGULAR_TOL:
        raise SingularAssembly(f"scalar factor has a vanishing denominator at z={z!r}")
    frak_b = 1.0 / denom
    Bc = Bd * cvec
    out = np.empty((N, N), dtype=complex)
    out[0, 0] = frak_b
    out[0, 1:] = -frak_b * Bc
    out[1:, 0] = -frak_b * Bc
    out[1:, 1:] = np.diag(Bd * cvec / alpha) + frak_b * np.outer(Bc, Bc)
    return out


def chain_stieltjes(chain: SpiderChain, z) -> np.ndarray:
    """Transform of the chain's weight matrix, with every leg transform computed by :func:`leg_stieltjes`."""
    return assemble_stieltjes(chain, lambda leg, w: leg_stieltjes(chain, leg, w), z)


def _check_pole(weight: WeightMatrix, z: complex) -> None:
    if abs(z.imag) > POLE_DISTANCE:
        return
    x = z.real
    points = [atom.location for atom in weight.atoms]
    if weight.reduced is not None and weight.lo - POLE_DISTANCE <= x <= weight.hi + POLE_DISTANCE:
        raise PoleTooClose(f"z={z!r} lies on the support [{weight.lo}, {weight.hi}]")
    for p in points:
        if abs(x - p) <= POLE_DISTANCE:
            raise PoleTooClose(f"z={z!r} is within {POLE_DISTANCE} of an atom at {p}")


def stieltjes_weight(
    weight: WeightMatrix,
    z,
    rule: QuadratureRule | None = None,
    tol: float = DEFAULT_QUAD_TOL,
) -> np.ndarray:
    """Integral of dW(x) / (x - z) by quadrature plus exact atom terms."""
    z = complex(z)
    _check_pole(weight, z)
    value = integrate(weight, rule, scalar=lambda x: 1.0 / (x - z), tol=tol)
    return np.asarray(value, dtype=complex)


# ---------------------------------------------------------------------------
# continued fractions
# ---------------------------------------------------------------------------


def _cf_coefficient(chain: SpiderChain, leg: int, index: int) -> float:
    """Partial numerator of the leg continued fraction at position ``index`` >= 1.

    Odd positions 2n+1 carry a_{n,m} (a_{0,m} = alpha_m); even 2n carry c_{n,m}.
    """
    n, odd = divmod(index, 2)
    if odd:
        return chain.alpha[leg] if n == 0 else chain.rates(leg, n)[0]
    return chain.rates(leg, n)[2]


@dataclass(frozen=True)
class ConvergentState:
    """Numerators, denominators and values of the first convergents of one leg.

    ``numerators[k]`` holds A_{k-1} (so index 0 is A_{-1}); likewise for
    ``denominators``.  ``values[n]`` is h_n for n = 0..depth.  Deep
    convergents whose denominators would underflow are rescaled jointly;
    ``log_scale[k]`` is log10 of the factor applied to entry k (0 when untouched).
    """

    leg: int
    numerators: np.ndarray
    denominators: np.ndarray
    values: np.ndarray
    hypothesis_holds: bool
    monotone: bool
    first_failure: int | None
    log_scale: np.ndarray

    def A(self, n: int) -> float:
        return float(self.numerators[n + 1])

    def B(self, n: int) -> float:
        return float(self.denominators[n + 1])


def convergents(chain: SpiderChain, leg: int, depth: int) -> ConvergentState:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    A = np.empty(depth + 2)
    B = np.empty(depth + 2)
    A[0], A[1] = -1.0, 0.0
    B[0], B[1] = 0.0, 1.0
    log_scale = np.zeros(depth + 2)
    for k in range(1, depth + 1):
        coef = _cf_coefficient(chain, leg, k)
        A[k + 1] = A[k] - coef * A[k - 1]
        B[k + 1] = B[k] - coef * B[k - 1]
        if 0.0 < abs(B[k + 1]) < RESCALE_BELOW:
            # joint rescaling keeps every ratio and sign
            f = 1.0 / abs(B[k + 1])
            A[k:k + 2] *= f
            B[k:k + 2] *= f
            log_scale[k:] += np.log10(f)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = A[1:] / B[1:]
    failure = None
    for n in range(1, depth + 1):
        if not 0.0 < A[n + 1] < B[n + 1]:
            failure = n
            break
    # strictly increasing until the values settle at the working precision
    diffs = np.diff(h)
    monotone = bool(np.all(diffs > -4 * np.finfo(float).eps)) and bool(np.all(h < 1.0))
    return ConvergentState(
        leg=leg,
        numerators=A,
        denominators=B,
        values=h,
        hypothesis_holds=failure is None,
        monotone=monotone,
        first_failure=failure,
        log_scale=log_scale,
    )


class CFLimit(NamedTuple):
    value: float
    depth: int
    certified: bool


def cf_limit(
    chain: SpiderChain,
    leg: int,
    tol: float = CF_TOL,
    max_depth: int = CF_MAX_DEPTH,
) -> CFLimit:
    """Limit H_leg of the leg continued fraction.

    Convergence is certified, not assumed: every convergent must satisfy
    0 < A_n < B_n, which makes the sequence strictly increasing and bounded
    by 1.  Iteration stops once successive convergents differ by less than
    ``tol`` and then runs until the floating point value stops moving.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if chain.alpha[leg] == 0.0:
        return CFLimit(0.0, 0, True)
    A_prev, A_cur = -1.0, 0.0
    B_prev, B_cur = 0.0, 1.0
    h_prev = 0.0
    converged_at = None
    for k in range(1, max_depth + 1):
        coef = _cf_coefficient(chain, leg, k)
        A_prev, A_cur = A_cur, A_cur - coef * A_prev
        B_prev, B_cur = B_cur, B_cur - coef * B_prev
        if not 0.0 < A_cur < B_cur:
            raise HypothesisViolated(leg, k, A_cur, B_cur)
        if B_cur < RESCALE_BELOW:
            scale = 1.0 / B_cur
            A_prev, A_cur, B_prev, B_cur = A_prev * scale, A_cur * scale, B_prev * scale, B_cur * scale
        h = A_cur / B_cur
        if converged_at is None:
            if abs(h - h_prev) < tol:
                converged_at = k
        elif h <= h_prev or k - converged_at >= 64:
            return CFLimit(max(h, h_prev), k, True)
        h_prev = h
    if converged_at is not None:
        return CFLimit(h_prev, max_depth, True)
    raise DepthExceeded(f"leg {leg}: no convergence to {tol} within {max_depth} convergents")
