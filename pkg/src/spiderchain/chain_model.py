"""Birth-death chains on a spider and their block tridiagonal transition operator.

The chain lives on a body vertex plus ``N`` half lines (legs).  Seen as a
quasi-birth-death process the state space is ``levels x phases`` with ``N``
phases per level:

* level 0, phase 0 is the body;
* level 0, phase m (1 <= m < N) is depth 1 on leg m;
* level n >= 1, phase 0 is depth n on leg N;
* level n >= 1, phase m is depth n + 1 on leg m.

All of that interleaving goes through :func:`encode_state` and
:func:`decode_state`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Protocol, Union

import numpy as np

from .errors import SizeOverflow, ValidationError, Violation

Number = Union[float, Fraction]

STOCHASTIC_TOL = 1e-12
DEFAULT_ROW_CAP = 20_000


def parse_number(value) -> Number:
    """Read a probability from JSON: ``"p/q"`` strings and ints stay exact."""
    if isinstance(value, bool):
        raise TypeError(f"not a number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except ValueError:
            return float(text)
    if isinstance(value, Fraction):
        return value
    raise TypeError(f"not a number: {value!r}")


def format_number(value: Number):
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"
    return float(value)


def is_exact(*values) -> bool:
    return all(isinstance(v, Fraction) for v in values)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LegRates:
    """Rates ``(a_k, b_k, c_k)`` for k = 1..K from ``prefix``, then ``tail`` forever."""

    prefix: tuple = ()
    tail: tuple = (Fraction(1, 2), Fraction(0), Fraction(1, 2))

    def rates(self, depth: int) -> tuple:
        if depth < 1:
            raise ValueError("leg depth starts at 1")
        if depth <= len(self.prefix):
            return self.prefix[depth - 1]
        return self.tail

    @property
    def prefix_length(self) -> int:
        return len(self.prefix)

    def triples(self):
        yield from ((k + 1, t) for k, t in enumerate(self.prefix))
        yield ("tail", self.tail)


@dataclass(frozen=True)
class SpiderParams:
    """Defining probabilities of a birth-death chain on a spider with N legs.

    ``alpha`` holds alpha_0..alpha_N (stay at the body, then enter leg m).
    ``legs[m - 1]`` holds the rates along leg m.
    """

    N: int
    alpha: tuple
    legs: tuple

    @classmethod
    def constant(cls, N, alpha, a, b, c) -> "SpiderParams":
        leg = LegRates(prefix=(), tail=(a, b, c))
        return cls(N=N, alpha=tuple(alpha), legs=tuple(leg for _ in range(N)))

    @classmethod
    def from_dict(cls, data: dict) -> "SpiderParams":
        N = int(data["N"])
        alpha = tuple(parse_number(v) for v in data["alpha"])
        legs = []
        for leg in data["legs"]:
            prefix = tuple(tuple(parse_number(v) for v in row) for row in leg.get("prefix", []))
            tail = tuple(parse_number(v) for v in leg["tail"])
            legs.append(LegRates(prefix=prefix, tail=tail))
        return cls(N=N, alpha=alpha, legs=tuple(legs))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "alpha": [format_number(v) for v in self.alpha],
            "legs": [
                {
                    "prefix": [[format_number(v) for v in row] for row in leg.prefix],
                    "tail": [format_number(v) for v in leg.tail],
                }
                for leg in self.legs
            ],
        }


def load_params(path) -> SpiderParams:
    with open(Path(path)) as fh:
        return SpiderParams.from_dict(json.load(fh))


def check(params: SpiderParams, allow_zero_alpha: bool = False) -> list:
    """Return every violated constraint of ``params`` (empty when valid)."""
    out = []
    N = params.N
    if N < 1:
        return [Violation("ShapeError", "N", f"N must be a positive integer, got {N}")]
    if len(params.alpha) != N + 1:
        out.append(Violation("ShapeError", "alpha", f"expected {N + 1} entries, got {len(params.alpha)}"))
    if len(params.legs) != N:
        out.append(Violation("ShapeError", "legs", f"expected {N} legs, got {len(params.legs)}"))
    if out:
        return out

    alpha = [float(v) for v in params.alpha]
    for m, v in enumerate(alpha):
        if v < 0 or v > 1:
            out.append(Violation("NegativeProbability", f"alpha[{m}]", f"alpha_{m} = {v!r} outside [0, 1]"))
    total = math.fsum(alpha)
    if abs(total - 1.0) > STOCHASTIC_TOL:
        out.append(Violation("SumViolation", "alpha", f"sum of alpha = {total!r}"))
    for m in range(1, N + 1):
        if alpha[m] <= 0 and not (allow_zero_alpha and m < N):
            out.append(Violation("DegenerateAlpha", f"alpha[{m}]", f"alpha_{m} must be positive"))

    for m, leg in enumerate(params.legs, start=1):
        for where, triple in leg.triples():
            label = f"leg {m}, depth {where}"
            if len(triple) != 3:
                out.append(Violation("ShapeError", label, "rates must be (a, b, c)"))
                continue
            a, b, c = (float(v) for v in triple)
            for name, v in zip("abc", (a, b, c)):
                if v < 0 or v > 1:
                    out.append(Violation("NegativeProbability", label, f"{name} = {v!r} outside [0, 1]"))
            s = math.fsum((a, b, c))
            if abs(s - 1.0) > STOCHASTIC_TOL:
                out.append(Violation("SumViolation", label, f"a + b + c = {s!r}"))
            if a <= 0:
                out.append(Violation("ZeroRate", label, "a must be positive"))
            if c <= 0:
                out.append(Violation("ZeroRate", label, "c must be positive"))
    return out


def validate(params: SpiderParams, allow_zero_alpha: bool = False) -> "SpiderChain":
    """Validate ``params`` and return an immutable chain handle.

    Raises :class:`ValidationError` listing every violated constraint.
    ``allow_zero_alpha`` admits alpha_m = 0 for legs m < N; such chains
    support the factorization machinery but not the potential coefficients.
    """
    violations = check(params, allow_zero_alpha=allow_zero_alpha)
    if violations:
        raise ValidationError(violations)
    return SpiderChain(params)


# ---------------------------------------------------------------------------
# validated chain and its blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockTriple:
    """Level-n blocks of a block tridiagonal operator; ``C`` is None at level 0."""

    level: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None

    def row_sums(self) -> np.ndarray:
        s = self.A.sum(axis=1) + self.B.sum(axis=1)
        if self.C is not None:
            s = s + self.C.sum(axis=1)
        return s


class BlockOperator(Protocol):
    """Anything exposing the blocks of a block tridiagonal matrix."""

    dim: int

    def blocks(self, n: int) -> BlockTriple: ...


def encode_state(N: int, leg: int, depth: int) -> tuple:
    """Map a spider vertex (leg, depth) to (level, phase). The body is depth 0."""
    if depth == 0:
        return (0, 0)
    if not 1 <= leg <= N:
        raise ValueError(f"leg must be in 1..{N}")
    if leg == N:
        return (depth, 0)
    return (depth - 1, leg)


def decode_state(N: int, level: int, phase: int) -> tuple:
    """Inverse of :func:`encode_state`; returns (leg, depth), body as (0, 0)."""
    if not 0 <= phase < N:
        raise ValueError(f"phase must be in 0..{N - 1}")
    if phase == 0:
        return (0, 0) if level == 0 else (N, level)
    return (phase, level + 1)


def flat_index(N: int, level: int, phase: int) -> int:
    return level * N + phase


@dataclass(frozen=True)
class SpiderChain:
    """A validated spider chain. Build with :func:`validate`."""

    params: SpiderParams
    alpha: np.ndarray = field(init=False, repr=False, compare=False)
    _legs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.array([float(v) for v in self.params.alpha]))
        legs = tuple(
            LegRates(
                prefix=tuple(tuple(float(v) for v in row) for row in leg.prefix),
                tail=tuple(float(v) for v in leg.tail),
            )
            for leg in self.params.legs
        )
        object.__setattr__(self, "_legs", legs)

    @property
    def N(self) -> int:
        return self.params.N

    @property
    def dim(self) -> int:
        return self.params.N

    def rates(self, leg: int, depth: int) -> tuple:
        """Float rates (a, b, c) at ``depth >= 1`` on ``leg`` (1..N)."""
        return self._legs[leg - 1].rates(depth)

    def prefix_length(self, leg: int) -> int:
        return self._legs[leg - 1].prefix_length

    def leg_recurrence(self, leg: int, n: int) -> tuple:
        """Coefficients (A_n, B_n, C_n) of the scalar recurrence of ``leg``.

        Leg N starts at the body (A_0 = alpha_N, B_0 = alpha_0); leg k < N
        is shifted by one depth.
        """
        N = self.N
        if leg == N:
            if n == 0:
                return (self.alpha[N], self.alpha[0], 0.0)
            return self.rates(N, n)
        return self.rates(leg, n + 1)

    def level_rates(self, n: int) -> np.ndarray:
        """Array of shape (N, 3): rates (a, b, c) of the phases at level n >= 1."""
        N = self.N
        out = np.empty((N, 3))
        out[0] = self.rates(N, n)
        for k in range(1, N):
            out[k] = self.rates(k, n + 1)
        return out

    def blocks(self, n: int) -> BlockTriple:
        if n < 0:
            raise ValueError("level must be nonnegative")
        N = self.N
        if n == 0:
            first = np.array([self.rates(k, 1) for k in range(1, N)]).reshape(N - 1, 3)
            B = np.zeros((N, N))
            B[0, :] = self.alpha[:N]
            B[1:, 0] = first[:, 2]
            B[np.arange(1, N), np.arange(1, N)] = first[:, 1]
            A = np.diag(np.concatenate(([self.alpha[N]], first[:, 0])))
            return BlockTriple(0, A, B, None)
        r = self.level_rates(n)
        return BlockTriple(n, np.diag(r[:, 0]), np.diag(r[:, 1]), np.diag(r[:, 2]))

    def potential_diagonal(self, n: int) -> np.ndarray:
        """Diagonal of Pi_n, i.e. (pi_{n,N}, pi_{n+1,1}, ..., pi_{n+1,N-1})."""
        if n < 0:
            raise ValueError("level must be nonnegative")
        N = self.N
        out = np.empty(N)
        # pi_{n,N} = alpha_N a_{1,N}...a_{n-1,N} / (c_{1,N}...c_{n,N})
        p = 1.0
        if n >= 1:
            p = self.alpha[N] / self.rates(N, 1)[2]
            for k in range(1, n):
                a_k = self.rates(N, k)[0]
                c_next = self.rates(N, k + 1)[2]
                p *= a_k / c_next
        out[0] = p
        # pi_{n+1,m} = alpha_m a_{1,m}...a_{n,m} / (c_{1,m}...c_{n+1,m})
        for m in range(1, N):
            p = self.alpha[m] / self.rates(m, 1)[2]
            for k in range(1, n + 1):
                p *= self.rates(m, k)[0] / self.rates(m, k + 1)[2]
            out[m] = p
        return out

    def potential(self, n: int) -> np.ndarray:
        return np.diag(self.potential_diagonal(n))

    def symmetrizer(self, n: int) -> np.ndarray:
        """T_n with T_n T_n^T = Pi_n."""
        return np.diag(np.sqrt(self.potential_diagonal(n)))

    @property
    def is_constant(self) -> bool:
        """True when every leg has the same rates at every depth."""
        tails = {leg.tail for leg in self._legs}
        if len(tails) != 1:
            return False
        tail = next(iter(tails))
        return all(all(row == tail for row in leg.prefix) for leg in self._legs)


def blocks(chain: SpiderChain, n: int) -> BlockTriple:
    return chain.blocks(n)


def potential(chain: SpiderChain, n: int) -> np.ndarray:
    return chain.potential(n)


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedOperator:
    L: int
    N: int
    matrix: np.ndarray

    def block(self, i: int, j: int) -> np.ndarray:
        N = self.N
        return self.matrix[i * N:(i + 1) * N, j * N:(j + 1) * N]


def truncate(op: BlockOperator, L: int, cap: int = DEFAULT_ROW_CAP) -> TruncatedOperator:
    """Dense assembly of block levels 0..L of a block tridiagonal operator."""
    if L < 0:
        raise ValueError("truncation level must be nonnegative")
    N = op.dim
    size = (L + 1) * N
    if size > cap:
        raise SizeOverflow(f"{size} rows exceeds the cap of {cap}")
    P = np.zeros((size, size))
    for n in range(L + 1):
        t = op.blocks(n)
        sl = slice(n * N, (n + 1) * N)
        P[sl, sl] = t.B
        if n < L:
            P[sl, (n + 1) * N:(n + 2) * N] = t.A
        if n > 0:
            P[sl, (n - 1) * N:n * N] = t.C
    return TruncatedOperator(L=L, N=N, matrix=P)

