"""Ground truth independent of the spectral machinery.

``power_block`` raises a dense truncation of the transition matrix to a power.
``simulate`` walks the chain directly from its defining probabilities.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chain_model import DEFAULT_ROW_CAP, SpiderChain, decode_state, encode_state, truncate
from .errors import IndexMismatch, TruncationNotExact


def exact_truncation(i: int, j: int, n: int) -> int:
    """Smallest truncation level the oracle treats as exact for block (i, j) of P^n."""
    return max(i, j) + n + 1


def power_matrix(op, L: int, n: int, cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    P = truncate(op, L, cap=cap).matrix
    return np.linalg.matrix_power(P, n)


def power_block(op, L: int, n: int, i: int, j: int, cap: int = DEFAULT_ROW_CAP) -> np.ndarray:
    """(i, j) block of the n-th power of the level-L truncation."""
    if min(i, j, n) < 0:
        raise ValueError("levels and steps must be nonnegative")
    if max(i, j) > L:
        raise ValueError(f"block ({i}, {j}) lies outside truncation level {L}")
    if L < exact_truncation(i, j, n):
        warnings.warn(
            f"L={L} is below max(i, j) + n + 1 = {exact_truncation(i, j, n)}; block may be inexact",
            TruncationNotExact,
            stacklevel=2,
        )
    N = op.dim
    Pn = power_matrix(op, L, n, cap=cap)
    return Pn[i * N:(i + 1) * N, j * N:(j + 1) * N]


def distribution_row(chain: SpiderChain, start: tuple, steps: int) -> np.ndarray:
    """Exact law after ``steps`` steps from (level, phase), flattened over levels 0..steps + start level."""
    level, phase = start
    L = level + steps + 1
    Pn = power_matrix(chain, L, steps)
    return Pn[level * chain.N + phase]


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalDistribution:
    counts: dict
    paths: int
    seed: int
    steps: int
    workers: int

    def probabilities(self) -> dict:
        return {state: count / self.paths for state, count in self.counts.items()}

    def as_vector(self, N: int, size: int) -> np.ndarray:
        vec = np.zeros(size)
        for (level, phase), count in self.counts.items():
            idx = level * N + phase
            if idx >= size:
                raise IndexMismatch(f"state ({level}, {phase}) is outside the {size}-state row")
            vec[idx] = count
        return vec / self.paths


def _leg_tables(chain: SpiderChain, max_depth: int) -> np.ndarray:
    """Array (N + 1, max_depth + 1, 3) of rates; row 0 unused (the body)."""
    N = chain.N
    out = np.zeros((N + 1, max_depth + 1, 3))
    for m in range(1, N + 1):
        for d in range(1, max_depth + 1):
            out[m, d] = chain.rates(m, d)
    return out


def _walk(chain: SpiderChain, leg: np.ndarray, depth: np.ndarray, steps: int, rng: np.random.Generator):
    N = chain.N
    rates = _leg_tables(chain, int(depth.max()) + steps + 1)
    body_cdf = np.cumsum(chain.alpha)
    for _ in range(steps):
        u = rng.random(len(leg))
        at_body = depth == 0
        if at_body.any():
            choice = np.searchsorted(body_cdf, u[at_body], side="right")
            choice = np.minimum(choice, N)
            leg[at_body] = choice
            depth[at_body] = (choice > 0).astype(depth.dtype)
        on_leg = ~at_body
        if on_leg.any():
            r = rates[leg[on_leg], depth[on_leg]]
            uu = u[on_leg]
            move = np.where(uu < r[:, 0], 1, np.where(uu < r[:, 0] + r[:, 1], 0, -1))
            new_depth = depth[on_leg] + move
            new_leg = np.where(new_depth == 0, 0, leg[on_leg])
            depth[on_leg] = new_depth
            leg[on_leg] = new_leg
    return leg, depth


def _run_chunk(chain, start_leg, start_depth, steps, paths, seed_seq):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    leg = np.full(paths, start_leg, dtype=np.int64)
    depth = np.full(paths, start_depth, dtype=np.int64)
    leg, depth = _walk(chain, leg, depth, steps, rng)
    N = chain.N
    # encode (leg, depth) -> flat (level, phase) index
    level = np.where(depth == 0, 0, np.where(leg == N, depth, depth - 1))
    phase = np.where((depth == 0) | (leg == N), 0, leg)
    flat = level * N + phase
    return np.bincount(flat, minlength=N * (int(start_depth) + steps + 2))


def simulate(
    chain: SpiderChain,
    start: tuple = (0, 0),
    steps: int = 5,
    paths: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
) -> EmpiricalDistribution:
    """Simulate ``paths`` independent trajectories of the spider chain.

    Worker w draws from a Philox stream spawned from ``seed``; the result
    depends only on (seed, workers, paths, steps, start).
    """
    if paths < 1:
        raise ValueError("need at least one path")
    if workers < 1:
        raise ValueError("need at least one worker")
    N = chain.N
    start_leg, start_depth = decode_state(N, *start)
    streams = np.random.SeedSequence(seed).spawn(workers)
    sizes = [paths // workers + (1 if w < paths % workers else 0) for w in range(workers)]
    jobs = [(chain, start_leg, start_depth, steps, sizes[w], streams[w]) for w in range(workers) if sizes[w]]
    if workers == 1:
        results = [_run_chunk(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _run_chunk(*job), jobs))
    width = max(len(r) for r in results)
    total = np.zeros(width, dtype=np.int64)
    for r in results:
        total[: len(r)] += r
    counts = {}
    for idx in np.nonzero(total)[0]:
        counts[(int(idx) // N, int(idx) % N)] = int(total[idx])
    return EmpiricalDistribution(counts=counts, paths=paths, seed=seed, steps=steps, workers=workers)


@dataclass(frozen=True)
class Comparison:
    max_abs_deviation: float
    total_variation: float
    z_scores: np.ndarray
    max_z: float
    paths: int

    def passes(self, tv_tol: float = 0.005, z_tol: float = 4.0) -> bool:
        return self.total_variation < tv_tol and self.max_z < z_tol

    def as_dict(self) -> dict:
        return {
            "max_abs_deviation": self.max_abs_deviation,
            "total_variation": self.total_variation,
            "max_z": self.max_z,
            "paths": self.paths,
        }


def compare(emp: EmpiricalDistribution, exact, N: int) -> Comparison:
    """Deviation of the empirical law from an exact probability row over flattened states."""
    exact = np.asarray(exact, dtype=float)
    freq = emp.as_vector(N, len(exact))
    diff = freq - exact
    var = exact * (1.0 - exact) / emp.paths
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(var > 0, np.abs(diff) / np.sqrt(var), np.where(diff == 0, 0.0, np.inf))
    return Comparison(
        max_abs_deviation=float(np.max(np.abs(diff))),
        total_variation=float(0.5 * np.sum(np.abs(diff))),
        z_scores=z,
        max_z=float(np.max(z)),
        paths=emp.paths,
    )


def state_label(N: int, level: int, phase: int) -> str:
    leg, depth = decode_state(N, level, phase)
    return "body" if depth == 0 else f"leg{leg}:{depth}"


__all__ = [
    "power_block",
    "power_matrix",
    "distribution_row",
    "simulate",
    "compare",
    "EmpiricalDistribution",
    "Comparison",
    "exact_truncation",
    "encode_state",
    "state_label",
]
