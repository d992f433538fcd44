"""Matrix orthogonal polynomials and the Karlin-McGregor representation."""

from __future__ import annotations

import numpy as np

from .chain_model import SpiderChain
from .errors import UnsupportedWeight
from .quadrature import DEFAULT_QUAD_TOL, QuadratureRule, WeightMatrix, integrate


def _as_points(x):
    scalar = np.ndim(x) == 0
    return np.atleast_1d(np.asarray(x, dtype=float)), scalar


def recurrence_polys(op, n_max: int, x) -> np.ndarray:
    """Q_0..Q_{n_max} from x Q_n = A_n Q_{n+1} + B_n Q_n + C_n Q_{n-1}, Q_0 = I.

    Works for any block operator with invertible A_n.  Returns shape
    (n_max + 1, N, N) for scalar x and (n_max + 1, len(x), N, N) otherwise.
    """
    xs, scalar = _as_points(x)
    N = op.dim
    k = len(xs)
    out = np.zeros((n_max + 1, k, N, N))
    out[0] = np.eye(N)
    prev = np.zeros((k, N, N))
    for n in range(n_max):
        t = op.blocks(n)
        cur = out[n]
        rhs = xs[:, None, None] * cur - np.matmul(t.B, cur)
        if t.C is not None:
            rhs -= np.matmul(t.C, prev)
        diag = np.diagonal(t.A)
        if np.count_nonzero(t.A - np.diag(diag)) == 0:
            nxt = rhs / diag[None, :, None]
        else:
            nxt = np.linalg.solve(t.A, rhs)
        prev = cur
        out[n + 1] = nxt
    return out[:, 0] if scalar else out


def eval_scalar_polys(chain: SpiderChain, leg: int, n_max: int, x):
    """Scalar polynomials of one leg and their associated polynomials.

    Returns ``(Q, Q0)`` each of shape (n_max + 1,) (or (n_max + 1, len(x))).
    Leg N starts from the body; leg k < N is shifted one depth outward.
    """
    if not 1 <= leg <= chain.N:
        raise ValueError(f"leg must be in 1..{chain.N}")
    xs, scalar = _as_points(x)
    Q = np.zeros((n_max + 1, len(xs)))
    Q0 = np.zeros((n_max + 1, len(xs)))
    Q[0] = 1.0
    A0 = chain.leg_recurrence(leg, 0)[0]
    if n_max >= 1:
        if leg == chain.N:
            Q0[1] = -1.0 / A0
        else:
            a1, _, c1 = chain.rates(leg, 1)
            Q0[1] = -c1 / a1
    for n in range(n_max):
        A, B, C = chain.leg_recurrence(leg, n)
        prev = Q[n - 1] if n >= 1 else 0.0
        Q[n + 1] = ((xs - B) * Q[n] - C * prev) / A
        if n >= 1:
            Q0[n + 1] = ((xs - B) * Q0[n] - C * Q0[n - 1]) / A
    if scalar:
        return Q[:, 0], Q0[:, 0]
    return Q, Q0


def assemble_arrow(chain: SpiderChain, legs_q) -> np.ndarray:
    """Place per-leg scalar sequences into the arrow pattern of Q_n.

    ``legs_q[m - 1]`` is the (Q, Q0) pair of leg m as returned by
    :func:`eval_scalar_polys`.
    """
    N = chain.N
    QN, QN0 = legs_q[N - 1]
    shape = QN.shape + (N, N)
    out = np.zeros(shape)
    out[..., 0, 0] = QN
    for k in range(1, N):
        Qk, Qk0 = legs_q[k - 1]
        out[..., 0, k] = chain.alpha[k] * QN0
        out[..., k, 0] = Qk0
        out[..., k, k] = Qk
    return out


def eval_matrix_polys(chain, n_max: int, x) -> np.ndarray:
    """Matrix polynomials Q_0(x)..Q_{n_max}(x) of a chain via the block recurrence."""
    return recurrence_polys(chain, n_max, x)


def matrix_polys(op, n_max: int, x) -> np.ndarray:
    """Polynomials attached to ``op``: its own ``polys`` if it has one, else the recurrence."""
    polys = getattr(op, "polys", None)
    if polys is not None:
        return polys(n_max, x)
    return recurrence_polys(op, n_max, x)


def _weight_for(op, weight):
    if weight is not None:
        return weight
    if isinstance(op, SpiderChain) and op.is_constant:
        from .spider_rw import RWParams, rw_weight

        return rw_weight(RWParams.from_chain(op))
    raise UnsupportedWeight(
        "no closed-form weight is known for this chain; supply a WeightMatrix explicitly"
    )


def km_block(
    op,
    weight: WeightMatrix | None,
    i: int,
    j: int,
    n: int,
    rule: QuadratureRule | None = None,
    tol: float = DEFAULT_QUAD_TOL,
) -> np.ndarray:
    """(i, j) block of P^n as (integral of x^n Q_i dW Q_j^T) Pi_j."""
    if min(i, j, n) < 0:
        raise ValueError("levels and steps must be nonnegative")
    weight = _weight_for(op, weight)
    top = max(i, j)
    integral = integrate(
        weight,
        rule,
        scalar=lambda x: x ** n,
        left=lambda x: matrix_polys(op, top, x)[i],
        right=lambda x: matrix_polys(op, top, x)[j],
        tol=tol,
    )
    return integral @ op.potential(j)


def gram(
    op,
    weight: WeightMatrix | None,
    n: int,
    m: int,
    rule: QuadratureRule | None = None,
    tol: float = DEFAULT_QUAD_TOL,
) -> np.ndarray:
    """Integral of Q_n dW Q_m^T."""
    weight = _weight_for(op, weight)
    top = max(n, m)
    return integrate(
        weight,
        rule,
        left=lambda x: matrix_polys(op, top, x)[n],
        right=lambda x: matrix_polys(op, top, x)[m],
        tol=tol,
    )


def recurrence_residual(op, polys: np.ndarray, x: float) -> float:
    """max_n |x Q_n - (A_n Q_{n+1} + B_n Q_n + C_n Q_{n-1})| over the given sequence."""
    worst = 0.0
    for n in range(len(polys) - 1):
        t = op.blocks(n)
        rhs = t.A @ polys[n + 1] + t.B @ polys[n]
        if t.C is not None and n >= 1:
            rhs = rhs + t.C @ polys[n - 1]
        worst = max(worst, float(np.max(np.abs(x * polys[n] - rhs))))
    return worst
