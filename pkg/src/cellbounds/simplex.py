"""Deterministic dense simplex solver for small bounded linear programs.

All programs produced by this package are dense, small (at most a few
thousand nonzeros) and solved in large batches, so determinism and
portability matter more than sparse performance.  The implementation is a
two-phase bounded-variable simplex with Bland's anti-cycling rule: for a
fixed input the pivot sequence, and therefore the returned solution, is
bit-for-bit reproducible.

A different backend can be swapped in anywhere a ``solve_fn`` argument is
accepted; it must be a callable with the same signature and status
contract as :func:`solve`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
MAX_PIVOTS = 1_000_000

# Pivot elements smaller than this are rejected in the ratio test.
_PIVOT_TOL = 1e-11
_RATIO_TIE_TOL = 1e-12


class LpError(ValueError):
    """Malformed linear program (inconsistent shapes, non-finite bounds)."""


@dataclass(frozen=True)
class LinearProgram:
    """min/max ``objective @ x`` s.t. ``a_eq x = b_eq``, ``a_ub x <= b_ub``, ``lower <= x <= upper``.

    Bounds must be finite; probability variables default to [0, 1], and the
    call sites that carry latent coordinates pass an explicit large box.
    """

    objective: np.ndarray
    sense: str = "min"
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        object.__setattr__(self, "objective", c)
        n = c.size
        if self.sense not in ("min", "max"):
            raise LpError(f"sense must be 'min' or 'max', got {self.sense!r}")

        def mat(a, b, name):
            if a is None or (hasattr(a, "__len__") and len(a) == 0):
                return np.zeros((0, n)), np.zeros(0)
            a = np.atleast_2d(np.asarray(a, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if a.shape[1] != n or a.shape[0] != b.size:
                raise LpError(f"{name} shape mismatch: {a.shape} vs n={n}, rhs={b.size}")
            return a, b

        a_eq, b_eq = mat(self.a_eq, self.b_eq, "a_eq")
        a_ub, b_ub = mat(self.a_ub, self.b_ub, "a_ub")
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)

        lo = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        hi = np.ones(n) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lo.size != n or hi.size != n:
            raise LpError("bound vectors must match the number of variables")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise LpError("variable bounds must be finite")
        if np.any(lo > hi + FEAS_TOL):
            raise LpError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpSolution:
    status: str
    value: float = np.nan
    x: np.ndarray | None = None
    n_pivots: int = 0
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def solve(
    lp: LinearProgram,
    feas_tol: float = FEAS_TOL,
    opt_tol: float = OPT_TOL,
    max_pivots: int = MAX_PIVOTS,
) -> LpSolution:
    """Solve a bounded LP; status is optimal/infeasible/numerical_failure.

    The pivot-limit guard reports numerical_failure rather than silently
    returning a wrong status.
    """
    n = lp.n_vars
    me, mu = lp.a_eq.shape[0], lp.a_ub.shape[0]
    m = me + mu
    n_real = n + mu  # structural + slack

    # Augmented working matrix [A | b]; slack columns form an identity block.
    t = np.zeros((m, n_real + 1))
    t[:me, :n] = lp.a_eq
    t[me:, :n] = lp.a_ub
    t[me:, n : n + mu] = np.eye(mu)
    t[:me, -1] = lp.b_eq
    t[me:, -1] = lp.b_ub
    scale = 1.0 + max(np.abs(t).max(initial=0.0), 1.0)

    lo = np.concatenate([lp.lower, np.zeros(mu)])
    hi = np.concatenate([lp.upper, np.full(mu, np.inf)])

    x = np.empty(n_real)
    x[:n] = lp.lower
    x[n:] = 0.0
    at_upper = np.zeros(n_real, dtype=bool)
    resid = t[:, -1] - t[:, :n_real] @ x

    pivots = 0
    if me == 0 and np.all(resid >= -feas_tol):
        # Crash start: the all-lower-bounds point is feasible, so the slack
        # basis works and phase 1 is unnecessary.
        basis = np.arange(n, n + mu)
        x[basis] = np.maximum(resid, 0.0)
        n_art = 0
    else:
        basis = np.empty(m, dtype=int)
        art_rows = []
        for i in range(m):
            if i >= me and resid[i] >= -feas_tol:
                basis[i] = n + (i - me)
            else:
                art_rows.append(i)
        n_art = len(art_rows)
        art_block = np.zeros((m, n_art))
        for k, i in enumerate(art_rows):
            if resid[i] < 0:
                t[i] *= -1.0  # flip row so the artificial enters with +1
            art_block[i, k] = 1.0
            basis[i] = n_real + k
        t = np.hstack([t[:, :n_real], art_block, t[:, -1:]])
        x = np.concatenate([x, np.zeros(n_art)])
        at_upper = np.concatenate([at_upper, np.zeros(n_art, dtype=bool)])
        lo = np.concatenate([lo, np.zeros(n_art)])
        hi = np.concatenate([hi, np.full(n_art, np.inf)])
        for i in range(m):
            x[basis[i]] = abs(resid[i]) if basis[i] >= n_real else max(resid[i], 0.0)

        c1 = np.zeros(n_real + n_art)
        c1[n_real:] = 1.0
        fail, pivots = _iterate(t, basis, x, at_upper, lo, hi, c1, opt_tol, max_pivots, pivots)
        if fail:
            return LpSolution(status=NUMERICAL_FAILURE, message="phase 1 pivot limit", n_pivots=pivots)
        if float(x[n_real:].sum()) > feas_tol * scale:
            return LpSolution(status=INFEASIBLE, n_pivots=pivots)
        _expel_artificials(t, basis, n_real)
        lo[n_real:] = 0.0
        hi[n_real:] = 0.0
        x[n_real:] = 0.0

    c2 = np.zeros(x.size)
    c2[:n] = lp.objective if lp.sense == "min" else -lp.objective
    fail, pivots = _iterate(t, basis, x, at_upper, lo, hi, c2, opt_tol, max_pivots, pivots)
    if fail:
        return LpSolution(status=NUMERICAL_FAILURE, message="phase 2 pivot limit", n_pivots=pivots)

    xs = x[:n].copy()
    np.clip(xs, lp.lower, lp.upper, out=xs)
    if me and np.abs(lp.a_eq @ xs - lp.b_eq).max() > 1e3 * feas_tol * scale:
        return LpSolution(status=NUMERICAL_FAILURE, message="equality residual too large", n_pivots=pivots)
    if mu and (lp.a_ub @ xs - lp.b_ub).max() > 1e3 * feas_tol * scale:
        return LpSolution(status=NUMERICAL_FAILURE, message="inequality residual too large", n_pivots=pivots)
    return LpSolution(status=OPTIMAL, value=float(lp.objective @ xs), x=xs, n_pivots=pivots)


def _pivot(t: np.ndarray, r: int, e: int) -> None:
    t[r] /= t[r, e]
    col = t[:, e].copy()
    col[r] = 0.0
    t -= np.outer(col, t[r])
    t[:, e] = 0.0
    t[r, e] = 1.0


def _expel_artificials(t: np.ndarray, basis: np.ndarray, n_real: int) -> None:
    """Pivot zero-valued basic artificials onto real columns where possible.

    A row with no eligible real column is redundant; its artificial stays
    basic at zero and, being zero on every real column, can never block a
    later ratio test.
    """
    in_basis = np.zeros(t.shape[1] - 1, dtype=bool)
    in_basis[basis] = True
    for r in range(basis.size):
        if basis[r] < n_real:
            continue
        row = np.abs(t[r, :n_real]).copy()
        row[in_basis[:n_real]] = 0.0
        j = int(np.argmax(row))
        if row[j] <= 1e-9:
            continue
        in_basis[basis[r]] = False
        in_basis[j] = True
        basis[r] = j
        _pivot(t, r, j)


def _refresh_basic(t: np.ndarray, basis: np.ndarray, x: np.ndarray) -> None:
    """Recompute basic values from the augmented tableau to limit drift."""
    nonbasic = np.ones(x.size, dtype=bool)
    nonbasic[basis] = False
    xn = np.where(nonbasic, x, 0.0)
    x[basis] = t[:, -1] - t[:, :-1] @ xn


def _iterate(t, basis, x, at_upper, lo, hi, c, opt_tol, max_pivots, pivots):
    """Run simplex pivots in place; returns (hit_pivot_limit, pivots)."""
    m = basis.size
    while True:
        if pivots >= max_pivots:
            return True, pivots
        d = c - c[basis] @ t[:, :-1]
        d[basis] = 0.0

        movable = hi > lo
        down_ok = at_upper & (d > opt_tol) & movable
        up_ok = ~at_upper & (d < -opt_tol) & movable
        eligible = up_ok | down_ok
        eligible[basis] = False
        if not eligible.any():
            _refresh_basic(t, basis, x)
            return False, pivots
        e = int(np.argmax(eligible))  # Bland: lowest eligible index
        direction = -1.0 if at_upper[e] else 1.0

        coef = t[:, e] * direction
        xb = x[basis]
        ratios = np.full(m, np.inf)
        pos = coef > _PIVOT_TOL
        neg = coef < -_PIVOT_TOL
        ratios[pos] = (xb[pos] - lo[basis[pos]]) / coef[pos]
        ratios[neg] = (xb[neg] - hi[basis[neg]]) / coef[neg]
        ratios = np.maximum(ratios, 0.0)
        ratio_min = ratios.min(initial=np.inf)
        span = hi[e] - lo[e]
        step = min(span, ratio_min)
        if not np.isfinite(step):
            # Unreachable for validated programs (finite structural bounds).
            return True, pivots

        x[e] += direction * step
        x[basis] = xb - coef * step
        pivots += 1

        if span <= ratio_min + _RATIO_TIE_TOL:
            # Bound flip: the entering variable runs to its opposite bound.
            at_upper[e] = ~at_upper[e]
            x[e] = hi[e] if at_upper[e] else lo[e]
            continue

        tie = ratios <= step + _RATIO_TIE_TOL
        r = int(np.flatnonzero(tie)[np.argmin(basis[tie])])  # Bland tie-break
        leaving = basis[r]
        hit_upper = coef[r] < 0
        x[leaving] = hi[leaving] if hit_upper else lo[leaving]
        at_upper[leaving] = hit_upper
        at_upper[e] = False
        basis[r] = e
        _pivot(t, r, e)
        if pivots % 512 == 0:
            _refresh_basic(t, basis, x)
