"""Hyperplane arrangement cell enumeration with certified interior points.

A cell is a full-dimensional region of the arrangement, identified by the
side of each hyperplane it lies on (its sign vector).  Cells are found by
inserting hyperplanes one at a time: cells crossed by the new hyperplane
split in two, and each candidate child is certified nonempty by a small
feasibility LP that returns an interior witness together with the slack it
achieves.  The LP count is proportional to the number of cells actually
present, not to 2^m.

Lower-dimensional faces are never enumerated; the probability model this
package serves assigns them measure zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import simplex

SignVector = tuple[int, ...]

_ZERO_NORMAL_TOL = 1e-12
_DEDUP_DECIMALS = 9


class EnumerationNumericalError(RuntimeError):
    """The feasibility LP failed numerically; distinct from 'empty interior'."""


@dataclass(frozen=True)
class GeometryConfig:
    """Tolerances for the feasibility LPs.

    box_bound bounds every latent coordinate so the max-slack program is
    bounded; a cell counts as nonempty-interior iff the optimal slack
    exceeds strict_tol.  Both are configuration, not constants, because
    near-degenerate arrangements may need a looser or tighter notion of
    "strictly inside".
    """

    box_bound: float = 1e6
    strict_tol: float = 1e-7


DEFAULT_CONFIG = GeometryConfig()


@dataclass(frozen=True)
class Hyperplane:
    """Oriented hyperplane {u : normal @ u + offset = 0} with unit normal.

    The constructor rescales (normal, offset) jointly so the normal has
    Euclidean norm 1; orientation is preserved, so the sign bit
    1{normal @ u + offset >= 0} keeps its meaning.
    """

    normal: np.ndarray
    offset: float
    id: int = 0

    def __post_init__(self):
        a = np.asarray(self.normal, dtype=float).ravel()
        nrm = float(np.linalg.norm(a))
        if nrm <= _ZERO_NORMAL_TOL:
            raise ValueError(f"hyperplane {self.id}: zero normal vector")
        object.__setattr__(self, "normal", a / nrm)
        object.__setattr__(self, "offset", float(self.offset) / nrm)

    @property
    def dim(self) -> int:
        return self.normal.size

    def evaluate(self, u: np.ndarray) -> float:
        return float(self.normal @ u + self.offset)

    def _canonical(self) -> tuple[tuple, bool]:
        """Key with sign flipped so the first nonzero normal entry is positive."""
        a, b = self.normal, self.offset
        flip = False
        for v in a:
            if abs(v) > _ZERO_NORMAL_TOL:
                flip = v < 0
                break
        else:
            flip = b < 0
        if flip:
            a, b = -a, -b
        key = tuple(np.round(a, _DEDUP_DECIMALS)) + (round(b, _DEDUP_DECIMALS),)
        # -0.0 and 0.0 hash differently
        key = tuple(0.0 if v == 0 else v for v in key)
        return key, flip


@dataclass(frozen=True)
class Cell:
    """A full-dimensional cell: sign pattern plus a certified interior point.

    The witness satisfies (2*sign[j]-1) * (a_j @ witness + b_j) >= margin
    for every hyperplane j, with margin above the strictness tolerance.
    """

    sign: SignVector
    witness: np.ndarray
    margin: float


@dataclass(frozen=True)
class Arrangement:
    hyperplanes: tuple[Hyperplane, ...]
    dimension: int
    cells: tuple[Cell, ...]
    # input index -> (unique hyperplane index, orientation flipped?)
    merge_map: tuple[tuple[int, bool], ...] = field(default=())

    @property
    def sign_set(self) -> frozenset[SignVector]:
        return frozenset(c.sign for c in self.cells)


def cell_count_bound(m: int, d: int) -> int:
    """Maximum number of full-dimensional cells of m hyperplanes in R^d.

    Equals sum_{j=0}^{d} C(m, j); attained in general position, and
    saturates at 2^m once d >= m.
    """
    if m < 0 or d < 0:
        raise ValueError("m and d must be nonnegative")
    return sum(math.comb(m, j) for j in range(min(m, d) + 1))


def _check_inputs(hyperplanes, dimension: int) -> None:
    for hp in hyperplanes:
        if hp.dim != dimension:
            raise ValueError(
                f"hyperplane {hp.id}: dimension {hp.dim} does not match arrangement dimension {dimension}"
            )


def interior_point(
    sign: SignVector,
    hyperplanes: list[Hyperplane],
    config: GeometryConfig = DEFAULT_CONFIG,
    solve_fn=simplex.solve,
) -> tuple[np.ndarray, float] | None:
    """Find a strict interior witness of the cell with the given sign pattern.

    Solves  max eps  s.t.  (2 s_j - 1)(a_j @ u + b_j) >= eps  within the
    coordinate box |u_k| <= box_bound.  Returns (witness, eps) when the
    optimum exceeds strict_tol, None when the cell has no interior, and
    raises EnumerationNumericalError on solver failure (never conflating
    the two).
    """
    m = len(hyperplanes)
    if len(sign) != m:
        raise ValueError(f"sign length {len(sign)} != number of hyperplanes {m}")
    if m == 0:
        raise ValueError("interior_point needs at least one hyperplane")
    d = hyperplanes[0].dim
    _check_inputs(hyperplanes, d)

    sigma = np.array([2 * s - 1 for s in sign], dtype=float)
    normals = np.stack([hp.normal for hp in hyperplanes])
    offsets = np.array([hp.offset for hp in hyperplanes])

    # Variables (u_1..u_d, eps); rows -sigma_j a_j @ u + eps <= sigma_j b_j.
    a_ub = np.hstack([-sigma[:, None] * normals, np.ones((m, 1))])
    b_ub = sigma * offsets
    # eps bounded below so the all-lower-bounds start is always feasible,
    # and above by more than any achievable slack inside the box.
    eps_cap = math.sqrt(d) * config.box_bound + float(np.abs(offsets).max()) + 1.0
    lower = np.concatenate([np.full(d, -config.box_bound), [-eps_cap]])
    upper = np.concatenate([np.full(d, config.box_bound), [eps_cap]])
    objective = np.zeros(d + 1)
    objective[-1] = 1.0

    lp = simplex.LinearProgram(
        objective=objective, sense="max", a_ub=a_ub, b_ub=b_ub, lower=lower, upper=upper
    )
    sol = solve_fn(lp)
    if sol.status == simplex.NUMERICAL_FAILURE:
        raise EnumerationNumericalError(f"feasibility LP failed for sign {sign}: {sol.message}")
    if sol.status != simplex.OPTIMAL:
        # The eps lower bound makes the program feasible by construction.
        raise EnumerationNumericalError(f"feasibility LP returned {sol.status} for sign {sign}")
    eps = sol.value
    if eps <= config.strict_tol:
        return None
    return sol.x[:d].copy(), float(eps)


def _dedup(hyperplanes: list[Hyperplane]):
    """Group hyperplanes equal after canonical orientation, keeping first occurrences."""
    reps: list[Hyperplane] = []
    rep_flip: list[bool] = []
    seen: dict[tuple, int] = {}
    merge: list[tuple[int, bool]] = []
    for hp in hyperplanes:
        key, flip = hp._canonical()
        if key in seen:
            k = seen[key]
            merge.append((k, flip != rep_flip[k]))
        else:
            seen[key] = len(reps)
            merge.append((len(reps), False))
            reps.append(hp)
            rep_flip.append(flip)
    return reps, merge


def enumerate_cells(
    hyperplanes: list[Hyperplane],
    dimension: int,
    config: GeometryConfig = DEFAULT_CONFIG,
    solve_fn=simplex.solve,
) -> Arrangement:
    """Enumerate all cells with nonempty interior, one hyperplane at a time.

    At step k an existing cell either lies wholly on one side of the new
    hyperplane or is split.  The child on the witness's own side is reused
    without an LP when the witness clears the new hyperplane by more than
    the strictness tolerance; the opposite child is always certified by
    interior_point.  Duplicate hyperplanes (equal after normalization, up
    to sign) are merged for the sweep and their bits reconstructed from the
    retained merge map, so the output signs are indexed by the input list.
    """
    if len(hyperplanes) == 0:
        return Arrangement(
            hyperplanes=(),
            dimension=dimension,
            cells=(Cell(sign=(), witness=np.zeros(dimension), margin=np.inf),),
        )
    _check_inputs(hyperplanes, dimension)
    reps, merge = _dedup(hyperplanes)

    # (sign over reps, witness, margin); the empty arrangement is one cell.
    work: list[tuple[SignVector, np.ndarray, float]] = [((), np.zeros(dimension), np.inf)]
    for k, hp in enumerate(reps):
        active = reps[: k + 1]
        grown: list[tuple[SignVector, np.ndarray, float]] = []
        for sign, witness, margin in work:
            value = hp.evaluate(witness)
            natural = 1 if value >= 0 else 0
            child = sign + (natural,)
            if abs(value) > config.strict_tol:
                grown.append((child, witness, min(margin, abs(value))))
            else:
                res = interior_point(child, active, config, solve_fn)
                if res is not None:
                    grown.append((child, res[0], res[1]))
            flipped = sign + (1 - natural,)
            res = interior_point(flipped, active, config, solve_fn)
            if res is not None:
                grown.append((flipped, res[0], res[1]))
        work = grown

    cells = tuple(
        Cell(sign=_expand_sign(sign, merge), witness=w, margin=m) for sign, w, m in work
    )
    return Arrangement(
        hyperplanes=tuple(hyperplanes),
        dimension=dimension,
        cells=cells,
        merge_map=tuple(merge),
    )


def _expand_sign(rep_sign: SignVector, merge) -> SignVector:
    return tuple(rep_sign[k] ^ int(flip) for k, flip in merge)


def enumerate_cells_bruteforce(
    hyperplanes: list[Hyperplane],
    dimension: int,
    config: GeometryConfig = DEFAULT_CONFIG,
    solve_fn=simplex.solve,
) -> Arrangement:
    """Reference enumeration: one feasibility LP per sign vector in {0,1}^m.

    Exponential in m (guarded at m <= 20); exists to cross-check the
    incremental enumeration, so it deliberately shares none of its
    shortcuts.
    """
    m = len(hyperplanes)
    if m > 20:
        raise ValueError(f"brute force enumeration guarded at m <= 20, got {m}")
    if m == 0:
        return enumerate_cells(hyperplanes, dimension, config, solve_fn)
    _check_inputs(hyperplanes, dimension)
    cells = []
    for bits in product((0, 1), repeat=m):
        res = interior_point(bits, hyperplanes, config, solve_fn)
        if res is not None:
            cells.append(Cell(sign=bits, witness=res[0], margin=res[1]))
    return Arrangement(hyperplanes=tuple(hyperplanes), dimension=dimension, cells=tuple(cells))
