"""Polyhedral cone computations for parameter-space profiling.

Three jobs: enumerate the extreme rays of cones {c >= 0 : E c = 0} by the
double description method, project joint latent/parameter cells onto the
parameter space, and pick one representative parameter point from each
region of the resulting central arrangement.  Two parameters in the same
region induce the same admissible response types, so the bounding programs
only ever need to be solved at the representatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, simplex
from .geometry import GeometryConfig, Hyperplane, SignVector

_RAY_ZERO_TOL = 1e-10
_ROW_ZERO_TOL = 1e-10
_REDUNDANCY_LP_THRESHOLD = 200


@dataclass(frozen=True)
class ConeH:
    """H-representation {c in R^m : equalities @ c = 0, c >= 0}."""

    equalities: np.ndarray  # (k, m); k may be 0
    ambient_dim: int

    def __post_init__(self):
        e = np.asarray(self.equalities, dtype=float)
        if e.size == 0:
            e = np.zeros((0, self.ambient_dim))
        e = np.atleast_2d(e)
        if e.shape[1] != self.ambient_dim:
            raise ValueError(f"equality row length {e.shape[1]} != ambient dim {self.ambient_dim}")
        object.__setattr__(self, "equalities", e)


@dataclass(frozen=True)
class ConeV:
    """V-representation: columns of `rays` generate the cone, minimally."""

    rays: np.ndarray  # (m, r); r == 0 for the cone {0}

    @property
    def n_rays(self) -> int:
        return self.rays.shape[1]


@dataclass(frozen=True)
class ProjectedCell:
    """Parameter-space shadow {theta : theta_constraints @ theta >= 0} of one joint cell."""

    sign: SignVector
    theta_constraints: np.ndarray  # (r, d_f); r == 0 means the whole space

    @property
    def vacuous(self) -> bool:
        return self.theta_constraints.shape[0] == 0


def _adjacent(zero_sets: list[np.ndarray], i: int, j: int, processed: np.ndarray, m: int) -> bool:
    """Rank test: rays i, j span a 2-face of the current cone.

    Active constraints are the processed equality rows (tight at every ray)
    plus the nonnegativity rows where both rays vanish.
    """
    shared = np.intersect1d(zero_sets[i], zero_sets[j], assume_unique=True)
    k = processed.shape[0]
    if shared.size + k < m - 2:
        return False
    mat = np.zeros((shared.size + k, m))
    mat[np.arange(shared.size), shared] = 1.0
    if k:
        mat[shared.size :] = processed
    return np.linalg.matrix_rank(mat) == m - 2


def extreme_rays(cone: ConeH) -> ConeV:
    """Minimal generators of {c >= 0 : E c = 0}, via incremental double description.

    Starting from the coordinate rays of the positive orthant, each
    equality row splits the current rays by sign and combines adjacent
    positive/negative pairs.  Output columns are unit-norm and sorted
    lexicographically, so the representation is canonical; a cone equal to
    {0} yields zero columns (a valid result, not an error).
    """
    m = cone.ambient_dim
    if m < 1:
        raise ValueError("ambient dimension must be >= 1")
    rays = [np.eye(m)[:, i] for i in range(m)]
    e_all = cone.equalities
    for idx in range(e_all.shape[0]):
        row = e_all[idx]
        processed = e_all[:idx]
        vals = np.array([row @ r for r in rays])
        pos = [i for i, v in enumerate(vals) if v > _RAY_ZERO_TOL]
        neg = [i for i, v in enumerate(vals) if v < -_RAY_ZERO_TOL]
        zero = [i for i, v in enumerate(vals) if abs(v) <= _RAY_ZERO_TOL]
        zero_sets = [np.flatnonzero(np.abs(r) <= _RAY_ZERO_TOL) for r in rays]
        new = [rays[i] for i in zero]
        for i in pos:
            for j in neg:
                if len(rays) > 2 and not _adjacent(zero_sets, i, j, processed, m):
                    continue
                comb = vals[i] * rays[j] - vals[j] * rays[i]
                nrm = np.linalg.norm(comb)
                if nrm <= _RAY_ZERO_TOL:
                    continue
                new.append(comb / nrm)
        rays = _dedup_rays(new)
    if not rays:
        return ConeV(rays=np.zeros((m, 0)))
    cols = sorted((r / np.linalg.norm(r) for r in rays), key=lambda r: tuple(np.round(r, 12)))
    return ConeV(rays=np.column_stack(cols))


def _dedup_rays(rays: list[np.ndarray]) -> list[np.ndarray]:
    out, seen = [], set()
    for r in rays:
        nrm = np.linalg.norm(r)
        if nrm <= _RAY_ZERO_TOL:
            continue
        key = tuple(0.0 if v == 0 else v for v in np.round(r / nrm, 9))
        if key not in seen:
            seen.add(key)
            out.append(r / nrm)
    return out


def signed_blocks(sign: SignVector, x_r: np.ndarray, x_f: np.ndarray):
    """Apply D(s) = diag(2s - 1) to the latent and parameter blocks."""
    d = np.array([2 * s - 1 for s in sign], dtype=float)[:, None]
    return d * x_r, d * x_f


def project_cell(
    x_r_signed: np.ndarray, x_f_signed: np.ndarray, sign: SignVector = ()
) -> ProjectedCell:
    """Project {(u, theta) : Xr(s) u + Xf(s) theta >= 0} onto theta-space.

    The latent block is eliminated through the dual cone
    {c >= 0 : c' Xr(s) = 0}: each extreme ray c yields one valid inequality
    c' Xf(s) theta >= 0, and together these are exactly the projection.  A
    dual cone equal to {0} (e.g. Xr(s) square and invertible) means u can
    always be solved for, so the projection is the whole parameter space
    and the result is vacuous; likewise when there are no fixed parameters.
    """
    x_r = np.atleast_2d(np.asarray(x_r_signed, dtype=float))
    x_f = np.atleast_2d(np.asarray(x_f_signed, dtype=float))
    if x_f.size == 0:
        x_f = x_f.reshape(x_r.shape[0], -1)
    if x_r.shape[0] != x_f.shape[0]:
        raise ValueError(f"row count mismatch: {x_r.shape[0]} vs {x_f.shape[0]}")
    m, d_f = x_r.shape[0], x_f.shape[1]
    rays = extreme_rays(ConeH(equalities=x_r.T, ambient_dim=m))
    if rays.n_rays == 0 or d_f == 0:
        return ProjectedCell(sign=tuple(sign), theta_constraints=np.zeros((0, d_f)))
    g = rays.rays.T @ x_f
    norms = np.linalg.norm(g, axis=1)
    g = g[norms > _ROW_ZERO_TOL]
    return ProjectedCell(sign=tuple(sign), theta_constraints=np.atleast_2d(g) if g.size else np.zeros((0, d_f)))


def _drop_redundant_rows(rows: np.ndarray, box: float = 1e3) -> np.ndarray:
    """Prune rows of {G theta >= 0}: parallel duplicates always, LP test past a size cap."""
    if rows.shape[0] == 0:
        return rows
    norms = np.linalg.norm(rows, axis=1)
    rows = rows[norms > _ROW_ZERO_TOL] / norms[norms > _ROW_ZERO_TOL, None]
    uniq, seen = [], set()
    for r in rows:
        key = tuple(0.0 if v == 0 else v for v in np.round(r, 9))
        if key not in seen:
            seen.add(key)
            uniq.append(r)
    rows = np.array(uniq) if uniq else np.zeros((0, rows.shape[1]))
    if rows.shape[0] <= _REDUNDANCY_LP_THRESHOLD:
        return rows
    d = rows.shape[1]
    alive = np.ones(rows.shape[0], dtype=bool)
    for i in range(rows.shape[0]):
        alive[i] = False
        others = rows[alive]
        lp = simplex.LinearProgram(
            objective=rows[i],
            sense="min",
            a_ub=-others,
            b_ub=np.zeros(others.shape[0]),
            lower=np.full(d, -box),
            upper=np.full(d, box),
        )
        sol = simplex.solve(lp)
        redundant = sol.is_optimal and sol.value >= -1e-9
        alive[i] = not redundant
    return rows[alive]


def cone_signature(rows: np.ndarray, theta: np.ndarray, tol: float = 1e-9) -> tuple[int, ...] | None:
    """Which side of each stacked hyperplane theta lies on; None on a boundary."""
    vals = np.atleast_2d(rows) @ np.asarray(theta, dtype=float).ravel()
    if np.any(np.abs(vals) <= tol):
        return None
    return tuple(int(v > 0) for v in vals)


def joint_arrangement(
    x_r: np.ndarray,
    x_f: np.ndarray,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
) -> geometry.Arrangement:
    """Cells of the m homogeneous hyperplanes x_ir' u + x_if' theta = 0 in (u, theta)-space."""
    x_r = np.atleast_2d(np.asarray(x_r, dtype=float))
    x_f = np.atleast_2d(np.asarray(x_f, dtype=float))
    joint = np.hstack([x_r, x_f])
    hps = [Hyperplane(normal=row, offset=0.0, id=i + 1) for i, row in enumerate(joint)]
    return geometry.enumerate_cells(hps, joint.shape[1], config)


def representative_points(
    x_r: np.ndarray,
    x_f: np.ndarray,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
) -> tuple[list[tuple[np.ndarray, int]], np.ndarray]:
    """One unit-norm parameter point per equivalence region, with its cone id.

    Steps: enumerate the joint (u, theta) cells; project each onto
    theta-space; stack every nonvacuous constraint row as a hyperplane
    through the origin in theta-space; enumerate that central arrangement;
    return each cell's witness normalized to unit length.  Also returns the
    stacked row matrix so callers can locate an arbitrary theta's cone by
    sign pattern.

    Points on the stacked hyperplanes themselves (boundary cones) are not
    enumerated separately: the bounding programs depend on theta only
    through its admissible sign set, and each closed cone's program equals
    an adjacent open cone's.
    """
    x_r = np.atleast_2d(np.asarray(x_r, dtype=float))
    x_f = np.atleast_2d(np.asarray(x_f, dtype=float))
    d_f = x_f.shape[1]
    if d_f < 1:
        raise ValueError("profiling needs at least one fixed parameter")
    arr = joint_arrangement(x_r, x_f, config)
    stacked: list[np.ndarray] = []
    for cell in arr.cells:
        pc = project_cell(*signed_blocks(cell.sign, x_r, x_f), sign=cell.sign)
        if not pc.vacuous:
            stacked.extend(pc.theta_constraints)
    rows = _drop_redundant_rows(np.array(stacked) if stacked else np.zeros((0, d_f)))
    if rows.shape[0] == 0:
        # No cell constrains theta: a single representative suffices.
        theta = np.zeros(d_f)
        theta[0] = 1.0
        return [(theta, 0)], rows
    hps = [Hyperplane(normal=r, offset=0.0, id=i + 1) for i, r in enumerate(rows)]
    theta_arr = geometry.enumerate_cells(hps, d_f, config)
    reps = []
    for cone_id, cell in enumerate(theta_arr.cells):
        w = cell.witness
        reps.append((w / np.linalg.norm(w), cone_id))
    return reps, rows
