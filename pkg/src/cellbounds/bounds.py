"""Bounding programs over conditional response-type probabilities.

The optimization variable is the vector of conditional cell probabilities
pi(y, x_j, s) = P(U in cell s | Y = y, X = x_j), restricted to admissible
response types s and to (y, x_j) cells observed with positive mass.  Base
constraints tie the variables to the data (the observed choice pins the
s_j bit) and make each conditional distribution add up to one; optional
independence and monotonicity restrictions add rows or remove variables.
Bounds on a counterfactual functional are the min and max of its linear
objective over the feasible set, and the identified set is the union of
those intervals over one representative parameter point per equivalence
region.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import cones, geometry, model as model_mod, simplex
from .geometry import GeometryConfig, SignVector
from .model import AssumptionSet, ModelSpec, SupportPoint, TargetFunctional

MASS_TOL = 1e-12
MERGE_TOL = 1e-9
ARTSTEIN_R_CAP = 16


@dataclass(frozen=True)
class ProbabilityTable:
    """Joint masses P(Y = y, X = x_j) over the support points, in support order."""

    support: tuple[SupportPoint, ...]
    masses: np.ndarray  # shape (2, m)

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (2, len(self.support)):
            raise ValueError(f"masses shape {masses.shape} != (2, {len(self.support)})")
        if np.any(masses < -MASS_TOL):
            raise ValueError("negative probability mass")
        if abs(masses.sum() - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {masses.sum()}, expected 1")
        for j, p in enumerate(self.support):
            if not p.observed and masses[:, j].sum() > MASS_TOL:
                raise ValueError(f"counterfactual-only support point {j} carries mass")
        object.__setattr__(self, "masses", np.maximum(masses, 0.0))

    @property
    def m(self) -> int:
        return len(self.support)

    def mass(self, y: int, j: int) -> float:
        return float(self.masses[y, j])

    def positive_cells(self) -> list[tuple[int, int]]:
        return [(y, j) for y in (0, 1) for j in range(self.m) if self.masses[y, j] > MASS_TOL]

    def check_support(self, model: ModelSpec) -> None:
        if self.support != model.support:
            raise ValueError("probability table support does not match the model support")


@dataclass(frozen=True)
class PiIndexer:
    """Bijection between (y, support index, sign) triples and LP columns."""

    entries: tuple[tuple[int, int, SignVector], ...]

    def __post_init__(self):
        object.__setattr__(self, "_pos", {e: i for i, e in enumerate(self.entries)})

    @property
    def n_vars(self) -> int:
        return len(self.entries)

    def position(self, y: int, j: int, sign: SignVector) -> int:
        return self._pos[(y, j, sign)]

    def has(self, y: int, j: int, sign: SignVector) -> bool:
        return (y, j, sign) in self._pos

    @classmethod
    def build(cls, cells: list[tuple[int, int]], signs: list[SignVector]) -> "PiIndexer":
        return cls(entries=tuple((y, j, s) for (y, j) in cells for s in signs))


@dataclass
class Row:
    key: tuple
    coeffs: np.ndarray
    rhs: float


@dataclass
class PiProgram:
    """Equality-constraint skeleton over the pi variables (variable bounds are [0, 1])."""

    indexer: PiIndexer
    signs: tuple[SignVector, ...]
    cells: tuple[tuple[int, int], ...]
    rows: list[Row] = field(default_factory=list)
    structural: list[tuple] = field(default_factory=list)  # keys of 0 == 1 rows

    @property
    def structurally_infeasible(self) -> bool:
        return bool(self.structural)

    def row_keys(self) -> list[tuple]:
        return [r.key for r in self.rows]

    def to_lp(
        self,
        objective: np.ndarray,
        sense: str,
        slack: float = 0.0,
        perturbation: dict[tuple, tuple[float, float]] | None = None,
    ) -> simplex.LinearProgram:
        """Each equality row becomes two inequalities relaxed by +/- slack.

        An optional perturbation adds a nonnegative relaxation to each of
        the two one-sided inequalities (so the perturbed feasible set always
        contains the unperturbed one); rows are addressed by key so a fixed
        draw stays aligned across bootstrap replications that drop cells.
        """
        n = self.indexer.n_vars
        a, b = [], []
        for row in self.rows:
            le, ge = perturbation.get(row.key, (0.0, 0.0)) if perturbation else (0.0, 0.0)
            a.append(row.coeffs)
            b.append(row.rhs + slack + le)
            a.append(-row.coeffs)
            b.append(-row.rhs + slack + ge)
        return simplex.LinearProgram(
            objective=objective,
            sense=sense,
            a_ub=np.array(a) if a else None,
            b_ub=np.array(b) if b else None,
            lower=np.zeros(n),
            upper=np.ones(n),
        )


def build_base_constraints(
    model: ModelSpec,
    theta_signs: frozenset[SignVector] | set[SignVector],
    table: ProbabilityTable,
) -> PiProgram:
    """Match-the-data and adding-up rows over the admissible variables.

    For each positive-mass cell: conditional on (Y=1, X=x_j) all mass lies
    on types with s_j = 1 (and symmetrically for Y=0), and the conditional
    distribution over admissible types sums to one.  Inadmissible types are
    excluded from the variable vector entirely, which is equivalent to
    pinning them to zero.  A cell whose required type set is empty makes
    the program structurally infeasible; the offending keys are recorded
    rather than raised so callers can report theta as outside the
    identified set.
    """
    if not theta_signs:
        raise ValueError("theta_signs must be nonempty")
    table.check_support(model)
    signs = sorted(theta_signs)
    cells = table.positive_cells()
    indexer = PiIndexer.build(cells, signs)
    prog = PiProgram(indexer=indexer, signs=tuple(signs), cells=tuple(cells))

    for y, j in cells:
        match = np.zeros(indexer.n_vars)
        hit = False
        for s in signs:
            if s[j] == y:
                match[indexer.position(y, j, s)] = 1.0
                hit = True
        key = ("match", y, j)
        if not hit:
            prog.structural.append(key)
        else:
            prog.rows.append(Row(key=key, coeffs=match, rhs=1.0))

        addup = np.zeros(indexer.n_vars)
        for s in signs:
            addup[indexer.position(y, j, s)] = 1.0
        prog.rows.append(Row(key=("addup", y, j), coeffs=addup, rhs=1.0))
    return prog


def independence_chains(
    model: ModelSpec, spec: model_mod.IndependenceSpec, table: ProbabilityTable
):
    """Groups of support indices linked by the independence restriction.

    Returns a list of (chain_key, chain) where a chain is the ordered list
    of (instrument value, member support indices, group mass) sharing one
    value of the conditioning columns within one window; consecutive chain
    entries must give equal marginal type probabilities.  Zero-mass
    instrument values are dropped; a chain left with fewer than two values
    imposes nothing and emits a warning.
    """
    spec.validate(model)
    ind, cond = spec.independent, spec.conditioning

    def zvals(j, cols):
        return tuple(model.support[j].z[c] for c in cols)

    def window_of(value: float) -> int:
        for k, (lo, hi) in enumerate(spec.windows):
            if lo <= value <= hi:
                return k
        raise AssertionError("window validation should have caught this")

    buckets: dict[tuple, dict[tuple, list[int]]] = {}
    for j in range(model.m):
        win = window_of(model.support[j].z[ind[0]]) if spec.windows else 0
        buckets.setdefault((zvals(j, cond), win), {}).setdefault(zvals(j, ind), []).append(j)

    chains = []
    for (cond_v, win), groups in sorted(buckets.items()):
        chain = []
        for ind_v in sorted(groups):
            members = groups[ind_v]
            gmass = sum(table.mass(y, j) for y in (0, 1) for j in members)
            if gmass > MASS_TOL:
                chain.append((ind_v, members, gmass))
        if len(chain) < 2:
            warnings.warn(
                f"independence chain for conditioning value {cond_v}, window {win} has "
                f"{len(chain)} instrument value(s) with mass; no constraint imposed",
                stacklevel=3,
            )
            continue
        chains.append(((cond_v, win), chain))
    return chains


def add_independence(
    prog: PiProgram,
    model: ModelSpec,
    table: ProbabilityTable,
    spec: model_mod.IndependenceSpec,
) -> PiProgram:
    """Equate marginal type probabilities across consecutive instrument values.

    For each admissible type s and adjacent instrument values v, v' in a
    chain:  sum over v's cells of pi(y, j, s) P(y, x_j | group(v)) equals
    the same sum over v''s cells.  Full independence is the single-window,
    no-conditioning case.
    """
    for chain_key, chain in independence_chains(model, spec, table):
        for k in range(len(chain) - 1):
            (left_v, left, lmass), (_, right, rmass) = chain[k], chain[k + 1]
            for s in prog.signs:
                coeffs = np.zeros(prog.indexer.n_vars)
                for j in left:
                    for y in (0, 1):
                        if prog.indexer.has(y, j, s):
                            coeffs[prog.indexer.position(y, j, s)] += table.mass(y, j) / lmass
                for j in right:
                    for y in (0, 1):
                        if prog.indexer.has(y, j, s):
                            coeffs[prog.indexer.position(y, j, s)] -= table.mass(y, j) / rmass
                # keyed by the pair's left instrument value, not chain position,
                # so a fixed perturbation draw stays aligned when a middle
                # group loses all mass in a bootstrap replication
                prog.rows.append(Row(key=("indep", chain_key, left_v, s), coeffs=coeffs, rhs=0.0))
    return prog


def add_monotonicity(prog: PiProgram, survivors: frozenset[SignVector]) -> PiProgram:
    """Remove variables for types outside the monotone set.

    Equivalent to forcing their total conditional mass to zero.  A row that
    loses all its terms becomes 0 == 1 and is surfaced as structural
    infeasibility (or dropped outright if it was 0 == 0).
    """
    keep_signs = tuple(s for s in prog.signs if s in survivors)
    keep_cols = [i for i, (y, j, s) in enumerate(prog.indexer.entries) if s in survivors]
    indexer = PiIndexer(entries=tuple(prog.indexer.entries[i] for i in keep_cols))
    out = PiProgram(indexer=indexer, signs=keep_signs, cells=prog.cells)
    out.structural = list(prog.structural)
    for row in prog.rows:
        coeffs = row.coeffs[keep_cols]
        if np.any(coeffs != 0.0):
            out.rows.append(Row(key=row.key, coeffs=coeffs, rhs=row.rhs))
        elif row.rhs != 0.0:
            out.structural.append(row.key)
    return out


def objective_for(
    target: TargetFunctional,
    indexer: PiIndexer,
    table: ProbabilityTable,
) -> np.ndarray:
    """Linear objective over the pi variables for the requested functional."""
    c = np.zeros(indexer.n_vars)

    if target.kind == "ccp":
        if table.mass(target.y, target.j) <= MASS_TOL:
            raise ValueError(f"target references cell (y={target.y}, j={target.j}) with zero mass")
        g = target.gamma.gamma[target.j]
        for i, (y, j, s) in enumerate(indexer.entries):
            if y == target.y and j == target.j and s[g] == 1:
                c[i] = 1.0
        return c

    if target.kind == "ccp_average":
        w_mass = sum(
            table.mass(target.y, j)
            for j in range(table.m)
            if table.support[j].w == target.w_value
        )
        if w_mass <= MASS_TOL:
            raise ValueError(f"no mass at y={target.y}, w={target.w_value}")
        for i, (y, j, s) in enumerate(indexer.entries):
            if y != target.y or table.support[j].w != target.w_value:
                continue
            if s[target.gamma.gamma[j]] == 1:
                c[i] = table.mass(y, j) / w_mass
        return c

    if target.kind == "ate":
        for i, (y, j, s) in enumerate(indexer.entries):
            hi = 1.0 if s[target.gamma.gamma[j]] == 1 else 0.0
            lo = 1.0 if s[target.gamma_base.gamma[j]] == 1 else 0.0
            c[i] = table.mass(y, j) * (hi - lo)
        return c

    if target.kind == "custom":
        for y, j, sign, weight in target.weights:
            if table.mass(y, j) <= MASS_TOL:
                raise ValueError(f"custom weight references cell (y={y}, j={j}) with zero mass")
            if not indexer.has(y, j, tuple(sign)):
                raise ValueError(f"custom weight references absent entry (y={y}, j={j}, s={sign})")
            c[indexer.position(y, j, tuple(sign))] += weight
        return c

    raise ValueError(f"unknown target kind {target.kind!r}")


@dataclass(frozen=True)
class ThetaRecord:
    theta: np.ndarray
    cone_id: int
    feasible: bool
    structural_infeasible: bool
    interval: tuple[float, float] | None
    ordering: tuple[int, ...] | None = None


@dataclass(frozen=True)
class BoundsReport:
    records: tuple[ThetaRecord, ...]
    union: tuple[tuple[float, float], ...]
    convex_hull: tuple[float, float] | None
    metadata: dict

    @property
    def feasible_cones(self) -> tuple[int, ...]:
        return tuple(r.cone_id for r in self.records if r.feasible)


def admissible_for(
    model: ModelSpec,
    theta: np.ndarray | None,
    assumptions: AssumptionSet,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
) -> frozenset[SignVector]:
    """Admissible response types at theta under the declared assumptions."""
    if assumptions.separable_ordering is not None:
        if not isinstance(model.index, model_mod.SeparableIndex):
            raise ValueError("separable_ordering declared for a non-separable model")
        signs = model_mod.staircase_signs(assumptions.separable_ordering)
    else:
        signs = model_mod.admissible_signs(model, theta, config)
    if assumptions.monotonicity:
        signs = model_mod.monotone_admissible(signs, assumptions.monotonicity)
    return signs


def build_program(
    model: ModelSpec,
    signs: frozenset[SignVector],
    table: ProbabilityTable,
    assumptions: AssumptionSet,
) -> PiProgram:
    prog = build_base_constraints(model, signs, table)
    if assumptions.independence is not None:
        prog = add_independence(prog, model, table, assumptions.independence)
    return prog


@dataclass(frozen=True)
class Perturbation:
    """Fixed random shifts applied to the bounding programs.

    rows maps a row key to a pair of nonnegative relaxations, one for each
    one-sided inequality the equality row splits into; the objective draws
    shift the reported optimal values.  Relaxations (rather than signed
    target shifts) are used because a signed shift of one row's target can
    contradict another row it shares variables with whenever the draw
    dwarfs the slack, making every perturbed program infeasible.
    """

    rows: dict[tuple, tuple[float, float]]
    objective_lower: float = 0.0
    objective_upper: float = 0.0


def solve_bounds(
    model: ModelSpec,
    theta: np.ndarray | None,
    target: TargetFunctional,
    assumptions: AssumptionSet,
    table: ProbabilityTable,
    slack: float = 0.0,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
    solve_fn=simplex.solve,
    perturbation: Perturbation | None = None,
    signs: frozenset[SignVector] | None = None,
) -> ThetaRecord:
    """Min/max the target over the feasible pi set at one parameter point.

    slack >= 0 relaxes every equality row symmetrically (0 in population
    mode, b_n in plug-in mode).  An infeasible program means theta lies
    outside the identified set; numerical failures are raised with theta
    context, never conflated with infeasibility.
    """
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    assumptions.validate(model)
    target.validate(model)
    if signs is None:
        signs = admissible_for(model, theta, assumptions, config)
    prog = build_program(model, signs, table, assumptions)
    theta_arr = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    if prog.structurally_infeasible:
        return ThetaRecord(
            theta=theta_arr, cone_id=-1, feasible=False, structural_infeasible=True, interval=None
        )
    objective = objective_for(target, prog.indexer, table)
    row_shift = perturbation.rows if perturbation else None
    vals = []
    for sense, obj_shift in (
        ("min", perturbation.objective_lower if perturbation else 0.0),
        ("max", perturbation.objective_upper if perturbation else 0.0),
    ):
        lp = prog.to_lp(objective, sense, slack=slack, perturbation=row_shift)
        sol = solve_fn(lp)
        if sol.status == simplex.NUMERICAL_FAILURE:
            raise RuntimeError(f"LP solver failed at theta={theta_arr.tolist()}: {sol.message}")
        if sol.status == simplex.INFEASIBLE:
            return ThetaRecord(
                theta=theta_arr, cone_id=-1, feasible=False, structural_infeasible=False, interval=None
            )
        vals.append(sol.value + obj_shift)
    return ThetaRecord(
        theta=theta_arr,
        cone_id=-1,
        feasible=True,
        structural_infeasible=False,
        interval=(vals[0], vals[1]),
    )


def merge_intervals(
    intervals: list[tuple[float, float]], tol: float = MERGE_TOL
) -> tuple[tuple[float, float], ...]:
    if not intervals:
        return ()
    ordered = sorted(intervals)
    out = [list(ordered[0])]
    for lb, ub in ordered[1:]:
        if lb <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], ub)
        else:
            out.append([lb, ub])
    return tuple((lo, hi) for lo, hi in out)


def representatives_for(
    model: ModelSpec,
    assumptions: AssumptionSet,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
) -> list[dict]:
    """One parameter point per equivalence class, by index kind.

    Saturated models (and linear models without fixed coefficients) have no
    parameter geometry, so a single trivial representative suffices; linear
    models profile through the joint-cell projection; separable models take
    one point per induced ordering, or just the declared ordering when the
    assumption set fixes it.
    """
    if isinstance(model.index, model_mod.SaturatedIndex) or (
        isinstance(model.index, model_mod.LinearIndex) and model.d_f == 0
    ):
        return [{"theta": None, "cone_id": 0, "ordering": None}]
    if isinstance(model.index, model_mod.LinearIndex):
        reps, _ = cones.representative_points(model.index.x_r, model.index.x_f, config)
        return [{"theta": th, "cone_id": cid, "ordering": None} for th, cid in reps]
    if assumptions.separable_ordering is not None:
        return [{"theta": None, "cone_id": 0, "ordering": assumptions.separable_ordering}]
    out = []
    for cid, (ordering, theta) in enumerate(model_mod.separable_orderings(model, config=config)):
        out.append({"theta": theta, "cone_id": cid, "ordering": ordering})
    return out


def identified_set(
    model: ModelSpec,
    target: TargetFunctional,
    assumptions: AssumptionSet,
    table: ProbabilityTable,
    slack: float = 0.0,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
    solve_fn=simplex.solve,
) -> BoundsReport:
    """Union of the bounding intervals over all representative points.

    The report keeps the per-point records (so disconnected identified sets
    stay visible), the merged union, its convex hull, and the set of
    parameter-space cones whose programs are feasible.
    """
    records = []
    for rep in representatives_for(model, assumptions, config):
        rep_assumptions = assumptions
        if rep["ordering"] is not None and assumptions.separable_ordering is None:
            rep_assumptions = AssumptionSet(
                independence=assumptions.independence,
                monotonicity=assumptions.monotonicity,
                separable_ordering=rep["ordering"],
            )
        rec = solve_bounds(
            model, rep["theta"], target, rep_assumptions, table, slack, config, solve_fn
        )
        records.append(
            ThetaRecord(
                theta=rec.theta,
                cone_id=rep["cone_id"],
                feasible=rec.feasible,
                structural_infeasible=rec.structural_infeasible,
                interval=rec.interval,
                ordering=rep["ordering"],
            )
        )
    union = merge_intervals([r.interval for r in records if r.feasible])
    hull = (union[0][0], union[-1][1]) if union else None
    meta = {
        "slack": slack,
        "theta_normalization": "unit",
        "n_representatives": len(records),
        "monotonicity": list(assumptions.monotonicity),
        "independence": assumptions.independence is not None,
        "target_kind": target.kind,
    }
    return BoundsReport(records=tuple(records), union=union, convex_hull=hull, metadata=meta)


def artstein_oracle(
    model: ModelSpec,
    theta: np.ndarray | None,
    table: ProbabilityTable,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
    solve_fn=simplex.solve,
) -> tuple[bool, bool]:
    """Cross-check: conditional-equality feasibility vs containment inequalities.

    (a) the conditional system used by the bounding programs; (b) existence
    of an unconditional distribution over admissible types whose selection
    structure dominates every event probability: for each nonempty set C of
    (y, x) atoms, P((Y, X) in C) <= P(the type hits C).  The two flags must
    agree; (b) is exponential in r = |{0,1} x support| and exists purely as
    a verification oracle (guarded at r <= 16, practical near r <= 8).
    """
    m = model.m
    r = 2 * m
    if r > ARTSTEIN_R_CAP:
        raise ValueError(f"containment oracle guarded at r <= {ARTSTEIN_R_CAP}, got {r}")
    table.check_support(model)
    signs = sorted(model_mod.admissible_signs(model, theta, config))

    prog = build_base_constraints(model, frozenset(signs), table)
    if prog.structurally_infeasible:
        eq_feasible = False
    else:
        lp = prog.to_lp(np.zeros(prog.indexer.n_vars), "min")
        sol = solve_fn(lp)
        if sol.status == simplex.NUMERICAL_FAILURE:
            raise RuntimeError(f"equality-system LP failed: {sol.message}")
        eq_feasible = sol.is_optimal

    # atom id for (y, j) is 2 j + y; type s realizes atom (s_j, j) for every j.
    n_s = len(signs)
    hit_mask = np.zeros(n_s, dtype=np.int64)
    for i, s in enumerate(signs):
        mask = 0
        for j in range(m):
            mask |= 1 << (2 * j + s[j])
        hit_mask[i] = mask
    atom_mass = np.array([table.mass(c & 1, c >> 1) for c in range(r)])

    a_ub, b_ub = [], []
    for c_set in range(1, 2**r):
        p_c = atom_mass[[k for k in range(r) if c_set >> k & 1]].sum()
        a_ub.append(-(hit_mask & c_set != 0).astype(float))
        b_ub.append(-p_c)
    lp = simplex.LinearProgram(
        objective=np.zeros(n_s),
        sense="min",
        a_eq=np.ones((1, n_s)),
        b_eq=[1.0],
        a_ub=np.array(a_ub),
        b_ub=np.array(b_ub),
        lower=np.zeros(n_s),
        upper=np.ones(n_s),
    )
    sol = solve_fn(lp)
    if sol.status == simplex.NUMERICAL_FAILURE:
        raise RuntimeError(f"containment-system LP failed: {sol.message}")
    return eq_feasible, sol.is_optimal
