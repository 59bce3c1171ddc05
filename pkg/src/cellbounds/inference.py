"""Estimation and inference: plug-in sets, bootstrap confidence sets, synthetic data.

The plug-in estimate replaces the population table with cell frequencies
and relaxes every equality by a slackness b_n = b / sqrt(log n), which
keeps the estimated set Hausdorff-consistent.  Confidence sets come from a
nonparametric bootstrap of the perturbed bounding programs: a single
random shift per constraint row and per objective direction, drawn once
per representative point and held fixed across replications, restores
enough regularity for percentile intervals on each endpoint; the final set
is the union over representative points.  Half-median unbiased endpoint
estimates are the same construction at the one-sided 1/2 level, i.e. the
bootstrap medians.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bounds_mod
from . import geometry, model as model_mod, simplex
from .bounds import BoundsReport, Perturbation, ProbabilityTable, ThetaRecord
from .geometry import GeometryConfig
from .model import AssumptionSet, ModelSpec, TargetFunctional

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    """Microdata records (y_i, w_i, z_i); every (w, z) must lie on the model support."""

    y: np.ndarray
    w: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=int).ravel()
        n = y.size
        if n < 1:
            raise ValueError("dataset must contain at least one record")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("y must be binary")
        w = np.asarray(self.w, dtype=float).reshape(n, -1)
        z = np.asarray(self.z, dtype=float).reshape(n, -1)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class InferenceConfig:
    bootstrap: int = 999
    alpha: float = 0.10
    slack_base: float = 1e-4
    perturbation_scale: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.bootstrap < 1:
            raise ValueError("bootstrap replication count must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.slack_base <= 0:
            raise ValueError("slack_base must be positive")
        if self.perturbation_scale < 0:
            raise ValueError("perturbation_scale must be nonnegative")


def support_indices(data: Dataset, model: ModelSpec) -> np.ndarray:
    """Map each record to its support index; raises on off-support records."""
    idx = model.point_index()
    out = np.empty(data.n, dtype=int)
    for i in range(data.n):
        key = (tuple(data.w[i]), tuple(data.z[i]))
        if key not in idx:
            raise ValueError(f"record {i}: value (w={key[0]}, z={key[1]}) is not on the support")
        out[i] = idx[key]
    return out


def estimate_table(data: Dataset, model: ModelSpec) -> ProbabilityTable:
    """Cell frequencies P_n(Y = y, X = x_j); unobserved cells get mass zero."""
    cells = support_indices(data, model)
    masses = np.zeros((2, model.m))
    np.add.at(masses, (data.y, cells), 1.0)
    return ProbabilityTable(support=model.support, masses=masses / data.n)


def plugin_slack(config: InferenceConfig, n: int) -> float:
    """b_n = b / sqrt(log n), floored at b for tiny n where log n < 1."""
    return config.slack_base / math.sqrt(max(math.log(n), 1.0))


def plugin_bounds(
    data: Dataset,
    model: ModelSpec,
    target: TargetFunctional,
    assumptions: AssumptionSet,
    config: InferenceConfig,
    geo_config: GeometryConfig = geometry.DEFAULT_CONFIG,
    solve_fn=simplex.solve,
) -> BoundsReport:
    """Identified-set estimate from cell frequencies with vanishing slackness."""
    table = estimate_table(data, model)
    slack = plugin_slack(config, data.n)
    report = bounds_mod.identified_set(
        model, target, assumptions, table, slack=slack, config=geo_config, solve_fn=solve_fn
    )
    report.metadata["n"] = data.n
    report.metadata["slack_base"] = config.slack_base
    return report


@dataclass(frozen=True)
class ThetaConfidence:
    cone_id: int
    theta: np.ndarray | None
    ordering: tuple[int, ...] | None
    cs: tuple[float, float] | None
    half_median: tuple[float, float] | None
    n_feasible: int
    n_replications: int
    endpoint_spread: tuple[float, float] | None


@dataclass(frozen=True)
class ConfidenceReport:
    plug_in: BoundsReport
    half_median_union: tuple[tuple[float, float], ...]
    half_median_hull: tuple[float, float] | None
    cs_union: tuple[tuple[float, float], ...]
    cs_hull: tuple[float, float] | None
    per_theta: tuple[ThetaConfidence, ...]
    metadata: dict


def _bootstrap_masses(rng: np.random.Generator, base: np.ndarray, n: int) -> np.ndarray:
    """Resample n records with replacement.

    Records within a cell are identical, so resampling rows is exactly a
    multinomial draw over the empirical cell frequencies.
    """
    draw = rng.multinomial(n, base.ravel())
    return draw.reshape(base.shape) / n


def _replication_batch(args) -> list[tuple[int, float, float] | tuple[int, None, None]]:
    """Solve one batch of bootstrap replications for one representative point.

    Module-level so process pools can pickle it; the RNG stream for
    replication b is derived from (seed, representative index, b) alone, so
    results do not depend on batching or evaluation order.
    """
    (model, rep_assumptions, theta, target, signs, masses, n, slack,
     perturbation, seed, t_idx, b_lo, b_hi, geo_config) = args
    out = []
    for b in range(b_lo, b_hi):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t_idx, b)))
        boot_table = ProbabilityTable(
            support=model.support, masses=_bootstrap_masses(rng, masses, n)
        )
        rec = bounds_mod.solve_bounds(
            model,
            theta,
            target,
            rep_assumptions,
            boot_table,
            slack=slack,
            config=geo_config,
            perturbation=perturbation,
            signs=signs,
        )
        if rec.feasible:
            out.append((b, rec.interval[0], rec.interval[1]))
        else:
            out.append((b, None, None))
    return out


def bootstrap_cs(
    data: Dataset,
    model: ModelSpec,
    target: TargetFunctional,
    assumptions: AssumptionSet,
    config: InferenceConfig,
    geo_config: GeometryConfig = geometry.DEFAULT_CONFIG,
    solve_fn=simplex.solve,
    n_jobs: int = 1,
) -> ConfidenceReport:
    """Percentile bootstrap confidence set for the bounded functional.

    Per representative point: draw one fixed perturbation vector (one
    uniform shift on [-kappa/sqrt(n), kappa/sqrt(n)] per constraint row and
    per objective direction), then for each replication resample the data,
    rebuild the table, and re-solve the perturbed, slackened programs.  The
    level-(1 - alpha) set takes the alpha/2 and 1 - alpha/2 quantiles of
    the bootstrapped endpoints; the half-median estimates take the
    one-sided 1/2 level, i.e. the medians.  Representative points whose
    replications are all infeasible contribute nothing (logged).

    RNG streams are split deterministically per (representative index,
    replication index), so reports are bit-identical for a fixed seed and
    replications may be evaluated in any order; n_jobs > 1 runs replication
    batches in a process pool with identical results (a custom solve_fn is
    honored only in sequential mode).
    """
    table = estimate_table(data, model)
    n = data.n
    slack = plugin_slack(config, n)
    scale = config.perturbation_scale / math.sqrt(n)
    representatives = bounds_mod.representatives_for(model, assumptions, geo_config)

    per_theta: list[ThetaConfidence] = []
    cs_intervals: list[tuple[float, float]] = []
    half_intervals: list[tuple[float, float]] = []
    for t_idx, rep in enumerate(representatives):
        rep_assumptions = assumptions
        if rep["ordering"] is not None and assumptions.separable_ordering is None:
            rep_assumptions = AssumptionSet(
                independence=assumptions.independence,
                monotonicity=assumptions.monotonicity,
                separable_ordering=rep["ordering"],
            )
        signs = bounds_mod.admissible_for(model, rep["theta"], rep_assumptions, geo_config)

        # Fixed perturbation, keyed by the full-sample row set; replications
        # can only lose rows, so every replication key is covered.  Row
        # draws relax each one-sided inequality (nonnegative, so the
        # perturbed program stays feasible); objective draws shift values.
        full_prog = bounds_mod.build_program(model, signs, table, rep_assumptions)
        pert_rng = np.random.default_rng(np.random.SeedSequence(config.rng_seed, spawn_key=(t_idx, 0)))
        row_keys = full_prog.row_keys()
        relax = pert_rng.uniform(0.0, scale, size=(len(row_keys), 2))
        obj_shifts = pert_rng.uniform(-scale, scale, size=2)
        perturbation = Perturbation(
            rows={k: (float(le), float(ge)) for k, (le, ge) in zip(row_keys, relax)},
            objective_lower=float(obj_shifts[0]),
            objective_upper=float(obj_shifts[1]),
        )

        def batch_args(b_lo, b_hi):
            return (
                model, rep_assumptions, rep["theta"], target, signs, table.masses,
                n, slack, perturbation, config.rng_seed, t_idx, b_lo, b_hi, geo_config,
            )

        if n_jobs <= 1:
            results = _replication_batch(batch_args(1, config.bootstrap + 1))
        else:
            from concurrent.futures import ProcessPoolExecutor

            edges = np.linspace(1, config.bootstrap + 1, n_jobs * 4 + 1).astype(int)
            batches = [batch_args(a, b) for a, b in zip(edges, edges[1:]) if a < b]
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = [r for chunk in pool.map(_replication_batch, batches) for r in chunk]
            results.sort(key=lambda r: r[0])

        lowers = [lb for _, lb, _ in results if lb is not None]
        uppers = [ub for _, _, ub in results if ub is not None]

        if not lowers:
            logger.warning(
                "representative point %d: all %d bootstrap replications infeasible; "
                "it contributes nothing to the confidence set",
                rep["cone_id"],
                config.bootstrap,
            )
            per_theta.append(
                ThetaConfidence(
                    cone_id=rep["cone_id"],
                    theta=rep["theta"],
                    ordering=rep["ordering"],
                    cs=None,
                    half_median=None,
                    n_feasible=0,
                    n_replications=config.bootstrap,
                    endpoint_spread=None,
                )
            )
            continue
        lo = np.array(lowers)
        hi = np.array(uppers)
        cs = (
            float(np.quantile(lo, config.alpha / 2, method="linear")),
            float(np.quantile(hi, 1 - config.alpha / 2, method="linear")),
        )
        half = (
            float(np.quantile(lo, 0.5, method="linear")),
            float(np.quantile(hi, 0.5, method="linear")),
        )
        cs_intervals.append(cs)
        half_intervals.append(half)
        per_theta.append(
            ThetaConfidence(
                cone_id=rep["cone_id"],
                theta=rep["theta"],
                ordering=rep["ordering"],
                cs=cs,
                half_median=half,
                n_feasible=len(lowers),
                n_replications=config.bootstrap,
                endpoint_spread=(float(lo.std()), float(hi.std())),
            )
        )

    plug_in = bounds_mod.identified_set(
        model, target, assumptions, table, slack=slack, config=geo_config, solve_fn=solve_fn
    )
    plug_in.metadata["n"] = n
    cs_union = bounds_mod.merge_intervals(cs_intervals)
    half_union = bounds_mod.merge_intervals(half_intervals)
    meta = {
        "n": n,
        "bootstrap": config.bootstrap,
        "alpha": config.alpha,
        "slack": slack,
        "slack_base": config.slack_base,
        "perturbation_scale": config.perturbation_scale,
        "perturbation_law": "uniform(-kappa/sqrt(n), kappa/sqrt(n)) per row and per objective, fixed across replications",
        "rng_seed": config.rng_seed,
        "endpoint_method": "percentile",
    }
    return ConfidenceReport(
        plug_in=plug_in,
        half_median_union=half_union,
        half_median_hull=(half_union[0][0], half_union[-1][1]) if half_union else None,
        cs_union=cs_union,
        cs_hull=(cs_union[0][0], cs_union[-1][1]) if cs_union else None,
        per_theta=tuple(per_theta),
        metadata=meta,
    )


def interval_union_hausdorff(
    a: list[tuple[float, float]], b: list[tuple[float, float]]
) -> float:
    """Hausdorff distance between two finite unions of closed intervals."""
    a = sorted(a)
    b = sorted(b)
    if not a or not b:
        return math.inf if a != b else 0.0

    def dist_to(x: float, intervals) -> float:
        return min(0.0 if lo <= x <= hi else min(abs(x - lo), abs(x - hi)) for lo, hi in intervals)

    def contains(x: float, intervals) -> bool:
        return any(lo <= x <= hi for lo, hi in intervals)

    def directed(src, dst) -> float:
        # the sup of dist(., dst) over src is attained at an endpoint of src
        # or at a dst-gap midpoint lying inside src
        candidates = [e for lo, hi in src for e in (lo, hi)]
        for (_, hi_prev), (lo_next, _) in zip(dst, dst[1:]):
            mid = 0.5 * (hi_prev + lo_next)
            if contains(mid, src):
                candidates.append(mid)
        return max(dist_to(x, dst) for x in candidates)

    return max(directed(a, b), directed(b, a))


@dataclass(frozen=True)
class DgpSpec:
    """Synthetic data-generating process for coverage and consistency checks.

    kind 'separable-threshold': Y = 1{x_W * theta0 >= U} with U uniform on
    [0, 1] and W drawn from a stratum-dependent distribution over the
    support values (strata are sub-intervals of [0, 1], which makes (W, U)
    dependent).  All population quantities are closed-form.

    kind 'random-coefficient': Y = 1{W * U1 >= U2} with U1 uniform per
    stratum (dependent with W) and U2 uniform and independent; the true
    average treatment effect is evaluated by a large Monte Carlo oracle.
    """

    kind: str
    n: int
    seed: int
    support_values: tuple[float, ...] = (0.25, 0.75)
    theta0: float = 1.0
    strata: tuple[float, ...] = (0.0, 0.5, 1.0)  # breakpoints of [0, 1]
    mixing: tuple[tuple[float, ...], ...] | None = None  # (K, m) rows P(W = x_j | stratum)
    w_treated: float | None = None
    w_control: float | None = None

    def __post_init__(self):
        if self.kind not in ("separable-threshold", "random-coefficient"):
            raise ValueError(f"unknown dgp kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.strata) < 2 or list(self.strata) != sorted(self.strata):
            raise ValueError("strata must be ascending breakpoints")
        m = len(self.support_values)
        if self.mixing is None:
            # default: lower latent strata prefer lower support values
            k = len(self.strata) - 1
            rows = []
            for i in range(k):
                weights = np.arange(1, m + 1, dtype=float)[::-1] + i * np.arange(m)
                rows.append(tuple(weights / weights.sum()))
            object.__setattr__(self, "mixing", tuple(rows))
        mix = np.asarray(self.mixing, dtype=float)
        if mix.shape != (len(self.strata) - 1, m):
            raise ValueError(f"mixing must have shape ({len(self.strata) - 1}, {m})")
        if np.any(mix < 0) or not np.allclose(mix.sum(axis=1), 1.0):
            raise ValueError("mixing rows must be distributions")


@dataclass(frozen=True)
class SimulatedData:
    dataset: Dataset
    model: ModelSpec
    true_table: ProbabilityTable
    true_ate: float
    params: dict


def _threshold(spec: DgpSpec, x: float) -> float:
    return min(max(x * spec.theta0, 0.0), 1.0)


def simulate_dgp(spec: DgpSpec) -> SimulatedData:
    """Draw a dataset and report the exact population quantities alongside it."""
    rng = np.random.default_rng(spec.seed)
    xs = np.asarray(spec.support_values, dtype=float)
    m = xs.size
    mix = np.asarray(spec.mixing, dtype=float)
    breaks = np.asarray(spec.strata, dtype=float)
    widths = np.diff(breaks)

    if spec.kind == "separable-threshold":
        u = rng.uniform(0.0, 1.0, size=spec.n)
        stratum = np.clip(np.searchsorted(breaks, u, side="right") - 1, 0, len(widths) - 1)
        w_idx = np.array([rng.choice(m, p=mix[k]) for k in stratum])
        tau = np.array([_threshold(spec, x) for x in xs])
        y = (u <= tau[w_idx]).astype(int)
        data = Dataset(y=y, w=xs[w_idx][:, None], z=np.zeros((spec.n, 0)))

        sup = tuple(model_mod.SupportPoint(w=(float(x),)) for x in xs)
        model = ModelSpec(
            support=sup, latent_dim=1, index=model_mod.SeparableIndex(coef=xs[:, None])
        )
        masses = np.zeros((2, m))
        for j in range(m):
            for k, width in enumerate(widths):
                inside = max(0.0, min(breaks[k + 1], tau[j]) - breaks[k])
                p_joint = mix[k, j] * width
                masses[1, j] += mix[k, j] * inside
                masses[0, j] += p_joint - mix[k, j] * inside
        table = ProbabilityTable(support=sup, masses=masses)
        w1 = spec.w_treated if spec.w_treated is not None else float(xs[-1])
        w0 = spec.w_control if spec.w_control is not None else float(xs[0])
        true_ate = _threshold(spec, w1) - _threshold(spec, w0)
        return SimulatedData(
            dataset=data,
            model=model,
            true_table=table,
            true_ate=true_ate,
            params={"kind": spec.kind, "theta0": spec.theta0, "w_treated": w1, "w_control": w0},
        )

    # random-coefficient: Y = 1{W u1 >= u2}, u1 uniform on [0, 1] and
    # dependent with W through the strata, u2 uniform on [-1, 1] independent
    if np.any(np.abs(xs) > 1.0):
        raise ValueError("random-coefficient support values must lie in [-1, 1]")
    u1 = rng.uniform(0.0, 1.0, size=spec.n)
    stratum = np.clip(np.searchsorted(breaks, u1, side="right") - 1, 0, len(widths) - 1)
    u2 = rng.uniform(-1.0, 1.0, size=spec.n)
    w_idx = np.array([rng.choice(m, p=mix[k]) for k in stratum])
    y = (xs[w_idx] * u1 >= u2).astype(int)
    data = Dataset(y=y, w=xs[w_idx][:, None], z=np.zeros((spec.n, 0)))

    sup = tuple(model_mod.SupportPoint(w=(float(x),)) for x in xs)
    x_r = np.column_stack([xs, -np.ones(m)])
    model = ModelSpec(
        support=sup, latent_dim=2, index=model_mod.LinearIndex(x_r=x_r, x_f=np.zeros((m, 0)))
    )
    # P(x u1 >= u2, u1 in (a, b)) = int_a^b (x u + 1)/2 du, exact
    masses = np.zeros((2, m))
    for j in range(m):
        for k, width in enumerate(widths):
            a, b = breaks[k], breaks[k + 1]
            p_y1 = (xs[j] * (b * b - a * a) / 2.0 + (b - a)) / 2.0
            masses[1, j] += mix[k, j] * p_y1
            masses[0, j] += mix[k, j] * (width - p_y1)
    table = ProbabilityTable(support=sup, masses=masses)

    oracle = np.random.default_rng(spec.seed + 10**6)
    n_mc = 1_000_000
    u1_mc = oracle.uniform(0.0, 1.0, size=n_mc)
    u2_mc = oracle.uniform(-1.0, 1.0, size=n_mc)
    w1 = spec.w_treated if spec.w_treated is not None else float(xs[-1])
    w0 = spec.w_control if spec.w_control is not None else float(xs[0])
    true_ate = float(np.mean(w1 * u1_mc >= u2_mc) - np.mean(w0 * u1_mc >= u2_mc))
    return SimulatedData(
        dataset=data,
        model=model,
        true_table=table,
        true_ate=true_ate,
        params={"kind": spec.kind, "w_treated": w1, "w_control": w0, "mc_oracle_draws": n_mc},
    )
