"""Binary response model declaration: support, index function, assumptions, targets.

The model is Y = 1{phi(X, U) >= 0} with X on a finite support of m points,
partitioned as X = (W, Z) into endogenous values and instruments.  Three
index kinds are supported:

  saturated   phi unrestricted; every sign vector in {0,1}^m is a possible
              response type.
  linear      phi = x_r' u + x_f' theta; the latent geometry at a given
              theta is a hyperplane arrangement, and profiling over theta
              is available.
  separable   phi = x' theta - u with scalar u; admissible response types
              are the staircase sets of the ordering the index induces on
              the support.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import cones, geometry
from .geometry import GeometryConfig, Hyperplane, SignVector

SATURATED_M_CAP = 20
EXHAUSTIVE_ORDERINGS_CAP = 8


@dataclass(frozen=True)
class SupportPoint:
    """One support value of X = (W, Z); counterfactual-only points carry observed=False."""

    w: tuple[float, ...]
    z: tuple[float, ...] = ()
    observed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))

    @property
    def x(self) -> tuple[float, ...]:
        return self.w + self.z


@dataclass(frozen=True)
class SaturatedIndex:
    kind: str = "saturated"


@dataclass(frozen=True)
class LinearIndex:
    """phi(x, u, theta) = x_r' u + x_f' theta; row j of each matrix belongs to support point j."""

    x_r: np.ndarray
    x_f: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "x_r", np.atleast_2d(np.asarray(self.x_r, dtype=float)))
        xf = np.asarray(self.x_f, dtype=float)
        if xf.size == 0:
            xf = xf.reshape(self.x_r.shape[0], -1)
        object.__setattr__(self, "x_f", np.atleast_2d(xf))


@dataclass(frozen=True)
class SeparableIndex:
    """phi(x, u, theta) = coef_x' theta - u with scalar latent u."""

    coef: np.ndarray
    kind: str = "separable"

    def __post_init__(self):
        object.__setattr__(self, "coef", np.atleast_2d(np.asarray(self.coef, dtype=float)))


@dataclass(frozen=True)
class ModelSpec:
    support: tuple[SupportPoint, ...]
    index: SaturatedIndex | LinearIndex | SeparableIndex
    latent_dim: int

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(self.support))
        pts = [(p.w, p.z) for p in self.support]
        if len(set(pts)) != len(pts):
            raise ValueError("support points must be distinct")
        if self.m == 0:
            raise ValueError("support must be nonempty")
        if isinstance(self.index, LinearIndex):
            if self.index.x_r.shape != (self.m, self.latent_dim):
                raise ValueError(
                    f"x_r shape {self.index.x_r.shape} != (m, d_u) = ({self.m}, {self.latent_dim})"
                )
            if self.index.x_f.shape[0] != self.m:
                raise ValueError(f"x_f must have {self.m} rows")
            if self.latent_dim + self.d_f < 1:
                raise ValueError("need at least one latent or fixed coefficient")
            rows = np.hstack([self.index.x_r, self.index.x_f])
            dead = np.flatnonzero(np.linalg.norm(rows, axis=1) < 1e-12)
            if dead.size:
                raise ValueError(f"support point {dead[0]} has an identically zero index")
        elif isinstance(self.index, SeparableIndex):
            if self.latent_dim != 1:
                raise ValueError("separable index requires a scalar latent variable")
            if self.index.coef.shape[0] != self.m:
                raise ValueError(f"coef must have {self.m} rows")

    @property
    def m(self) -> int:
        return len(self.support)

    @property
    def d_f(self) -> int:
        if isinstance(self.index, LinearIndex):
            return self.index.x_f.shape[1]
        if isinstance(self.index, SeparableIndex):
            return self.index.coef.shape[1]
        return 0

    @property
    def kind(self) -> str:
        return self.index.kind

    def w_values(self) -> list[tuple[float, ...]]:
        seen = []
        for p in self.support:
            if p.w not in seen:
                seen.append(p.w)
        return seen

    def z_values(self) -> list[tuple[float, ...]]:
        seen = []
        for p in self.support:
            if p.z not in seen:
                seen.append(p.z)
        return seen

    def point_index(self) -> dict[tuple, int]:
        return {(p.w, p.z): j for j, p in enumerate(self.support)}


@dataclass(frozen=True)
class CounterfactualMap:
    """Reassignment j -> gamma[j] of support indices under the intervention."""

    gamma: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "gamma", tuple(int(g) for g in self.gamma))

    def validate(self, m: int) -> None:
        for j, g in enumerate(self.gamma):
            if not 0 <= g < m:
                raise ValueError(f"gamma[{j}] = {g} is not a valid support index")
        if len(self.gamma) != m:
            raise ValueError(f"gamma has length {len(self.gamma)}, expected {m}")

    @classmethod
    def identity(cls, m: int) -> "CounterfactualMap":
        return cls(gamma=tuple(range(m)))

    @classmethod
    def set_w(cls, model: ModelSpec, w_value) -> "CounterfactualMap":
        """Map every point (w, z) to (w_value, z); the targets must exist in the support."""
        w_value = tuple(float(v) for v in w_value)
        idx = model.point_index()
        gamma = []
        for p in model.support:
            key = (w_value, p.z)
            if key not in idx:
                raise ValueError(f"counterfactual point w={w_value}, z={p.z} is not in the support")
            gamma.append(idx[key])
        return cls(gamma=tuple(gamma))


@dataclass(frozen=True)
class IndependenceSpec:
    """Z-columns in `independent` are independent of U given the `conditioning` columns.

    When `windows` is set, the first independent column is windowed: the
    constraint chains only link instrument values inside the same window,
    and nothing is imposed across windows.  Windows are closed intervals
    and must partition that column's support without overlap.
    """

    independent: tuple[int, ...]
    conditioning: tuple[int, ...] = ()
    windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "independent", tuple(int(i) for i in self.independent))
        object.__setattr__(self, "conditioning", tuple(int(i) for i in self.conditioning))
        object.__setattr__(
            self, "windows", tuple((float(a), float(b)) for a, b in self.windows)
        )
        if not self.independent:
            raise ValueError("independence needs at least one instrument column")
        if set(self.independent) & set(self.conditioning):
            raise ValueError("a column cannot be both independent and conditioning")

    def validate(self, model: ModelSpec) -> None:
        d_z = len(model.support[0].z)
        for c in self.independent + self.conditioning:
            if not 0 <= c < d_z:
                raise ValueError(f"z-column index {c} out of range (d_z = {d_z})")
        if self.windows:
            col = self.independent[0]
            vals = sorted({p.z[col] for p in model.support})
            for v in vals:
                hits = [w for w in self.windows if w[0] <= v <= w[1]]
                if len(hits) != 1:
                    raise ValueError(
                        f"windows must cover each support value of column {col} exactly once; "
                        f"value {v} is covered {len(hits)} times"
                    )


@dataclass(frozen=True)
class AssumptionSet:
    independence: IndependenceSpec | None = None
    monotonicity: tuple[tuple[int, int], ...] = ()
    separable_ordering: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "monotonicity", tuple((int(j), int(k)) for j, k in self.monotonicity)
        )
        if self.separable_ordering is not None:
            object.__setattr__(
                self, "separable_ordering", tuple(int(i) for i in self.separable_ordering)
            )

    def validate(self, model: ModelSpec) -> None:
        for j, k in self.monotonicity:
            if not (0 <= j < model.m and 0 <= k < model.m):
                raise ValueError(f"monotonicity pair ({j}, {k}) out of range")
        if self.independence is not None:
            self.independence.validate(model)
        if self.separable_ordering is not None:
            if sorted(self.separable_ordering) != list(range(model.m)):
                raise ValueError("separable_ordering must be a permutation of the support indices")


@dataclass(frozen=True)
class TargetFunctional:
    """What to bound: a counterfactual choice probability, an ATE, or custom weights.

    kind 'ccp': P(Y_gamma = 1 | Y = y, X = x_j).
    kind 'ccp_average': same probability averaged over z with weights
        P(Z = z | Y = y, W = w_value).
    kind 'ate': sum over observed cells of P(y, x_j) * (1{s[gamma(j)]=1} -
        1{s[gamma_base(j)]=1}).
    kind 'custom': explicit weights on individual (y, j, sign) entries.
    """

    kind: str
    y: int | None = None
    j: int | None = None
    w_value: tuple[float, ...] | None = None
    gamma: CounterfactualMap | None = None
    gamma_base: CounterfactualMap | None = None
    weights: tuple[tuple[int, int, SignVector, float], ...] | None = None

    def validate(self, model: ModelSpec) -> None:
        if self.kind not in ("ccp", "ccp_average", "ate", "custom"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind in ("ccp", "ccp_average", "ate") and self.gamma is None:
            raise ValueError(f"target kind {self.kind!r} needs a counterfactual map")
        if self.gamma is not None:
            self.gamma.validate(model.m)
        if self.gamma_base is not None:
            self.gamma_base.validate(model.m)
        if self.kind == "ate" and self.gamma_base is None:
            raise ValueError("ate needs both gamma and gamma_base")
        if self.kind == "ccp" and (self.y is None or self.j is None):
            raise ValueError("ccp needs y and a support index j")
        if self.kind == "ccp_average" and (self.y is None or self.w_value is None):
            raise ValueError("ccp_average needs y and w_value")
        if self.kind == "custom" and not self.weights:
            raise ValueError("custom target needs weights")


def hyperplanes_at_theta(model: ModelSpec, theta: np.ndarray) -> tuple[list[Hyperplane], dict[int, int]]:
    """Latent-space hyperplanes of the index at a fixed theta.

    Returns (hyperplanes, constant_bits): support points whose latent
    coefficient row is identically zero have no hyperplane, only a constant
    sign bit 1{offset >= 0}; they are returned separately so callers can
    splice them back into full-length sign vectors.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if isinstance(model.index, SaturatedIndex):
        raise ValueError("a saturated index has no latent-space geometry")
    if theta.size != model.d_f:
        raise ValueError(f"theta has length {theta.size}, expected {model.d_f}")
    if isinstance(model.index, LinearIndex):
        normals = model.index.x_r
        offsets = model.index.x_f @ theta if model.d_f else np.zeros(model.m)
    else:
        normals = np.full((model.m, 1), -1.0)
        offsets = model.index.coef @ theta
    hps: list[Hyperplane] = []
    constant_bits: dict[int, int] = {}
    for j in range(model.m):
        if np.linalg.norm(normals[j]) <= 1e-12:
            constant_bits[j] = 1 if offsets[j] >= 0 else 0
        else:
            hps.append(Hyperplane(normal=normals[j], offset=float(offsets[j]), id=j + 1))
    return hps, constant_bits


def admissible_signs(
    model: ModelSpec,
    theta: np.ndarray | None = None,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
) -> frozenset[SignVector]:
    """Response types with nonempty-interior cells at theta.

    Saturated models admit every sign vector (guarded at m <= 20; the full
    lattice is materialized, which is memory-heavy near the cap).  Linear
    and separable models delegate to the arrangement enumeration.
    """
    if isinstance(model.index, SaturatedIndex):
        if model.m > SATURATED_M_CAP:
            raise ValueError(f"saturated sign lattice guarded at m <= {SATURATED_M_CAP}")
        return frozenset(itertools.product((0, 1), repeat=model.m))
    theta = np.zeros(model.d_f) if theta is None else np.asarray(theta, dtype=float).ravel()
    hps, constant_bits = hyperplanes_at_theta(model, theta)
    hp_positions = [j for j in range(model.m) if j not in constant_bits]
    if hps:
        arr = geometry.enumerate_cells(hps, model.latent_dim, config)
        partial = arr.sign_set
    else:
        partial = frozenset({()})
    out = set()
    for ps in partial:
        full = [0] * model.m
        for pos, bit in zip(hp_positions, ps):
            full[pos] = bit
        for j, bit in constant_bits.items():
            full[j] = bit
        out.add(tuple(full))
    return frozenset(out)


@lru_cache(maxsize=None)
def orderings_bound(m: int, d: int) -> int:
    """Maximum number of support orderings a linear separable index can induce.

    Q(m, d) = Q(m-1, d) + (m-1) Q(m-1, d-1) with Q(m, 1) = 2 and
    Q(2, d) = 2; equals m! once d >= m - 1.
    """
    if m < 2 or d < 1:
        raise ValueError("orderings_bound needs m >= 2 and d >= 1")
    if d == 1 or m == 2:
        return 2
    return orderings_bound(m - 1, d) + (m - 1) * orderings_bound(m - 1, d - 1)


def ordering_from_values(values: np.ndarray) -> tuple[int, ...]:
    """Support indices sorted by ascending index value (ties by index)."""
    order = np.lexsort((np.arange(values.size), values))
    return tuple(int(i) for i in order)


def staircase_signs(ordering: tuple[int, ...]) -> frozenset[SignVector]:
    """Admissible response types for a separable model under a fixed ordering.

    With values v_{o_1} <= ... <= v_{o_m} and bit j = 1{u <= v_j}, exactly
    the m + 1 upper sets of the ordering are achievable.
    """
    m = len(ordering)
    out = []
    for t in range(m + 1):
        bits = [0] * m
        for i in ordering[m - t :]:
            bits[i] = 1
        out.append(tuple(bits))
    return frozenset(out)


def separable_orderings(
    model: ModelSpec,
    exhaustive: bool = False,
    config: GeometryConfig = geometry.DEFAULT_CONFIG,
) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Orderings of the support the separable index can induce, with witnesses.

    For the linear coefficient map the hyperplanes (coef_j - coef_k)' theta
    = 0 over pairs j < k partition parameter space into cones, one ordering
    per cone; returns one unit-norm theta per cone alongside the ordering
    it induces.  With exhaustive=True all m! permutations are returned
    instead (no pruning; guarded at m <= 8), for index functions that are
    not linear in theta; witnesses are then empty arrays.
    """
    if not isinstance(model.index, SeparableIndex):
        raise ValueError("separable_orderings needs a separable index")
    m = model.m
    if exhaustive:
        if m > EXHAUSTIVE_ORDERINGS_CAP:
            raise ValueError(f"exhaustive orderings guarded at m <= {EXHAUSTIVE_ORDERINGS_CAP}")
        return [(perm, np.zeros(0)) for perm in itertools.permutations(range(m))]
    coef = model.index.coef
    hps = []
    for j in range(m):
        for k in range(j + 1, m):
            delta = coef[j] - coef[k]
            if np.linalg.norm(delta) <= 1e-12:
                raise ValueError(
                    f"support points {j} and {k} have identical index coefficients; "
                    "their ordering is never strict"
                )
            hps.append(Hyperplane(normal=delta, offset=0.0, id=len(hps) + 1))
    arr = geometry.enumerate_cells(hps, model.d_f, config)
    out = []
    for cell in arr.cells:
        theta = cell.witness / np.linalg.norm(cell.witness)
        out.append((ordering_from_values(coef @ theta), theta))
    return out


def monotone_admissible(
    signs: frozenset[SignVector] | set[SignVector],
    pairs: tuple[tuple[int, int], ...],
) -> frozenset[SignVector]:
    """Drop response types violating phi(x_j, .) <= phi(x_k, .) for (j, k) pairs.

    Such an ordering of the index forbids 1{phi(x_j) >= 0} > 1{phi(x_k) >= 0},
    i.e. any s with s[j] > s[k].
    """
    return frozenset(s for s in signs if all(s[j] <= s[k] for j, k in pairs))
