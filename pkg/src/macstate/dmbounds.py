"""Inner/outer bounds and common-message capacity of the discrete memoryless model.

Regions are traced by scalarization: for each weight ``lam`` the solvers
maximize ``lam * Rc + (1 - lam) * R1`` over the rectangle-like set
``{R1 <= a, Rc + R1 <= b, Rc, R1 >= 0}`` induced by one input distribution,
and over the distributions by multi-start random search. Results are "best
found", not certified optima.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import _search
from .channels import (
    ChannelSpec,
    InnerDistribution,
    OuterDistribution,
    assemble_inner_joint,
    assemble_outer_joint,
)
from .probcore import mutual_information

DEFAULT_LAMBDAS = tuple(round(0.1 * i, 10) for i in range(11))
COST_TOL = 1e-12


class OptimizerError(ValueError):
    """Invalid optimizer configuration or unsatisfiable cost constraint."""


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 64
    refine_iters: int = 600
    step_shrink: float = 0.5
    seed: int = 0
    tolerance: float = 1e-6
    u_size: int | None = None
    v_size: int | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise OptimizerError("restarts must be >= 1")
        if self.refine_iters < 0:
            raise OptimizerError("refine_iters must be >= 0")
        if not 0 < self.step_shrink < 1:
            raise OptimizerError("step_shrink must lie in (0, 1)")
        if self.tolerance <= 0:
            raise OptimizerError("tolerance must be positive")
        for name in ("u_size", "v_size"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise OptimizerError(f"{name} must be >= 1")

    def sizes(self, channel: ChannelSpec) -> tuple[int, int]:
        """(u_size, v_size) with the heuristic defaults filled in."""
        u = self.u_size or channel.x1_size * channel.x2_size * channel.s_size + 2
        v = self.v_size or channel.s_size + 1
        return u, v


@dataclass(frozen=True)
class RatePair:
    rc: float
    r1: float

    def __post_init__(self):
        if not (np.isfinite(self.rc) and np.isfinite(self.r1)) or self.rc < 0 or self.r1 < 0:
            raise ValueError(f"invalid rate pair ({self.rc}, {self.r1})")


@dataclass(frozen=True)
class RegionPoint:
    lam: float
    pair: RatePair
    objective: float
    r1_bound: float
    rsum_bound: float
    params: Any = None  # InnerDistribution / OuterDistribution / CorrelationPoint


@dataclass(frozen=True)
class RateRegion:
    kind: str  # "inner" | "outer" | "capacity-line"
    points: tuple[RegionPoint, ...]
    infeasible: bool = False
    notes: dict = field(default_factory=dict)

    def objective_at(self, lam: float) -> float:
        for p in self.points:
            if p.lam == lam:
                return p.objective
        raise KeyError(lam)

    def rows(self) -> list[dict]:
        return [
            {"lambda": p.lam, "rc": p.pair.rc, "r1": p.pair.r1, "objective": p.objective,
             "r1_bound": p.r1_bound, "rsum_bound": p.rsum_bound}
            for p in self.points
        ]

    def envelope(self) -> list[tuple[float, float]]:
        """Corner points (Rc, R1) of the union of per-point rectangles, Pareto-filtered."""
        corners = set()
        for p in self.points:
            a, b = max(p.r1_bound, 0.0), max(p.rsum_bound, 0.0)
            r1 = min(a, b)
            corners.add((b - r1, r1))
            corners.add((b, 0.0))
        pareto = [c for c in corners
                  if not any(o != c and o[0] >= c[0] and o[1] >= c[1] for o in corners)]
        return sorted(pareto)

    def time_sharing_hull(self) -> list[tuple[float, float]]:
        """Upper concave hull of the envelope together with the axis intercepts."""
        pts = self.envelope()
        if not pts:
            return []
        pts = sorted(set(pts) | {(0.0, max(p[1] for p in pts)), (max(p[0] for p in pts), 0.0)})
        hull: list[tuple[float, float]] = []
        for pt in sorted(pts, key=lambda t: (t[0], -t[1])):
            while len(hull) >= 2:
                (x1, y1), (x2, y2) = hull[-2], hull[-1]
                if (x2 - x1) * (pt[1] - y1) - (y2 - y1) * (pt[0] - x1) >= 0:
                    hull.pop()
                else:
                    break
            hull.append(pt)
        return hull


def scalarize(lam: float, r1_bound: float, rsum_bound: float) -> tuple[float, RatePair]:
    """Best ``lam*Rc + (1-lam)*R1`` over {R1 <= a, Rc+R1 <= b, Rc, R1 >= 0}."""
    a, b = max(r1_bound, 0.0), max(rsum_bound, 0.0)
    if lam > 0.5:
        rc, r1 = b, 0.0
    else:
        r1 = min(a, b)
        rc = b - r1
    return lam * rc + (1.0 - lam) * r1, RatePair(rc, r1)


def _check_lambdas(lambdas: Sequence[float]) -> list[float]:
    lams = sorted(float(l) for l in lambdas)
    if not lams or lams[0] < 0 or lams[-1] > 1:
        raise OptimizerError("lambdas must be a nonempty subset of [0, 1]")
    return lams


# --- direct evaluations (named-axis path) ----------------------------------

def inner_rates_at(
    channel: ChannelSpec, dist: InnerDistribution, tolerance: float = 1e-9
) -> tuple[float, float, bool, float]:
    """(r1_bound, rsum_bound, feasible, rs) of one inner-bound distribution."""
    pmf = assemble_inner_joint(channel, dist)
    mi = lambda a, b, c=(): mutual_information(pmf, a, b, c)  # noqa: E731
    r1 = mi("U", "Y", ("V", "X2")) - mi("U", "S", ("V", "X2"))
    rsum = mi(("U", "V", "X2"), "Y") - mi(("U", "V", "X2"), "S")
    slack = mi(("V", "X2"), "Y") - mi(("V", "X2"), "S")
    rs = mi("V", "S") - mi("V", "Y")
    return r1, rsum, bool(slack >= -tolerance), rs


def outer_rates_at(channel: ChannelSpec, dist: OuterDistribution) -> tuple[float, float]:
    """(r1_bound, rsum_bound) of the outer bound at one distribution."""
    pmf = assemble_outer_joint(channel, dist)
    r1 = mutual_information(pmf, "X1", "Y", ("S", "X2"))
    rsum = mutual_information(pmf, ("X1", "X2"), "Y", "S") - mutual_information(pmf, "X2", "S", "Y")
    return r1, rsum


def region_form_identity(channel: ChannelSpec, dist: InnerDistribution) -> tuple[float, float]:
    """Sum-rate bound computed directly (lhs) and via the compression-rate split (rhs)."""
    pmf = assemble_inner_joint(channel, dist)
    mi = lambda a, b, c=(): mutual_information(pmf, a, b, c)  # noqa: E731
    lhs = mi(("U", "V", "X2"), "Y") - mi(("U", "V", "X2"), "S")
    rs = mi("V", "S") - mi("V", "Y")
    rhs = mi(("U", "X2"), "Y", "V") - mi(("U", "X2"), "S", "V") - rs
    return lhs, rhs


def common_rate_at(channel: ChannelSpec, p_x2, p_ux1_given_sx2) -> float:
    """I(U,X2;Y) - I(U;S|X2) for P_X2 P_{U,X1|S,X2} (V taken constant)."""
    dist = InnerDistribution(p_x2, np.ones((1, channel.s_size)), p_ux1_given_sx2)
    pmf = assemble_inner_joint(channel, dist)
    return mutual_information(pmf, ("U", "X2"), "Y") - mutual_information(pmf, "U", "S", "X2")


# --- search machinery -------------------------------------------------------

class Scalarized(_search.Objective):
    """``lam*Rc + (1-lam)*R1`` of the best rate pair under quantities ``a`` and ``b``.

    The search value adds ``min(b, 0)`` (and ``min(a, 0)`` when ``lam == 0``).
    The penalty is only nonzero where the clipped value is flat at 0, so it
    never changes which positive point wins but gives ascent a slope there.
    """

    def __init__(self, lam: float):
        self.lam = lam

    def __call__(self, q):
        a, b = q["a"], q["b"]
        pen = min(b, 0.0) + (min(a, 0.0) if self.lam == 0 else 0.0)
        return scalarize(self.lam, a, b)[0] + pen

    def weights(self, q):
        lam, a, b = self.lam, q["a"], q["b"]
        w = {"a": 0.0, "b": 0.0}
        if b > 0:
            if lam > 0.5:
                w["b"] += lam
            elif a <= 0:
                w["b"] += lam
            elif a <= b:
                w["a"] += 1.0 - 2.0 * lam
                w["b"] += lam
            else:
                w["b"] += 1.0 - lam
        if a < 0 and lam == 0:
            w["a"] += 1.0
        if b < 0:
            w["b"] += 1.0
        return w


def _cost_bounds(channel: ChannelSpec) -> dict:
    out = {}
    for axis, c in channel.costs.items():
        vec = np.asarray(c.vector)
        if vec.min() > c.budget + COST_TOL:
            raise OptimizerError(f"cost budget for {axis} is below the cheapest symbol")
        out[axis] = (vec, c.budget)
    return out


def _tilt_to_budget(rows: np.ndarray, shape: tuple, vec: np.ndarray, cost_of, budget: float) -> np.ndarray:
    """KL projection of conditional rows onto an expected-cost budget.

    ``rows`` reshaped to ``shape`` has the costed symbol on its last axis. Each
    row is tilted by exp(-mu * cost) and renormalized, with mu found by
    bisection; zero entries stay zero, so deterministic structure survives.
    """
    if cost_of(rows) <= budget:
        return rows
    f = rows.reshape(shape).copy()
    # a trace of the cheapest symbol wherever there is mass keeps the tilt able to reach the budget
    f[..., int(np.argmin(vec))] += 1e-12 * f.sum(axis=-1)
    excess = np.asarray(vec, dtype=float) - float(np.min(vec))

    def tilt(mu):
        g = (f * np.exp(-mu * excess)).reshape(rows.shape)
        return g / g.sum(axis=1, keepdims=True)

    lo, hi = 0.0, 1.0
    while cost_of(tilt(hi)) > budget and hi < 1e6:
        lo, hi = hi, hi * 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cost_of(tilt(mid)) > budget:
            lo = mid
        else:
            hi = mid
    return tilt(hi)


class _CostedProblem(_search.FactorProblem):
    """Blocks 0 and ``x1_block`` carry P_X2 and a conditional whose last axis is X1."""

    x1_block = 1

    def __init__(self, channel: ChannelSpec):
        self.ch = channel
        self.costs = _cost_bounds(channel)
        self.S, self.X1, self.X2 = channel.s_size, channel.x1_size, channel.x2_size

    def _x1_cost(self, px2: np.ndarray, rows: np.ndarray) -> float:
        vec = self.costs["x1"][0]
        blk = self.blocks[self.x1_block]
        # rows are indexed (s, x2, ..., x1) or (x2, s, x1); weight each slice by P(s)P(x2)
        f = rows.reshape(blk.shape)
        w = np.einsum(f"s,x->{blk.letters[:2]}", self.ch.state_law, px2)
        return float(np.einsum(f"{blk.letters[:2]},{blk.letters},a->", w, f, vec))

    def cost_ok(self, params) -> bool:
        px2 = params[0][0]
        if "x2" in self.costs and px2 @ self.costs["x2"][0] > self.costs["x2"][1] + COST_TOL:
            return False
        if "x1" in self.costs and self._x1_cost(px2, params[self.x1_block]) > self.costs["x1"][1] + COST_TOL:
            return False
        return True

    def repair(self, params):
        if "x2" in self.costs:
            vec, budget = self.costs["x2"]
            params[0] = _tilt_to_budget(params[0], params[0].shape, vec,
                                        lambda r: float(r[0] @ vec), budget)
        if "x1" in self.costs:
            vec, budget = self.costs["x1"]
            blk = self.blocks[self.x1_block]
            px2 = params[0][0]
            params[self.x1_block] = _tilt_to_budget(
                params[self.x1_block], blk.shape, vec, lambda r: self._x1_cost(px2, r), budget)
        return params


class _InnerProblem(_CostedProblem):
    """Blocks: P_X2 (1, X2); P_{V|S} rows (S, V); P_{U,X1|S,X2} rows (S*X2, U*X1)."""

    out = "svuxy"
    x1_block = 2

    def __init__(self, channel: ChannelSpec, u: int, v: int, tolerance: float):
        super().__init__(channel)
        self.u, self.v, self.tol = u, v, tolerance
        self.consts = [("s", channel.state_law), ("saxy", channel.transition)]
        self.blocks = [
            _search.Block("x", (self.X2,), 0),
            _search.Block("sv", (self.S, v), 1),
            _search.Block("sxua", (self.S, self.X2, u, self.X1), 2),
        ]
        mi = _search.mi_terms
        self.quantities = {
            "a": mi("u", "y", "vx") + [(-c, l) for c, l in mi("u", "s", "vx")],
            "b": mi("uvx", "y") + [(-c, l) for c, l in mi("uvx", "s")],
            "slack": mi("vx", "y") + [(-c, l) for c, l in mi("vx", "s")],
        }

    def check(self, q):
        return q["slack"] >= -self.tol

    def sample(self, rng):
        params = super().sample(rng)
        # half the starts use a deterministic V (constant, or a function of S)
        if self.v > 1 and rng.random() < 0.5:
            pick = np.zeros(self.S, int) if rng.random() < 0.5 else rng.integers(self.v, size=self.S)
            params[1] = np.eye(self.v)[pick]
        return params

    def to_dist(self, params) -> InnerDistribution:
        px2 = params[0][0]
        pv = params[1].T
        pu = params[2].reshape(self.S, self.X2, self.u, self.X1).transpose(2, 3, 0, 1)
        return InnerDistribution(px2 / px2.sum(), pv / pv.sum(axis=0),
                                 pu / pu.sum(axis=(0, 1), keepdims=True))

    def _raw_seeds(self):
        out = []
        v_opts = [np.eye(self.v)[np.zeros(self.S, int)]]
        if self.v >= self.S and self.v > 1:
            v_opts.append(np.eye(self.v)[np.arange(self.S)])
        for pv in v_opts:
            for copy_u in ((False, True) if self.u >= self.X1 else (False,)):
                pu = np.zeros((self.S * self.X2, self.u, self.X1))
                for a in range(self.X1):
                    pu[:, a if copy_u else 0, a] = 1.0 / self.X1
                out.append([np.full((1, self.X2), 1.0 / self.X2), pv.astype(float),
                            pu.reshape(self.S * self.X2, self.u * self.X1)])
        return out

    def seeds(self):
        """Structured starts: V constant or a copy of S, U constant or a copy of X1."""
        return [self.repair(p) for p in self._raw_seeds()]


class _CommonProblem(_InnerProblem):
    """Inner parameterization without V: maximizes I(U,X2;Y) - I(U;S|X2)."""

    out = "suxy"
    x1_block = 1

    def __init__(self, channel: ChannelSpec, u: int):
        super().__init__(channel, u, 1, 0.0)
        self.blocks = [self.blocks[0], self.blocks[2]]
        mi = _search.mi_terms
        self.quantities = {"c": mi("ux", "y") + [(-c, l) for c, l in mi("u", "s", "x")]}

    def check(self, q):
        return True

    def to_dist(self, params) -> InnerDistribution:
        return super().to_dist([params[0], np.ones((self.S, 1)), params[1]])

    def seeds(self):
        return [self.repair([p[0], p[2]]) for p in self._raw_seeds()]


class _OuterProblem(_CostedProblem):
    """Blocks: P_X2 (1, X2); P_{X1|X2,S} rows (X2*S, X1)."""

    out = "saxy"
    x1_block = 1

    def __init__(self, channel: ChannelSpec):
        super().__init__(channel)
        self.consts = [("s", channel.state_law), ("saxy", channel.transition)]
        self.blocks = [
            _search.Block("x", (self.X2,), 0),
            _search.Block("xsa", (self.X2, self.S, self.X1), 2),
        ]
        mi = _search.mi_terms
        self.quantities = {
            "a": mi("a", "y", "sx"),
            "b": mi("ax", "y", "s") + [(-c, l) for c, l in mi("x", "s", "y")],
        }

    def to_dist(self, params) -> OuterDistribution:
        px2 = params[0][0]
        px1 = params[1].reshape(self.X2, self.S, self.X1).transpose(2, 0, 1)
        return OuterDistribution(px2 / px2.sum(), px1 / px1.sum(axis=0))

    def seeds(self):
        return [self.repair([np.full((1, self.X2), 1.0 / self.X2),
                             np.full((self.X2 * self.S, self.X1), 1.0 / self.X1)])]


def _run(problem, objectives, cfg: OptimizerConfig):
    return _search.multistart(
        problem, objectives,
        restarts=cfg.restarts, refine_iters=cfg.refine_iters,
        step_shrink=cfg.step_shrink, min_step=cfg.tolerance, seed=cfg.seed,
    )


def _trace(problem, kind: str, cfg: OptimizerConfig, lambdas: Sequence[float], notes: dict) -> RateRegion:
    lams = _check_lambdas(lambdas)
    best = _run(problem, [Scalarized(lam) for lam in lams], cfg)
    points, infeasible = [], False
    for lam, cand in zip(lams, best):
        if cand is None:
            infeasible = True
            points.append(RegionPoint(lam, RatePair(0.0, 0.0), 0.0, 0.0, 0.0, None))
            continue
        a, b = cand.stats["a"], cand.stats["b"]
        obj, pair = scalarize(lam, a, b)
        points.append(RegionPoint(lam, pair, obj, a, b, problem.to_dist(cand.params)))
    return RateRegion(kind, tuple(points), infeasible, notes)


def inner_region(
    channel: ChannelSpec, cfg: OptimizerConfig = OptimizerConfig(),
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
) -> RateRegion:
    """Scalarized boundary of the achievable region (best found per weight)."""
    u, v = cfg.sizes(channel)
    problem = _InnerProblem(channel, u, v, cfg.tolerance)
    return _trace(problem, "inner", cfg, lambdas, {"u_size": u, "v_size": v})


def outer_region(
    channel: ChannelSpec, cfg: OptimizerConfig = OptimizerConfig(),
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
) -> RateRegion:
    """Scalarized boundary of the outer bound (best found per weight)."""
    return _trace(_OuterProblem(channel), "outer", cfg, lambdas, {})


def common_capacity(
    channel: ChannelSpec, cfg: OptimizerConfig = OptimizerConfig()
) -> tuple[float, InnerDistribution]:
    """Best found max of I(U,X2;Y) - I(U;S|X2); the distribution has a constant V."""
    u, _ = cfg.sizes(channel)
    problem = _CommonProblem(channel, u)
    [cand] = _run(problem, [_search.Linear(c=1.0)], cfg)
    return cand.value, problem.to_dist(cand.params)


def config_dict(cfg: OptimizerConfig) -> dict:
    return asdict(cfg)
