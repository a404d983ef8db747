"""Channel models, factorized input distributions and the channel-spec file format.

Axis conventions: the state law ``q_s`` has shape (S,), the transition table
``w`` has shape (S, X1, X2, Y) with ``w[s, x1, x2, :]`` a pmf over outputs.
A product output Y = Y1 x Y2 x ... is flattened row-major; ``y_factors``
records the factor sizes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .probcore import JointPMF

SLICE_TOL = 1e-9
INNER_AXES = ("S", "V", "U", "X1", "X2", "Y")
OUTER_AXES = ("S", "X1", "X2", "Y")


class ChannelError(ValueError):
    """Invalid channel or distribution data.

    ``code`` is one of ``syntax``, ``field``, ``shape``, ``negative`` or
    ``normalization``; ``where`` locates the problem (line number or field path).
    """

    def __init__(self, code: str, message: str, where: str | None = None):
        self.code = code
        self.where = where
        loc = f" at {where}" if where else ""
        super().__init__(f"[{code}]{loc}: {message}")


@dataclass(frozen=True)
class CostConstraint:
    """Average input cost constraint E[vector[X]] <= budget."""

    vector: tuple[float, ...]
    budget: float

    def expected(self, pmf: np.ndarray) -> float:
        return float(np.dot(np.asarray(self.vector), pmf))


def _check_vector(name: str, arr: np.ndarray, where: str):
    if not np.all(np.isfinite(arr)):
        raise ChannelError("field", f"{name} has non-finite entries", where)
    if np.any(arr < 0):
        bad = tuple(int(i) for i in np.argwhere(arr < 0)[0])
        raise ChannelError("negative", f"negative probability in {name} at index {bad}", where)


def _check_slices(name: str, arr: np.ndarray, axis, labels: tuple[str, ...]):
    """Every slice summing over ``axis`` must be 1 within SLICE_TOL."""
    _check_vector(name, arr, name)
    sums = arr.sum(axis=axis)
    bad = np.argwhere(np.abs(sums - 1.0) > SLICE_TOL)
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        loc = ", ".join(f"{l}={i}" for l, i in zip(labels, idx))
        raise ChannelError(
            "normalization",
            f"slice ({loc}) of {name} sums to {sums[tuple(idx)]!r}",
            f"{name}[{loc}]",
        )


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    name: str
    state_law: np.ndarray
    transition: np.ndarray
    y_factors: tuple[int, ...] | None = None
    costs: Mapping[str, CostConstraint] = field(default_factory=dict)

    def __post_init__(self):
        q = np.array(self.state_law, dtype=float)
        w = np.array(self.transition, dtype=float)
        if q.ndim != 1 or w.ndim != 4 or w.shape[0] != q.shape[0]:
            raise ChannelError(
                "shape", f"state law {q.shape} / transition {w.shape} inconsistent", "w"
            )
        if min(w.shape) < 1:
            raise ChannelError("shape", "alphabet sizes must be >= 1", "alphabets")
        _check_vector("q_s", q, "q_s")
        if abs(q.sum() - 1.0) > SLICE_TOL:
            raise ChannelError("normalization", f"q_s sums to {q.sum()!r}", "q_s")
        _check_slices("w", w, -1, ("s", "x1", "x2"))
        if self.y_factors is not None:
            yf = tuple(int(f) for f in self.y_factors)
            if math.prod(yf) != w.shape[3] or min(yf) < 1:
                raise ChannelError("shape", f"y_factors {yf} do not multiply to |Y|={w.shape[3]}", "alphabets")
            object.__setattr__(self, "y_factors", yf)
        costs = {}
        for axis, c in dict(self.costs).items():
            if axis not in ("x1", "x2"):
                raise ChannelError("field", f"unknown cost axis {axis!r}", "costs")
            size = w.shape[1] if axis == "x1" else w.shape[2]
            c = c if isinstance(c, CostConstraint) else CostConstraint(**c)
            vec = tuple(float(v) for v in c.vector)
            if len(vec) != size:
                raise ChannelError("shape", f"cost vector for {axis} has length {len(vec)}, need {size}", f"costs.{axis}")
            costs[axis] = CostConstraint(vec, float(c.budget))
        q.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "state_law", q)
        object.__setattr__(self, "transition", w)
        object.__setattr__(self, "costs", costs)

    @property
    def s_size(self) -> int:
        return self.transition.shape[0]

    @property
    def x1_size(self) -> int:
        return self.transition.shape[1]

    @property
    def x2_size(self) -> int:
        return self.transition.shape[2]

    @property
    def y_size(self) -> int:
        return self.transition.shape[3]

    def __eq__(self, other):
        if not isinstance(other, ChannelSpec):
            return NotImplemented
        return (
            self.name == other.name
            and self.y_factors == other.y_factors
            and dict(self.costs) == dict(other.costs)
            and np.array_equal(self.state_law, other.state_law)
            and np.array_equal(self.transition, other.transition)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class InnerDistribution:
    """Factors P_X2, P_{V|S}, P_{U,X1|S,X2} of the inner-bound input law.

    Shapes: ``p_x2`` (X2,), ``p_v_given_s`` (V, S), ``p_ux1_given_sx2``
    (U, X1, S, X2); conditionals sum to one over their leading axes.
    """

    p_x2: np.ndarray
    p_v_given_s: np.ndarray
    p_ux1_given_sx2: np.ndarray

    def __post_init__(self):
        px2 = np.array(self.p_x2, dtype=float)
        pv = np.array(self.p_v_given_s, dtype=float)
        pu = np.array(self.p_ux1_given_sx2, dtype=float)
        if px2.ndim != 1 or pv.ndim != 2 or pu.ndim != 4:
            raise ChannelError("shape", "expected p_x2 (X2,), p_v_given_s (V,S), p_ux1_given_sx2 (U,X1,S,X2)")
        if pu.shape[3] != px2.shape[0] or pu.shape[2] != pv.shape[1]:
            raise ChannelError("shape", f"factor shapes {px2.shape}, {pv.shape}, {pu.shape} disagree")
        _check_slices("p_x2", px2, 0, ())
        _check_slices("p_v_given_s", pv, 0, ("s",))
        _check_slices("p_ux1_given_sx2", pu, (0, 1), ("s", "x2"))
        for a in (px2, pv, pu):
            a.setflags(write=False)
        object.__setattr__(self, "p_x2", px2)
        object.__setattr__(self, "p_v_given_s", pv)
        object.__setattr__(self, "p_ux1_given_sx2", pu)

    @property
    def v_size(self) -> int:
        return self.p_v_given_s.shape[0]

    @property
    def u_size(self) -> int:
        return self.p_ux1_given_sx2.shape[0]

    def to_dict(self) -> dict:
        return {
            "v_size": self.v_size,
            "u_size": self.u_size,
            "p_x2": self.p_x2.tolist(),
            "p_v_given_s": self.p_v_given_s.tolist(),
            "p_ux1_given_sx2": self.p_ux1_given_sx2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "InnerDistribution":
        try:
            dist = cls(d["p_x2"], d["p_v_given_s"], d["p_ux1_given_sx2"])
        except KeyError as exc:
            raise ChannelError("field", f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ChannelError):
                raise
            raise ChannelError("shape", str(exc)) from None
        for key, size in (("v_size", dist.v_size), ("u_size", dist.u_size)):
            if key in d and int(d[key]) != size:
                raise ChannelError("shape", f"{key}={d[key]} but tables give {size}", key)
        return dist

    def __eq__(self, other):
        if not isinstance(other, InnerDistribution):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("p_x2", "p_v_given_s", "p_ux1_given_sx2")
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class OuterDistribution:
    """Factors P_X2 (X2,) and P_{X1|X2,S} with shape (X1, X2, S)."""

    p_x2: np.ndarray
    p_x1_given_x2s: np.ndarray

    def __post_init__(self):
        px2 = np.array(self.p_x2, dtype=float)
        px1 = np.array(self.p_x1_given_x2s, dtype=float)
        if px2.ndim != 1 or px1.ndim != 3 or px1.shape[1] != px2.shape[0]:
            raise ChannelError("shape", f"factor shapes {px2.shape}, {px1.shape} disagree")
        _check_slices("p_x2", px2, 0, ())
        _check_slices("p_x1_given_x2s", px1, 0, ("x2", "s"))
        px2.setflags(write=False)
        px1.setflags(write=False)
        object.__setattr__(self, "p_x2", px2)
        object.__setattr__(self, "p_x1_given_x2s", px1)

    def to_dict(self) -> dict:
        return {"p_x2": self.p_x2.tolist(), "p_x1_given_x2s": self.p_x1_given_x2s.tolist()}


def inner_joint_array(channel: ChannelSpec, px2, pv, pu) -> np.ndarray:
    """Raw (S,V,U,X1,X2,Y) product table; no validation (optimizer hot path)."""
    return np.einsum(
        "s,x,vs,uasx,saxy->svuaxy",
        channel.state_law, px2, pv, pu, channel.transition,
        optimize=True,
    )


def outer_joint_array(channel: ChannelSpec, px2, px1) -> np.ndarray:
    """Raw (S,X1,X2,Y) product table; no validation."""
    return np.einsum(
        "s,x,axs,saxy->saxy",
        channel.state_law, px2, px1, channel.transition,
    )


def _as_pmf(names, arr) -> JointPMF:
    # factors are validated to 1e-9; absorb that slack so the pmf sums to 1
    return JointPMF.from_array(names, arr / arr.sum())


def _check_inner_dims(channel: ChannelSpec, dist: InnerDistribution):
    _, _, s, x2 = dist.p_ux1_given_sx2.shape
    x1 = dist.p_ux1_given_sx2.shape[1]
    if (s, x1, x2) != (channel.s_size, channel.x1_size, channel.x2_size):
        raise ChannelError(
            "shape",
            f"distribution alphabets (S={s}, X1={x1}, X2={x2}) do not match channel "
            f"(S={channel.s_size}, X1={channel.x1_size}, X2={channel.x2_size})",
        )


def assemble_inner_joint(channel: ChannelSpec, dist: InnerDistribution) -> JointPMF:
    """Joint pmf Q_S P_X2 P_{V|S} P_{U,X1|S,X2} W over (S, V, U, X1, X2, Y)."""
    _check_inner_dims(channel, dist)
    arr = inner_joint_array(channel, dist.p_x2, dist.p_v_given_s, dist.p_ux1_given_sx2)
    return _as_pmf(INNER_AXES, arr)


def assemble_outer_joint(channel: ChannelSpec, dist: OuterDistribution) -> JointPMF:
    """Joint pmf Q_S P_X2 P_{X1|X2,S} W over (S, X1, X2, Y)."""
    x1, x2, s = dist.p_x1_given_x2s.shape
    if (s, x1, x2) != (channel.s_size, channel.x1_size, channel.x2_size):
        raise ChannelError("shape", "outer distribution alphabets do not match channel")
    return _as_pmf(OUTER_AXES, outer_joint_array(channel, dist.p_x2, dist.p_x1_given_x2s))


def random_inner_distribution(
    channel: ChannelSpec, u_size: int, v_size: int, rng: np.random.Generator, alpha: float = 1.0
) -> InnerDistribution:
    s, x1, x2 = channel.s_size, channel.x1_size, channel.x2_size
    px2 = rng.dirichlet(np.full(x2, alpha))
    pv = rng.dirichlet(np.full(v_size, alpha), size=s).T
    pu = rng.dirichlet(np.full(u_size * x1, alpha), size=(s, x2))
    pu = np.moveaxis(pu.reshape(s, x2, u_size, x1), (2, 3), (0, 1))
    return InnerDistribution(px2, pv, pu)


def random_outer_distribution(
    channel: ChannelSpec, rng: np.random.Generator, alpha: float = 1.0
) -> OuterDistribution:
    px2 = rng.dirichlet(np.full(channel.x2_size, alpha))
    px1 = rng.dirichlet(np.full(channel.x1_size, alpha), size=(channel.x2_size, channel.s_size))
    return OuterDistribution(px2, np.moveaxis(px1, 2, 0))


def random_channel(
    rng: np.random.Generator, s: int = 2, x1: int = 2, x2: int = 2, y: int = 2, name: str = "random"
) -> ChannelSpec:
    return ChannelSpec(name, rng.dirichlet(np.ones(s)), rng.dirichlet(np.ones(y), size=(s, x1, x2)))


def make_example_channel(p: float, q1: float | None = None, q2: float | None = None) -> ChannelSpec:
    """Binary MAC with Y = (Y1, Y2), Y1 = X1 + S + Z1 (mod 2), Y2 = X2.

    S ~ Bern(1/2), Z1 ~ Bern(p). Optional q1/q2 attach the expected-weight
    constraints E[X1] <= q1 and E[X2] <= q2.
    """
    if not 0.0 <= p <= 1.0:
        raise ChannelError("field", f"p={p!r} outside [0, 1]", "p")
    w = np.zeros((2, 2, 2, 4))
    for s in range(2):
        for x1 in range(2):
            for x2 in range(2):
                clean = x1 ^ s
                w[s, x1, x2, clean * 2 + x2] += 1 - p
                w[s, x1, x2, (1 - clean) * 2 + x2] += p
    costs = {}
    if q1 is not None:
        costs["x1"] = CostConstraint((0.0, 1.0), float(q1))
    if q2 is not None:
        costs["x2"] = CostConstraint((0.0, 1.0), float(q2))
    return ChannelSpec(f"binary-example(p={p!r})", np.array([0.5, 0.5]), w, (2, 2), costs)


# --- file format -----------------------------------------------------------

def _num(x: float) -> str:
    if x == 0:
        return "0.0"
    text = format(float(x), ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _nested(arr: np.ndarray, indent: int) -> str:
    if arr.ndim == 1:
        return "[" + ", ".join(_num(v) for v in arr) + "]"
    pad = " " * (indent + 2)
    inner = (",\n" + pad).join(_nested(a, indent + 2) for a in arr)
    return "[\n" + pad + inner + "\n" + " " * indent + "]"


def serialize_channel(spec: ChannelSpec) -> str:
    """Canonical channel-spec text (JSON syntax, 17 significant digits, LF)."""
    alph = [f'"s": {spec.s_size}', f'"x1": {spec.x1_size}', f'"x2": {spec.x2_size}']
    if spec.y_factors is not None:
        alph.append('"y_factors": [' + ", ".join(str(f) for f in spec.y_factors) + "]")
    else:
        alph.append(f'"y": {spec.y_size}')
    lines = [
        "{",
        f'  "name": {json.dumps(spec.name, ensure_ascii=False)},',
        '  "alphabets": {' + ", ".join(alph) + "},",
        f'  "q_s": {_nested(spec.state_law, 2)},',
    ]
    w_line = f'  "w": {_nested(spec.transition, 2)}'
    if spec.costs:
        lines.append(w_line + ",")
        items = []
        for axis in ("x1", "x2"):
            if axis in spec.costs:
                c = spec.costs[axis]
                vec = "[" + ", ".join(_num(v) for v in c.vector) + "]"
                items.append(f'    "{axis}": {{"vector": {vec}, "budget": {_num(c.budget)}}}')
        lines.append('  "costs": {\n' + ",\n".join(items) + "\n  }")
    else:
        lines.append(w_line)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _require(obj: Mapping, key: str, where: str):
    if not isinstance(obj, Mapping) or key not in obj:
        raise ChannelError("field", f"missing field {key!r}", where or key)
    return obj[key]


def _float_array(value, where: str) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ChannelError("shape", "ragged or non-numeric array", where) from None
    if arr.dtype == object:
        raise ChannelError("shape", "ragged array", where)
    return arr


def _positive_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ChannelError("field", f"alphabet size must be an integer >= 1, got {value!r}", where)
    return value


def parse_channel(text: str) -> ChannelSpec:
    """Parse channel-spec text; invariants are checked, nothing is renormalized."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChannelError("syntax", exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ChannelError("syntax", "top level must be a JSON object", "line 1")
    name = _require(doc, "name", "name")
    if not isinstance(name, str):
        raise ChannelError("field", "name must be a string", "name")
    alph = _require(doc, "alphabets", "alphabets")
    s = _positive_int(_require(alph, "s", "alphabets.s"), "alphabets.s")
    x1 = _positive_int(_require(alph, "x1", "alphabets.x1"), "alphabets.x1")
    x2 = _positive_int(_require(alph, "x2", "alphabets.x2"), "alphabets.x2")
    y_factors = None
    if "y_factors" in alph:
        raw = alph["y_factors"]
        if not isinstance(raw, list) or not raw:
            raise ChannelError("field", "y_factors must be a nonempty list", "alphabets.y_factors")
        y_factors = tuple(_positive_int(f, "alphabets.y_factors") for f in raw)
        y = math.prod(y_factors)
        if "y" in alph and alph["y"] != y:
            raise ChannelError("shape", f"y={alph['y']} disagrees with y_factors", "alphabets.y")
    else:
        y = _positive_int(_require(alph, "y", "alphabets.y"), "alphabets.y")
    q = _float_array(_require(doc, "q_s", "q_s"), "q_s")
    if q.shape != (s,):
        raise ChannelError("shape", f"q_s has shape {q.shape}, expected ({s},)", "q_s")
    w = _float_array(_require(doc, "w", "w"), "w")
    if w.shape != (s, x1, x2, y):
        raise ChannelError("shape", f"w has shape {w.shape}, expected {(s, x1, x2, y)}", "w")
    costs = {}
    for axis, c in (doc.get("costs") or {}).items():
        where = f"costs.{axis}"
        vec = _float_array(_require(c, "vector", where + ".vector"), where + ".vector")
        budget = _require(c, "budget", where + ".budget")
        if vec.ndim != 1 or isinstance(budget, bool) or not isinstance(budget, (int, float)):
            raise ChannelError("field", "cost needs a vector and a numeric budget", where)
        costs[axis] = CostConstraint(tuple(vec.tolist()), float(budget))
    extra = set(doc) - {"name", "alphabets", "q_s", "w", "costs"}
    if extra:
        raise ChannelError("field", f"unknown fields {sorted(extra)}", "top level")
    return ChannelSpec(name, q, w, y_factors, costs)
