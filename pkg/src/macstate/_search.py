"""Multi-start search over products of probability simplices.

A problem is a joint table built multilinearly (one ``np.einsum``) from fixed
arrays and free conditional factors. Every free factor is stored as a 2-D
array of rows, each row one conditional slice (a pmf). Objectives are
piecewise-linear functions of named entropy combinations of the joint, so
exact gradients are available and drive a mirror-ascent phase; a random
slice-by-slice phase then polishes (it reaches simplex faces, where the
multiplicative steps only creep).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np

POLISH_STARTS = 4
INITIAL_STEP = 0.25
LOG_FLOOR = 1e-30

Params = list  # list[np.ndarray], each (n_slices, k)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex."""
    k = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, k + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


def stream(seed: int, *key: int) -> np.random.Generator:
    """Private random stream for work item ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def mi_terms(a: str, b: str, c: str = "") -> list[tuple[float, str]]:
    """I(A;B|C) = H(AC) + H(BC) - H(ABC) - H(C) as (coef, letters) terms."""
    terms = [(1.0, a + c), (1.0, b + c), (-1.0, a + b + c)]
    if c:
        terms.append((-1.0, c))
    return terms


@dataclass(frozen=True)
class Block:
    """A free factor: einsum letters and full shape; rows = leading ``n_lead`` axes."""

    letters: str
    shape: tuple[int, ...]
    n_lead: int

    @property
    def rows_shape(self) -> tuple[int, int]:
        lead = int(np.prod(self.shape[: self.n_lead], dtype=int))
        return lead, int(np.prod(self.shape[self.n_lead:], dtype=int))


class FactorProblem:
    """Base class; subclasses set ``consts``, ``blocks``, ``out`` and ``quantities``.

    ``quantities`` maps a name to a list of ``(coef, letters)`` entropy terms.
    ``check`` may reject a candidate (return False) after its quantities are known.
    """

    consts: Sequence[tuple[str, np.ndarray]] = ()
    blocks: Sequence[Block] = ()
    out: str = ""
    quantities: Mapping[str, list] = {}

    # -- hooks
    def check(self, q: dict) -> bool:
        return True

    def cost_ok(self, params: Params) -> bool:
        return True

    def repair(self, params: Params) -> Params:
        return params

    # -- core
    def factors(self, params: Params) -> list[np.ndarray]:
        return [p.reshape(b.shape) for p, b in zip(params, self.blocks)]

    def _spec(self) -> tuple[list, list]:
        subs = [l for l, _ in self.consts]
        ops = [a for _, a in self.consts]
        return subs, ops

    def joint(self, params: Params) -> np.ndarray:
        subs, ops = self._spec()
        subs = subs + [b.letters for b in self.blocks]
        ops = ops + self.factors(params)
        return np.einsum(",".join(subs) + "->" + self.out, *ops)

    def _marg(self, joint: np.ndarray, letters: str, keepdims: bool = False) -> np.ndarray:
        drop = tuple(i for i, l in enumerate(self.out) if l not in letters)
        return joint.sum(axis=drop, keepdims=keepdims) if drop else joint

    def evaluate(self, params: Params) -> dict | None:
        if not self.cost_ok(params):
            return None
        joint = self.joint(params)
        cache: dict[frozenset, float] = {}
        q = {}
        for name, terms in self.quantities.items():
            total = 0.0
            for coef, letters in terms:
                key = frozenset(letters)
                if key not in cache:
                    m = self._marg(joint, letters)
                    m = m[m > 0]
                    cache[key] = float(-np.sum(m * np.log2(m)))
                total += coef * cache[key]
            q[name] = total
        return q if self.check(q) else None

    def gradient(self, params: Params, weights: Mapping[str, float]) -> list[np.ndarray]:
        """Gradient of sum_k weights[k] * quantity_k with respect to each block's rows."""
        joint = self.joint(params)
        coefs: dict[str, float] = {}
        for name, w in weights.items():
            if w == 0:
                continue
            for coef, letters in self.quantities[name]:
                key = "".join(sorted(letters))
                coefs[key] = coefs.get(key, 0.0) + w * coef
        g = np.zeros_like(joint)
        for key, c in coefs.items():
            if c != 0:
                m = self._marg(joint, key, keepdims=True)
                g = g - c * np.log2(np.maximum(m, LOG_FLOOR))
        subs, ops = self._spec()
        factors = self.factors(params)
        grads = []
        for i, blk in enumerate(self.blocks):
            o_subs = subs + [b.letters for j, b in enumerate(self.blocks) if j != i]
            o_ops = ops + [f for j, f in enumerate(factors) if j != i]
            expr = ",".join([self.out] + o_subs) + "->" + blk.letters
            grads.append(np.einsum(expr, g, *o_ops).reshape(blk.rows_shape))
        return grads

    def sample(self, rng: np.random.Generator) -> Params:
        alpha = 1.0 if rng.random() < 0.5 else 0.3
        params = [rng.dirichlet(np.full(b.rows_shape[1], alpha), size=b.rows_shape[0])
                  for b in self.blocks]
        return self.repair(params)

    def seeds(self) -> list[Params]:
        return []


@dataclass
class Candidate:
    value: float
    params: Params
    stats: Any
    index: int


class Objective:
    """Scalar objective on evaluated quantities plus the weights of its active piece."""

    def __call__(self, q: dict) -> float:  # pragma: no cover - interface
        raise NotImplementedError

    def weights(self, q: dict) -> dict[str, float]:  # pragma: no cover - interface
        raise NotImplementedError


class Linear(Objective):
    def __init__(self, **weights: float):
        self.w = weights

    def __call__(self, q):
        return sum(w * q[k] for k, w in self.w.items())

    def weights(self, q):
        return self.w


def _mirror_phase(problem: FactorProblem, objective: Objective, cand: Candidate,
                  budget: int) -> tuple[Candidate, int]:
    params = [p.copy() for p in cand.params]
    best_val, best_q = cand.value, cand.stats
    eta, used = 1.0, 0
    while used < budget and eta > 1e-9:
        grads = problem.gradient(params, objective.weights(best_q))
        trial = []
        for p, g in zip(params, grads):
            g = g - (p * g).sum(axis=1, keepdims=True)
            new = p * np.exp(np.clip(eta * g, -50.0, 50.0))
            trial.append(new / new.sum(axis=1, keepdims=True))
        trial = problem.repair(trial)
        q = problem.evaluate(trial)
        used += 1
        val = objective(q) if q is not None else -np.inf
        if val > best_val:
            gain = val - best_val
            params, best_val, best_q = trial, val, q
            eta *= 1.5
            if gain < 1e-13:
                break
        else:
            eta *= 0.3
    return Candidate(best_val, params, best_q, cand.index), used


def _propose(row: np.ndarray, step: float, rng: np.random.Generator) -> np.ndarray:
    k = row.size
    if rng.random() < 0.5:
        return project_simplex(row + step * rng.normal(size=k))
    # mass transfer between two cells keeps the rest of the slice fixed
    i, j = rng.choice(k, size=2, replace=False)
    t = min(row[i], step * rng.random())
    new = row.copy()
    new[i] -= t
    new[j] += t
    return new


def _random_phase(problem: FactorProblem, objective: Objective, cand: Candidate,
                  rng: np.random.Generator, budget: int, step_shrink: float,
                  min_step: float) -> Candidate:
    params = [p.copy() for p in cand.params]
    best_val, best_q = cand.value, cand.stats
    slots = [(b, r) for b, p in enumerate(params) for r in range(p.shape[0]) if p.shape[1] > 1]
    if not slots:
        return cand
    step, used = INITIAL_STEP, 0
    while used < budget and step >= min_step:
        improved = False
        for b, r in slots:
            old = params[b][r].copy()
            params[b][r] = _propose(old, step, rng)
            used += 1
            q = problem.evaluate(params)
            val = objective(q) if q is not None else -np.inf
            if val > best_val:
                best_val, best_q, improved = val, q, True
            else:
                params[b][r] = old
            if used >= budget:
                break
        if not improved:
            step *= step_shrink
    return Candidate(best_val, params, best_q, cand.index)


def polish(problem: FactorProblem, objective: Objective, start: Candidate,
           rng: np.random.Generator, iters: int, step_shrink: float,
           min_step: float) -> Candidate:
    """Mirror ascent on half the evaluation budget, random slice moves on the rest."""
    cand, used = _mirror_phase(problem, objective, start, iters // 2)
    return _random_phase(problem, objective, cand, rng, iters - used, step_shrink, min_step)


def multistart(
    problem: FactorProblem,
    objectives: Sequence[Objective],
    *,
    restarts: int,
    refine_iters: int,
    step_shrink: float,
    min_step: float,
    seed: int,
) -> list[Candidate | None]:
    """Best candidate per objective (``None`` if nothing feasible was found).

    The start pool (structured seeds, then ``restarts`` random draws) is shared
    by all objectives; the best few and every seed are polished. Each polish run uses the
    stream ``(seed, 1, objective index, rank)`` so results do not depend on the
    order in which work items are executed. Ties keep the smaller index.
    """
    pool_rng = stream(seed, 0)
    pool = [[np.array(p, dtype=float) for p in s] for s in problem.seeds()]
    n_seeds = len(pool)
    pool += [problem.sample(pool_rng) for _ in range(restarts)]
    stats = [problem.evaluate(p) for p in pool]
    out: list[Candidate | None] = []
    for k, obj in enumerate(objectives):
        scored = [Candidate(obj(st), p, st, i)
                  for i, (p, st) in enumerate(zip(pool, stats)) if st is not None]
        if not scored:
            out.append(None)
            continue
        scored.sort(key=lambda c: (-c.value, c.index))
        # structured seeds are always polished: they often sit in basins that
        # random starts with a better initial value never reach
        chosen = scored[:POLISH_STARTS]
        chosen += [c for c in scored[POLISH_STARTS:] if c.index < n_seeds]
        best = None
        for rank, cand in enumerate(chosen):
            res = polish(problem, obj, cand, stream(seed, 1, k, rank),
                         refine_iters, step_shrink, min_step)
            if best is None or res.value > best.value:
                best = res
        out.append(best)
    return out


def finite_difference_check(problem: FactorProblem, params: Params, weights: Mapping[str, float],
                            h: float = 1e-7) -> float:
    """Max abs error of the analytic gradient along random in-simplex directions (testing aid)."""
    rng = np.random.default_rng(0)
    grads = problem.gradient(params, weights)
    f = lambda p: sum(w * problem.evaluate(p)[k] for k, w in weights.items())  # noqa: E731
    worst = 0.0
    for _ in range(5):
        d = [rng.normal(size=p.shape) for p in params]
        d = [x - x.mean(axis=1, keepdims=True) for x in d]
        plus = [p + h * x for p, x in zip(params, d)]
        minus = [p - h * x for p, x in zip(params, d)]
        num = (f(plus) - f(minus)) / (2 * h)
        ana = sum(float((g * x).sum()) for g, x in zip(grads, d))
        worst = max(worst, abs(num - ana))
    return worst
