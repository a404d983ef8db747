"""Monte-Carlo simulation of the block-Markov coding scheme at desk scale.

Encoder 2 compresses the previous block's state (covering with bins of V
codewords) and sends the bin index together with the common message on X2;
Encoder 1 superimposes a binned U codebook on X2 (Gelfand-Pinsker encoding
against the current state). The receiver decodes backward from the last
block, using the bin index recovered from block i+1 to pick the covering
codeword that serves as side information for block i.

All indices are 0-based in code; the "default" index 1 of the scheme is 0.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelSpec, InnerDistribution, assemble_inner_joint
from .dmbounds import inner_rates_at
from .probcore import JointPMF, is_strongly_typical, mutual_information, typical_mask

DECODERS = ("joint", "sequential")
MAX_BOOK_SYMBOLS = 50_000_000


class SimError(ValueError):
    """Invalid simulation configuration."""


class InfeasiblePoint(SimError):
    """The operating point cannot drive the scheme (bound violated or too weak for epsilon)."""


@dataclass(frozen=True, eq=False)
class SimConfig:
    channel: ChannelSpec
    dist: InnerDistribution
    n: int
    b: int = 3
    epsilon: float = 0.05
    delta: float = 0.15
    trials: int = 500
    seed: int = 0
    rate_scale: float = 1.0
    allow_overrate: bool = False
    decoder: str = "joint"
    workers: int = 1

    def __post_init__(self):
        if self.n < 1 or self.b < 1 or self.trials < 1 or self.workers < 1:
            raise SimError("n, b, trials and workers must be >= 1")
        if not self.epsilon > 0:
            raise SimError("epsilon must be > 0")
        if not self.delta > 0:
            raise SimError("delta must be > 0")
        if not self.rate_scale > 0:
            raise SimError("rate_scale must be > 0")
        if self.rate_scale > 1 and not self.allow_overrate:
            raise SimError("rate_scale > 1 needs the explicit over-rate override")
        if self.decoder not in DECODERS:
            raise SimError(f"decoder must be one of {DECODERS}")
        if not 0 <= self.seed < 2 ** 64:
            raise SimError("seed must be a 64-bit unsigned integer")

    def echo(self) -> dict:
        """Scalar settings (the channel and operating point are echoed by the caller)."""
        return {k: getattr(self, k) for k in
                ("n", "b", "epsilon", "delta", "trials", "seed", "rate_scale",
                 "allow_overrate", "decoder")}


@dataclass(frozen=True)
class Exponents:
    """Per-symbol log2 sizes of the five codebook index sets, after back-off and scaling."""

    m_c: float
    m_v: float
    j_v: float
    m_1: float
    j_u: float


@dataclass(frozen=True)
class BookSizes:
    m_v: int
    j_v: int
    m_c: int
    m_1: int
    j_u: int


def codebook_size(n: int, exponent: float) -> int:
    return max(1, int(round(2.0 ** (n * exponent))))


def scheme_exponents(channel: ChannelSpec, dist: InnerDistribution, epsilon: float,
                     rate_scale: float = 1.0, tolerance: float = 1e-9) -> Exponents:
    """Codebook exponents; ``rate_scale`` multiplies the two message-rate terms only."""
    _, _, feasible, _ = inner_rates_at(channel, dist, tolerance)
    if not feasible:
        raise InfeasiblePoint("operating point violates I(V,X2;Y) >= I(V,X2;S)")
    pmf = assemble_inner_joint(channel, dist)
    mi = lambda a, b, c=(): mutual_information(pmf, a, b, c)  # noqa: E731
    rc = mi(("V", "X2"), "Y") - mi(("V", "X2"), "S")
    r1 = mi("U", ("Y", "V"), "X2") - mi("U", "S", "X2")
    ex = Exponents(
        m_c=rate_scale * rc - epsilon,
        m_v=mi("V", "S") - mi("V", "Y") - epsilon,
        j_v=mi("V", "Y") + 2 * epsilon,
        m_1=rate_scale * r1 - 4 * epsilon,
        j_u=mi("U", "S", "X2") + 2 * epsilon,
    )
    if ex.m_c <= 0 and ex.m_1 <= 0:
        raise InfeasiblePoint("operating point too weak for epsilon: no positive message exponent")
    return ex


def book_sizes(n: int, ex: Exponents) -> BookSizes:
    return BookSizes(codebook_size(n, ex.m_v), codebook_size(n, ex.j_v),
                     codebook_size(n, ex.m_c), codebook_size(n, ex.m_1),
                     codebook_size(n, ex.j_u))


# --- per-configuration constants ---------------------------------------------

@dataclass
class _Model:
    """Everything a trial needs that does not depend on the randomness."""

    n: int
    b: int
    delta: float
    decoder: str
    seed: int
    sizes: BookSizes
    q_s: np.ndarray
    cdf_v: np.ndarray                  # (V,)
    cdf_x2: np.ndarray                 # (X2,)
    cdf_u_given_x2: np.ndarray         # (X2, U)
    cdf_x1_given_sux2: np.ndarray      # (S, U, X2, X1)
    cdf_y: np.ndarray                  # (S, X1, X2, Y)
    dims: dict
    ref_vs: np.ndarray                 # P(V, S) flattened
    ref_uxs: np.ndarray                # P(U, X2, S)
    ref_vy: np.ndarray                 # P(V, Y)
    ref_xyv: np.ndarray                # P(X2, Y, V)
    ref_xuyv: np.ndarray               # P(X2, U, Y, V)
    pmf_uxs: JointPMF = field(repr=False)


def _cdf(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def _model(cfg: SimConfig, sizes: BookSizes) -> _Model:
    pmf = assemble_inner_joint(cfg.channel, cfg.dist)
    arr = lambda names: pmf.marginal_array(names)  # noqa: E731
    p_sux2x1 = arr(("S", "U", "X2", "X1"))
    p_sux2 = p_sux2x1.sum(axis=-1, keepdims=True)
    # fall back to P(x1 | s, x2) for (s, u, x2) the operating point never produces
    p_x1_sx2 = arr(("S", "X2", "X1"))
    p_x1_sx2 = p_x1_sx2 / np.maximum(p_x1_sx2.sum(axis=-1, keepdims=True), 1e-300)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(p_sux2 > 0, p_sux2x1 / np.where(p_sux2 > 0, p_sux2, 1.0),
                        p_x1_sx2[:, None, :, :])
    p_ux2 = arr(("X2", "U"))
    p_u_x2 = p_ux2 / np.maximum(p_ux2.sum(axis=1, keepdims=True), 1e-300)
    # an X2 symbol of probability zero is never drawn; give it a valid row anyway
    p_u_x2[p_ux2.sum(axis=1) == 0] = 1.0 / p_u_x2.shape[1]
    dims = {k: c for k, c in pmf.axes}
    return _Model(
        n=cfg.n, b=cfg.b, delta=cfg.delta, decoder=cfg.decoder, seed=cfg.seed, sizes=sizes,
        q_s=cfg.channel.state_law,
        cdf_v=_cdf(arr("V")), cdf_x2=_cdf(arr("X2")), cdf_u_given_x2=_cdf(p_u_x2),
        cdf_x1_given_sux2=_cdf(cond), cdf_y=_cdf(cfg.channel.transition),
        dims=dims,
        ref_vs=arr(("V", "S")).ravel(), ref_uxs=arr(("U", "X2", "S")).ravel(),
        ref_vy=arr(("V", "Y")).ravel(), ref_xyv=arr(("X2", "Y", "V")).ravel(),
        ref_xuyv=arr(("X2", "U", "Y", "V")).ravel(),
        pmf_uxs=JointPMF.from_array(("U", "X2", "S"),
                                    arr(("U", "X2", "S")) / arr(("U", "X2", "S")).sum()),
    )


def _stream(seed: int, trial: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, *key)))


def _draw(rng: np.random.Generator, cdf: np.ndarray, shape=None) -> np.ndarray:
    """Symbols with cumulative law ``cdf`` (last axis); one draw per leading index by default."""
    r = rng.random(cdf.shape[:-1] if shape is None else shape)
    return (r[..., None] >= cdf).sum(axis=-1).astype(np.int64)


# --- codebooks ---------------------------------------------------------------

class CodebookSet:
    """V and X2 codebooks for one trial plus lazily generated U codebooks.

    ``v_book`` has shape (M_V, J_V, n) and ``x2_book`` (M_V, M_c, n). The U
    codebook of cell (m, l) has shape (M_1, J_U, n), is drawn position-wise
    from P(u | x2(m, l)), and comes from its own random stream so that it does
    not depend on which cells were requested before.
    """

    def __init__(self, model: _Model, trial: int):
        s, n = model.sizes, model.n
        self.model, self.trial = model, trial
        self.sizes = s
        self.v_book = _draw(_stream(model.seed, trial, 0), model.cdf_v, (s.m_v, s.j_v, n))
        self.x2_book = _draw(_stream(model.seed, trial, 1), model.cdf_x2, (s.m_v, s.m_c, n))
        self._u: dict[tuple[int, int], np.ndarray] = {}

    def u_book(self, m: int, l: int) -> np.ndarray:
        key = (m, l)
        if key not in self._u:
            s, model = self.sizes, self.model
            rng = _stream(model.seed, self.trial, 2, m, l)
            cdf = model.cdf_u_given_x2[self.x2_book[m, l]]  # (n, U)
            r = rng.random((s.m_1, s.j_u, model.n))
            self._u[key] = (r[..., None] >= cdf).sum(axis=-1).astype(np.int64)
        return self._u[key]


def build_codebooks(cfg: SimConfig, trial: int = 0) -> CodebookSet:
    """Codebooks of trial ``trial`` under ``cfg.seed``."""
    ex = scheme_exponents(cfg.channel, cfg.dist, cfg.epsilon, cfg.rate_scale)
    sizes = book_sizes(cfg.n, ex)
    _check_budget(cfg.n, sizes)
    return CodebookSet(_model(cfg, sizes), trial)


def _check_budget(n: int, s: BookSizes):
    total = n * (s.m_v * s.j_v + s.m_v * s.m_c)
    if total > MAX_BOOK_SYMBOLS:
        raise SimError(f"codebooks need {total} symbols; reduce n or raise epsilon")


# --- encoding ----------------------------------------------------------------

def _flat(model: _Model, names: tuple[str, ...], *seqs: np.ndarray) -> np.ndarray:
    """Row-major joint symbol index of aligned sequences (broadcast)."""
    out = np.zeros(np.broadcast_shapes(*(x.shape for x in seqs)), dtype=np.int64)
    for name, x in zip(names, seqs):
        out = out * model.dims[name] + x
    return out


def cover(books: CodebookSet, state_prev: np.ndarray) -> tuple[int, int, bool]:
    """Smallest (m, j_V), row-major, whose v is typical with the state; (0, 0, False) if none."""
    model = books.model
    flat = _flat(model, ("V", "S"), books.v_book, state_prev)
    ok = typical_mask(flat, model.ref_vs, model.delta)  # (M_V, J_V)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return 0, 0, False
    m, j = divmod(int(hits[0]), books.sizes.j_v)
    return m, j, True


def gp_encode(books: CodebookSet, m: int, l: int, k: int,
              state_cur: np.ndarray) -> tuple[int, bool]:
    """Smallest j_U with u(m, l, k, j_U) typical with (x2(m, l), s); (J_U - 1, False) if none."""
    model = books.model
    u = books.u_book(m, l)[k]  # (J_U, n)
    flat = _flat(model, ("U", "X2", "S"), u, books.x2_book[m, l], state_cur)
    hits = np.flatnonzero(typical_mask(flat, model.ref_uxs, model.delta))
    if hits.size == 0:
        return books.sizes.j_u - 1, False
    return int(hits[0]), True


def encode_block(books: CodebookSet, state_prev: np.ndarray | None, state_cur: np.ndarray,
                 l: int, k: int, carried_m: int | None, rng: np.random.Generator) -> dict:
    """Both encoders for one block.

    ``carried_m`` fixes the bin index (block 1 uses the default); otherwise
    Encoder 2 covers ``state_prev``. Returns the channel inputs, chosen
    indices and failure flags.
    """
    model = books.model
    if carried_m is not None:
        m, jv, covered = carried_m, 0, None
    else:
        m, jv, covered = cover(books, state_prev)
    x2 = books.x2_book[m, l]
    ju, gp_ok = gp_encode(books, m, l, k, state_cur)
    u = books.u_book(m, l)[k, ju]
    x1 = _draw(rng, model.cdf_x1_given_sux2[state_cur, u, x2])
    return {"m": m, "j_v": jv, "j_u": ju, "x1": x1, "x2": x2, "u": u,
            "covered": covered, "gp_ok": gp_ok}


def transmit(model: _Model, s: np.ndarray, x1: np.ndarray, x2: np.ndarray,
             rng: np.random.Generator) -> np.ndarray:
    return _draw(rng, model.cdf_y[s, x1, x2])


# --- decoding ----------------------------------------------------------------

def _decode_one(books: CodebookSet, y: np.ndarray, v_bin: int) -> tuple[tuple[int, int, int] | None, str]:
    """Decode (m, l, k) of one block from its output and the next block's bin index.

    Returns the triple (or None) and a status string: ``ok``, ``jv`` (the
    covering codeword index was not unique, sequential mode only), ``none``
    or ``multiple``.
    """
    model, sz = books.model, books.sizes
    vs = books.v_book[v_bin]  # (J_V, n)
    status = "ok"
    if model.decoder == "sequential":
        ok = typical_mask(_flat(model, ("V", "Y"), vs, y), model.ref_vy, model.delta)
        hits = np.flatnonzero(ok)
        if hits.size == 1:
            jv_list = [int(hits[0])]
        else:
            jv_list, status = [sz.j_v - 1], "jv"
    else:
        jv_list = list(range(sz.j_v))
    # necessary condition: if (x2, u, y, v) is delta-typical then each (x2, y, v)
    # frequency is within |U| * delta of P(x2, y, v) and avoids its zero cells
    n_u = model.dims["U"]
    found = set()
    for jv in jv_list:
        v = vs[jv]
        pre = typical_mask(_flat(model, ("X2", "Y", "V"), books.x2_book, y, v),
                           model.ref_xyv, model.delta * n_u)  # (M_V, M_c)
        for m, l in zip(*np.nonzero(pre)):
            m, l = int(m), int(l)
            u = books.u_book(m, l)  # (M_1, J_U, n)
            ok = typical_mask(_flat(model, ("X2", "U", "Y", "V"), books.x2_book[m, l], u, y, v),
                              model.ref_xuyv, model.delta)  # (M_1, J_U)
            for k in np.flatnonzero(ok.any(axis=1)):
                found.add((m, l, int(k)))
    if len(found) == 1:
        return next(iter(found)), status
    return None, ("none" if not found else "multiple") if status == "ok" else status


def backward_decode(books: CodebookSet, outputs: list[np.ndarray],
                    m_last: int) -> list[tuple[tuple[int, int, int] | None, str]]:
    """Decode blocks B, ..., 1 from the outputs of blocks 1..B+1; ``m_last`` is m_{B+1}.

    The last block carries no new messages and its output is not used.
    Returns per-block (triple or None, status) in block order 1..B. A failed
    block passes the default bin index 0 on to the block before it.
    """
    b = len(outputs) - 1
    res: list = [None] * b
    v_bin = m_last
    for i in range(b - 1, -1, -1):
        triple, status = _decode_one(books, outputs[i], v_bin)
        res[i] = (triple, status)
        v_bin = triple[0] if triple is not None else 0
    return res


# --- trials --------------------------------------------------------------------

@dataclass
class TrialOutcome:
    covering_fail: list[bool]     # blocks 2..B+1
    gp_fail: list[bool]           # blocks 1..B+1
    decode_error: list[bool]      # blocks 1..B
    statuses: list[str]
    gp_violations: int

    @property
    def error(self) -> bool:
        return any(self.decode_error)


def _run_trial(model: _Model, trial: int) -> TrialOutcome:
    books = CodebookSet(model, trial)
    sz, n, b = model.sizes, model.n, model.b
    rng = _stream(model.seed, trial, 3)
    states = _draw(rng, _cdf(model.q_s), (b + 1, n))
    l_msgs = list(rng.integers(sz.m_c, size=b)) + [0]
    k_msgs = list(rng.integers(sz.m_1, size=b)) + [0]
    m_true, outputs, cov_fail, gp_fail = [], [], [], []
    violations = 0
    for i in range(b + 1):
        enc = encode_block(books, states[i - 1] if i else None, states[i],
                           int(l_msgs[i]), int(k_msgs[i]), 0 if i == 0 else None, rng)
        if i:
            cov_fail.append(not enc["covered"])
        gp_fail.append(not enc["gp_ok"])
        if enc["gp_ok"]:
            seq = np.stack([enc["u"], enc["x2"], states[i]], axis=1)
            if not is_strongly_typical(seq, model.pmf_uxs, model.delta):
                violations += 1
        m_true.append(enc["m"])
        outputs.append(transmit(model, states[i], enc["x1"], enc["x2"], rng))
    decoded = backward_decode(books, outputs, m_true[b])
    dec_err, statuses = [], []
    for i, (triple, status) in enumerate(decoded):
        truth = (m_true[i], int(l_msgs[i]), int(k_msgs[i]))
        dec_err.append(status != "ok" or triple != truth)
        statuses.append(status if status != "ok" or triple == truth else "wrong")
    return TrialOutcome(cov_fail, gp_fail, dec_err, statuses, violations)


def _run_chunk(args) -> list[TrialOutcome]:
    model, trials = args
    return [_run_trial(model, t) for t in trials]


def _rate(count: int, total: int) -> tuple[float, float]:
    r = count / total
    return r, math.sqrt(r * (1.0 - r) / total)


@dataclass(frozen=True)
class SimReport:
    config: dict
    sizes: BookSizes
    exponents: Exponents
    trials: int
    covering_failure_rate: float
    covering_failure_se: float
    gp_failure_rate: float
    gp_failure_se: float
    decoding_error_rate: float
    decoding_error_se: float
    per_block: dict
    status_counts: dict
    gp_typicality_violations: int
    wall_clock: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "config": self.config,
            "sizes": self.sizes.__dict__,
            "exponents": self.exponents.__dict__,
            "trials": self.trials,
            "covering_failure_rate": self.covering_failure_rate,
            "covering_failure_se": self.covering_failure_se,
            "gp_failure_rate": self.gp_failure_rate,
            "gp_failure_se": self.gp_failure_se,
            "decoding_error_rate": self.decoding_error_rate,
            "decoding_error_se": self.decoding_error_se,
            "per_block": self.per_block,
            "status_counts": self.status_counts,
            "gp_typicality_violations": self.gp_typicality_violations,
        }
        if include_timing:
            d["wall_clock"] = self.wall_clock
        return d

    def canonical_json(self) -> str:
        """Byte-stable text of everything except the wall-clock time."""
        return json.dumps(self.to_dict(include_timing=False), indent=2) + "\n"


def run_simulation(cfg: SimConfig) -> SimReport:
    """``cfg.trials`` independent end-to-end episodes with fresh codebooks each."""
    t0 = time.perf_counter()
    ex = scheme_exponents(cfg.channel, cfg.dist, cfg.epsilon, cfg.rate_scale)
    sizes = book_sizes(cfg.n, ex)
    _check_budget(cfg.n, sizes)
    model = _model(cfg, sizes)
    trials = list(range(cfg.trials))
    if cfg.workers > 1 and cfg.trials > 1:
        chunks = [trials[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, [(model, c) for c in chunks]))
        by_trial = {}
        for c, part in zip(chunks, parts):
            by_trial.update(zip(c, part))
        outcomes = [by_trial[t] for t in trials]
    else:
        outcomes = _run_chunk((model, trials))

    b, total = cfg.b, cfg.trials
    cov = [sum(o.covering_fail[i] for o in outcomes) for i in range(b)]
    gp = [sum(o.gp_fail[i] for o in outcomes) for i in range(b + 1)]
    dec = [sum(o.decode_error[i] for o in outcomes) for i in range(b)]
    statuses: dict[str, int] = {}
    for o in outcomes:
        for s in o.statuses:
            statuses[s] = statuses.get(s, 0) + 1
    violations = sum(o.gp_violations for o in outcomes)
    if violations:
        raise RuntimeError(f"{violations} selected u-codewords failed the typicality re-check")
    cov_r, cov_se = _rate(sum(cov), b * total)
    gp_r, gp_se = _rate(sum(gp), (b + 1) * total)
    dec_r, dec_se = _rate(sum(o.error for o in outcomes), total)
    per_block = {
        "covering_failures": cov,         # blocks 2..B+1
        "gp_failures": gp,                # blocks 1..B+1
        "decoding_errors": dec,           # blocks 1..B
    }
    return SimReport(
        config=cfg.echo(), sizes=sizes, exponents=ex, trials=total,
        covering_failure_rate=cov_r, covering_failure_se=cov_se,
        gp_failure_rate=gp_r, gp_failure_se=gp_se,
        decoding_error_rate=dec_r, decoding_error_se=dec_se,
        per_block=per_block, status_counts=dict(sorted(statuses.items())),
        gp_typicality_violations=violations,
        wall_clock=time.perf_counter() - t0,
    )


def run_trend(cfg: SimConfig, ns) -> list[SimReport]:
    """One report per block length, all other settings shared."""
    return [run_simulation(dataclasses.replace(cfg, n=int(n))) for n in ns]


def non_increasing(values, ses, k: float = 2.0) -> bool:
    """Each step may rise by at most k combined standard errors."""
    return all(b - a <= k * math.hypot(sa, sb)
               for (a, sa), (b, sb) in zip(zip(values, ses), zip(values[1:], ses[1:])))
