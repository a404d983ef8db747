"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run under pytest (lines are repeated in the terminal summary) or directly:
``python3 tests/test_acceptance.py``. Tolerances are the contract values and
are not relaxed; a criterion that cannot be met is reported as FAIL.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from macstate.binaryexample import (
    ExampleParams,
    copy_state_operating_point,
    example_capacity_closed_form,
    example_capacity_optimized,
    gp_rate_binary,
)
from macstate.channels import (
    CostConstraint,
    ChannelSpec,
    make_example_channel,
    parse_channel,
    random_channel,
    random_inner_distribution,
    serialize_channel,
)
from macstate.cli import csv_text, read_csv
from macstate.codingsim import SimConfig, non_increasing, run_simulation
from macstate.dmbounds import OptimizerConfig, common_capacity, inner_region, outer_region, region_form_identity
from macstate.gaussian import GaussianParams, _bounds, gaussian_common_capacity, gaussian_region

LAMS = [0.0, 0.25, 0.5, 0.75, 1.0]
N_CHANNELS = 20
SIM_NS = (8, 12, 16)
SIM_TRIALS = 500

RESULTS: dict[str, str] = {}


def report(key: str, ok: bool, detail: str) -> None:
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[key] = line
    print(line, flush=True)


def h2(x):
    return 0.0 if x in (0.0, 1.0) else -(x * math.log2(x) + (1 - x) * math.log2(1 - x))


# --- shared fixtures ------------------------------------------------------------

@pytest.fixture(scope="module")
def dm_runs():
    """Inner/outer regions and common capacity on the seeded random channels and the example."""
    runs, t0 = [], time.perf_counter()
    channels = [random_channel(np.random.default_rng([7, i]), 2, 2, 2, 2, name=f"rand{i}")
                for i in range(N_CHANNELS)]
    for i, ch in enumerate(channels):
        cfg = OptimizerConfig(seed=i)
        runs.append((ch, inner_region(ch, cfg, LAMS), outer_region(ch, cfg, LAMS), common_capacity(ch, cfg)[0]))
    ch = make_example_channel(0.1)
    cfg = OptimizerConfig()
    runs.append((ch, inner_region(ch, cfg, LAMS), None, common_capacity(ch, cfg)[0]))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sim_runs():
    cfg = SimConfig(make_example_channel(0.1), copy_state_operating_point(0.5), n=8, b=3,
                    rate_scale=0.75, delta=0.15, trials=SIM_TRIALS, seed=1)
    t0 = time.perf_counter()
    first = [run_simulation(dataclasses.replace(cfg, n=n)) for n in SIM_NS]
    second = [run_simulation(dataclasses.replace(cfg, n=n)) for n in SIM_NS]
    return first, second, time.perf_counter() - t0


# --- criteria -------------------------------------------------------------------

def test_criterion_1_binary_closed_form():
    t0 = time.perf_counter()
    params = ExampleParams(0.1, 0.5)
    closed = example_capacity_closed_form(params)
    oracle = h2(0.1 * 0.5 + 0.9 * 0.5) - h2(0.1)
    worst = 0.0
    for p in np.round(np.arange(0.05, 0.4501, 0.05), 10):
        for q1 in np.round(np.arange(0.05, 0.5001, 0.05), 10):
            ep = ExampleParams(float(p), float(q1))
            worst = max(worst, abs(example_capacity_optimized(ep) - example_capacity_closed_form(ep)))
    wall = time.perf_counter() - t0
    ok = abs(closed - 0.5310) <= 1e-4 and abs(closed - oracle) <= 1e-12 and worst <= 1e-4 and wall < 30
    report("1", ok, f"capacity {closed:.6f} (target 0.5310 +- 1e-4), "
                    f"max grid disagreement {worst:.2e} (<= 1e-4), {wall:.1f}s (< 30s)")
    assert ok


@pytest.mark.parametrize("q1", [0.2, 0.5])
def test_criterion_2_strict_gap(q1):
    t0 = time.perf_counter()
    params = ExampleParams(0.1, q1, u_size=4)
    gp = gp_rate_binary(params, OptimizerConfig(restarts=64))
    cap = example_capacity_closed_form(params)
    wall = time.perf_counter() - t0
    ok = cap - gp > 1e-3 and wall < 120
    report(f"2[q1={q1}]", ok, f"closed form {cap:.6f}, GP rate {gp:.6f}, gap {cap - gp:.3e} "
                              f"(> 1e-3), {wall:.1f}s (< 120s)")
    assert ok


def test_criterion_3_containment(dm_runs):
    runs, wall = dm_runs
    worst = min(outer.objective_at(l) - inner.objective_at(l)
                for _, inner, outer, _ in runs if outer is not None for l in LAMS)
    ok = worst >= -1e-6 and wall < 600
    report("3", ok, f"{N_CHANNELS} channels x {len(LAMS)} weights, min(outer - inner) = {worst:.2e} "
                    f"(>= -1e-6), {wall:.1f}s for criteria 3+5 (< 600s)")
    assert ok


def test_criterion_4_region_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    ch = random_channel(rng, 3, 2, 2, 3)
    worst = 0.0
    for _ in range(100):
        lhs, rhs = region_form_identity(ch, random_inner_distribution(ch, 4, 3, rng, alpha=0.5))
        worst = max(worst, abs(lhs - rhs))
    wall = time.perf_counter() - t0
    ok = worst <= 1e-10 and wall < 10
    report("4", ok, f"max |lhs - rhs| = {worst:.2e} over 100 distributions (<= 1e-10), {wall:.2f}s (< 10s)")
    assert ok


def test_criterion_5_common_dominance(dm_runs):
    runs, wall = dm_runs
    worst = min(common - inner.points[-1].pair.rc for _, inner, _, common in runs)
    # the fixture is shared with criterion 3, so the budget is the sum of both
    ok = worst >= -1e-3 and wall < 300 + 600
    report("5", ok, f"{len(runs)} channels, min(common - inner Rc at lambda=1) = {worst:.2e} (>= -1e-3)")
    assert ok


def test_criterion_6_gaussian():
    t0 = time.perf_counter()
    p2, q, n0 = 2.0, 0.7, 1.3
    zero = GaussianParams(0.0, p2, q, n0)
    want = 0.5 * math.log2(1.0 + p2 / (q + n0))
    rc = gaussian_region(zero, lambdas=[1.0]).points[0].pair.rc
    err0 = max(abs(rc - want), abs(gaussian_common_capacity(zero)[0] - want))

    unit = GaussianParams(1.0, 1.0, 1.0, 1.0)
    cap, _ = gaussian_common_capacity(unit)
    a = np.linspace(0.0, 1.0, 2000)
    r12, r1s = np.meshgrid(a, -a, indexing="ij")
    inside = r12 ** 2 + r1s ** 2 <= 1.0
    oracle = float(_bounds(unit, r12[inside], r1s[inside])[1].max())
    err_unit = abs(cap - oracle)

    err_scale = max(abs(gaussian_common_capacity(unit.scaled(k))[0] - cap) for k in (1e-3, 0.5, 3.0, 1e3))
    wall = time.perf_counter() - t0
    ok = err0 <= 1e-12 and err_unit <= 1e-4 and err_scale <= 1e-12 and wall < 60
    report("6", ok, f"P1=0 error {err0:.1e} (<= 1e-12), unit capacity {cap:.7f} vs 2000^2 grid "
                    f"{oracle:.7f} (<= 1e-4), scale error {err_scale:.1e} (<= 1e-12), {wall:.1f}s (< 60s)")
    assert ok


def test_criterion_7_simulator_trends(sim_runs):
    first, second, wall = sim_runs
    cov = [r.covering_failure_rate for r in first]
    cov_se = [r.covering_failure_se for r in first]
    dec = [r.decoding_error_rate for r in first]
    dec_se = [r.decoding_error_se for r in first]
    cov_ok = non_increasing(cov, cov_se)
    dec_ok = non_increasing(dec, dec_se)
    same = all(a.canonical_json() == b.canonical_json() for a, b in zip(first, second))
    ok = cov_ok and dec_ok and same and wall < 900
    fmt = lambda v, s: ", ".join(f"{x:.3f}+-{e:.3f}" for x, e in zip(v, s))  # noqa: E731
    report("7", ok, f"n={list(SIM_NS)}: covering [{fmt(cov, cov_se)}] non-increasing={cov_ok}; "
                    f"decoding [{fmt(dec, dec_se)}] non-increasing={dec_ok}; "
                    f"byte-identical rerun={same}; {wall:.0f}s incl. rerun (< 900s)")
    assert ok


def test_criterion_8_round_trips():
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    bad = 0
    for i in range(50):
        s, x1, x2, y = (int(v) for v in rng.integers(1, 5, size=4))
        ch = random_channel(rng, s, x1, x2, y, name=f"spec{i}")
        if i % 3 == 0:
            ch = ChannelSpec(ch.name, ch.state_law, ch.transition, None,
                             {"x1": CostConstraint(tuple(rng.random(x1)), float(rng.random()))})
        text = serialize_channel(ch)
        back = parse_channel(text)
        exact = (np.array_equal(back.state_law, ch.state_law) and np.array_equal(back.transition, ch.transition)
                 and serialize_channel(back) == text)
        bad += not exact
    values = np.concatenate([rng.random(200), rng.standard_normal(200) * 1e5, 10.0 ** rng.uniform(-300, 300, 100)])
    rows = [{"x": float(v)} for v in values]
    back_rows = read_csv(csv_text(rows, ["x"]))
    csv_bad = sum(r["x"] != b["x"] for r, b in zip(rows, back_rows))
    wall = time.perf_counter() - t0
    ok = bad == 0 and csv_bad == 0 and wall < 10
    report("8", ok, f"{50 - bad}/50 channel specs bit-exact, {len(rows) - csv_bad}/{len(rows)} "
                    f"CSV values exact, {wall:.2f}s (< 10s)")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
