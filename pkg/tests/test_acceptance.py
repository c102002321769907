"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with

    pytest tests/test_acceptance.py -v

The lines are written with output capture disabled so they show up in the
plain pytest log as well.
"""
import functools
import time

import numpy as np
import pytest
from mpmath import mp, mpf
from mpmath import log as mplog

from equivoq import (
    DistortionSpec,
    InfeasibleError,
    JointPmf,
    Pmf,
    SecrecyConfig,
    check_membership,
    closed_form_equivocation,
    code_values,
    eavesdropper_value_logloss,
    enumerate_codes,
    equivocation_sweep,
    exhaustive_aux_search,
    expected_logloss,
    joint_equivocation,
    min_expected_logloss,
    operational_value,
    posterior_strategy,
    rd_function,
    reconstruction_equivocation,
    source_equivocation,
)
from equivoq.oracle import message_key_sizes

MATCHED = [("pi1", "past-source"), ("pi2", "past-reconstruction"), ("pi3", "past-both")]


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail} ({elapsed:.2f} s)")
    return emit


def h_mp(p):
    mp.dps = 40
    p = mpf(p)
    if p <= 0 or p >= 1:
        return mpf(0)
    return -(p * mplog(p, 2) + (1 - p) * mplog(1 - p, 2))


def cond_entropy_mp(table):
    """H(T | C) for table[c, t], accumulated in high precision."""
    mp.dps = 40
    total = mpf(0)
    for row in table:
        rs = sum(mpf(float(v)) for v in row)
        for v in row:
            if v > 0:
                total += mpf(float(v)) * mplog(rs / mpf(float(v)), 2)
    return float(total)


def binary(p, D, R, R0, matrix=None):
    d = DistortionSpec(1 - np.eye(2) if matrix is None else matrix, D)
    return SecrecyConfig(Pmf([1 - p, p]), d, R, R0)


def test_criterion_1_logloss_identity(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_gap = 0.0
    beaten = 0
    for _ in range(100):
        nc, nt = rng.integers(1, 5, size=2)
        table = rng.dirichlet(np.ones(nc * nt) * rng.choice([0.3, 1.0, 3.0])).reshape(nc, nt)
        j = JointPmf(table)
        worst_gap = max(worst_gap, abs(min_expected_logloss(j) - cond_entropy_mp(table)))
        post = posterior_strategy(j)
        best = expected_logloss(post, j)
        eps = rng.uniform(1e-4, 0.5, size=(1000, 1, 1))
        perturbed = (1 - eps) * post.rows + eps * rng.dirichlet(np.ones(nt), size=(1000, nc))
        beaten += int(np.sum(expected_logloss(perturbed, j) < best))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-10 and beaten == 0 and elapsed < 10
    report(1, ok, f"max |min E loss - H(T|C)| = {worst_gap:.2e}, perturbations beating posterior = {beaten}", elapsed)
    assert worst_gap <= 1e-10
    assert beaten == 0
    assert elapsed < 10


def test_criterion_2_rate_distortion(report):
    t0 = time.perf_counter()
    worst = 0.0
    for p in (0.1, 0.2, 0.3, 0.4, 0.5):
        src = Pmf([1 - p, p])
        for k in range(1, 21):
            D = p * k / 20
            exact = float(h_mp(p) - h_mp(D))
            worst = max(worst, abs(rd_function(src, DistortionSpec.hamming(2, D)) - exact))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and elapsed < 5
    report(2, ok, f"max |R(D) - (h(p) - h(D))| = {worst:.2e} over 100 points", elapsed)
    assert worst <= 1e-4
    assert elapsed < 5


def test_criterion_3_source_statement(report):
    t0 = time.perf_counter()
    cases = [((0.0, 1.0, 0.0), 0.0), ((0.5, 1.0, 0.0), 1.0)]
    cases += [((D, 1.0, R0), 1.0) for D in (0.0, 0.1, 0.25, 0.4, 0.5) for R0 in (1.0, 1.5, 3.0)]
    worst = max(abs(source_equivocation(binary(0.5, D, R, R0)).value - want) for (D, R, R0), want in cases)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6
    report(3, ok, f"max deviation {worst:.2e} over {len(cases)} uniform binary instances", elapsed)
    assert worst <= 1e-6


def _random_instances(seed=7):
    """Endless stream of small binary instances with at most 65536 codes."""
    rng = np.random.default_rng(seed)
    while True:
        n = int(rng.integers(1, 3))
        p = float(rng.uniform(0.05, 0.95))
        matrix = None if rng.random() < 0.5 else np.array([[0.0, rng.uniform(0.5, 2)], [rng.uniform(0.5, 2), 0.0]])
        d = DistortionSpec(1 - np.eye(2) if matrix is None else matrix)
        src = Pmf([1 - p, p])
        D = float(rng.uniform(0, d.d_max(src)))
        hi = 1.5 if n == 1 else 0.75
        R, R0 = float(rng.uniform(0, hi)), float(rng.uniform(0, hi))
        variant, mode = MATCHED[int(rng.integers(0, 3))]
        try:
            cfg = binary(p, D, R, R0, matrix)
        except InfeasibleError:
            continue
        yield n, cfg, variant, mode


@functools.lru_cache(maxsize=None)
def _oracle_comparisons(count=50):
    """First ``count`` random instances where some code meets D, with their reports."""
    done = []
    skipped = 0
    for n, cfg, variant, mode in _random_instances():
        try:
            rep = operational_value(n, cfg, mode, variant)
        except InfeasibleError:
            skipped += 1
            continue
        done.append((n, cfg, rep))
        if len(done) == count:
            return done, skipped


def test_criterion_4_operational_consistency(report):
    t0 = time.perf_counter()
    full = operational_value(1, binary(0.5, 0.0, 1.0, 1.0), "past-source", "pi1")
    none = operational_value(1, binary(0.5, 0.0, 1.0, 0.0), "past-source", "pi1")
    headline_time = time.perf_counter() - t0
    headline_ok = (
        full.codes_evaluated == 256
        and abs(full.operational_value - 1.0) <= 1e-9
        and abs(full.characterization_value - 1.0) <= 1e-9
        and abs(full.gap) <= 1e-9
        and abs(none.operational_value) <= 1e-9
        and abs(none.characterization_value) <= 1e-9
        and headline_time < 5
    )
    done, skipped = _oracle_comparisons()
    gaps = [rep.gap for _, _, rep in done]
    by_variant = {v: sum(rep.variant == v for _, _, rep in done) for v, _ in MATCHED}
    elapsed = time.perf_counter() - t0
    min_gap = min(gaps)
    ok = headline_ok and min_gap >= -1e-9
    report(
        4,
        ok,
        f"256-code enumeration value {full.operational_value:.12g} vs {full.characterization_value:.12g}, "
        f"no-key value {none.operational_value:.3g} ({headline_time:.2f} s); "
        f"randomized: {len(gaps)} compared {by_variant}, {skipped} drawn with no code meeting D, "
        f"min gap {min_gap:.3e}",
        elapsed,
    )
    assert headline_ok
    assert len(gaps) == 50
    assert min_gap >= -1e-9


BINARY_MAX_FORM_INSTANCES = [
    (0.5, 0.2, 0.6, 0.1),
    (0.5, 0.1, 1.0, 0.3),
    (0.5, 0.3, 0.3, 0.0),
    (0.3, 0.1, 0.8, 0.2),
    (0.3, 0.25, 0.2, 0.1),
    (0.4, 0.15, 0.7, 0.5),
    (0.2, 0.05, 0.6, 0.05),
    (0.5, 0.0, 1.0, 0.5),
    (0.45, 0.35, 0.1, 0.0),
    (0.1, 0.08, 0.3, 0.15),
]


def test_criterion_5_max_form_statements(report):
    t0 = time.perf_counter()
    worst_margin = np.inf
    worst_slack = np.inf
    for p, D, R, R0 in BINARY_MAX_FORM_INSTANCES:
        cfg = binary(p, D, R, R0)
        for which, solver in (("reconstruction", reconstruction_equivocation), ("joint", joint_equivocation)):
            grid = exhaustive_aux_search(cfg, 0.05, 2, which)
            res = solver(cfg, seeds=[grid.optimizer])
            worst_margin = min(worst_margin, res.value - grid.value)
            rep = check_membership(res.optimizer, cfg, tol=1e-9)
            worst_slack = min(worst_slack, rep.distortion_slack, rep.rate_slack, -rep.marginal_error)
    elapsed = time.perf_counter() - t0
    ok = worst_margin >= -1e-3 and worst_slack >= -1e-9 and elapsed < 120
    report(5, ok, f"min(ascent - grid) = {worst_margin:.3e}, min constraint slack = {worst_slack:.3e}", elapsed)
    assert worst_margin >= -1e-3
    assert worst_slack >= -1e-9
    assert elapsed < 120


def _enumerated_sets():
    """(n, source, M, K) for the criterion 4 enumerations and the randomized ones."""
    sets = {(1, (0.5, 0.5), 2, 2), (1, (0.5, 0.5), 2, 1)}
    for n, cfg, _ in _oracle_comparisons()[0]:
        M, K = message_key_sizes(n, cfg.rate, cfg.key_rate)
        sets.add((n, tuple(cfg.source.probs), M, K))
    return sorted(sets)


def test_criterion_6_derivation_chain(report):
    t0 = time.perf_counter()
    # per-code explicit posterior strategies on the 256-code enumeration
    src = Pmf.uniform(2)
    explicit = 0.0
    for code in enumerate_codes(1, 2, 2, 2, 2):
        for variant, mode in MATCHED:
            v = eavesdropper_value_logloss(code, src, mode, variant)
            explicit = max(explicit, abs(v - closed_form_equivocation(code, src, variant)))
    # batched over every enumeration met in criterion 4
    batched = 0.0
    n_codes = 0
    for n, probs, M, K in _enumerated_sets():
        for variant, mode in MATCHED:
            vals = code_values(n, Pmf(list(probs)), 2, M, K, variant, mode)
            batched = max(batched, float(np.max(np.abs(vals["closed"] - vals["stepwise"]))))
        n_codes += len(vals["closed"])
    elapsed = time.perf_counter() - t0
    ok = explicit <= 1e-10 and batched <= 1e-10
    report(6, ok, f"256 codes explicit: {explicit:.2e}; {n_codes} codes batched: {batched:.2e}", elapsed)
    assert explicit <= 1e-10
    assert batched <= 1e-10


def test_criterion_7_monotonicity(report):
    t0 = time.perf_counter()
    worst = np.inf
    cfg = binary(0.4, 0.15, 0.7, 0.0)
    keys = np.linspace(0.0, 2.0, 9)
    for which in ("source", "reconstruction", "joint"):
        vals = [r.value for r in equivocation_sweep(cfg, "key_rate", keys, which)]
        worst = min(worst, min(b - a for a, b in zip(vals, vals[1:])))
    cfg_d = binary(0.4, 0.0, 1.0, 0.2)
    vals = [r.value for r in equivocation_sweep(cfg_d, "distortion_limit", np.linspace(0.0, 0.4, 9), "source")]
    worst = min(worst, min(b - a for a, b in zip(vals, vals[1:])))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-9
    report(7, ok, f"smallest step along the sweeps {worst:.3e}", elapsed)
    assert worst >= -1e-9


def test_criterion_8_variant_ordering(report):
    t0 = time.perf_counter()
    worst = np.inf
    n_codes = 0
    for n, probs, M, K in _enumerated_sets():
        src = Pmf(list(probs))
        hx = code_values(n, src, 2, M, K, "pi1")["closed"]
        hy = code_values(n, src, 2, M, K, "pi2")["closed"]
        hxy = code_values(n, src, 2, M, K, "pi3")["closed"]
        worst = min(worst, float(np.min(hxy - hy)), float(np.min(hxy - hx)))
        n_codes += len(hx)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10
    report(8, ok, f"min over {n_codes} codes of H(X,Y|M) - max(H(X|M), H(Y|M)) per symbol = {worst:.3e}", elapsed)
    assert worst >= -1e-10
