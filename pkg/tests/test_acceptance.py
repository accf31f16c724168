"""Acceptance criteria, each run at its stated tolerance.

Every criterion is a plain function returning ``(passed, detail)``; the
pytest wrappers record the outcome so that ``conftest.py`` prints one
PASS/FAIL line per criterion.  ``python tests/test_acceptance.py`` runs the
same checks without pytest.

All randomised criteria use base seed 1 with the per-trial rule of
:func:`nsqn.experiments.trial_rng`; the seed is fixed in advance and is the
one used in the documented sweep command.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from nsqn.directions import HistoryBuffer, UpdatePair, full_bfgs_update, lbfgs_two_loop, memoryless_direction
from nsqn.experiments import ObjectiveTemplate, SweepConfig, failure_rate_sweep, pwl_accuracy_experiment, trial_rng
from nsqn.linesearch import LineSearchParams
from nsqn.objectives import MaxAffine, PaperAbs, SkewAbs, evaluate, make_max_affine_vertex_opt, value
from nsqn.optimizer import FullBFGS, Gradient, LBFGS, RunParams, Termination, run, sample_x0
from nsqn.theory import NotConvergedError, b_sequence, beta_sequence, limit_b, predict_failure, recurrence_converge

SEED = 1
SCALED = LBFGS(1, True)
UNSCALED = LBFGS(1, False)
TRANSITION_A = [round(9.317 + 0.001 * i, 3) for i in range(21)]


def _rates(rows):
    return {(r.a, r.method): r.failure_rate for r in rows}


# -- 1, 2: sharp transition at n = 30 ------------------------------------------------


def criterion_1():
    rows = failure_rate_sweep(SweepConfig(ObjectiveTemplate("paper_abs", 30), TRANSITION_A, (SCALED,), 200, SEED))
    rates = {r.a: r.failure_rate for r in rows}
    ok_high = all(rates[a] == 1.0 for a in TRANSITION_A if a >= 9.327)
    ok_low = all(rates[a] == 0.0 for a in TRANSITION_A if a <= 9.320)
    shown = ", ".join(f"{a}:{rates[a]:.3f}" for a in TRANSITION_A)
    return ok_high and ok_low, f"rate 1 for a >= 9.327: {ok_high}; rate 0 for a <= 9.320: {ok_low} [{shown}]"


def criterion_2():
    rows = failure_rate_sweep(SweepConfig(ObjectiveTemplate("paper_abs", 30), TRANSITION_A, (UNSCALED,), 200, SEED))
    worst = max(r.failure_rate for r in rows)
    return worst == 0.0, f"max unscaled failure rate over the grid = {worst}"


# -- 3: recurrence convergence -------------------------------------------------------


def criterion_3():
    # Grid: the theory grid a in [sqrt(3(n-1)), 100], restricted to a >= 2 sqrt(n-1),
    # log-spaced, 50 points in total.
    points = []
    for n, count in ((2, 17), (5, 17), (30, 16)):
        lo = 2 * math.sqrt(n - 1)
        points += [(float(a), n) for a in np.geomspace(lo, 100.0, count)]
    assert len(points) == 50
    misses, worst_k, worst_err = [], 0, 0.0
    for a, n in points:
        try:
            c = recurrence_converge(a, n, tol=1e-10, max_k=10_000)
        except NotConvergedError:
            K = recurrence_converge(a, n, tol=1e-10, max_k=10**6).K
            misses.append(f"(a={a:.2f}, n={n}, K={K})")
            continue
        worst_k = max(worst_k, c.K)
        worst_err = max(worst_err, abs(c.limit - limit_b(a, n)))
    detail = (
        f"{50 - len(misses)}/50 points within 1e-10 in <= 1e4 iterations (max K {worst_k}, max error {worst_err:.1e}); "
        f"beyond the budget: {', '.join(misses) or 'none'}"
    )
    return not misses and worst_err <= 1e-10, detail


# -- 4, 5: traces against the recurrence, steplength bound ---------------------------


def _memoryless_runs():
    out = []
    for a, n in ((3.0, 2), (9.5, 30)):
        spec = PaperAbs(a, n)
        for i in range(100):
            x0 = sample_x0(spec, trial_rng(SEED, i))
            out.append((a, n, x0, run(spec, SCALED, x0)))
    return out


_RUNS_CACHE: list = []


def _cached_runs():
    if not _RUNS_CACHE:
        _RUNS_CACHE.extend(_memoryless_runs())
    return _RUNS_CACHE


def criterion_4():
    worst = 0.0
    rows = 0
    for a, n, x0, tr in _cached_runs():
        b = tr.column("b_k")
        # the recurrence is symmetric under b -> -b; a start with x0[0] < 0 runs the mirrored sequence
        expected = math.copysign(1.0, x0[0]) * b_sequence(a, n, len(b) - 1)
        worst = max(worst, float(np.max(np.abs(b - expected) / np.abs(expected))))
        rows += len(b)
    return worst <= 1e-9, f"200 runs, {rows} recorded b_k, max relative error = {worst:.2e}"


def criterion_5():
    worst = 0.0
    for _, _, _, tr in _cached_runs():
        t = tr.column("t")[1:]
        t = t[~np.isnan(t)]
        if t.size:
            worst = max(worst, float(t.max()))
    return worst <= 2.0, f"max t_k over k >= 1 in 200 runs = {worst}"


# -- 6: the qualitative triple --------------------------------------------------------


def criterion_6():
    expect = {
        "scaled": Termination.CONVERGED_NONOPTIMAL,
        "bfgs": Termination.UNBOUNDED_DIRECTION,
        "gradient": Termination.DIVERGING,
    }
    methods = {"scaled": SCALED, "bfgs": FullBFGS(), "gradient": Gradient()}
    counts = {}
    for label, a in (("3", 3.0), ("sqrt3", math.sqrt(3))):
        spec = PaperAbs(a, 2)
        good = 0
        for i in range(100):
            x0 = sample_x0(spec, trial_rng(SEED, i))
            good += all(run(spec, methods[k], x0).termination is expect[k] for k in methods)
        counts[label] = good
    spec = PaperAbs(math.sqrt(3) - 0.001, 2)
    succ = 0
    for i in range(100):
        tr = run(spec, SCALED, sample_x0(spec, trial_rng(SEED, i)))
        succ += tr.termination in (Termination.DIVERGING, Termination.UNBOUNDED_DIRECTION)
    counts["sqrt3-0.001"] = succ
    passed = all(v >= 95 for v in counts.values())
    return passed, f"seeds (of 100) behaving as stated: {counts}"


# -- 7: predicates against experiments ---------------------------------------------------


def criterion_7():
    kappas = (0.5, 1, 1.5, 1.7, 2, 2.5, 4, 10)
    bad = []
    checked_fail, checked_ok = 0, 0
    for n in (2, 5, 30):
        a_values = [k * math.sqrt(n - 1) for k in kappas]
        for c1 in (0.01, 0.001):
            params = RunParams(linesearch=LineSearchParams(c1, 0.5))
            rows = failure_rate_sweep(SweepConfig(ObjectiveTemplate("paper_abs", n), a_values, (SCALED,), 100, SEED, params))
            for r in rows:
                if predict_failure(r.a, n, c1).memoryless_algorithm2:
                    checked_fail += 1
                    if r.failure_rate < 0.99:
                        bad.append((n, c1, r.a, r.failure_rate))
                elif r.a < math.sqrt(3 * (n - 1)) - 0.01:
                    checked_ok += 1
                    if r.failure_rate > 0.01:
                        bad.append((n, c1, r.a, r.failure_rate))
    return not bad, f"{checked_fail} predicted-failure cells, {checked_ok} below-threshold cells, violations: {bad}"


# -- 8: trends in a and m ------------------------------------------------------------------


def criterion_8():
    a_values = (2.99, 3.0, 10.0, 30.0, 100.0, 300.0)
    ms = range(1, 11)
    band = 0.05
    tables = {}
    for c1 in (0.01, 0.001):
        params = RunParams(linesearch=LineSearchParams(c1, 0.5))
        rows = failure_rate_sweep(
            SweepConfig(ObjectiveTemplate("paper_abs", 4), a_values, tuple(LBFGS(m, True) for m in ms), 200, SEED, params)
        )
        tables[c1] = np.array([[_rates(rows)[(a, LBFGS(m, True).describe())] for m in ms] for a in a_values])
    problems = []
    for c1, R in tables.items():
        if np.any(np.diff(R, axis=0) < -band):
            problems.append(f"c1={c1}: not nondecreasing in a")
        if np.any(np.diff(R, axis=1) > band):
            problems.append(f"c1={c1}: not nonincreasing in m")
    m1_same = bool(np.array_equal(tables[0.01][:, 0], tables[0.001][:, 0]))
    if not m1_same:
        problems.append("m=1 rates differ between c1 values")
    summary = "; ".join(
        f"c1={c1} m=1 [{', '.join(f'{v:.2f}' for v in R[:, 0])}] m=10 [{', '.join(f'{v:.2f}' for v in R[:, -1])}]"
        for c1, R in tables.items()
    )
    return not problems, f"{problems or 'trends hold within 0.05'}; {summary}"


# -- 9: accuracy on constructed max-affine instances -------------------------------------


def criterion_9():
    rows = pwl_accuracy_experiment(n=10, p=50, m_values=range(1, 11), trials=50, base_seed=SEED)
    med = {(r.m, r.scaled): r.median_error for r in rows}
    unscaled9 = med[(9, False)]
    scaled10 = med[(10, True)]
    c_a = unscaled9 <= 1e-6
    c_b = scaled10 >= 1e-2
    c_c = all(med[(m, False)] <= med[(m, True)] for m in range(1, 11))
    gap = math.log10(scaled10) - math.log10(max(unscaled9, 1e-300))
    c_d = gap >= 3
    detail = (
        f"unscaled L-BFGS-9 median {unscaled9:.2e} (<= 1e-6: {c_a}); "
        f"scaled L-BFGS-10 median {scaled10:.2e} (>= 1e-2: {c_b}); "
        f"unscaled <= scaled for all m: {c_c}; gap {gap:.1f} orders (>= 3: {c_d})"
    )
    return c_a and c_b and c_c and c_d, detail


# -- 10: unit and property checks ------------------------------------------------------------


def _random_pair(rng, n):
    while True:
        s, y = rng.standard_normal(n), rng.standard_normal(n)
        if s @ y > 0.05 * np.linalg.norm(s) * np.linalg.norm(y):
            return UpdatePair.from_vectors(s, y)


def _same_piece(spec, x, h):
    """True when f is affine on the box of half-width h around x (decided before differencing)."""
    if isinstance(spec, PaperAbs):
        return abs(x[0]) > 10 * h
    if isinstance(spec, SkewAbs):
        return abs(spec.b1 @ x) > 10 * h * np.sqrt(spec.dim)
    top = np.sort(spec.B @ x - spec.r)[-2:]
    return top[1] - top[0] > 10 * h * np.abs(spec.B).sum(axis=1).max()


def criterion_10():
    rng = np.random.default_rng(SEED)
    notes = []

    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        pair = _random_pair(rng, n)
        g = rng.standard_normal(n)
        h = HistoryBuffer(1)
        h.push(pair)
        a, b = memoryless_direction(g, pair), lbfgs_two_loop(g, h, True)
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    ok_twoloop = worst <= 1e-12
    notes.append(f"two-loop agreement {worst:.1e}")

    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(2, 12))
        H = np.eye(n)
        for _ in range(int(rng.integers(1, 6))):
            pair = _random_pair(rng, n)
            H = full_bfgs_update(H, pair)
            worst = max(worst, float(np.linalg.norm(H @ pair.y - pair.s) / (np.linalg.norm(H, 2) * np.linalg.norm(pair.y))))
    ok_secant = worst <= 1e-12
    notes.append(f"secant residual {worst:.1e}")

    h = 1e-6
    worst = 0.0
    specs = [PaperAbs(3.0, 5), SkewAbs.random(2.0, 6, rng), MaxAffine(rng.standard_normal((15, 5)), rng.standard_normal(15)),
             make_max_affine_vertex_opt(6, 20, 3)[0]]
    for spec in specs:
        for _ in range(200):
            x = rng.standard_normal(spec.dim) * 3
            ev = evaluate(spec, x)
            if not ev.differentiable:
                continue
            if not _same_piece(spec, x, h):
                continue
            fd = np.array([(value(spec, x + h * e) - value(spec, x - h * e)) / (2 * h) for e in np.eye(spec.dim)])
            worst = max(worst, float(np.linalg.norm(fd - ev.gradient) / np.linalg.norm(ev.gradient)))
    ok_fd = worst <= 1e-5
    notes.append(f"finite differences {worst:.1e}")

    ok_seq = True
    eps = np.finfo(float).eps
    for n in (2, 5, 30):
        for a in np.geomspace(math.sqrt(3 * (n - 1)) * (1 + 1e-12), 100.0, 25):
            beta = beta_sequence(a, n, 10_000)
            b = b_sequence(a, n, 10_000)
            ok_seq &= bool(np.all(beta > 0) and np.all(beta <= (1 + 4 * eps) / a) and np.all(b[:-1] * b[1:] < 0))
            if a >= 2 * math.sqrt(n - 1):
                lim = limit_b(a, n)
                far = np.abs(beta - lim) > 64 * eps * lim
                keep = beta[: int(np.argmin(far)) if not far.all() else beta.size]
                ok_seq &= bool(np.all(np.diff(keep[0::2]) <= 0) and np.all(np.diff(keep[1::2]) >= 0))
    notes.append(f"sequence properties {'hold' if ok_seq else 'violated'}")
    return ok_twoloop and ok_secant and ok_fd and ok_seq, "; ".join(notes)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def _check(number, report):
    t0 = time.perf_counter()
    passed, detail = CRITERIA[number]()
    detail = f"{detail} ({time.perf_counter() - t0:.1f} s)"
    report(number, passed, detail)
    assert passed, detail


def test_criterion_01_scaled_transition(acceptance_report):
    _check(1, acceptance_report)


def test_criterion_02_unscaled_never_fails(acceptance_report):
    _check(2, acceptance_report)


def test_criterion_03_recurrence_converges(acceptance_report):
    _check(3, acceptance_report)


def test_criterion_04_trace_matches_recurrence(acceptance_report):
    _check(4, acceptance_report)


def test_criterion_05_steplength_at_most_two(acceptance_report):
    _check(5, acceptance_report)


def test_criterion_06_three_methods(acceptance_report):
    _check(6, acceptance_report)


def test_criterion_07_predicates_match_experiments(acceptance_report):
    _check(7, acceptance_report)


def test_criterion_08_trends_in_a_and_m(acceptance_report):
    _check(8, acceptance_report)


def test_criterion_09_max_affine_accuracy(acceptance_report):
    _check(9, acceptance_report)


def test_criterion_10_unit_properties(acceptance_report):
    _check(10, acceptance_report)


if __name__ == "__main__":
    import sys

    lines, ok = [], True
    for number in sorted(CRITERIA):
        t0 = time.perf_counter()
        passed, detail = CRITERIA[number]()
        ok &= passed
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail} ({time.perf_counter() - t0:.1f} s)"
        print(line, flush=True)
    sys.exit(0 if ok else 1)
