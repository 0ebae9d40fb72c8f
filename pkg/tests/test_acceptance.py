"""End-to-end acceptance checks.

Each test prints one ``[acceptance] <name>: PASS|FAIL`` line (visible without
``-s``) before asserting. Run just these with ``pytest tests/test_acceptance.py -v``.
"""

import copy
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from mvbbo import CatCMAwM
from mvbbo.benchmarks import default_spec, make_single
from mvbbo.categorical import default_q_min
from mvbbo.cli import main as cli_main
from mvbbo.cma import GaussianState, population_size
from mvbbo.harness import ExperimentConfig, aggregate_stats, run_experiment
from mvbbo.indicators import epf_distance, hypervolume_2d, nondominated_2d, uhvi
from mvbbo.margin import (
    MODIFIED,
    ORIGINAL,
    MarginConfig,
    apply_margin_correction,
    marginal_probabilities,
    promising_alpha,
)
from mvbbo.sampling import build_thresholds
from mvbbo.space import SearchSpace


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok

    return emit


def _random_instance(rng):
    n_co = int(rng.integers(0, 3))
    n_in = int(rng.integers(1, 5))
    domains = []
    for _ in range(n_in):
        size = int(rng.integers(2, 9))
        gaps = rng.uniform(0.1, 3.0, size - 1)
        domains.append(tuple((rng.normal() * 3 + np.concatenate([[0.0], np.cumsum(gaps)])).tolist()))
    space = SearchSpace(n_co=n_co, integer_domains=domains)
    n = n_co + n_in
    X = rng.standard_normal((n, n))
    C = X @ X.T / n + 0.05 * np.eye(n)
    centers = np.array([rng.choice(d) for d in domains]) + rng.normal(0, 1.5, n_in)
    m = np.concatenate([rng.normal(size=n_co), centers])
    gauss = GaussianState.initial(m, float(10 ** rng.uniform(-3, 0.5)), C, n_in=n_in)
    gauss.A = 10 ** rng.uniform(-1, 1, n)
    alpha = float(rng.uniform(0.005, 0.3))
    gauss.p_mut[:] = np.maximum(alpha, rng.uniform(0, 1, n_in))
    flags = rng.random(n_in) < 0.5
    return space, gauss, alpha, flags


def test_margin_round_trip(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    side_changes = 0
    for i in range(10_000):
        space, gauss, alpha, flags = _random_instance(rng)
        mode = (ORIGINAL, MODIFIED)[i % 2]
        table = build_thresholds(space)
        edge_before = [table.is_edge(n, gauss.m[space.j_in[n]]) for n in range(space.n_in)]
        apply_margin_correction(gauss, flags, MarginConfig(alpha, mode, bool(i % 3)), table, space)
        for n in range(space.n_in):
            marg = marginal_probabilities(gauss, n, table, space)
            side_changes += marg.edge != edge_before[n]
            measured = marg.p_mut if marg.edge else marg.p_low + marg.p_up
            worst = max(worst, abs(measured - gauss.p_mut[n]))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and side_changes == 0 and elapsed < 10
    report("margin round-trip", ok, f"max error {worst:.2e}, {elapsed:.1f}s")
    assert side_changes == 0
    assert worst <= 1e-9
    assert elapsed < 10


def test_discrete_probability_budget(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        n_in, n_ca = int(rng.integers(0, 20)), int(rng.integers(0, 20))
        if n_in + n_ca == 0:
            n_in = 1
        counts = tuple(int(k) for k in rng.integers(2, 10, n_ca))
        alpha = promising_alpha(n_in, n_ca)
        q_min = default_q_min(counts, n_in) if n_ca else np.zeros(0)
        # converged state: every integer at its mutation floor, every category at its best
        stay = (1 - alpha) ** n_in
        for qm, k in zip(q_min, counts):
            stay *= 1 - qm * (k - 1)
        worst = max(worst, abs((1 - stay) - 0.27))
    p = Fraction(27, 100)
    tails = {}
    for lam in range(6, 65):
        limit = lam - lam // 2
        tails[lam] = float(
            sum(math.comb(lam, k) * p**k * (1 - p) ** (lam - k) for k in range(limit + 1))
        )
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and min(tails.values()) >= 0.95 and abs(tails[6] - 0.9508) < 5e-5 and elapsed < 1
    report("discrete probability budget", ok, f"max |p-0.27| {worst:.1e}, tail(6) {tails[6]:.5f}, {elapsed:.2f}s")
    assert worst <= 1e-12
    assert all(t >= 0.95 for t in tails.values())
    assert abs(tails[6] - 0.9508) < 5e-5
    assert elapsed < 1


@pytest.mark.parametrize("name", ["SphereIntCOM", "EllipsoidIntCLO", "REllipsoidIntCLO", "MVProximity"])
def test_single_objective_convergence(report, name):
    start = time.perf_counter()
    f = make_single(name, default_spec(name, 3, 3, 3))
    assert f.space.integer_domains[0] == tuple(float(v) for v in range(-3, 4))
    assert f.space.category_counts == (5, 5, 5)
    finals = []
    for seed in range(20):
        opt = CatCMAwM(f.space, sigma=1.0, init_box=(1.0, 3.0), seed=seed)
        opt.optimize(f, budget=30_000, target=1e-9)
        finals.append(opt.best_fitness)
    med = float(np.median(finals))
    elapsed = time.perf_counter() - start
    # four functions share a two-minute budget
    ok = med < 1e-8 and elapsed < 30
    report(f"single-objective convergence {name}", ok, f"median {med:.2e}, {elapsed:.1f}s")
    assert med < 1e-8
    assert elapsed < 30


def _ellipsoid_config(variant):
    return ExperimentConfig(
        "EllipsoidInt", variant, 10, 10, 0, budget=50_000, trials=20, seed=0,
        init_box=(1.0, 3.0), sigma0=1.0,
    ).resolved()


@pytest.fixture(scope="module")
def ellipsoid_runs():
    start = time.perf_counter()
    modified = run_experiment(_ellipsoid_config("catcmawm"))
    original = run_experiment(_ellipsoid_config("catcmawm-original-margin"))
    return modified, original, time.perf_counter() - start


def _tail(rec):
    T = np.array(rec.p_mut)
    F = np.array(rec.flags)
    k = int(0.8 * len(T))
    return T[k:], F[k:]


def test_modified_margin_beats_original(report, ellipsoid_runs):
    modified, original, elapsed = ellipsoid_runs
    lam = population_size(20)
    assert original[0].alpha == 1 / (lam * 20)
    assert modified[0].alpha == promising_alpha(10, 0)
    med_mod = float(np.median([r.values[-1] for r in modified]))
    med_orig = float(np.median([r.values[-1] for r in original]))

    # modified: dims without any successful mutation over the whole final window
    mod_ratio = []
    for rec in modified:
        T, F = _tail(rec)
        quiet = ~F.any(axis=0)
        if quiet.any():
            mod_ratio.append(T[:, quiet].max() / rec.alpha)
        assert np.all(T[:, quiet] >= rec.alpha * (1 - 1e-12))
    # original: iterations in the final window where a dim had no successful mutation
    orig_exceed = 0
    for rec in original:
        T, F = _tail(rec)
        orig_exceed += bool(np.any(T[~F] > 2 * rec.alpha))

    within = bool(mod_ratio) and max(mod_ratio) <= 1.05
    ok = med_mod <= med_orig and within and orig_exceed >= 10 and elapsed < 180
    report(
        "modified vs original margin",
        ok,
        f"median {med_mod:.2e} vs {med_orig:.2e}, quiet p_mut <= {max(mod_ratio, default=float('nan')):.4f} alpha "
        f"over {len(mod_ratio)} seeds, original > 2 alpha in {orig_exceed}/20 seeds, {elapsed:.1f}s",
    )
    assert med_mod <= med_orig
    assert within
    assert orig_exceed >= 10
    assert elapsed < 180


def test_mutation_rate_bound(report, ellipsoid_runs):
    modified, _, _ = ellipsoid_runs
    violations = 0
    checked = 0
    for rec in modified:
        prev = np.ones(len(rec.p_mut[0]))
        for p_mut, flags in zip(rec.p_mut, rec.flags):
            p_mut, flags = np.array(p_mut), np.array(flags)
            quiet = ~flags
            violations += int(np.sum(p_mut[quiet] > np.maximum(rec.alpha, prev[quiet])))
            checked += int(quiet.sum())
            prev = p_mut
    ok = violations == 0 and checked > 0
    report("mutation-rate bound", ok, f"{violations} violations in {checked} checks")
    assert checked > 0
    assert violations == 0


def _random_front(rng):
    pts = rng.uniform(0, 1, size=(int(rng.integers(1, 11)), 2))
    return nondominated_2d(pts)


def test_hypervolume_and_distance_oracles(report):
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    ref = (1.0, 1.0)
    n = 1_000_000
    worst_z = 0.0
    for _ in range(100):
        pts = rng.uniform(0, 1, size=(int(rng.integers(1, 11)), 2))
        exact = hypervolume_2d(pts, ref)
        u = rng.random((n, 2))
        hit = np.zeros(n, dtype=bool)
        for a, b in pts:
            hit |= (u[:, 0] >= a) & (u[:, 1] >= b)
        frac = hit.mean()
        se = math.sqrt(max(frac * (1 - frac), 1e-12) / n)
        worst_z = max(worst_z, abs(frac - exact) / se)

    # distance to the nearest grid point (spacing 1e-3) that no front point weakly dominates
    g = np.arange(0, 1000) * 1e-3
    GX, GY = np.meshgrid(g, g, indexing="ij")
    worst_d = 0.0
    done = 0
    while done < 100:
        front = _random_front(rng)
        free = np.ones_like(GX, dtype=bool)
        for a, b in front:
            free &= ~((GX >= a) & (GY >= b))
        fx, fy = GX[free], GY[free]
        for _ in range(10):
            p = rng.uniform(0, 1, 2)
            if uhvi(p, front, ref) > 0:
                continue
            grid = math.sqrt(float(np.min((fx - p[0]) ** 2 + (fy - p[1]) ** 2)))
            worst_d = max(worst_d, abs(epf_distance(p, front, ref) - grid))
            done += 1
    elapsed = time.perf_counter() - start
    ok = worst_z <= 3 and worst_d <= 2e-3 and elapsed < 30
    report("hypervolume and distance oracles", ok, f"max |z| {worst_z:.2f}, max distance error {worst_d:.1e}, {elapsed:.1f}s")
    assert worst_z <= 3
    assert worst_d <= 2e-3
    assert elapsed < 30


def test_bi_objective_progress(report):
    start = time.perf_counter()
    cfg = ExperimentConfig(
        "DSIntLFTL", "como-catcmawm", 3, 3, 3, budget=80_000, trials=10, seed=0,
        init_box=(-5.0, 15.0), sigma0=4.0, kernels=5, reference_point=(5.0, 5.0),
    ).resolved()
    assert cfg.benchmark_spec().category_count == 5
    long_runs = run_experiment(cfg)
    best_long = max(r.values[-1] for r in long_runs)
    short_runs = []
    for r in long_runs:
        keep = [i for i, e in enumerate(r.evaluations) if e <= 20_000]
        short = copy.copy(r)
        short.evaluations = [r.evaluations[i] for i in keep]
        short.values = [r.values[i] for i in keep]
        short_runs.append(short)
    # a run stopped at the short budget is exactly the prefix of the long run
    direct = run_experiment(ExperimentConfig.from_dict({**cfg.to_dict(), "budget": 20_000, "trials": 1}))[0]
    assert direct.evaluations == short_runs[0].evaluations
    assert direct.values == short_runs[0].values
    stats = aggregate_stats(short_runs)
    monotone = bool(np.all(np.diff(stats.median) >= 0))
    final = float(stats.median[-1])
    elapsed = time.perf_counter() - start
    ok = monotone and final >= 0.95 * best_long and elapsed < 180
    report(
        "bi-objective progress",
        ok,
        f"median HV {final:.4f} at {stats.evaluations[-1]} evals, best at 4x budget {best_long:.4f}, {elapsed:.1f}s",
    )
    assert monotone
    assert final >= 0.95 * best_long
    assert elapsed < 180


def test_degeneration_equivalence(report):
    rng = np.random.default_rng(5)
    mismatches = 0
    for i in range(1000):
        space, gauss, alpha, _ = _random_instance(rng)
        table = build_thresholds(space)
        flags = np.ones(space.n_in, dtype=bool)
        centering = bool(i % 2)
        a, b = copy.deepcopy(gauss), copy.deepcopy(gauss)
        apply_margin_correction(a, flags, MarginConfig(alpha, MODIFIED, centering), table, space)
        apply_margin_correction(b, flags, MarginConfig(alpha, ORIGINAL, centering), table, space)
        same = all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("m", "A", "p_mut", "C"))
        mismatches += not (same and a.sigma == b.sigma)

    space = SearchSpace(n_co=2, integer_domains=[(-1, 0, 1)])
    f = make_single("SphereIntCOM", default_spec("SphereIntCOM", 2, 1, 0))
    opt = CatCMAwM(space, seed=3)
    untouched = opt.cat is None
    for _ in range(50):
        pop = opt.ask()
        untouched &= all(len(s.c) == 0 for s in pop)
        opt.tell(pop, [f.evaluate(s)[0] for s in pop])
    untouched &= opt.cat is None
    ok = mismatches == 0 and untouched
    report("degeneration equivalence", ok, f"{mismatches} mismatches in 1000 instances, categorical untouched: {untouched}")
    assert mismatches == 0
    assert untouched


def test_determinism_across_workers(report, tmp_path, monkeypatch):
    identical = True
    for name, cfg_fields in [
        ("single", '{"benchmark": "MVProximity", "n_co": 2, "n_in": 2, "n_ca": 2, "budget": 1500, "trials": 3, "seed": 17}'),
        ("multi", '{"benchmark": "DSIntLFTL", "variant": "como-catcmawm", "n_co": 2, "n_in": 2, "n_ca": 2, '
                  '"budget": 1200, "trials": 3, "seed": 17, "init_box": [-5, 15], "sigma0": 4}'),
    ]:
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(cfg_fields)
        outputs = []
        for workers in ("1", "3"):
            monkeypatch.setenv("MVBBO_THREADS", workers)
            out = tmp_path / f"{name}_{workers}"
            assert cli_main(["run", "--config", str(cfg), "--out", str(out)]) == 0
            outputs.append({n: (out / n).read_bytes() for n in ("records.csv", "stats.csv")})
        identical &= outputs[0] == outputs[1]
    report("determinism across workers", identical, "records.csv and stats.csv compared byte for byte")
    assert identical
