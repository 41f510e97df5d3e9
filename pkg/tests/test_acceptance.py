"""Acceptance criteria 1-9, each at its stated tolerance.

The terminal summary prints one PASS/FAIL line per criterion (see conftest.py).
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from biolage import analysis
from biolage.cli import execute
from biolage.config import load_config, parse_config
from biolage.ibm import advance, init_population, run_replicates
from biolage.initial import DiracCohort, parabolic, truncated_gaussian, uniform
from biolage.model import DemographyParams, ModelParams, chi_continuous, chi_k, gamma_density, gamma_moment, validate, x_max
from biolage.moments import (
    MomentVector,
    equilibrium_moments,
    find_k0,
    integrate_moments,
    mean_trajectory_symmetric,
    moments_of_density,
    recursion_residual,
)
from biolage.pde import Grid, density_moments, initial_state, run, zero_state

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BENCH = validate(ModelParams.from_tau_p(1.0, 0.5, g_plus=1.1, g_minus=0.9))
CASCADE = validate(ModelParams(0.1, 0.1, g_plus=1.1, g_minus=0.99))


# 1 ---------------------------------------------------------------------------
def test_criterion_1_mass_conservation():
    ic = DiracCohort(20.0)
    pop = init_population(10**5, ic, seed=1)
    for t in (1.0, 10.0, 30.0):
        advance(pop, t, BENCH)
        assert pop.size == 10**5
    assert pop.event_counts["rejuvenation"] > 0 and pop.event_counts["aging"] > 0

    g = Grid.with_width(300.0, 1 / 16)
    traj = run(BENCH, initial_state(g, ic), [1.0, 10.0, 30.0], order=2)
    assert traj.report["max_ledger_error"] <= 1e-12
    traj1 = run(BENCH, initial_state(g, ic), [30.0], order=1)
    assert traj1.report["max_ledger_error"] <= 1e-12

    ode = integrate_moments(BENCH, MomentVector(0.0, ic.moments(4)), 30.0, dt=0.01, output_times=[1.0, 10.0, 30.0])
    assert all(v.values[0] == 1.0 for v in ode.vectors)


# 2 ---------------------------------------------------------------------------
def test_criterion_2_chi_analysis():
    k0 = find_k0(CASCADE, 100)
    assert 60 <= k0.k0 <= 80
    assert k0.k0 in (68, 69)
    xm = x_max(CASCADE)
    h = 1e-4
    deriv = (chi_continuous(CASCADE, xm.x_max + h) - chi_continuous(CASCADE, xm.x_max - h)) / (2 * h)
    assert abs(deriv) <= 1e-8
    rng = np.random.default_rng(2)
    for _ in range(200):
        tp, tm = rng.uniform(0.01, 2.0, 2)
        gp, gm = rng.uniform(1.001, 2.0), rng.uniform(0.3, 0.999)
        vp = validate(ModelParams(tp, tm, g_plus=gp, g_minus=gm))
        slope = tp * math.log(gp) + tm * math.log(gm)
        assert (x_max(vp).case == "(i)") == (slope > 0)


# 3 ---------------------------------------------------------------------------
def test_criterion_3_symmetric_mean_law():
    start = time.perf_counter()
    times = [1.0, 10.0, 30.0]
    results = run_replicates(32, 10**5, DiracCohort(20.0), BENCH, times, 3, K=1, hist_b_max=400.0)
    assert time.perf_counter() - start <= 60.0
    means = np.array([r.mean_ages for r in results])
    for i, t in enumerate(times):
        target = mean_trajectory_symmetric(1.0, 0.1, 20.0, t)
        se = means[:, i].std(ddof=1) / math.sqrt(len(means))
        assert abs(means[:, i].mean() - target) <= 3 * se, (t, means[:, i].mean(), target, se)
    assert mean_trajectory_symmetric(1.0, 0.1, 20.0, 30.0) == pytest.approx(62.13, abs=0.01)


# 4 ---------------------------------------------------------------------------
def test_criterion_4_moment_convergence_and_divergence():
    E = moments_of_density(parabolic().density, 10.0, 100)
    traj = integrate_moments(CASCADE, E, 1e4, dt=0.05, output_times=[1e4])
    end = traj.vectors[-1]
    eq = equilibrium_moments(CASCADE, E.values[0], 10)
    rel = np.abs(np.expm1((end.log10()[:11] - eq.log10()) * math.log(10)))
    assert np.all(rel <= 1e-4)
    k0 = find_k0(CASCADE, 100).k0
    growth = end.log10()[k0 + 1 :] - E.log10()[k0 + 1 :]
    assert np.all(growth > 10.0)


# 5 ---------------------------------------------------------------------------
def test_criterion_5_rejuvenation_support_bound():
    vp = validate(ModelParams(1.0, 0.0, g_plus=1.1))
    ic = parabolic()
    pop = init_population(10**5, ic, seed=5)
    advance(pop, 30.0, vp)
    assert pop.ages.max() <= 40.0
    g = Grid.with_width(64.0, 1 / 16)
    state = run(vp, initial_state(g, ic), [30.0], order=2).snapshots[0]
    sc = analysis.support_check(state, 10.0)
    assert sc.ok and sc.bound == pytest.approx(40.0 + g.width)


# 6 ---------------------------------------------------------------------------
@pytest.fixture(scope="module")
def cohort_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("cohorts")
    out = {}
    start = time.perf_counter()
    for name in ("cohort_balanced", "cohort_aging", "cohort_rejuvenating"):
        spec = load_config(CONFIGS / f"{name}.toml")
        assert execute(spec, root / name, quiet=True) == 0
        report = json.loads((root / name / "report.json").read_text())
        summary = json.loads((root / name / "ibm_summary.json").read_text())
        means = np.array([r["mean_ages"] for r in summary["replicates"]])
        out[name] = (spec, report, means)
    out["elapsed"] = time.perf_counter() - start
    return out


def test_criterion_6_triangle_consistency(cohort_runs):
    assert cohort_runs["elapsed"] <= 300.0
    for name in ("cohort_balanced", "cohort_aging", "cohort_rejuvenating"):
        spec, report, means = cohort_runs[name]
        assert spec.numerics.output_times == [1.0, 10.0, 20.0, 30.0]
        assert spec.numerics.n_individuals == 10**5
        failed = [e["name"] for e in report["entries"] if not e["passed"]]
        assert report["passed"], (name, failed)
        l1 = [e for e in report["entries"] if "L1" in e["name"]]
        assert len(l1) == 4 and all(e["tolerance"] == 0.05 for e in l1)
        moments = [e for e in report["entries"] if "/E0" in e["name"]]
        assert len(moments) == 4 * 3 * 4

    times = np.array([1.0, 10.0, 20.0, 30.0])
    mid = cohort_runs["cohort_balanced"][2].mean(axis=0)
    law = np.array([mean_trajectory_symmetric(1.0, 0.1, 20.0, t) for t in times])
    se = cohort_runs["cohort_balanced"][2].std(axis=0, ddof=1) / math.sqrt(32)
    assert np.all(np.abs(mid - law) <= 3 * se + 0.01 * law)
    assert np.all(mid >= 20.0 + times)
    assert np.all(cohort_runs["cohort_aging"][2].mean(axis=0) > mid)
    assert np.all(cohort_runs["cohort_aging"][2].mean(axis=0) > 20.0 + times)
    assert np.all(cohort_runs["cohort_rejuvenating"][2].mean(axis=0) < 20.0 + times)


# 7 ---------------------------------------------------------------------------
def test_criterion_7_demography():
    spec = load_config(CONFIGS / "demography.toml")
    vp = spec.params
    dem = vp.demography
    assert (vp.tau_plus, vp.tau_minus, dem.beta, dem.mu) == (0.0, 0.0, 1.0, 0.1)
    g = Grid.with_width(150.0, 1 / 64)
    traj = run(vp, zero_state(g), [100.0], order=2)
    assert traj.snapshots[-1].total_mass == pytest.approx(10.0, rel=1e-3)
    assert traj.report["max_ledger_error"] <= 1e-12
    ode = integrate_moments(vp, MomentVector(0.0, np.zeros(5)), 100.0, dt=0.01)
    assert ode.vectors[-1].values[0] == pytest.approx(10.0, rel=1e-3)

    for k in range(11):
        val, _ = integrate.quad(lambda b: b**k * gamma_density(dem, b), 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        assert gamma_moment(dem, k) == pytest.approx(val, rel=1e-8)

    n0, times = 3, [5.0, 20.0, 100.0]
    sizes = np.array([r.sizes for r in run_replicates(400, n0, DiracCohort(5.0), vp, times, 7, K=1, hist_b_max=150.0)])
    for i, t in enumerate(times):
        exact = 10.0 + (n0 - 10.0) * math.exp(-0.1 * t)
        se = sizes[:, i].std(ddof=1) / math.sqrt(len(sizes))
        assert abs(sizes[:, i].mean() - exact) <= 3 * se, (t, sizes[:, i].mean(), exact, se)


# 8 ---------------------------------------------------------------------------
def test_criterion_8_nonexistence_diagnostic():
    k0 = find_k0(CASCADE, 100).k0
    for ic in (parabolic(), uniform(0.0, 10.0), truncated_gaussian(20.0, 4.0, 60.0)):
        E = moments_of_density(ic.density, ic.support_bound, 100, rtol=1e-9)
        assert np.all(E.values > 0)
        r = recursion_residual(E, CASCADE)
        assert np.all(r[k0 + 1 :] > 0)
    assert np.all(chi_k(CASCADE, np.arange(k0 + 1, 101)) < 0)


# 9 ---------------------------------------------------------------------------
TINY = """
[model]
tau = 1.0
p = 0.5
delta_plus = 0.1
delta_minus = 0.1

[initial]
kind = "dirac"
b0 = 20.0

[numerics]
n_individuals = 3000
replicates = 2
seed = 9
t_end = 5.0
output_times = [1.0, 5.0]
b_max = 64.0
cell_width = 0.125
K = 8
dt = 0.01
"""


@pytest.mark.parametrize("scenario", ["ibm", "pde", "moments", "compare", "analyze-chi"])
def test_criterion_9_determinism(scenario, tmp_path):
    digests = []
    for run_dir in ("first", "second"):
        spec = parse_config(TINY, scenario=scenario)
        assert execute(spec, tmp_path / run_dir, quiet=True) == 0
        digests.append(json.loads((tmp_path / run_dir / "manifest.json").read_text())["files"])
    assert digests[0] == digests[1]
    assert len(digests[0]) >= 2
