import json
import math

import numpy as np
import pytest

from biolage.analysis import (
    ComparisonReport,
    auto_bin_width,
    chi_report,
    l1_distance,
    l1_probabilities,
    mc_tolerance,
    mean_vector,
    moment_agreement,
    replicate_relative_se,
    state_probabilities,
    support_check,
    triangle,
)
from biolage.errors import BinningMismatch, RangeError
from biolage.ibm import advance, histogram, init_population
from biolage.initial import DiracCohort
from biolage.model import ModelParams, validate
from biolage.moments import MomentVector
from biolage.pde import Grid, initial_state, zero_state

CASCADE = validate(ModelParams(0.1, 0.1, g_plus=1.1, g_minus=0.99))


def test_l1_identical_and_disjoint():
    h = histogram(np.array([0.5, 1.5, 1.7]), 1.0, 4.0)
    assert l1_distance(h, h) == 0.0
    a = histogram(np.array([0.5, 0.6]), 1.0, 4.0)
    b = histogram(np.array([2.5, 3.6]), 1.0, 4.0)
    assert l1_distance(a, b) == 2.0


def test_l1_symmetry_and_triangle():
    rng = np.random.default_rng(0)
    p, q, r = (rng.dirichlet(np.ones(20)) for _ in range(3))
    assert l1_probabilities(p, q) == l1_probabilities(q, p)
    assert l1_probabilities(p, r) <= l1_probabilities(p, q) + l1_probabilities(q, r) + 1e-15


def test_l1_binning_mismatch():
    with pytest.raises(BinningMismatch):
        l1_probabilities(np.ones(3), np.ones(4))
    a = histogram(np.array([0.5]), 1.0, 4.0)
    with pytest.raises(BinningMismatch):
        l1_distance(a, histogram(np.array([0.5]), 0.5, 4.0))
    with pytest.raises(BinningMismatch):
        l1_distance(histogram(np.array([0.5]), 0.3, 4.0), zero_state(Grid(16.0, 64)))


def test_state_probabilities_with_overflow():
    g = Grid(16.0, 64)
    s = zero_state(g)
    s.masses[0] = 1.0  # [0, 0.25)
    s.masses[10] = 1.0  # [2.5, 2.75)
    s.outflow_mass = 2.0
    p = state_probabilities(s, np.array([0.0, 1.0, 2.0]))
    np.testing.assert_allclose(p, [0.25, 0.0, 0.75])
    h = histogram(np.array([0.1, 5.0, 6.0, 7.0]), 1.0, 2.0)
    assert l1_distance(h, s) == pytest.approx(0.0, abs=1e-15)


def test_auto_bin_width():
    assert auto_bin_width(0.0) == 1.0
    assert auto_bin_width(3.0) == 1.0
    assert auto_bin_width(20.0) == 4.0
    assert auto_bin_width(64.0) == 8.0


def test_support_check_cases():
    assert support_check(np.array([5.0, 39.0]), 10.0, 30.0).ok
    assert not support_check(np.array([5.0, 41.0]), 10.0, 30.0).ok
    pop = init_population(100, DiracCohort(10.0), seed=0)
    advance(pop, 2.0, validate(ModelParams(1.0, 0.0, g_plus=1.1)))
    assert support_check(pop, 10.0).ok
    g = Grid(32.0, 64)
    s = initial_state(g, DiracCohort(10.2))
    r = support_check(s, 10.2)
    assert r.ok and r.bound == pytest.approx(10.7)
    s.outflow_mass = 1e-3
    assert not support_check(s, 10.2).ok


def test_moment_agreement_identical():
    v = MomentVector(1.0, [2.0, 4.0, 10.0])
    rep = moment_agreement(v, v, 2)
    assert rep.passed and [e.value for e in rep.entries] == [0.0, 0.0]
    assert [e.name for e in rep.entries] == ["E1/E0", "E2/E0"]


def test_moment_agreement_mismatch_and_first_failure():
    a = MomentVector(1.0, [1.0, 2.0, 5.0])
    b = MomentVector(1.0, [1.0, 2.0, 5.5])
    rep = moment_agreement(a, b, 2, tol_profile=[0, 0.01, 0.01])
    assert not rep.passed
    assert rep.first_failure().name == "E2/E0"
    assert rep.entries[1].value == pytest.approx(0.1 / 1.1, rel=1e-12)
    assert moment_agreement(a, b, 2, tol_profile=lambda k: 0.1).passed
    with pytest.raises(RangeError):
        moment_agreement(a, MomentVector(2.0, [1.0, 2.0, 5.0]), 2)
    with pytest.raises(RangeError):
        moment_agreement(a, b, 3)


def test_moment_agreement_on_flagged_values():
    a = MomentVector(0.0, [1.0, 400.0], [False, True])
    b = MomentVector(0.0, [1.0, 400.0 + math.log10(1.005)], [False, True])
    rep = moment_agreement(a, b, 1)
    assert rep.entries[0].value == pytest.approx(0.005 / 1.005, rel=1e-9)


def test_report_serialization():
    rep = ComparisonReport("x")
    rep.add("m", np.float64(0.5), 1.0, k=np.int64(2))
    d = json.loads(rep.to_json())
    assert d["passed"] and d["entries"][0]["k"] == 2
    other = ComparisonReport("y")
    other.add("n", 2.0, 1.0)
    rep.extend(other, prefix="p ")
    assert rep.entries[-1].name == "p n" and not rep.passed
    assert "BAD" in rep.summary()


def test_replicate_statistics():
    vs = [MomentVector(0.0, [2.0, 2.0 * m]) for m in (1.0, 3.0)]
    se = replicate_relative_se(vs, 1)
    assert se[0] == 0.0 and se[1] == pytest.approx(math.sqrt(2.0) / math.sqrt(2.0) / 2.0)
    np.testing.assert_allclose(mc_tolerance(se), 3 * se + 0.01)
    assert mean_vector(vs).values.tolist() == [1.0, 2.0]
    with pytest.raises(RangeError):
        replicate_relative_se(vs[:1], 1)


def test_chi_report_cascade():
    rep = chi_report(CASCADE, 100)
    assert rep["k0"] == 68 and rep["case"] == "(i)"
    assert rep["x_max"] == pytest.approx(21.3508, abs=1e-4)
    assert rep["criterion"] == pytest.approx(0.008526, abs=1e-6)
    assert len(rep["chi"]) == 101 and rep["chi"][0] == 0.0
    one_sided = chi_report(validate(ModelParams(1.0, 0.0, g_plus=1.1)), 10)
    assert one_sided["case"] is None and one_sided["k0_status"] == "all_positive"


def test_triangle_identical_sources_pass():
    g = Grid(32.0, 32)
    s = zero_state(g)
    s.masses[20] = 1.0
    s.t = 1.0
    h = histogram(np.full(10, 20.5), 1.0, 32.0, t=1.0)
    v = MomentVector(1.0, [1.0, 20.5, 20.5**2])
    rep = triangle([[v, v]], [v], [v], [h], [s], k_max=2)
    assert rep.passed
    assert any(e.name == "t=1 L1(ibm, pde)" for e in rep.entries)
    with pytest.raises(RangeError):
        triangle([[v]], [v], [v], [h], [s], k_max=2)
