import numpy as np
import pytest

from ovfit.constraints import ConstraintSet
from ovfit.core import FrequencyResponseData, RationalModel, eval_model, nls_cost
from ovfit.datagen import NoiseSpec, fixed_model_4_2, log_frequencies, sample_with_noise
from ovfit.errors import InfeasibleConstraints, RankDeficient, SolveFailure
from ovfit.solver import (EstimationOptions, condition_diagnostics, estimate, iv_step,
                          run_pipeline)

from _models import band_for, random_stable_model


def rel_err(model, data):
    h = eval_model(model, data.s)
    return np.max(np.abs(h - data.responses) / np.abs(data.responses))


def greybox_constraints():
    return ConstraintSet().fix_num(3).fix_num(4).fix_num(5).fix_den(0)


@pytest.mark.parametrize("seed", range(4))
def test_exact_recovery(seed):
    r, m = random_stable_model(np.random.default_rng(100 + seed))
    w = band_for(m)
    d = FrequencyResponseData(w, eval_model(m, 1j * w))
    model, rep = run_pipeline(d, EstimationOptions(den_order=r))
    assert rel_err(model, d) <= 1e-6
    assert rep.best_cost <= 1e-10 * np.sum(np.abs(d.responses) ** 2)


def test_mimo_common_denominator():
    poles = np.array([-1 + 5j, -1 - 5j, -10.0])
    zeros = [[np.array([-2.0]), np.array([])], [np.array([-3 + 1j, -3 - 1j]), np.array([-20.0])]]
    m = RationalModel(poles=poles, zeros=zeros, gains=np.array([[3.0, -1.0], [0.5, 40.0]]))
    w = np.logspace(-1, 2, 60)
    d = FrequencyResponseData(w, eval_model(m, 1j * w))
    model, _ = run_pipeline(d, EstimationOptions(den_order=3))
    assert model.p == 2 and model.m == 2
    assert rel_err(model, d) <= 1e-8


@pytest.mark.parametrize("norm", ["first", "sum_real", "monic"])
def test_normalizations_recover_exact_model(norm):
    m = RationalModel(poles=[-1 + 4j, -1 - 4j, -30.0], zeros=[-5.0], gains=[[100.0]])
    w = np.logspace(-1, 2.5, 60)
    d = FrequencyResponseData(w, eval_model(m, 1j * w))
    model, _ = run_pipeline(d, EstimationOptions(den_order=3, normalization=norm))
    assert rel_err(model, d) <= 1e-8


def test_zeroth_order_gain():
    d = FrequencyResponseData(np.logspace(0, 2, 10), np.full(10, -2.5 + 0j))
    model, _ = run_pipeline(d, EstimationOptions(den_order=0))
    assert model.order == 0
    assert model.gains[0, 0] == pytest.approx(-2.5)


def test_weights_change_the_fit():
    rng = np.random.default_rng(0)
    m = RationalModel(poles=[-1 + 4j, -1 - 4j], zeros=[], gains=[[16.0]])
    w = np.logspace(-1, 2, 80)
    h = eval_model(m, 1j * w)[:, 0, 0] * (1 + 0.2 * rng.normal(size=80))
    wt = np.where(w < 3, 1.0, 1e-3)
    plain, _ = run_pipeline(FrequencyResponseData(w, h), EstimationOptions(den_order=1))
    low, _ = run_pipeline(FrequencyResponseData(w, h, wt), EstimationOptions(den_order=1))
    band = w < 3
    e_plain = np.linalg.norm((eval_model(plain, 1j * w)[:, 0, 0] - h)[band])
    e_low = np.linalg.norm((eval_model(low, 1j * w)[:, 0, 0] - h)[band])
    assert e_low < e_plain


def test_greybox_constraints_are_exact():
    w = log_frequencies(1, 1e4, 300)
    d = sample_with_noise(fixed_model_4_2(), w, NoiseSpec(seed=1))
    res = estimate(d, EstimationOptions(den_order=5, num_order=5, constraints=greybox_constraints()))
    num, den = res.model.coefficients()
    assert num[0, 0, 3] == num[0, 0, 4] == num[0, 0, 5] == 0.0
    assert den[0] == 0.0 and den[5] == 1.0
    assert np.min(np.abs(res.model.poles)) < 1e-6 * np.max(np.abs(res.model.poles))


def test_bounds_are_respected():
    w = log_frequencies(1, 1e4, 300)
    d = sample_with_noise(fixed_model_4_2(), w, NoiseSpec(seed=0))
    cs = greybox_constraints().bound_den(4, 250.0, 300.0)
    res = estimate(d, EstimationOptions(den_order=5, num_order=5, constraints=cs))
    den = res.model.coefficients()[1]
    assert 250.0 - 1e-6 <= den[4] <= 300.0 + 1e-6


def test_report_tracks_best_of_all_stages():
    w = log_frequencies(1, 1e4, 300)
    d = sample_with_noise(fixed_model_4_2(), w, NoiseSpec(seed=2))
    res = estimate(d, EstimationOptions(den_order=5, num_order=5, constraints=greybox_constraints()))
    rep = res.report
    assert rep.best_cost == min(rep.all_costs())
    assert rep.best_stage in ("initial", "sk", "iv")
    assert len(rep.costs["sk"]) == rep.iterations["sk"]
    # returned model attains the reported cost
    assert nls_cost(res.model, d) == pytest.approx(rep.best_cost, rel=1e-6)


def test_converged_iv_is_a_fixed_point():
    m = RationalModel(poles=[-1 + 10j, -1 - 10j, -20 + 100j, -20 - 100j],
                      zeros=[-50.0, -5.0], gains=[[2e3]])
    d = sample_with_noise(m, np.logspace(0, 3, 200), NoiseSpec(seed=3))
    res = estimate(d, EstimationOptions(den_order=4))
    assert res.report.converged["iv"]
    last = [h for h in res.history if h.stage == "iv"][-1]
    again = iv_step(last, res.problem)
    assert np.linalg.norm(again.theta - last.theta) <= 1e-7 * np.linalg.norm(last.theta)


def test_no_iv_option():
    m = RationalModel(poles=[-1 + 4j, -1 - 4j], zeros=[], gains=[[16.0]])
    d = sample_with_noise(m, np.logspace(-1, 2, 50), NoiseSpec(seed=0))
    res = estimate(d, EstimationOptions(den_order=2, use_iv=False))
    assert res.report.iterations["iv"] == 0
    assert res.report.best_stage in ("initial", "sk")


def test_deterministic():
    d = sample_with_noise(fixed_model_4_2(), log_frequencies(1, 1e4, 100), NoiseSpec(seed=9))
    opts = EstimationOptions(den_order=5, num_order=5, constraints=greybox_constraints())
    a, _ = run_pipeline(d, opts)
    b, _ = run_pipeline(d, opts)
    np.testing.assert_array_equal(a.coefficients()[1], b.coefficients()[1])


def test_errors():
    d = FrequencyResponseData([1.0, 2.0, 3.0], [1, 2, 3])
    with pytest.raises(SolveFailure):
        estimate(d, EstimationOptions(den_order=6))
    d = FrequencyResponseData(np.logspace(0, 2, 30), np.ones(30))
    with pytest.raises(InfeasibleConstraints):
        estimate(d, EstimationOptions(den_order=2, constraints=ConstraintSet().fix_den(4, 1.0)))
    with pytest.raises(RankDeficient):
        estimate(d, EstimationOptions(den_order=2,
                                      constraints=ConstraintSet().fix_den(1, 1.0).fix_den(1, 2.0)))
    with pytest.raises(ValueError):
        EstimationOptions(den_order=-1)
    with pytest.raises(ValueError):
        EstimationOptions(den_order=2, normalization="bogus")


def test_condition_diagnostics():
    assert condition_diagnostics(np.ones((5, 1))) == pytest.approx(1.0)
    a = np.diag([1.0, 1e-6])
    assert condition_diagnostics(a) == pytest.approx(1e6)
    assert condition_diagnostics(a, column_scaling=True) == pytest.approx(1.0)
