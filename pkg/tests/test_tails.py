##########################################################################################
#
# Script name: test_tails.py
#
# Description: Tests increment tails, inverse-tail sampling, normalizing sequences, the
#              standard normal helpers, and regime classification.
#
##########################################################################################

import math

import numpy as np
import pytest

from decoupled_walks.models import DomainError, InvalidQuantile, NoRoot, Regime, TailModel, TailModelError
from decoupled_walks.tails import (
    a_m_regime3,
    a_regime4,
    classify_regime,
    increments_from_uniforms,
    m_regime3_expansion,
    normal_cdf,
    normal_quantile,
    normal_quantile_upper,
    normal_sf,
    quantile_expansion,
    sample_increment,
    solve_a_regime1,
    solve_a_regime2,
    tail_prob,
)
from decoupled_walks.utils import make_rng


def test_tail_prob_closed_forms() -> None:
    pareto = TailModel.pareto(1.5)
    assert tail_prob(pareto, 1.0) == 1.0
    assert tail_prob(pareto, 0.5) == 1.0
    assert tail_prob(pareto, 4.0) == pytest.approx(0.125, rel=1e-12)
    assert tail_prob(TailModel.exponential(1.0), 0.0) == 1.0
    assert tail_prob(TailModel.gamma(1.0, 2.0), 1.5) == pytest.approx(math.exp(-3.0), rel=1e-12)


def test_tail_prob_rejects_negative_argument() -> None:
    with pytest.raises(DomainError):
        tail_prob(TailModel.exponential(), -1.0)


def test_pareto_log_tail_has_atom_at_lower_endpoint() -> None:
    model = TailModel.pareto_log(A=2.0)
    assert tail_prob(model, math.e) == pytest.approx(2.0 * math.e ** -3, rel=1e-12)
    assert model.atom_mass == pytest.approx(1.0 - 2.0 * math.e ** -3, rel=1e-12)
    assert model.tail_index == 3.0


def test_pareto_log_rejects_tail_above_one() -> None:
    with pytest.raises(TailModelError):
        TailModel.pareto_log(A=100.0)


def test_inverse_tail_transform() -> None:
    pareto = TailModel.pareto(1.5)
    assert increments_from_uniforms(pareto, np.array([0.125]))[0] == pytest.approx(4.0, rel=1e-12)

    exponential = TailModel.exponential(1.0)
    near_one = increments_from_uniforms(exponential, np.array([1.0 - 1e-12]))[0]
    assert 0.0 < near_one < 1e-11

    pareto_log = TailModel.pareto_log(A=2.0)
    draws = increments_from_uniforms(pareto_log, np.array([0.5, 0.01, 1e-6]))
    assert draws[0] == math.e
    assert tail_prob(pareto_log, draws[1]) == pytest.approx(0.01, rel=1e-9)
    assert tail_prob(pareto_log, draws[2]) == pytest.approx(1e-6, rel=1e-9)


def test_sample_increment_is_deterministic_per_stream() -> None:
    model = TailModel.lognormal(0.0, 1.0)
    first = sample_increment(model, make_rng(7, 1, 2))
    second = sample_increment(model, make_rng(7, 1, 2))
    other = sample_increment(model, make_rng(7, 1, 3))
    assert first == second
    assert first != other


def test_solve_a_regime1_matches_pure_pareto_inversion() -> None:
    assert solve_a_regime1(TailModel.pareto(1.5), 8.0) == pytest.approx(16.0, rel=1e-9)
    assert solve_a_regime1(TailModel.pareto(2.0), 10.0) == pytest.approx(10.0, rel=1e-9)
    assert solve_a_regime1(TailModel.pareto(1.0), 1.0) == pytest.approx(1.0, rel=1e-9)


def test_solve_a_regime1_rejects_bad_inputs() -> None:
    with pytest.raises(NoRoot):
        solve_a_regime1(TailModel.pareto(1.5), 0.5)
    with pytest.raises(TailModelError):
        solve_a_regime1(TailModel.pareto(2.5), 10.0)
    with pytest.raises(DomainError):
        solve_a_regime1(TailModel.pareto(1.5), 0.0)


def test_solve_a_regime2_matches_pure_pareto_inversion() -> None:
    assert solve_a_regime2(TailModel.pareto(2.5), 8.0) == pytest.approx(4.0, rel=1e-9)
    assert solve_a_regime2(TailModel.pareto(3.0), 16.0) == pytest.approx(4.0, rel=1e-9)
    with pytest.raises(NoRoot):
        solve_a_regime2(TailModel.pareto(2.5), 0.5)


def test_normalizer_roots_leave_tiny_residuals() -> None:
    for alpha in (0.8, 1.5, 2.0):
        model = TailModel.pareto(alpha)
        for v in (2.0, 10.0, 1e3, 1e6):
            a = solve_a_regime1(model, v)
            assert abs(v * v * tail_prob(model, a) - 1.0) <= 1e-8
    for alpha in (2.5, 3.0):
        model = TailModel.pareto(alpha)
        for v in (2.0, 10.0, 1e3, 1e6):
            a = solve_a_regime2(model, v)
            assert abs(v * a * tail_prob(model, a) - 1.0) <= 1e-8


def test_regime1_scale_is_monotone_and_regularly_varying() -> None:
    model = TailModel.pareto(1.5)
    grid = [1.5, 3.0, 10.0, 50.0, 400.0, 1e4, 1e6]
    scales = [solve_a_regime1(model, v) for v in grid]
    assert all(left <= right for left, right in zip(scales, scales[1:]))
    for v in (1e2, 1e4, 1e6):
        ratio = solve_a_regime1(model, 2.0 * v) / solve_a_regime1(model, v)
        assert ratio == pytest.approx(2.0 ** (2.0 / 1.5), rel=1e-8)


def test_a_m_regime3_plugged_in() -> None:
    a, m = a_m_regime3(1.0, 1.0, math.e)
    assert a == pytest.approx(math.exp(0.5), rel=1e-12)
    expected = math.e + math.exp(0.5) * normal_quantile(1.0 - math.exp(-0.5))
    assert m == pytest.approx(expected, rel=1e-12)
    assert m < math.e


def test_a_m_regime3_scale_is_linear_in_sigma() -> None:
    a1, _ = a_m_regime3(1.0, 1.0, 50.0)
    a2, _ = a_m_regime3(1.0, 2.0, 50.0)
    assert a2 == pytest.approx(2.0 * a1, rel=1e-12)


def test_a_m_regime3_variants_agree_for_unit_sigma() -> None:
    assert a_m_regime3(2.0, 1.0, 80.0, drift_scaled=False) == pytest.approx(a_m_regime3(2.0, 1.0, 80.0))
    _, unscaled = a_m_regime3(2.0, 3.0, 80.0, drift_scaled=False)
    a, _ = a_m_regime3(2.0, 3.0, 80.0)
    assert unscaled == pytest.approx(2.0 * 80.0 + 3.0 * math.sqrt(80.0) * normal_quantile(1.0 - 1.0 / a))


def test_a_m_regime3_guards_small_scale() -> None:
    with pytest.raises(InvalidQuantile):
        a_m_regime3(1.0, 0.5, math.e)
    with pytest.raises(DomainError):
        a_m_regime3(1.0, 1.0, 1.0)


def test_m_regime3_expansion_tracks_exact_centering() -> None:
    v = 1e6
    _, exact = a_m_regime3(1.0, 1.0, v)
    assert abs(m_regime3_expansion(1.0, 1.0, v) - exact) / exact < 1e-3


def test_a_regime4() -> None:
    assert a_regime4(2.0, math.e) == pytest.approx(math.exp(0.5), rel=1e-12)
    assert a_regime4(8.0, 30.0) == pytest.approx(2.0 * a_regime4(2.0, 30.0), rel=1e-12)
    assert 0.0 < a_regime4(2.0, 1.0 + 1e-9) < 1e-4
    with pytest.raises(DomainError):
        a_regime4(2.0, 1.0)


def test_normal_helpers() -> None:
    assert normal_cdf(0.0) == 0.5
    assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
    assert normal_quantile(normal_cdf(1.7)) == pytest.approx(1.7, abs=1e-9)
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)
    with pytest.raises(InvalidQuantile):
        normal_quantile(1.0)
    with pytest.raises(InvalidQuantile):
        normal_quantile(0.0)


def test_normal_quantile_upper_keeps_precision_deep_in_the_tail() -> None:
    x = normal_quantile_upper(1e-20)
    assert 9.0 < x < 9.5
    assert normal_sf(x) == pytest.approx(1e-20, rel=1e-8)


def test_normal_quantile_inverts_cdf_across_both_tails() -> None:
    grid = np.linspace(-8.0, 8.0, 161)
    for x in grid:
        assert abs(normal_quantile(normal_cdf(float(x))) - x) <= 1e-8
    assert np.max(np.abs(normal_quantile(normal_cdf(grid)) - grid)) <= 1e-8


def test_normal_quantile_without_complement_uses_one_minus_p() -> None:
    assert normal_quantile(1.0 - 1e-8) == pytest.approx(normal_quantile_upper(1e-8), rel=1e-7)
    assert normal_quantile(float(normal_cdf(2.5))) == pytest.approx(2.5, abs=1e-8)


def test_quantile_expansion_accuracy() -> None:
    exact = normal_quantile_upper(1e-8)
    assert abs(quantile_expansion(1e-8) - exact) / exact < 0.01
    exact = normal_quantile_upper(1e-4)
    assert abs(quantile_expansion(1e-4) - exact) / exact < 0.05
    assert quantile_expansion(1e-10) > quantile_expansion(1e-6)
    with pytest.raises(DomainError):
        quantile_expansion(0.5)


def test_quantile_expansion_error_shrinks_deeper_in_the_tail() -> None:
    errors = []
    for k in range(6, 13):
        h = 10.0 ** -k
        exact = normal_quantile_upper(h)
        errors.append(abs(quantile_expansion(h) - exact) / exact)
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))
    assert errors[-1] < 0.01


def test_pure_pareto_with_alpha_three_is_gaussian() -> None:
    # Constant slowly varying part: the third moment is only log-divergent, which the
    # Gaussian normalization absorbs.
    assert classify_regime(TailModel.pareto(3.0)) == Regime.R3_GAUSSIAN
    assert classify_regime(TailModel.pareto(2.999)) == Regime.R2_INTERMEDIATE
    assert classify_regime(TailModel.pareto(3.001)) == Regime.R3_GAUSSIAN


def test_classify_regime() -> None:
    assert classify_regime(TailModel.pareto(1.5)) == Regime.R1_HEAVY_NO_CENTER
    assert classify_regime(TailModel.pareto(2.0)) == Regime.R1_HEAVY_CENTERED
    assert classify_regime(TailModel.pareto(2.5)) == Regime.R2_INTERMEDIATE
    assert classify_regime(TailModel.pareto(3.0)) == Regime.R3_GAUSSIAN
    assert classify_regime(TailModel.pareto(4.0)) == Regime.R3_GAUSSIAN
    assert classify_regime(TailModel.gamma(2.0)) == Regime.R3_GAUSSIAN
    assert classify_regime(TailModel.pareto_log(A=2.0)) == Regime.R4_BOUNDARY


def test_tail_model_from_dict() -> None:
    model = TailModel.from_dict({'family': 'pareto', 'alpha': 1.5, 'x_min': 2})
    assert model == TailModel.pareto(1.5, 2.0)
    assert TailModel.from_dict(model.to_dict()) == model
    with pytest.raises(TailModelError):
        TailModel.from_dict({'family': 'pareto', 'alpha': 1.5, 'rate': 1})
    with pytest.raises(TailModelError):
        TailModel.from_dict({'family': 'cauchy'})
