##########################################################################################
#
# Script name: test_limits.py
#
# Description: Tests Poisson random measure sampling, extremal path construction, the
#              generalized inverse, and the closed-form limit laws.
#
##########################################################################################

import math

import numpy as np
import pytest

from decoupled_walks.limits import (
    boundary_past_horizon,
    build_extremal_path,
    figure_panel,
    generalized_inverse,
    law_for_regime,
    law_from_params,
    marginal_atom,
    marginal_cdf,
    marginal_cdf_left,
    marginal_quantile,
    marginal_sampling_plan,
    sample_limit_path,
    sample_marginal_value,
    sample_prm,
    truncation_level,
)
from decoupled_walks.models import (
    BudgetError,
    Censored,
    DomainError,
    InfiniteIntensity,
    MarginalLaw,
    PointMeasure,
    Regime,
    TailModel,
    WindowError,
)
from decoupled_walks.utils import make_rng
from decoupled_walks.verify import ks_distance


def _points(times: list[float], marks: list[float], window: tuple[float, float]) -> PointMeasure:
    return PointMeasure(
        tag='P2',
        params={'alpha': 1.5},
        window=window,
        mark_min=0.0,
        intensity=float(len(times)),
        times=np.array(times, dtype=float),
        marks=np.array(marks, dtype=float),
    )


def test_marginal_cdf_examples() -> None:
    assert marginal_cdf(MarginalLaw('X1', 1.0, alpha=1.5), 1.0) == pytest.approx(math.exp(-0.5), rel=1e-12)
    x2 = MarginalLaw('X2', 0.0, alpha=2.5, mu=1.0)
    assert marginal_cdf(x2, 0.0) == 0.0
    assert marginal_cdf(x2, 1e-6) == pytest.approx(0.0, abs=1e-12)
    assert marginal_cdf(MarginalLaw('X3', 0.0, mu=1.0), 0.0) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_marginal_cdf_handles_infinite_arguments() -> None:
    law = MarginalLaw('X3_inv', 1.0, mu=2.0)
    values = marginal_cdf(law, np.array([-np.inf, np.inf]))
    np.testing.assert_array_equal(values, [0.0, 1.0])


def test_boundary_laws_have_atoms() -> None:
    forward = MarginalLaw('X4', 0.0, mu=1.0, A=2.0)
    location, mass = marginal_atom(forward)
    assert location == pytest.approx(1.0)
    assert mass == pytest.approx(math.exp(-0.5))
    assert marginal_cdf(forward, 1.0 - 1e-9) == 0.0
    assert marginal_cdf(forward, 1.0) == pytest.approx(mass)
    assert marginal_cdf_left(forward, 1.0) == pytest.approx(0.0, abs=1e-12)

    inverse = MarginalLaw('X4_inv', 0.0, mu=1.0, A=2.0)
    edge, _ = marginal_atom(inverse)
    assert edge == pytest.approx(-1.0)
    assert marginal_cdf(inverse, -1.0) == 1.0
    assert marginal_cdf(inverse, -1.0 - 1e-9) == pytest.approx(1.0 - math.exp(-0.5), rel=1e-6)
    assert marginal_cdf_left(inverse, -1.0) == pytest.approx(1.0 - math.exp(-0.5), rel=1e-12)
    assert marginal_atom(MarginalLaw('X3', 0.0, mu=1.0)) is None


@pytest.mark.parametrize(
    'law',
    [
        MarginalLaw('X1', 2.0, alpha=1.5),
        MarginalLaw('X2', 1.0, alpha=2.5, mu=1.5),
        MarginalLaw('X3', 0.5, mu=2.0),
        MarginalLaw('X4', 1.0, mu=1.0, A=2.0),
        MarginalLaw('X1_inv', 2.0, alpha=1.0),
        MarginalLaw('X2_inv', 1.0, alpha=2.5, mu=1.5),
        MarginalLaw('X3_inv', 0.5, mu=2.0),
        MarginalLaw('X4_inv', 1.0, mu=1.0, A=2.0),
    ],
)
def test_marginal_quantile_inverts_cdf(law: MarginalLaw) -> None:
    probs = np.array([0.2, 0.5, 0.9])
    quantiles = marginal_quantile(law, probs)
    assert np.all(np.diff(quantiles) >= 0)
    # At an atom the quantile lands on the jump, so the cdf there reaches at least p.
    assert np.all(marginal_cdf(law, quantiles) >= probs - 1e-12)
    assert np.all(marginal_cdf_left(law, quantiles) <= probs + 1e-12)


def test_marginal_quantile_on_the_atom() -> None:
    law = MarginalLaw('X4', 0.0, mu=1.0, A=2.0)
    assert marginal_quantile(law, 0.3) == pytest.approx(1.0)
    assert marginal_quantile(law, 0.8) > 1.0
    with pytest.raises(DomainError):
        marginal_quantile(law, 1.0)


def test_marginal_law_validation() -> None:
    with pytest.raises(DomainError):
        MarginalLaw('X2', 0.0, alpha=1.0, mu=1.0)
    with pytest.raises(DomainError):
        MarginalLaw('X1_inv', 0.0, alpha=1.0)
    with pytest.raises(DomainError):
        MarginalLaw('X5', 0.0)


def test_sample_prm_intensities() -> None:
    p1 = sample_prm('P1', {'alpha': 1.5}, (0.0, 2.0), 1.0, make_rng(1))
    assert p1.intensity == pytest.approx(2.0)
    restricted = sample_prm('P2_3', {'A': 2.0}, (0.0, 1.0), None, make_rng(1))
    assert restricted.intensity == pytest.approx(1.0)
    assert restricted.mark_min == pytest.approx(1.0)
    p3 = sample_prm('P3', {'mu': 1.0}, (0.0, 1.0), 0.0, make_rng(1))
    assert p3.intensity == pytest.approx(math.e - 1.0)


def test_sample_prm_atoms_live_in_the_window() -> None:
    points = sample_prm('P1', {'alpha': 1.5}, (1.0, 4.0), 0.5, make_rng(2))
    assert points.count > 0
    assert np.all((points.times >= 1.0) & (points.times <= 4.0))
    assert np.all(np.diff(points.times) >= 0)
    assert np.all(points.marks >= 0.5)


def test_sample_prm_mean_count() -> None:
    counts = np.array([sample_prm('P1', {'alpha': 1.5}, (0.0, 2.0), 1.0, make_rng(3, i)).count for i in range(2000)])
    assert abs(counts.mean() - 2.0) < 4.0 * math.sqrt(2.0 / counts.size)


def test_sample_prm_counts_in_disjoint_boxes_are_independent_poisson() -> None:
    # Leb x nu_1.5 above 1 on [0, 4]: box A = [0, 2) x (1, 2], box B = [2, 4] x (2, inf).
    first, second = [], []
    for i in range(4000):
        points = sample_prm('P2', {'alpha': 1.5}, (0.0, 4.0), 1.0, make_rng(12, i))
        early = points.times < 2.0
        first.append(int(np.count_nonzero(early & (points.marks <= 2.0))))
        second.append(int(np.count_nonzero(~early & (points.marks > 2.0))))
    first, second = np.array(first, dtype=float), np.array(second, dtype=float)
    mean_first = 2.0 * (1.0 - 2.0 ** -1.5)
    mean_second = 2.0 * 2.0 ** -1.5
    assert abs(first.mean() - mean_first) < 5.0 * math.sqrt(mean_first / first.size)
    assert abs(second.mean() - mean_second) < 5.0 * math.sqrt(mean_second / second.size)
    assert first.var() == pytest.approx(mean_first, rel=0.15)
    assert abs(np.corrcoef(first, second)[0, 1]) < 5.0 / math.sqrt(first.size)


def test_sample_prm_empty_window() -> None:
    for tag, params in (('P1', {'alpha': 1.5}), ('P2', {'alpha': 2.5}), ('P3', {'mu': 1.0}), ('P2_3', {'A': 2.0})):
        points = sample_prm(tag, params, (1.0, 1.0), 0.5, make_rng(4))
        assert points.count == 0


def test_sample_prm_position_floor_keeps_only_high_atoms() -> None:
    points = sample_prm('P2', {'alpha': 2.0}, (0.0, 2.0), None, make_rng(5), position_floor=(1.0, 5.0))
    assert points.intensity == pytest.approx(1.0 / 3.0 - 1.0 / 5.0)
    assert np.all(points.positions(1.0) > 5.0)


def test_sample_prm_errors() -> None:
    with pytest.raises(WindowError):
        sample_prm('P1', {'alpha': 1.5}, (-1.0, 1.0), 1.0, make_rng(6))
    with pytest.raises(InfiniteIntensity):
        sample_prm('P1', {'alpha': 1.5}, (0.0, 1.0), None, make_rng(6))
    with pytest.raises(InfiniteIntensity):
        sample_prm('P2', {'alpha': 1.5}, (0.0, 1.0), None, make_rng(6))
    with pytest.raises(ValueError):
        sample_prm('P9', {}, (0.0, 1.0), 1.0, make_rng(6))
    with pytest.raises(ValueError):
        sample_prm('P3', {'mu': 1.0}, (0.0, 1.0), 0.0, make_rng(6), position_floor=(1.0, 2.0))
    with pytest.raises(WindowError):
        sample_prm('P3', {'mu': 1.0}, (2.0, 1.0), 0.0, make_rng(6))


def test_build_extremal_path_without_atoms_is_constant() -> None:
    path = build_extremal_path(_points([], [], (0.0, 2.0)), 0.0, 0.7)
    assert path.value(0.0) == 0.7
    assert path.value(2.0) == 0.7
    assert path.jump_times.size == 0


def test_build_extremal_path_keeps_records_only() -> None:
    path = build_extremal_path(_points([1.0, 2.0], [5.0, 3.0], (0.0, 3.0)), 0.0, -math.inf)
    np.testing.assert_array_equal(path.jump_times, [1.0])
    np.testing.assert_array_equal(path.levels, [5.0])
    assert path.value(0.5) == -math.inf
    assert path.value(1.0) == 5.0
    assert path.value(2.5) == 5.0


def test_build_extremal_path_ties_keep_the_highest_atom() -> None:
    path = build_extremal_path(_points([1.0, 1.0], [2.0, 4.0], (0.0, 2.0)), 0.0, 0.0)
    np.testing.assert_array_equal(path.levels, [4.0])


def test_build_extremal_path_with_drift_and_floor() -> None:
    path = build_extremal_path(_points([-1.0], [3.0], (-1.0, 3.0)), 1.0, -math.inf, floor=(1.0, 1.0))
    for t in (-1.0, 0.0, 0.5, 1.0, 2.0, 3.0):
        assert path.value(t) == pytest.approx(max(t + 1.0, 2.0))


def test_generalized_inverse_of_constant_path() -> None:
    path = build_extremal_path(_points([], [], (0.0, 5.0)), 0.0, 2.0)
    assert generalized_inverse(path, [1.0, 2.0, 3.0]) == [0.0, Censored('right'), Censored('right')]
    summarized = build_extremal_path(_points([], [], (0.0, 5.0)), 0.0, 2.0, has_past=True)
    assert generalized_inverse(summarized, 1.0) == [Censored('left')]


def test_generalized_inverse_reads_jumps_and_floor() -> None:
    path = build_extremal_path(_points([1.0, 2.0], [5.0, 3.0], (0.0, 4.0)), 0.0, -math.inf)
    assert generalized_inverse(path, [-1.0, 3.0, 5.0]) == [1.0, 1.0, Censored('right')]

    floored = build_extremal_path(_points([], [], (0.0, 3.0)), 1.0, -math.inf, floor=(1.0, 1.0))
    assert generalized_inverse(floored, [0.5, 2.5]) == [0.0, pytest.approx(1.5)]
    with pytest.raises(ValueError):
        generalized_inverse(path, [3.0, 1.0])


def test_generalized_inverse_is_a_galois_inverse() -> None:
    points = sample_prm('P2', {'alpha': 2.5}, (0.0, 3.0), 0.2, make_rng(7))
    path = build_extremal_path(points, 1.0, 0.0)
    assert path.value(3.0) > 1.0
    levels = np.linspace(0.01, path.value(3.0) - 0.01, 25)
    grid = np.linspace(0.0, 3.0, 301)
    for level, crossing in zip(levels, generalized_inverse(path, levels)):
        assert not isinstance(crossing, Censored)
        values = path.value(grid)
        assert np.all(values[grid > crossing] > level)
        assert np.all(values[grid < crossing] <= level)


def test_truncation_levels() -> None:
    log_inv = 1.0
    eps = math.exp(-log_inv)
    assert truncation_level('X1', {'alpha': 2.0}, 1.0, eps) == pytest.approx(math.sqrt(0.5))
    assert truncation_level('X2', {'alpha': 2.0, 'mu': 1.0}, 0.0, eps) == pytest.approx(1.0)
    assert truncation_level('X3', {'mu': 1.0}, 2.0, eps) == pytest.approx(2.0)
    assert truncation_level('X4', {'mu': 1.0, 'A': 2.0}, 0.0, eps) is None
    with pytest.raises(BudgetError):
        truncation_level('X1', {'alpha': 2.0}, 1.0, 0.0)


def test_boundary_past_horizon() -> None:
    assert boundary_past_horizon(1.0, 2.0, 0.125) == pytest.approx(1.0)
    assert boundary_past_horizon(1.0, 2.0, 0.9) == 0.0


def test_sample_limit_path_errors() -> None:
    with pytest.raises(WindowError):
        sample_limit_path('X1', {'alpha': 1.5}, (0.0, 1.0), 1e-4, make_rng(8))
    with pytest.raises(ValueError):
        sample_limit_path('X3', {'mu': 1.0}, (0.0, 1.0), 1e-4, make_rng(8), past_horizon=True)
    with pytest.raises(BudgetError):
        sample_limit_path('X3', {'mu': 1.0}, (0.0, 1.0), 1.0, make_rng(8))
    with pytest.raises(ValueError):
        sample_limit_path('X9', {}, (0.0, 1.0), 1e-4, make_rng(8))


def test_sample_limit_path_is_deterministic_and_nondecreasing() -> None:
    first = sample_limit_path('X1', {'alpha': 1.5}, (0.5, 3.0), 1e-4, make_rng(9))
    second = sample_limit_path('X1', {'alpha': 1.5}, (0.5, 3.0), 1e-4, make_rng(9))
    np.testing.assert_array_equal(first.jump_times, second.jump_times)
    np.testing.assert_array_equal(first.levels, second.levels)
    values = first.value(np.linspace(0.5, 3.0, 200))
    assert np.all(np.diff(values) >= 0)


def test_boundary_path_stays_on_or_above_its_floor() -> None:
    grid = np.linspace(0.0, 2.0, 100)
    for past_horizon in (False, True):
        path = sample_limit_path('X4', {'mu': 1.0, 'A': 2.0}, (0.0, 2.0), 1e-3, make_rng(10), past_horizon=past_horizon)
        assert np.all(path.value(grid) >= grid + 1.0 - 1e-12)


def test_law_for_regime() -> None:
    law = law_for_regime(Regime.R1_HEAVY_NO_CENTER, TailModel.pareto(1.5), 1.0, 'tau')
    assert law.kind == 'X1_inv'
    assert law.params() == {'t': 1.0, 'alpha': 1.5}
    boundary = law_for_regime('R4_Boundary', TailModel.pareto_log(A=2.0), 0.5)
    assert boundary.kind == 'X4'
    assert boundary.A == 2.0


def test_law_from_params_reads_only_needed_keys() -> None:
    law = law_from_params('X2_inv', 3.0, {'alpha': 1.5, 'mu': 2.0, 'A': 9.0})
    assert law.kind == 'X2_inv'
    assert law.params() == {'t': 3.0, 'alpha': 1.5, 'mu': 2.0}
    with pytest.raises(DomainError):
        law_from_params('X4', 1.0, {'mu': 1.0})


def test_marginal_sampling_plan() -> None:
    assert marginal_sampling_plan(MarginalLaw('X1', 2.0, alpha=1.5)) == ('X1', (1.0, 2.0), None)
    assert marginal_sampling_plan(MarginalLaw('X3', 2.0, mu=1.0)) == ('X3', (1.0, 2.0), None)
    process, window, level = marginal_sampling_plan(MarginalLaw('X3_inv', 2.0, mu=1.0))
    assert process == 'X3'
    assert window[0] < window[1]
    assert level == 2.0


def test_sample_marginal_value_x1_at_zero() -> None:
    assert sample_marginal_value(MarginalLaw('X1', 0.0, alpha=1.5), make_rng(11)) == 0.0


def test_sampled_x3_marginal_matches_closed_form() -> None:
    law = MarginalLaw('X3', 0.0, mu=1.0)
    samples = np.array([sample_marginal_value(law, make_rng(12, i)) for i in range(2000)])
    assert ks_distance(samples, law) < math.sqrt(math.log(2.0 / 1e-4) / (2.0 * samples.size))


def test_figure_panel_for_boundary_process() -> None:
    panel = figure_panel('X4', {'mu': 1.0, 'A': 2.0}, (0.0, 2.0), make_rng(13), grid_points=50)
    assert panel.grid.shape == (50,)
    np.testing.assert_allclose(panel.floor_values, panel.grid + 1.0)
    assert np.all(panel.values >= panel.floor_values - 1e-12)
    assert np.all(np.diff(panel.values) >= 0)


def test_figure_panel_empty_window() -> None:
    panel = figure_panel('X3', {'mu': 1.0}, (1.0, 1.0), make_rng(14))
    assert panel.grid.size == 0
    assert panel.values.size == 0
    assert panel.floor_values is None
    with pytest.raises(ValueError):
        figure_panel('X3', {'mu': 1.0}, (0.0, 1.0), make_rng(14), grid_points=1)
