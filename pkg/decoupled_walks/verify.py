##########################################################################################
#
# Script name: verify.py
#
# Description: Statistical checks tying prelimit Monte Carlo and the limit samplers to
#              the closed-form laws, with pass/fail reports.
#
##########################################################################################

import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np
from scipy import stats

from .config import (
    CONFIDENCE,
    DEFAULT_EPS,
    KOLMOGOROV_SD,
    LARGE_DEVIATION_RTOL,
    MAX_CAP_FRACTION,
    MAX_DRAWS_PER_BLOCK,
    PRELIMIT_FINAL_KS,
    PRELIMIT_SE_SLACK,
)
from .limits import (
    law_for_regime,
    law_from_params,
    marginal_atom,
    marginal_cdf,
    marginal_cdf_left,
    sample_marginal_value,
)
from .models import (
    Capped,
    DomainError,
    IndexUnderflow,
    MarginalLaw,
    Regime,
    TailModel,
    TailModelError,
    VerificationReport,
)
from .tails import sample_increments, solve_a_regime1
from .utils import EnsembleResult, make_rng, resolve_threads, run_ensemble, stream_tag
from .walks import (
    coupled_functionals,
    renewal_function,
    sample_decoupled_direct,
    sample_decoupled_fast,
    statistic_ensemble,
)


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(__name__)

VERDICT_PASS = 'pass'
VERDICT_FAIL = 'fail'
VERDICT_ABORTED = 'aborted'


# ****************************************************************************************
# Distances and bounds
# ****************************************************************************************


def ks_distance(
    samples: Sequence[float] | np.ndarray,
    cdf: MarginalLaw | Callable[[np.ndarray], np.ndarray],
    cdf_left: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    '''
    sup_y |F_N(y) - F(y)| between the empirical CDF of samples and cdf.

    cdf_left(y) = P{X < y} makes the distance exact for laws with atoms; a MarginalLaw
    supplies both. Infinite samples are allowed and sit at the ends of the order.
    '''
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size < 1:
        raise ValueError('ks_distance needs at least one sample')
    if np.any(np.isnan(values)):
        raise ValueError('ks_distance does not accept NaN samples')
    if isinstance(cdf, MarginalLaw):
        upper_raw = marginal_cdf(cdf, values)
        lower_raw = marginal_cdf_left(cdf, values) if cdf_left is None else cdf_left(values)
    else:
        upper_raw = cdf(values)
        lower_raw = upper_raw if cdf_left is None else cdf_left(values)

    def _pinned(raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        return np.where(np.isposinf(values), 1.0, np.where(np.isneginf(values), 0.0, raw))

    upper = _pinned(upper_raw)
    lower = _pinned(lower_raw)
    n = values.size
    ranks = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(ranks / n - upper)
    d_minus = np.max(lower - (ranks - 1.0) / n)
    return float(max(d_plus, d_minus, 0.0))


def dkw_bound(n: int, confidence: float = CONFIDENCE) -> float:
    '''
    Half-width of the DKW band: sqrt(ln(2 / (1 - confidence)) / (2n)).
    '''
    if n < 1:
        raise ValueError('dkw_bound needs n >= 1')
    if not 0 < confidence < 1:
        raise DomainError(f'confidence must lie in (0, 1), got {confidence}')
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def ks_two_sample(first: np.ndarray, second: np.ndarray) -> float:
    return float(stats.ks_2samp(np.asarray(first, dtype=float), np.asarray(second, dtype=float)).statistic)


def two_sample_critical(n: int, m: int, confidence: float = CONFIDENCE) -> float:
    '''
    Asymptotic critical value of the two-sample KS statistic at the given confidence.
    '''
    if n < 1 or m < 1:
        raise ValueError('two_sample_critical needs positive sample sizes')
    if not 0 < confidence < 1:
        raise DomainError(f'confidence must lie in (0, 1), got {confidence}')
    coefficient = math.sqrt(-math.log((1.0 - confidence) / 2.0) / 2.0)
    return coefficient * math.sqrt((n + m) / (n * m))


# ****************************************************************************************
# Reports
# ****************************************************************************************


def _finish(
    test: str,
    params: dict[str, Any],
    n: int,
    seed: int,
    started: float,
    passed: bool,
    ks: float | None = None,
    bound: float | None = None,
    tolerance: float | None = None,
    cap_fraction: float = 0.0,
    extras: dict[str, Any] | None = None,
) -> VerificationReport:
    if cap_fraction > MAX_CAP_FRACTION:
        verdict = VERDICT_ABORTED
    else:
        verdict = VERDICT_PASS if passed else VERDICT_FAIL
    report = VerificationReport(
        test=test,
        params=params,
        n=n,
        ks=ks,
        bound=bound,
        tolerance=tolerance,
        verdict=verdict,
        seed=seed,
        cap_fraction=cap_fraction,
        runtime_ms=(time.perf_counter() - started) * 1000.0,
        extras=extras or {},
    )
    if verdict == VERDICT_PASS:
        log.info('%s: %s (ks=%s, tolerance=%s)', test, verdict, ks, tolerance)
    else:
        log.warning('%s: %s (ks=%s, tolerance=%s, cap_fraction=%g)', test, verdict, ks, tolerance, cap_fraction)
    return report


def _limit_ensemble(law: MarginalLaw, n: int, seed: int, eps: float, threads: int | None) -> EnsembleResult:
    name = f'limit|{law.kind}|{sorted(law.params().items())!r}|{eps!r}'
    return run_ensemble(
        lambda rng, _: sample_marginal_value(law, rng, eps),
        n=n,
        seed=seed,
        name=name,
        threads=threads,
    )


# ****************************************************************************************
# Limit laws
# ****************************************************************************************


def verify_limit_marginal(
    process: str,
    params: dict[str, float],
    t: float,
    n: int,
    seed: int,
    eps: float = DEFAULT_EPS,
    threads: int | None = None,
    confidence: float = CONFIDENCE,
) -> VerificationReport:
    '''
    KS distance between n path-sampled values of X(t) (or X_inv(t)) and the closed-form
    marginal. Passes when the distance is within the DKW bound plus the truncation budget.
    '''
    started = time.perf_counter()
    law = law_from_params(process, t, params)
    log.info('Sampling %d value(s) of %s at t=%g', n, law.kind, t)
    ensemble = _limit_ensemble(law, n, seed, eps, threads)
    ks = ks_distance(ensemble.ordered_values(), law)
    bound = dkw_bound(n, confidence)
    tolerance = bound + eps
    return _finish(
        'limit_marginal',
        {'process': law.kind, **law.params(), 'eps': eps},
        n,
        seed,
        started,
        ks <= tolerance,
        ks=ks,
        bound=bound,
        tolerance=tolerance,
        cap_fraction=ensemble.lost_fraction,
        extras={'censored_left': ensemble.censored_left, 'censored_right': ensemble.censored_right},
    )


def verify_tau_square_exponential(
    alpha: float,
    t: float,
    n: int,
    seed: int,
    eps: float = DEFAULT_EPS,
    threads: int | None = None,
    confidence: float = CONFIDENCE,
) -> VerificationReport:
    '''
    (X1_inv(t))^2 against the exponential law with rate t^-alpha / 2.
    '''
    started = time.perf_counter()
    law = MarginalLaw(kind='X1_inv', t=float(t), alpha=float(alpha))
    ensemble = _limit_ensemble(law, n, seed, eps, threads)
    ordered = ensemble.ordered_values()
    squares = np.where(np.isneginf(ordered), -np.inf, np.square(ordered))
    rate = t ** -alpha / 2.0

    def _exponential_cdf(x: np.ndarray) -> np.ndarray:
        with np.errstate(over='ignore', invalid='ignore'):
            return np.where(x > 0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0)

    ks = ks_distance(squares, _exponential_cdf)
    bound = dkw_bound(n, confidence)
    tolerance = bound + eps
    return _finish(
        'tau_square_exponential',
        {'alpha': alpha, 't': t, 'eps': eps},
        n,
        seed,
        started,
        ks <= tolerance,
        ks=ks,
        bound=bound,
        tolerance=tolerance,
        cap_fraction=ensemble.lost_fraction,
        extras={'rate': rate, 'mean': 1.0 / rate},
    )


def verify_atom_mass(
    A: float,
    mu: float,
    t: float,
    n: int,
    seed: int,
    eps: float = DEFAULT_EPS,
    threads: int | None = None,
) -> VerificationReport:
    '''
    Fraction of X4(t) samples sitting on the floor mu t + (2/A)^(1/2) against exp(-A / (4 mu)).
    '''
    started = time.perf_counter()
    law = MarginalLaw(kind='X4', t=float(t), mu=float(mu), A=float(A))
    location, mass = marginal_atom(law)
    ensemble = _limit_ensemble(law, n, seed, eps, threads)
    hits = int(np.count_nonzero(np.isclose(ensemble.finite_values(), location, rtol=1e-12, atol=1e-12)))
    estimate = hits / n
    se = math.sqrt(mass * (1.0 - mass) / n)
    tolerance = 3.0 * se
    return _finish(
        'atom_mass',
        {'A': A, 'mu': mu, 't': t, 'eps': eps},
        n,
        seed,
        started,
        abs(estimate - mass) <= tolerance,
        bound=se,
        tolerance=tolerance,
        cap_fraction=ensemble.lost_fraction,
        extras={'estimate': estimate, 'target': mass, 'hits': hits, 'location': location},
    )


# ****************************************************************************************
# Prelimit checks
# ****************************************************************************************


def verify_prelimit_convergence(
    model: TailModel,
    regime: Regime | str,
    t: float,
    v_grid: Sequence[float],
    n: int,
    seed: int,
    n_cap: int | None = None,
    statistic: str = 'max',
    threads: int | None = None,
    method: str = 'auto',
    confidence: float = CONFIDENCE,
) -> VerificationReport:
    '''
    KS sequence of normalized prelimit statistics against the limit marginal over a
    growing v grid. Passes when the sequence does not increase by more than the slack
    and the last distance is below PRELIMIT_FINAL_KS.
    '''
    started = time.perf_counter()
    grid = [float(v) for v in v_grid]
    if not grid:
        raise ValueError('v_grid must not be empty')
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise ValueError('v_grid must be strictly increasing')
    regime = Regime.parse(regime)
    law = law_for_regime(regime, model, t, statistic)

    ks_sequence: list[float] = []
    lost_fractions: list[float] = []
    for v in grid:
        log.info('Prelimit %s ensemble: %s, v=%g, n=%d', statistic, model.describe(), v, n)
        ensemble = statistic_ensemble(
            model, regime, v, t, n, seed, statistic, n_cap=n_cap, threads=threads, method=method
        )
        lost_fractions.append(ensemble.lost_fraction)
        ks_sequence.append(ks_distance(ensemble.ordered_values(), law))
        log.debug('v=%g: ks=%.6f lost=%d', v, ks_sequence[-1], ensemble.lost)

    slack = PRELIMIT_SE_SLACK * KOLMOGOROV_SD / math.sqrt(n)
    trend_ok = all(later <= earlier + slack for earlier, later in zip(ks_sequence, ks_sequence[1:]))
    final_ks = ks_sequence[-1]
    return _finish(
        'prelimit_convergence',
        {
            'model': model.to_dict(),
            'regime': regime.value,
            'statistic': statistic,
            't': t,
            'v_grid': grid,
            'n_cap': n_cap,
        },
        n,
        seed,
        started,
        trend_ok and final_ks < PRELIMIT_FINAL_KS,
        ks=final_ks,
        bound=dkw_bound(n, confidence),
        tolerance=PRELIMIT_FINAL_KS,
        cap_fraction=max(lost_fractions),
        extras={
            'ks_sequence': ks_sequence,
            'trend_ok': trend_ok,
            'slack': slack,
            'limit_law': law.kind,
        },
    )


def _exceedance_count(
    model: TailModel,
    index_count: int,
    threshold: float,
    n: int,
    seed: int,
    name: str,
    threads: int | None,
) -> int:
    # Fixed block layout: block b always covers the same replicates on stream (seed, tag, b).
    rows = max(1, MAX_DRAWS_PER_BLOCK // index_count)
    blocks = math.ceil(n / rows)
    tag = stream_tag(name)
    counts = np.zeros(blocks, dtype=np.int64)

    def _run_block(block: int) -> None:
        size = min(rows, n - block * rows)
        rng = make_rng(seed, tag, block)
        sums = sample_increments(model, rng, size * index_count).reshape(size, index_count).sum(axis=1)
        counts[block] = int(np.count_nonzero(sums > threshold))

    workers = min(resolve_threads(threads), blocks)
    if workers <= 1:
        for block in range(blocks):
            _run_block(block)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_run_block, range(blocks)))
    return int(counts.sum())


def verify_large_deviation(
    model: TailModel,
    t: float,
    y: float,
    v: float,
    n: int,
    seed: int,
    threads: int | None = None,
) -> VerificationReport:
    '''
    Monte Carlo estimate of v P{S_floor(tv) - centering > a(v) y} against t y^-alpha.

    The walk is centered by mu floor(tv) when the mean is finite.
    '''
    started = time.perf_counter()
    if model.family != 'pareto' or not model.alpha <= 2:
        raise TailModelError('verify_large_deviation needs a pure Pareto model with alpha <= 2')
    if not (t > 0 and y > 0):
        raise DomainError('verify_large_deviation needs t > 0 and y > 0')
    index_count = math.floor(t * v)
    if index_count < 1:
        raise IndexUnderflow(f'floor(t v) = {index_count}')
    scale = solve_a_regime1(model, v)
    centering = model.mean * index_count if math.isfinite(model.mean) else 0.0
    threshold = scale * y + centering
    log.info('Large deviation: %s, K=%d, a(v)=%.6g, threshold=%.6g', model.describe(), index_count, scale, threshold)

    name = f'ld|{model.describe()}|{t!r}|{y!r}|{v!r}'
    exceedances = _exceedance_count(model, index_count, threshold, n, seed, name, threads)
    p_hat = exceedances / n
    estimate = v * p_hat
    se = v * math.sqrt(p_hat * (1.0 - p_hat) / n)
    target = t * y ** -model.alpha
    tolerance = LARGE_DEVIATION_RTOL * target
    return _finish(
        'large_deviation',
        {'model': model.to_dict(), 't': t, 'y': y, 'v': v},
        n,
        seed,
        started,
        abs(estimate - target) <= tolerance,
        bound=se,
        tolerance=tolerance,
        extras={
            'estimate': estimate,
            'se': se,
            'target': target,
            'exceedances': exceedances,
            'scale': scale,
            'centering': centering,
            'index_count': index_count,
        },
    )


def verify_fast_vs_direct(
    model: TailModel,
    n_grid: Sequence[int],
    n: int,
    seed: int,
    threads: int | None = None,
    confidence: float = CONFIDENCE,
) -> VerificationReport:
    '''
    Two-sample KS between S_hat_m from the direct and the gamma fast sampler, per m.
    '''
    started = time.perf_counter()
    indices = [int(m) for m in n_grid]
    if not indices or min(indices) < 1:
        raise ValueError('n_grid needs positive indices')
    critical = two_sample_critical(n, n, confidence)
    distances: dict[str, float] = {}
    for m in indices:
        base = f'{model.describe()}|{m}'
        direct = run_ensemble(
            lambda rng, _: sample_decoupled_direct(model, m, rng).values[-1],
            n=n,
            seed=seed,
            name=f'direct|{base}',
            threads=threads,
        )
        fast = run_ensemble(
            lambda rng, _: sample_decoupled_fast(model, m, rng).values[-1],
            n=n,
            seed=seed,
            name=f'fast|{base}',
            threads=threads,
        )
        distances[str(m)] = ks_two_sample(direct.values, fast.values)
        log.debug('n=%d: two-sample ks=%.6f (critical %.6f)', m, distances[str(m)], critical)
    worst = max(distances.values())
    return _finish(
        'fast_vs_direct',
        {'model': model.to_dict(), 'n_grid': indices},
        n,
        seed,
        started,
        worst <= critical,
        ks=worst,
        bound=critical,
        tolerance=critical,
        extras={'ks_by_n': distances},
    )


def verify_renewal(
    model: TailModel,
    t: float,
    n: int,
    seed: int,
    n_max: int | None = None,
    threads: int | None = None,
) -> VerificationReport:
    '''
    Mean of N_hat(t) against the renewal function, and tau_hat(t) - 1 <= N_hat(t) on
    every replicate of one shared realization.
    '''
    started = time.perf_counter()
    target = renewal_function(model, t)

    def _replicate(rng: np.random.Generator, _: int) -> tuple[float, float, float]:
        sample = coupled_functionals(model, t, rng, n_max=n_max, method='auto', keep_values=False)
        if isinstance(sample.tau, Capped):
            return float(sample.n_visits), math.nan, 0.0
        violated = sample.tau - 1 > sample.n_visits
        return float(sample.n_visits), float(sample.tau), float(violated)

    ensemble = run_ensemble(
        _replicate,
        n=n,
        seed=seed,
        name=f'renewal|{model.describe()}|{t!r}|{n_max!r}',
        threads=threads,
        width=3,
    )
    visits = ensemble.values[:, 0]
    capped = int(np.count_nonzero(np.isnan(ensemble.values[:, 1])))
    violations = int(ensemble.values[:, 2].sum())
    mean = float(visits.mean())
    se = float(visits.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    tolerance = 3.0 * se
    return _finish(
        'renewal',
        {'model': model.to_dict(), 't': t, 'n_max': n_max},
        n,
        seed,
        started,
        abs(mean - target) <= tolerance and violations == 0,
        bound=se,
        tolerance=tolerance,
        cap_fraction=capped / n,
        extras={'mean_visits': mean, 'target': target, 'se': se, 'violations': violations, 'capped': capped},
    )
