##########################################################################################
#
# Script name: walks.py
#
# Description: Decoupled random walks and their functionals: running maxima, first passage
#              times, visit counts, and normalized pre-limit statistics.
#
##########################################################################################

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import (
    FIRST_PASSAGE_CEILING,
    FIRST_PASSAGE_EXTRA,
    GAMMA_FAMILIES,
    MAX_DRAWS_PER_BLOCK,
    VISITS_EXTRA,
    VISITS_SPREAD,
)
from .models import (
    Capped,
    DecoupledSample,
    DomainError,
    FunctionalSample,
    IndexUnderflow,
    Regime,
    RegimeMismatch,
    TailModel,
    UnboundedTruncation,
    UnsupportedFamily,
)
from .tails import (
    a_m_regime3,
    a_regime4,
    classify_regime,
    draw_tail_uniforms,
    sample_increments,
    solve_a_regime1,
    solve_a_regime2,
    tail_prob,
)
from .utils import EnsembleResult, run_ensemble


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(__name__)

METHODS = ('auto', 'direct', 'fast')
STATISTICS = ('max', 'tau')
FIRST_BLOCK_INDICES = 64


# ****************************************************************************************
# Value generation
# ****************************************************************************************
#
# A replicate owns one stream. The increments of S_hat_n occupy the consecutive block
# [n(n-1)/2, n(n+1)/2) of that stream (one uniform per increment), so blocks for distinct
# n never overlap and generating lazily, block by block, reproduces the bulk draw.


def _resolve_method(model: TailModel, method: str) -> str:
    if method not in METHODS:
        raise ValueError(f'Unknown sampling method {method!r}; expected one of {METHODS}')
    if method == 'auto':
        return 'fast' if model.family in GAMMA_FAMILIES else 'direct'
    if method == 'fast' and model.family not in GAMMA_FAMILIES:
        raise UnsupportedFamily(f'fast sampler needs a gamma or exponential family, got {model.family}')
    return method


def _next_stop(n_start: int, indices: int) -> int:
    # Largest stop <= n_start + indices whose block stays within MAX_DRAWS_PER_BLOCK draws.
    stop = n_start + max(1, indices)
    while stop > n_start + 1 and (stop - n_start) * (n_start + stop - 1) // 2 > MAX_DRAWS_PER_BLOCK:
        stop = n_start + max(1, (stop - n_start) // 2)
    return stop


def _direct_block(model: TailModel, rng: np.random.Generator, n_start: int, n_stop: int) -> np.ndarray:
    sizes = np.arange(n_start, n_stop, dtype=np.int64)
    increments = sample_increments(model, rng, int(sizes.sum()))
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return np.add.reduceat(increments, starts)


def _fast_block(model: TailModel, rng: np.random.Generator, n_start: int, n_stop: int) -> np.ndarray:
    # S_n of gamma(shape, rate) increments is gamma(n * shape, rate).
    shape = model.shape if model.family == 'gamma' else 1.0
    orders = np.arange(n_start, n_stop, dtype=float) * shape
    u = draw_tail_uniforms(rng, n_stop - n_start)
    return special.gammainccinv(orders, u) / model.rate


def iter_value_blocks(
    model: TailModel,
    rng: np.random.Generator,
    method: str = 'direct',
    n_limit: int | None = None,
) -> Iterator[tuple[int, np.ndarray]]:
    '''
    Yield (n_start, values) blocks of S_hat_n for n = 1, 2, ... up to n_limit (inclusive).
    '''
    resolved = _resolve_method(model, method)
    block = _fast_block if resolved == 'fast' else _direct_block
    n_start = 1
    indices = FIRST_BLOCK_INDICES
    while n_limit is None or n_start <= n_limit:
        n_stop = _next_stop(n_start, indices)
        if n_limit is not None:
            n_stop = min(n_stop, n_limit + 1)
        yield n_start, block(model, rng, n_start, n_stop)
        n_start = n_stop
        indices *= 2


def sample_decoupled_direct(
    model: TailModel,
    n_max: int,
    rng: np.random.Generator,
    seed: int | None = None,
    stream_key: tuple[int, ...] = (),
) -> DecoupledSample:
    '''
    S_hat_1..S_hat_n_max with each S_hat_n a fresh sum of n increments.
    '''
    if n_max < 1:
        raise ValueError('n_max must be at least 1')
    values = np.concatenate([values for _, values in iter_value_blocks(model, rng, 'direct', n_max)])
    return DecoupledSample(values=values, model=model, seed=seed, stream_key=stream_key, method='direct')


def sample_decoupled_fast(
    model: TailModel,
    n_max: int,
    rng: np.random.Generator,
    seed: int | None = None,
    stream_key: tuple[int, ...] = (),
) -> DecoupledSample:
    '''
    S_hat_n drawn directly from its gamma law, one uniform per index.
    '''
    if n_max < 1:
        raise ValueError('n_max must be at least 1')
    _resolve_method(model, 'fast')
    values = np.concatenate([values for _, values in iter_value_blocks(model, rng, 'fast', n_max)])
    return DecoupledSample(values=values, model=model, seed=seed, stream_key=stream_key, method='fast')


# ****************************************************************************************
# Functionals
# ****************************************************************************************


def default_first_passage_cap(model: TailModel, t: float, drift: float = 0.0) -> int:
    effective_mean = model.mean - drift
    if math.isfinite(effective_mean) and effective_mean > 0:
        return 2 * math.ceil(t / effective_mean) + FIRST_PASSAGE_EXTRA
    return FIRST_PASSAGE_CEILING


def default_visits_horizon(model: TailModel, t: float) -> int:
    mu = model.mean
    variance = model.variance
    if not (math.isfinite(mu) and math.isfinite(variance)):
        raise UnboundedTruncation(
            f'{model.describe()} has infinite mean or variance; pass n_max explicitly'
        )
    return math.ceil(t / mu) + math.ceil(VISITS_SPREAD * math.sqrt(variance * t / mu ** 3)) + VISITS_EXTRA


def first_passage(
    model: TailModel,
    t: float,
    rng: np.random.Generator,
    n_cap: int | None = None,
    drift: float = 0.0,
    method: str = 'direct',
) -> int | Capped:
    '''
    tau_hat(t) = inf{n >= 1: S_hat_n - drift * n > t}, generated lazily.

    Returns Capped(n_cap) when no index up to n_cap exceeds t. Without n_cap the search
    stops at default_first_passage_cap, a fixed ceiling when the drifted mean is not
    positive.
    '''
    if t < 0:
        raise DomainError(f'first_passage needs t >= 0, got {t}')
    cap = n_cap if n_cap is not None else default_first_passage_cap(model, t, drift)
    if cap < 1:
        raise ValueError('n_cap must be at least 1')
    for n_start, values in iter_value_blocks(model, rng, method, cap):
        if drift:
            values = values - drift * np.arange(n_start, n_start + values.shape[0])
        hits = np.flatnonzero(values > t)
        if hits.size:
            return n_start + int(hits[0])
    log.debug('first_passage: no crossing of t=%g up to n=%d', t, cap)
    return Capped(cap)


def visits_count(
    model: TailModel,
    t: float,
    rng: np.random.Generator,
    n_max: int | None = None,
    method: str = 'auto',
) -> int:
    '''
    N_hat(t) truncated at n_max: the number of n <= n_max with S_hat_n <= t.
    '''
    if t < 0:
        raise DomainError(f'visits_count needs t >= 0, got {t}')
    horizon = n_max if n_max is not None else default_visits_horizon(model, t)
    if horizon < 1:
        raise ValueError('n_max must be at least 1')
    count = 0
    for _, values in iter_value_blocks(model, rng, method, horizon):
        count += int(np.count_nonzero(values <= t))
    return count


def coupled_functionals(
    model: TailModel,
    t: float,
    rng: np.random.Generator,
    n_max: int | None = None,
    n_cap: int | None = None,
    method: str = 'direct',
    keep_values: bool = True,
) -> FunctionalSample:
    '''
    tau_hat(t), N_hat(t) and the running maximum from one shared realization.

    Generation runs to max(n_max, tau_hat(t)) so that tau_hat(t) - 1 <= N_hat(t).
    '''
    if t < 0:
        raise DomainError(f'coupled_functionals needs t >= 0, got {t}')
    horizon = n_max if n_max is not None else default_visits_horizon(model, t)
    cap = n_cap if n_cap is not None else default_first_passage_cap(model, t)
    cap = max(cap, horizon)
    tau: int | Capped | None = None
    blocks: list[np.ndarray] = []
    for n_start, values in iter_value_blocks(model, rng, method, cap):
        blocks.append(values)
        if tau is None:
            hits = np.flatnonzero(values > t)
            if hits.size:
                tau = n_start + int(hits[0])
        if tau is not None and n_start + values.shape[0] - 1 >= horizon:
            break
    if tau is None:
        tau = Capped(cap)
    realized = np.concatenate(blocks)
    return FunctionalSample(
        tau=tau,
        n_visits=int(np.count_nonzero(realized <= t)),
        running_max=np.maximum.accumulate(realized),
        threshold=float(t),
        values=realized if keep_values else None,
    )


def renewal_function(model: TailModel, t: float, tol: float = 1e-16) -> float:
    '''
    U(t) = sum_n P{S_n <= t} for gamma-family increments.
    '''
    if model.family not in GAMMA_FAMILIES:
        raise UnsupportedFamily('renewal_function is closed form only for gamma families')
    if t <= 0:
        return 0.0
    shape = model.shape if model.family == 'gamma' else 1.0
    total = 0.0
    n = 1
    while True:
        term = float(special.gammainc(n * shape, model.rate * t))
        total += term
        if term < tol and n * shape > model.rate * t:
            return total
        n += 1


# ****************************************************************************************
# Normalized statistics
# ****************************************************************************************


@dataclass(frozen=True)
class Normalization:
    '''
    Affine normalization of a pre-limit statistic.

    max: (max_{n <= index_count} (S_hat_n - drift * n) - centering) / scale.
    tau: (inf{n: S_hat_n - drift * n > level} - centering) / scale.
    '''

    regime: Regime
    statistic: str
    v: float
    t: float
    scale: float
    centering: float
    drift: float = 0.0
    index_count: int = 0
    level: float = 0.0


def prelimit_normalization(
    model: TailModel,
    regime: Regime | str,
    v: float,
    t: float,
    statistic: str = 'max',
) -> Normalization:
    regime = Regime.parse(regime)
    expected = classify_regime(model)
    if regime != expected:
        raise RegimeMismatch(f'{model.describe()} is {expected.value}, not {regime.value}')
    if statistic not in STATISTICS:
        raise ValueError(f'Unknown statistic {statistic!r}; expected one of {STATISTICS}')
    mu = model.mean
    drift = mu if regime == Regime.R1_HEAVY_CENTERED else 0.0

    if statistic == 'max':
        if regime in {Regime.R1_HEAVY_NO_CENTER, Regime.R1_HEAVY_CENTERED}:
            scale = solve_a_regime1(model, v)
            index_count = math.floor(t * v)
            centering = 0.0
        else:
            if regime == Regime.R2_INTERMEDIATE:
                scale = solve_a_regime2(model, v)
                centering = mu * v
            elif regime == Regime.R3_GAUSSIAN:
                scale, centering = a_m_regime3(mu, math.sqrt(model.variance), v, drift_scaled=False)
            else:
                scale = a_regime4(model.A, v)
                centering = mu * v
            index_count = math.floor(v + t * scale)
        if index_count < 1:
            raise IndexUnderflow(f'statistic ranges over {index_count} indices (v={v}, t={t})')
        return Normalization(
            regime=regime,
            statistic=statistic,
            v=float(v),
            t=float(t),
            scale=scale,
            centering=centering,
            drift=drift,
            index_count=index_count,
        )

    if regime in {Regime.R1_HEAVY_NO_CENTER, Regime.R1_HEAVY_CENTERED}:
        level = t * v
        scale = tail_prob(model, v) ** -0.5
        centering = 0.0
    elif regime == Regime.R2_INTERMEDIATE:
        level = v + t * solve_a_regime2(model, v / mu)
        centering = v / mu
        scale = mu ** (-1.0 / (model.alpha - 1.0)) * solve_a_regime2(model, v)
    elif regime == Regime.R4_BOUNDARY:
        level = v + t * a_regime4(model.A, v / mu)
        centering = v / mu
        scale = mu ** -0.5 * a_regime4(model.A, v)
    else:
        scale, m = a_m_regime3(mu, math.sqrt(model.variance), v, drift_scaled=False)
        level = m + t * scale
        centering = float(v)
    return Normalization(
        regime=regime,
        statistic=statistic,
        v=float(v),
        t=float(t),
        scale=scale,
        centering=centering,
        drift=drift,
        level=max(level, 0.0),
    )


def normalized_max_marginal(
    model: TailModel,
    regime: Regime | str,
    v: float,
    t: float,
    rng: np.random.Generator,
    method: str = 'auto',
    normalization: Normalization | None = None,
) -> float:
    norm = normalization or prelimit_normalization(model, regime, v, t, 'max')
    best = -math.inf
    for n_start, values in iter_value_blocks(model, rng, method, norm.index_count):
        if norm.drift:
            values = values - norm.drift * np.arange(n_start, n_start + values.shape[0])
        best = max(best, float(values.max()))
    return (best - norm.centering) / norm.scale


def normalized_tau_marginal(
    model: TailModel,
    regime: Regime | str,
    v: float,
    t: float,
    rng: np.random.Generator,
    n_cap: int | None = None,
    method: str = 'auto',
    normalization: Normalization | None = None,
) -> float | Capped:
    norm = normalization or prelimit_normalization(model, regime, v, t, 'tau')
    tau = first_passage(model, norm.level, rng, n_cap=n_cap, drift=norm.drift, method=method)
    if isinstance(tau, Capped):
        return tau
    return (tau - norm.centering) / norm.scale


def statistic_ensemble(
    model: TailModel,
    regime: Regime | str,
    v: float,
    t: float,
    n: int,
    seed: int,
    statistic: str = 'max',
    n_cap: int | None = None,
    threads: int | None = None,
    method: str = 'auto',
) -> EnsembleResult:
    '''
    n independent normalized statistics; replicate i uses its own stream.
    '''
    norm = prelimit_normalization(model, regime, v, t, statistic)
    log.debug(
        'Normalization %s/%s v=%g t=%g: scale=%.6g centering=%.6g index_count=%d level=%.6g',
        norm.regime.value,
        statistic,
        v,
        t,
        norm.scale,
        norm.centering,
        norm.index_count,
        norm.level,
    )
    name = f'{statistic}|{model.describe()}|{norm.regime.value}|{v!r}|{t!r}'
    if statistic == 'max':
        return run_ensemble(
            lambda rng, _: normalized_max_marginal(model, regime, v, t, rng, method, norm),
            n=n,
            seed=seed,
            name=name,
            threads=threads,
        )
    return run_ensemble(
        lambda rng, _: normalized_tau_marginal(model, regime, v, t, rng, n_cap, method, norm),
        n=n,
        seed=seed,
        name=name,
        threads=threads,
    )


def max_ensemble(
    model: TailModel,
    regime: Regime | str,
    v: float,
    t: float,
    n: int,
    seed: int,
    threads: int | None = None,
    method: str = 'auto',
) -> EnsembleResult:
    return statistic_ensemble(model, regime, v, t, n, seed, 'max', threads=threads, method=method)


def tau_ensemble(
    model: TailModel,
    regime: Regime | str,
    v: float,
    t: float,
    n: int,
    seed: int,
    n_cap: int | None = None,
    threads: int | None = None,
    method: str = 'auto',
) -> EnsembleResult:
    return statistic_ensemble(model, regime, v, t, n, seed, 'tau', n_cap=n_cap, threads=threads, method=method)
