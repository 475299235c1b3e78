##########################################################################################
#
# Script name: tails.py
#
# Description: Increment laws with exact tails, their samplers, normalizing sequences,
#              and standard normal distribution machinery.
#
##########################################################################################

import logging
import math

import numpy as np
from scipy import optimize, special

from .config import (
    NORMAL_QUANTILE_MAX_NEWTON,
    NORMAL_QUANTILE_RTOL,
    ROOT_MAX_DOUBLINGS,
    ROOT_MAX_ITER,
    ROOT_RTOL,
)
from .models import (
    DomainError,
    InvalidQuantile,
    NoRoot,
    Regime,
    TailModel,
    TailModelError,
    Unclassifiable,
)


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2 * math.pi)


# ****************************************************************************************
# Tails and sampling
# ****************************************************************************************


def tail_prob(model: TailModel, x: float | np.ndarray) -> float | np.ndarray:
    '''
    Exact P{xi > x}. Accepts scalars or arrays of nonnegative values.
    '''
    grid = np.asarray(x, dtype=float)
    if np.any(grid < 0):
        raise DomainError('tail_prob is defined for x >= 0')
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        if model.family == 'pareto':
            above = (np.maximum(grid, model.x_min) / model.x_min) ** -model.alpha
            result = np.where(grid < model.x_min, 1.0, above)
        elif model.family == 'pareto-log':
            clipped = np.maximum(grid, model.x_min)
            above = model.A * clipped ** -3 * np.log(clipped)
            result = np.where(grid < model.x_min, 1.0, np.minimum(1.0, above))
        elif model.family == 'gamma':
            result = special.gammaincc(model.shape, model.rate * grid)
        elif model.family == 'exponential':
            result = np.exp(-model.rate * grid)
        else:
            positive = np.maximum(grid, np.finfo(float).tiny)
            result = np.where(
                grid <= 0,
                1.0,
                special.ndtr((model.mu_ln - np.log(positive)) / model.sigma_ln),
            )
    if np.ndim(x) == 0:
        return float(result)
    return result


def increments_from_uniforms(model: TailModel, u: np.ndarray) -> np.ndarray:
    '''
    Inverse tail transform: returns x with P{xi > x} = u for u in (0, 1].
    '''
    u = np.asarray(u, dtype=float)
    if model.family == 'pareto':
        return model.x_min * u ** (-1.0 / model.alpha)
    if model.family == 'pareto-log':
        tail_at_min = 1.0 - model.atom_mass
        inside = u < tail_at_min
        result = np.full(u.shape, model.x_min)
        if np.any(inside):
            # A x^-3 log x = u  <=>  x = exp(-W_{-1}(-3u/A) / 3) on the decreasing branch.
            branch = special.lambertw(-3.0 * u[inside] / model.A, k=-1).real
            result[inside] = np.exp(-branch / 3.0)
        return result
    if model.family == 'gamma':
        return special.gammainccinv(model.shape, u) / model.rate
    if model.family == 'exponential':
        return -np.log(u) / model.rate
    return np.exp(model.mu_ln - model.sigma_ln * special.ndtri(u))


def draw_tail_uniforms(rng: np.random.Generator, size: int) -> np.ndarray:
    # Generator.random is [0, 1); flip it to (0, 1] so u = 0 never reaches the inverse.
    return 1.0 - rng.random(size)


def sample_increments(model: TailModel, rng: np.random.Generator, size: int) -> np.ndarray:
    return increments_from_uniforms(model, draw_tail_uniforms(rng, size))


def sample_increment(model: TailModel, rng: np.random.Generator) -> float:
    return float(sample_increments(model, rng, 1)[0])


# ****************************************************************************************
# Normalizing sequences
# ****************************************************************************************


def _solve_decreasing(equation, lower: float, label: str) -> float:
    start_value = equation(lower)
    if start_value < 0:
        raise NoRoot(f'{label}: no root above x_min={lower:g} (residual {start_value:g} at x_min)')
    if start_value == 0:
        return lower
    upper = 2.0 * lower if lower > 0 else 1.0
    doublings = 0
    while equation(upper) > 0:
        upper *= 2.0
        doublings += 1
        if doublings > ROOT_MAX_DOUBLINGS or not math.isfinite(upper):
            raise NoRoot(f'{label}: could not bracket the root')
    try:
        root = optimize.bisect(
            equation,
            lower,
            upper,
            xtol=1e-300,
            rtol=ROOT_RTOL,
            maxiter=ROOT_MAX_ITER,
        )
    except RuntimeError as exc:
        raise NoRoot(f'{label}: bisection did not converge: {exc}') from exc
    log.debug('%s root %.12g in bracket [%g, %g]', label, root, lower, upper)
    return float(root)


def solve_a_regime1(model: TailModel, v: float) -> float:
    '''
    Root a of v^2 * P{xi > a} = 1 for alpha in (0, 2].
    '''
    if not v > 0:
        raise DomainError(f'v must be positive, got {v}')
    if not 0 < model.tail_index <= 2:
        raise TailModelError(f'solve_a_regime1 needs alpha in (0, 2], got {model.tail_index}')
    v2 = float(v) ** 2
    return _solve_decreasing(
        lambda x: v2 * tail_prob(model, x) - 1.0,
        model.lower_endpoint,
        'solve_a_regime1',
    )


def solve_a_regime2(model: TailModel, v: float) -> float:
    '''
    Root a of v * a * P{xi > a} = 1 for alpha in (2, 3].
    '''
    if not v > 0:
        raise DomainError(f'v must be positive, got {v}')
    if not 2 < model.tail_index <= 3:
        raise TailModelError(f'solve_a_regime2 needs alpha in (2, 3], got {model.tail_index}')
    v = float(v)
    return _solve_decreasing(
        lambda x: v * x * tail_prob(model, x) - 1.0,
        model.lower_endpoint,
        'solve_a_regime2',
    )


def a_m_regime3(mu: float, sigma: float, v: float, drift_scaled: bool = True) -> tuple[float, float]:
    '''
    Scale a(v) = sigma (v / log v)^(1/2) and centering m(v) of the Gaussian regime.

    With drift_scaled the centering is sigma (mu v + v^(1/2) Phi^-1(1 - 1/a)); without it
    the drift is left unscaled: mu v + sigma v^(1/2) Phi^-1(1 - 1/a). The two agree when
    sigma = 1.
    '''
    if not v > 1:
        raise DomainError(f'a_m_regime3 needs v > 1, got {v}')
    if not (mu > 0 and sigma > 0):
        raise DomainError('a_m_regime3 needs positive mu and sigma')
    a = sigma * math.sqrt(v / math.log(v))
    if a <= 1:
        raise InvalidQuantile(f'a(v)={a:g} <= 1, so Phi^-1(1 - 1/a) is undefined')
    q = normal_quantile_upper(1.0 / a)
    if drift_scaled:
        m = sigma * (mu * v + math.sqrt(v) * q)
    else:
        m = mu * v + sigma * math.sqrt(v) * q
    return a, m


def m_regime3_expansion(mu: float, sigma: float, v: float, drift_scaled: bool = True) -> float:
    '''
    Centering with Phi^-1(1 - 1/a(v)) replaced by its expansion in log v.
    '''
    if not v > 1:
        raise DomainError(f'm_regime3_expansion needs v > 1, got {v}')
    log_v = math.log(v)
    q = math.sqrt(log_v) - math.log(log_v) / math.sqrt(log_v) - math.log(2 * math.pi) / math.sqrt(8 * log_v)
    if drift_scaled:
        return sigma * (mu * v + math.sqrt(v) * q)
    return mu * v + sigma * math.sqrt(v) * q


def a_regime4(A: float, v: float) -> float:
    if not v > 1:
        raise DomainError(f'a_regime4 needs v > 1, got {v}')
    if not A > 0:
        raise DomainError(f'a_regime4 needs A > 0, got {A}')
    return math.sqrt((A / 2.0) * v * math.log(v))


# ****************************************************************************************
# Standard normal
# ****************************************************************************************


class Probability(float):
    '''
    A probability that remembers its complement, so values within rounding of 1 can
    still be inverted to full precision.
    '''

    complement: float

    def __new__(cls, value: float, complement: float) -> 'Probability':
        instance = super().__new__(cls, value)
        instance.complement = float(complement)
        return instance


class ProbabilityArray(np.ndarray):
    '''
    Array of probabilities carrying their complements. Derived arrays drop them.
    '''

    complement: np.ndarray | None

    def __array_finalize__(self, obj: np.ndarray | None) -> None:
        self.complement = None


def normal_pdf(x: float | np.ndarray) -> float | np.ndarray:
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def normal_cdf(x: float | np.ndarray) -> Probability | ProbabilityArray:
    points = np.asarray(x, dtype=float)
    lower = special.ndtr(points)
    upper = special.ndtr(-points)
    if np.ndim(x) == 0:
        return Probability(lower, upper)
    result = np.asarray(lower).view(ProbabilityArray)
    result.complement = upper
    return result


def normal_sf(x: float | np.ndarray) -> float | np.ndarray:
    result = special.ndtr(-np.asarray(x, dtype=float))
    if np.ndim(x) == 0:
        return float(result)
    return result


def _refine_quantile(p: np.ndarray, upper: bool) -> np.ndarray:
    # Newton on Phi(x) = p (or 1 - Phi(x) = p for the upper tail), seeded by ndtri.
    # p is the tail probability, so the stop test is relative to it.
    x = -special.ndtri(p) if upper else special.ndtri(p)
    for _ in range(NORMAL_QUANTILE_MAX_NEWTON):
        current = special.ndtr(-x) if upper else special.ndtr(x)
        residual = current - p
        if np.all(np.abs(residual) <= NORMAL_QUANTILE_RTOL * p):
            break
        density = normal_pdf(x)
        step = np.where(density > 0, residual / np.where(density > 0, density, 1.0), 0.0)
        x = x + step if upper else x - step
    return x


def _validated_probabilities(p: float | np.ndarray) -> np.ndarray:
    probs = np.asarray(p, dtype=float)
    if np.any(~((probs > 0) & (probs < 1))):
        raise InvalidQuantile('normal quantile needs p in (0, 1)')
    return probs


def normal_quantile(p: float | np.ndarray) -> float | np.ndarray:
    '''
    Phi^-1(p). Above 1/2 the root is found on the upper tail from 1 - p, taken from
    p.complement when p came out of normal_cdf.
    '''
    probs = _validated_probabilities(p)
    complement = getattr(p, 'complement', None)
    if complement is None:
        complement = 1.0 - probs
    complement = np.broadcast_to(np.asarray(complement, dtype=float), probs.shape)
    upper_tail = probs > 0.5
    lower = _refine_quantile(np.where(upper_tail, 0.5, probs), upper=False)
    upper = _refine_quantile(np.where(upper_tail, complement, 0.5), upper=True)
    result = np.where(upper_tail, upper, lower)
    if np.ndim(p) == 0:
        return float(result)
    return result


def normal_quantile_upper(q: float | np.ndarray) -> float | np.ndarray:
    '''
    x with 1 - Phi(x) = q. Keeps full precision where 1 - q rounds to 1.
    '''
    result = _refine_quantile(_validated_probabilities(q), upper=True)
    if np.ndim(q) == 0:
        return float(result)
    return result


def quantile_expansion(h: float) -> float:
    '''
    Two-term expansion of Phi^-1(1 - h) as h -> 0+.
    '''
    if not 0 < h < 1 / math.e:
        raise DomainError(f'quantile_expansion needs h in (0, 1/e), got {h}')
    log_inv = math.log(1.0 / h)
    return math.sqrt(2 * log_inv) - (math.log(log_inv) + math.log(4 * math.pi)) / math.sqrt(8 * log_inv)


# ****************************************************************************************
# Regimes
# ****************************************************************************************


def classify_regime(model: TailModel) -> Regime:
    '''
    Map a tail model to its regime.

    Pure Pareto has constant slowly varying part, so alpha = 2 falls in the centered
    heavy regime and alpha = 3 in the Gaussian one (l(v) / log v -> 0) rather than the
    intermediate one. The alpha = 2, l -> infinity case has no supported family.
    '''
    if model.family == 'pareto-log':
        return Regime.R4_BOUNDARY
    if model.third_moment_finite:
        return Regime.R3_GAUSSIAN
    if model.family == 'pareto':
        alpha = model.alpha
        if alpha < 2:
            return Regime.R1_HEAVY_NO_CENTER
        if alpha == 2:
            return Regime.R1_HEAVY_CENTERED
        if alpha < 3:
            return Regime.R2_INTERMEDIATE
        return Regime.R3_GAUSSIAN
    raise Unclassifiable(f'No regime for {model.describe()}')
