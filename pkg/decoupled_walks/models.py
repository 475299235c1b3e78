##########################################################################################
#
# Script name: models.py
#
# Description: Dataclasses and exceptions shared across tails, walks, limits, and verify.
#
##########################################################################################

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .config import FAMILIES, MARGINAL_KINDS, PRM_TAGS


# ****************************************************************************************
# Exceptions
# ****************************************************************************************


class Error(Exception):
    '''
    Base class for exceptions in this package.
    '''


class TailModelError(Error, ValueError):
    '''
    Raised when a tail model is built with invalid parameters or used outside its regime.
    '''


class NoRoot(Error, ArithmeticError):
    '''
    Raised when a normalizing equation has no root in the searched bracket.
    '''


class InvalidQuantile(Error, ValueError):
    '''
    Raised when a normal quantile argument falls outside (0, 1).
    '''


class DomainError(Error, ValueError):
    '''
    Raised when an argument lies outside the domain of a closed-form expression.
    '''


class Unclassifiable(Error, ValueError):
    '''
    Raised when a tail model matches none of the five regimes.
    '''


class UnsupportedFamily(Error, ValueError):
    '''
    Raised when a sampler does not support the requested increment family.
    '''


class UnboundedTruncation(Error, ValueError):
    '''
    Raised when a truncation index cannot be chosen automatically.
    '''


class RegimeMismatch(Error, ValueError):
    '''
    Raised when the requested regime differs from the model's classification.
    '''


class IndexUnderflow(Error, ValueError):
    '''
    Raised when a normalized statistic would range over fewer than one index.
    '''


class InfiniteIntensity(Error, ValueError):
    '''
    Raised when a Poisson random measure restriction has infinite mass.
    '''


class WindowError(Error, ValueError):
    '''
    Raised when a simulation window is empty-inverted or outside the process domain.
    '''


class BudgetError(Error, ValueError):
    '''
    Raised when a truncation bias budget is outside (0, 1).
    '''


class ConfigError(Error, ValueError):
    '''
    Raised when a run configuration fails validation.
    '''


# ****************************************************************************************
# Data models
# ****************************************************************************************


@dataclass(frozen=True)
class Capped:
    cap: int


@dataclass(frozen=True)
class Censored:
    side: str

    def __post_init__(self) -> None:
        if self.side not in {'left', 'right'}:
            raise ValueError(f'Censored side must be left or right, got {self.side!r}')


class Regime(str, Enum):
    R1_HEAVY_NO_CENTER = 'R1_HeavyNoCenter'
    R1_HEAVY_CENTERED = 'R1_HeavyCentered'
    R2_INTERMEDIATE = 'R2_Intermediate'
    R3_GAUSSIAN = 'R3_Gaussian'
    R4_BOUNDARY = 'R4_Boundary'

    @classmethod
    def parse(cls, value: 'str | Regime') -> 'Regime':
        if isinstance(value, cls):
            return value
        cleaned = str(value).strip()
        for member in cls:
            if cleaned in {member.value, member.name} or cleaned.lower() == member.value.lower():
                return member
        raise ValueError(f'Unknown regime: {value!r}')


@dataclass(frozen=True)
class TailModel:
    '''
    Nonnegative increment law with an exactly computable tail.

    family is one of pareto, pareto-log, gamma, exponential, lognormal. Only the
    parameters of the chosen family are meaningful; the rest keep their defaults.
    '''

    family: str
    alpha: float = math.inf
    x_min: float = 0.0
    A: float = 0.0
    shape: float = 1.0
    rate: float = 1.0
    mu_ln: float = 0.0
    sigma_ln: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise TailModelError(f'Unknown family {self.family!r}; expected one of {FAMILIES}')
        if self.family == 'pareto':
            if not (self.alpha > 0 and math.isfinite(self.alpha)):
                raise TailModelError(f'Pareto alpha must be positive and finite, got {self.alpha}')
            if not self.x_min > 0:
                raise TailModelError(f'Pareto x_min must be positive, got {self.x_min}')
        elif self.family == 'pareto-log':
            if self.alpha != 3.0:
                raise TailModelError('pareto-log has tail index 3 by construction')
            if not self.A > 0:
                raise TailModelError(f'pareto-log A must be positive, got {self.A}')
            if self.x_min < math.e:
                raise TailModelError(f'pareto-log x_min must be at least e, got {self.x_min}')
            if self.atom_mass < 0:
                raise TailModelError('pareto-log tail exceeds 1 at x_min; raise x_min or lower A')
        elif self.family == 'gamma':
            if not (self.shape > 0 and self.rate > 0):
                raise TailModelError('gamma shape and rate must be positive')
        elif self.family == 'exponential':
            if not self.rate > 0:
                raise TailModelError('exponential rate must be positive')
        elif self.family == 'lognormal':
            if not self.sigma_ln > 0:
                raise TailModelError('lognormal sigma_ln must be positive')

    @classmethod
    def pareto(cls, alpha: float, x_min: float = 1.0) -> 'TailModel':
        return cls(family='pareto', alpha=float(alpha), x_min=float(x_min))

    @classmethod
    def pareto_log(cls, A: float, x_min: float = math.e) -> 'TailModel':
        return cls(family='pareto-log', alpha=3.0, A=float(A), x_min=float(x_min))

    @classmethod
    def gamma(cls, shape: float, rate: float = 1.0) -> 'TailModel':
        return cls(family='gamma', shape=float(shape), rate=float(rate))

    @classmethod
    def exponential(cls, rate: float = 1.0) -> 'TailModel':
        return cls(family='exponential', rate=float(rate))

    @classmethod
    def lognormal(cls, mu_ln: float, sigma_ln: float) -> 'TailModel':
        return cls(family='lognormal', mu_ln=float(mu_ln), sigma_ln=float(sigma_ln))

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> 'TailModel':
        if not isinstance(payload, dict):
            raise TailModelError('Tail model must be a JSON object')
        family = str(payload.get('family') or '').strip().lower().replace('_', '-')
        allowed = {
            'pareto': {'alpha', 'x_min'},
            'pareto-log': {'A', 'x_min'},
            'gamma': {'shape', 'rate'},
            'exponential': {'rate'},
            'lognormal': {'mu_ln', 'sigma_ln'},
        }
        if family not in allowed:
            raise TailModelError(f'Unknown family {payload.get("family")!r}')
        params = {key: value for key, value in payload.items() if key != 'family'}
        unknown = set(params) - allowed[family]
        if unknown:
            raise TailModelError(f'Unknown {family} parameter(s): {sorted(unknown)}')
        kwargs = {key: float(value) for key, value in params.items()}
        if family == 'pareto':
            return cls.pareto(**kwargs)
        if family == 'pareto-log':
            return cls.pareto_log(**kwargs)
        if family == 'gamma':
            return cls.gamma(**kwargs)
        if family == 'exponential':
            return cls.exponential(**kwargs)
        return cls.lognormal(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        if self.family == 'pareto':
            return {'family': 'pareto', 'alpha': self.alpha, 'x_min': self.x_min}
        if self.family == 'pareto-log':
            return {'family': 'pareto-log', 'A': self.A, 'x_min': self.x_min}
        if self.family == 'gamma':
            return {'family': 'gamma', 'shape': self.shape, 'rate': self.rate}
        if self.family == 'exponential':
            return {'family': 'exponential', 'rate': self.rate}
        return {'family': 'lognormal', 'mu_ln': self.mu_ln, 'sigma_ln': self.sigma_ln}

    @property
    def tail_index(self) -> float:
        if self.family in {'pareto', 'pareto-log'}:
            return self.alpha
        return math.inf

    @property
    def lower_endpoint(self) -> float:
        if self.family in {'pareto', 'pareto-log'}:
            return self.x_min
        return 0.0

    @property
    def atom_mass(self) -> float:
        # Mass of the pareto-log atom at x_min; zero for every other family.
        if self.family != 'pareto-log':
            return 0.0
        return 1.0 - self.A * self.x_min ** -3 * math.log(self.x_min)

    @property
    def mean(self) -> float:
        if self.family == 'pareto':
            if self.alpha <= 1:
                return math.inf
            return self.alpha * self.x_min / (self.alpha - 1)
        if self.family == 'pareto-log':
            x = self.x_min
            return x + self.A * (math.log(x) / (2 * x * x) + 1 / (4 * x * x))
        if self.family == 'gamma':
            return self.shape / self.rate
        if self.family == 'exponential':
            return 1.0 / self.rate
        return math.exp(self.mu_ln + self.sigma_ln ** 2 / 2)

    @property
    def variance(self) -> float:
        if self.family == 'pareto':
            if self.alpha <= 2:
                return math.inf
            a = self.alpha
            return self.x_min ** 2 * a / ((a - 1) ** 2 * (a - 2))
        if self.family == 'pareto-log':
            x = self.x_min
            second = x * x + 2 * self.A * (math.log(x) + 1) / x
            return second - self.mean ** 2
        if self.family == 'gamma':
            return self.shape / self.rate ** 2
        if self.family == 'exponential':
            return 1.0 / self.rate ** 2
        s2 = self.sigma_ln ** 2
        return (math.exp(s2) - 1) * math.exp(2 * self.mu_ln + s2)

    @property
    def third_moment_finite(self) -> bool:
        if self.family == 'pareto':
            return self.alpha > 3
        if self.family == 'pareto-log':
            return False
        return True

    def describe(self) -> str:
        params = ', '.join(f'{key}={value:g}' for key, value in self.to_dict().items() if key != 'family')
        return f'{self.family}({params})'


@dataclass
class DecoupledSample:
    values: np.ndarray
    model: TailModel
    seed: int | None = None
    stream_key: tuple[int, ...] = ()
    method: str = 'direct'

    @property
    def n_max(self) -> int:
        return int(self.values.shape[0])

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.values)


@dataclass
class FunctionalSample:
    tau: int | Capped
    n_visits: int
    running_max: np.ndarray
    threshold: float
    values: np.ndarray | None = None


@dataclass(frozen=True)
class PointMeasure:
    '''
    Atoms of a restricted Poisson random measure, sorted by time.

    mark_min is the mark truncation. position_floor, when set, is (drift, level) and
    only atoms with drift * t_k + j_k > level are present.
    '''

    tag: str
    params: dict[str, float]
    window: tuple[float, float]
    mark_min: float
    intensity: float
    times: np.ndarray
    marks: np.ndarray
    position_floor: tuple[float, float] | None = None
    bias_budget: float | None = None

    def __post_init__(self) -> None:
        if self.tag not in PRM_TAGS:
            raise ValueError(f'Unknown point measure tag {self.tag!r}')

    @property
    def count(self) -> int:
        return int(self.times.shape[0])

    def positions(self, drift: float = 0.0) -> np.ndarray:
        return drift * self.times + self.marks


@dataclass(frozen=True)
class ExtremalPath:
    '''
    Record-only representation of a nondecreasing cadlag path on [t_lo, t_hi].

    value(t) = max(initial_level, levels[last jump <= t], floor_slope * t + floor_intercept).
    '''

    t_lo: float
    t_hi: float
    jump_times: np.ndarray
    levels: np.ndarray
    initial_level: float
    drift: float = 0.0
    floor: tuple[float, float] | None = None
    has_past: bool = False
    atom_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    atom_positions: np.ndarray = field(default_factory=lambda: np.empty(0))

    def value(self, ts: float | np.ndarray) -> float | np.ndarray:
        grid = np.asarray(ts, dtype=float)
        idx = np.searchsorted(self.jump_times, grid, side='right') - 1
        safe_idx = np.clip(idx, 0, max(self.jump_times.shape[0] - 1, 0))
        if self.jump_times.shape[0]:
            jumped = np.where(idx >= 0, self.levels[safe_idx], -np.inf)
        else:
            jumped = np.full(grid.shape, -np.inf)
        result = np.maximum(jumped, self.initial_level)
        if self.floor is not None:
            slope, intercept = self.floor
            result = np.maximum(result, slope * grid + intercept)
        if np.ndim(ts) == 0:
            return float(result)
        return result


@dataclass(frozen=True)
class MarginalLaw:
    kind: str
    t: float
    alpha: float = math.nan
    mu: float = math.nan
    A: float = math.nan

    def __post_init__(self) -> None:
        if self.kind not in MARGINAL_KINDS:
            raise DomainError(f'Unknown marginal law {self.kind!r}; expected one of {MARGINAL_KINDS}')
        base = self.kind.replace('_inv', '')
        if base in {'X1', 'X2'} and not self.alpha > 0:
            raise DomainError(f'{self.kind} needs a positive alpha')
        if base == 'X2' and not self.alpha > 1:
            raise DomainError('X2 needs alpha > 1')
        if base in {'X2', 'X3', 'X4'} and not self.mu > 0:
            raise DomainError(f'{self.kind} needs a positive mu')
        if base == 'X4' and not self.A > 0:
            raise DomainError('X4 needs a positive A')
        if base == 'X1' and self.t < 0:
            raise DomainError('X1 is defined for t >= 0')
        if self.kind == 'X1_inv' and self.t <= 0:
            raise DomainError('X1_inv needs t > 0')

    @property
    def is_inverse(self) -> bool:
        return self.kind.endswith('_inv')

    @property
    def process(self) -> str:
        return self.kind.replace('_inv', '')

    def params(self) -> dict[str, float]:
        payload = {'t': self.t}
        for key in ('alpha', 'mu', 'A'):
            value = getattr(self, key)
            if not math.isnan(value):
                payload[key] = value
        return payload


@dataclass
class FigurePanel:
    '''
    Data behind one sample-path figure: the path on a grid, its jump records, the
    atoms as plotted, and the floor line when the process has one.
    '''

    process: str
    params: dict[str, float]
    path: ExtremalPath
    grid: np.ndarray
    values: np.ndarray
    floor_values: np.ndarray | None = None


@dataclass
class VerificationReport:
    test: str
    params: dict[str, Any]
    n: int
    ks: float | None
    bound: float | None
    tolerance: float | None
    verdict: str
    seed: int
    cap_fraction: float = 0.0
    runtime_ms: float = 0.0
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == 'pass'

    def to_json_dict(self, include_runtime: bool = False) -> dict[str, Any]:
        payload = {
            'test': self.test,
            'params': self.params,
            'N': self.n,
            'ks': self.ks,
            'bound': self.bound,
            'tolerance': self.tolerance,
            'verdict': self.verdict,
            'seed': self.seed,
            'cap_fraction': self.cap_fraction,
        }
        if include_runtime:
            payload['runtime_ms'] = round(self.runtime_ms, 3)
        if self.extras:
            payload['extras'] = self.extras
        return payload
