##########################################################################################
#
# Script name: limits.py
#
# Description: Exact samplers for the limit extremal processes X1..X4 and their inverses,
#              built from restricted Poisson random measures, plus the closed-form
#              one-dimensional laws of all eight limits.
#
##########################################################################################

import logging
import math

import numpy as np

from .config import (
    DEFAULT_EPS,
    DEFAULT_GRID_POINTS,
    INVERSE_WINDOW_TAIL,
    LIMIT_PROCESSES,
    PRM_TAGS,
    REGIME_BY_TAG,
)
from .models import (
    BudgetError,
    Censored,
    DomainError,
    ExtremalPath,
    FigurePanel,
    InfiniteIntensity,
    MarginalLaw,
    PointMeasure,
    Regime,
    TailModel,
    WindowError,
)
from .tails import draw_tail_uniforms


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(__name__)

# Forward limit process for each prelimit regime; the inverse law appends _inv.
PROCESS_BY_REGIME = {Regime(tag): info.limit_process for tag, info in REGIME_BY_TAG.items()}

PRM_BY_PROCESS = {'X1': 'P1', 'X2': 'P2', 'X3': 'P3', 'X4': 'P2_3'}

# Window around an evaluation time used when sampling a forward marginal.
FORWARD_LOOKBACK = 1.0


# ****************************************************************************************
# Helpers
# ****************************************************************************************


def boundary_offset(A: float) -> float:
    '''
    (2/A)^(1/2): mark restriction of the boundary-regime measure and the floor offset of X4.
    '''
    if not A > 0:
        raise DomainError(f'A must be positive, got {A}')
    return math.sqrt(2.0 / A)


def _checked_window(window: tuple[float, float]) -> tuple[float, float]:
    try:
        t_lo, t_hi = (float(edge) for edge in window)
    except (TypeError, ValueError) as exc:
        raise WindowError(f'window must be a pair of numbers, got {window!r}') from exc
    if not (math.isfinite(t_lo) and math.isfinite(t_hi)):
        raise WindowError(f'window must be finite, got ({t_lo}, {t_hi})')
    if t_hi < t_lo:
        raise WindowError(f'window is inverted: t_hi={t_hi} < t_lo={t_lo}')
    return t_lo, t_hi


def _required(params: dict[str, float], key: str, owner: str) -> float:
    if key not in params:
        raise DomainError(f'{owner} needs parameter {key!r}')
    return float(params[key])


def _open_unit(rng: np.random.Generator) -> float:
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return float(u)


def law_from_params(process: str, t: float, params: dict[str, float]) -> MarginalLaw:
    base = process.replace('_inv', '')
    kwargs = {}
    if base in {'X1', 'X2'}:
        kwargs['alpha'] = _required(params, 'alpha', process)
    if base in {'X2', 'X3', 'X4'}:
        kwargs['mu'] = _required(params, 'mu', process)
    if base == 'X4':
        kwargs['A'] = _required(params, 'A', process)
    return MarginalLaw(kind=process, t=float(t), **kwargs)


# ****************************************************************************************
# Poisson random measures
# ****************************************************************************************


def _lebesgue_pieces(
    alpha: float,
    mark_min: float,
    t_lo: float,
    t_hi: float,
    drift: float,
    level: float,
) -> list[tuple[str, float, float, float]]:
    # Leb x nu_alpha restricted to j > max(mark_min, level - drift * s). Returns
    # (kind, start, stop, mass) pieces: 'sloped' where level - drift * s is the active
    # threshold, 'flat' where mark_min is.
    pieces: list[tuple[str, float, float, float]] = []
    if t_hi == t_lo:
        return pieces
    if drift > 0 and math.isfinite(level):
        switch = (level - mark_min) / drift if mark_min > 0 else level / drift
    else:
        switch = -math.inf
    if t_lo < switch:
        stop = min(t_hi, switch)
        near, far = level - drift * t_lo, level - drift * stop
        if not far > 0:
            raise InfiniteIntensity('position floor reaches zero inside the window')
        if alpha == 1.0:
            mass = math.log(near / far) / drift
        else:
            mass = (far ** (1.0 - alpha) - near ** (1.0 - alpha)) / (drift * (alpha - 1.0))
        pieces.append(('sloped', t_lo, stop, mass))
    start = max(t_lo, switch)
    if start < t_hi:
        if not mark_min > 0:
            raise InfiniteIntensity('mark truncation must be positive')
        pieces.append(('flat', start, t_hi, (t_hi - start) * mark_min ** -alpha))
    return pieces


def _lebesgue_times(
    pieces: list[tuple[str, float, float, float]],
    alpha: float,
    drift: float,
    level: float,
    w: np.ndarray,
) -> np.ndarray:
    times = np.empty(w.shape)
    offset = 0.0
    for index, (kind, start, stop, mass) in enumerate(pieces):
        last = index == len(pieces) - 1
        inside = (w > offset) & ((w <= offset + mass) | last)
        local = np.minimum(w[inside] - offset, mass)
        if kind == 'flat':
            times[inside] = start + (stop - start) * local / mass
        else:
            near = level - drift * start
            if alpha == 1.0:
                gap = near * np.exp(-drift * local)
            else:
                gap = (near ** (1.0 - alpha) + drift * (alpha - 1.0) * local) ** (1.0 / (1.0 - alpha))
            times[inside] = np.clip((level - gap) / drift, start, stop)
        offset += mass
    return times


def sample_prm(
    tag: str,
    params: dict[str, float],
    window: tuple[float, float],
    truncation: float | None,
    rng: np.random.Generator,
    position_floor: tuple[float, float] | None = None,
    bias_budget: float | None = None,
) -> PointMeasure:
    '''
    Atoms of a Poisson random measure restricted to the window and above the truncation.

    tag selects the mean measure: P1 (theta x nu_alpha on [0, inf) x (0, inf]), P2
    (Leb x nu_alpha), P3 (e^(mu x) dx x e^(-y) dy) or P2_3 (Leb x nu_3 restricted to
    marks above (2/A)^(1/2)). With position_floor = (drift, level) only atoms with
    drift * t_k + j_k > level are kept. Draws the count, then one uniform per time and
    one per mark.
    '''
    if tag not in PRM_TAGS:
        raise ValueError(f'Unknown point measure tag {tag!r}; expected one of {PRM_TAGS}')
    t_lo, t_hi = _checked_window(window)
    drift, level = position_floor if position_floor is not None else (0.0, -math.inf)
    drift, level = float(drift), float(level)
    if drift < 0:
        raise ValueError('position floor drift must be nonnegative')
    if drift > 0 and tag in {'P1', 'P3'}:
        raise ValueError(f'{tag} supports a flat position floor only')

    if tag == 'P3':
        mu = _required(params, 'mu', tag)
        if not mu > 0:
            raise DomainError(f'P3 needs a positive mu, got {mu}')
        mark_min = max(-math.inf if truncation is None else float(truncation), level)
        if not math.isfinite(mark_min):
            raise InfiniteIntensity('P3 needs a finite lower mark y_min')
        span = math.expm1(mu * (t_hi - t_lo))
        intensity = math.exp(mu * t_lo - mark_min) * span / mu
        count = int(rng.poisson(intensity))
        times = t_lo + np.log1p(draw_tail_uniforms(rng, count) * span) / mu
        marks = mark_min - np.log(draw_tail_uniforms(rng, count))
    elif tag == 'P1':
        alpha = _required(params, 'alpha', tag)
        if t_lo < 0:
            raise WindowError(f'P1 lives on [0, inf); window starts at {t_lo}')
        mark_min = max(0.0 if truncation is None else float(truncation), level)
        if not mark_min > 0:
            raise InfiniteIntensity('P1 needs a positive mark truncation j_min')
        spread = t_hi * t_hi - t_lo * t_lo
        intensity = spread / 2.0 * mark_min ** -alpha
        count = int(rng.poisson(intensity))
        times = np.sqrt(t_lo * t_lo + draw_tail_uniforms(rng, count) * spread)
        marks = mark_min * draw_tail_uniforms(rng, count) ** (-1.0 / alpha)
    else:
        if tag == 'P2':
            alpha = _required(params, 'alpha', tag)
            mark_min = 0.0 if truncation is None else float(truncation)
        else:
            alpha = 3.0
            restriction = boundary_offset(_required(params, 'A', tag))
            mark_min = restriction if truncation is None else max(float(truncation), restriction)
        if drift == 0:
            mark_min = max(mark_min, level)
        pieces = _lebesgue_pieces(alpha, mark_min, t_lo, t_hi, drift, level)
        intensity = sum(piece[3] for piece in pieces)
        count = int(rng.poisson(intensity))
        times = _lebesgue_times(pieces, alpha, drift, level, draw_tail_uniforms(rng, count) * intensity)
        thresholds = np.maximum(mark_min, level - drift * times) if drift > 0 else np.full(count, mark_min)
        marks = thresholds * draw_tail_uniforms(rng, count) ** (-1.0 / alpha)

    order = np.argsort(times, kind='stable')
    log.debug('%s on [%g, %g]: intensity %.6g, %d atom(s)', tag, t_lo, t_hi, intensity, count)
    return PointMeasure(
        tag=tag,
        params=dict(params),
        window=(t_lo, t_hi),
        mark_min=mark_min,
        intensity=float(intensity),
        times=times[order],
        marks=marks[order],
        position_floor=position_floor,
        bias_budget=bias_budget,
    )


# ****************************************************************************************
# Extremal paths
# ****************************************************************************************


def build_extremal_path(
    points: PointMeasure,
    drift_slope: float,
    initial_level: float,
    floor: tuple[float, float] | None = None,
    has_past: bool = False,
    window: tuple[float, float] | None = None,
) -> ExtremalPath:
    '''
    path(t) = max(initial_level, sup_{t_k <= t} (drift_slope * t_k + j_k), floor(t)).

    Only record-breaking atoms are stored. Atoms sharing a time keep the largest
    position.
    '''
    t_lo, t_hi = _checked_window(window if window is not None else points.window)
    times = np.asarray(points.times, dtype=float)
    positions = drift_slope * times + np.asarray(points.marks, dtype=float)

    order = np.lexsort((-positions, times))
    times, positions = times[order], positions[order]
    first_of_time = np.ones(times.shape[0], dtype=bool)
    first_of_time[1:] = times[1:] != times[:-1]
    unique_times, unique_positions = times[first_of_time], positions[first_of_time]

    if unique_times.shape[0]:
        running = np.maximum.accumulate(unique_positions)
        prior = np.maximum(initial_level, np.concatenate(([-np.inf], running[:-1])))
        keep = unique_positions > prior
        if floor is not None:
            slope, intercept = floor
            keep &= unique_positions > slope * unique_times + intercept
    else:
        keep = np.zeros(0, dtype=bool)

    return ExtremalPath(
        t_lo=t_lo,
        t_hi=t_hi,
        jump_times=unique_times[keep],
        levels=unique_positions[keep],
        initial_level=float(initial_level),
        drift=float(drift_slope),
        floor=floor,
        has_past=has_past,
        atom_times=times,
        atom_positions=positions,
    )


def truncation_level(process: str, params: dict[str, float], t_lo: float, eps: float) -> float | None:
    '''
    Mark truncation keeping the pointwise bias of a path started at t_lo below eps.
    '''
    if not 0 < eps < 1:
        raise BudgetError(f'bias budget must lie in (0, 1), got {eps}')
    log_inv = math.log(1.0 / eps)
    if process == 'X1':
        alpha = _required(params, 'alpha', process)
        return (t_lo * t_lo / (2.0 * log_inv)) ** (1.0 / alpha)
    if process == 'X2':
        alpha, mu = _required(params, 'alpha', process), _required(params, 'mu', process)
        return (mu * (alpha - 1.0) * log_inv) ** (-1.0 / (alpha - 1.0))
    if process == 'X3':
        mu = _required(params, 'mu', process)
        return mu * t_lo - math.log(mu * log_inv)
    return None


def boundary_past_horizon(mu: float, A: float, eps: float) -> float:
    '''
    L with (2 mu)^-1 (mu L + (2/A)^(1/2))^-2 <= eps: atoms older than t_lo - L matter with
    probability at most eps.
    '''
    if not 0 < eps < 1:
        raise BudgetError(f'bias budget must lie in (0, 1), got {eps}')
    return max(0.0, ((2.0 * mu * eps) ** -0.5 - boundary_offset(A)) / mu)


def sample_limit_path(
    process: str,
    params: dict[str, float],
    window: tuple[float, float],
    eps: float,
    rng: np.random.Generator,
    min_level: float | None = None,
    past_horizon: bool = False,
) -> ExtremalPath:
    '''
    One path of X1..X4 on the window with pointwise truncation bias at most eps.

    The value at t_lo is an exact draw from the marginal law (the atoms up to t_lo are
    independent of the later ones), and fresh atoms cover (t_lo, t_hi]. With min_level
    set, atoms that cannot lift the path above min_level are not generated.
    past_horizon replaces the initial draw of X4 by atoms on [t_lo - L, t_hi].
    '''
    if process not in LIMIT_PROCESSES:
        raise ValueError(f'Unknown limit process {process!r}; expected one of {LIMIT_PROCESSES}')
    if not 0 < eps < 1:
        raise BudgetError(f'bias budget must lie in (0, 1), got {eps}')
    t_lo, t_hi = _checked_window(window)
    if process == 'X1' and t_lo <= 0:
        raise WindowError(f'X1 needs t_lo > 0, got {t_lo}')
    if past_horizon and process != 'X4':
        raise ValueError('past_horizon is only available for X4')

    law = law_from_params(process, t_lo, params)
    drift = law.mu if process in {'X2', 'X4'} else 0.0
    position_floor = None if min_level is None else (drift, float(min_level))
    truncation = truncation_level(process, params, t_lo, eps)
    floor = (law.mu, boundary_offset(law.A)) if process == 'X4' else None

    if past_horizon:
        horizon = boundary_past_horizon(law.mu, law.A, eps)
        log.debug('X4 past horizon %.6g before t_lo=%g', horizon, t_lo)
        points = sample_prm(
            'P2_3',
            {'A': law.A},
            (t_lo - horizon, t_hi),
            None,
            rng,
            position_floor=position_floor,
            bias_budget=eps,
        )
        return build_extremal_path(points, drift, -math.inf, floor, has_past=True, window=(t_lo, t_hi))

    initial = float(marginal_quantile(law, _open_unit(rng)))
    prm_params = {'A': law.A} if process == 'X4' else {key: params[key] for key in law.params() if key != 't'}
    points = sample_prm(
        PRM_BY_PROCESS[process],
        prm_params,
        (t_lo, t_hi),
        truncation,
        rng,
        position_floor=position_floor,
        bias_budget=eps,
    )
    return build_extremal_path(points, drift, initial, floor, has_past=True)


def generalized_inverse(path: ExtremalPath, levels: float | np.ndarray) -> list[float | Censored]:
    '''
    inf{t: path(t) > y} for each level y, read off the jump records and the floor.

    A path already above y at t_lo gives t_lo, or Censored('left') when the path carries
    a summarized past. A level never exceeded inside the window gives Censored('right').
    '''
    grid = np.atleast_1d(np.asarray(levels, dtype=float))
    if np.any(np.diff(grid) < 0):
        raise ValueError('levels must be sorted in nondecreasing order')
    start_value = path.value(path.t_lo)
    first_above = np.searchsorted(path.levels, grid, side='right')
    results: list[float | Censored] = []
    for level, index in zip(grid, first_above):
        if start_value > level:
            results.append(Censored('left') if path.has_past else path.t_lo)
            continue
        crossing = float(path.jump_times[index]) if index < path.levels.shape[0] else math.inf
        if path.floor is not None and path.floor[0] > 0:
            slope, intercept = path.floor
            crossing = min(crossing, (level - intercept) / slope)
        if crossing > path.t_hi:
            results.append(Censored('right'))
        else:
            results.append(max(crossing, path.t_lo))
    return results


# ****************************************************************************************
# Marginal laws
# ****************************************************************************************


def law_for_regime(regime: Regime | str, model: TailModel, t: float, statistic: str = 'max') -> MarginalLaw:
    '''
    Limit law of the normalized prelimit statistic of a model in the given regime.
    '''
    regime = Regime.parse(regime)
    if statistic not in {'max', 'tau'}:
        raise ValueError(f'Unknown statistic {statistic!r}')
    process = PROCESS_BY_REGIME[regime]
    kind = process if statistic == 'max' else f'{process}_inv'
    if process == 'X1':
        return MarginalLaw(kind=kind, t=t, alpha=model.tail_index)
    if process == 'X2':
        return MarginalLaw(kind=kind, t=t, alpha=model.tail_index, mu=model.mean)
    if process == 'X3':
        return MarginalLaw(kind=kind, t=t, mu=model.mean)
    return MarginalLaw(kind=kind, t=t, mu=model.mean, A=model.A)


def marginal_atom(law: MarginalLaw) -> tuple[float, float] | None:
    '''
    (location, mass) of the atom of X4(t) or X4_inv(t); None for the continuous laws.
    '''
    if law.kind == 'X4':
        return law.mu * law.t + boundary_offset(law.A), math.exp(-law.A / (4.0 * law.mu))
    if law.kind == 'X4_inv':
        return (law.t - boundary_offset(law.A)) / law.mu, math.exp(-law.A / (4.0 * law.mu))
    return None


def _as_output(y: float | np.ndarray, result: np.ndarray) -> float | np.ndarray:
    if np.ndim(y) == 0:
        return float(result)
    return result


def marginal_cdf(law: MarginalLaw, y: float | np.ndarray) -> float | np.ndarray:
    '''
    P{X(t) <= y} for the law's process, closed form, support cutoffs included.
    '''
    grid = np.asarray(y, dtype=float)
    t, alpha, mu = law.t, law.alpha, law.mu
    with np.errstate(divide='ignore', over='ignore', invalid='ignore', under='ignore'):
        if law.kind == 'X1':
            safe = np.where(grid > 0, grid, 1.0)
            result = np.where(grid > 0, np.exp(-t * t * safe ** -alpha / 2.0), 0.0)
        elif law.kind == 'X2':
            gap = grid - mu * t
            safe = np.where(gap > 0, gap, 1.0)
            result = np.where(gap > 0, np.exp(-1.0 / (mu * (alpha - 1.0) * safe ** (alpha - 1.0))), 0.0)
        elif law.kind == 'X3':
            result = np.exp(-np.exp(mu * t - grid) / mu)
        elif law.kind == 'X4':
            location, _ = marginal_atom(law)
            gap = np.where(grid >= location, grid - mu * t, 1.0)
            result = np.where(grid >= location, np.exp(-1.0 / (2.0 * mu * gap * gap)), 0.0)
        elif law.kind == 'X1_inv':
            safe = np.where(grid > 0, grid, 0.0)
            result = np.where(grid > 0, -np.expm1(-t ** -alpha * safe * safe / 2.0), 0.0)
        elif law.kind == 'X2_inv':
            gap = t - mu * grid
            safe = np.where(gap > 0, gap, 1.0)
            result = np.where(gap > 0, -np.expm1(-1.0 / (mu * (alpha - 1.0) * safe ** (alpha - 1.0))), 1.0)
        elif law.kind == 'X3_inv':
            result = -np.expm1(-np.exp(mu * grid - t) / mu)
        else:
            edge, _ = marginal_atom(law)
            gap = np.where(grid < edge, t - mu * grid, 1.0)
            result = np.where(grid < edge, -np.expm1(-1.0 / (2.0 * mu * gap * gap)), 1.0)
        result = np.where(np.isposinf(grid), 1.0, np.where(np.isneginf(grid), 0.0, result))
    return _as_output(y, result)


def marginal_cdf_left(law: MarginalLaw, y: float | np.ndarray) -> float | np.ndarray:
    '''
    P{X(t) < y}. Differs from marginal_cdf only at the atom of X4 and X4_inv.
    '''
    atom = marginal_atom(law)
    result = np.asarray(marginal_cdf(law, y), dtype=float)
    if atom is not None:
        location, mass = atom
        result = np.where(np.asarray(y, dtype=float) == location, np.maximum(result - mass, 0.0), result)
    return _as_output(y, result)


def marginal_quantile(law: MarginalLaw, p: float | np.ndarray) -> float | np.ndarray:
    '''
    inf{y: P{X(t) <= y} >= p} for p in (0, 1), by closed-form inversion.
    '''
    probs = np.asarray(p, dtype=float)
    if np.any(~((probs > 0) & (probs < 1))):
        raise DomainError('marginal_quantile needs p in (0, 1)')
    t, alpha, mu = law.t, law.alpha, law.mu
    with np.errstate(divide='ignore', over='ignore'):
        if law.is_inverse:
            hazard = -np.log1p(-probs)
        else:
            hazard = -np.log(probs)
        if law.kind == 'X1':
            result = (t * t / (2.0 * hazard)) ** (1.0 / alpha)
        elif law.kind == 'X2':
            result = mu * t + (mu * (alpha - 1.0) * hazard) ** (-1.0 / (alpha - 1.0))
        elif law.kind == 'X3':
            result = mu * t - np.log(mu * hazard)
        elif law.kind == 'X4':
            location, mass = marginal_atom(law)
            result = np.where(probs <= mass, location, mu * t + (2.0 * mu * hazard) ** -0.5)
        elif law.kind == 'X1_inv':
            result = np.sqrt(2.0 * t ** alpha * hazard)
        elif law.kind == 'X2_inv':
            result = (t - (mu * (alpha - 1.0) * hazard) ** (-1.0 / (alpha - 1.0))) / mu
        elif law.kind == 'X3_inv':
            result = (t + np.log(mu * hazard)) / mu
        else:
            edge, mass = marginal_atom(law)
            result = np.where(probs >= 1.0 - mass, edge, (t - (2.0 * mu * hazard) ** -0.5) / mu)
    return _as_output(p, np.asarray(result, dtype=float))


# ****************************************************************************************
# Sampling one marginal through a path
# ****************************************************************************************


def marginal_sampling_plan(law: MarginalLaw) -> tuple[str, tuple[float, float], float | None]:
    '''
    (process, window, min_level) for drawing the law's value from one simulated path.

    Forward laws read the path at t after a short lead-in. Inverse laws use a window
    spanning all but INVERSE_WINDOW_TAIL of each tail, and only atoms that can lift the
    path above the level t are generated.
    '''
    process = law.process
    if not law.is_inverse:
        if process == 'X1':
            return process, (law.t / 2.0, law.t), None
        return process, (law.t - FORWARD_LOOKBACK, law.t), None
    low, high = marginal_quantile(law, np.array([INVERSE_WINDOW_TAIL, 1.0 - INVERSE_WINDOW_TAIL]))
    return process, (float(low), float(high) + FORWARD_LOOKBACK), law.t


def sample_marginal_value(
    law: MarginalLaw,
    rng: np.random.Generator,
    eps: float = DEFAULT_EPS,
) -> float | Censored:
    '''
    One draw of X(t) or X_inv(t) taken from a simulated path, not from the closed form.
    '''
    if law.kind == 'X1' and law.t == 0:
        return 0.0
    process, window, min_level = marginal_sampling_plan(law)
    params = {key: value for key, value in law.params().items() if key != 't'}
    path = sample_limit_path(process, params, window, eps, rng, min_level=min_level)
    if not law.is_inverse:
        return float(path.value(law.t))
    return generalized_inverse(path, law.t)[0]


def figure_panel(
    process: str,
    params: dict[str, float],
    window: tuple[float, float],
    rng: np.random.Generator,
    grid_points: int = DEFAULT_GRID_POINTS,
    eps: float = DEFAULT_EPS,
) -> FigurePanel:
    '''
    Sample-path figure data: the path on an even grid plus the atoms (t_k, j_k) for X1 and
    X3 or (t_k, mu t_k + j_k) for X2 and X4, and the floor line for X4.
    '''
    if grid_points < 2:
        raise ValueError('grid_points must be at least 2')
    path = sample_limit_path(process, params, window, eps, rng)
    if path.t_hi > path.t_lo:
        grid = np.linspace(path.t_lo, path.t_hi, grid_points)
    else:
        grid = np.empty(0)
    values = np.asarray(path.value(grid), dtype=float)
    floor_values = None
    if path.floor is not None:
        slope, intercept = path.floor
        floor_values = slope * grid + intercept
    return FigurePanel(
        process=process,
        params=dict(params),
        path=path,
        grid=grid,
        values=values,
        floor_values=floor_values,
    )
