##########################################################################################
#
# Script name: utils.py
#
# Description: Shared helpers: env parsing, reproducible streams, and the ensemble runner.
#
##########################################################################################

import hashlib
import logging
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CHUNK, ENV_CHUNK, ENV_THREADS
from .models import Capped, Censored


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(__name__)


# ****************************************************************************************
# Functions
# ****************************************************************************************


def _is_truthy(value: str | None, default: bool = False) -> bool:
    if value is None:
        return default
    lowered = str(value).strip().lower()
    if lowered in {'1', 'true', 'yes', 'y', 'on'}:
        return True
    if lowered in {'0', 'false', 'no', 'n', 'off'}:
        return False
    return default


def _safe_env_int(
    name: str,
    default: int,
    minimum: int | None = None,
    maximum: int | None = None,
) -> int:
    raw_value = (os.getenv(name) or '').strip()
    try:
        value = int(raw_value)
    except ValueError:
        value = default
    if minimum is not None:
        value = max(minimum, value)
    if maximum is not None:
        value = min(maximum, value)
    return value


def stable_id(*parts: str) -> str:
    payload = '|'.join(part for part in parts if part)
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


def stream_tag(name: str) -> int:
    return int(stable_id(name)[:8], 16)


def make_rng(seed: int, *key: int) -> np.random.Generator:
    '''
    Counter-based stream for (seed, key). Distinct keys give independent streams.
    '''
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(part) for part in key))
    return np.random.Generator(np.random.Philox(sequence))


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        fallback = os.cpu_count() or 1
        return _safe_env_int(ENV_THREADS, default=fallback, minimum=1, maximum=256)
    return int(threads)


def resolve_chunk(chunk: int | None) -> int:
    if chunk is None or chunk <= 0:
        return _safe_env_int(ENV_CHUNK, default=DEFAULT_CHUNK, minimum=1, maximum=1 << 20)
    return int(chunk)


def format_float(value: float) -> str:
    # repr gives the shortest round-trip form and ignores locale.
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return repr(value)


# Per-replicate outcome codes stored by run_ensemble.
OUTCOME_VALUE = 0
OUTCOME_CAPPED = 1
OUTCOME_LEFT = 2
OUTCOME_RIGHT = 3


@dataclass
class EnsembleResult:
    values: np.ndarray
    outcomes: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def capped(self) -> int:
        return int(np.count_nonzero(self.outcomes == OUTCOME_CAPPED))

    @property
    def censored_left(self) -> int:
        return int(np.count_nonzero(self.outcomes == OUTCOME_LEFT))

    @property
    def censored_right(self) -> int:
        return int(np.count_nonzero(self.outcomes == OUTCOME_RIGHT))

    @property
    def lost(self) -> int:
        return int(np.count_nonzero(self.outcomes != OUTCOME_VALUE))

    @property
    def lost_fraction(self) -> float:
        if self.n == 0:
            return 0.0
        return self.lost / self.n

    def finite_values(self) -> np.ndarray:
        return self.values[self.outcomes == OUTCOME_VALUE]

    def ordered_values(self) -> np.ndarray:
        '''
        Values with lost replicates placed where they belong in the order: left-censored
        at -inf, capped and right-censored at +inf.
        '''
        placed = np.array(self.values, dtype=float, copy=True)
        if placed.ndim > 1:
            raise ValueError('ordered_values needs a one-column ensemble')
        placed[self.outcomes == OUTCOME_LEFT] = -np.inf
        placed[(self.outcomes == OUTCOME_CAPPED) | (self.outcomes == OUTCOME_RIGHT)] = np.inf
        return placed


def run_ensemble(
    worker: Callable[[np.random.Generator, int], float | Sequence[float] | Capped | Censored],
    n: int,
    seed: int,
    name: str,
    threads: int | None = None,
    chunk: int | None = None,
    width: int = 1,
) -> EnsembleResult:
    '''
    Run worker once per replicate on its own stream and collect the outputs.

    Replicate i always uses stream (seed, stream_tag(name), i) and writes slot i, so the
    result does not depend on the thread count or the chunk size. Capped and Censored
    outcomes are stored as NaN and counted. With width > 1 the worker returns that many
    values per replicate.
    '''
    if n < 1:
        raise ValueError('Ensemble size must be at least 1')
    tag = stream_tag(name)
    chunk_size = resolve_chunk(chunk)
    values = np.full(n if width == 1 else (n, width), np.nan)
    outcomes = np.zeros(n, dtype=np.int8)

    def _run_chunk(start: int) -> None:
        stop = min(n, start + chunk_size)
        for replicate in range(start, stop):
            outcome = worker(make_rng(seed, tag, replicate), replicate)
            if isinstance(outcome, Capped):
                outcomes[replicate] = OUTCOME_CAPPED
            elif isinstance(outcome, Censored):
                outcomes[replicate] = OUTCOME_LEFT if outcome.side == 'left' else OUTCOME_RIGHT
            elif width == 1:
                values[replicate] = float(outcome)
            else:
                values[replicate] = np.asarray(outcome, dtype=float)

    starts = list(range(0, n, chunk_size))
    workers = min(resolve_threads(threads), len(starts))
    log.debug('Ensemble %s: n=%d, chunks=%d, threads=%d', name, n, len(starts), workers)
    if workers <= 1:
        for start in starts:
            _run_chunk(start)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_run_chunk, starts))

    result = EnsembleResult(values=values, outcomes=outcomes)
    if result.lost:
        log.warning(
            'Ensemble %s lost %d of %d replicate(s) (capped=%d, censored_left=%d, censored_right=%d).',
            name,
            result.lost,
            n,
            result.capped,
            result.censored_left,
            result.censored_right,
        )
    return result
