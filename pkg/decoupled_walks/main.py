##########################################################################################
#
# Script name: main.py
#
# Description: CLI entrypoint for sampling decoupled walks and limit paths, running the
#              verification suite, and printing normalizing sequences.
#
##########################################################################################

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Any

import yaml

from .config import (
    CONFIDENCE,
    DEFAULT_EPS,
    DEFAULT_GRID_POINTS,
    DEFAULT_SEED,
    ENV_LOG_FILE,
    LIMIT_PROCESSES,
    MARGINAL_KINDS,
    REGIME_BY_TAG,
)
from .export import write_ensemble_dump, write_limit_panel, write_report, write_walk_dump
from .limits import figure_panel
from .models import ConfigError, Error, Regime, TailModel, VerificationReport
from .tails import (
    a_m_regime3,
    a_regime4,
    classify_regime,
    m_regime3_expansion,
    normal_quantile_upper,
    quantile_expansion,
    solve_a_regime1,
    solve_a_regime2,
    tail_prob,
)
from .utils import format_float, make_rng, stream_tag
from .verify import (
    VERDICT_ABORTED,
    VERDICT_PASS,
    verify_atom_mass,
    verify_fast_vs_direct,
    verify_large_deviation,
    verify_limit_marginal,
    verify_prelimit_convergence,
    verify_renewal,
    verify_tau_square_exponential,
)
from .walks import METHODS, STATISTICS, coupled_functionals, statistic_ensemble


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(os.path.basename(sys.argv[0]))
log.setLevel(logging.DEBUG)
log.propagate = False
formatter = logging.Formatter(
    '%(asctime)-15s [%(funcName)25s:%(lineno)-5s] %(levelname)-8s %(message)s'
)

# File handler for logging
fh = logging.FileHandler(os.getenv(ENV_LOG_FILE) or 'decoupled_walks.log', mode='w')
fh.setLevel(logging.DEBUG)
fh.setFormatter(formatter)
if not any(isinstance(handler, logging.FileHandler) for handler in log.handlers):
    log.addHandler(fh)

root_log = logging.getLogger()
root_log.setLevel(logging.INFO)
if not any(isinstance(handler, logging.FileHandler) for handler in root_log.handlers):
    root_log.addHandler(fh)

# Do not emit logging-internal tracebacks to stderr in production runs.
logging.raiseExceptions = False

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2
EXIT_ABORTED = 3

SAMPLE_COMMANDS = ('sample-walk', 'sample-limit', 'normalize')
VERIFY_COMMANDS = (
    'verify-marginal',
    'verify-prelimit',
    'verify-ld',
    'verify-tau-exp',
    'verify-renewal',
    'verify-fast-direct',
    'verify-atom',
)
COMMANDS = SAMPLE_COMMANDS + VERIFY_COMMANDS

REPORT_FILE = 'report.json'


# ****************************************************************************************
# Run configuration
# ****************************************************************************************


@dataclass
class RunConfig:
    '''
    One validated run. Every field can come from the JSON run file or a flag.
    '''

    command: str
    model: TailModel | None = None
    regime: str | None = None
    v: float | None = None
    v_grid: list[float] = field(default_factory=list)
    n_grid: list[int] = field(default_factory=lambda: [1, 5, 20])
    t: float | None = None
    y: float = 2.0
    n: int | None = None
    seed: int = DEFAULT_SEED
    eps: float = DEFAULT_EPS
    window: tuple[float, float] | None = None
    out: str | None = None
    threads: int = 0
    statistic: str = 'max'
    method: str = 'auto'
    n_cap: int | None = None
    grid_points: int = DEFAULT_GRID_POINTS
    confidence: float = CONFIDENCE
    alpha: float | None = None
    mu: float | None = None
    A: float | None = None


CONFIG_KEYS = {item.name for item in fields(RunConfig)}


def _number_list(value: Any, key: str, cast: type) -> list:
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(',') if part.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [value]
    try:
        return [cast(part) for part in parts]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'{key} must be a list of numbers, got {value!r}') from exc


def _scalar(value: Any, key: str, cast: type) -> Any:
    if value is None:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'{key} must be a {cast.__name__}, got {value!r}') from exc


def _load_model(value: Any) -> TailModel | None:
    if value is None or isinstance(value, TailModel):
        return value
    if isinstance(value, str):
        text = value.strip()
        if not text.startswith('{'):
            model_path = Path(text)
            if not model_path.is_file():
                raise ConfigError(f'--model is neither JSON nor a readable file: {text!r}')
            text = model_path.read_text(encoding='utf-8')
        try:
            value = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f'Invalid model JSON: {exc}') from exc
    try:
        return TailModel.from_dict(value)
    except Error as exc:
        raise ConfigError(f'Invalid model: {exc}') from exc


def load_run_file(path: str) -> dict[str, Any]:
    '''
    Read one run object from a JSON (or YAML) file. Dashes in keys become underscores.
    '''
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            payload = yaml.safe_load(handle) or {}
    except OSError as exc:
        raise ConfigError(f'Cannot read run config {path}: {exc}') from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f'Run config {path} is not valid JSON/YAML: {exc}') from exc
    if not isinstance(payload, dict):
        raise ConfigError(f'Run config {path} must hold a single object')
    return {str(key).replace('-', '_'): value for key, value in payload.items()}


def build_run_config(command: str, file_values: dict[str, Any], flag_values: dict[str, Any]) -> RunConfig:
    '''
    Merge file values with flags (flags win), reject unknown keys, and validate.
    '''
    merged = dict(file_values)
    file_command = merged.pop('command', None)
    if file_command is not None and file_command != command:
        raise ConfigError(f'Run config is for {file_command!r}, not {command!r}')
    merged.update({key: value for key, value in flag_values.items() if value is not None})
    unknown = set(merged) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f'Unknown run config key(s): {sorted(unknown)}')
    if command not in COMMANDS:
        raise ConfigError(f'Unknown command {command!r}')

    config = RunConfig(command=command)
    config.model = _load_model(merged.get('model'))
    config.regime = _scalar(merged.get('regime'), 'regime', str)
    config.v = _scalar(merged.get('v'), 'v', float)
    config.t = _scalar(merged.get('t'), 't', float)
    config.n = _scalar(merged.get('n'), 'n', int)
    config.n_cap = _scalar(merged.get('n_cap'), 'n_cap', int)
    config.out = _scalar(merged.get('out'), 'out', str)
    for key in ('alpha', 'mu', 'A'):
        setattr(config, key, _scalar(merged.get(key), key, float))
    for key in ('y', 'eps', 'confidence'):
        if key in merged:
            setattr(config, key, _scalar(merged[key], key, float))
    for key in ('seed', 'threads', 'grid_points'):
        if key in merged:
            setattr(config, key, _scalar(merged[key], key, int))
    for key in ('statistic', 'method'):
        if key in merged:
            setattr(config, key, str(merged[key]))
    if 'v_grid' in merged:
        config.v_grid = _number_list(merged['v_grid'], 'v_grid', float)
    if 'n_grid' in merged:
        config.n_grid = _number_list(merged['n_grid'], 'n_grid', int)
    if merged.get('window') is not None:
        edges = _number_list(merged['window'], 'window', float)
        if len(edges) != 2:
            raise ConfigError(f'window needs two numbers, got {merged["window"]!r}')
        config.window = (edges[0], edges[1])

    if config.n is not None and config.n < 1:
        raise ConfigError('n must be at least 1')
    if config.n_cap is not None and config.n_cap < 1:
        raise ConfigError('n_cap must be at least 1')
    if config.seed < 0:
        raise ConfigError('seed must be nonnegative')
    if config.threads < 0:
        raise ConfigError('threads must be nonnegative (0 = auto)')
    if not 0 < config.eps < 1:
        raise ConfigError('eps must lie in (0, 1)')
    if not 0 < config.confidence < 1:
        raise ConfigError('confidence must lie in (0, 1)')
    if config.grid_points < 2:
        raise ConfigError('grid_points must be at least 2')
    if config.statistic not in STATISTICS:
        raise ConfigError(f'statistic must be one of {STATISTICS}')
    if config.method not in METHODS:
        raise ConfigError(f'method must be one of {METHODS}')
    if any(not math.isfinite(value) for value in config.v_grid):
        raise ConfigError('v_grid must be finite')
    return config


def _require(config: RunConfig, *keys: str) -> None:
    missing = [key for key in keys if getattr(config, key) in (None, [])]
    if missing:
        raise ConfigError(f'{config.command} needs: {", ".join(missing)}')


def _threads(config: RunConfig) -> int | None:
    return config.threads or None


def _prelimit_regime(config: RunConfig) -> Regime:
    if config.regime is None:
        return classify_regime(config.model)
    try:
        return Regime.parse(config.regime)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _limit_params(config: RunConfig, process: str) -> dict[str, float]:
    # Explicit alpha / mu / A win; anything missing is read off the model.
    base = process.replace('_inv', '')
    params: dict[str, float] = {}
    needed = {'X1': ('alpha',), 'X2': ('alpha', 'mu'), 'X3': ('mu',), 'X4': ('mu', 'A')}[base]
    for key in needed:
        value = getattr(config, key)
        if value is None and config.model is not None:
            value = {'alpha': config.model.tail_index, 'mu': config.model.mean, 'A': config.model.A}[key]
        if value is None:
            raise ConfigError(f'{process} needs {key} (flag --{key} or --model)')
        params[key] = float(value)
    return params


def _limit_process(config: RunConfig, allowed: tuple[str, ...]) -> str:
    process = config.regime or ''
    if process not in allowed:
        raise ConfigError(f'--regime must be one of {allowed} for {config.command}, got {config.regime!r}')
    return process


# ****************************************************************************************
# Commands
# ****************************************************************************************


def cmd_sample_walk(config: RunConfig) -> int:
    '''
    Without v: one coupled path of length n with its functionals at threshold t.
    With v: n normalized prelimit statistics and their sidecar.
    '''
    _require(config, 'model', 't', 'n', 'out')
    if config.v is None:
        rng = make_rng(config.seed, stream_tag('sample-walk'), 0)
        sample = coupled_functionals(
            config.model, config.t, rng, n_max=config.n, n_cap=config.n_cap, method=config.method
        )
        log.info('tau_hat(%g)=%s, N_hat(%g)=%d', config.t, sample.tau, config.t, sample.n_visits)
        write_walk_dump(config.out, sample, config.model, config.seed, (stream_tag('sample-walk'), 0))
        return EXIT_PASS

    regime = _prelimit_regime(config)
    ensemble = statistic_ensemble(
        config.model,
        regime,
        config.v,
        config.t,
        config.n,
        config.seed,
        config.statistic,
        n_cap=config.n_cap,
        threads=_threads(config),
        method=config.method,
    )
    meta = {
        'model': config.model.to_dict(),
        'regime': regime.value,
        'statistic': config.statistic,
        'v': config.v,
        't': config.t,
        'seed': config.seed,
        'n_cap': config.n_cap,
    }
    write_ensemble_dump(config.out, ensemble, meta)
    return EXIT_PASS


def cmd_sample_limit(config: RunConfig) -> int:
    '''
    Figure data for one limit path: path.csv, jumps.csv, atoms.csv and meta.json.
    '''
    _require(config, 'regime', 'window', 'out')
    process = _limit_process(config, LIMIT_PROCESSES)
    params = _limit_params(config, process)
    rng = make_rng(config.seed, stream_tag(f'sample-limit|{process}'), 0)
    panel = figure_panel(process, params, config.window, rng, grid_points=config.grid_points, eps=config.eps)
    write_limit_panel(config.out, panel, {'seed': config.seed, 'eps': config.eps})
    return EXIT_PASS


def _run_verification(config: RunConfig) -> VerificationReport:
    threads = _threads(config)
    if config.command == 'verify-marginal':
        _require(config, 'regime', 't', 'n')
        process = _limit_process(config, MARGINAL_KINDS)
        return verify_limit_marginal(
            process,
            _limit_params(config, process),
            config.t,
            config.n,
            config.seed,
            eps=config.eps,
            threads=threads,
            confidence=config.confidence,
        )
    if config.command == 'verify-prelimit':
        _require(config, 'model', 't', 'v_grid', 'n')
        return verify_prelimit_convergence(
            config.model,
            _prelimit_regime(config),
            config.t,
            config.v_grid,
            config.n,
            config.seed,
            n_cap=config.n_cap,
            statistic=config.statistic,
            threads=threads,
            method=config.method,
            confidence=config.confidence,
        )
    if config.command == 'verify-ld':
        _require(config, 'model', 't', 'v', 'n')
        return verify_large_deviation(config.model, config.t, config.y, config.v, config.n, config.seed, threads=threads)
    if config.command == 'verify-tau-exp':
        _require(config, 't', 'n')
        params = _limit_params(config, 'X1_inv')
        return verify_tau_square_exponential(
            params['alpha'],
            config.t,
            config.n,
            config.seed,
            eps=config.eps,
            threads=threads,
            confidence=config.confidence,
        )
    if config.command == 'verify-renewal':
        _require(config, 'model', 't', 'n')
        return verify_renewal(config.model, config.t, config.n, config.seed, threads=threads)
    if config.command == 'verify-fast-direct':
        _require(config, 'model', 'n')
        return verify_fast_vs_direct(
            config.model,
            config.n_grid,
            config.n,
            config.seed,
            threads=threads,
            confidence=config.confidence,
        )
    _require(config, 't', 'n')
    params = _limit_params(config, 'X4')
    return verify_atom_mass(params['A'], params['mu'], config.t, config.n, config.seed, eps=config.eps, threads=threads)


def cmd_verify(config: RunConfig) -> int:
    '''
    Run one verification, write its report, and map the verdict to an exit code.
    '''
    report = _run_verification(config)
    if config.out:
        target = Path(config.out)
        if target.suffix != '.json':
            target = target / REPORT_FILE
        write_report(target, report)
    if report.verdict == VERDICT_PASS:
        return EXIT_PASS
    if report.verdict == VERDICT_ABORTED:
        return EXIT_ABORTED
    return EXIT_FAIL


def normalization_rows(model: TailModel, regime: Regime, v_grid: list[float]) -> list[dict[str, float]]:
    '''
    Normalizing sequences over a v grid, with the residual of the defining equation or
    the gap to the log-expansion of the Gaussian centering.
    '''
    rows = []
    for v in v_grid:
        row = {'v': v}
        if regime in {Regime.R1_HEAVY_NO_CENTER, Regime.R1_HEAVY_CENTERED}:
            a = solve_a_regime1(model, v)
            row.update({'a': a, 'residual': v * v * tail_prob(model, a) - 1.0})
        elif regime == Regime.R2_INTERMEDIATE:
            a = solve_a_regime2(model, v)
            row.update({'a': a, 'residual': v * a * tail_prob(model, a) - 1.0})
        elif regime == Regime.R3_GAUSSIAN:
            sigma = math.sqrt(model.variance)
            a, m = a_m_regime3(model.mean, sigma, v, drift_scaled=False)
            expansion = m_regime3_expansion(model.mean, sigma, v, drift_scaled=False)
            row.update({'a': a, 'm': m, 'm_expansion': expansion, 'relative_gap': abs(m - expansion) / abs(m)})
            if 1.0 / a < 1.0 / math.e:
                exact = normal_quantile_upper(1.0 / a)
                row['quantile_gap'] = abs(exact - quantile_expansion(1.0 / a)) / exact
        else:
            row['a'] = a_regime4(model.A, v)
        rows.append(row)
    return rows


def cmd_normalize(config: RunConfig) -> int:
    _require(config, 'model', 'v_grid')
    regime = _prelimit_regime(config)
    rows = normalization_rows(config.model, regime, config.v_grid)
    header: list[str] = []
    for row in rows:
        header.extend(key for key in row if key not in header)
    lines = ['\t'.join(header)]
    for row in rows:
        lines.append('\t'.join(format_float(row[key]) if key in row else '' for key in header))
    info = REGIME_BY_TAG[regime.value]
    sys.stdout.write(f'# {config.model.describe()} {regime.value} ({info.label}, limit {info.limit_process})\n')
    sys.stdout.write('\n'.join(lines) + '\n')
    return EXIT_PASS


def dispatch(config: RunConfig) -> int:
    if config.command == 'sample-walk':
        return cmd_sample_walk(config)
    if config.command == 'sample-limit':
        return cmd_sample_limit(config)
    if config.command == 'normalize':
        return cmd_normalize(config)
    return cmd_verify(config)


# ****************************************************************************************
# Handle the arguments
# ****************************************************************************************


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', default=None, help='JSON run file; flags override its fields.')
    parser.add_argument('--model', default=None, help='Tail model as inline JSON or a path to a JSON file.')
    parser.add_argument('--regime', default=None, help='Prelimit regime tag, or X1..X4 / X1_inv..X4_inv.')
    parser.add_argument('--v', type=float, default=None, help='Scaling parameter v.')
    parser.add_argument('--v-grid', dest='v_grid', default=None, help='Comma-separated v values.')
    parser.add_argument('--n-grid', dest='n_grid', default=None, help='Comma-separated indices n.')
    parser.add_argument('--t', type=float, default=None, help='Time or threshold t.')
    parser.add_argument('--y', type=float, default=None, help='Level y of the large-deviation check.')
    parser.add_argument('--n', type=int, default=None, help='Sample size, or path length for sample-walk.')
    parser.add_argument('--seed', type=int, default=None, help=f'Master seed (default {DEFAULT_SEED}).')
    parser.add_argument('--eps', type=float, default=None, help=f'Truncation bias budget (default {DEFAULT_EPS}).')
    parser.add_argument('--window', default=None, help='Simulation window as t_lo,t_hi.')
    parser.add_argument('--out', default=None, help='Output directory, or report file for verify commands.')
    parser.add_argument('--threads', type=int, default=None, help='Worker threads; 0 = auto.')
    parser.add_argument('--statistic', choices=STATISTICS, default=None, help='Prelimit statistic.')
    parser.add_argument('--method', choices=METHODS, default=None, help='Walk sampler.')
    parser.add_argument('--n-cap', dest='n_cap', type=int, default=None, help='First-passage search cap.')
    parser.add_argument('--grid-points', dest='grid_points', type=int, default=None, help='Path grid size.')
    parser.add_argument('--confidence', type=float, default=None, help=f'Confidence level (default {CONFIDENCE}).')
    parser.add_argument('--alpha', type=float, default=None, help='Tail index of X1 / X2.')
    parser.add_argument('--mu', type=float, default=None, help='Drift mu of X2..X4.')
    parser.add_argument('--A', dest='A', type=float, default=None, help='Boundary constant A of X4.')
    parser.add_argument('--verbose', action='store_true', help='Enable verbose output to stdout.')
    parser.add_argument('-q', '--quiet', action='store_true', help='Minimal stdout.')


def handle_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description='Simulate decoupled random walks and their limit extremal processes, and verify the limit laws.'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command in COMMANDS:
        _add_run_flags(subparsers.add_parser(command, help=f'Run {command}.'))
    args = parser.parse_args(argv)

    # Configure stdout logging based on arguments
    ch = logging.StreamHandler(sys.stdout)
    if args.verbose:
        ch.setLevel(logging.DEBUG)
        root_log.setLevel(logging.DEBUG)
    elif args.quiet:
        ch.setLevel(logging.ERROR)
        root_log.setLevel(logging.ERROR)
    else:
        ch.setLevel(logging.INFO)
        root_log.setLevel(logging.INFO)
    ch.setFormatter(formatter)
    log.addHandler(ch)
    root_log.addHandler(ch)

    log.debug('Checking script requirements...')
    if not args.verbose and not args.quiet:
        log.debug('No output level specified. Defaulting to INFO.')

    log.info('++++++++++++++++++++++++++++++++++++++++++++++')
    log.info('+  %s', os.path.basename(sys.argv[0]))
    log.info('+  Python Version: %s', sys.version.split()[0])
    log.info('+  Today is: %s', date.today())
    log.info('++++++++++++++++++++++++++++++++++++++++++++++')
    return args


# ****************************************************************************************
# Main
# ****************************************************************************************


def main(argv: list[str] | None = None) -> int:
    args = handle_args(argv)
    flag_values = {
        key: value
        for key, value in vars(args).items()
        if key not in {'command', 'config', 'verbose', 'quiet'}
    }
    try:
        file_values = load_run_file(args.config) if args.config else {}
        config = build_run_config(args.command, file_values, flag_values)
        code = dispatch(config)
    except (Error, ValueError) as exc:
        log.error('%s failed: %s', args.command, exc)
        return EXIT_ERROR
    log.info('%s finished with exit code %d', args.command, code)
    return code


if __name__ == '__main__':
    sys.exit(main())
