##########################################################################################
#
# Script name: export.py
#
# Description: CSV and JSON writers for walk dumps, ensembles, limit-path panels, and
#              verification reports. Output bytes depend only on the inputs.
#
##########################################################################################

import csv
import io
import json
import logging
import math
import os
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .config import ENV_REPORT_RUNTIME
from .models import Capped, FigurePanel, FunctionalSample, TailModel, VerificationReport
from .utils import EnsembleResult, _is_truthy, format_float


# ****************************************************************************************
# Global data and configuration
# ****************************************************************************************

log = logging.getLogger(__name__)

PATH_FILE = 'path.csv'
JUMPS_FILE = 'jumps.csv'
ATOMS_FILE = 'atoms.csv'
VALUES_FILE = 'values.csv'
META_FILE = 'meta.json'


# ****************************************************************************************
# Functions
# ****************************************************************************************


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key): _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return format_float(value)
    return value


def render_json(payload: dict[str, Any]) -> str:
    return json.dumps(_json_safe(payload), ensure_ascii=True, indent=2, sort_keys=True) + '\n'


def write_json(path: str | Path, payload: dict[str, Any]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(render_json(payload), encoding='utf-8')
    return target


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(cell) if isinstance(cell, (float, np.floating)) else cell for cell in row])
    return buffer.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    # newline='' keeps '\n' on every platform.
    with target.open('w', encoding='utf-8', newline='') as handle:
        handle.write(render_csv(header, rows))
    return target


def write_walk_dump(
    output_dir: str | Path,
    sample: FunctionalSample,
    model: TailModel,
    seed: int,
    stream_key: tuple[int, ...] = (),
) -> list[Path]:
    '''
    path.csv with (n, S_hat, running_max) and meta.json with the functionals at the threshold.
    '''
    root = Path(output_dir)
    values = sample.values if sample.values is not None else np.empty(0)
    rows = (
        (index + 1, float(value), float(best))
        for index, (value, best) in enumerate(zip(values, sample.running_max))
    )
    tau = {'capped': sample.tau.cap} if isinstance(sample.tau, Capped) else sample.tau
    meta = {
        'model': model.to_dict(),
        'seed': seed,
        'stream_key': list(stream_key),
        't': sample.threshold,
        'n': int(values.shape[0]),
        'tau': tau,
        'n_visits': sample.n_visits,
    }
    written = [
        write_csv(root / PATH_FILE, ('n', 'S_hat', 'running_max'), rows),
        write_json(root / META_FILE, meta),
    ]
    log.info('Wrote walk dump (%d indices) to %s', meta['n'], root)
    return written


def write_ensemble_dump(output_dir: str | Path, ensemble: EnsembleResult, meta: dict[str, Any]) -> list[Path]:
    '''
    values.csv with one normalized statistic per line (lost replicates at -inf or inf)
    and a meta.json sidecar with the run parameters and loss counts.
    '''
    root = Path(output_dir)
    sidecar = dict(meta)
    sidecar.update(
        {
            'n': ensemble.n,
            'cap_count': ensemble.capped,
            'censored_left': ensemble.censored_left,
            'censored_right': ensemble.censored_right,
        }
    )
    written = [
        write_csv(root / VALUES_FILE, ('value',), ((float(value),) for value in ensemble.ordered_values())),
        write_json(root / META_FILE, sidecar),
    ]
    log.info('Wrote ensemble of %d value(s) to %s', ensemble.n, root)
    return written


def write_limit_panel(output_dir: str | Path, panel: FigurePanel, meta: dict[str, Any]) -> list[Path]:
    '''
    path.csv (t, value[, floor]), jumps.csv (t, level), atoms.csv (t, position) and meta.json.
    '''
    root = Path(output_dir)
    path = panel.path
    if panel.floor_values is not None:
        path_rows = zip(panel.grid.tolist(), panel.values.tolist(), panel.floor_values.tolist())
        path_header = ('t', 'value', 'floor')
    else:
        path_rows = zip(panel.grid.tolist(), panel.values.tolist())
        path_header = ('t', 'value')
    sidecar = dict(meta)
    sidecar.update(
        {
            'process': panel.process,
            'params': panel.params,
            'window': [path.t_lo, path.t_hi],
            'initial_level': path.initial_level,
            'floor': list(path.floor) if path.floor is not None else None,
            'grid_points': int(panel.grid.shape[0]),
            'jumps': int(path.jump_times.shape[0]),
            'atoms': int(path.atom_times.shape[0]),
        }
    )
    written = [
        write_csv(root / PATH_FILE, path_header, path_rows),
        write_csv(root / JUMPS_FILE, ('t', 'level'), zip(path.jump_times.tolist(), path.levels.tolist())),
        write_csv(root / ATOMS_FILE, ('t', 'position'), zip(path.atom_times.tolist(), path.atom_positions.tolist())),
        write_json(root / META_FILE, sidecar),
    ]
    log.info('Wrote %s panel (%d atom(s), %d jump(s)) to %s', panel.process, sidecar['atoms'], sidecar['jumps'], root)
    return written


def report_payload(report: VerificationReport) -> dict[str, Any]:
    include_runtime = _is_truthy(os.getenv(ENV_REPORT_RUNTIME), default=False)
    return report.to_json_dict(include_runtime=include_runtime)


def write_report(path: str | Path, report: VerificationReport) -> Path:
    target = write_json(path, report_payload(report))
    log.info('Wrote %s report (%s) to %s', report.test, report.verdict, target)
    return target
