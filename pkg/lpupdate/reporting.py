''' CSV and JSON outputs. '''
from __future__ import annotations
import csv
import json
import sys
import threading
from typing import IO, Any, Iterable, Optional

import numpy as np

from .simulator import TrajectoryLog

TRACE_COLUMNS = ['t', 'reward', 'dist_l1', 'rotated_cost', 'pulled_frac']
SWEEP_COLUMNS = ['instance', 'policy', 'N', 'tau', 'alpha', 'mean', 'half_width', 'g_star', 'normalized_mean', 'error']


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None if np.isnan(value) else str(value)
    return value


def to_json_ready(data: Any) -> Any:
    ''' Replace numpy values and non-finite floats recursively. '''
    if isinstance(data, dict):
        return {str(key): to_json_ready(value) for (key, value) in data.items()}
    if isinstance(data, (list, tuple)):
        return [to_json_ready(value) for value in data]
    return _plain(data)


def write_json(data: dict, path: Optional[str] = None) -> None:
    ''' Dump data as indented UTF-8 JSON to path or stdout. '''
    text = json.dumps(to_json_ready(data), indent=2, sort_keys=False)
    if path is None:
        sys.stdout.write(text + '\n')
        return
    with open(path, 'w', encoding='utf-8') as file:
        file.write(text + '\n')


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(_plain(value))


class CsvReport:
    ''' CSV with a leading "# key: value" block; rows are flushed as they arrive.
        Writes from several threads are serialized. '''
    def __init__(self, columns: list[str], metadata: dict[str, Any], path: Optional[str] = None):
        self.columns = columns
        self._path = path
        self._lock = threading.Lock()
        self._file: IO[str] = open(path, 'w', encoding='utf-8', newline='') if path else sys.stdout
        for (key, value) in metadata.items():
            self._file.write(f'# {key}: {_cell(value)}\n')
        self._writer = csv.writer(self._file, lineterminator='\n')
        self._writer.writerow(columns)
        self._file.flush()

    def write_row(self, row: dict[str, Any]) -> None:
        ''' Append one row; absent columns stay empty. '''
        with self._lock:
            self._writer.writerow([_cell(row.get(column)) for column in self.columns])
            self._file.flush()

    def write_rows(self, rows: Iterable[dict[str, Any]]) -> None:
        ''' Append several rows. '''
        for row in rows:
            self.write_row(row)

    def close(self) -> None:
        ''' Release the file; stdout stays open. '''
        if self._path:
            self._file.close()

    def __enter__(self) -> CsvReport:
        return self

    def __exit__(self, *args) -> None:
        self.close()


def trace_columns(n_states: int) -> list[str]:
    ''' Trace columns followed by occupancy coordinates x_0..x_{S-1}. '''
    return TRACE_COLUMNS + [f'x_{state}' for state in range(n_states)]


def trace_rows(log: TrajectoryLog) -> Iterable[dict[str, Any]]:
    ''' One row per simulated step. '''
    for moment in range(log.horizon):
        row: dict[str, Any] = {
            't': moment,
            'reward': float(log.rewards[moment]),
            'dist_l1': float(log.distance[moment]),
            'rotated_cost': float(log.rotated_cost[moment]),
            'pulled_frac': float(log.pulled[moment].sum())
        }
        for (state, value) in enumerate(log.occupancy[moment]):
            row[f'x_{state}'] = float(value)
        yield row
