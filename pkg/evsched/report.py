"""Tabulate solve statistics written by ``evsched solve --stats``."""
import logging
from pathlib import Path
from typing import Union

import pandas as pd

from evsched.errors import InvalidInstanceError
from evsched.utils.io import read_json

logger = logging.getLogger(__name__)

STATS_COLUMNS = ['run', 'status', 'objective', 'bound', 'gap', 'nodes', 'cg_iterations', 'columns_generated',
                 'time_ms']
FLOAT_FORMAT = '%.6f'


def load_stats(directory: Union[str, Path]) -> pd.DataFrame:
    """One row per ``*.json`` stats file, keyed by file stem and sorted by it."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInstanceError(f"{directory} is not a directory")
    rows = []
    for path in sorted(directory.glob('*.json')):
        record = read_json(path)
        if not isinstance(record, dict) or 'status' not in record:
            logger.warning("skipping %s: not a stats record", path.name)
            continue
        rows.append({'run': path.stem, **{k: record.get(k) for k in STATS_COLUMNS[1:]}})
    frame = pd.DataFrame(rows, columns=STATS_COLUMNS)
    for col in ('objective', 'bound', 'gap'):
        frame[col] = pd.to_numeric(frame[col], errors='coerce')
    for col in ('nodes', 'cg_iterations', 'columns_generated', 'time_ms'):
        frame[col] = pd.to_numeric(frame[col], errors='coerce').fillna(0).astype(int)
    return frame.sort_values('run', kind='mergesort').reset_index(drop=True)


def aggregate(frame: pd.DataFrame) -> pd.DataFrame:
    """Single summary row: averages over all runs plus optimal / unsolved / total counts."""
    total = len(frame)
    summary = {
        'avg_runtime_s': frame['time_ms'].mean() / 1000.0 if total else float('nan'),
        'avg_objective': frame['objective'].mean(),
        'avg_bound': frame['bound'].mean(),
        'avg_nodes': frame['nodes'].mean() if total else float('nan'),
        'optimal': int((frame['status'] == 'optimal').sum()),
        'unsolved': int(frame['objective'].isna().sum()),
        'total': total,
    }
    return pd.DataFrame([summary])


def write_report(directory: Union[str, Path], out: Union[str, Path], aggregated: bool = False) -> pd.DataFrame:
    frame = load_stats(directory)
    if aggregated:
        frame = aggregate(frame)
    frame.to_csv(out, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info("report with %d row(s) written to %s", len(frame), out)
    return frame
