"""
Telemetry file ingestion.

Both formats carry one sample per record with the fields series_id,
timestamp (seconds) and value:

    csv    header row ``series_id,timestamp,value``
    jsonl  one JSON object per line

Samples are grouped per series and placed on a fleet-wide timeline whose
index 0 is the earliest timestamp in the file.  Each series is checked
against a grid anchored at its own first sample, so a constant phase
offset is accepted; its start is rounded onto the fleet timeline.
Gaps of up to ``gap_limit`` missing samples are linearly interpolated; a
longer gap splits the series into ``<id>#1``, ``<id>#2``, ... with ``source_id`` kept.
"""
import hashlib
import json
import logging
import re

import numpy as np
import pandas as pd

from timeseries.series import Series

from .config import DEFAULT_GAP_LIMIT
from .exceptions import EmptyInput, MalformedRow, NonUniformSampling, UnreadableInput

logger = logging.getLogger(__name__)

COLUMNS = ('series_id', 'timestamp', 'value')
FORMATS = ('csv', 'jsonl')
SAMPLING_TOLERANCE = 0.01


def _read_csv(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={'series_id': str}, float_precision='round_trip',
                            skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise EmptyInput(f"{path} is empty") from None
    except pd.errors.ParserError as exc:
        raise MalformedRow(_parser_line(exc), "wrong number of fields") from None
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedRow(1, f"header lacks column(s) {', '.join(missing)}")
    frame = frame[list(COLUMNS)].copy()
    frame['line'] = frame.index + 2
    return frame


def _parser_line(exc) -> int:
    match = re.search(r"line (\d+)", str(exc))
    return int(match.group(1)) if match else 0


def _read_jsonl(path) -> pd.DataFrame:
    rows = []
    with open(path, encoding='utf-8') as handle:
        for lineno, text in enumerate(handle, start=1):
            text = text.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise MalformedRow(lineno, f"not JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise MalformedRow(lineno, "expected a JSON object")
            missing = [c for c in COLUMNS if c not in record]
            if missing:
                raise MalformedRow(lineno, f"missing {', '.join(missing)}")
            rows.append((record['series_id'], record['timestamp'], record['value'], lineno))
    return pd.DataFrame(rows, columns=[*COLUMNS, 'line'])


def _coerce(frame: pd.DataFrame) -> pd.DataFrame:
    """Numeric timestamp and value, non-empty series id; first bad row raises."""
    ts = pd.to_numeric(frame['timestamp'], errors='coerce')
    vals = pd.to_numeric(frame['value'], errors='coerce')
    ids = frame['series_id']
    bad = ts.isna() | ~np.isfinite(ts.fillna(0)) | vals.isna() | ~np.isfinite(vals.fillna(0)) \
        | ids.isna() | (ids.astype(str).str.strip() == '')
    if bad.any():
        row = frame[bad].iloc[0]
        raise MalformedRow(int(row['line']), "series_id must be non-empty, timestamp and value numeric")
    return pd.DataFrame({
        'series_id': ids.astype(str).str.strip(),
        'timestamp': ts.astype(np.float64),
        'value': vals.astype(np.float64),
        'line': frame['line'],
    })


def infer_interval(frame: pd.DataFrame) -> float:
    diffs = (
        frame.sort_values(['series_id', 'timestamp'])
        .groupby('series_id')['timestamp'].diff().dropna()
    )
    diffs = diffs[diffs > 0]
    if diffs.empty:
        return 0.0
    return float(diffs.min() if diffs.size < 3 else diffs.median())


def _split_runs(index: np.ndarray, gap_limit: int):
    """(start, stop) slices of ``index`` whose internal gaps are at most gap_limit."""
    breaks = np.flatnonzero(np.diff(index) - 1 > gap_limit) + 1
    edges = np.concatenate(([0], breaks, [index.size]))
    return list(zip(edges[:-1], edges[1:]))


def parse_telemetry(path, format='csv', sampling_interval=None,
                    gap_limit=DEFAULT_GAP_LIMIT) -> list[Series]:
    """
    Parameters
    ----------
    path : file to read
    format : 'csv' or 'jsonl'
    sampling_interval : seconds between samples; inferred from the data when omitted
    gap_limit : longest run of missing samples that is interpolated

    Returns
    -------
    list[Series] sorted by series id, on a common timeline.
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    try:
        frame = _read_csv(path) if format == 'csv' else _read_jsonl(path)
    except UnicodeDecodeError as exc:
        raise UnreadableInput(f"{path}: not UTF-8 text (byte {exc.start})") from exc
    except OSError as exc:
        raise UnreadableInput(f"{path}: {exc.strerror or exc}") from exc
    if frame.empty:
        raise EmptyInput(f"{path} holds no samples")
    frame = _coerce(frame)

    interval = float(sampling_interval) if sampling_interval else infer_interval(frame)
    origin = float(frame['timestamp'].min())

    fleet = []
    for sid, group in frame.sort_values(['series_id', 'timestamp'], kind='stable').groupby('series_id', sort=True):
        times = group['timestamp'].to_numpy()
        values = group['value'].to_numpy()
        if times.size > 1:
            if interval <= 0:
                raise NonUniformSampling(f"series {sid}: cannot infer a sampling interval")
            if np.any(np.diff(times) == 0):
                line = int(group['line'].to_numpy()[np.flatnonzero(np.diff(times) == 0)[0] + 1])
                raise MalformedRow(line, f"duplicate timestamp for series {sid}")
        # each series keeps its own phase; only the start is snapped to the fleet timeline
        steps = (times - times[0]) / interval if interval > 0 else np.zeros_like(times)
        index = np.round(steps)
        off_grid = np.abs(steps - index) > SAMPLING_TOLERANCE
        if np.any(off_grid):
            line = int(group['line'].to_numpy()[np.flatnonzero(off_grid)[0]])
            raise NonUniformSampling(
                f"series {sid} (line {line}): sample spacing deviates from {interval}s by more than 1%"
            )
        start = round((times[0] - origin) / interval) if interval > 0 else 0
        index = index.astype(np.int64) + int(start)

        runs = _split_runs(index, int(gap_limit))
        for n, (a, b) in enumerate(runs, start=1):
            idx, vals = index[a:b], values[a:b]
            full = np.arange(idx[0], idx[-1] + 1)
            filled = vals if full.size == idx.size else np.interp(full, idx, vals)
            fleet.append(Series(
                sid if len(runs) == 1 else f"{sid}#{n}",
                filled,
                sampling_interval=interval if interval > 0 else 1.0,
                start_timestamp=int(idx[0]),
                source_id=sid,
            ))
        if len(runs) > 1:
            logger.warning("Series %s split into %d part(s) at gaps longer than %d samples",
                           sid, len(runs), gap_limit)
    logger.info("Parsed %d series from %s (%s, interval %.3fs)", len(fleet), path, format, interval)
    return fleet


def write_telemetry(fleet, path, format='csv') -> int:
    """Write a fleet in either input format; timestamps in seconds from 0."""
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    rows = [
        (s.series_id, float(s.timestamp_of(i) * s.sampling_interval), float(v))
        for s in fleet for i, v in enumerate(s.values)
    ]
    if format == 'csv':
        pd.DataFrame(rows, columns=list(COLUMNS)).to_csv(path, index=False)
    else:
        with open(path, 'w', encoding='utf-8') as handle:
            for sid, ts, value in rows:
                handle.write(json.dumps({'series_id': sid, 'timestamp': ts, 'value': value}) + '\n')
    return len(rows)


def fleet_digest(fleet) -> str:
    """Content digest of a parsed or generated fleet: ids, timeline and values."""
    digest = hashlib.sha256()
    for series in sorted(fleet, key=lambda s: s.series_id):
        digest.update(series.series_id.encode('utf-8'))
        digest.update(f"|{series.start_timestamp}|{series.sampling_interval!r}|".encode())
        digest.update(np.ascontiguousarray(series.values, dtype='<f8').tobytes())
    return digest.hexdigest()
