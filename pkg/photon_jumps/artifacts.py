"""Atomic writers for run artifacts.

Each file is written to a temporary sibling and moved into place with
os.replace, so a failed run never leaves a truncated artifact behind.
"""

import contextlib
import csv
import json
import logging
import os
import tempfile
from enum import Enum

import numpy as np

log = logging.getLogger(__name__)


@contextlib.contextmanager
def atomic_open(path):
    """Text handle whose contents replace `path` only if the block succeeds."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            yield handle
        os.replace(tmp_path, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.remove(tmp_path)
        raise
    log.debug(f"Wrote {path}")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(data):
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def write_json(path, data):
    with atomic_open(path) as handle:
        handle.write(to_json(data))
    return path


def write_text(path, text):
    with atomic_open(path) as handle:
        handle.write(text)
    return path


def write_csv(path, header, rows):
    """Writes rows under `header`; floats are written with repr for exact round trips."""
    with atomic_open(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_with(path, writer_method):
    """Runs `writer_method(handle)` (e.g. AtomStream.write_csv) into an atomic file."""
    with atomic_open(path) as handle:
        writer_method(handle)
    return path
