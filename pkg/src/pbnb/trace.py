"""Line-delimited JSON trace records."""

from __future__ import annotations

import json
import math

import numpy as np


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else (None if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


class Trace:
    """Collects records in memory and optionally streams them to a file.

    ``context`` fields (e.g. the current node id) are merged into every
    record; ``include_mu`` controls whether multiplier vectors are kept.
    """

    def __init__(self, path=None, include_mu: bool = True, keep: bool = True):
        self.records: list[dict] = []
        self.context: dict = {}
        self.include_mu = include_mu
        self.keep = keep
        self._fh = open(path, "w") if path else None

    def emit(self, kind: str, **fields):
        if not self.include_mu:
            fields = {k: v for k, v in fields.items() if not k.startswith("mu")}
        rec = _clean({"kind": kind, **self.context, **fields})
        if self.keep:
            self.records.append(rec)
        if self._fh:
            self._fh.write(json.dumps(rec) + "\n")
        return rec

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


class NullTrace(Trace):
    def __init__(self):
        super().__init__(keep=False)

    def emit(self, kind, **fields):
        return None


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
