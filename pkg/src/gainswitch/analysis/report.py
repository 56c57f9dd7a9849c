"""Structured analysis results with JSON/CSV output and a content hash."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["AnalysisReport", "canonical_json", "sha256_file"]


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else None
    return o


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class AnalysisReport:
    """Statistics, pass/fail flags, estimator settings and input provenance.

    Array data (histogram, autocorrelation, spectrum) lives in ``arrays``
    and is written to CSV rather than JSON. ``content_hash`` covers both.
    """

    results: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(canonical_json({"results": self.results, "settings": self.settings,
                                 "provenance": self.provenance}).encode())
        for name in sorted(self.arrays):
            for col in self.arrays[name].values():
                h.update(np.ascontiguousarray(col).tobytes())
        return h.hexdigest()

    def to_dict(self):
        return _plain({
            "results": self.results,
            "settings": self.settings,
            "provenance": self.provenance,
            "content_hash": self.content_hash(),
        })

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return Path(path)

    def write_csvs(self, out_dir):
        """One CSV per entry of ``arrays``; returns the written paths."""
        out = []
        for name, cols in sorted(self.arrays.items()):
            path = Path(out_dir) / f"{name}.csv"
            keys = list(cols)
            data = np.column_stack([np.asarray(cols[k], dtype=float) for k in keys])
            np.savetxt(path, data, delimiter=",", header=",".join(keys), comments="", fmt="%.10g")
            out.append(path)
        return out
