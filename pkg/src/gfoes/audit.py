"""Zero-glance instrumentation.

Unlearning entry points call :func:`record_access` with every input matrix
they consume. While a :class:`ZeroGlanceAuditor` is active, each access is
hashed row by row and compared against the forbidden rows (the forget
set). Accesses tagged with a whitelisted operation, such as evaluation on
held-out forget-class test data, are logged but never counted.
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np

from .errors import ZeroGlanceViolation

_local = threading.local()


def row_hashes(inputs):
    rows = np.ascontiguousarray(np.asarray(inputs, dtype="<f8"))
    return {hashlib.blake2b(r.tobytes(), digest_size=16).hexdigest() for r in rows}


def _auditors():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def record_access(op: str, inputs) -> None:
    for auditor in _auditors():
        auditor.observe(op, inputs)


class ZeroGlanceAuditor:
    """Context manager counting reads of forbidden rows per operation."""

    def __init__(self, forbidden_inputs, whitelist=("eval",), strict=False):
        self.forbidden = row_hashes(forbidden_inputs)
        self.whitelist = set(whitelist)
        self.strict = strict
        self.accesses = {}
        self.hits = {}

    def observe(self, op, inputs):
        hashes = row_hashes(inputs)
        self.accesses[op] = self.accesses.get(op, 0) + len(hashes)
        if op in self.whitelist:
            return
        n = len(hashes & self.forbidden)
        if n:
            self.hits[op] = self.hits.get(op, 0) + n
            if self.strict:
                raise ZeroGlanceViolation(f"{op} read {n} forget-set rows")

    @property
    def violations(self):
        return sum(self.hits.values())

    def summary(self):
        return {
            "forbidden_rows": len(self.forbidden),
            "rows_seen": dict(sorted(self.accesses.items())),
            "forbidden_reads": dict(sorted(self.hits.items())),
            "whitelist": sorted(self.whitelist),
            "violations": self.violations,
        }

    def __enter__(self):
        _auditors().append(self)
        return self

    def __exit__(self, *exc):
        _auditors().remove(self)
        return False
