"""Dataset files and trace files.

Dataset format ``RSRM-MAT v1``::

    RSRM-MAT v1 <kind> <n> <d> [<r>]
    <block 0>
    ...
    <block n-1>

``kind`` is ``pca``, ``ica`` or ``rc``. A block is ``d`` numbers for ``pca``
and ``d*d`` numbers in row-major order otherwise. Numbers are whitespace
separated decimal floats; line breaks carry no meaning. The writer puts one
block per line using shortest round-trip float formatting, so a
write-then-read cycle reproduces every value exactly. Lines starting with
``#`` are ignored.

Traces are JSON lines with keys ``t, sfo, sec, f, gap, gnorm, est_err``.
"""
import json
import os
import re

import numpy as np

from ..exceptions import IngestError, InvalidInput
from ..problems import KINDS, Dataset

__all__ = [
    "MAGIC",
    "write_matrices",
    "ingest_matrices",
    "write_trace",
    "read_trace",
    "trace_filename",
    "parse_trace_filename",
    "TRACE_KEYS",
]

MAGIC = "RSRM-MAT"
VERSION = "v1"
TRACE_KEYS = ("t", "sfo", "sec", "f", "gap", "gnorm", "est_err")


def write_matrices(path, dataset):
    s = dataset.samples
    head = [MAGIC, VERSION, dataset.kind, str(dataset.n), str(dataset.d)]
    if dataset.r is not None:
        head.append(str(dataset.r))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(head) + "\n")
        for block in s.reshape(dataset.n, -1):
            fh.write(" ".join(repr(float(v)) for v in block) + "\n")
    return path


def _parse_header(line):
    parts = line.split()
    if len(parts) not in (5, 6) or parts[0] != MAGIC or parts[1] != VERSION:
        raise IngestError(f"malformed header {line.strip()!r}; expected '{MAGIC} {VERSION} <kind> <n> <d> [<r>]'")
    kind = parts[2]
    if kind not in KINDS:
        raise IngestError(f"unknown kind {kind!r} in header")
    try:
        nums = [int(p) for p in parts[3:]]
    except ValueError:
        raise IngestError(f"non-integer size in header {line.strip()!r}") from None
    if nums[0] < 1 or nums[1] < 1:
        raise IngestError("n and d must be >= 1")
    return kind, nums[0], nums[1], (nums[2] if len(nums) == 3 else None)


def ingest_matrices(path, kind=None):
    """Read a dataset file; ``kind`` (if given) must match the header.

    Raises
    ------
    IngestError
        On a malformed header, a count mismatch, unparsable numbers or a
        block violating the kind's invariants (symmetry for ``ica``,
        positive definiteness for ``rc``); the offending sample index is
        reported when known.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise IngestError("empty file")
    file_kind, n, d, r = _parse_header(lines[0])
    if kind is not None and kind != file_kind:
        raise IngestError(f"file holds {file_kind!r} data, expected {kind!r}")
    per = d if file_kind == "pca" else d * d
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != n * per:
        full, rest = divmod(len(tokens), per)
        raise IngestError(
            f"expected {n} blocks of {per} numbers, found {len(tokens)} numbers",
            index=min(full, n - 1) if len(tokens) < n * per else n,
        )
    try:
        flat = np.array([float(tok) for tok in tokens])
    except ValueError:
        bad = next(i for i, tok in enumerate(tokens) if not _is_float(tok))
        raise IngestError(f"cannot parse {tokens[bad]!r} as a number", index=bad // per) from None
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise IngestError("non-finite value", index=int(bad[0]) // per)
    shape = (n, d) if file_kind == "pca" else (n, d, d)
    samples = flat.reshape(shape)
    try:
        return Dataset(file_kind, samples, r=r)
    except InvalidInput as exc:
        probe = Dataset.__new__(Dataset)
        object.__setattr__(probe, "kind", file_kind)
        object.__setattr__(probe, "samples", samples)
        bad = probe.first_invalid()
        msg = f"violates the {file_kind} invariants" if bad is not None else str(exc)
        raise IngestError(msg, index=bad) from None


def _is_float(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def write_trace(path, rows, timing=True):
    """Write rows (``TraceRow`` or dicts) as JSON lines.

    With ``timing=False`` the ``sec`` field is written as ``0.0`` so that
    reruns produce byte-identical files.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            rec = row.as_dict() if hasattr(row, "as_dict") else dict(row)
            if not timing:
                rec["sec"] = 0.0
            fh.write(json.dumps({k: rec[k] for k in TRACE_KEYS}) + "\n")
    return path


def read_trace(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


_NAME = re.compile(r"^(?P<method>.+)__eta(?P<eta>[^_]+)__seed(?P<seed>-?\d+)\.jsonl$")


def trace_filename(method, eta0, seed):
    return f"{method}__eta{eta0!r}__seed{seed}.jsonl"


def parse_trace_filename(path):
    """``(method, eta0, seed)`` encoded in a trace file name."""
    m = _NAME.match(os.path.basename(path))
    if not m:
        raise InvalidInput(f"not a trace file name: {path}")
    return m["method"], float(m["eta"]), int(m["seed"])
