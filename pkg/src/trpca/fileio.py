"""Tensor container files, run reports, and sweep-spec parsing.

The tensor container is a fixed little-endian binary layout:

    bytes 0-3   magic "TRPC"
    byte  4     format version (currently 1)
    byte  5     tensor order N (>= 1)
    bytes 6-7   reserved, must be zero
    next 8*N    dims, unsigned 64-bit little-endian
    rest        payload, float64 little-endian, C (row-major) order

Readers reject malformed files with a stable machine-readable error code;
writers are atomic (temp file in the target directory, then rename), so a
crash never leaves a half-written file at the destination path.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
import tempfile
from collections.abc import Iterable, Sequence

import numpy as np

from .rpca import IterationTrace
from .synth import SweepCell, SweepSpec
from .tensor_ops import as_tensor

MAGIC = b"TRPC"
FORMAT_VERSION = 1
SCHEMA_VERSION = 1

# Refuse dims whose product exceeds this (2**48 entries = 2 PiB of float64);
# anything larger is a corrupt header, not a real tensor.
_MAX_ELEMENTS = 1 << 48

#: Error codes a reader can produce, each for a distinct failure mode.
ERROR_CODES = (
    "bad-magic",
    "bad-version",
    "bad-header",
    "dims-overflow",
    "truncated",
    "trailing-data",
    "non-finite",
)


class TensorFileError(Exception):
    """Malformed tensor file; ``code`` is one of :data:`ERROR_CODES`."""

    def __init__(self, code: str, message: str):
        assert code in ERROR_CODES
        self.code = code
        super().__init__(f"{code}: {message}")


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TensorFileError(
            "truncated", f"file ends inside {what} (wanted {n} bytes, got {len(buf)})"
        )
    return buf


def read_tensor(path) -> np.ndarray:
    """Read one tensor from a container file.

    Returns a float64 C-contiguous array.  Raises :class:`TensorFileError`
    with a code identifying the first malformed field.
    """
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise TensorFileError("bad-magic", f"expected {MAGIC!r}, got {magic!r}")
        version = _read_exact(fh, 1, "version")[0]
        if version != FORMAT_VERSION:
            raise TensorFileError(
                "bad-version", f"unsupported format version {version}"
            )
        order = _read_exact(fh, 1, "order")[0]
        if order < 1:
            raise TensorFileError("bad-header", "tensor order must be >= 1")
        reserved = _read_exact(fh, 2, "reserved bytes")
        if reserved != b"\x00\x00":
            raise TensorFileError("bad-header", "reserved bytes must be zero")
        dims = struct.unpack(f"<{order}Q", _read_exact(fh, 8 * order, "dims"))
        if any(d == 0 for d in dims):
            raise TensorFileError("bad-header", f"zero-length mode in dims {dims}")
        size = math.prod(dims)
        if size > _MAX_ELEMENTS:
            raise TensorFileError(
                "dims-overflow", f"dims {dims} describe {size} elements"
            )
        payload = _read_exact(fh, 8 * size, "payload")
        if fh.read(1):
            raise TensorFileError("trailing-data", "bytes remain after the payload")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64, copy=True)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise TensorFileError("non-finite", f"non-finite value at flat index {bad}")
    return values.reshape(dims)


def _atomic_write_bytes(path, chunks: Iterable[bytes]) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".trpca-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_tensor(path, t: np.ndarray) -> None:
    """Write a tensor container file atomically.

    Round-trips exactly: writing the array returned by :func:`read_tensor`
    reproduces the original file byte for byte.
    """
    t = as_tensor(t)
    header = (
        MAGIC
        + bytes((FORMAT_VERSION, t.ndim, 0, 0))
        + struct.pack(f"<{t.ndim}Q", *t.shape)
    )
    payload = np.ascontiguousarray(t, dtype="<f8").tobytes(order="C")
    _atomic_write_bytes(path, (header, payload))


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, (text.encode("utf-8"),))


def write_report(path, records: Sequence[dict]) -> None:
    """Write run records as JSON lines.

    The first line always carries ``schema_version`` so consumers can
    detect layout changes; the caller's records follow one per line.
    """
    lines = [json.dumps({"record": "schema", "schema_version": SCHEMA_VERSION})]
    lines += [json.dumps(rec, sort_keys=True, default=_json_default) for rec in records]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def write_trace_csv(path, trace: IterationTrace) -> None:
    """Flat CSV of the iteration trace; error columns are empty without truth."""
    rows = []
    for r in trace:
        rows.append(
            [
                r.iteration,
                repr(r.zeta),
                "" if r.rel_fro_error is None else repr(r.rel_fro_error),
                "" if r.inf_error is None else repr(r.inf_error),
                repr(r.loss),
                repr(r.seconds),
            ]
        )
    _write_csv(path, ["iteration", "zeta", "rel_fro_error", "inf_error", "loss", "seconds"], rows)


def write_sweep_csv(path, cells: Sequence[SweepCell]) -> None:
    """One CSV row per sweep cell with the trial-median error on a log scale."""
    rows = []
    for c in cells:
        if math.isnan(c.median_rel_error):
            log_err = ""
        else:
            log_err = repr(math.log10(max(c.median_rel_error, 1e-300)))
        rows.append(
            [c.n, c.rank, repr(c.alpha), repr(c.kappa), log_err,
             "" if math.isnan(c.median_iterations) else repr(c.median_iterations),
             repr(c.seconds), c.failures]
        )
    _write_csv(
        path,
        ["n", "rank", "alpha", "kappa", "median_log10_rel_error",
         "median_iterations", "seconds", "failures"],
        rows,
    )


def _write_csv(path, header, rows) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


class SweepSpecError(ValueError):
    """Malformed sweep spec; ``line`` is the 1-based offending line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


_GRID_KEYS = {"n": int, "r": int, "alpha": float, "kappa": float}
_SCALAR_KEYS = {
    "trials": int,
    "iters": int,
    "eta": float,
    "rho": float,
    "stop_tol": float,
    "seed": int,
}


def parse_sweep_spec(path) -> SweepSpec:
    """Parse a sweep spec file into a :class:`SweepSpec`.

    Grammar, one statement per line::

        # comment (blank lines also ignored)
        key = value [, value ...]

    Grid keys ``n``, ``r``, ``alpha``, ``kappa`` are required and accept
    comma-separated lists.  Scalar keys ``trials``, ``iters``, ``eta``,
    ``rho`` (a number or ``auto``), ``stop_tol``, and ``seed`` are
    optional.  Unknown keys, duplicate keys, or unparsable values raise
    :class:`SweepSpecError` with the offending line number.
    """
    seen: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SweepSpecError(lineno, f"expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key in seen:
                raise SweepSpecError(lineno, f"duplicate key {key!r}")
            if key in _GRID_KEYS:
                conv = _GRID_KEYS[key]
                try:
                    seen[key] = tuple(conv(v.strip()) for v in value.split(","))
                except ValueError:
                    raise SweepSpecError(
                        lineno, f"bad {conv.__name__} list for {key!r}: {value!r}"
                    ) from None
            elif key in _SCALAR_KEYS:
                if key == "rho" and value == "auto":
                    seen[key] = None
                    continue
                conv = _SCALAR_KEYS[key]
                try:
                    seen[key] = conv(value)
                except ValueError:
                    raise SweepSpecError(
                        lineno, f"bad {conv.__name__} value for {key!r}: {value!r}"
                    ) from None
            else:
                raise SweepSpecError(lineno, f"unknown key {key!r}")
    missing = [k for k in _GRID_KEYS if k not in seen]
    if missing:
        raise SweepSpecError(0, f"missing required keys: {', '.join(missing)}")
    try:
        return SweepSpec(
            n_grid=seen["n"],
            rank_grid=seen["r"],
            alpha_grid=seen["alpha"],
            kappa_grid=seen["kappa"],
            trials=seen.get("trials", 3),
            eta=seen.get("eta", 0.25),
            rho=seen.get("rho"),
            max_iters=seen.get("iters", 200),
            stop_tol=seen.get("stop_tol", 1e-12),
            seed=seen.get("seed", 0),
        )
    except ValueError as exc:
        raise SweepSpecError(0, str(exc)) from None
