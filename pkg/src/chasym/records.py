"""Run records: diagnostics time series, field snapshots, deterministic I/O.

A run directory holds

    metadata.json     -- run metadata, column names, snapshot index w/ checksums
    diagnostics.csv   -- one row per recorded time (full-precision floats)
    snapshots/        -- snap_NNNNNN.bin (little-endian float64, C order)
                         + snap_NNNNNN.json header

All writes are atomic (temp file + rename) so an interrupted run leaves no
partial files at final paths.  Float formatting uses repr round-tripping, so
identical runs produce byte-identical outputs.
"""

import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import ValidationError
from .fields import Field, Grid


def _atomic_write_bytes(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bytes_atomic(path, payload):
    _atomic_write_bytes(path, payload)


def write_text_atomic(path, text):
    _atomic_write_bytes(path, text.encode("utf-8"))


def write_json_atomic(path, obj):
    write_text_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class RunRecord:
    """Diagnostics rows plus snapshot fields for one run."""

    def __init__(self, metadata, columns):
        self.metadata = dict(metadata)
        self.columns = list(columns)
        self.rows = []
        self.snapshots = []  # list of (time, Field)

    def add_row(self, values):
        """values: dict keyed by column name (missing -> nan)."""
        row = [float(values.get(c, np.nan)) for c in self.columns]
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValidationError(
                f"rows must have strictly increasing time: {row[0]} after "
                f"{self.rows[-1][0]}")
        self.rows.append(row)

    def add_snapshot(self, time, field):
        self.snapshots.append((float(time), field))

    def series(self, column):
        idx = self.columns.index(column)
        return np.array([r[idx] for r in self.rows])

    @property
    def times(self):
        return self.series(self.columns[0])

    def snapshot_at(self, time, rtol=1e-9):
        for t, f in self.snapshots:
            if abs(t - time) <= rtol * max(1.0, abs(time)):
                return f
        raise ValidationError(f"no snapshot at t = {time}")

    # -- persistence --------------------------------------------------------

    def save(self, outdir):
        os.makedirs(outdir, exist_ok=True)
        index = []
        for i, (t, field) in enumerate(self.snapshots):
            payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
            digest = hashlib.sha256(payload).hexdigest()
            name = f"snap_{i:06d}"
            _atomic_write_bytes(os.path.join(outdir, "snapshots", name + ".bin"),
                                payload)
            header = {
                "time": t,
                "grid": field.grid.describe(),
                "shape": list(field.values.shape),
                "dtype": "<f8",
                "order": "C",
                "sha256": digest,
            }
            write_json_atomic(os.path.join(outdir, "snapshots", name + ".json"),
                              header)
            index.append({"file": f"snapshots/{name}.bin", "time": t,
                          "sha256": digest})
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(x) for x in row))
        write_text_atomic(os.path.join(outdir, "diagnostics.csv"),
                          "\n".join(lines) + "\n")
        write_json_atomic(os.path.join(outdir, "metadata.json"), {
            "metadata": self.metadata,
            "columns": self.columns,
            "snapshot_index": index,
        })

    @classmethod
    def load(cls, outdir):
        with open(os.path.join(outdir, "metadata.json")) as fh:
            head = json.load(fh)
        record = cls(head["metadata"], head["columns"])
        csv_path = os.path.join(outdir, "diagnostics.csv")
        if os.path.exists(csv_path):
            with open(csv_path) as fh:
                lines = [ln for ln in fh.read().splitlines() if ln]
            for ln in lines[1:]:
                record.rows.append([float(tok) for tok in ln.split(",")])
        for entry in head["snapshot_index"]:
            path = os.path.join(outdir, entry["file"])
            if not os.path.exists(path):
                raise ValidationError(f"snapshot file missing: {entry['file']}")
            with open(path, "rb") as fh:
                payload = fh.read()
            digest = hashlib.sha256(payload).hexdigest()
            if digest != entry["sha256"]:
                raise ValidationError(
                    f"checksum mismatch for {entry['file']}: snapshot corrupted")
            header_path = path[:-4] + ".json"
            with open(header_path) as fh:
                header = json.load(fh)
            g = header["grid"]
            grid = Grid(g["d"], g["N"], g["L"])
            values = np.frombuffer(payload, dtype="<f8").reshape(header["shape"])
            record.snapshots.append((float(entry["time"]),
                                     Field(grid, values.copy())))
        return record
