"""
CSV and JSON artifact I/O.

Every CSV has a header row and floats are written with 17 significant digits,
which round-trips IEEE doubles exactly when read back with
``float_precision="round_trip"``.
"""
import hashlib
import json
import re
import shutil
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pandas as pd

from modules.errors import ArtifactError, DimensionMismatch
from modules.logger import get_logger
from modules.model import ObservationBatch, TopologySnapshot

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"
Y_PATTERN = re.compile(r"^Y_t(\d+)\.csv$")

# Staging directories of runs in progress, removed by cleanup_staging()
_active_staging = set()


def write_frame(frame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _read_frame(path):
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError) as e:
        raise ArtifactError(f"Cannot read {path}: {e}") from e


def write_snapshots_csv(snapshots, path):
    """Rows (kind, t, i, j, value): kind A for a_ij, kind b for b_ii with j empty."""
    rows = []
    for snap in snapshots:
        N = snap.N
        ii, jj = np.nonzero(~np.eye(N, dtype=bool))
        rows.append(pd.DataFrame({"kind": "A", "t": snap.t, "i": ii, "j": jj, "value": snap.A[ii, jj]}))
        rows.append(pd.DataFrame({"kind": "b", "t": snap.t, "i": np.arange(N),
                                  "j": pd.array([None] * N, dtype="Int64"), "value": snap.b}))
    frame = pd.concat(rows, ignore_index=True)
    frame["j"] = frame["j"].astype("Int64")
    write_frame(frame, path)


def read_snapshots_csv(path):
    """Inverse of write_snapshots_csv."""
    frame = _read_frame(path)
    if list(frame.columns) != ["kind", "t", "i", "j", "value"]:
        raise ArtifactError(f"{path}: unexpected columns {list(frame.columns)}")
    snapshots = []
    N = int(frame["i"].max()) + 1
    for t, group in frame.groupby("t", sort=True):
        A = np.zeros((N, N))
        b = np.zeros(N)
        a_rows = group[group["kind"] == "A"]
        b_rows = group[group["kind"] == "b"]
        A[a_rows["i"].to_numpy(int), a_rows["j"].to_numpy(int)] = a_rows["value"].to_numpy(float)
        b[b_rows["i"].to_numpy(int)] = b_rows["value"].to_numpy(float)
        snapshots.append(TopologySnapshot(t=int(t), A=A, b=b))
    return snapshots


def _matrix_frame(M):
    return pd.DataFrame(np.asarray(M, dtype=float), columns=[f"c{k}" for k in range(M.shape[1])])


def write_observations(batches, X, directory):
    """One Y_tNNNN.csv per batch plus X.csv, each N rows by C columns."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(batches))))
    for batch in batches:
        write_frame(_matrix_frame(batch.Y), directory / f"Y_t{batch.t:0{width}d}.csv")
    write_frame(_matrix_frame(np.asarray(X)), directory / "X.csv")


def read_matrix_csv(path):
    return _read_frame(path).to_numpy(dtype=float)


def read_observations(y_dir, x_path):
    """
    Load an observation stream written by write_observations (or by hand).

    Args:
        y_dir: Directory holding Y_tNNNN.csv files
        x_path: Path of X.csv

    Returns:
        (X, list of ObservationBatch ordered by t)
    """
    y_dir = Path(y_dir)
    if not y_dir.is_dir():
        raise ArtifactError(f"Observation directory not found: {y_dir}")
    X = read_matrix_csv(x_path)
    files = sorted((int(m.group(1)), p) for p in y_dir.iterdir() if (m := Y_PATTERN.match(p.name)))
    if not files:
        raise ArtifactError(f"No Y_tNNNN.csv files in {y_dir}")
    times = [t for t, _ in files]
    if times != list(range(1, len(files) + 1)):
        raise ArtifactError(f"{y_dir}: time indices must run 1..{len(files)} without gaps")

    batches = []
    for t, path in files:
        Y = read_matrix_csv(path)
        if Y.shape != X.shape:
            raise DimensionMismatch(f"{path.name}: shape {Y.shape} != X shape {X.shape}")
        batches.append(ObservationBatch(t=t, Y=Y, X=X))
    logger.info(f"Loaded {len(batches)} observation batches of shape {X.shape} from {y_dir}")
    return X, batches


def write_comparators_csv(trace, path):
    """Rows (t, i, coordinate, value, converged, iterations)."""
    N, T, D = trace.v_star.shape
    i, t, k = np.meshgrid(np.arange(N), np.arange(1, T + 1), np.arange(D), indexing="ij")
    frame = pd.DataFrame({
        "t": t.ravel(), "i": i.ravel(), "coordinate": k.ravel(), "value": trace.v_star.ravel(),
        "converged": np.repeat(trace.converged.ravel(), D),
        "iterations": np.repeat(trace.iterations.ravel(), D),
    })
    write_frame(frame.sort_values(["t", "i", "coordinate"], kind="stable"), path)


def write_traces_csv(report, path):
    """Rows (t, regret_cumulative, regret_window_cumulative, bound_cumulative, mse)."""
    T = report.regret_trace.shape[0]
    nan = np.full(T, np.nan)
    frame = pd.DataFrame({
        "t": np.arange(1, T + 1),
        "regret_cumulative": report.regret_trace,
        "regret_window_cumulative": report.window_regret_trace,
        "bound_cumulative": nan if report.bound_trace is None else report.bound_trace,
        "mse": nan if report.mse_trace is None else report.mse_trace,
    })
    write_frame(frame, path)


def write_json(document, path):
    Path(path).write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def checksums(directory, exclude=("metadata.json",)):
    """sha256 of every file below ``directory``, keyed by relative POSIX path."""
    directory = Path(directory)
    return {p.relative_to(directory).as_posix(): file_checksum(p)
            for p in sorted(directory.rglob("*")) if p.is_file() and p.name not in exclude}


@contextmanager
def staged_output(output_dir):
    """
    Yield a temporary sibling directory and move it onto ``output_dir`` on success.

    An existing ``output_dir`` is replaced; on failure nothing is left behind.
    """
    output_dir = Path(output_dir)
    output_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{output_dir.name}.", dir=output_dir.parent))
    _active_staging.add(staging)
    try:
        yield staging
        if output_dir.exists():
            shutil.rmtree(output_dir)
        staging.rename(output_dir)
        logger.info(f"Artifacts written to {output_dir}")
    finally:
        _active_staging.discard(staging)
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)


def cleanup_staging():
    """Remove staging directories of interrupted runs."""
    for staging in list(_active_staging):
        shutil.rmtree(staging, ignore_errors=True)
        _active_staging.discard(staging)
        logger.info(f"Removed staging directory {staging}")
