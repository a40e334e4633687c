"""
Trace storage on the local filesystem

Each run is stored as a CSV trace plus a JSON manifest sidecar:

    <root>/<preset>/<method>/seed<k>.csv
    <root>/<preset>/<method>/seed<k>.manifest.json

Writes go to a temporary file in the target directory and are then renamed
into place, so concurrent batch runs never expose half-written files.
"""

import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from app.config import OUTPUT_DIR

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
NA_REP = "nan"
MANIFEST_SUFFIX = ".manifest.json"


class TraceStorageError(Exception):
    """Raised when a trace or manifest cannot be read or written"""
    pass


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    Write text to path through a temporary sibling file and os.replace.

    Args:
        path: Destination file
        text: Full file contents

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except OSError as e:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise TraceStorageError(f"failed to write {path}: {e}") from e
    return path


def dumps_json(data: Any) -> str:
    """Canonical JSON text used for manifests and config files"""
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: Union[str, Path], data: Any) -> Path:
    """Atomically write pretty-printed JSON with sorted keys"""
    return atomic_write_text(path, dumps_json(data))


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON file written by write_json"""
    path = Path(path)
    if not path.exists():
        raise TraceStorageError(f"{path} not found")
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def frame_to_csv(frame: pd.DataFrame) -> str:
    """CSV text of a trace frame; floats keep 17 significant digits"""
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, na_rep=NA_REP, lineterminator="\n")
    return buffer.getvalue()


def manifest_path_for(csv_path: Union[str, Path]) -> Path:
    """seed<k>.csv -> seed<k>.manifest.json"""
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + MANIFEST_SUFFIX)


def read_trace(csv_path: Union[str, Path]) -> pd.DataFrame:
    """Load a trace CSV back into a frame"""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise TraceStorageError(f"{csv_path} not found")
    try:
        return pd.read_csv(csv_path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise TraceStorageError(f"{csv_path}: {e}") from e


def read_manifest(csv_path: Union[str, Path]) -> Dict[str, Any]:
    """Load the manifest paired with a trace CSV"""
    return read_json(manifest_path_for(csv_path))


class TraceStorage:
    """Local trace storage rooted at one output directory"""

    def __init__(self, root: Union[str, Path] = OUTPUT_DIR):
        """
        Initialize trace storage.

        Args:
            root: Output directory (created on first write)
        """
        self.root = Path(root)

    def trace_path(self, preset: str, method: str, seed: int) -> Path:
        """Path of the CSV trace of one run"""
        return self.root / preset / method / f"seed{seed}.csv"

    def manifest_path(self, preset: str, method: str, seed: int) -> Path:
        """Path of the manifest sidecar of one run"""
        return manifest_path_for(self.trace_path(preset, method, seed))

    def summary_path(self, preset: str) -> Path:
        """Path of the comparison summary of a preset"""
        return self.root / preset / "summary.csv"

    def save_trace(self, trace) -> Path:
        """
        Write a RunTrace and its manifest.

        Args:
            trace: RunTrace from the simulator

        Returns:
            Path of the CSV file
        """
        config = trace.config
        method = config.algorithm.method.value
        csv_path = self.trace_path(config.preset, method, config.seed)
        atomic_write_text(csv_path, frame_to_csv(trace.frame))
        write_json(manifest_path_for(csv_path), trace.manifest)
        logger.debug(f"✓ Saved trace {csv_path}")
        return csv_path

    def save_summary(self, preset: str, frame: pd.DataFrame) -> Path:
        """Write the comparison summary table of a preset"""
        path = self.summary_path(preset)
        atomic_write_text(path, frame_to_csv(frame))
        return path

    def list_traces(self, preset: Optional[str] = None) -> List[Path]:
        """All stored trace CSVs, optionally for one preset"""
        base = self.root / preset if preset else self.root
        if not base.exists():
            return []
        pattern = "*/seed*.csv" if preset else "*/*/seed*.csv"
        return sorted(base.glob(pattern))
