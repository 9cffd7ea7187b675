"""I/O utilities for the pmsearch package.

This module groups the file helpers shared by the index, the trainer and the
command-line runner.

Notes:
- Every artifact (index files, run files, model files, reports) is written
  atomically: a temporary file in the target directory is renamed over the
  destination with ``os.replace``.
- JSON is canonical: sorted keys, compact separators, UTF-8 text. Floats
  use Python's shortest round-trip representation, so
  serialize -> deserialize -> serialize is byte-identical.
- Table exports are tab-separated for .txt/.dat, comma-separated for .csv;
  .xlsx needs the optional openpyxl dependency.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, List, Sequence, Union

try:
    import openpyxl  # type: ignore
    OPENPYXL_AVAILABLE = True
except Exception:  # pragma: no cover
    openpyxl = None  # type: ignore
    OPENPYXL_AVAILABLE = False


_SUPPORTED_FORMATS = (".csv", ".txt", ".dat", ".xlsx")

PathLike = Union[str, Path]


def list_supported_formats() -> List[str]:
    """Return the list of supported table export extensions."""
    return list(_SUPPORTED_FORMATS)


def dumps_canonical(obj: Any) -> str:
    """Serialize ``obj`` to canonical JSON text (no trailing newline)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _default_file_mode() -> int:
    """Mode a plain ``open(path, "w")`` would give a new file."""
    umask = os.umask(0)
    os.umask(umask)
    return 0o666 & ~umask


def atomic_write_text(filepath: PathLike, text: str) -> Path:
    """Write ``text`` to ``filepath`` atomically.

    Parent directories are created. On failure the temporary file is removed
    and the destination is left untouched.

    Returns:
        Path to the written file.
    """
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        # mkstemp creates 0600
        os.chmod(tmp_name, _default_file_mode())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def write_json(filepath: PathLike, obj: Any) -> Path:
    """Write ``obj`` as canonical JSON followed by a newline, atomically."""
    return atomic_write_text(filepath, dumps_canonical(obj) + "\n")


def read_json(filepath: PathLike) -> Any:
    """Read a JSON file written by :func:`write_json`."""
    with open(Path(filepath), "r", encoding="utf-8") as f:
        return json.load(f)


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def export_table(
    *,
    header: Sequence[str],
    rows: Sequence[Sequence[Any]],
    output_path: PathLike,
) -> Path:
    """Export a small table (one header line plus rows).

    Args:
        header: Column names.
        rows: Table rows, each with ``len(header)`` cells.
        output_path: Destination; the extension selects the format.

    Returns:
        Path to the written file.

    Raises:
        ValueError: On unsupported extension, ragged rows or a missing
            openpyxl for .xlsx.
    """
    out_path = Path(output_path).expanduser()
    ext = out_path.suffix.lower()
    if ext not in _SUPPORTED_FORMATS:
        raise ValueError(f"Unsupported extension: {ext}")

    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"Row {i} has {len(row)} cells, header has {width}")

    if ext == ".xlsx":
        if not OPENPYXL_AVAILABLE:
            raise ValueError("openpyxl is required for .xlsx export.")
        out_path.parent.mkdir(parents=True, exist_ok=True)
        workbook = openpyxl.Workbook()
        sheet = workbook.active
        sheet.title = "metrics"
        sheet.append(list(header))
        for row in rows:
            sheet.append(list(row))
        workbook.save(out_path)
        return out_path

    buffer = io.StringIO()
    delimiter = "," if ext == ".csv" else "\t"
    writer = csv.writer(buffer, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(cell) for cell in row])
    return atomic_write_text(out_path, buffer.getvalue())
