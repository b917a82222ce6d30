import logging
import os
from typing import Iterable, Optional, Tuple, Any

import pandas as pd

from .exceptions import StorageError
from .lock_manager import LockManager

logger = logging.getLogger(__name__)

Provenance = Iterable[Tuple[str, Any]]

_default_locks = LockManager()


def atomic_write_text(path: str, text: str) -> None:
    """Writes a text file atomically.

    The content goes to ``<path>.tmp`` first, is flushed to disk with
    ``os.fsync`` and then swapped in with ``os.replace``.

    Args:
        path: Destination file.
        text: Full file content.

    Raises:
        StorageError: If writing fails. The temp file is removed.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    temp_path = f"{path}.tmp"
    try:
        with open(temp_path, "w", newline="") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(temp_path, path)
    except (IOError, OSError) as e:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise StorageError(f"Failed to write '{path}': {e}")


def provenance_header(provenance: Optional[Provenance]) -> str:
    """Renders ``# key = value`` lines for the top of a report."""
    if not provenance:
        return ""
    return "".join(f"# {key} = {value}\n" for key, value in provenance)


def write_csv_report(path: str, frame: pd.DataFrame, provenance: Optional[Provenance] = None) -> None:
    """Writes a CSV report with its provenance header, atomically.

    Args:
        path: Destination file.
        frame: Rows to write; columns become the header row.
        provenance: Optional (key, value) pairs echoed as comment lines.
    """
    body = frame.to_csv(index=False, lineterminator="\n")
    atomic_write_text(path, provenance_header(provenance) + body)
    logger.info("wrote %d rows to %s", len(frame), path)


def append_csv_rows(path: str, frame: pd.DataFrame, provenance: Optional[Provenance] = None,
                    locks: Optional[LockManager] = None) -> None:
    """Appends rows to a shared CSV report under its file lock.

    The first writer creates the file with the provenance header and the
    column header; later writers append bare rows.

    Args:
        path: Shared report file.
        frame: Rows to append.
        provenance: Header pairs, used only when the file is created.
        locks: Lock manager to use (module default when omitted).

    Raises:
        ReportBusyError: If the lock cannot be acquired.
        StorageError: If the append fails.
    """
    locks = locks or _default_locks
    with locks.locked(path):
        if not os.path.exists(path):
            write_csv_report(path, frame, provenance)
            return
        try:
            with open(path, "a", newline="") as f:
                f.write(frame.to_csv(index=False, header=False, lineterminator="\n"))
                f.flush()
                os.fsync(f.fileno())
        except (IOError, OSError) as e:
            raise StorageError(f"Failed to append to '{path}': {e}")
