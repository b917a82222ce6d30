"""
Lock Manager for report files
Serializes concurrent writers (parallel benchmark repetitions) of one CSV
"""
import os
import time
from contextlib import contextmanager
from typing import Iterator, List

from .exceptions import ReportBusyError


class LockManager:
    """Manages exclusive-create lock files next to the reports they guard."""

    def __init__(self, timeout: float = 30.0, retry_interval: float = 0.05) -> None:
        """
        Initialize the lock manager.

        Args:
            timeout: Maximum time to wait for a lock (seconds)
            retry_interval: Time between lock acquisition attempts (seconds)
        """
        self.timeout = timeout
        self.retry_interval = retry_interval

    @staticmethod
    def lock_path(report_path: str) -> str:
        """Get the path to the lock file for a report."""
        return f"{report_path}.lock"

    def acquire_lock(self, report_path: str) -> None:
        """
        Acquire the lock on a report file.

        Args:
            report_path: Report the caller is about to write

        Raises:
            ReportBusyError: If the lock cannot be acquired within timeout
        """
        lock_path = self.lock_path(report_path)
        start_time = time.monotonic()

        while True:
            try:
                # 'x' fails if the file already exists
                with open(lock_path, "x") as f:
                    f.write(f"Locked at {time.time()}\n")
                    f.write(f"PID: {os.getpid()}\n")
                return
            except FileExistsError:
                if time.monotonic() - start_time >= self.timeout:
                    raise ReportBusyError(
                        f"Could not acquire lock on '{report_path}' "
                        f"after {self.timeout} seconds."
                    )
                time.sleep(self.retry_interval)

    def release_lock(self, report_path: str) -> None:
        """
        Release the lock on a report file. Safe to call when no lock exists.

        Args:
            report_path: Report whose lock is released
        """
        try:
            os.remove(self.lock_path(report_path))
        except OSError:
            pass

    def is_locked(self, report_path: str) -> bool:
        """Check if a report is currently locked."""
        return os.path.exists(self.lock_path(report_path))

    @contextmanager
    def locked(self, report_path: str) -> Iterator[None]:
        """Hold the report lock for the duration of a ``with`` block."""
        self.acquire_lock(report_path)
        try:
            yield
        finally:
            self.release_lock(report_path)

    def cleanup_stale_locks(self, directory: str, max_age: float = 300) -> List[str]:
        """
        Remove lock files older than max_age seconds.

        Args:
            directory: Directory holding reports and their locks
            max_age: Maximum age of lock files in seconds (default: 5 minutes)

        Returns:
            List[str]: Report paths whose stale locks were removed
        """
        if not os.path.isdir(directory):
            return []

        now = time.time()
        cleaned = []
        for filename in os.listdir(directory):
            if not filename.endswith(".lock"):
                continue
            lock_path = os.path.join(directory, filename)
            try:
                if now - os.path.getmtime(lock_path) > max_age:
                    os.remove(lock_path)
                    cleaned.append(lock_path[: -len(".lock")])
            except OSError:
                # removed by another process in the meantime
                pass
        return cleaned
