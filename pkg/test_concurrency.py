"""
Report Locking Test Suite
Tests file-based locking for parallel writers of one CSV report
"""
import os
import shutil
import threading
import time

import pandas as pd

from mlsvm.exceptions import ReportBusyError
from mlsvm.lock_manager import LockManager
from mlsvm.storage import append_csv_rows

TEST_DIR = "test_lock_data"


def _fresh_dir():
    if os.path.exists(TEST_DIR):
        shutil.rmtree(TEST_DIR)
    os.makedirs(TEST_DIR)


def test_acquire_release():
    print("\n[TEST 1] Basic Lock Acquisition and Release")
    _fresh_dir()
    report = os.path.join(TEST_DIR, "raw.csv")
    locks = LockManager(timeout=5.0)

    assert not locks.is_locked(report), "Lock should not exist initially"
    print("[v] No lock exists initially")
    locks.acquire_lock(report)
    assert locks.is_locked(report), "Lock should exist after acquisition"
    print("[v] Lock acquired successfully")
    locks.release_lock(report)
    assert not locks.is_locked(report), "Lock should not exist after release"
    print("[v] Lock released successfully")

    locks.release_lock(report)
    print("[v] Releasing twice is harmless")

    try:
        with locks.locked(report):
            assert locks.is_locked(report)
            raise RuntimeError("boom")
    except RuntimeError:
        pass
    assert not locks.is_locked(report)
    print("[v] Context manager releases on error")
    shutil.rmtree(TEST_DIR)


def test_timeout():
    print("\n[TEST 2] Lock Timeout (ReportBusyError)")
    _fresh_dir()
    report = os.path.join(TEST_DIR, "raw.csv")
    holder = LockManager(timeout=5.0)
    holder.acquire_lock(report)
    try:
        LockManager(timeout=0.2, retry_interval=0.02).acquire_lock(report)
        raise AssertionError("second acquire should time out")
    except ReportBusyError as e:
        print(f"[v] ReportBusyError raised: {e}")
    finally:
        holder.release_lock(report)
    shutil.rmtree(TEST_DIR)


def test_concurrent_appends():
    print("\n[TEST 3] Concurrent Appends")
    _fresh_dir()
    report = os.path.join(TEST_DIR, "raw.csv")
    errors = []

    def writer(thread_id):
        locks = LockManager(timeout=10.0, retry_interval=0.01)
        try:
            for i in range(5):
                row = pd.DataFrame({"thread": [thread_id], "rep": [i]})
                append_csv_rows(report, row, [("writer", thread_id)], locks)
                time.sleep(0.001)
        except Exception as e:
            errors.append(e)

    threads = [threading.Thread(target=writer, args=(t,)) for t in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert not errors, errors
    with open(report) as f:
        lines = f.read().splitlines()
    assert sum(1 for line in lines if line.startswith("#")) == 1
    assert lines.count("thread,rep") == 1
    frame = pd.read_csv(report, comment="#")
    assert len(frame) == 20
    assert sorted(zip(frame["thread"], frame["rep"])) == [(t, i) for t in range(4) for i in range(5)]
    print("[v] 20 rows from 4 threads, one header, nothing lost")
    shutil.rmtree(TEST_DIR)


def test_stale_locks():
    print("\n[TEST 4] Stale Lock Cleanup")
    _fresh_dir()
    report = os.path.join(TEST_DIR, "raw.csv")
    locks = LockManager()
    locks.acquire_lock(report)

    assert locks.cleanup_stale_locks(TEST_DIR, max_age=300) == []
    assert locks.is_locked(report)
    print("[v] Fresh lock kept")

    old = time.time() - 600
    os.utime(locks.lock_path(report), (old, old))
    assert locks.cleanup_stale_locks(TEST_DIR, max_age=300) == [report]
    assert not locks.is_locked(report)
    print("[v] Stale lock removed")
    assert locks.cleanup_stale_locks("no_such_directory") == []
    shutil.rmtree(TEST_DIR)


if __name__ == "__main__":
    test_acquire_release()
    test_timeout()
    test_concurrent_appends()
    test_stale_locks()
    print("\n[PASS] All locking tests passed")
