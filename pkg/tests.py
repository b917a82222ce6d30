"""
Runs the test scripts in dependency order, each in its own interpreter.

    python tests.py                 # everything
    python tests.py solver engine   # only test_solver.py and test_engine.py
"""
import os
import subprocess
import sys
import time

# bottom-up: parsing and storage first, the command line last
TEST_FILES = [
    "test_parser.py",
    "test_storage.py",
    "test_concurrency.py",
    "test_dataset.py",
    "test_metrics.py",
    "test_knn_graph.py",
    "test_coarsening.py",
    "test_solver.py",
    "test_model_selection.py",
    "test_engine.py",
    "test_config.py",
    "test_cli.py",
]


def select(names):
    if not names:
        return list(TEST_FILES)
    chosen = []
    for name in names:
        filename = name if name.endswith(".py") else f"test_{name.removeprefix('test_')}.py"
        if filename not in TEST_FILES:
            print(f"Unknown test '{name}'; choose from: {', '.join(f[5:-3] for f in TEST_FILES)}", file=sys.stderr)
            sys.exit(2)
        chosen.append(filename)
    return chosen


def run_test_file(filename):
    print(f"Running {filename}...")
    started = time.perf_counter()
    try:
        result = subprocess.run([sys.executable, filename], capture_output=True, text=True)
    except OSError as e:
        print(f"Failed to execute {filename}: {e}", file=sys.stderr)
        return False, time.perf_counter() - started
    seconds = time.perf_counter() - started

    print(result.stdout)
    if result.stderr:
        print(f"Error Output:\n{result.stderr}", file=sys.stderr)
    # '[x]' marks a failed check
    ok = result.returncode == 0 and "[x]" not in result.stdout
    return ok, seconds


def main():
    summary = []
    for test in select(sys.argv[1:]):
        if not os.path.exists(test):
            print(f"Warning: Test file {test} not found, skipping.")
            continue
        ok, seconds = run_test_file(test)
        summary.append((test, ok, seconds))
        print(f"{'PASSED' if ok else 'FAILED'}: {test} ({seconds:.1f}s)")
        print("-" * 40)

    width = max((len(t) for t, _, _ in summary), default=0)
    for test, ok, seconds in sorted(summary, key=lambda s: -s[2]):
        print(f"{test:<{width}}  {'ok ' if ok else 'FAIL'}  {seconds:8.1f}s")
    print(f"{'total':<{width}}        {sum(s for _, _, s in summary):8.1f}s")

    if not all(ok for _, ok, _ in summary):
        print("Final Result: FAIL")
        sys.exit(1)
    print("Final Result: ALL TESTS PASSED")


if __name__ == "__main__":
    main()
