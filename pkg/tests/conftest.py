import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

MNIST_CANDIDATES = [
    os.environ.get("APOPTOSIS_MNIST_DIR", ""),
    str(Path(__file__).resolve().parents[1] / "data" / "mnist"),
    "/root/data/mnist",
]
MNIST_FILES = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]

_verdicts = pytest.StashKey[dict]()


def _resolve(d: Path, name: str) -> Path | None:
    for candidate in (d / name, d / (name + ".gz")):
        if candidate.exists():
            return candidate
    return None


@pytest.fixture(scope="session")
def mnist_files():
    """Paths of the four MNIST IDX files, or None when they are not on disk."""
    for d in MNIST_CANDIDATES:
        if not d:
            continue
        paths = [_resolve(Path(d), name) for name in MNIST_FILES]
        if all(paths):
            return paths
    return None


def pytest_configure(config):
    config.stash[_verdicts] = {}


@pytest.fixture
def verdict(request):
    """Record one acceptance line, then fail (or skip) the test to match.

    ``passed=None`` marks a criterion that could not be evaluated here.
    """

    def record(number: int, title: str, passed: bool | None, detail: str) -> None:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        request.config.stash[_verdicts][number] = f"criterion {number:>2} {status}  {title}: {detail}"
        if passed is None:
            pytest.skip(detail)
        assert passed, f"criterion {number} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_verdicts, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
