import pytest

from spinsplit.config import RunConfig
from spinsplit.dataset import run_acquisition

ACCEPTANCE_LINES = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_squeezed():
    cfg = RunConfig.from_dict({"seed": 11, "acquisition": {"n_subsets": 3, "y": 30, "z": 30}})
    return run_acquisition(cfg)


@pytest.fixture(scope="session")
def small_css_truth():
    cfg = RunConfig.from_dict(
        {"seed": 12, "state": {"kind": "css"}, "acquisition": {"n_subsets": 2, "y": 10, "z": 10, "store_truth": True}}
    )
    return run_acquisition(cfg)
