import json
import time
from pathlib import Path

import pytest

from shapelim.envelope import envelope_table
from shapelim.experiments.montecarlo import mc_pointwise
from shapelim.model import make_density_model

CONFIG_PATH = Path(__file__).with_name("acceptance_config.json")
_REPORT: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: one of the numbered acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_REPORT, key=lambda c: (int(c.split(".")[0]), c)):
        ok, detail = _REPORT[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def acceptance_config():
    return json.loads(CONFIG_PATH.read_text())


@pytest.fixture(scope="session")
def report():
    """``report(criterion, ok, detail)`` records one line for the terminal summary."""

    def record(criterion: str, ok: bool, detail: str) -> bool:
        prev = _REPORT.get(criterion)
        if prev is not None:
            ok = ok and prev[0]
            detail = f"{prev[1]}; {detail}"
        _REPORT[criterion] = (bool(ok), detail)
        return bool(ok)

    return record


@pytest.fixture(scope="session")
def k2_table(acceptance_config):
    """The R=2000 k=2 envelope table shared by the envelope and limit-law criteria."""
    c = acceptance_config["envelope"]
    t0 = time.perf_counter()
    table = envelope_table(c["k"], c["K"], c["h"], c["R"], c["seed"], workers=1)
    return table, time.perf_counter() - t0


@pytest.fixture(scope="session")
def rates_run(acceptance_config):
    c = acceptance_config["rates"]
    return mc_pointwise(make_density_model("gaussian"), c["n_grid"], c["R"], c["seed"], x0=c["x0"], workers=1)


@pytest.fixture(scope="session")
def limit_law_run(acceptance_config):
    c = acceptance_config["limit_law"]
    return mc_pointwise(make_density_model("gaussian"), [c["n"]], c["R"], c["seed"], x0=c["x0"], workers=1)
