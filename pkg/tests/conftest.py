from pathlib import Path

import pytest

from ringlab.config import parse_config
from ringlab.output import run_to_directory
from ringlab.report import analyze_directory

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

_verdicts: list[tuple[int, bool, str]] = []


class RunCache:
    """Runs each shipped config at most once per session."""

    def __init__(self, root: Path):
        self.root = root
        self._runs: dict[str, tuple] = {}

    def get(self, name: str):
        """``(result, outdir, analysis)`` for ``configs/<name>.yaml``."""
        if name not in self._runs:
            rc = parse_config(CONFIGS / f"{name}.yaml")
            out = self.root / name
            result = run_to_directory(rc, out)
            report = analyze_directory(out / "series.csv", out, out / "analysis", figures=False)
            self._runs[name] = (result, out, report)
        return self._runs[name]


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return RunCache(tmp_path_factory.mktemp("runs"))


@pytest.fixture(scope="session")
def record_verdict():
    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _verdicts.append((number, ok, line))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_verdicts):
        terminalreporter.write_line(line)
