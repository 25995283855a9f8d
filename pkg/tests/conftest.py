import sys
from importlib.resources import files
from pathlib import Path

import pytest

from imds_verify.model import elaborate
from imds_verify.scenario import generate, parse_graph
from imds_verify.syntax import parse

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = files("imds_verify").joinpath("fixtures")
IMDS_FIXTURES = ["minimal.imds", "two_amp.imds", "two_amp_verbatim.imds"]
AMG_FIXTURES = ["corridor.amg", "single_amp.amg", "road_noavoid.amg", "road_avoid.amg"]
ALL_FIXTURES = IMDS_FIXTURES + AMG_FIXTURES


def fixture_path(name: str) -> Path:
    return Path(str(FIXTURES.joinpath(name)))


def fixture_decl(name: str):
    text = FIXTURES.joinpath(name).read_text()
    if name.endswith(".amg"):
        return generate(*parse_graph(text))
    return parse(text).decl


def strict_for(name: str) -> bool:
    return name != "two_amp_verbatim.imds"


def load(name: str):
    return elaborate(fixture_decl(name), strict=strict_for(name))


@pytest.fixture(scope="session")
def systems():
    return {name: load(name) for name in ALL_FIXTURES}


_ACCEPTANCE = {}  # criterion number -> (title, [(item, status, detail)])


def record_acceptance(number: int, title: str, item: str, status: str, detail: str = ""):
    _ACCEPTANCE.setdefault(number, (title, []))[1].append((item, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, items = _ACCEPTANCE[number]
        failed = [f"{i}: {d}" for i, s, d in items if s == "FAIL"]
        skipped = [i for i, s, _ in items if s == "SKIP"]
        if failed:
            line = f"FAIL  {number}. {title} -- " + "; ".join(failed)
        else:
            note = f" ({', '.join(skipped)} skipped)" if skipped else ""
            line = f"PASS  {number}. {title}{note}"
        terminalreporter.write_line(line)
