import pytest

from stabcode.presets import reference_plant, independent_scheme, md_scheme
from stabcode.synthesis import SynthesisConfig, synthesize_filters


@pytest.fixture(scope="session")
def plant():
    return reference_plant()


@pytest.fixture(scope="session")
def report72(plant):
    return synthesize_filters(plant, SynthesisConfig(7.2))


@pytest.fixture(scope="session")
def scheme32(plant):
    return independent_scheme(plant, 5.29, 3, 2)


@pytest.fixture(scope="session")
def scheme21(plant):
    return independent_scheme(plant, 6.91, 2, 1)


@pytest.fixture(scope="session")
def scheme_md(plant):
    return md_scheme(plant, 12.0, 3, 2, 5)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, checks: dict, elapsed: float | None = None):
        bad = [name for name, ok in checks.items() if not ok]
        status = "PASS" if not bad else "FAIL"
        timing = f" [{elapsed:.2f} s]" if elapsed is not None else ""
        detail = "; ".join(f"{name}: {'ok' if ok else 'MISS'}" for name, ok in checks.items())
        line = f"criterion {number:2d} {status}{timing} :: {detail}"
        _CRITERIA[number] = line
        print(line)
        assert not bad, f"criterion {number} failed: {', '.join(bad)}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
