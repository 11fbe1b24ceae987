import pytest

from bilevel_sched.core import Instance, Job, MachinePark


def tie_jobs():
    return [Job(1, 1, 4, 7), Job(2, 2, 3, 2), Job(3, 3, 5, 5)]


@pytest.fixture
def tie_instance():
    """Three jobs on a single speed-1 machine, select two."""
    return Instance(tuple(tie_jobs()), MachinePark(m0=1, m1=0, V0=1, V1=2), 2)


@pytest.fixture
def two_speed_park():
    return MachinePark(m0=1, m1=1, V0=1, V1=2)


# ------------------------------------------------------- acceptance reporting

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance_report(request, capsys):
    """``report(number, ok, detail)`` prints and records one criterion line."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
