import numpy as np
import pytest

from mtewelfare import DgpSpec, PolicyClass, reference_spec

_ACCEPTANCE = []


@pytest.fixture
def ref():
    return reference_spec()


@pytest.fixture
def xclass():
    return PolicyClass.power_set(on="x")


def make_spec(**overrides):
    d = reference_spec().to_dict()
    d.update(overrides)
    return DgpSpec(**d)


@pytest.fixture
def acceptance_log():
    def record(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
