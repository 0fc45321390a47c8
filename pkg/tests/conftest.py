from __future__ import annotations

import numpy as np
import pytest

from artifact.differential import RDifferential
from artifact.iteration import SolverConfig, disk_exhaustion_solve

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda s: int(s[2:])):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_SOLVED: dict = {}


def solved_disk(r: int, m: int = 1, h: float = 0.02):
    """Complete solution for q = z^m dz^r on the unit disk (cached per session)."""
    key = (r, m, h)
    if key not in _SOLVED:
        q = RDifferential.monomial(m, r)
        _SOLVED[key] = (q, disk_exhaustion_solve(q, SolverConfig(spacing=h)))
    return _SOLVED[key]


@pytest.fixture(scope="session")
def disk_solutions():
    """q = z dz^r, r = 3, 4, 5, spacing 0.02."""
    return {r: solved_disk(r) for r in (3, 4, 5)}
