import pytest

from lamehardy.geometry import build_sphere_surface

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}

_MESHES = {}


def sphere(level, m=3):
    """Unit sphere meshes shared across the whole session."""
    key = (m, level)
    if key not in _MESHES:
        _MESHES[key] = build_sphere_surface(m, level)
    return _MESHES[key]


@pytest.fixture(scope="session")
def mesh_of():
    return sphere


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
