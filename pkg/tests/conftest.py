import numpy as np
import pytest

from haptofem.mesh import TriMesh, generate_unit_square_mesh


@pytest.fixture(scope="session")
def unit_triangle():
    return TriMesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture(scope="session")
def mesh2():
    return generate_unit_square_mesh(2)


@pytest.fixture(scope="session")
def mesh8():
    return generate_unit_square_mesh(8)


def read_legacy_vtk(path):
    """Minimal reader for the ASCII files written by haptofem.io.write_vtk."""
    tokens = open(path).read().split("\n")
    assert tokens[0] == "# vtk DataFile Version 3.0"
    it = iter(tokens[2:])
    out = {"scalars": {}, "vectors": {}}
    for line in it:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([[float(t) for t in next(it).split()] for _ in range(n)])
        elif key == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([[int(t) for t in next(it).split()] for _ in range(n)])
        elif key == "CELL_TYPES":
            out["cell_types"] = [int(next(it)) for _ in range(int(parts[1]))]
        elif key == "POINT_DATA":
            npts = int(parts[1])
        elif key == "SCALARS":
            assert next(it).startswith("LOOKUP_TABLE")
            out["scalars"][parts[1]] = np.array([float(next(it)) for _ in range(npts)])
        elif key == "VECTORS":
            out["vectors"][parts[1]] = np.array([[float(t) for t in next(it).split()] for _ in range(npts)])
    return out


VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the acceptance summary; returns a callable."""
    store = request.config.stash.setdefault(VERDICTS, [])

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip()
        store.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
