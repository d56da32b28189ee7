import numpy as np
import pytest

from subdiff.mesh import build_graded_mesh, build_uniform_mesh, random_mesh


def mesh_battery(N, n_random=50, seed=2024):
    """Uniform, graded gamma in {1, 2, 3, 5} and random meshes with local
    ratios in [4/7, 7/4]."""
    meshes = [("uniform", build_uniform_mesh(N))]
    meshes += [(f"graded{g}", build_graded_mesh(g, N)) for g in (1, 2, 3, 5)]
    rng = np.random.default_rng(seed)
    meshes += [(f"random{i}", random_mesh(N, rng=rng)) for i in range(n_random)]
    return meshes


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results: (criterion, label, ok, detail), printed in the summary
ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    log = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(criterion, label, ok, detail=""):
        log.append((criterion, label, bool(ok), detail))
        print(f"criterion {criterion} [{label}]: {'PASS' if ok else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted({c for c, *_ in log}):
        items = [x for x in log if x[0] == crit]
        ok = all(x[2] for x in items)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for _, label, good, detail in items:
            terminalreporter.write_line(f"    {'ok  ' if good else 'FAIL'} {label}: {detail}")
