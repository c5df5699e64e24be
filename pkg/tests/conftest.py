import json

import pytest

from meshkit.mesh import Mesh, ScenarioConfig, demo_dir, load_fixtures


@pytest.fixture
def demo_cfg():
    return ScenarioConfig.demo()


@pytest.fixture
def raw_nodes():
    """The shipped node fixtures as plain JSON, for oracles that bypass meshkit."""
    return {d["platform_id"]: d for d in (json.loads(p.read_text()) for p in sorted(demo_dir().glob("node_*.json")))}


@pytest.fixture
def fixtures(demo_cfg):
    return load_fixtures(demo_cfg)


@pytest.fixture
def mesh():
    return Mesh.demo()


@pytest.fixture
def harvested(mesh):
    mesh.hub.harvest()
    return mesh


def mesh_pid_for(mesh, primary):
    for rec in mesh.registry.records():
        if str(rec.primary_platform_pid) == primary:
            return rec.mesh_pid
    raise KeyError(primary)


@pytest.fixture
def pid_of(harvested):
    return lambda primary: mesh_pid_for(harvested, primary)


@pytest.fixture
def tokens(mesh):
    node = mesh.nodes["nodeA"]
    return {u: node.authenticate(u, f"{u}-pass")[1] for u in ("u1", "u2", "u3")}


# -- acceptance summary -------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion check")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _CRITERIA.get(n, (title, "PASS"))[1]
    _CRITERIA[n] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, verdict = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {verdict} - {title}")
