import json
import subprocess
import sys

import pytest

from meshkit.cli import main
from meshkit.mesh import Mesh, demo_dir

REQUEST = {
    "object_type": "dataset",
    "hosting_platform_id": "nodeA",
    "primary_platform_pid": "guid:nodea/extra1",
    "metadata": {"title": "Extra", "description": "An extra dataset", "access_tier": "open"},
    "submitted_by": "contributor_portal",
}


@pytest.fixture(scope="module")
def served():
    with Mesh.demo(serve=True) as mesh:
        mesh.hub.harvest()
        yield mesh


def write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def test_register_prints_pid_and_is_idempotent(served, tmp_path, capsys):
    req = write(tmp_path, "req.json", REQUEST)
    assert main(["register", req, "--dmms", served.dmms_url]) == 0
    first = capsys.readouterr().out.strip()
    assert first.startswith("mesh:demo-mesh/")
    assert main(["register", req, "--dmms", served.dmms_url]) == 0
    assert capsys.readouterr().out.strip() == first
    assert str(served.registry.get(first).primary_platform_pid) == "guid:nodea/extra1"


def test_register_invalid_metadata(served, tmp_path, capsys):
    bad = dict(REQUEST, primary_platform_pid="guid:nodea/extra2", metadata={"title": "No description"})
    assert main(["register", write(tmp_path, "bad.json", bad), "--dmms", served.dmms_url]) != 0
    out = capsys.readouterr().out
    assert "SCHEMA_VIOLATION" in out and "MISSING_FIELD description" in out


def test_search_matches_direct(served, capsys):
    assert main(["search", "--hub", served.hub_url, "--json"]) == 0
    cli = json.loads(capsys.readouterr().out)["results"]
    direct = [r.to_json() for r in served.hub.search()]
    assert {r["record"]["mesh_pid"]: r["availability"] for r in cli} == \
        {r["record"]["mesh_pid"]: r["availability"] for r in direct}


def test_search_with_user_token(served, capsys):
    args = ["search", "--hub", served.hub_url, "--platform", "nodeA", "--user", "u1", "--secret", "u1-pass",
            "--node", served.node_urls["nodeA"]]
    assert main(args) == 0
    rows = [ln.split("\t") for ln in capsys.readouterr().out.splitlines()]
    assert {r[2] for r in rows} == {"available"}
    assert len(rows) == len(served.hub.search(platform="nodeA")) >= 3


def test_access_and_usage_report(tmp_path, capsys):
    assert main(["access", "--demo", "--mesh-pid", "mesh:demo-mesh/none", "--aae", "aae-demo"]) == 1
    assert "UNKNOWN_PID" in capsys.readouterr().out


def test_usage_report_figure(served, tmp_path, capsys):
    pid = next(str(r.mesh_pid) for r in served.registry.records()
               if str(r.primary_platform_pid) == "guid:nodea/a1")
    assert main(["access", "--hub", served.hub_url, "--mesh-pid", pid, "--aae", "aae-demo"]) == 0
    capsys.readouterr()
    assert main(["usage-report", "--hub", served.hub_url, "--figures", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert f"nodeA\t{pid}\t1\t" in out
    assert (tmp_path / "usage.png").read_bytes()[:4] == b"\x89PNG"


def test_federate_round_trip(served, tmp_path, capsys):
    req = write(tmp_path, "wf.json", {"workflow_id": "cli-wf", "approved": True,
                                      "target_platforms": ["nodeA", "nodeB"],
                                      "computation": {"aggregate": "count"}, "submitter": "u1"})
    auth = ["--user", "u1", "--secret", "u1-pass", "--node", served.node_urls["nodeA"]]
    assert main(["federate", "--hub", served.hub_url, "--request", req, *auth]) == 0
    assert "pending_review" in capsys.readouterr().out
    assert main(["federate", "--hub", served.hub_url, "--workflow", "cli-wf", "--review", "released",
                 "--reviewer", "dac"]) == 0
    out = capsys.readouterr().out
    assert "nodeA\tok\t3" in out and "nodeB\tok\t2" in out
    unapproved = write(tmp_path, "wf2.json", {"approved": False, "target_platforms": ["nodeA"],
                                               "computation": {"aggregate": "count"}})
    assert main(["federate", "--hub", served.hub_url, "--request", unapproved]) == 1
    assert "NOT_APPROVED" in capsys.readouterr().out


def test_conformance_exit_codes(served, tmp_path, capsys):
    assert main(["conformance", served.node_urls["nodeA"], "--node"]) == 0
    assert "score: 5/5" in capsys.readouterr().out
    desc = tmp_path / "mesh.json"
    desc.write_text(json.dumps(served.mesh_descriptor()))
    assert main(["conformance", str(desc), "--mesh", "--format", "json", "--figures", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["overall"] == "pass"
    assert (tmp_path / "conformance-mesh.png").exists()
    assert main(["conformance", "http://127.0.0.1:9", "--node"]) == 2


def test_conformance_mutated_node_exit_1(capsys):
    with Mesh.serve(*_faulted_fixtures()) as mesh:
        assert main(["conformance", mesh.node_urls["nodeA"], "--node"]) == 1
    assert "pillar 2 failed:" in capsys.readouterr().out


def _faulted_fixtures():
    from meshkit.mesh import ScenarioConfig, load_fixtures

    manifest, configs = load_fixtures(ScenarioConfig.demo())
    configs[0].faults = {"no_metadata_endpoint"}
    return manifest, configs


def test_conformance_demo(capsys):
    assert main(["conformance", "--mesh", "--demo"]) == 0
    assert "score: 5/5" in capsys.readouterr().out


def test_mesh_up_endpoint_table(tmp_path):
    endpoints = tmp_path / "endpoints.json"
    proc = subprocess.run(
        [sys.executable, "-m", "meshkit", "mesh", "up", "--port", "0", "--duration", "0.2",
         "--endpoints-file", str(endpoints)],
        capture_output=True, text=True, timeout=30,
    )
    assert proc.returncode == 0, proc.stderr
    rows = [ln.split() for ln in proc.stdout.splitlines()]
    assert [r[0] for r in rows] == ["dmms", "hub", "node:nodeA", "node:nodeB"]
    assert all(int(r[1].rsplit(":", 1)[1]) > 0 for r in rows)
    assert set(json.loads(endpoints.read_text())["nodes"]) == {"nodeA", "nodeB"}


def test_mesh_up_missing_fixture(tmp_path, capsys):
    scenario = json.loads((demo_dir() / "scenario.json").read_text())
    scenario["nodes"] = [str(tmp_path / "nope.json")]
    scenario["manifest"] = str(demo_dir() / "manifest.json")
    cfg = write(tmp_path, "scenario.json", scenario)
    assert main(["mesh", "up", "--config", cfg, "--duration", "0"]) == 2
    err = capsys.readouterr().err
    assert "BadFixture" in err and "nope.json" in err
