import hashlib
import json

import pytest

from meshkit.errors import BadRequest, NotApproved, NotFound, NotPending, UnknownPlatform
from meshkit.federated import WorkflowRequest


def oracle(raw_nodes, issuer, username, flt, aggregate):
    """Brute-force aggregate per platform straight from the fixture JSON."""
    user = next((u for u in raw_nodes[issuer]["users"] if u["username"] == username), None)
    visas = {v["scope_pid"] for v in user["visas"]} if user else set()
    out = {}
    for pid, node in raw_nodes.items():
        ns = node["objects"][0]["pid"].split(":")[1].split("/")[0]
        picked = []
        for o in node["objects"]:
            otype = o.get("object_type") or o["metadata"].get("object_type")
            if flt.get("object_type") and otype != flt["object_type"]:
                continue
            if flt.get("access_tier") and o["access_tier"] != flt["access_tier"]:
                continue
            tier = o["access_tier"]
            if tier == "registered" and not (user and user["registered"]):
                continue
            if tier == "controlled" and not (o["pid"] in visas or f"guid:{ns}/ALL" in visas):
                continue
            picked.append(o["content"].encode())
        if aggregate == "count":
            out[pid] = len(picked)
        elif aggregate == "sum_size":
            out[pid] = sum(len(c) for c in picked)
        else:
            out[pid] = sorted(hashlib.sha256(c).hexdigest() for c in picked)
    return out


def run(mesh, token, computation, targets=("nodeA", "nodeB"), wid=None):
    req = WorkflowRequest.from_json({"workflow_id": wid, "approved": True, "target_platforms": list(targets),
                                     "computation": computation, "submitter": "tester"})
    handle = mesh.executor.submit(req, token)
    return handle, mesh.executor.execute(handle)


def values(result):
    return {p: o.value for p, o in result.per_platform.items()}


def test_count_example(mesh, tokens):
    _, result = run(mesh, tokens["u1"], {"aggregate": "count"})
    assert values(result) == {"nodeA": 3, "nodeB": 2}
    assert {o.status for o in result.per_platform.values()} == {"ok"}
    # nodeB flags its results for review
    assert result.review_status == "pending_review"


@pytest.mark.parametrize("user", [None, "u1", "u2", "u3"])
@pytest.mark.parametrize("aggregate", ["count", "sum_size", "checksum_list"])
@pytest.mark.parametrize("flt", [{}, {"object_type": "dataset"}, {"access_tier": "controlled"}])
def test_matches_brute_force(mesh, raw_nodes, tokens, user, aggregate, flt):
    token = tokens[user] if user else None
    _, result = run(mesh, token, {"aggregate": aggregate, "filter": flt})
    assert values(result) == oracle(raw_nodes, "nodeA", user, flt, aggregate)


@pytest.mark.parametrize("user", [None, "u1", "u2", "u3"])
def test_counted_exactly_when_authorized(mesh, tokens, user):
    token = tokens[user] if user else None
    _, result = run(mesh, token, {"aggregate": "checksum_list"})
    for pid, node in mesh.nodes.items():
        granted = sorted(o.checksum for o in node.objects() if node.authorize(token, o.platform_pid).granted)
        assert result.per_platform[pid].value == granted


def test_submit_slots(mesh):
    req = WorkflowRequest.from_json({"approved": True, "target_platforms": ["nodeA", "nodeB"],
                                     "computation": {"aggregate": "count"}})
    handle = mesh.executor.submit(req)
    assert mesh.executor.slots(handle) == {"nodeA": "pending", "nodeB": "pending"}
    with pytest.raises(NotFound):
        mesh.executor.result(handle)


def test_submit_rejections(mesh):
    with pytest.raises(NotApproved):
        mesh.executor.submit(WorkflowRequest.from_json(
            {"approved": False, "target_platforms": ["nodeA"], "computation": {"aggregate": "count"}}))
    with pytest.raises(UnknownPlatform):
        mesh.executor.submit(WorkflowRequest.from_json(
            {"approved": True, "target_platforms": ["nodeA", "nodeZ"], "computation": {"aggregate": "count"}}))
    with pytest.raises(BadRequest):
        WorkflowRequest.from_json({"approved": True, "target_platforms": ["nodeA"],
                                   "computation": {"aggregate": "python_exec"}})
    with pytest.raises(BadRequest):
        WorkflowRequest.from_json({"approved": True, "target_platforms": [], "computation": {"aggregate": "count"}})


def test_node_down_isolated(mesh, tokens):
    mesh.transport.down.add(mesh.node_urls["nodeB"])
    _, result = run(mesh, tokens["u1"], {"aggregate": "count"})
    assert result.per_platform["nodeB"].status == "error"
    assert result.per_platform["nodeA"].status == "ok" and result.per_platform["nodeA"].value == 3
    assert result.review_status == "released"


def test_review_release_and_withhold(mesh, tokens):
    h1, r1 = run(mesh, tokens["u1"], {"aggregate": "count"})
    pending = r1.to_json()
    assert all(v["value"] is None for v in pending["per_platform"].values())
    released = mesh.executor.review_and_release(h1, "released", "dac-1")
    assert {p: v["value"] for p, v in released.to_json()["per_platform"].items()} == {"nodeA": 3, "nodeB": 2}
    with pytest.raises(NotPending):
        mesh.executor.review_and_release(h1, "withheld", "dac-1")

    h2, _ = run(mesh, tokens["u1"], {"aggregate": "sum_size"})
    withheld = mesh.executor.review_and_release(h2, "withheld", "dac-1")
    assert withheld.review_status == "withheld" and withheld.reviewer == "dac-1"
    assert all(v["value"] is None for v in withheld.to_json()["per_platform"].values())


def test_released_without_review_is_not_pending(mesh, tokens):
    h, r = run(mesh, tokens["u1"], {"aggregate": "count"}, targets=("nodeA",))
    assert r.review_status == "released"
    with pytest.raises(NotPending):
        mesh.executor.review_and_release(h, "released", "dac")


def test_no_raw_content_in_results(mesh, tokens):
    _, result = run(mesh, tokens["u1"], {"aggregate": "checksum_list"}, targets=("nodeA",))
    blob = json.dumps(result.to_json(for_submitter=False)).encode()
    for sentinel in mesh.content_sentinels():
        assert sentinel not in blob
    assert all(mesh.capture.count(s) == 0 for s in mesh.content_sentinels())


def test_http_workflow_round_trip(harvested, tokens):
    client = harvested.hub_client()
    body = {"workflow_id": "wf-http", "approved": True, "target_platforms": ["nodeA", "nodeB"],
            "computation": {"aggregate": "count"}, "submitter": "u1"}
    out = client.post("/federated/workflows", json_body=body, token=tokens["u1"])
    assert out["review_status"] == "pending_review"
    out = client.post("/federated/workflows/wf-http/review", json_body={"decision": "released", "reviewer": "dac"})
    assert client.get("/federated/workflows/wf-http")["per_platform"]["nodeB"]["value"] == 2
    with pytest.raises(NotPending):
        client.post("/federated/workflows/wf-http/review", json_body={"decision": "released", "reviewer": "dac"})

