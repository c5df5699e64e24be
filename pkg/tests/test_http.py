import pytest

from meshkit.clients import DmmsClient, NodeClient
from meshkit.conformance import check_mesh, check_node
from meshkit.errors import NodeUnreachable, UnknownPid
from meshkit.http import App, HttpTransport, JsonClient, Server, json_response
from meshkit.mesh import Mesh


@pytest.fixture(scope="module")
def served():
    with Mesh.demo(serve=True) as mesh:
        mesh.hub.harvest()
        yield mesh


def test_endpoint_table_has_real_ports(served):
    table = served.endpoint_table()
    assert [name for name, _ in table] == ["dmms", "hub", "node:nodeA", "node:nodeB"]
    ports = [int(url.rsplit(":", 1)[1]) for _, url in table]
    assert all(p > 0 for p in ports) and len(set(ports)) == 4


def test_search_and_resolve_over_sockets(served):
    http = HttpTransport()
    hub = JsonClient(served.hub_url, http)
    page = hub.get("/hub/search")
    assert len(page["results"]) == 6
    dmms = DmmsClient(served.dmms_url, http)
    for r in page["results"]:
        res = dmms.resolve(r["record"]["mesh_pid"])
        assert res.hosting_platform_id in served.node_urls
    with pytest.raises(UnknownPid):
        dmms.resolve("mesh:demo-mesh/not-there")


def test_conformance_over_sockets(served):
    http = HttpTransport()
    desc = served.mesh_descriptor()
    for platform_id, node in desc["nodes"].items():
        assert check_node(node["endpoint"], node["profile"], http).failing == []
    assert check_mesh(desc, http).failing == []


def test_token_and_metadata_over_sockets(served):
    node = NodeClient(served.node_urls["nodeA"], HttpTransport())
    token = node.token("u1", "u1-pass")
    assert node.authorization("guid:nodea/a3", token)["granted"] is True
    assert node.access("guid:nodea/a3", token)["checksums"]
    assert node.metadata("guid:nodea/a1")["metadata"]["title"] == "Open reference genome panel"


def test_unreachable_raises():
    with pytest.raises(NodeUnreachable):
        JsonClient("http://127.0.0.1:9", HttpTransport()).get("/objects")


def test_server_routes_and_errors():
    app = App("echo")

    @app.route("GET", "/echo/{word}")
    def echo(req):
        return json_response(200, {"word": req.params["word"]})

    server = Server(app).start()
    try:
        client = JsonClient(server.url, HttpTransport())
        assert client.get("/echo/a%2Fb") == {"word": "a/b"}
        status = HttpTransport().send("GET", server.url + "/missing").status
        assert status == 404
        assert HttpTransport().send("POST", server.url + "/echo/x").status == 405
    finally:
        server.stop()
