from meshkit.conformance import ConformanceReport, Evidence, PillarCheck
from meshkit.figures import scorecard, usage_chart

PNG = b"\x89PNG\r\n\x1a\n"


def test_scorecard_png(tmp_path):
    report = ConformanceReport("http://x", "node", [
        PillarCheck(1, "pass"), PillarCheck(2, "fail", [Evidence("metadata", "404", "200")]),
        PillarCheck(3, "pass"), PillarCheck(4, "pass"), PillarCheck(5, "not_applicable"),
    ])
    out = scorecard(report, tmp_path / "sub" / "card.png")
    assert out.read_bytes().startswith(PNG)


def test_usage_chart_png(tmp_path):
    reports = [{"platform_id": "nodeA", "entries": [
        {"mesh_pid": "mesh:m/aaaaaaaa", "count": 3, "identities": []},
        {"mesh_pid": "mesh:m/bbbbbbbb", "count": 2, "identities": ["u1"]},
    ]}]
    assert usage_chart(reports, tmp_path / "u.png").read_bytes().startswith(PNG)
    assert usage_chart([], tmp_path / "empty.png").read_bytes().startswith(PNG)
