"""Pillar conformance checker.

Each pillar is a list of named probes run against live HTTP endpoints.
A node is scored on pillars 1-5, a mesh deployment on pillars 6-10; every
failed probe leaves an evidence row (probe, observed, expected).
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping
from urllib.parse import quote

from .auth import tamper
from .clients import DmmsClient, NodeClient
from .errors import AaeNotAuthorized, MalformedPid, MeshError, NodeUnreachable
from .http import JsonClient, Transport
from .identifiers import Scheme, parse_pid
from .manifest import MeshManifest, minimum_schema_for, validate_against_schema, validate_manifest

REPORT_VERSION = "1"
NODE_PILLARS = (1, 2, 3, 4, 5)
MESH_PILLARS = (6, 7, 8, 9, 10)

PILLAR_TITLES = {
    1: "objects carry persistent identifiers",
    2: "metadata API resolves every PID",
    3: "data API serves verifiable content",
    4: "authentication and authorization API",
    5: "transfer to authorized analysis environments",
    6: "shared governance manifest",
    7: "minimum metadata per object type",
    8: "mesh PIDs resolve to host and primary PID",
    9: "usage statistics returned to platforms",
    10: "public, licensed metadata API",
}

# expected authorization matrix: tier -> token state -> granted
TOKEN_STATES = ("none", "invalid", "registered", "visa")
EXPECTED_MATRIX = {
    "open": {"none": True, "invalid": True, "registered": True, "visa": True},
    "registered": {"none": False, "invalid": False, "registered": True, "visa": True},
    "controlled": {"none": False, "invalid": False, "registered": False, "visa": True},
}


@dataclass(frozen=True)
class Evidence:
    probe: str
    observed: str
    expected: str

    def to_json(self) -> dict:
        return {"probe": self.probe, "observed": self.observed, "expected": self.expected}


@dataclass
class PillarCheck:
    pillar: int
    status: str  # pass | fail | not_applicable
    evidence: list[Evidence] = field(default_factory=list)

    def __post_init__(self):
        if self.status == "fail" and not self.evidence:
            raise ValueError(f"pillar {self.pillar}: a failing check needs evidence")
        self.evidence = sorted(self.evidence, key=lambda e: (e.probe, e.observed, e.expected))

    def to_json(self) -> dict:
        return {"pillar": self.pillar, "status": self.status, "evidence": [e.to_json() for e in self.evidence]}

    @classmethod
    def from_json(cls, d: Mapping) -> PillarCheck:
        return cls(d["pillar"], d["status"], [Evidence(**e) for e in d.get("evidence", [])])


@dataclass
class ConformanceReport:
    target: str
    kind: str  # node | mesh
    checks: list[PillarCheck]
    unreachable: bool = False

    @property
    def overall(self) -> str:
        return "pass" if all(c.status != "fail" for c in self.checks) else "fail"

    def status_of(self, pillar: int) -> str:
        return next(c.status for c in self.checks if c.pillar == pillar)

    @property
    def failing(self) -> list[int]:
        return [c.pillar for c in self.checks if c.status == "fail"]

    @property
    def score(self) -> tuple[int, int]:
        applicable = [c for c in self.checks if c.status != "not_applicable"]
        return sum(c.status == "pass" for c in applicable), len(applicable)

    @property
    def exit_code(self) -> int:
        if self.unreachable:
            return 2
        return 0 if self.overall == "pass" else 1

    def to_json(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "target": self.target,
            "kind": self.kind,
            "overall": self.overall,
            "unreachable": self.unreachable,
            "checks": [c.to_json() for c in self.checks],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> ConformanceReport:
        if str(d.get("report_version")) != REPORT_VERSION:
            raise ValueError(f"unsupported report_version {d.get('report_version')!r}")
        return cls(d["target"], d["kind"], [PillarCheck.from_json(c) for c in d["checks"]], bool(d.get("unreachable")))

    def __eq__(self, other) -> bool:
        return isinstance(other, ConformanceReport) and self.to_json() == other.to_json()


class _Probes:
    """Collects evidence for one pillar."""

    def __init__(self, pillar: int):
        self.pillar = pillar
        self.evidence: list[Evidence] = []
        self.not_applicable = False

    def expect(self, probe: str, ok: bool, observed: Any, expected: Any) -> bool:
        if not ok:
            self.evidence.append(Evidence(probe, str(observed), str(expected)))
        return ok

    def error(self, probe: str, exc: Exception, expected: str) -> None:
        code = getattr(exc, "code", type(exc).__name__)
        self.evidence.append(Evidence(probe, f"{code}: {exc}", expected))

    def result(self) -> PillarCheck:
        if self.not_applicable and not self.evidence:
            return PillarCheck(self.pillar, "not_applicable")
        return PillarCheck(self.pillar, "fail" if self.evidence else "pass", self.evidence)


def _run(pillar: int, fn: Callable[[_Probes], None]) -> PillarCheck:
    p = _Probes(pillar)
    try:
        fn(p)
    except MeshError as exc:
        p.error(f"p{pillar}.unexpected", exc, "probe completes")
    return p.result()


def _outcome(call: Callable[[], Any]) -> str:
    try:
        call()
    except MeshError as exc:
        return exc.code
    return "granted"


# -- node checks ---------------------------------------------------------------


def check_node(endpoint: str, profile: Mapping[str, Any], transport: Transport) -> ConformanceReport:
    node = NodeClient(endpoint, transport)
    try:
        listed = node.list_all()
    except NodeUnreachable as exc:
        checks = [
            PillarCheck(p, "fail", [Evidence("connect", f"{exc.code}: {exc}", "reachable endpoint")])
            for p in NODE_PILLARS
        ]
        return ConformanceReport(endpoint, "node", checks, unreachable=True)
    except MeshError:
        listed = None

    def p1(p: _Probes) -> None:
        if not p.expect("p1.list_objects", listed is not None, "listing failed", "GET /objects succeeds"):
            return
        p.expect("p1.nonempty", bool(listed), "0 objects", ">= 1 object")
        for item in listed:
            try:
                parse_pid(item)
            except MalformedPid:
                p.expect(f"p1.parse {item}", False, "unparseable", "scheme:namespace/suffix")

    def p2(p: _Probes) -> None:
        if listed is None:
            p.expect("p2.list_objects", False, "listing failed", "GET /objects succeeds")
            return
        for item in listed:
            try:
                md = node.metadata(item)
            except MeshError as exc:
                p.error(f"p2.metadata {item}", exc, "200 with metadata")
                continue
            rels = {link.get("rel"): link.get("href", "") for link in md.get("links", [])}
            pid_text = md.get("pid", item)
            p.expect(f"p2.rel_data {item}", rels.get("data", "").endswith(f"/objects/{quote(str(pid_text), safe='')}/access"),
                     rels.get("data"), "rel=data -> /objects/{pid}/access")
            p.expect(f"p2.rel_license {item}", bool(rels.get("license")), rels.get("license"), "rel=license link")
            fields = md.get("metadata", {})
            for name in ("title", "description"):
                p.expect(f"p2.public_{name} {item}", bool(fields.get(name)), "absent", f"anonymous {name}")

    def p3(p: _Probes) -> None:
        open_pid = profile.get("open_pid")
        if not p.expect("p3.profile", bool(open_pid), "no open_pid", "profile names an open object"):
            return
        desc = node.access(open_pid)
        checksum = next((c["checksum"] for c in desc.get("checksums", []) if c.get("type") == "sha-256"), None)
        url = desc.get("access_methods", [{}])[0].get("access_url", {}).get("url")
        if not p.expect("p3.access_url", bool(url), url, "access_methods[0].access_url.url"):
            return
        resp = transport.send("GET", url)
        if not p.expect("p3.fetch", resp.status == 200, resp.status, 200):
            return
        p.expect("p3.checksum", hashlib.sha256(resp.body).hexdigest() == checksum, checksum, "sha-256 of content")
        p.expect("p3.size", len(resp.body) == desc.get("size"), desc.get("size"), len(resp.body))

    tokens: dict[str, str | None] = {}

    def p4(p: _Probes) -> None:
        try:
            tokens["registered"] = node.token(**profile["registered_user"])
            tokens["visa"] = node.token(**profile["visa_user"])
        except (KeyError, TypeError):
            p.expect("p4.profile", False, "missing users", "registered_user and visa_user")
            return
        except MeshError as exc:
            p.error("p4.token", exc, "token issued")
            return
        tokens["invalid"] = tamper(tokens["visa"])
        tokens["none"] = None
        try:
            node.token(profile["registered_user"]["username"], "definitely-wrong-secret")
            p.expect("p4.bad_credentials", False, "token issued", "BAD_CREDENTIALS")
        except MeshError as exc:
            p.expect("p4.bad_credentials", exc.code == "BAD_CREDENTIALS", exc.code, "BAD_CREDENTIALS")
        for tier in ("open", "registered", "controlled"):
            pid = profile.get(f"{tier}_pid")
            if not p.expect(f"p4.profile_{tier}", bool(pid), "absent", f"{tier}_pid"):
                continue
            for state in TOKEN_STATES:
                out = _outcome(lambda: node.access(pid, tokens[state]))
                granted = out == "granted"
                p.expect(f"p4.matrix {tier}/{state}", granted == EXPECTED_MATRIX[tier][state],
                         out, "granted" if EXPECTED_MATRIX[tier][state] else "NOT_AUTHORIZED")

    def p5(p: _Probes) -> None:
        pid = profile.get("controlled_pid")
        listed_aae, unlisted = profile.get("listed_aae"), profile.get("unlisted_aae", "aae-unlisted-probe")
        try:
            token = tokens.get("visa") or node.token(**profile["visa_user"])
        except (KeyError, TypeError, MeshError) as exc:
            p.error("p5.token", exc, "visa token")
            return
        try:
            grant = node.transfer(pid, listed_aae, token)
            p.expect("p5.listed_aae", grant.aae_id == listed_aae, grant.aae_id, listed_aae)
        except MeshError as exc:
            p.error("p5.listed_aae", exc, "transfer grant")
        out = _outcome(lambda: node.transfer(pid, unlisted, token))
        p.expect("p5.unlisted_aae", out == AaeNotAuthorized.code, out, AaeNotAuthorized.code)

    checks = [_run(1, p1), _run(2, p2), _run(3, p3), _run(4, p4), _run(5, p5)]
    return ConformanceReport(endpoint, "node", checks)


# -- mesh checks ---------------------------------------------------------------


def check_mesh(descriptor: Mapping[str, Any], transport: Transport,
               clock: Callable[[], dt.datetime] = lambda: dt.datetime.now(dt.timezone.utc)) -> ConformanceReport:
    dmms = DmmsClient(descriptor["dmms"], transport)
    hub = JsonClient(descriptor["hub"], transport, {"X-Session-Id": "conformance-probe"})
    nodes = dict(descriptor.get("nodes", {}))
    target = f"mesh dmms={descriptor['dmms']} hub={descriptor['hub']}"
    unreachable = False
    state: dict[str, Any] = {}

    try:
        state["manifest"] = MeshManifest.from_json(dmms.manifest())
    except NodeUnreachable as exc:
        unreachable = True
        state["dmms_error"] = exc
    except (MeshError, KeyError, ValueError) as exc:
        state["manifest_error"] = exc
    if "dmms_error" not in state:
        try:
            state["records"] = dmms.query_all()
        except NodeUnreachable as exc:
            unreachable = True
            state["dmms_error"] = exc
        except MeshError as exc:
            state["query_error"] = exc

    def dmms_down(p: _Probes) -> bool:
        if "dmms_error" in state:
            p.error("dmms.connect", state["dmms_error"], "reachable DMMS")
            return True
        return False

    def p6(p: _Probes) -> None:
        if dmms_down(p):
            return
        if "manifest_error" in state:
            p.error("p6.manifest", state["manifest_error"], "parseable manifest")
            return
        for v in validate_manifest(state["manifest"]):
            p.expect(f"p6.{v.code}", False, v.message, "no violation")

    def p7(p: _Probes) -> None:
        if dmms_down(p) or "manifest" not in state:
            p.expect("p7.manifest", "manifest" in state, "no manifest", "manifest available")
            return
        for rec in state.get("records", []):
            try:
                schema = minimum_schema_for(state["manifest"], rec["object_type"])
            except MeshError as exc:
                p.error(f"p7.type {rec['mesh_pid']}", exc, "supported type")
                continue
            for v in validate_against_schema(rec.get("metadata", {}), schema):
                p.expect(f"p7.{v.code} {rec['mesh_pid']}", False, v.field, "schema-complete")

    def p8(p: _Probes) -> None:
        if dmms_down(p):
            return
        mesh_id = state["manifest"].mesh_id if "manifest" in state else None
        for rec in state.get("records", []):
            where = rec["mesh_pid"]
            pid = parse_pid(where)
            p.expect(f"p8.scheme {where}", pid.scheme is Scheme.MESH and pid.namespace == mesh_id,
                     f"{pid.scheme.value}:{pid.namespace}", f"mesh:{mesh_id}")
            try:
                res = dmms.resolve_raw(where)
            except MeshError as exc:
                p.error(f"p8.resolve {where}", exc, "resolution record")
                continue
            p.expect(f"p8.host {where}", res.get("hosting_platform_id") == rec["hosting_platform_id"]
                     and res.get("hosting_platform_id") in nodes,
                     res.get("hosting_platform_id"), rec["hosting_platform_id"])
            p.expect(f"p8.primary {where}", res.get("primary_platform_pid") == rec["primary_platform_pid"],
                     res.get("primary_platform_pid"), rec["primary_platform_pid"])

    def p9(p: _Probes) -> None:
        manifest = state.get("manifest")
        if manifest is None:
            p.expect("p9.manifest", False, "no manifest", "manifest available")
            return
        platform_id = sorted(nodes)[0] if nodes else None
        if not p.expect("p9.nodes", platform_id is not None, "no nodes", ">= 1 node"):
            return
        entry = nodes[platform_id]
        opted_out = bool(entry.get("usage_opt_out"))
        if not manifest.usage_stats_required and opted_out:
            p.not_applicable = True
            return
        profile = entry.get("profile", {})
        node = NodeClient(entry["endpoint"], transport)
        by_primary = {r["primary_platform_pid"]: r for r in state.get("records", [])
                      if r["hosting_platform_id"] == platform_id}
        open_rec = by_primary.get(profile.get("open_pid"))
        ctl_rec = by_primary.get(profile.get("controlled_pid"))
        if not p.expect("p9.records", open_rec is not None and ctl_rec is not None,
                        "probe objects not in DMM", "open and controlled probe objects registered"):
            return
        start = clock()
        try:
            token = node.token(**profile["visa_user"])
            hub.post("/hub/access", json_body={"mesh_pid": open_rec["mesh_pid"], "aae_id": profile["listed_aae"]})
            hub.post("/hub/access", json_body={"mesh_pid": ctl_rec["mesh_pid"], "aae_id": profile["listed_aae"]},
                     token=token)
            end = clock() + dt.timedelta(seconds=1)
            hub.post("/hub/usage/report", json_body={"start": start.isoformat(), "end": end.isoformat()})
            received = node.usage_reports()
        except NodeUnreachable as exc:
            p.error("p9.connect", exc, "reachable hub and node")
            return
        except (MeshError, KeyError, TypeError) as exc:
            p.error("p9.scripted_access", exc, "scripted access succeeds")
            return
        report = next((r for r in received if r.get("platform_id") == platform_id
                       and r.get("period", {}).get("start") == start.isoformat()), None)
        if not p.expect("p9.delivered", report is not None, "no report at node", "report for probe period"):
            return
        entries = {e["mesh_pid"]: e for e in report.get("entries", [])}
        o, c = entries.get(open_rec["mesh_pid"]), entries.get(ctl_rec["mesh_pid"])
        p.expect("p9.open_count", o is not None and o["count"] == 1, o and o["count"], 1)
        p.expect("p9.open_identities", o is not None and o["identities"] == [], o and o["identities"], [])
        p.expect("p9.controlled_count", c is not None and c["count"] == 1, c and c["count"], 1)
        want = [profile["visa_user"]["username"]]
        p.expect("p9.controlled_identities", c is not None and c["identities"] == want,
                 c and c["identities"], want)

    def p10(p: _Probes) -> None:
        if dmms_down(p):
            return
        if "query_error" in state:
            p.error("p10.anonymous_query", state["query_error"], "anonymous query succeeds")
            return
        records = state.get("records", [])
        p.expect("p10.nonempty", bool(records), 0, ">= 1 public record")
        for rec in records:
            p.expect(f"p10.license {rec['mesh_pid']}", bool(rec.get("license")), repr(rec.get("license")),
                     "nonempty license")
        if records:
            try:
                one = dmms.get_raw(records[0]["mesh_pid"])
                p.expect("p10.get_license", bool(one.get("license")), repr(one.get("license")), "nonempty license")
            except MeshError as exc:
                p.error("p10.get_record", exc, "anonymous GET succeeds")

    checks = [_run(6, p6), _run(7, p7), _run(8, p8), _run(9, p9), _run(10, p10)]
    if any(e.probe in ("p9.connect",) for c in checks for e in c.evidence):
        unreachable = True
    return ConformanceReport(target, "mesh", checks, unreachable)


# -- rendering -----------------------------------------------------------------


def render_report(report: ConformanceReport, fmt: str = "text") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n").encode()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    by_pillar = {c.pillar: c for c in report.checks}
    passed, applicable = report.score
    lines = [f"conformance report ({report.kind}) for {report.target}", ""]
    lines.append(f"{'pillar':<7} {'status':<15} description")
    for n in range(1, 11):
        c = by_pillar.get(n)
        status = c.status if c else "out_of_scope"
        lines.append(f"{n:<7} {status:<15} {PILLAR_TITLES[n]}")
    lines.append("")
    lines.append(f"score: {passed}/{applicable} applicable pillars pass; overall {report.overall}")
    for c in report.checks:
        if c.status == "fail":
            lines.append(f"pillar {c.pillar} failed:")
            for e in c.evidence:
                lines.append(f"  - {e.probe}: observed {e.observed}; expected {e.expected}")
    return ("\n".join(lines) + "\n").encode()
