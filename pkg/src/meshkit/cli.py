"""``meshkit`` command line: one binary, one subcommand per mesh operation.

Every command talks to running services over HTTP (``--hub``, ``--dmms``,
``--node``); ``--demo`` instead spins up the shipped two-node mesh
in-process, harvested, for one-shot use.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any

from .clients import DmmsClient, NodeClient
from .conformance import check_mesh, check_node, render_report
from .errors import BadFixture, MeshError, PortInUse, SchemaViolation
from .http import HttpTransport, JsonClient, Transport
from .mesh import Mesh, ScenarioConfig, demo_dir
from .node import load_node_config
from .registry import RegistrationRequest

log = logging.getLogger("meshkit")


class Context:
    """Resolves where a command should send its requests."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.mesh: Mesh | None = None
        self.transport: Transport = HttpTransport()
        if getattr(args, "demo", False):
            self.mesh = Mesh.demo()
            self.mesh.hub.harvest()
            self.transport = self.mesh.transport

    def hub_url(self) -> str:
        if self.mesh:
            return self.mesh.hub_url
        if not self.args.hub:
            raise SystemExit("error: --hub URL (or --demo) is required")
        return self.args.hub

    def hub(self) -> JsonClient:
        session = getattr(self.args, "session", None)
        return JsonClient(self.hub_url(), self.transport, {"X-Session-Id": session} if session else None)

    def dmms(self) -> DmmsClient:
        url = self.mesh.dmms_url if self.mesh else self.args.dmms
        if not url:
            raise SystemExit("error: --dmms URL (or --demo) is required")
        return DmmsClient(url, self.transport)

    def token(self) -> str | None:
        a = self.args
        if getattr(a, "token", None):
            return a.token
        if getattr(a, "user", None):
            node_url = a.node or (self.mesh.node_urls[sorted(self.mesh.node_urls)[0]] if self.mesh else None)
            if not node_url:
                raise SystemExit("error: --user needs --node URL to obtain a token")
            return NodeClient(node_url, self.transport).token(a.user, a.secret or "")
        return None


def emit(args: argparse.Namespace, payload: Any, lines: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _notice(payload: dict) -> None:
    notice = payload.pop("usage_collection_notice", None)
    if notice:
        print(f"*** {notice} ***", file=sys.stderr)


# -- subcommands ---------------------------------------------------------------


def cmd_mesh_up(args) -> int:
    try:
        cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig.demo()
        port_base = args.port if args.port is not None else int(os.environ.get("MESHKIT_PORT_BASE", "0"))
        mesh = Mesh.from_scenario(cfg, serve=True, host=args.host, port_base=port_base)
    except BadFixture as exc:
        print(f"error: BadFixture: {exc}", file=sys.stderr)
        return 2
    except PortInUse as exc:
        print(f"error: PortInUse: {exc}", file=sys.stderr)
        return 2
    try:
        table = mesh.endpoint_table()
        emit(args, dict(table), [f"{name:<12} {url}" for name, url in table])
        if args.endpoints_file:
            Path(args.endpoints_file).write_text(json.dumps(mesh.mesh_descriptor(), indent=2, sort_keys=True))
        sys.stdout.flush()
        if args.harvest:
            mesh.hub.harvest()
        deadline = time.monotonic() + args.duration if args.duration is not None else None
        while deadline is None or time.monotonic() < deadline:
            time.sleep(0.1)
    except KeyboardInterrupt:
        pass
    finally:
        mesh.stop()
    return 0


def cmd_register(args) -> int:
    ctx = Context(args)
    try:
        req = RegistrationRequest.from_json(json.loads(Path(args.request).read_text()))
        record, created = ctx.dmms().register(req)
    except SchemaViolation as exc:
        violations = exc.details or []
        emit(args, {"error": exc.code, "violations": violations},
             [f"{exc.code}:"] + [f"  {v['code']} {v.get('field') or ''}".rstrip() for v in violations])
        return 1
    except (MeshError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    emit(args, {"mesh_pid": str(record.mesh_pid), "created": created}, [str(record.mesh_pid)])
    return 0


def cmd_harvest(args) -> int:
    ctx = Context(args)
    summary = ctx.hub().post("/hub/harvest", json_body={"platforms": args.platform or None})
    lines = [f"{p}: {n} upserts, {summary['new_pids'].get(p, 0)} new" for p, n in summary["upserts"].items()]
    for p, fails in summary["schema_failures"].items():
        lines += [f"{p}: schema failure {f['pid']}" for f in fails]
    for p, err in summary["errors"].items():
        lines.append(f"{p}: error {err}")
    emit(args, summary, lines)
    return 1 if summary["errors"] else 0


def cmd_search(args) -> int:
    ctx = Context(args)
    hub = ctx.hub()
    token = ctx.token()
    results: list[dict] = []
    cursor = None
    while True:
        page = hub.get("/hub/search", query={"q": args.q, "type": args.type, "platform": args.platform,
                                             "cursor": cursor}, token=token)
        _notice(page)
        results.extend(page["results"])
        cursor = page.get("next_cursor")
        if not cursor:
            break
    lines = [
        f"{r['record']['mesh_pid']}\t{r['record']['object_type']}\t{r['availability']}\t{r['record']['metadata'].get('title', '')}"
        for r in results
    ]
    emit(args, {"results": results}, lines)
    return 0


def cmd_access(args) -> int:
    ctx = Context(args)
    try:
        grant = ctx.hub().post("/hub/access", json_body={"mesh_pid": args.mesh_pid, "aae_id": args.aae},
                               token=ctx.token())
    except MeshError as exc:
        emit(args, exc.to_json(), [f"{exc.code}: {exc.message}"])
        return 1
    _notice(grant)
    emit(args, grant, [grant["transfer_url"], json.dumps(grant["constraints"], sort_keys=True)])
    return 0


def cmd_usage_report(args) -> int:
    ctx = Context(args)
    body = ctx.hub().post("/hub/usage/report", json_body={"start": args.start, "end": args.end})
    lines = []
    for r in body["reports"]:
        for e in r["entries"]:
            lines.append(f"{r['platform_id']}\t{e['mesh_pid']}\t{e['count']}\t{','.join(e['identities'])}")
    if args.figures:
        from .figures import usage_chart

        path = usage_chart(body["reports"], Path(args.figures) / "usage.png")
        lines.append(f"figure: {path}")
    emit(args, body, lines)
    return 0


def cmd_federate(args) -> int:
    ctx = Context(args)
    hub = ctx.hub()
    try:
        if args.review:
            result = hub.post(f"/federated/workflows/{args.workflow}/review",
                              json_body={"decision": args.review, "reviewer": args.reviewer or ""})
        elif args.workflow:
            result = hub.get(f"/federated/workflows/{args.workflow}")
        else:
            request = json.loads(Path(args.request).read_text())
            result = hub.post("/federated/workflows", json_body=request, token=ctx.token())
    except MeshError as exc:
        emit(args, exc.to_json(), [f"{exc.code}: {exc.message}"])
        return 1
    lines = [f"workflow {result['workflow_id']}: {result['review_status']}"]
    lines += [f"  {p}\t{o['status']}\t{json.dumps(o['value'])}" for p, o in result["per_platform"].items()]
    emit(args, result, lines)
    return 0


def _profile_for(endpoint: str, profile_path: str | None, transport: Transport) -> dict:
    if profile_path:
        data = json.loads(Path(profile_path).read_text())
        return data.get("conformance_profile", data)
    demo = [load_node_config(p) for p in sorted(demo_dir().glob("node_*.json"))]
    try:
        listed = set(NodeClient(endpoint, transport).list_all())
    except MeshError:
        listed = set()
    for cfg in demo:
        if cfg.conformance_profile.get("open_pid") in listed:
            return cfg.conformance_profile
    return demo[0].conformance_profile


def cmd_conformance(args) -> int:
    ctx = Context(args)
    if args.mesh:
        if ctx.mesh:
            descriptor = ctx.mesh.mesh_descriptor()
        else:
            try:
                descriptor = json.loads(Path(args.target).read_text())
            except (OSError, ValueError) as exc:
                print(f"error: cannot read mesh descriptor {args.target}: {exc}", file=sys.stderr)
                return 2
        report = check_mesh(descriptor, ctx.transport)
    else:
        endpoint = args.target
        if ctx.mesh:
            endpoint = ctx.mesh.node_urls.get(args.target, ctx.mesh.node_urls[sorted(ctx.mesh.node_urls)[0]])
        report = check_node(endpoint, _profile_for(endpoint, args.profile, ctx.transport), ctx.transport)
    sys.stdout.write(render_report(report, args.format).decode())
    if args.figures:
        from .figures import scorecard

        path = scorecard(report, Path(args.figures) / f"conformance-{report.kind}.png")
        print(f"figure: {path}", file=sys.stderr)
    return report.exit_code


def cmd_token(args) -> int:
    node = NodeClient(args.node, HttpTransport())
    try:
        print(node.token(args.user, args.secret))
    except MeshError as exc:
        print(f"{exc.code}: {exc.message}", file=sys.stderr)
        return 1
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshkit", description="Desk-scale data mesh toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, hub=True, auth=False):
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--demo", action="store_true", help="use an in-process demo mesh")
        if hub:
            p.add_argument("--hub", default=os.environ.get("MESHKIT_HUB"))
            p.add_argument("--session", help="X-Session-Id for usage notices")
        if auth:
            p.add_argument("--token")
            p.add_argument("--user")
            p.add_argument("--secret")
            p.add_argument("--node", help="node that issues the token for --user")

    mesh = sub.add_parser("mesh", help="run a mesh")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", required=True)
    up = mesh_sub.add_parser("up", help="serve DMMS, hub and nodes over HTTP")
    up.add_argument("--config", help="ScenarioConfig JSON (default: shipped demo)")
    up.add_argument("--host", default="127.0.0.1")
    up.add_argument("--port", type=int, help="first port; 0 for OS-assigned (default $MESHKIT_PORT_BASE or 0)")
    up.add_argument("--duration", type=float, help="serve for N seconds then exit")
    up.add_argument("--endpoints-file", help="write the mesh descriptor JSON here")
    up.add_argument("--harvest", action="store_true", help="harvest all nodes once started")
    up.add_argument("--json", action="store_true")
    up.set_defaults(func=cmd_mesh_up)

    p = sub.add_parser("register", help="register one object with the DMMS")
    p.add_argument("request", help="RegistrationRequest JSON file")
    p.add_argument("--dmms", default=os.environ.get("MESHKIT_DMMS"))
    common(p, hub=False)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("harvest", help="harvest node metadata into the DMMS")
    p.add_argument("--platform", action="append")
    common(p)
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("search", help="search the mesh through the hub")
    p.add_argument("--q")
    p.add_argument("--type")
    p.add_argument("--platform")
    common(p, auth=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("access", help="broker a transfer to an analysis environment")
    p.add_argument("--mesh-pid", required=True)
    p.add_argument("--aae", required=True)
    common(p, auth=True)
    p.set_defaults(func=cmd_access)

    p = sub.add_parser("usage-report", help="aggregate and return usage statistics")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--figures", help="directory for usage.png")
    common(p)
    p.set_defaults(func=cmd_usage_report)

    p = sub.add_parser("federate", help="submit, inspect or review a federated workflow")
    p.add_argument("--request", help="WorkflowRequest JSON file")
    p.add_argument("--workflow", help="workflow id to inspect or review")
    p.add_argument("--review", choices=["released", "withheld"])
    p.add_argument("--reviewer")
    common(p, auth=True)
    p.set_defaults(func=cmd_federate)

    p = sub.add_parser("conformance", help="score a node (pillars 1-5) or mesh (6-10)")
    p.add_argument("target", nargs="?", default="", help="node URL, or mesh descriptor JSON with --mesh")
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--node", dest="node_mode", action="store_true")
    kind.add_argument("--mesh", action="store_true")
    p.add_argument("--profile", help="probe profile JSON or node fixture")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--figures", help="directory for the scorecard PNG")
    p.add_argument("--demo", action="store_true")
    p.set_defaults(func=cmd_conformance)

    p = sub.add_parser("token", help="obtain a bearer token from a node")
    p.add_argument("--node", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--secret", required=True)
    p.set_defaults(func=cmd_token)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MeshError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 2 if exc.code == "NODE_UNREACHABLE" else 1


if __name__ == "__main__":
    sys.exit(main())
