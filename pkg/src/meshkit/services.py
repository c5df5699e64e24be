"""HTTP surfaces for the node, the DMMS and the hub."""

from __future__ import annotations

import datetime as dt

from .auth import TokenVerifier
from .errors import BadRequest
from .federated import FederatedExecutor, WorkflowRequest
from .http import App, Request, Response, json_response
from .hub import Hub
from .node import PlatformNode
from .paging import parse_page_size
from .registry import QueryFilter, RegistrationRequest, Registry


def node_app(node: PlatformNode) -> App:
    app = App(f"node:{node.platform_id}")

    @app.route("POST", "/auth/token")
    def token(req: Request) -> Response:
        body = req.json()
        tok, text = node.authenticate(str(body.get("username", "")), str(body.get("secret", "")))
        return json_response(200, {
            "access_token": text,
            "token_type": "Bearer",
            "subject": tok.subject,
            "expires_at": tok.expiry,
        })

    @app.route("GET", "/objects")
    def listing(req: Request) -> Response:
        items, nxt = node.list_objects(req.query.get("cursor"), parse_page_size(req.query.get("limit")))
        return json_response(200, {"items": items, "next_cursor": nxt})

    if "no_metadata_endpoint" not in node.faults:
        @app.route("GET", "/objects/{pid}/metadata")
        def metadata(req: Request) -> Response:
            return json_response(200, node.get_metadata(req.params["pid"]))

    @app.route("GET", "/objects/{pid}/access")
    def access(req: Request) -> Response:
        return json_response(200, node.get_data(req.params["pid"], req.bearer))

    @app.route("GET", "/objects/{pid}/authorization")
    def authorization(req: Request) -> Response:
        return json_response(200, node.authorize(req.bearer, req.params["pid"]).to_json())

    @app.route("GET", "/objects/{pid}/content")
    def content(req: Request) -> Response:
        data = node.read_content(req.params["pid"], req.bearer, req.query.get("grant"))
        return Response(200, data, {"content-type": "application/octet-stream"})

    @app.route("POST", "/objects/{pid}/transfer")
    def transfer(req: Request) -> Response:
        aae_id = req.json().get("aae_id")
        if not aae_id:
            raise BadRequest("aae_id is required")
        return json_response(200, node.transfer_to_aae(req.params["pid"], aae_id, req.bearer).to_json())

    @app.route("POST", "/federated/execute")
    def execute(req: Request) -> Response:
        body = req.json()
        return json_response(200, node.execute(body.get("computation") or {}, body.get("token") or req.bearer))

    @app.route("POST", "/usage/reports")
    def usage_in(req: Request) -> Response:
        fresh = node.receive_usage_report(req.json())
        return json_response(201 if fresh else 200, {"accepted": True, "duplicate": not fresh})

    @app.route("GET", "/usage/reports")
    def usage_list(req: Request) -> Response:
        return json_response(200, {"reports": node.usage_reports()})

    @app.route("GET", "/license")
    def license_(req: Request) -> Response:
        return json_response(200, {"license": "CC-BY-4.0", "platform_id": node.platform_id})

    return app


class DmmsService:
    """Registry plus the caller-identity and fault switches its HTTP face needs."""

    def __init__(self, registry: Registry, verifier: TokenVerifier | None = None, faults: set[str] | None = None):
        self.registry = registry
        self.verifier = verifier or TokenVerifier({})
        self.faults = set(faults or ())

    def caller(self, req: Request) -> str | None:
        return self.verifier.subject_or_none(req.bearer)


def dmms_app(svc: DmmsService) -> App:
    app = App("dmms")
    reg = svc.registry

    @app.route("POST", "/dmms/register")
    def register(req: Request) -> Response:
        try:
            request = RegistrationRequest.from_json(req.json())
        except (KeyError, ValueError, TypeError) as exc:
            raise BadRequest(f"bad registration request: {exc}") from None
        record, created = reg.register(request)
        return json_response(201 if created else 200, record.to_json())

    @app.route("POST", "/dmms/records/{pid}/supplement")
    def supplement(req: Request) -> Response:
        body = req.json()
        return json_response(200, reg.supplement(req.params["pid"], body.get("fields") or {}, body.get("source", "hub_supplement")).to_json())

    @app.route("GET", "/dmms/records/{pid}")
    def get(req: Request) -> Response:
        return json_response(200, reg.get(req.params["pid"], svc.caller(req)).to_json())

    @app.route("GET", "/dmms/records")
    def query(req: Request) -> Response:
        flt = QueryFilter(req.query.get("type"), req.query.get("platform"), req.query.get("q"))
        page, nxt = reg.query(flt, req.query.get("cursor"), parse_page_size(req.query.get("limit")), svc.caller(req))
        return json_response(200, {"records": [r.to_json() for r in page], "next_cursor": nxt})

    @app.route("GET", "/dmms/resolve/{pid}")
    def resolve(req: Request) -> Response:
        body = reg.resolve(req.params["pid"]).to_json()
        if "resolve_omits_primary" in svc.faults:
            body["primary_platform_pid"] = None
        return json_response(200, body)

    @app.route("GET", "/dmms/manifest")
    def manifest(req: Request) -> Response:
        return json_response(200, reg.manifest.to_json())

    @app.route("GET", "/dmms/platforms")
    def platforms(req: Request) -> Response:
        return json_response(200, {"platforms": [p.to_json() for _, p in sorted(reg.platforms.items())]})

    return app


def hub_app(hub: Hub, executor: FederatedExecutor | None = None) -> App:
    app = App("hub")

    def with_notice(req: Request, payload: dict) -> dict:
        notice = hub.notify_collection(req.header("x-session-id"))
        if notice is not None:
            payload["usage_collection_notice"] = notice["text"]
        return payload

    @app.route("GET", "/hub/search")
    def search(req: Request) -> Response:
        results, nxt = hub.search_page(
            text=req.query.get("q"),
            object_type=req.query.get("type"),
            platform=req.query.get("platform"),
            token=req.bearer,
            cursor=req.query.get("cursor"),
            limit=parse_page_size(req.query.get("limit")),
        )
        return json_response(200, with_notice(req, {"results": [r.to_json() for r in results], "next_cursor": nxt}))

    @app.route("POST", "/hub/access")
    def access(req: Request) -> Response:
        body = req.json()
        if not body.get("mesh_pid") or not body.get("aae_id"):
            raise BadRequest("mesh_pid and aae_id are required")
        grant = hub.broker_access(req.bearer, body["mesh_pid"], body["aae_id"])
        return json_response(200, with_notice(req, grant.to_json()))

    @app.route("POST", "/hub/harvest")
    def harvest(req: Request) -> Response:
        platforms = req.json().get("platforms")
        return json_response(200, hub.harvest(platforms).to_json())

    @app.route("POST", "/hub/usage/report")
    def usage(req: Request) -> Response:
        body = req.json()
        now = hub.clock()
        start = body.get("start") or (now - dt.timedelta(days=1)).isoformat()
        end = body.get("end") or (now + dt.timedelta(microseconds=1)).isoformat()
        reports = hub.report_usage(start, end)
        return json_response(200, {
            "reports": [r.to_json() for r in reports],
            "pending": len(hub.pending_reports),
        })

    @app.route("POST", "/hub/link")
    def link(req: Request) -> Response:
        body = req.json()
        result = hub.link_subjects(list(body.get("records_a", [])), list(body.get("records_b", [])))
        return json_response(200, result.to_json())

    if executor is not None:
        @app.route("POST", "/federated/workflows")
        def submit(req: Request) -> Response:
            wf = WorkflowRequest.from_json(req.json())
            handle = executor.submit(wf, req.bearer)
            result = executor.execute(handle)
            return json_response(201, result.to_json())

        @app.route("GET", "/federated/workflows/{id}")
        def get_wf(req: Request) -> Response:
            return json_response(200, executor.result(req.params["id"]).to_json())

        @app.route("POST", "/federated/workflows/{id}/review")
        def review(req: Request) -> Response:
            body = req.json()
            result = executor.review_and_release(req.params["id"], body.get("decision", ""), body.get("reviewer", ""))
            return json_response(200, result.to_json())

    return app
