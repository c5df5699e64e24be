"""Typed HTTP clients for node and DMMS endpoints."""

from __future__ import annotations

from typing import Any, Mapping

from .http import JsonClient, Transport, pid_segment
from .identifiers import ResolutionRecord
from .node import TransferGrant
from .registry import DmmRecord, RegistrationRequest


class NodeClient:
    def __init__(self, base_url: str, transport: Transport):
        self.http = JsonClient(base_url, transport)
        self.base_url = self.http.base_url

    def token(self, username: str, secret: str) -> str:
        return self.http.post("/auth/token", json_body={"username": username, "secret": secret})["access_token"]

    def list_page(self, cursor: str | None = None, limit: int | None = None) -> tuple[list[str], str | None]:
        body = self.http.get("/objects", query={"cursor": cursor, "limit": limit})
        return body["items"], body.get("next_cursor")

    def list_all(self, limit: int | None = None) -> list[str]:
        out: list[str] = []
        cursor = None
        while True:
            items, cursor = self.list_page(cursor, limit)
            out.extend(items)
            if not cursor:
                return out

    def metadata(self, pid) -> dict:
        return self.http.get(f"/objects/{pid_segment(pid)}/metadata")

    def access(self, pid, token: str | None = None) -> dict:
        return self.http.get(f"/objects/{pid_segment(pid)}/access", token=token)

    def authorization(self, pid, token: str | None = None) -> dict:
        return self.http.get(f"/objects/{pid_segment(pid)}/authorization", token=token)

    def transfer(self, pid, aae_id: str, token: str | None = None) -> TransferGrant:
        body = self.http.post(f"/objects/{pid_segment(pid)}/transfer", json_body={"aae_id": aae_id}, token=token)
        return TransferGrant.from_json(body)

    def execute(self, computation: Mapping[str, Any], token: str | None) -> dict:
        return self.http.post("/federated/execute", json_body={"computation": dict(computation), "token": token})

    def push_usage_report(self, report: Mapping[str, Any]) -> dict:
        return self.http.post("/usage/reports", json_body=dict(report))

    def usage_reports(self) -> list[dict]:
        return self.http.get("/usage/reports")["reports"]


class DmmsClient:
    def __init__(self, base_url: str, transport: Transport):
        self.http = JsonClient(base_url, transport)
        self.base_url = self.http.base_url

    def register(self, req: RegistrationRequest | Mapping[str, Any]) -> tuple[DmmRecord, bool]:
        body = req.to_json() if isinstance(req, RegistrationRequest) else dict(req)
        status, payload, _ = self.http.request("POST", "/dmms/register", json_body=body)
        return DmmRecord.from_json(payload), status == 201

    def supplement(self, mesh_pid, fields: Mapping[str, Any], source: str) -> DmmRecord:
        body = self.http.post(
            f"/dmms/records/{pid_segment(mesh_pid)}/supplement",
            json_body={"fields": dict(fields), "source": source},
        )
        return DmmRecord.from_json(body)

    def get(self, mesh_pid, token: str | None = None) -> DmmRecord:
        return DmmRecord.from_json(self.http.get(f"/dmms/records/{pid_segment(mesh_pid)}", token=token))

    def get_raw(self, mesh_pid, token: str | None = None) -> dict:
        return self.http.get(f"/dmms/records/{pid_segment(mesh_pid)}", token=token)

    def query_page(self, *, object_type=None, platform=None, text=None, cursor=None, limit=None,
                   token: str | None = None) -> tuple[list[dict], str | None]:
        body = self.http.get(
            "/dmms/records",
            query={"type": object_type, "platform": platform, "q": text, "cursor": cursor, "limit": limit},
            token=token,
        )
        return body["records"], body.get("next_cursor")

    def query_all(self, token: str | None = None, **flt) -> list[dict]:
        out: list[dict] = []
        cursor = None
        while True:
            page, cursor = self.query_page(cursor=cursor, token=token, **flt)
            out.extend(page)
            if not cursor:
                return out

    def resolve(self, pid) -> ResolutionRecord:
        return ResolutionRecord.from_json(self.http.get(f"/dmms/resolve/{pid_segment(pid)}"))

    def resolve_raw(self, pid) -> dict:
        return self.http.get(f"/dmms/resolve/{pid_segment(pid)}")

    def manifest(self) -> dict:
        return self.http.get("/dmms/manifest")
