"""Move compute to the data: approved declarative aggregates run inside each
target node and only the aggregate value comes back, optionally held for
review before release."""

from __future__ import annotations

import copy
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping

from .clients import NodeClient
from .errors import BadRequest, MeshError, NotApproved, NotFound, NotPending, UnknownPlatform
from .node import AGGREGATES


@dataclass
class WorkflowRequest:
    workflow_id: str
    approved: bool
    target_platforms: list[str]
    computation: dict[str, Any]
    submitter: str

    def __post_init__(self):
        if not self.target_platforms:
            raise BadRequest("target_platforms must be nonempty")
        if self.computation.get("aggregate") not in AGGREGATES:
            raise BadRequest(f"aggregate must be one of {AGGREGATES}")

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> WorkflowRequest:
        return cls(
            workflow_id=d.get("workflow_id") or uuid.uuid4().hex,
            approved=bool(d.get("approved", False)),
            target_platforms=list(d.get("target_platforms", [])),
            computation=dict(d.get("computation", {})),
            submitter=d.get("submitter", ""),
        )

    def to_json(self) -> dict:
        return {
            "workflow_id": self.workflow_id,
            "approved": self.approved,
            "target_platforms": list(self.target_platforms),
            "computation": copy.deepcopy(self.computation),
            "submitter": self.submitter,
        }


@dataclass
class PlatformOutcome:
    status: str  # ok | rejected | error
    value: Any = None
    message: str = ""
    requires_review: bool = False


@dataclass
class WorkflowResult:
    workflow_id: str
    per_platform: dict[str, PlatformOutcome]
    review_status: str  # pending_review | released | withheld
    reviewer: str | None = None

    def to_json(self, *, for_submitter: bool = True) -> dict:
        hide = for_submitter and self.review_status != "released"
        return {
            "workflow_id": self.workflow_id,
            "review_status": self.review_status,
            "reviewer": self.reviewer,
            "per_platform": {
                pid: {
                    "status": o.status,
                    "value": None if hide else copy.deepcopy(o.value),
                    "message": o.message,
                }
                for pid, o in sorted(self.per_platform.items())
            },
        }


@dataclass
class _Handle:
    request: WorkflowRequest
    token: str | None
    slots: dict[str, str] = field(default_factory=dict)
    result: WorkflowResult | None = None


class FederatedExecutor:
    def __init__(self, nodes: Mapping[str, NodeClient]):
        self.nodes = dict(nodes)
        self._handles: dict[str, _Handle] = {}
        self._lock = threading.Lock()

    def submit(self, req: WorkflowRequest, token: str | None = None) -> str:
        if not req.approved:
            raise NotApproved(f"workflow {req.workflow_id} has not been approved")
        unknown = [p for p in req.target_platforms if p not in self.nodes]
        if unknown:
            raise UnknownPlatform(f"unknown platforms {unknown}")
        with self._lock:
            if req.workflow_id in self._handles:
                raise BadRequest(f"workflow {req.workflow_id} already submitted")
            self._handles[req.workflow_id] = _Handle(req, token, {p: "pending" for p in req.target_platforms})
        return req.workflow_id

    def slots(self, handle: str) -> dict[str, str]:
        return dict(self._get(handle).slots)

    def _get(self, handle: str) -> _Handle:
        with self._lock:
            h = self._handles.get(handle)
        if h is None:
            raise NotFound(f"no workflow {handle!r}")
        return h

    def _run_one(self, platform_id: str, h: _Handle) -> PlatformOutcome:
        try:
            body = self.nodes[platform_id].execute(h.request.computation, h.token)
        except MeshError as exc:
            status = "rejected" if exc.http_status in (401, 403) else "error"
            return PlatformOutcome(status, None, f"{exc.code}: {exc.message}")
        return PlatformOutcome("ok", body.get("value"), "", bool(body.get("requires_review")))

    def execute(self, handle: str) -> WorkflowResult:
        h = self._get(handle)
        if h.result is not None:
            return h.result
        targets = h.request.target_platforms
        with ThreadPoolExecutor(max_workers=len(targets)) as pool:
            outcomes = dict(zip(targets, pool.map(lambda p: self._run_one(p, h), targets)))
        review = any(o.requires_review for o in outcomes.values())
        result = WorkflowResult(h.request.workflow_id, outcomes, "pending_review" if review else "released")
        with self._lock:
            if h.result is None:
                h.result = result
                h.slots = {p: o.status for p, o in outcomes.items()}
        return h.result

    def result(self, handle: str) -> WorkflowResult:
        h = self._get(handle)
        if h.result is None:
            raise NotFound(f"workflow {handle} has not run")
        return h.result

    def review_and_release(self, handle: str, decision: str, reviewer: str) -> WorkflowResult:
        if decision not in ("released", "withheld"):
            raise BadRequest("decision must be 'released' or 'withheld'")
        h = self._get(handle)
        with self._lock:
            if h.result is None or h.result.review_status != "pending_review":
                raise NotPending(f"workflow {handle} is not pending review")
            h.result.review_status = decision
            h.result.reviewer = reviewer
            return h.result
