"""The data hub: harvest into the DMMS, authorization-aware search, access
brokering to analysis environments, usage statistics returned to the
hosting platforms, and subject linkage.

The hub only ever handles metadata, grants and aggregates; object content
stays on the platforms.
"""

from __future__ import annotations

import datetime as dt
import logging
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .auth import InvalidToken, Token, TokenVerifier, decode_unverified
from .clients import DmmsClient, NodeClient
from .errors import MeshError, NodeUnreachable, SchemaViolation
from .identifiers import Pid, Scheme
from .linkage import LinkageResult, link_subjects
from .manifest import AccessTier, MeshManifest, PlatformDescriptor
from .node import TransferGrant
from .registry import DmmRecord, RegistrationRequest, SubmittedBy

log = logging.getLogger(__name__)

AVAILABILITIES = ("available", "requires_registration", "requires_visa", "unavailable")


def utcnow() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


def parse_time(value: str | dt.datetime) -> dt.datetime:
    if isinstance(value, dt.datetime):
        return value
    t = dt.datetime.fromisoformat(value)
    return t if t.tzinfo else t.replace(tzinfo=dt.timezone.utc)


@dataclass
class SearchResult:
    record: DmmRecord
    availability: str

    def to_json(self) -> dict:
        return {"record": self.record.to_json(), "availability": self.availability}


@dataclass(frozen=True)
class UsageEvent:
    mesh_pid: Pid
    hosting_platform_id: str
    access_tier: AccessTier
    subject: str | None
    timestamp: dt.datetime

    def __post_init__(self):
        if self.subject is not None and self.access_tier is AccessTier.OPEN:
            raise ValueError("open-tier usage events carry no subject")


@dataclass
class UsageReport:
    platform_id: str
    period: tuple[dt.datetime, dt.datetime]
    entries: list[dict]

    def to_json(self) -> dict:
        return {
            "platform_id": self.platform_id,
            "period": {"start": self.period[0].isoformat(), "end": self.period[1].isoformat()},
            "entries": [dict(e) for e in self.entries],
        }


@dataclass
class HarvestSummary:
    upserts: dict[str, int] = field(default_factory=dict)
    new_pids: dict[str, int] = field(default_factory=dict)
    schema_failures: dict[str, list[dict]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def total_upserts(self) -> int:
        return sum(self.upserts.values())

    @property
    def total_new(self) -> int:
        return sum(self.new_pids.values())

    def to_json(self) -> dict:
        return {
            "upserts": dict(sorted(self.upserts.items())),
            "new_pids": dict(sorted(self.new_pids.items())),
            "schema_failures": dict(sorted(self.schema_failures.items())),
            "errors": dict(sorted(self.errors.items())),
        }


class Hub:
    def __init__(
        self,
        manifest: MeshManifest,
        dmms: DmmsClient,
        nodes: Mapping[str, NodeClient],
        *,
        platforms: Mapping[str, PlatformDescriptor] | None = None,
        verifier: TokenVerifier | None = None,
        live_authz: bool = False,
        linkage_key: str = "",
        clock: Callable[[], dt.datetime] = utcnow,
        faults: set[str] | None = None,
    ):
        self.manifest = manifest
        self.dmms = dmms
        self.nodes = dict(nodes)
        self.platforms = dict(platforms or {})
        self.verifier = verifier
        self.live_authz = live_authz
        self.linkage_key = linkage_key
        self.clock = clock
        self.faults = set(faults or ())
        self._events: list[UsageEvent] = []
        self._pending: dict[tuple[str, str, str], UsageReport] = {}
        self._sessions: set[str] = set()
        self.notices: list[dict] = []
        self._lock = threading.Lock()

    # -- harvest ------------------------------------------------------------

    def _harvest_node(self, platform_id: str, node: NodeClient, summary: HarvestSummary) -> None:
        upserts = new = 0
        failures: list[dict] = []
        try:
            pids = node.list_all()
            for pid in pids:
                md = node.metadata(pid)
                metadata = dict(md.get("metadata", {}))
                metadata["access_tier"] = md["access_tier"]
                req = RegistrationRequest(
                    object_type=md["object_type"],
                    hosting_platform_id=platform_id,
                    primary_platform_pid=md["pid"],
                    metadata=metadata,
                    submitted_by=SubmittedBy.PLATFORM_HARVEST,
                )
                try:
                    _, created = self.dmms.register(req)
                except SchemaViolation as exc:
                    failures.append({"pid": md["pid"], "violations": exc.details or exc.message})
                    continue
                upserts += 1
                new += int(created)
        except MeshError as exc:
            summary.errors[platform_id] = f"{exc.code}: {exc.message}"
        summary.upserts[platform_id] = upserts
        summary.new_pids[platform_id] = new
        if failures:
            summary.schema_failures[platform_id] = failures

    def harvest(self, platform_ids: list[str] | None = None) -> HarvestSummary:
        summary = HarvestSummary()
        targets = platform_ids or sorted(self.nodes)
        with ThreadPoolExecutor(max_workers=max(1, len(targets))) as pool:
            futures = []
            for pid in targets:
                node = self.nodes.get(pid)
                if node is None:
                    summary.errors[pid] = "UNKNOWN_PLATFORM"
                    continue
                futures.append(pool.submit(self._harvest_node, pid, node, summary))
            for f in futures:
                f.result()
        return summary

    # -- search -------------------------------------------------------------

    def _claims(self, token: str | None) -> Token | None | InvalidToken:
        if not token:
            return None
        try:
            if self.verifier is not None:
                return self.verifier.verify(token)
            tok = decode_unverified(token)
            if self.clock().timestamp() >= tok.expiry:
                raise InvalidToken("expired")
            return tok
        except InvalidToken as exc:
            return exc

    def availability(self, record: DmmRecord, token: str | None) -> str:
        tier = AccessTier(record.metadata.get("access_tier", "controlled"))
        if self.live_authz:
            node = self.nodes.get(record.hosting_platform_id)
            if node is None:
                return "unavailable"
            try:
                granted = node.authorization(record.primary_platform_pid, token)["granted"]
            except MeshError:
                return "unavailable"
            return "available" if granted else _blocked(tier)
        if tier is AccessTier.OPEN:
            return "available"
        claims = self._claims(token)
        if not isinstance(claims, Token):
            return _blocked(tier)
        if tier is AccessTier.REGISTERED:
            return "available" if claims.registered else "requires_registration"
        now = self.clock().timestamp()
        scope_all = Pid(Scheme.GUID, record.primary_platform_pid.namespace, "ALL")
        for visa in claims.visas:
            if visa.active(now) and visa.scope_pid in (record.primary_platform_pid, scope_all):
                return "available"
        return "requires_visa"

    def search_page(
        self,
        text: str | None = None,
        object_type: str | None = None,
        platform: str | None = None,
        token: str | None = None,
        cursor: str | None = None,
        limit: int | None = None,
    ) -> tuple[list[SearchResult], str | None]:
        rows, nxt = self.dmms.query_page(
            object_type=object_type, platform=platform, text=text, cursor=cursor, limit=limit, token=token
        )
        records = [DmmRecord.from_json(r) for r in rows]
        return [SearchResult(r, self.availability(r, token)) for r in records], nxt

    def search(self, text: str | None = None, object_type: str | None = None, platform: str | None = None,
               token: str | None = None) -> list[SearchResult]:
        out: list[SearchResult] = []
        cursor = None
        while True:
            page, cursor = self.search_page(text, object_type, platform, token, cursor)
            out.extend(page)
            if not cursor:
                return out

    def notify_collection(self, session_id: str | None) -> dict | None:
        """Collection notice for the first interaction of a session, else None."""
        if not session_id:
            return None
        with self._lock:
            if session_id in self._sessions:
                return None
            self._sessions.add(session_id)
            notice = {"session_id": session_id, "text": self.manifest.usage_notice, "at": self.clock().isoformat()}
            self.notices.append(notice)
        log.info("usage collection notice shown to session %s", session_id)
        return notice

    # -- brokered access ----------------------------------------------------

    def broker_access(self, token: str | None, mesh_pid: Pid | str, aae_id: str) -> TransferGrant:
        record = self.dmms.get(mesh_pid, token)
        node = self.nodes.get(record.hosting_platform_id)
        if node is None:
            raise NodeUnreachable(f"no route to platform {record.hosting_platform_id}")
        grant = node.transfer(record.primary_platform_pid, aae_id, token)
        tier = AccessTier(record.metadata.get("access_tier", "controlled"))
        subject = None
        if tier >= AccessTier.REGISTERED and token:
            try:
                subject = decode_unverified(token).subject
            except InvalidToken:
                subject = None
        event = UsageEvent(record.mesh_pid, record.hosting_platform_id, tier, subject, self.clock())
        with self._lock:
            self._events.append(event)
        return grant

    def events(self) -> list[UsageEvent]:
        with self._lock:
            return list(self._events)

    # -- usage statistics ---------------------------------------------------

    def build_reports(self, start: dt.datetime, end: dt.datetime) -> list[UsageReport]:
        with self._lock:
            snapshot = [e for e in self._events if start <= e.timestamp < end]
        grouped: dict[str, dict[Pid, list[UsageEvent]]] = defaultdict(lambda: defaultdict(list))
        for e in snapshot:
            grouped[e.hosting_platform_id][e.mesh_pid].append(e)
        reports = []
        for platform_id in sorted(grouped):
            entries = []
            for mesh_pid in sorted(grouped[platform_id], key=str):
                evs = grouped[platform_id][mesh_pid]
                identities = sorted(
                    {e.subject for e in evs if e.subject and e.access_tier >= AccessTier.REGISTERED}
                )
                if "identities_for_open" in self.faults and not identities:
                    identities = sorted({"anonymous"})
                entries.append({"mesh_pid": str(mesh_pid), "count": len(evs), "identities": identities})
            reports.append(UsageReport(platform_id, (start, end), entries))
        return reports

    def _opted_out(self, platform_id: str) -> bool:
        p = self.platforms.get(platform_id)
        return bool(p and p.usage_opt_out)

    def report_usage(self, start: str | dt.datetime, end: str | dt.datetime) -> list[UsageReport]:
        """Aggregate events in ``[start, end)`` and push one report per platform."""
        start, end = parse_time(start), parse_time(end)
        self.retry_pending()
        reports = []
        for report in self.build_reports(start, end):
            if not self.manifest.usage_stats_required and self._opted_out(report.platform_id):
                continue
            reports.append(report)
            if "skip_usage_delivery" in self.faults:
                continue
            self._deliver(report)
        return reports

    def _deliver(self, report: UsageReport) -> bool:
        key = (report.platform_id, report.period[0].isoformat(), report.period[1].isoformat())
        node = self.nodes.get(report.platform_id)
        try:
            if node is None:
                raise NodeUnreachable(report.platform_id)
            node.push_usage_report(report.to_json())
        except NodeUnreachable:
            with self._lock:
                self._pending[key] = report
            log.warning("usage report for %s queued for retry", report.platform_id)
            return False
        with self._lock:
            self._pending.pop(key, None)
        return True

    def retry_pending(self) -> int:
        with self._lock:
            pending = list(self._pending.values())
        return sum(self._deliver(r) for r in pending)

    @property
    def pending_reports(self) -> list[UsageReport]:
        with self._lock:
            return list(self._pending.values())

    # -- linkage ------------------------------------------------------------

    def link_subjects(self, records_a: list[str], records_b: list[str], key: str | None = None) -> LinkageResult:
        return link_subjects(records_a, records_b, key if key is not None else self.linkage_key,
                             self.manifest.linkage_mode)


def _blocked(tier: AccessTier) -> str:
    if tier is AccessTier.REGISTERED:
        return "requires_registration"
    if tier is AccessTier.CONTROLLED:
        return "requires_visa"
    return "unavailable"
