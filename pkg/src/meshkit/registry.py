"""The Data Mesh Metadata Service (DMMS) core.

Registers objects into the mesh, mints a mesh PID per (hosting platform,
primary PID) pair, validates metadata against the manifest, merges later
supplements with per-field provenance, and serves paged public queries.
State lives in a JSONL journal replayed into memory at startup.
"""

from __future__ import annotations

import copy
import datetime as dt
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

from .errors import (
    IneligiblePlatform,
    NotAuthorized,
    SchemaViolation,
    UnknownPid,
    UnknownPlatform,
)
from .identifiers import Minter, Pid, ResolutionRecord, ResolverTable, Scheme, coerce_pid, parse_pid
from .journal import Journal
from .manifest import (
    DataObjectType,
    MeshManifest,
    MetadataSchema,
    PlatformDescriptor,
    Violation,
    check_platform_eligibility,
    minimum_schema_for,
    validate_against_schema,
)
from .paging import DEFAULT_PAGE_SIZE, paginate

__all__ = [
    "DmmRecord",
    "ProvenanceEntry",
    "RegistrationRequest",
    "Registry",
    "Source",
    "SubmittedBy",
    "validate_against_schema",
]


class Source(str, Enum):
    PLATFORM_API = "platform_api"
    CONTRIBUTOR = "contributor"
    HUB_SUPPLEMENT = "hub_supplement"


# platform values are the record of truth; contributors outrank hub supplements
_PRECEDENCE = {Source.PLATFORM_API: 3, Source.CONTRIBUTOR: 2, Source.HUB_SUPPLEMENT: 1}


class SubmittedBy(str, Enum):
    PLATFORM_HARVEST = "platform_harvest"
    CONTRIBUTOR_PORTAL = "contributor_portal"
    CONTRIBUTOR_API = "contributor_api"

    @property
    def source(self) -> Source:
        return Source.PLATFORM_API if self is SubmittedBy.PLATFORM_HARVEST else Source.CONTRIBUTOR


def utcnow() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="microseconds")


@dataclass(frozen=True)
class ProvenanceEntry:
    field: str
    source: Source
    timestamp: str
    accepted: bool = True

    def to_json(self) -> dict:
        return {
            "field": self.field,
            "source": self.source.value,
            "timestamp": self.timestamp,
            "accepted": self.accepted,
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> ProvenanceEntry:
        return cls(d["field"], Source(d["source"]), d["timestamp"], bool(d.get("accepted", True)))


@dataclass
class DmmRecord:
    mesh_pid: Pid
    object_type: DataObjectType
    hosting_platform_id: str
    primary_platform_pid: Pid
    publication_dois: list[Pid]
    metadata: dict[str, Any]
    visibility: str
    license: str
    provenance: list[ProvenanceEntry] = field(default_factory=list)

    @property
    def sort_key(self) -> tuple[str, str]:
        return (self.object_type.value, str(self.mesh_pid))

    def owner(self, name: str) -> Source | None:
        for entry in reversed(self.provenance):
            if entry.field == name and entry.accepted:
                return entry.source
        return None

    def to_json(self) -> dict:
        return {
            "mesh_pid": str(self.mesh_pid),
            "object_type": self.object_type.value,
            "hosting_platform_id": self.hosting_platform_id,
            "primary_platform_pid": str(self.primary_platform_pid),
            "publication_dois": [str(p) for p in self.publication_dois],
            "metadata": copy.deepcopy(self.metadata),
            "visibility": self.visibility,
            "license": self.license,
            "provenance": [p.to_json() for p in self.provenance],
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> DmmRecord:
        return cls(
            mesh_pid=parse_pid(d["mesh_pid"]),
            object_type=DataObjectType(d["object_type"]),
            hosting_platform_id=d["hosting_platform_id"],
            primary_platform_pid=parse_pid(d["primary_platform_pid"]),
            publication_dois=[parse_pid(p) for p in d.get("publication_dois", [])],
            metadata=copy.deepcopy(dict(d.get("metadata", {}))),
            visibility=d.get("visibility", "public"),
            license=d.get("license", ""),
            provenance=[ProvenanceEntry.from_json(p) for p in d.get("provenance", [])],
        )


@dataclass
class RegistrationRequest:
    object_type: DataObjectType
    hosting_platform_id: str
    primary_platform_pid: Pid
    metadata: dict[str, Any]
    submitted_by: SubmittedBy = SubmittedBy.PLATFORM_HARVEST
    # honoured only when the manifest's DMM visibility is "mixed"
    visibility: str | None = None

    def __post_init__(self):
        self.object_type = DataObjectType(self.object_type)
        self.primary_platform_pid = coerce_pid(self.primary_platform_pid)
        self.submitted_by = SubmittedBy(self.submitted_by)

    def to_json(self) -> dict:
        out = {
            "object_type": self.object_type.value,
            "hosting_platform_id": self.hosting_platform_id,
            "primary_platform_pid": str(self.primary_platform_pid),
            "metadata": self.metadata,
            "submitted_by": self.submitted_by.value,
        }
        if self.visibility is not None:
            out["visibility"] = self.visibility
        return out

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> RegistrationRequest:
        return cls(
            object_type=d["object_type"],
            hosting_platform_id=d["hosting_platform_id"],
            primary_platform_pid=d["primary_platform_pid"],
            metadata=dict(d.get("metadata", {})),
            submitted_by=d.get("submitted_by", SubmittedBy.PLATFORM_HARVEST.value),
            visibility=d.get("visibility"),
        )


@dataclass
class QueryFilter:
    object_type: str | None = None
    hosting_platform_id: str | None = None
    text: str | None = None

    def matches(self, r: DmmRecord) -> bool:
        if self.object_type and r.object_type.value != self.object_type:
            return False
        if self.hosting_platform_id and r.hosting_platform_id != self.hosting_platform_id:
            return False
        if self.text:
            needle = self.text.lower()
            hay = f"{r.metadata.get('title', '')}\n{r.metadata.get('description', '')}".lower()
            if needle not in hay:
                return False
        return True


class Registry:
    def __init__(
        self,
        manifest: MeshManifest,
        platforms: Mapping[str, PlatformDescriptor] | list[PlatformDescriptor] = (),
        journal: Journal | None = None,
        *,
        clock: Callable[[], str] = utcnow,
        minter: Minter | None = None,
    ):
        self.manifest = manifest
        if not isinstance(platforms, Mapping):
            platforms = {p.platform_id: p for p in platforms}
        self.platforms: dict[str, PlatformDescriptor] = dict(platforms)
        self.journal = journal if journal is not None else Journal()
        self.clock = clock
        self.minter = minter or Minter()
        self.resolver = ResolverTable()
        self._records: dict[Pid, DmmRecord] = {}
        self._by_primary: dict[tuple[str, Pid], Pid] = {}
        self._lock = threading.RLock()
        self._replay()

    # -- persistence --------------------------------------------------------

    def _replay(self) -> None:
        for entry in self.journal:
            if entry.get("op") == "put":
                self._install(DmmRecord.from_json(entry["record"]))

    def _install(self, record: DmmRecord) -> None:
        self._records[record.mesh_pid] = record
        self._by_primary[(record.hosting_platform_id, record.primary_platform_pid)] = record.mesh_pid
        platform = self.platforms.get(record.hosting_platform_id)
        self.resolver.register(
            ResolutionRecord(
                pid=record.mesh_pid,
                hosting_platform_id=record.hosting_platform_id,
                platform_endpoint=platform.endpoint if platform else "",
                primary_platform_pid=record.primary_platform_pid,
            )
        )

    def _commit(self, record: DmmRecord) -> None:
        self.journal.append({"op": "put", "record": record.to_json()})
        self._install(record)

    def put_unchecked(self, record: DmmRecord) -> None:
        """Store ``record`` with no validation. Fault injection only."""
        with self._lock:
            self._commit(record)

    def add_platform(self, platform: PlatformDescriptor) -> None:
        with self._lock:
            self.platforms[platform.platform_id] = platform

    # -- registration -------------------------------------------------------

    def schema_for(self, object_type: DataObjectType) -> MetadataSchema:
        return minimum_schema_for(self.manifest, object_type)

    def register(self, req: RegistrationRequest) -> tuple[DmmRecord, bool]:
        """Register or update; returns ``(record, created)``."""
        schema = self.schema_for(req.object_type)
        platform = self.platforms.get(req.hosting_platform_id)
        if platform is None:
            raise UnknownPlatform(f"platform {req.hosting_platform_id!r} is not part of the mesh")
        decision = check_platform_eligibility(self.manifest, platform)
        if not decision.eligible:
            raise IneligiblePlatform(
                f"{platform.platform_id} lacks {sorted(decision.missing)}",
                details={"missing": sorted(decision.missing)},
            )
        incoming = dict(req.metadata)
        incoming.update(
            object_type=req.object_type.value,
            hosting_platform_id=req.hosting_platform_id,
            primary_platform_pid=str(req.primary_platform_pid),
        )
        source = req.submitted_by.source

        with self._lock:
            key = (req.hosting_platform_id, req.primary_platform_pid)
            existing_pid = self._by_primary.get(key)
            if existing_pid is None:
                violations = validate_against_schema(incoming, schema, allow_deferred=True)
                if violations:
                    raise SchemaViolation(_summary(violations), details=[v.to_json() for v in violations])
                now = self.clock()
                record = DmmRecord(
                    mesh_pid=self.minter.mint(Scheme.MESH, self.manifest.mesh_id),
                    object_type=req.object_type,
                    hosting_platform_id=req.hosting_platform_id,
                    primary_platform_pid=req.primary_platform_pid,
                    publication_dois=[],
                    metadata={},
                    visibility=self._visibility(req),
                    license=self.manifest.license,
                )
                for name in sorted(incoming):
                    record.metadata[name] = copy.deepcopy(incoming[name])
                    record.provenance.append(ProvenanceEntry(name, source, now))
                _sync_dois(record)
                self._commit(record)
                return record, True

            current = self._records[existing_pid]
            merged = copy.deepcopy(current)
            merged.object_type = req.object_type
            merged.visibility = self._visibility(req, current.visibility)
            now = self.clock()
            for name in sorted(incoming):
                value = incoming[name]
                if merged.metadata.get(name) == value and name in merged.metadata:
                    continue
                owner = merged.owner(name)
                if owner is not None and _PRECEDENCE[source] < _PRECEDENCE[owner]:
                    continue
                merged.metadata[name] = copy.deepcopy(value)
                merged.provenance.append(ProvenanceEntry(name, source, now))
            violations = validate_against_schema(merged.metadata, schema, allow_deferred=True)
            if violations:
                raise SchemaViolation(_summary(violations), details=[v.to_json() for v in violations])
            _sync_dois(merged)
            if merged.to_json() != current.to_json():
                self._commit(merged)
                return merged, False
            return current, False

    def _visibility(self, req: RegistrationRequest, default: str = "public") -> str:
        mode = self.manifest.dmm_visibility
        if mode == "public":
            return "public"
        if mode == "private":
            return "private"
        if req.visibility in ("public", "private"):
            return req.visibility
        return default

    def supplement(self, mesh_pid: Pid | str, fields: Mapping[str, Any], source: Source | str) -> DmmRecord:
        mesh_pid = coerce_pid(mesh_pid)
        source = Source(source)
        with self._lock:
            current = self._records.get(mesh_pid)
            if current is None:
                raise UnknownPid(f"{mesh_pid} is not registered")
            merged = copy.deepcopy(current)
            now = self.clock()
            for name in sorted(fields):
                value = fields[name]
                owner = merged.owner(name)
                if name in merged.metadata and merged.metadata[name] == value:
                    continue
                if owner is not None and _PRECEDENCE[source] < _PRECEDENCE[owner]:
                    merged.provenance.append(ProvenanceEntry(name, source, now, accepted=False))
                    continue
                merged.metadata[name] = copy.deepcopy(value)
                merged.provenance.append(ProvenanceEntry(name, source, now))
            schema = self.schema_for(merged.object_type)
            violations = validate_against_schema(merged.metadata, schema, allow_deferred=True)
            if violations:
                raise SchemaViolation(_summary(violations), details=[v.to_json() for v in violations])
            _sync_dois(merged)
            if merged.to_json() != current.to_json():
                self._commit(merged)
            return copy.deepcopy(merged)

    # -- reads --------------------------------------------------------------

    def get(self, mesh_pid: Pid | str, caller: str | None = None) -> DmmRecord:
        mesh_pid = coerce_pid(mesh_pid)
        with self._lock:
            record = self._records.get(mesh_pid)
            if record is None:
                raise UnknownPid(f"{mesh_pid} is not registered")
            if record.visibility != "public" and not caller:
                raise NotAuthorized(f"{mesh_pid} is private to mesh members")
            return copy.deepcopy(record)

    def query(
        self,
        flt: QueryFilter | None = None,
        cursor: str | None = None,
        page_size: int = DEFAULT_PAGE_SIZE,
        caller: str | None = None,
    ) -> tuple[list[DmmRecord], str | None]:
        flt = flt or QueryFilter()
        with self._lock:
            visible = [
                r
                for r in self._records.values()
                if (r.visibility == "public" or caller) and flt.matches(r)
            ]
            visible.sort(key=lambda r: r.sort_key)
            page, nxt = paginate(visible, lambda r: r.sort_key, cursor, page_size)
            return [copy.deepcopy(r) for r in page], nxt

    def query_all(self, flt: QueryFilter | None = None, caller: str | None = None) -> list[DmmRecord]:
        out: list[DmmRecord] = []
        cursor = None
        while True:
            page, cursor = self.query(flt, cursor, 500, caller)
            out.extend(page)
            if cursor is None:
                return out

    def resolve(self, pid: Pid | str) -> ResolutionRecord:
        return self.resolver.get(coerce_pid(pid))

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[DmmRecord]:
        with self._lock:
            return [copy.deepcopy(r) for r in sorted(self._records.values(), key=lambda r: r.sort_key)]

    def audit(self) -> list[Violation]:
        """Check every stored record against the record invariants."""
        out: list[Violation] = []
        with self._lock:
            seen: dict[tuple[str, Pid], Pid] = {}
            for r in self._records.values():
                where = str(r.mesh_pid)
                if r.mesh_pid.scheme is not Scheme.MESH or r.mesh_pid.namespace != self.manifest.mesh_id:
                    out.append(Violation("FOREIGN_MESH_PID", where, "mesh_pid"))
                try:
                    schema = self.schema_for(r.object_type)
                except Exception:
                    out.append(Violation("UNSUPPORTED_TYPE", where, "object_type"))
                else:
                    for v in validate_against_schema(r.metadata, schema, allow_deferred=True):
                        out.append(Violation(v.code, f"{where}: {v.message}", v.field))
                if r.visibility == "public" and not r.license:
                    out.append(Violation("MISSING_LICENSE", where, "license"))
                key = (r.hosting_platform_id, r.primary_platform_pid)
                if key in seen:
                    out.append(Violation("DUPLICATE_PRIMARY", f"{where} and {seen[key]}", "primary_platform_pid"))
                seen[key] = r.mesh_pid
        return sorted(out)


def _sync_dois(record: DmmRecord) -> None:
    dois = record.metadata.get("publication_dois")
    record.publication_dois = [parse_pid(d) for d in dois] if isinstance(dois, list) else []


def _summary(violations: list[Violation]) -> str:
    return "; ".join(f"{v.code} {v.field}" if v.field else v.code for v in violations)


def register_object(req: RegistrationRequest, registry: Registry) -> DmmRecord:
    return registry.register(req)[0]


def supplement_metadata(registry: Registry, mesh_pid: Pid | str, fields: Mapping[str, Any], source: Source | str) -> DmmRecord:
    return registry.supplement(mesh_pid, fields, source)
