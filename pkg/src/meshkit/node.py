"""Reference data platform.

Hosts objects from a JSON fixture and serves the platform-side pillars:
PID listing, public metadata with typed links, DRS-like data access,
token issuance, tiered authorization and transfer to authorized analysis
environments. Fixture ``faults`` switch on single deliberate defects so
the conformance checker can be tested against broken nodes.
"""

from __future__ import annotations

import base64
import copy
import datetime as dt
import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping
from urllib.parse import quote

from .auth import InvalidToken, Token, TokenVerifier, Visa, sign
from .errors import (
    AaeNotAuthorized,
    BadCredentials,
    BadFixture,
    BadRequest,
    MalformedPid,
    NotAuthorized,
    UnknownPid,
)
from .identifiers import Pid, Scheme, parse_pid
from .journal import Journal
from .manifest import AccessTier, DataObjectType, PlatformDescriptor
from .paging import DEFAULT_PAGE_SIZE, paginate

FAULTS = frozenset({"bare_listing", "no_metadata_endpoint", "corrupt_checksum", "ignore_visas", "any_aae"})
AGGREGATES = ("count", "sum_size", "checksum_list")


@dataclass(frozen=True)
class Constraints:
    downloadable_out_of_aae: bool = False
    redistributable: bool = False

    def to_json(self) -> dict:
        return {
            "downloadable_out_of_aae": self.downloadable_out_of_aae,
            "redistributable": self.redistributable,
        }

    @classmethod
    def from_json(cls, d: Mapping | None) -> Constraints:
        d = d or {}
        return cls(bool(d.get("downloadable_out_of_aae", False)), bool(d.get("redistributable", False)))


@dataclass
class HostedObject:
    platform_pid: Pid
    object_type: DataObjectType
    metadata: dict[str, Any]
    access_tier: AccessTier
    content: bytes
    constraints: Constraints = field(default_factory=Constraints)
    subject_ids: list[str] | None = None

    @property
    def checksum(self) -> str:
        return hashlib.sha256(self.content).hexdigest()

    @property
    def size(self) -> int:
        return len(self.content)


@dataclass(frozen=True)
class AccessGrant:
    pid: Pid
    granted: bool
    reason: str
    constraints: Constraints | None = None

    def to_json(self) -> dict:
        return {
            "pid": str(self.pid),
            "granted": self.granted,
            "reason": self.reason,
            "constraints": self.constraints.to_json() if self.constraints else None,
        }


@dataclass(frozen=True)
class AaeDescriptor:
    aae_id: str
    attested_requirements: frozenset[str] = frozenset()


@dataclass(frozen=True)
class TransferGrant:
    pid: Pid
    aae_id: str
    constraints: Constraints
    transfer_url: str

    def to_json(self) -> dict:
        return {
            "pid": str(self.pid),
            "aae_id": self.aae_id,
            "constraints": self.constraints.to_json(),
            "transfer_url": self.transfer_url,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> TransferGrant:
        return cls(parse_pid(d["pid"]), d["aae_id"], Constraints.from_json(d["constraints"]), d["transfer_url"])


@dataclass
class UserRecord:
    username: str
    secret: str
    registered: bool = False
    # scope PID text -> lifetime in seconds from token issue
    visas: dict[str, float] = field(default_factory=dict)


@dataclass
class NodeConfig:
    platform_id: str
    issuer_secret: str
    objects: list[HostedObject]
    users: dict[str, UserRecord] = field(default_factory=dict)
    authorized_aaes: set[str] = field(default_factory=set)
    trusted_issuers: dict[str, str] = field(default_factory=dict)
    attested_requirements: set[str] = field(default_factory=set)
    token_ttl: float = 3600.0
    requires_result_review: bool = False
    usage_opt_out: bool = False
    faults: set[str] = field(default_factory=set)
    conformance_profile: dict[str, Any] = field(default_factory=dict)

    @property
    def namespace(self) -> str:
        return self.platform_id.lower()

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> NodeConfig:
        objects = []
        for o in d.get("objects", []):
            if "content_b64" in o:
                content = base64.b64decode(o["content_b64"])
            else:
                content = o.get("content", "").encode()
            obj = HostedObject(
                platform_pid=parse_pid(o["pid"]),
                object_type=DataObjectType(o["object_type"]),
                metadata=dict(o.get("metadata", {})),
                access_tier=AccessTier(o["access_tier"]),
                content=content,
                constraints=Constraints.from_json(o.get("constraints")),
                subject_ids=o.get("subject_ids"),
            )
            if "checksum" in o and o["checksum"] != obj.checksum:
                raise BadFixture(f"{o['pid']}: checksum does not match content")
            objects.append(obj)
        users = {}
        for u in d.get("users", []):
            users[u["username"]] = UserRecord(
                username=u["username"],
                secret=u["secret"],
                registered=bool(u.get("registered", False)),
                visas={v["scope_pid"]: float(v.get("lifetime", 86400)) for v in u.get("visas", [])},
            )
        faults = set(d.get("faults", []))
        unknown = faults - FAULTS
        if unknown:
            raise BadFixture(f"unknown faults {sorted(unknown)}")
        return cls(
            platform_id=d["platform_id"],
            issuer_secret=d["issuer_secret"],
            objects=objects,
            users=users,
            authorized_aaes=set(d.get("authorized_aaes", [])),
            trusted_issuers=dict(d.get("trusted_issuers", {})),
            attested_requirements=set(d.get("attested_requirements", [])),
            token_ttl=float(d.get("token_ttl", 3600)),
            requires_result_review=bool(d.get("requires_result_review", False)),
            usage_opt_out=bool(d.get("usage_opt_out", False)),
            faults=faults,
            conformance_profile=dict(d.get("conformance_profile", {})),
        )


def load_node_config(path: str | Path) -> NodeConfig:
    path = Path(path)
    try:
        return NodeConfig.from_json(json.loads(path.read_text()))
    except FileNotFoundError:
        raise BadFixture(f"node fixture not found: {path}") from None
    except (ValueError, KeyError, TypeError, MalformedPid) as exc:
        raise BadFixture(f"{path}: {exc}") from None


def _now_iso() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="microseconds")


class PlatformNode:
    def __init__(self, config: NodeConfig, base_url: str = "", *, clock: Callable[[], float] = time.time,
                 audit: Journal | None = None):
        self.config = config
        self.platform_id = config.platform_id
        self.base_url = base_url
        self.clock = clock
        self.faults = set(config.faults)
        self.audit = audit if audit is not None else Journal()
        self.scope_all = Pid(Scheme.GUID, config.namespace, "ALL")
        trusted = dict(config.trusted_issuers)
        trusted[config.platform_id] = config.issuer_secret
        self.verifier = TokenVerifier(trusted, clock)
        self._objects: dict[Pid, HostedObject] = {}
        for obj in config.objects:
            if obj.platform_pid in self._objects:
                raise BadFixture(f"duplicate object {obj.platform_pid}")
            self._objects[obj.platform_pid] = obj
        self._by_suffix = {p.suffix: p for p in self._objects}
        self._grants: dict[str, tuple[Pid, str]] = {}
        self._reports: dict[tuple[str, str, str], dict] = {}
        self._lock = threading.Lock()

    # -- helpers ------------------------------------------------------------

    def descriptor(self) -> PlatformDescriptor:
        return PlatformDescriptor(
            platform_id=self.platform_id,
            endpoint=self.base_url,
            attested_requirements=set(self.config.attested_requirements),
            access_tiers_served={o.access_tier for o in self._objects.values()},
            usage_opt_out=self.config.usage_opt_out,
        )

    def lookup(self, pid: Pid | str) -> HostedObject:
        if isinstance(pid, str):
            if "bare_listing" in self.faults and pid in self._by_suffix:
                pid = self._by_suffix[pid]
            else:
                try:
                    pid = parse_pid(pid)
                except MalformedPid:
                    raise UnknownPid(f"{pid!r} is not hosted here") from None
        obj = self._objects.get(pid)
        if obj is None:
            raise UnknownPid(f"{pid} is not hosted on {self.platform_id}")
        return obj

    def objects(self) -> list[HostedObject]:
        return sorted(self._objects.values(), key=lambda o: str(o.platform_pid))

    def object_url(self, pid: Pid, tail: str) -> str:
        return f"{self.base_url}/objects/{quote(str(pid), safe='')}/{tail}"

    def _token(self, token: str | Token | None) -> Token | None:
        """Verified token, or None when absent. Raises InvalidToken."""
        if token is None or token == "":
            return None
        if isinstance(token, Token):
            # in-process callers hand over already-parsed tokens; re-check expiry
            if self.clock() >= token.expiry:
                raise InvalidToken("expired")
            return token
        return self.verifier.verify(token)

    def _log(self, op: str, pid: Pid, subject: str | None, aae_id: str | None = None) -> None:
        entry = {"timestamp": _now_iso(), "op": op, "pid": str(pid), "subject": subject}
        if aae_id is not None:
            entry["aae_id"] = aae_id
        self.audit.append(entry)

    # -- pillar 4: authentication and authorization -------------------------

    def authenticate(self, username: str, secret: str) -> tuple[Token, str]:
        user = self.config.users.get(username)
        if user is None or user.secret != secret:
            raise BadCredentials("unknown user or wrong secret")
        now = self.clock()
        visas = tuple(
            Visa(parse_pid(scope), self.platform_id, now + lifetime)
            for scope, lifetime in sorted(user.visas.items())
        )
        token = Token(
            subject=username,
            issuer=self.platform_id,
            expiry=now + self.config.token_ttl,
            registered=user.registered,
            visas=visas,
        )
        return token, sign(token, self.config.issuer_secret)

    def authorize(self, token: str | Token | None, pid: Pid | str) -> AccessGrant:
        obj = self.lookup(pid)
        pid = obj.platform_pid
        tier = obj.access_tier
        if tier is AccessTier.OPEN:
            return AccessGrant(pid, True, "open access", obj.constraints)
        try:
            tok = self._token(token)
        except InvalidToken as exc:
            return AccessGrant(pid, False, f"invalid token: {exc}")
        if tok is None:
            return AccessGrant(pid, False, "authentication required")
        if tier is AccessTier.REGISTERED:
            if tok.registered:
                return AccessGrant(pid, True, "registered user", obj.constraints)
            return AccessGrant(pid, False, "registration required")
        if "ignore_visas" in self.faults and tok.registered:
            return AccessGrant(pid, True, "registered user", obj.constraints)
        now = self.clock()
        for visa in tok.visas:
            if visa.active(now) and visa.scope_pid in (pid, self.scope_all):
                return AccessGrant(pid, True, "visa", obj.constraints)
        return AccessGrant(pid, False, "missing visa")

    # -- pillar 1/2: listing and metadata -----------------------------------

    def list_objects(self, cursor: str | None = None, page_size: int = DEFAULT_PAGE_SIZE) -> tuple[list[str], str | None]:
        page, nxt = paginate(self.objects(), lambda o: (str(o.platform_pid),), cursor, page_size)
        if "bare_listing" in self.faults:
            return [o.platform_pid.suffix for o in page], nxt
        return [str(o.platform_pid) for o in page], nxt

    def links(self, obj: HostedObject) -> list[dict]:
        return [
            {"rel": "data", "href": self.object_url(obj.platform_pid, "access")},
            {"rel": "license", "href": f"{self.base_url}/license"},
            {"rel": "describedby", "href": self.object_url(obj.platform_pid, "metadata")},
        ]

    def get_metadata(self, pid: Pid | str) -> dict:
        obj = self.lookup(pid)
        return {
            "pid": str(obj.platform_pid),
            "platform_id": self.platform_id,
            "object_type": obj.object_type.value,
            "access_tier": obj.access_tier.value,
            "metadata": copy.deepcopy(obj.metadata),
            "links": self.links(obj),
        }

    # -- pillar 3: data access ----------------------------------------------

    def get_data(self, pid: Pid | str, token: str | Token | None) -> dict:
        obj = self.lookup(pid)
        grant = self.authorize(token, obj.platform_pid)
        if not grant.granted:
            raise NotAuthorized(grant.reason)
        checksum = obj.checksum
        if "corrupt_checksum" in self.faults:
            checksum = hashlib.sha256(obj.content + b"\0").hexdigest()
        subject = self._subject(token)
        self._log("access", obj.platform_pid, subject)
        return {
            "id": str(obj.platform_pid),
            "checksums": [{"type": "sha-256", "checksum": checksum}],
            "size": obj.size,
            "access_methods": [
                {"type": "https", "access_url": {"url": self.object_url(obj.platform_pid, "content")}}
            ],
        }

    def read_content(self, pid: Pid | str, token: str | Token | None = None, grant_id: str | None = None) -> bytes:
        obj = self.lookup(pid)
        if grant_id is not None:
            with self._lock:
                held = self._grants.get(grant_id)
            if held is None or held[0] != obj.platform_pid:
                raise NotAuthorized("unknown transfer grant")
            return obj.content
        grant = self.authorize(token, obj.platform_pid)
        if not grant.granted:
            raise NotAuthorized(grant.reason)
        return obj.content

    def _subject(self, token: str | Token | None) -> str | None:
        try:
            tok = self._token(token)
        except InvalidToken:
            return None
        return tok.subject if tok else None

    # -- pillar 5: transfer to an authorized analysis environment -----------

    def transfer_to_aae(self, pid: Pid | str, aae: AaeDescriptor | str, token: str | Token | None) -> TransferGrant:
        aae_id = aae.aae_id if isinstance(aae, AaeDescriptor) else str(aae)
        obj = self.lookup(pid)
        grant = self.authorize(token, obj.platform_pid)
        if not grant.granted:
            raise NotAuthorized(grant.reason)
        if aae_id not in self.config.authorized_aaes and "any_aae" not in self.faults:
            raise AaeNotAuthorized(f"{aae_id!r} is not an authorized analysis environment for {self.platform_id}")
        grant_id = uuid.uuid4().hex
        with self._lock:
            self._grants[grant_id] = (obj.platform_pid, aae_id)
        self._log("transfer", obj.platform_pid, self._subject(token), aae_id)
        return TransferGrant(
            pid=obj.platform_pid,
            aae_id=aae_id,
            constraints=obj.constraints,
            transfer_url=self.object_url(obj.platform_pid, "content") + f"?grant={grant_id}",
        )

    # -- federated execution ------------------------------------------------

    def execute(self, computation: Mapping[str, Any], token: str | Token | None) -> dict:
        """Evaluate a declarative aggregate over authorized matching objects."""
        aggregate = computation.get("aggregate")
        if aggregate not in AGGREGATES:
            raise BadRequest(f"unknown aggregate {aggregate!r}")
        matching = [
            o
            for o in self.objects()
            if matches_filter(o, computation.get("filter") or {})
            and self.authorize(token, o.platform_pid).granted
        ]
        self._log("federated_execute", self.scope_all, self._subject(token))
        return {
            "platform_id": self.platform_id,
            "aggregate": aggregate,
            "value": evaluate_aggregate(aggregate, matching),
            "requires_review": self.config.requires_result_review,
        }

    # -- usage reports ------------------------------------------------------

    def receive_usage_report(self, report: Mapping[str, Any]) -> bool:
        """Store a pushed report; returns False for a repeat delivery."""
        period = report.get("period") or {}
        key = (report.get("platform_id", ""), str(period.get("start")), str(period.get("end")))
        with self._lock:
            fresh = key not in self._reports
            self._reports[key] = copy.deepcopy(dict(report))
        return fresh

    def usage_reports(self) -> list[dict]:
        with self._lock:
            return [copy.deepcopy(self._reports[k]) for k in sorted(self._reports)]


def matches_filter(obj: HostedObject, flt: Mapping[str, Any]) -> bool:
    if flt.get("object_type") and obj.object_type.value != flt["object_type"]:
        return False
    if flt.get("access_tier") and obj.access_tier.value != flt["access_tier"]:
        return False
    for key, want in (flt.get("metadata") or {}).items():
        if obj.metadata.get(key) != want:
            return False
    return True


def evaluate_aggregate(aggregate: str, objects: list[HostedObject]) -> Any:
    if aggregate == "count":
        return len(objects)
    if aggregate == "sum_size":
        return sum(o.size for o in objects)
    if aggregate == "checksum_list":
        return sorted(o.checksum for o in objects)
    raise BadRequest(f"unknown aggregate {aggregate!r}")
