"""Persistent identifiers: the ``scheme:namespace/suffix`` grammar, a
collision-checked minter, and the resolver table that maps a PID to the
platform hosting it."""

from __future__ import annotations

import re
import threading
import uuid
from dataclasses import dataclass
from enum import Enum

from .errors import MalformedPid, UnknownPid, UnsupportedScheme


class Scheme(str, Enum):
    DOI = "doi"
    GUID = "guid"
    ARK = "ark"
    MESH = "mesh"


MINTABLE = frozenset({Scheme.GUID, Scheme.MESH})

NAMESPACE_RE = re.compile(r"[a-z0-9.-]+")
SUFFIX_RE = re.compile(r"[\x21-\x7e]+")


def is_valid_namespace(text: str) -> bool:
    return bool(NAMESPACE_RE.fullmatch(text))


@dataclass(frozen=True, order=True)
class Pid:
    scheme: Scheme
    namespace: str
    suffix: str

    def __post_init__(self):
        try:
            scheme = Scheme(str(getattr(self.scheme, "value", self.scheme)).lower())
        except ValueError:
            raise MalformedPid(f"unknown scheme {self.scheme!r}") from None
        namespace = self.namespace.lower()
        if not is_valid_namespace(namespace):
            raise MalformedPid(f"bad namespace {self.namespace!r}")
        if not SUFFIX_RE.fullmatch(self.suffix):
            raise MalformedPid(f"bad suffix {self.suffix!r}")
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "namespace", namespace)

    def __str__(self) -> str:
        return f"{self.scheme.value}:{self.namespace}/{self.suffix}"

    def render(self) -> str:
        return str(self)


def parse_pid(text: str) -> Pid:
    """Parse canonical ``scheme:namespace/suffix`` text.

    Scheme and namespace are case-normalized; the suffix is kept verbatim.
    """
    if not isinstance(text, str):
        raise MalformedPid(f"expected text, got {type(text).__name__}")
    scheme, sep, rest = text.partition(":")
    if not sep:
        raise MalformedPid(f"{text!r}: missing ':' separator")
    namespace, sep, suffix = rest.partition("/")
    if not sep:
        raise MalformedPid(f"{text!r}: missing '/' separator")
    if not scheme or not namespace or not suffix:
        raise MalformedPid(f"{text!r}: empty field")
    return Pid(scheme, namespace, suffix)


def coerce_pid(value: Pid | str) -> Pid:
    return value if isinstance(value, Pid) else parse_pid(value)


class Minter:
    """Mints random 128-bit suffixes; never hands out the same PID twice."""

    def __init__(self):
        self._minted: set[Pid] = set()
        self._lock = threading.Lock()

    def mint(self, scheme: Scheme | str, namespace: str) -> Pid:
        try:
            scheme = Scheme(str(getattr(scheme, "value", scheme)).lower())
        except ValueError:
            raise UnsupportedScheme(f"unknown scheme {scheme!r}") from None
        if scheme not in MINTABLE:
            raise UnsupportedScheme(f"{scheme.value} identifiers are parsed, never minted")
        if not namespace:
            raise MalformedPid("namespace must be nonempty")
        with self._lock:
            while True:
                pid = Pid(scheme, namespace, str(uuid.uuid4()))
                if pid not in self._minted:
                    self._minted.add(pid)
                    return pid

    def __len__(self) -> int:
        return len(self._minted)


_default_minter = Minter()


def mint_pid(scheme: Scheme | str, namespace: str, minter: Minter | None = None) -> Pid:
    return (minter or _default_minter).mint(scheme, namespace)


@dataclass(frozen=True)
class ResolutionRecord:
    pid: Pid
    hosting_platform_id: str
    platform_endpoint: str
    primary_platform_pid: Pid | None = None

    def __post_init__(self):
        if self.pid.scheme is Scheme.MESH and self.primary_platform_pid is None:
            raise ValueError("mesh PIDs must resolve to a primary platform PID")

    def to_json(self) -> dict:
        return {
            "pid": str(self.pid),
            "hosting_platform_id": self.hosting_platform_id,
            "platform_endpoint": self.platform_endpoint,
            "primary_platform_pid": (
                str(self.primary_platform_pid) if self.primary_platform_pid else None
            ),
        }

    @classmethod
    def from_json(cls, data: dict) -> ResolutionRecord:
        primary = data.get("primary_platform_pid")
        return cls(
            pid=parse_pid(data["pid"]),
            hosting_platform_id=data["hosting_platform_id"],
            platform_endpoint=data["platform_endpoint"],
            primary_platform_pid=parse_pid(primary) if primary else None,
        )


class ResolverTable:
    def __init__(self):
        self._records: dict[Pid, ResolutionRecord] = {}
        self._lock = threading.Lock()

    def register(self, record: ResolutionRecord) -> None:
        with self._lock:
            self._records[record.pid] = record

    def remove(self, pid: Pid) -> None:
        with self._lock:
            self._records.pop(pid, None)

    def get(self, pid: Pid) -> ResolutionRecord:
        try:
            return self._records[pid]
        except KeyError:
            raise UnknownPid(f"{pid} is not registered") from None

    def __contains__(self, pid: Pid) -> bool:
        return pid in self._records

    def __len__(self) -> int:
        return len(self._records)


def resolve_pid(pid: Pid | str, table: ResolverTable) -> ResolutionRecord:
    return table.get(coerce_pid(pid))
