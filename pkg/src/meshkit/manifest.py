"""The mesh governance contract: which object types the mesh indexes, the
minimum metadata for each, what platforms must attest to join, and the
formality knobs that switch optional behaviour on or off."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import BadFixture, MalformedPid, UnsupportedObjectType
from .identifiers import Scheme, is_valid_namespace, parse_pid


class DataObjectType(str, Enum):
    DATASET = "dataset"
    STUDY = "study"
    CLINICAL_TRIAL = "clinical_trial"
    PARTICIPANT_CLINICAL = "participant_clinical"
    PARTICIPANT_OMICS = "participant_omics"
    PARTICIPANT_IMAGING = "participant_imaging"
    SEQUENCE_FILE = "sequence_file"
    IMAGING_OBJECT = "imaging_object"


class AccessTier(str, Enum):
    OPEN = "open"
    REGISTERED = "registered"
    CONTROLLED = "controlled"

    @property
    def rank(self) -> int:
        return _TIER_RANK[self]

    def __lt__(self, other):
        if not isinstance(other, AccessTier):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other):
        if not isinstance(other, AccessTier):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other):
        if not isinstance(other, AccessTier):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other):
        if not isinstance(other, AccessTier):
            return NotImplemented
        return self.rank >= other.rank


_TIER_RANK = {AccessTier.OPEN: 0, AccessTier.REGISTERED: 1, AccessTier.CONTROLLED: 2}


class FieldKind(str, Enum):
    TEXT = "text"
    INTEGER = "integer"
    DATE = "date"
    PID = "pid"
    DOI_LIST = "doi_list"
    CONTROLLED_TERM = "controlled_term"


FORMALITY_DIMENSIONS = ("standards", "apis", "mesh_governance", "data_governance", "platform_governance")
FORMALITY_LEVELS = ("informal", "moderate", "formal")
DMM_VISIBILITIES = ("public", "mixed", "private")
LINKAGE_MODES = ("none", "guid")

DEFAULT_LICENSE = "public-domain-dedication"
DEFAULT_NOTICE = (
    "This hub records which data you access and returns usage statistics "
    "to the platforms that host it."
)


@dataclass(frozen=True, order=True)
class Violation:
    code: str
    message: str = ""
    field: str | None = None

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message, "field": self.field}


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: FieldKind
    # may be absent at registration and filled in later by a supplement
    deferrable: bool = False


@dataclass
class MetadataSchema:
    object_type: DataObjectType
    required_fields: list[FieldSpec]
    controlled_vocabularies: dict[str, frozenset[str]] = field(default_factory=dict)

    def field_names(self) -> list[str]:
        return [f.name for f in self.required_fields]

    def to_json(self) -> dict:
        return {
            "object_type": self.object_type.value,
            "required_fields": [
                {"name": f.name, "kind": f.kind.value, **({"deferrable": True} if f.deferrable else {})}
                for f in self.required_fields
            ],
            "controlled_vocabularies": {
                k: sorted(v) for k, v in sorted(self.controlled_vocabularies.items())
            },
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> MetadataSchema:
        return cls(
            object_type=DataObjectType(data["object_type"]),
            required_fields=[
                FieldSpec(f["name"], FieldKind(f["kind"]), bool(f.get("deferrable", False)))
                for f in data.get("required_fields", [])
            ],
            controlled_vocabularies={
                k: frozenset(v) for k, v in data.get("controlled_vocabularies", {}).items()
            },
        )


def default_schema(object_type: DataObjectType) -> MetadataSchema:
    fields = [
        FieldSpec("title", FieldKind.TEXT),
        FieldSpec("description", FieldKind.TEXT),
        FieldSpec("object_type", FieldKind.CONTROLLED_TERM),
        FieldSpec("hosting_platform_id", FieldKind.TEXT),
        FieldSpec("primary_platform_pid", FieldKind.PID),
        FieldSpec("access_tier", FieldKind.CONTROLLED_TERM),
    ]
    if object_type in (DataObjectType.STUDY, DataObjectType.CLINICAL_TRIAL):
        fields += [
            FieldSpec("study_id", FieldKind.TEXT),
            FieldSpec("publication_dois", FieldKind.DOI_LIST, deferrable=True),
        ]
    return MetadataSchema(
        object_type=object_type,
        required_fields=fields,
        controlled_vocabularies={
            "object_type": frozenset(t.value for t in DataObjectType),
            "access_tier": frozenset(t.value for t in AccessTier),
        },
    )


@dataclass
class MeshManifest:
    mesh_id: str
    supported_types: set[DataObjectType]
    schemas: dict[DataObjectType, MetadataSchema]
    security_requirements: list[str] = field(default_factory=list)
    usage_stats_required: bool = True
    dmm_visibility: str = "public"
    formality: dict[str, str] = field(default_factory=dict)
    linkage_mode: str = "none"
    license: str = DEFAULT_LICENSE
    usage_notice: str = DEFAULT_NOTICE

    def to_json(self) -> dict:
        return {
            "mesh_id": self.mesh_id,
            "supported_types": sorted(t.value for t in self.supported_types),
            "schemas": {t.value: s.to_json() for t, s in sorted(self.schemas.items())},
            "security_requirements": list(self.security_requirements),
            "usage_stats_required": self.usage_stats_required,
            "dmm_visibility": self.dmm_visibility,
            "formality": dict(self.formality),
            "linkage_mode": self.linkage_mode,
            "license": self.license,
            "usage_notice": self.usage_notice,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> MeshManifest:
        supported = {DataObjectType(t) for t in data["supported_types"]}
        raw_schemas = data.get("schemas")
        if raw_schemas is None:
            schemas = {t: default_schema(t) for t in supported}
        else:
            schemas = {DataObjectType(k): MetadataSchema.from_json(v) for k, v in raw_schemas.items()}
        return cls(
            mesh_id=data["mesh_id"],
            supported_types=supported,
            schemas=schemas,
            security_requirements=list(data.get("security_requirements", [])),
            usage_stats_required=bool(data.get("usage_stats_required", True)),
            dmm_visibility=data.get("dmm_visibility", "public"),
            formality=dict(data.get("formality", {})),
            linkage_mode=data.get("linkage_mode", "none"),
            license=data.get("license", DEFAULT_LICENSE),
            usage_notice=data.get("usage_notice", DEFAULT_NOTICE),
        )


def load_manifest(path: str | Path) -> MeshManifest:
    path = Path(path)
    try:
        return MeshManifest.from_json(json.loads(path.read_text()))
    except FileNotFoundError:
        raise BadFixture(f"manifest not found: {path}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise BadFixture(f"{path}: {exc}") from None


def validate_manifest(m: MeshManifest) -> list[Violation]:
    out: list[Violation] = []
    if not is_valid_namespace(m.mesh_id):
        out.append(Violation("INVALID_NAMESPACE", f"mesh_id {m.mesh_id!r} is not a PID namespace"))
    for t in m.supported_types:
        if t not in m.schemas:
            out.append(Violation("MISSING_SCHEMA", f"no schema for {t.value}", t.value))
    for t, schema in m.schemas.items():
        if t not in m.supported_types:
            out.append(Violation("EXTRA_SCHEMA", f"schema for unsupported type {t.value}", t.value))
        if schema.object_type != t:
            out.append(Violation("SCHEMA_TYPE_MISMATCH", f"schema keyed {t.value} describes {schema.object_type.value}", t.value))
        names = schema.field_names()
        for name in sorted({n for n in names if names.count(n) > 1}):
            out.append(Violation("DUPLICATE_FIELD", f"{t.value}.{name} declared twice", name))
    for dim, level in m.formality.items():
        if dim not in FORMALITY_DIMENSIONS:
            out.append(Violation("UNKNOWN_FORMALITY_DIMENSION", f"{dim!r}", dim))
        elif level not in FORMALITY_LEVELS:
            out.append(Violation("BAD_FORMALITY_LEVEL", f"{dim}={level!r}", dim))
    if m.dmm_visibility not in DMM_VISIBILITIES:
        out.append(Violation("BAD_VISIBILITY", f"{m.dmm_visibility!r}"))
    if m.linkage_mode not in LINKAGE_MODES:
        out.append(Violation("BAD_LINKAGE_MODE", f"{m.linkage_mode!r}"))
    if not m.license:
        out.append(Violation("MISSING_LICENSE", "the metadata license must be nonempty"))
    return sorted(out)


def minimum_schema_for(m: MeshManifest, t: DataObjectType | str) -> MetadataSchema:
    try:
        t = DataObjectType(t)
    except ValueError:
        raise UnsupportedObjectType(f"unknown object type {t!r}") from None
    if t not in m.supported_types or t not in m.schemas:
        raise UnsupportedObjectType(f"mesh {m.mesh_id} does not index {t.value}")
    return m.schemas[t]


def _kind_ok(kind: FieldKind, value: Any) -> bool:
    if kind is FieldKind.TEXT or kind is FieldKind.CONTROLLED_TERM:
        return isinstance(value, str) and bool(value.strip())
    if kind is FieldKind.INTEGER:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind is FieldKind.DATE:
        if not isinstance(value, str):
            return False
        try:
            dt.date.fromisoformat(value)
        except ValueError:
            return False
        return True
    if kind is FieldKind.PID:
        if not isinstance(value, str):
            return False
        try:
            parse_pid(value)
        except MalformedPid:
            return False
        return True
    if kind is FieldKind.DOI_LIST:
        if not isinstance(value, list):
            return False
        for item in value:
            try:
                if parse_pid(item).scheme is not Scheme.DOI:
                    return False
            except MalformedPid:
                return False
        return True
    return False


def validate_against_schema(
    metadata: Mapping[str, Any], schema: MetadataSchema, *, allow_deferred: bool = False
) -> list[Violation]:
    """Violations of ``schema`` by ``metadata``; empty means valid.

    With ``allow_deferred`` a missing deferrable field is tolerated, which is
    how registration accepts objects whose remaining fields arrive later.
    """
    out: list[Violation] = []
    for spec in schema.required_fields:
        if spec.name not in metadata or metadata[spec.name] is None:
            if not (allow_deferred and spec.deferrable):
                out.append(Violation("MISSING_FIELD", f"{spec.name} is required", spec.name))
            continue
        value = metadata[spec.name]
        if not _kind_ok(spec.kind, value):
            out.append(Violation("WRONG_KIND", f"{spec.name} is not a valid {spec.kind.value}", spec.name))
            continue
        if spec.kind is FieldKind.CONTROLLED_TERM:
            vocab = schema.controlled_vocabularies.get(spec.name)
            if vocab is not None and value not in vocab:
                out.append(Violation("BAD_TERM", f"{spec.name}={value!r} not in vocabulary", spec.name))
    return sorted(out)


@dataclass
class PlatformDescriptor:
    platform_id: str
    endpoint: str
    attested_requirements: set[str] = field(default_factory=set)
    access_tiers_served: set[AccessTier] = field(default_factory=set)
    usage_opt_out: bool = False

    def to_json(self) -> dict:
        return {
            "platform_id": self.platform_id,
            "endpoint": self.endpoint,
            "attested_requirements": sorted(self.attested_requirements),
            "access_tiers_served": sorted(t.value for t in self.access_tiers_served),
            "usage_opt_out": self.usage_opt_out,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> PlatformDescriptor:
        return cls(
            platform_id=data["platform_id"],
            endpoint=data.get("endpoint", ""),
            attested_requirements=set(data.get("attested_requirements", [])),
            access_tiers_served={AccessTier(t) for t in data.get("access_tiers_served", [])},
            usage_opt_out=bool(data.get("usage_opt_out", False)),
        )


@dataclass(frozen=True)
class EligibilityDecision:
    eligible: bool
    missing: frozenset[str]


def check_platform_eligibility(m: MeshManifest, p: PlatformDescriptor) -> EligibilityDecision:
    missing = frozenset(set(m.security_requirements) - set(p.attested_requirements))
    return EligibilityDecision(not missing, missing)


def check_platforms_unique(platforms: Iterable[PlatformDescriptor]) -> list[Violation]:
    seen: set[str] = set()
    out = []
    for p in platforms:
        if p.platform_id in seen:
            out.append(Violation("DUPLICATE_PLATFORM", p.platform_id, p.platform_id))
        seen.add(p.platform_id)
    return out
