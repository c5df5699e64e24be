"""Exception hierarchy shared by every service.

Each error carries a stable ``code`` and the HTTP status used when it
crosses a service boundary, so clients can re-raise the same class on the
other side.
"""

from __future__ import annotations

from typing import Any


class MeshError(Exception):
    code = "MESH_ERROR"
    http_status = 400

    def __init__(self, message: str = "", details: Any = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_json(self) -> dict:
        body = {"error": self.code, "message": self.message}
        if self.details is not None:
            body["details"] = self.details
        return body


class MalformedPid(MeshError):
    code = "MALFORMED_PID"


class UnsupportedScheme(MeshError):
    code = "UNSUPPORTED_SCHEME"


class UnknownPid(MeshError):
    code = "UNKNOWN_PID"
    http_status = 404


class UnsupportedObjectType(MeshError):
    code = "UNSUPPORTED_OBJECT_TYPE"
    http_status = 422


class SchemaViolation(MeshError):
    code = "SCHEMA_VIOLATION"
    http_status = 422


class UnknownPlatform(MeshError):
    code = "UNKNOWN_PLATFORM"
    http_status = 422


class IneligiblePlatform(MeshError):
    code = "INELIGIBLE_PLATFORM"
    http_status = 403


class MalformedCursor(MeshError):
    code = "MALFORMED_CURSOR"


class NotAuthorized(MeshError):
    code = "NOT_AUTHORIZED"
    http_status = 403


class BadCredentials(MeshError):
    code = "BAD_CREDENTIALS"
    http_status = 401


class AaeNotAuthorized(MeshError):
    code = "AAE_NOT_AUTHORIZED"
    http_status = 403


class NodeUnreachable(MeshError):
    code = "NODE_UNREACHABLE"
    http_status = 502


class LinkageDisabled(MeshError):
    code = "LINKAGE_DISABLED"
    http_status = 409


class NotApproved(MeshError):
    code = "NOT_APPROVED"
    http_status = 403


class NotPending(MeshError):
    code = "NOT_PENDING"
    http_status = 409


class BadFixture(MeshError):
    code = "BAD_FIXTURE"


class PortInUse(MeshError):
    code = "PORT_IN_USE"


class NotFound(MeshError):
    code = "NOT_FOUND"
    http_status = 404


class BadRequest(MeshError):
    code = "BAD_REQUEST"


def _collect(cls: type[MeshError], out: dict[str, type[MeshError]]) -> None:
    for sub in cls.__subclasses__():
        out[sub.code] = sub
        _collect(sub, out)


ERRORS_BY_CODE: dict[str, type[MeshError]] = {MeshError.code: MeshError}
_collect(MeshError, ERRORS_BY_CODE)


def from_json(body: dict) -> MeshError:
    cls = ERRORS_BY_CODE.get(body.get("error", ""), MeshError)
    return cls(body.get("message", ""), body.get("details"))
