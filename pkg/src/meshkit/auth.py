"""Passport-style bearer tokens.

A token is ``<base64url claims>.<hex tag>`` where the tag is an
HMAC-SHA256 of the claims segment under the issuer's secret. This keeps
the verifiable-issuer property of signed OIDC/passport tokens without a
JOSE stack.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .identifiers import Pid, parse_pid


class InvalidToken(Exception):
    pass


@dataclass(frozen=True)
class Visa:
    scope_pid: Pid
    issuer: str
    expiry: float
    visa_type: str = "controlled_access_grant"

    def active(self, now: float) -> bool:
        return now < self.expiry

    def to_json(self) -> dict:
        return {
            "visa_type": self.visa_type,
            "scope_pid": str(self.scope_pid),
            "issuer": self.issuer,
            "expiry": self.expiry,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> Visa:
        return cls(parse_pid(d["scope_pid"]), d["issuer"], float(d["expiry"]), d.get("visa_type", "controlled_access_grant"))


@dataclass(frozen=True)
class Token:
    subject: str
    issuer: str
    expiry: float
    registered: bool = False
    visas: tuple[Visa, ...] = field(default_factory=tuple)

    def claims(self) -> dict:
        return {
            "sub": self.subject,
            "iss": self.issuer,
            "exp": self.expiry,
            "registered": self.registered,
            "visas": [v.to_json() for v in self.visas],
        }

    @classmethod
    def from_claims(cls, c: Mapping) -> Token:
        return cls(
            subject=c["sub"],
            issuer=c["iss"],
            expiry=float(c["exp"]),
            registered=bool(c.get("registered", False)),
            visas=tuple(Visa.from_json(v) for v in c.get("visas", [])),
        )

    def with_visas(self, visas) -> Token:
        return replace(self, visas=tuple(visas))


def _b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode().rstrip("=")


def _unb64(text: str) -> bytes:
    return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))


def sign(token: Token, secret: str) -> str:
    body = _b64(json.dumps(token.claims(), sort_keys=True, separators=(",", ":")).encode())
    tag = hmac.new(secret.encode(), body.encode(), hashlib.sha256).hexdigest()
    return f"{body}.{tag}"


def decode_unverified(text: str) -> Token:
    try:
        body, _, _tag = text.partition(".")
        return Token.from_claims(json.loads(_unb64(body)))
    except (binascii.Error, ValueError, KeyError, TypeError) as exc:
        raise InvalidToken(f"undecodable token: {exc}") from None


class TokenVerifier:
    """Checks tag and expiry against a table of trusted issuer secrets."""

    def __init__(self, trusted: Mapping[str, str], clock: Callable[[], float] = time.time):
        self.trusted = dict(trusted)
        self.clock = clock

    def verify(self, text: str) -> Token:
        body, sep, tag = text.partition(".")
        if not sep:
            raise InvalidToken("missing tag")
        token = decode_unverified(text)
        secret = self.trusted.get(token.issuer)
        if secret is None:
            raise InvalidToken(f"untrusted issuer {token.issuer!r}")
        expected = hmac.new(secret.encode(), body.encode(), hashlib.sha256).hexdigest()
        if not hmac.compare_digest(expected, tag):
            raise InvalidToken("bad tag")
        if self.clock() >= token.expiry:
            raise InvalidToken("expired")
        return token

    def subject_or_none(self, text: str | None) -> str | None:
        if not text:
            return None
        try:
            return self.verify(text).subject
        except InvalidToken:
            return None


def tamper(text: str) -> str:
    """Flip the last tag digit; yields a token that must fail verification."""
    last = text[-1]
    return text[:-1] + ("0" if last != "0" else "1")
