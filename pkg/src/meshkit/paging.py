"""Opaque keyset cursors for paged listings."""

from __future__ import annotations

import base64
import binascii
import json
from typing import Any, Callable, Sequence, TypeVar

from .errors import MalformedCursor

T = TypeVar("T")

DEFAULT_PAGE_SIZE = 50


def encode_cursor(key: Sequence[str]) -> str:
    raw = json.dumps({"after": list(key)}, separators=(",", ":")).encode()
    return base64.urlsafe_b64encode(raw).decode().rstrip("=")


def decode_cursor(cursor: str) -> tuple[str, ...]:
    try:
        padded = cursor + "=" * (-len(cursor) % 4)
        data = json.loads(base64.urlsafe_b64decode(padded.encode()))
        after = data["after"]
        if not isinstance(after, list) or not all(isinstance(x, str) for x in after):
            raise ValueError(after)
    except (binascii.Error, ValueError, KeyError, TypeError, UnicodeDecodeError):
        raise MalformedCursor(f"cannot decode cursor {cursor!r}") from None
    return tuple(after)


def paginate(
    items: Sequence[T], key: Callable[[T], tuple[str, ...]], cursor: str | None, page_size: int
) -> tuple[list[T], str | None]:
    """Return the page after ``cursor`` from ``items`` (already sorted by ``key``)."""
    if page_size < 1:
        raise MalformedCursor(f"page size must be >= 1, got {page_size}")
    if cursor:
        after = decode_cursor(cursor)
        items = [it for it in items if key(it) > after]
    page = list(items[:page_size])
    next_cursor = encode_cursor(key(page[-1])) if len(items) > page_size else None
    return page, next_cursor


def parse_page_size(value: Any, default: int = DEFAULT_PAGE_SIZE) -> int:
    if value in (None, ""):
        return default
    try:
        size = int(value)
    except (TypeError, ValueError):
        raise MalformedCursor(f"bad page size {value!r}") from None
    if size < 1:
        raise MalformedCursor(f"page size must be >= 1, got {size}")
    return size
