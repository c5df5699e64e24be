"""GUID-style privacy-preserving record linkage.

Subject identifiers are normalized (trim, lowercase) and replaced by a
keyed HMAC-SHA256 token before comparison; only tokens and index pairs
leave this module.
"""

from __future__ import annotations

import hashlib
import hmac
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

from .errors import LinkageDisabled


def normalize_subject(subject_id: str) -> str:
    return subject_id.strip().lower()


def linkage_token(key: bytes | str, subject_id: str) -> str:
    if isinstance(key, str):
        key = key.encode()
    return hmac.new(key, normalize_subject(subject_id).encode(), hashlib.sha256).hexdigest()


@dataclass(frozen=True)
class LinkageResult:
    matches: list[tuple[int, int]]
    tokens_a: list[str]
    tokens_b: list[str]

    def to_json(self) -> dict:
        return {
            "matches": [list(p) for p in self.matches],
            "tokens_a": self.tokens_a,
            "tokens_b": self.tokens_b,
        }


def link_subjects(
    records_a: Sequence[str], records_b: Sequence[str], key: bytes | str, linkage_mode: str = "guid"
) -> LinkageResult:
    if linkage_mode != "guid":
        raise LinkageDisabled(f"linkage mode is {linkage_mode!r}")
    tokens_a = [linkage_token(key, s) for s in records_a]
    tokens_b = [linkage_token(key, s) for s in records_b]
    index_b: dict[str, list[int]] = defaultdict(list)
    for j, tok in enumerate(tokens_b):
        index_b[tok].append(j)
    matches = [(i, j) for i, tok in enumerate(tokens_a) for j in index_b.get(tok, ())]
    return LinkageResult(matches, tokens_a, tokens_b)
