"""Append-only JSONL journal."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Iterator


class Journal:
    """One JSON object per line, in commit order.

    With ``path=None`` entries are kept in memory only; the line format is
    identical so tests can compare tails either way.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._memory: list[bytes] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch(exist_ok=True)

    @staticmethod
    def encode(entry: Any) -> bytes:
        return json.dumps(entry, sort_keys=True, separators=(",", ":")).encode() + b"\n"

    def append(self, entry: Any) -> None:
        line = self.encode(entry)
        with self._lock:
            if self.path is None:
                self._memory.append(line)
                return
            with self.path.open("ab") as fh:
                fh.write(line)
                fh.flush()

    def raw_lines(self) -> list[bytes]:
        with self._lock:
            if self.path is None:
                return list(self._memory)
            data = self.path.read_bytes()
        lines = data.splitlines(keepends=True)
        # a torn final write has no newline; it never committed
        if lines and not lines[-1].endswith(b"\n"):
            lines.pop()
        return lines

    def __iter__(self) -> Iterator[Any]:
        for line in self.raw_lines():
            if line.strip():
                yield json.loads(line)

    def __len__(self) -> int:
        return len(self.raw_lines())
