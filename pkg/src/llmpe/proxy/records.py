from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

from ..domain import Bundle

SOURCES = ("simulated", "llm")


@dataclass
class ComparisonRecord:
    bundle_a: Bundle
    bundle_b: Bundle
    answer: str
    source: str
    correct: bool | None = None
    transcript: list | None = None
    flagged: bool = False
    latency: float | None = None
    prompt_tokens: int | None = None
    completion_tokens: int | None = None

    def __post_init__(self):
        if self.answer not in ("A", "B"):
            raise ValueError(f"answer must be 'A' or 'B', got {self.answer!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if (self.transcript is not None) != (self.source == "llm"):
            raise ValueError("a transcript is required exactly when the source is an LLM")

    @property
    def label(self) -> int:
        """1 when bundle A was chosen."""
        return 1 if self.answer == "A" else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bundle_a"] = list(self.bundle_a.courses)
        d["bundle_b"] = list(self.bundle_b.courses)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonRecord":
        d = dict(d)
        d["bundle_a"] = Bundle(tuple(d["bundle_a"]))
        d["bundle_b"] = Bundle(tuple(d["bundle_b"]))
        return cls(**d)


class TranscriptStore:
    """Append-only JSON-lines log of every LLM request/response pair.

    Writes are serialised with a lock so concurrent proxy calls can share
    one store. With ``path=None`` the store only keeps records in memory.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def append(self, entry: dict) -> None:
        line = json.dumps(entry, sort_keys=True)
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with open(self.path, "a") as fh:
                    fh.write(line + "\n")
                    fh.flush()

    def __len__(self):
        return len(self.entries)
