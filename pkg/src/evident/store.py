"""Append-only JSON Lines event log with periodic snapshots.

Annotation data is precious and small: every state change is one event
line, flushed on write. Replaying the log reconstructs identical session
state; snapshots exist for operators, not correctness.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Callable, Iterator


class EventLog:
    def __init__(
        self,
        store_dir: str | Path,
        snapshot_every: int = 50,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.store_dir / "events.jsonl"
        self.snapshot_path = self.store_dir / "snapshot.json"
        self.snapshot_every = snapshot_every
        self.clock = clock
        self._lock = threading.Lock()
        self._count = sum(1 for _ in self.replay())
        self._snapshot_provider: Callable[[], dict] | None = None

    def set_snapshot_provider(self, provider: Callable[[], dict]) -> None:
        self._snapshot_provider = provider

    def append(self, event_type: str, **payload) -> dict:
        event = {"ts": self.clock(), "type": event_type, **payload}
        with self._lock:
            with self.events_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")
                fh.flush()
            self._count += 1
            if self._snapshot_provider and self._count % self.snapshot_every == 0:
                tmp = self.snapshot_path.with_suffix(".tmp")
                tmp.write_text(
                    json.dumps({"event_count": self._count, "state": self._snapshot_provider()}),
                    encoding="utf-8",
                )
                tmp.replace(self.snapshot_path)
        return event

    def replay(self) -> Iterator[dict]:
        if not self.events_path.exists():
            return
        with self.events_path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)


def protocol_violations(events: Iterator[dict] | list[dict]) -> list[str]:
    """Sessions where a prediction or evidence payload precedes likelihoods.

    Used to audit the ordering guard from the request log alone.
    """
    likelihoods_done: set[str] = set()
    violations = []
    for event in events:
        sid = event.get("session_id")
        if event["type"] == "likelihoods_submitted":
            likelihoods_done.add(sid)
        elif event["type"] in ("prediction_served", "evidence_served"):
            if sid not in likelihoods_done:
                violations.append(f"{event['type']} before likelihoods in session {sid}")
    return violations
