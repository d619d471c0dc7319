"""File-backed persistence: an append-only mutation journal plus
periodic snapshots.

Layout inside the data directory:
  journal.log    one JSON object per line: {"i": index, "op": name, "data": ...}
  snapshot.json  {"upto": last-applied-index, "state": full state dump}

Restore loads the snapshot (if any) and replays journal entries with
index > upto. Snapshots are written via a temp file and os.replace so a
crash never leaves a half-written snapshot.
"""

from __future__ import annotations

import json
import os
from pathlib import Path


class Journal:
    """Mutation log for one server instance. With data_dir=None, the
    server runs purely in memory (used by tests and embedded scenarios)."""

    def __init__(self, data_dir: str | os.PathLike | None):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self._fh = None
        self.next_index = 0
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)

    @property
    def journal_path(self) -> Path:
        return self.data_dir / "journal.log"

    @property
    def snapshot_path(self) -> Path:
        return self.data_dir / "snapshot.json"

    def load(self) -> tuple[dict | None, list[dict]]:
        """Return (snapshot_state or None, journal entries to replay)."""
        if self.data_dir is None:
            return None, []
        snapshot = None
        upto = -1
        if self.snapshot_path.exists():
            with open(self.snapshot_path) as fh:
                blob = json.load(fh)
            snapshot = blob["state"]
            upto = blob["upto"]
            self.next_index = upto + 1
        pending = []
        if self.journal_path.exists():
            with open(self.journal_path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    entry = json.loads(line)
                    if entry["i"] > upto:
                        pending.append(entry)
                    self.next_index = max(self.next_index, entry["i"] + 1)
        return snapshot, pending

    def _open(self):
        if self._fh is None:
            self._fh = open(self.journal_path, "a")
        return self._fh

    def append(self, op: str, data: dict) -> int:
        index = self.next_index
        self.next_index += 1
        if self.data_dir is not None:
            fh = self._open()
            fh.write(json.dumps({"i": index, "op": op, "data": data},
                                separators=(",", ":")) + "\n")
            fh.flush()
        return index

    def write_snapshot(self, state: dict) -> None:
        if self.data_dir is None:
            return
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        with open(tmp, "w") as fh:
            json.dump({"upto": self.next_index - 1, "state": state}, fh)
        os.replace(tmp, self.snapshot_path)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
