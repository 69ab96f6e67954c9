"""
Persistent cache of fetched works.

Works are stored one JSON object per line in an append-only file; an
in-memory index maps work IDs and DOIs to the latest entry. When a work
appears on several lines the last line wins, so re-fetching a work simply
appends a newer snapshot.
"""

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional, Union

from src.errors import DecodeError
from src.services.work_record import WorkRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CacheEntry:
    """One cached work with the time it was fetched."""

    key: str
    payload: WorkRecord
    fetched_at: str

    def __post_init__(self):
        if self.key != self.payload.id:
            raise ValueError(f"cache key {self.key} does not match work {self.payload.id}")
        if not self.fetched_at:
            raise ValueError("fetched_at must be set")

    def to_json(self) -> str:
        return json.dumps(
            {"key": self.key, "fetched_at": self.fetched_at, "payload": self.payload.to_dict()},
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "CacheEntry":
        try:
            data = json.loads(line)
            return cls(
                key=data["key"],
                payload=WorkRecord.from_dict(data["payload"]),
                fetched_at=data["fetched_at"],
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DecodeError(f"unreadable cache line: {e}") from e


class WorkCache:
    """Line-delimited work cache with an in-memory index."""

    def __init__(self, path: Union[str, Path]):
        """
        Open (or create on first write) the cache file.

        Args:
            path: Location of the works.jsonl file
        """
        self.path = Path(path)
        self._entries: Dict[str, CacheEntry] = {}
        self._doi_index: Dict[str, str] = {}
        self._write_lock = threading.Lock()
        self._load()

    def _load(self):
        if not self.path.exists():
            return

        skipped = 0
        with open(self.path, "r", encoding="utf-8") as f:
            for number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    self._index(CacheEntry.from_json(line))
                except DecodeError as e:
                    skipped += 1
                    logger.warning(f"Skipping cache line {number} in {self.path}: {e}")

        logger.debug(f"Loaded {len(self._entries)} cached works from {self.path}")
        if skipped:
            logger.warning(f"{skipped} unreadable line(s) ignored in {self.path}")

    def _index(self, entry: CacheEntry):
        self._entries[entry.key] = entry
        if entry.payload.doi:
            self._doi_index[entry.payload.doi] = entry.key

    def get(self, work_id: str) -> Optional[WorkRecord]:
        entry = self._entries.get(work_id)
        return entry.payload if entry else None

    def get_by_doi(self, doi: str) -> Optional[WorkRecord]:
        key = self._doi_index.get(doi)
        return self.get(key) if key else None

    def entry(self, work_id: str) -> Optional[CacheEntry]:
        return self._entries.get(work_id)

    def put(self, record: WorkRecord, fetched_at: Optional[str] = None) -> CacheEntry:
        """
        Write a record through to disk and the index.

        Args:
            record: Work to store
            fetched_at: ISO timestamp (defaults to now, UTC)

        Returns:
            CacheEntry: The stored entry
        """
        entry = CacheEntry(
            key=record.id,
            payload=record,
            fetched_at=fetched_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        with self._write_lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(entry.to_json() + "\n")
            self._index(entry)
        return entry

    def __contains__(self, work_id: str) -> bool:
        return work_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)
