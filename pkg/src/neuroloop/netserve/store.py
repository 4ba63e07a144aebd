"""Append-only session persistence.

One directory per session under the data root: a meta document plus two
JSON-lines files appended as the session runs (per-epoch rows, transition
events). Appends flush and fsync before acknowledging, so every acknowledged
row survives a crash; readers ignore a torn trailing line.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path


class SessionNotFoundError(KeyError):
    def __init__(self, session_id: str):
        self.session_id = session_id
        super().__init__(f"unknown session {session_id!r}")


class LessonNotFoundError(KeyError):
    def __init__(self, lesson_id: str):
        self.lesson_id = lesson_id
        super().__init__(f"unknown lesson {lesson_id!r}")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    rows = []
    with open(path, "rb") as fh:
        for line in fh:
            if not line.endswith(b"\n"):
                break  # torn tail from a crash mid-append; never acknowledged
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                break
    return rows


class _AppendFile:
    """fsync-on-append JSON-lines writer."""

    def __init__(self, path: Path):
        self._fh = open(path, "ab")
        self._lock = threading.Lock()

    def append(self, doc: dict):
        line = (json.dumps(doc) + "\n").encode("utf-8")
        with self._lock:
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self):
        with self._lock:
            self._fh.close()


class SessionStore:
    """Filesystem-backed persistence for lessons and session records."""

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "lessons").mkdir(parents=True, exist_ok=True)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        self._files: dict[tuple[str, str], _AppendFile] = {}
        self._lock = threading.Lock()

    # -- lessons ----------------------------------------------------------

    def put_lesson(self, lesson_id: str, manifest: dict):
        path = self.root / "lessons" / f"{lesson_id}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        os.replace(tmp, path)

    def get_lesson(self, lesson_id: str) -> dict:
        path = self.root / "lessons" / f"{lesson_id}.json"
        if not path.exists():
            raise LessonNotFoundError(lesson_id)
        return json.loads(path.read_text(encoding="utf-8"))

    def list_lessons(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "lessons").glob("*.json"))

    # -- sessions ---------------------------------------------------------

    def _session_dir(self, session_id: str, must_exist=True) -> Path:
        d = self.root / "sessions" / session_id
        if must_exist and not d.is_dir():
            raise SessionNotFoundError(session_id)
        return d

    def create_session(self, meta: dict, session_id: str | None = None) -> str:
        session_id = session_id or uuid.uuid4().hex[:12]
        d = self._session_dir(session_id, must_exist=False)
        d.mkdir(parents=True, exist_ok=False)
        self._write_meta(d, meta)
        return session_id

    def _write_meta(self, d: Path, meta: dict):
        tmp = d / "meta.tmp"
        tmp.write_text(json.dumps(meta, indent=2), encoding="utf-8")
        with open(tmp, "rb") as fh:
            os.fsync(fh.fileno())
        os.replace(tmp, d / "meta.json")

    def get_meta(self, session_id: str) -> dict:
        d = self._session_dir(session_id)
        return json.loads((d / "meta.json").read_text(encoding="utf-8"))

    def update_meta(self, sid: str, /, **fields):
        d = self._session_dir(sid)
        meta = self.get_meta(sid)
        meta.update(fields)
        self._write_meta(d, meta)

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in (self.root / "sessions").iterdir() if p.is_dir())

    def _append_file(self, session_id: str, name: str) -> _AppendFile:
        d = self._session_dir(session_id)
        key = (session_id, name)
        with self._lock:
            if key not in self._files:
                self._files[key] = _AppendFile(d / name)
            return self._files[key]

    def append_row(self, session_id: str, row: dict):
        """Durable append of one per-epoch row; returns after fsync."""
        self._append_file(session_id, "rows.jsonl").append(row)

    def append_event(self, session_id: str, event: dict):
        self._append_file(session_id, "events.jsonl").append(event)

    def read_rows(self, session_id: str) -> list[dict]:
        return _read_jsonl(self._session_dir(session_id) / "rows.jsonl")

    def read_events(self, session_id: str) -> list[dict]:
        return _read_jsonl(self._session_dir(session_id) / "events.jsonl")

    def events_path(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "events.jsonl"

    def close(self):
        with self._lock:
            for f in self._files.values():
                f.close()
            self._files.clear()
