"""File-backed persistence: users, session metadata, append-only event logs.

Layout under the data root:

    users.jsonl                  one user record per line
    sessions/<id>.jsonl          append-only event log, one record per line
    sessions/<id>.meta.json      mode, bindings, creation time

Each log record is ``{"ts": <ms>, "event": {...}}`` followed by a newline;
a record is durable once append_event returns. Session state is never
stored: it is reconstructed by replaying the log through the engine, and a
replay mismatch or a torn final line is reported as corruption.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .engine import EngineConfig, SessionState, advance, start_session
from .events import CHOICE_MADE, TurnEvent, event_from_dict
from .script import ScriptAST

CSV_HEADER = "ts,seq,kind,segment,adherence"


class StoreError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    bindings: dict[str, str]
    created_at: int


@dataclass
class EventLog:
    session_id: str
    records: list[tuple[int, TurnEvent]] = field(default_factory=list)

    @property
    def events(self) -> list[TurnEvent]:
        return [event for _ts, event in self.records]


def _csv_field(value: str) -> str:
    if any(ch in value for ch in ',"\n\r'):
        return '"' + value.replace('"', '""') + '"'
    return value


class SessionStore:
    """One store instance owns a data directory; one writer per session."""

    def __init__(self, root: str | Path, script: ScriptAST):
        self.root = Path(root)
        self.script = script
        self.sessions_dir = self.root / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.users_path = self.root / "users.jsonl"
        self._master = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._last_seq: dict[str, int] = {}

    def _lock(self, session_id: str) -> threading.Lock:
        with self._master:
            if session_id not in self._locks:
                self._locks[session_id] = threading.Lock()
            return self._locks[session_id]

    # --- users -----------------------------------------------------------

    def create_user(self, user_id: str, bindings: dict[str, str], created_at: int) -> UserRecord:
        with self._master:
            if any(u.user_id == user_id for u in self.list_users()):
                raise StoreError("DUPLICATE_USER", f"user '{user_id}' already exists")
            record = UserRecord(user_id=user_id, bindings=dict(bindings), created_at=created_at)
            line = json.dumps(
                {"user_id": user_id, "bindings": bindings, "created_at": created_at},
                sort_keys=True, separators=(",", ":"), ensure_ascii=False,
            )
            with open(self.users_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            return record

    def list_users(self) -> list[UserRecord]:
        if not self.users_path.exists():
            return []
        users = []
        for line in self.users_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                d = json.loads(line)
                users.append(UserRecord(d["user_id"], d.get("bindings", {}), d["created_at"]))
        return users

    # --- sessions ----------------------------------------------------------

    def _meta_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.meta.json"

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def has_session(self, session_id: str) -> bool:
        return self._meta_path(session_id).exists()

    def list_sessions(self) -> list[str]:
        return sorted(p.stem.replace(".meta", "") for p in self.sessions_dir.glob("*.meta.json"))

    def create_session(
        self,
        session_id: str,
        user_id: str,
        mode: str,
        bindings: dict[str, str],
        created_at: int,
    ) -> None:
        with self._lock(session_id):
            meta_path = self._meta_path(session_id)
            if meta_path.exists():
                raise StoreError("DUPLICATE_SESSION", f"session '{session_id}' already exists")
            meta = {
                "session_id": session_id,
                "user_id": user_id,
                "mode": mode,
                "bindings": bindings,
                "created_at": created_at,
                "script_name": self.script.name,
                "script_version": self.script.version,
            }
            meta_path.write_text(
                json.dumps(meta, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
            self._log_path(session_id).touch()
            self._last_seq[session_id] = 0

    def session_meta(self, session_id: str) -> dict:
        meta_path = self._meta_path(session_id)
        if not meta_path.exists():
            raise StoreError("UNKNOWN_SESSION", f"no session '{session_id}'")
        return json.loads(meta_path.read_text(encoding="utf-8"))

    def append_event(self, session_id: str, ts: int, event: TurnEvent) -> bool:
        """Durably append one event; the ack means the bytes are flushed."""
        with self._lock(session_id):
            if not self.has_session(session_id):
                raise StoreError("UNKNOWN_SESSION", f"no session '{session_id}'")
            last = self._last_seq.get(session_id)
            if last is None:
                last = self._scan_last_seq(session_id)
            if event.seq != last + 1:
                raise StoreError(
                    "SEQ_GAP", f"expected seq {last + 1}, got {event.seq}"
                )
            record = {"ts": ts, "event": event.to_dict()}
            line = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            try:
                with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StoreError("IO", f"append failed: {exc}") from exc
            self._last_seq[session_id] = event.seq
            return True

    def _scan_last_seq(self, session_id: str) -> int:
        log = self.load_log(session_id)
        last = log.records[-1][1].seq if log.records else 0
        self._last_seq[session_id] = last
        return last

    def load_log(self, session_id: str) -> EventLog:
        if not self.has_session(session_id):
            raise StoreError("UNKNOWN_SESSION", f"no session '{session_id}'")
        log = EventLog(session_id=session_id)
        data = self._log_path(session_id).read_bytes()
        offset = 0
        expected_seq = 1
        while offset < len(data):
            newline = data.find(b"\n", offset)
            if newline < 0:
                raise StoreError(
                    "CORRUPT_LOG",
                    f"truncated record at byte offset {offset} of session '{session_id}'",
                )
            line = data[offset:newline]
            try:
                record = json.loads(line.decode("utf-8"))
                event = event_from_dict(record["event"])
                ts = record["ts"]
            except (ValueError, KeyError) as exc:
                raise StoreError(
                    "CORRUPT_LOG",
                    f"unreadable record at byte offset {offset} of session '{session_id}': {exc}",
                ) from exc
            if event.seq != expected_seq:
                raise StoreError(
                    "CORRUPT_LOG",
                    f"sequence gap at byte offset {offset}: expected {expected_seq}, got {event.seq}",
                )
            log.records.append((ts, event))
            expected_seq += 1
            offset = newline + 1
        return log

    def load_session(self, session_id: str) -> tuple[SessionState, EventLog]:
        """Event-sourced reconstruction: replay the log through the engine.

        The replayed stream must reproduce the logged one event for event
        (timestamps aside); any divergence marks the log corrupt.
        """
        meta = self.session_meta(session_id)
        log = self.load_log(session_id)
        state, replayed = start_session(
            self.script,
            meta["mode"],
            meta.get("bindings", {}),
            EngineConfig(session_id=session_id),
        )
        replayed = list(replayed)
        for _ts, event in log.records:
            if event.kind == CHOICE_MADE and event.seq > len(replayed):
                choice = self._choice_option_id(event)
                state, more = advance(state, choice)
                replayed.extend(more)
        if replayed != log.events:
            raise StoreError(
                "CORRUPT_LOG",
                f"replay of session '{session_id}' diverges from the stored log",
            )
        return state, log

    @staticmethod
    def _choice_option_id(choice_event: TurnEvent) -> str:
        """ChoiceMade events record the picked option as their options entry."""
        if not choice_event.options:
            raise StoreError(
                "CORRUPT_LOG", f"choice event {choice_event.seq} names no option"
            )
        return choice_event.options[0][0]

    # --- exports -----------------------------------------------------------

    def export_events(self, session_id: str, fmt: str = "jsonl") -> bytes:
        log = self.load_log(session_id)
        if fmt == "jsonl":
            lines = [
                json.dumps(
                    {"ts": ts, "event": event.to_dict()},
                    sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                )
                for ts, event in log.records
            ]
            return ("".join(line + "\n" for line in lines)).encode("utf-8")
        if fmt == "csv":
            rows = [CSV_HEADER]
            for ts, event in log.records:
                rows.append(
                    ",".join(
                        [
                            str(ts),
                            str(event.seq),
                            _csv_field(event.kind),
                            _csv_field(event.segment),
                            _csv_field(event.adherence or ""),
                        ]
                    )
                )
            return ("\r\n".join(rows) + "\r\n").encode("utf-8")
        raise StoreError("BAD_FORMAT", f"unknown export format '{fmt}'")
