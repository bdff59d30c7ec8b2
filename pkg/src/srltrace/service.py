"""Annotation HTTP service for human SRL coding.

Serves combined utterances with their neighboring tutor-action context,
accepts per-coder code writes, and reports live inter-rater reliability over
whatever double-coded subset exists. Labels persist to the codes CSV through
an atomic write-temp-rename after every change; concurrent writes to the
same (utterance, coder) resolve last-write-wins. Localhost-first: no
authentication unless a static token is configured.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

from srltrace import coding, pipeline
from srltrace.errors import SrlTraceError
from srltrace.ingest import ActionKind, Outcome, Transaction


class BindFailure(SrlTraceError):
    """The service could not bind its address."""


def _action_summary(t: Transaction) -> dict:
    return {
        "step_id": t.step_id,
        "kind": t.kind.value,
        "correct": t.outcome is Outcome.CORRECT and t.kind is ActionKind.ATTEMPT,
    }


class AnnotationState:
    """In-memory utterances, contexts, and labels behind a writer lock."""

    def __init__(self, utterances, transactions, codes_path: Path):
        self.codes_path = Path(codes_path)
        self._lock = threading.Lock()
        self.utterances = list(utterances)
        self._by_id = {u.utterance_id: u for u in self.utterances}

        by_session: dict[str, list[Transaction]] = {}
        for t in transactions:
            by_session.setdefault(t.session_id, []).append(t)
        self._context: dict[str, dict] = {}
        for u in self.utterances:
            session_txns = by_session.get(u.session_id, [])
            prev_idx, next_idx = u.window
            self._context[u.utterance_id] = {
                "prior_action": _action_summary(session_txns[prev_idx])
                if prev_idx is not None else None,
                "next_action": _action_summary(session_txns[next_idx])
                if next_idx < len(session_txns) else None,
            }

        self.labels: dict[tuple[str, str], coding.SrlCodes] = {}
        if self.codes_path.exists():
            for rec in coding.parse_codes(self.codes_path):
                self.labels[(rec.utterance_id, rec.coder_id)] = rec

    def sessions(self) -> list[dict]:
        out: dict[str, dict] = {}
        with self._lock:
            coded = {uid for uid, _ in self.labels}
        for u in self.utterances:
            entry = out.setdefault(
                u.session_id,
                {"session_id": u.session_id, "n_utterances": 0, "n_coded": 0},
            )
            entry["n_utterances"] += 1
            entry["n_coded"] += u.utterance_id in coded
        return list(out.values())

    def session_utterances(self, session_id: str) -> list[dict] | None:
        selected = [u for u in self.utterances if u.session_id == session_id]
        if not selected:
            return None
        with self._lock:
            labels = dict(self.labels)
        out = []
        for u in selected:
            per_coder = {
                coder: {
                    "process": rec.process, "plan": rec.plan,
                    "act": rec.act, "error": rec.error,
                }
                for (uid, coder), rec in labels.items()
                if uid == u.utterance_id
            }
            out.append({
                "utterance_id": u.utterance_id,
                "session_id": u.session_id,
                "index": u.window[1],
                "text": u.text,
                "segment_count": u.segment_count,
                **self._context[u.utterance_id],
                "codes": per_coder,
                "coded_by": sorted(per_coder),
            })
        return out

    def put_codes(self, utterance_id: str, coder: str, flags: dict) -> dict:
        if utterance_id not in self._by_id:
            raise KeyError(utterance_id)
        rec = coding.SrlCodes(
            utterance_id=utterance_id,
            coder_id=coder,
            process=bool(flags.get("process", False)),
            plan=bool(flags.get("plan", False)),
            act=bool(flags.get("act", False)),
            error=bool(flags.get("error", False)),
        )
        with self._lock:
            self.labels[(utterance_id, coder)] = rec
            self._persist_locked()
        return {
            "utterance_id": utterance_id,
            "coder_id": coder,
            "process": rec.process, "plan": rec.plan,
            "act": rec.act, "error": rec.error,
        }

    def _persist_locked(self) -> None:
        records = [self.labels[key] for key in sorted(self.labels)]
        fd, tmp = tempfile.mkstemp(
            dir=str(self.codes_path.parent), prefix=".codes-", suffix=".csv"
        )
        os.close(fd)
        try:
            coding.write_codes(tmp, records)
            os.replace(tmp, self.codes_path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def export_csv(self) -> bytes:
        with self._lock:
            records = [self.labels[key] for key in sorted(self.labels)]
        lines = [",".join(coding.CODES_HEADER)]
        for rec in records:
            lines.append(
                ",".join(
                    [rec.utterance_id, rec.coder_id]
                    + [str(int(f)) for f in rec.flags()]
                )
            )
        return ("\n".join(lines) + "\n").encode("utf-8")

    def reliability(self) -> dict:
        with self._lock:
            records = list(self.labels.values())
        return coding.reliability_summary(records)


class _Handler(BaseHTTPRequestHandler):
    state: AnnotationState
    token: str | None = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload, content_type="application/json") -> None:
        body = payload if isinstance(payload, bytes) else json.dumps(
            payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Authorization")
        self.end_headers()
        self.wfile.write(body)

    def _authorized(self) -> bool:
        if self.token is None:
            return True
        return self.headers.get("Authorization") == f"Bearer {self.token}"

    def do_OPTIONS(self):
        self._send(204, b"", content_type="text/plain")

    def do_GET(self):
        if not self._authorized():
            self._send(401, {"error": "missing or bad token"})
            return
        url = urlparse(self.path)
        # Utterance ids contain '#', so clients must percent-encode them.
        parts = [unquote(p) for p in url.path.split("/") if p]
        if url.path == "/health":
            self._send(200, {
                "status": "ok",
                "n_utterances": len(self.state.utterances),
            })
        elif url.path == "/sessions":
            self._send(200, self.state.sessions())
        elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "utterances":
            payload = self.state.session_utterances(parts[1])
            if payload is None:
                self._send(404, {"error": f"unknown session {parts[1]!r}"})
            else:
                self._send(200, payload)
        elif url.path == "/reliability":
            self._send(200, self.state.reliability())
        elif url.path == "/export":
            self._send(200, self.state.export_csv(), content_type="text/csv")
        else:
            self._send(404, {"error": f"no route for GET {url.path}"})

    def do_PUT(self):
        if not self._authorized():
            self._send(401, {"error": "missing or bad token"})
            return
        url = urlparse(self.path)
        parts = [unquote(p) for p in url.path.split("/") if p]
        if len(parts) != 3 or parts[0] != "utterances" or parts[2] != "codes":
            self._send(404, {"error": f"no route for PUT {url.path}"})
            return
        query = parse_qs(url.query)
        coder = (query.get("coder") or [""])[0].strip()
        if not coder:
            self._send(400, {"error": "coder query parameter is required"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            flags = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(flags, dict):
                raise ValueError("body must be a JSON object")
            unknown = set(flags) - set(coding.CATEGORIES)
            if unknown:
                raise ValueError(f"unknown categories {sorted(unknown)}")
        except (ValueError, json.JSONDecodeError) as exc:
            self._send(400, {"error": str(exc)})
            return
        try:
            stored = self.state.put_codes(parts[1], coder, flags)
        except KeyError:
            self._send(404, {"error": f"unknown utterance {parts[1]!r}"})
            return
        self._send(200, {"stored": stored})


def build_state(config: pipeline.ProjectConfig) -> AnnotationState:
    """Load utterances and contexts from the configured input files."""
    utterances, transactions, _ = pipeline.build_utterances(config)
    return AnnotationState(utterances, transactions, Path(config.codes))


def serve_annotation(
    state: AnnotationState,
    host: str = "127.0.0.1",
    port: int = 8577,
    token: str | None = None,
) -> ThreadingHTTPServer:
    """Bind the annotation service; caller drives serve_forever/shutdown."""
    handler = type("BoundHandler", (_Handler,), {"state": state, "token": token})
    try:
        return ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
