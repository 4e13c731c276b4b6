"""Adapters for the question-answering system under test.

The harness never interprets or normalizes a SUT answer; the oracle
receives the verbatim text. Three adapters cover hosted models (HTTP),
local runners (subprocess speaking newline-delimited JSON) and tests
(scripted mock).
"""

from __future__ import annotations

import hashlib
import json
import logging
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Protocol

from .errors import SutError, SutTimeoutError
from .corpus import ContextRecord
from .validation import TestCase

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SutAnswer:
    text: str
    latency_ms: float
    sut_identity: str

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency must be >= 0")


class SutAdapter(Protocol):
    identity: str
    max_parallelism: int

    def answer(self, context: str, question: str) -> str: ...

    def health_check(self) -> bool: ...


class MockSutAdapter:
    """Deterministic playback keyed on the exact question text.

    A sha256 question digest is accepted as a key too, so fixtures can
    avoid repeating long questions.
    """

    identity = "mock-sut/1"
    max_parallelism = 8

    def __init__(self, answers: Mapping[str, str], default: str | None = None):
        self.answers = dict(answers)
        self.default = default
        self.query_count = 0

    @classmethod
    def from_file(cls, path) -> "MockSutAdapter":
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
        return cls(spec.get("answers", {}), default=spec.get("default"))

    def answer(self, context: str, question: str) -> str:
        self.query_count += 1
        if question in self.answers:
            return self.answers[question]
        digest = hashlib.sha256(question.encode("utf-8")).hexdigest()
        if digest in self.answers:
            return self.answers[digest]
        if self.default is not None:
            return self.default
        raise SutError(f"mock SUT has no answer for question {question[:60]!r}")

    def health_check(self) -> bool:
        return True


class HttpSutAdapter:
    """POST {"context": str, "question": str} -> {"answer": str}."""

    max_parallelism = 4

    def __init__(self, url: str, identity: str = "http-sut", timeout_s: float = 30.0):
        self.url = url
        self.identity = identity
        self.timeout_s = timeout_s

    def answer(self, context: str, question: str) -> str:
        import requests

        try:
            resp = requests.post(
                self.url,
                json={"context": context, "question": question},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            return str(resp.json()["answer"])
        except requests.Timeout as exc:
            raise SutTimeoutError(f"SUT timed out after {self.timeout_s}s") from exc
        except (requests.RequestException, ValueError, KeyError) as exc:
            raise SutError(f"SUT request failed: {exc}") from exc

    def health_check(self) -> bool:
        import requests

        try:
            resp = requests.post(
                self.url, json={"context": "ping", "question": "ping"}, timeout=self.timeout_s
            )
            return resp.ok
        except requests.RequestException:
            return False


class SubprocessSutAdapter:
    """One JSON object per line on stdin/stdout; single request in flight."""

    max_parallelism = 1

    def __init__(self, cmd: list[str], identity: str = "subprocess-sut",
                 timeout_s: float = 30.0):
        self.cmd = list(cmd)
        self.identity = identity
        self.timeout_s = timeout_s
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def answer(self, context: str, question: str) -> str:
        with self._lock:
            proc = self._ensure_proc()
            line = json.dumps({"context": context, "question": question}) + "\n"
            result: dict = {}

            def _roundtrip():
                proc.stdin.write(line)
                proc.stdin.flush()
                result["raw"] = proc.stdout.readline()

            worker = threading.Thread(target=_roundtrip, daemon=True)
            worker.start()
            worker.join(self.timeout_s)
            if worker.is_alive():
                proc.kill()
                self._proc = None
                raise SutTimeoutError(f"SUT timed out after {self.timeout_s}s")
            raw = result.get("raw", "")
            if not raw:
                raise SutError("SUT closed its stdout")
            try:
                return str(json.loads(raw)["answer"])
            except (ValueError, KeyError) as exc:
                raise SutError(f"malformed SUT line: {raw[:80]!r}") from exc

    def health_check(self) -> bool:
        try:
            self._ensure_proc()
            return True
        except OSError:
            return False

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc = None


def query(adapter: SutAdapter, test: TestCase, context: ContextRecord) -> SutAnswer:
    """Send one test to the SUT and capture the verbatim answer with latency."""
    started = time.perf_counter()
    text = adapter.answer(context.text, test.question)
    latency_ms = (time.perf_counter() - started) * 1000.0
    return SutAnswer(text=text, latency_ms=latency_ms, sut_identity=adapter.identity)
