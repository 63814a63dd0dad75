"""Completion backends: built-in n-gram, copy-truth oracle, HTTP and subprocess."""

from __future__ import annotations

import json
import logging
import os
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import httpx

from ..syntax import detokenize, token_texts
from .ngram import NgramModel

if TYPE_CHECKING:  # pragma: no cover
    from ..harness import EvalTask

log = logging.getLogger(__name__)

TOKEN_ENV = "HCP_API_TOKEN"


class BackendError(RuntimeError):
    pass


class HttpError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class Timeout(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class SpawnError(BackendError):
    pass


class ProtocolError(BackendError):
    pass


class ChildExited(BackendError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    max_new_tokens: int | None = None  # None: as many tokens as the reference has
    temperature: float = 0.0
    seed: int = 0


class CompletionBackend:
    """Base class.  Subclasses implement :meth:`complete`."""

    name = "backend"
    max_in_flight = 1

    def complete(self, prompt_tokens: Sequence[str], max_new_tokens: int, temperature: float = 0.0, seed: int = 0) -> list[str]:
        raise NotImplementedError

    def complete_task(self, task: EvalTask, max_new_tokens: int, temperature: float = 0.0, seed: int = 0) -> list[str]:
        return self.complete(task.prompt_tokens, max_new_tokens, temperature, seed)

    def logprobs(self, tokens: Sequence[str]) -> list[float]:
        raise NotImplementedError(f"{self.name} does not expose log-probabilities")

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class OracleBackend(CompletionBackend):
    """Returns the ground-truth continuation; for pipeline identity checks."""

    name = "oracle"

    def complete(self, prompt_tokens, max_new_tokens, temperature=0.0, seed=0):
        raise BackendError("the oracle needs the task, call complete_task()")

    def complete_task(self, task, max_new_tokens, temperature=0.0, seed=0):
        return list(task.reference_tokens[:max_new_tokens])


class NgramBackend(CompletionBackend):
    max_in_flight = 4

    def __init__(self, model: NgramModel, name: str = "ngram"):
        self.model = model
        self.name = name

    def complete(self, prompt_tokens, max_new_tokens, temperature=0.0, seed=0):
        return self.model.generate(prompt_tokens, max_new_tokens, temperature, seed)

    def logprobs(self, tokens):
        return self.model.logprobs(tokens)


class HttpBackend(CompletionBackend):
    """OpenAI-style ``/v1/completions`` client with retries."""

    RETRY_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})

    def __init__(
        self,
        base_url: str,
        model: str = "default",
        *,
        attempts: int = 3,
        timeout: float = 60.0,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        min_interval: float = 0.0,
        token: str | None = None,
        name: str | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.attempts = max(1, attempts)
        self.timeout = timeout
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self.min_interval = min_interval
        self.name = name or f"http:{model}"
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout, headers=headers)
        self._rate_lock = threading.Lock()
        self._next_slot = 0.0

    def _wait_for_slot(self) -> None:
        if self.min_interval <= 0:
            return
        with self._rate_lock:
            now = time.monotonic()
            start = max(now, self._next_slot)
            self._next_slot = start + self.min_interval
        if start > now:
            time.sleep(start - now)

    def complete_text(self, prompt: str, max_new_tokens: int, temperature: float = 0.0) -> str:
        payload = {"model": self.model, "prompt": prompt, "max_tokens": int(max_new_tokens), "temperature": float(temperature)}
        url = f"{self.base_url}/v1/completions"
        last: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self._wait_for_slot()
            try:
                resp = self._client.post(url, json=payload)
            except httpx.TimeoutException as exc:
                last = Timeout(f"request to {url} timed out after {self.timeout}s")
                last.__cause__ = exc
                continue
            except httpx.TransportError as exc:
                last = BackendError(f"transport error: {exc}")
                continue
            if resp.status_code in self.RETRY_STATUS:
                last = HttpError(resp.status_code, resp.text)
                log.warning("attempt %d/%d: HTTP %d", attempt + 1, self.attempts, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise HttpError(resp.status_code, resp.text)
            return self._parse(resp)
        assert last is not None
        raise last

    @staticmethod
    def _parse(resp: httpx.Response) -> str:
        try:
            text = resp.json()["choices"][0]["text"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {resp.text[:200]!r}") from exc
        if not isinstance(text, str):
            raise MalformedResponse(f"choice text is not a string: {text!r}")
        return text

    def complete(self, prompt_tokens, max_new_tokens, temperature=0.0, seed=0):
        return token_texts(self.complete_text(detokenize(prompt_tokens), max_new_tokens, temperature))

    def close(self):
        self._client.close()


class SubprocessBackend(CompletionBackend):
    """Line-delimited JSON over a long-lived child's stdin/stdout."""

    def __init__(self, command: str | Sequence[str], name: str | None = None, env: dict | None = None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.name = name or f"subprocess:{os.path.basename(self.argv[0]) if self.argv else ''}"
        self.env = env
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
        self._counter = 0

    def _ensure(self) -> subprocess.Popen:
        if self._proc is not None and self._proc.poll() is None:
            return self._proc
        if self._proc is not None:
            raise ChildExited(self._diagnostic(self._proc))
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                env=self.env,
            )
        except (OSError, ValueError) as exc:
            raise SpawnError(f"cannot start {self.argv!r}: {exc}") from exc
        return self._proc

    @staticmethod
    def _diagnostic(proc: subprocess.Popen) -> str:
        code = proc.wait()
        err = proc.stderr.read() if proc.stderr else ""
        return f"child exited with code {code}; stderr: {err.strip()[-500:]!r}"

    def complete_text(self, prompt: str, max_new_tokens: int) -> str:
        with self._lock:
            proc = self._ensure()
            self._counter += 1
            req_id = str(self._counter)
            line = json.dumps({"id": req_id, "prompt": prompt, "max_tokens": int(max_new_tokens)})
            try:
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ChildExited(self._diagnostic(proc)) from exc
            reply = proc.stdout.readline()
            if not reply:
                raise ChildExited(self._diagnostic(proc))
        try:
            obj = json.loads(reply)
        except ValueError as exc:
            raise ProtocolError(f"non-JSON reply: {reply[:200]!r}") from exc
        if not isinstance(obj, dict) or obj.get("id") != req_id or not isinstance(obj.get("completion"), str):
            raise ProtocolError(f"unexpected reply: {reply[:200]!r}")
        return obj["completion"]

    def complete(self, prompt_tokens, max_new_tokens, temperature=0.0, seed=0):
        return token_texts(self.complete_text(detokenize(prompt_tokens), max_new_tokens))

    def close(self):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
            proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        finally:
            for stream in (proc.stdout, proc.stderr):
                if stream:
                    stream.close()


def backend_from_spec(spec: str, **http_options) -> CompletionBackend:
    """Build a backend from ``oracle``, ``ngram:<file>``, ``http:<url>`` or ``subprocess:<cmd>``."""
    kind, _, arg = spec.partition(":")
    if kind == "oracle" and not arg:
        return OracleBackend()
    if kind == "ngram" and arg:
        return NgramBackend(NgramModel.load(arg), name=f"ngram:{os.path.splitext(os.path.basename(arg))[0]}")
    if kind == "http" and arg:
        return HttpBackend(arg, **http_options)
    if kind == "subprocess" and arg:
        return SubprocessBackend(arg)
    raise ValueError(f"unknown backend spec {spec!r}")
