"""Language-model contract, reference n-gram backend, and remote client.

The decoder only ever needs token log-probabilities for a prefix, so the
contract is exactly that: tokenize/detokenize plus ``next_logits``. The
add-one-smoothed n-gram model is the deterministic reference backend used
throughout the tests; real models sit behind the HTTP wire protocol
(``/v1/tokenize``, ``/v1/detokenize``, ``/v1/logits``) and may return
top-k-truncated distributions. All log-probabilities are natural log.
"""

from __future__ import annotations

import abc
import json
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import requests

logger = logging.getLogger(__name__)

TokenId = int


class LmProtocolError(RuntimeError):
    """The remote backend violated the wire protocol."""


class LmUnavailableError(RuntimeError):
    """The remote backend stayed unreachable across retries."""


@dataclass
class LmStep:
    """Log-probabilities for the next token; may cover only the top k.

    Remote responses also carry the backend's EOS id and vocabulary size.
    """

    logits: dict[TokenId, float]
    truncated: bool = False
    eos_id: TokenId | None = None
    vocab_size: int | None = None


class LmContract(abc.ABC):
    """Token-probability interface every backend implements."""

    eos: TokenId
    vocab_size: int

    @abc.abstractmethod
    def tokenize(self, text: str) -> list[TokenId]: ...

    @abc.abstractmethod
    def detokenize(self, ids: list[TokenId]) -> str: ...

    @abc.abstractmethod
    def next_logits(self, prefix: list[TokenId]) -> LmStep: ...


class NgramLm(LmContract):
    """Whitespace-token n-gram model with add-one smoothing.

    The vocabulary is fixed at training time (first-occurrence order, EOS
    last); the full distribution is returned at every step, so the
    exponentiated logits sum to exactly one. EOS is predictable but never
    a counted event: it holds only its add-one pseudo-count, so observed
    continuations always outweigh stopping.
    """

    def __init__(self, words: list[str], order: int,
                 context_totals: dict, follower_counts: dict):
        self._words = words
        self._ids = {w: i for i, w in enumerate(words)}
        self.order = order
        self._context_totals = context_totals
        self._follower_counts = follower_counts
        self.eos = len(words)
        self.vocab_size = len(words) + 1

    def tokenize(self, text: str) -> list[TokenId]:
        ids = []
        for word in text.split():
            if word not in self._ids:
                raise ValueError(f"word not in model vocabulary: {word!r}")
            ids.append(self._ids[word])
        return ids

    def detokenize(self, ids: list[TokenId]) -> str:
        words = []
        for tid in ids:
            if tid == self.eos:
                continue
            if not 0 <= tid < len(self._words):
                raise ValueError(f"token id out of range: {tid}")
            words.append(self._words[tid])
        return " ".join(words)

    def _context(self, prefix: list[TokenId]) -> tuple[TokenId, ...]:
        if self.order == 1:
            return ()
        return tuple(prefix[-(self.order - 1):])

    def next_logits(self, prefix: list[TokenId]) -> LmStep:
        context = self._context(prefix)
        total = self._context_totals.get(context, 0)
        followers = self._follower_counts.get(context, {})
        denom = total + self.vocab_size
        logits = {
            tid: math.log((followers.get(tid, 0) + 1) / denom)
            for tid in range(self.vocab_size)
        }
        return LmStep(logits=logits, truncated=False)


def train_ngram(corpus: list[str], n: int) -> NgramLm:
    """Train the reference n-gram model on whitespace-tokenized documents."""
    if not corpus:
        raise ValueError("training corpus must be non-empty")
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")

    words: list[str] = []
    ids: dict[str, int] = {}
    for doc in corpus:
        for word in doc.split():
            if word not in ids:
                ids[word] = len(words)
                words.append(word)

    context_totals: dict[tuple[TokenId, ...], int] = {}
    follower_counts: dict[tuple[TokenId, ...], Counter] = {}
    for doc in corpus:
        sequence = [ids[w] for w in doc.split()]
        for t, token in enumerate(sequence):
            context = () if n == 1 else tuple(sequence[max(0, t - (n - 1)):t])
            context_totals[context] = context_totals.get(context, 0) + 1
            follower_counts.setdefault(context, Counter())[token] += 1

    return NgramLm(words, n, context_totals, follower_counts)


# --------------------------------------------------------------------------
# Remote backend (HTTP wire protocol)
# --------------------------------------------------------------------------

_TRANSIENT = (requests.exceptions.ConnectionError, requests.exceptions.Timeout)


def _post_with_retries(url: str, payload: dict, *, timeout: float,
                       retries: int, backoff: float,
                       session: requests.Session | None = None) -> dict:
    post = (session or requests).post
    last_error: Exception | None = None
    for attempt in range(retries):
        try:
            response = post(url, json=payload, timeout=timeout)
            if response.status_code >= 500:
                last_error = LmUnavailableError(
                    f"{url}: server error {response.status_code}"
                )
            else:
                if response.status_code != 200:
                    raise LmProtocolError(
                        f"{url}: unexpected status {response.status_code}: {response.text[:200]}"
                    )
                try:
                    return response.json()
                except ValueError as exc:
                    raise LmProtocolError(f"{url}: response is not JSON") from exc
        except _TRANSIENT as exc:
            last_error = exc
        if attempt + 1 < retries:
            time.sleep(backoff * (2 ** attempt))
    raise LmUnavailableError(
        f"{url}: unreachable after {retries} attempts"
    ) from last_error


def remote_next_logits(endpoint: str, prefix: list[TokenId], top_k: int, *,
                       timeout: float = 30.0, retries: int = 3,
                       backoff: float = 0.1,
                       session: requests.Session | None = None) -> LmStep:
    """Fetch a top-k truncated next-token distribution from a remote backend."""
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    data = _post_with_retries(
        endpoint.rstrip("/") + "/v1/logits",
        {"prefix": list(prefix), "top_k": top_k},
        timeout=timeout, retries=retries, backoff=backoff, session=session,
    )
    for key in ("tokens", "eos_id", "vocab_size"):
        if key not in data:
            raise LmProtocolError(f"logits response missing field {key!r}")
    logits: dict[TokenId, float] = {}
    for entry in data["tokens"]:
        if not isinstance(entry, dict) or "id" not in entry or "logprob" not in entry:
            raise LmProtocolError(f"malformed token entry: {entry!r}")
        logprob = entry["logprob"]
        if not isinstance(logprob, (int, float)) or not math.isfinite(logprob):
            raise LmProtocolError(f"non-finite logprob for token {entry['id']!r}")
        logits[int(entry["id"])] = float(logprob)
    if len(logits) > top_k:
        raise LmProtocolError(f"server returned {len(logits)} tokens for top_k={top_k}")
    return LmStep(logits=logits, truncated=True,
                  eos_id=int(data["eos_id"]), vocab_size=int(data["vocab_size"]))


class RemoteLm(LmContract):
    """Client for a backend speaking the HTTP wire protocol.

    ``eos`` and ``vocab_size`` come from the first ``/v1/logits`` response
    and are cached; accessing them before any call triggers one probe
    request with an empty prefix.
    """

    def __init__(self, endpoint: str, top_k: int = 50, *, timeout: float = 30.0,
                 retries: int = 3, backoff: float = 0.1):
        if top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {top_k}")
        self.endpoint = endpoint.rstrip("/")
        self.top_k = top_k
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()
        self._eos: TokenId | None = None
        self._vocab_size: int | None = None

    def _post(self, path: str, payload: dict) -> dict:
        return _post_with_retries(
            self.endpoint + path, payload, timeout=self.timeout,
            retries=self.retries, backoff=self.backoff, session=self._session,
        )

    def tokenize(self, text: str) -> list[TokenId]:
        data = self._post("/v1/tokenize", {"text": text})
        if "ids" not in data or not isinstance(data["ids"], list):
            raise LmProtocolError("tokenize response missing 'ids' list")
        return [int(i) for i in data["ids"]]

    def detokenize(self, ids: list[TokenId]) -> str:
        data = self._post("/v1/detokenize", {"ids": list(ids)})
        if "text" not in data or not isinstance(data["text"], str):
            raise LmProtocolError("detokenize response missing 'text' string")
        return data["text"]

    def next_logits(self, prefix: list[TokenId]) -> LmStep:
        step = remote_next_logits(
            self.endpoint, prefix, self.top_k, timeout=self.timeout,
            retries=self.retries, backoff=self.backoff, session=self._session,
        )
        self._eos = step.eos_id
        self._vocab_size = step.vocab_size
        return step

    def _probe(self) -> None:
        if self._eos is None:
            self.next_logits([])

    @property
    def eos(self) -> TokenId:  # type: ignore[override]
        self._probe()
        assert self._eos is not None
        return self._eos

    @property
    def vocab_size(self) -> int:  # type: ignore[override]
        self._probe()
        assert self._vocab_size is not None
        return self._vocab_size


# --------------------------------------------------------------------------
# Wire-protocol server around an in-process model
# --------------------------------------------------------------------------


class LmServer:
    """Threaded HTTP server exposing an ``LmContract`` over the wire protocol."""

    def __init__(self, lm: LmContract, host: str = "127.0.0.1", port: int = 0):
        self.lm = lm
        handler = _make_handler(lm)
        self.httpd = ThreadingHTTPServer((host, port), handler)

    @property
    def host(self) -> str:
        return self.httpd.server_address[0]

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"http://{self.host}:{self.port}"

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


def _make_handler(lm: LmContract):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # noqa: N802 - stdlib signature
            logger.debug("lm server: " + fmt, *args)

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):  # noqa: N802 - stdlib signature
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                self._reply(400, {"error": "request body is not valid JSON"})
                return
            try:
                if self.path == "/v1/tokenize":
                    self._reply(200, {"ids": lm.tokenize(str(payload["text"]))})
                elif self.path == "/v1/detokenize":
                    ids = [int(i) for i in payload["ids"]]
                    self._reply(200, {"text": lm.detokenize(ids)})
                elif self.path == "/v1/logits":
                    prefix = [int(i) for i in payload["prefix"]]
                    top_k = int(payload.get("top_k", 50))
                    if top_k < 1:
                        raise ValueError(f"top_k must be >= 1, got {top_k}")
                    step = lm.next_logits(prefix)
                    ranked = sorted(step.logits.items(), key=lambda kv: (-kv[1], kv[0]))
                    tokens = [
                        {"id": tid, "logprob": logprob}
                        for tid, logprob in ranked[:top_k]
                    ]
                    self._reply(200, {
                        "tokens": tokens,
                        "eos_id": lm.eos,
                        "vocab_size": lm.vocab_size,
                    })
                else:
                    self._reply(404, {"error": f"unknown path {self.path!r}"})
            except (KeyError, TypeError, ValueError) as exc:
                self._reply(400, {"error": str(exc)})

    return Handler
