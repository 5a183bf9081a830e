"""Chat-completion gateway with live, record/replay, and oracle backends.

Every backend implements `complete(ChatRequest) -> ChatResponse`. Requests
are content-addressed by a SHA-256 digest over the model settings and every
part's bytes, which drives the record/replay cache. The oracle backend
synthesizes schema-conformant responses from ground-truth labels so the
whole pipeline runs offline and deterministically.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from .core import AnomalyInterval, AnomalyType, LabelSeries, labels_to_intervals

DEFAULT_MODEL = "gpt-4o-2024-05-13"
DEFAULT_API_KEY_ENV = "TAMA_API_KEY"

# Canonical type -> prompt vocabulary used when the oracle writes responses.
_PROMPT_LABEL = {
    AnomalyType.POINT: "global",
    AnomalyType.SEASONAL: "frequency",
    AnomalyType.TREND: "trend",
    AnomalyType.SHAPELET: "shapelet",
}

WINDOW_METADATA_TEMPLATE = (
    "Window placement: series={name} start={start} width={width} length={length}"
)
_METADATA_RE = re.compile(
    r"Window placement: series=(\S+) start=(\d+) width=(\d+) length=(\d+)"
)


class GatewayError(Exception):
    pass


class ConfigurationError(GatewayError):
    """Missing credentials or otherwise unusable backend configuration."""


class ReplayMissError(GatewayError):
    """Strict replay was asked for a request that was never recorded."""


class TransportExhaustedError(GatewayError):
    """All retry attempts against the live endpoint failed."""


class OracleMetadataError(GatewayError):
    """The oracle could not locate window placement metadata in the request."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    png: bytes


@dataclass(frozen=True)
class ChatRequest:
    parts: tuple
    temperature: float = 0.1
    top_p: float = 0.3
    force_structured_output: bool = True
    model_name: str = DEFAULT_MODEL

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        if not any(isinstance(p, TextPart) for p in self.parts):
            raise ValueError("a chat request needs at least one text part")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be in [0, 1]")
        if not 0.0 <= self.top_p <= 1.0:
            raise ValueError("top_p must be in [0, 1]")

    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    usage: dict | None = None


def cache_key(req: ChatRequest) -> str:
    """Collision-resistant digest of every request field, byte for byte."""
    h = hashlib.sha256()
    for item in (
        req.model_name,
        repr(req.temperature),
        repr(req.top_p),
        repr(req.force_structured_output),
    ):
        h.update(item.encode("utf-8"))
        h.update(b"\x00")
    for part in req.parts:
        if isinstance(part, TextPart):
            h.update(b"text\x00")
            h.update(part.text.encode("utf-8"))
        else:
            h.update(b"image\x00")
            h.update(part.png)
        h.update(b"\x00")
    return h.hexdigest()


class CacheStore:
    """Directory of content-addressed responses plus a request-summary index."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _entry_path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    @property
    def index_path(self) -> Path:
        return self.directory / "index.json"

    def get(self, key: str) -> str | None:
        path = self._entry_path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["text"]

    def put(self, key: str, text: str, summary: str) -> None:
        with self._lock:
            self._entry_path(key).write_text(
                json.dumps({"text": text}, sort_keys=True), encoding="utf-8"
            )
            index = {}
            if self.index_path.exists():
                index = json.loads(self.index_path.read_text(encoding="utf-8"))
            index[key] = summary
            self.index_path.write_text(
                json.dumps(index, sort_keys=True, indent=2), encoding="utf-8"
            )

    def keys(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json") if p.name != "index.json")

    def purge(self) -> int:
        n = 0
        for path in self.directory.glob("*.json"):
            path.unlink()
            n += 1
        return n


def _request_summary(req: ChatRequest) -> str:
    first = req.text().strip().splitlines()
    head = first[0][:100] if first else ""
    n_images = sum(1 for p in req.parts if isinstance(p, ImagePart))
    return f"{req.model_name} | {n_images} image(s) | {head}"


class HttpGateway:
    """OpenAI-compatible chat-completions client with retry and backoff."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        max_attempts: int = 3,
        timeout: float = 120.0,
        max_in_flight: int = 4,
        backoff_base: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise ConfigurationError(
                f"credential environment variable {api_key_env} is not set"
            )
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.max_attempts = max_attempts
        self.timeout = timeout
        self.backoff_base = backoff_base
        self._semaphore = threading.Semaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _payload(self, req: ChatRequest) -> dict:
        content = []
        for part in req.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                b64 = base64.b64encode(part.png).decode("ascii")
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{b64}"},
                    }
                )
        payload = {
            "model": req.model_name,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "messages": [{"role": "user", "content": content}],
        }
        if req.force_structured_output:
            payload["response_format"] = {"type": "json_object"}
        return payload

    def complete(self, req: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}"}
        payload = self._payload(req)
        last_error: Exception | None = None
        with self._semaphore:
            for attempt in range(self.max_attempts):
                if attempt > 0:
                    time.sleep(self.backoff_base * 2 ** (attempt - 1))
                try:
                    resp = self._client.post(url, json=payload, headers=headers)
                except httpx.TransportError as exc:
                    last_error = exc
                    continue
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = GatewayError(f"HTTP {resp.status_code}: {resp.text}")
                    continue
                if resp.status_code >= 400:
                    raise GatewayError(f"HTTP {resp.status_code}: {resp.text}")
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                if not text:
                    raise GatewayError("empty completion text")
                return ChatResponse(
                    text=text, backend_id="http", usage=body.get("usage")
                )
        raise TransportExhaustedError(
            f"gave up after {self.max_attempts} attempt(s): {last_error}"
        )


class RecordingGateway:
    """Wraps a live backend and persists every response in a cache."""

    def __init__(self, inner, cache: CacheStore):
        self.inner = inner
        self.cache = cache

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        cached = self.cache.get(key)
        if cached is not None:
            return ChatResponse(text=cached, backend_id="replay")
        response = self.inner.complete(req)
        self.cache.put(key, response.text, _request_summary(req))
        return response


class ReplayGateway:
    """Serves recorded responses; in strict mode a miss is an error."""

    def __init__(self, cache: CacheStore, strict: bool = True, fallback=None):
        self.cache = cache
        self.strict = strict
        self.fallback = fallback

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        cached = self.cache.get(key)
        if cached is not None:
            return ChatResponse(text=cached, backend_id="replay")
        if self.strict or self.fallback is None:
            raise ReplayMissError(f"no recorded response for request {key}")
        response = self.fallback.complete(req)
        self.cache.put(key, response.text, _request_summary(req))
        return response


@dataclass(frozen=True)
class OracleFidelity:
    """Perfect echoes ground truth; noisy jitters it deterministically."""

    kind: str = "perfect"  # "perfect" | "noisy"
    seed: int = 0
    jitter: int = 0
    fp_rate: float = 0.0

    @classmethod
    def perfect(cls) -> "OracleFidelity":
        return cls(kind="perfect")

    @classmethod
    def noisy(cls, seed: int, jitter: int, fp_rate: float) -> "OracleFidelity":
        return cls(kind="noisy", seed=seed, jitter=jitter, fp_rate=fp_rate)


@dataclass(frozen=True)
class OracleTruth:
    labels: LabelSeries
    type_map: dict[int, AnomalyType] = field(default_factory=dict)


_REFERENCE_TEXT = (
    "The normal segments follow a smooth periodic pattern with evenly spaced "
    "peaks and troughs of consistent amplitude. The oscillation repeats at a "
    "stable period across all reference slices, with no level shifts, no "
    "isolated spikes, and no changes in the spacing of the cycles. Minor "
    "high-frequency noise rides on the waveform but never disturbs the "
    "overall shape. Slices may begin and end at different phases of the "
    "cycle, so truncated peaks at the edges are expected and not anomalous."
)


class OracleGateway:
    """Deterministic offline stand-in for the multimodal model.

    Configured with per-series ground truth; reads window placement from the
    metadata line the pipeline interpolates into every analysis prompt.
    """

    def __init__(self, truths: dict[str, OracleTruth], fidelity: OracleFidelity | None = None):
        self.truths = truths
        self.fidelity = fidelity or OracleFidelity.perfect()

    @classmethod
    def for_series(
        cls,
        name: str,
        labels: LabelSeries,
        type_map: dict[int, AnomalyType] | None = None,
        fidelity: OracleFidelity | None = None,
    ) -> "OracleGateway":
        return cls({name: OracleTruth(labels, type_map or {})}, fidelity)

    def _rng(self, series: str, window_start: int, stage: str) -> np.random.Generator:
        material = f"{self.fidelity.seed}|{series}|{window_start}|{stage}"
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "big"))

    def _truth_detections(
        self, truth: OracleTruth, start: int, width: int
    ) -> list[tuple[int, int, int, AnomalyType]]:
        """Ground-truth intervals intersected with the window, in local indices."""
        out = []
        window = AnomalyInterval(start, start + width - 1)
        for iv in labels_to_intervals(truth.labels):
            lo = max(iv.start, window.start)
            hi = min(iv.end, window.end)
            if lo > hi:
                continue
            kind = truth.type_map.get(iv.start, AnomalyType.SHAPELET)
            out.append((lo - start, hi - start, 4, kind))
        return out

    def _apply_noise(
        self,
        entries: list[tuple[int, int, int, AnomalyType]],
        width: int,
        rng: np.random.Generator,
        inject_fp: bool,
    ) -> list[tuple[int, int, int, AnomalyType]]:
        jitter = self.fidelity.jitter
        noisy = []
        for s, e, conf, kind in entries:
            s = s + int(rng.integers(-jitter, jitter + 1))
            e = e + int(rng.integers(-jitter, jitter + 1))
            if s > e:
                s, e = e, s
            s = min(max(s, 0), width - 1)
            e = min(max(e, 0), width - 1)
            noisy.append((s, e, conf, kind))
        if inject_fp and rng.random() < self.fidelity.fp_rate:
            s = int(rng.integers(0, width))
            e = min(s + int(rng.integers(1, 9)), width - 1)
            conf = int(rng.integers(1, 3))
            kind = list(AnomalyType)[int(rng.integers(0, 4))]
            noisy.append((s, e, conf, kind))
        return noisy

    @staticmethod
    def _format_entries(entries: list[tuple[int, int, int, AnomalyType]]) -> str:
        parts = []
        for s, e, conf, kind in entries:
            span = f"({s})" if s == e else f"({s}, {e})"
            parts.append(f"{span}/{conf}/{_PROMPT_LABEL[kind]}")
        return "[" + ", ".join(parts) + "]"

    def complete(self, req: ChatRequest) -> ChatResponse:
        text = req.text()
        if "normal_pattern" in text and "abnormal_index" not in text:
            doc = {"normal_pattern": _REFERENCE_TEXT}
            return ChatResponse(
                text=json.dumps(doc, sort_keys=True), backend_id="oracle"
            )
        m = _METADATA_RE.search(text)
        if m is None:
            raise OracleMetadataError("request carries no window placement metadata")
        name, start, width = m.group(1), int(m.group(2)), int(m.group(3))
        truth = self.truths.get(name)
        if truth is None:
            raise OracleMetadataError(f"oracle has no ground truth for series {name!r}")

        reflecting = "corrected_abnormal_index" in text
        entries = self._truth_detections(truth, start, width)
        if self.fidelity.kind == "noisy":
            stage = "reflect" if reflecting else "analyze"
            rng = self._rng(name, start, stage)
            entries = self._apply_noise(entries, width, rng, inject_fp=not reflecting)

        index_key = "corrected_abnormal_index" if reflecting else "abnormal_index"
        doc = {
            index_key: self._format_entries(entries),
            "abnormal_description": (
                "Deviations from the reference pattern were located by comparing "
                "the plotted values against the learned normal cycle."
                if entries
                else "No deviation from the reference pattern is visible."
            ),
            "abnormal_type_description": (
                "Each interval was typed by its dominant visual signature."
                if entries
                else ""
            ),
        }
        return ChatResponse(text=json.dumps(doc, sort_keys=True), backend_id="oracle")
