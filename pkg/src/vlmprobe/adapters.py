"""Model backends behind one ask() contract, plus the trial runner.

Three interchangeable backends:

* ``PerfectOracle`` answers from the trial record's ground truth (a side
  channel) - it validates harness plumbing, not perception.
* ``TemplateOcr`` actually reads the stimulus: threshold, connected
  components, line grouping, and minimum-Hamming classification against the
  generation glyph table. Its accuracy genuinely degrades with stimulus
  quality.
* ``HttpChatBackend`` speaks the de-facto chat-completions JSON schema with
  a base64 PNG data URL, with bounded parallelism, token-bucket rate
  limiting, retries with exponential backoff, and an optional JSONL replay
  log of wire traffic.

Backend failures are recorded per trial by the runner and never abort a run.
"""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests

from . import kernels, pngio
from .glyphs import GLYPHS
from .probeforge import TrialRecord

_CANONICAL_CHARS = "0123456789abcdefghij="


class AdapterError(Exception):
    kind = "error"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class Timeout(AdapterError):
    kind = "timeout"


class HttpStatus(AdapterError):
    kind = "http_status"

    def __init__(self, code: int, detail: str):
        super().__init__(detail)
        self.code = code


class MalformedResponse(AdapterError):
    kind = "malformed_response"


class AuthMissing(AdapterError):
    kind = "auth_missing"


@dataclass(frozen=True)
class Reply:
    text: str
    latency_ms: float
    attempt_count: int
    backend_id: str


@dataclass
class ModelEndpointConfig:
    base_url: str
    model_name: str
    auth_token_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    parallelism: int = 1
    temperature: float = 0.0
    max_reply_tokens: int = 32
    rate_limit: float | None = None  # requests per second

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


# ---------------------------------------------------------------------------
# template OCR


def _component_stats(labels: np.ndarray) -> list[tuple[int, int, int, int, np.ndarray]]:
    """(x, y, w, h, mask) per component, in label order."""
    out = []
    n = int(labels.max())
    for lab in range(1, n + 1):
        ys, xs = np.nonzero(labels == lab)
        x0, x1 = int(xs.min()), int(xs.max())
        y0, y1 = int(ys.min()), int(ys.max())
        mask = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=np.uint8)
        mask[ys - y0, xs - x0] = 1
        out.append((x0, y0, x1 - x0 + 1, y1 - y0 + 1, mask))
    return out


def _ranges_overlap(a0: int, a1: int, b0: int, b1: int) -> bool:
    return a0 < b1 and b0 < a1


def _tight(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


_TIGHT_REFS = [(ch, _tight(GLYPHS[ch][0])) for ch in _CANONICAL_CHARS]


def classify_glyph(mask: np.ndarray) -> str:
    """Nearest glyph by Hamming distance at the component's own scale.

    Each reference ink crop is nearest-neighbor scaled to the component
    dims, so a clean render of a glyph matches its own template exactly
    (the renderer applies the identical scaling). Candidates whose natural
    width at the component height is off by more than 1.6x are ruled out
    first (a ring squeezed to a sliver aliases into a solid bar); if that
    rules out everything, all candidates compete. Ties go to the first
    glyph in canonical character order.
    """
    h, w = mask.shape
    gated = []
    for ch, ref in _TIGHT_REFS:
        expected_w = max(1, round(ref.shape[1] * h / ref.shape[0]))
        if w <= 1.6 * expected_w and expected_w <= 1.6 * w:
            gated.append((ch, ref))
    best_char = "?"
    best_dist = 2.0
    for ch, ref in gated or _TIGHT_REFS:
        scaled = kernels.nn_scale_to(ref, h, w)
        dist = float(np.count_nonzero(scaled != mask)) / mask.size
        if w > 2:
            # box-filter degradation can drift interior features by a
            # column; score the best of a 1-column relative shift too
            for a, b in ((scaled[:, 1:], mask[:, :-1]), (scaled[:, :-1], mask[:, 1:])):
                dist = min(dist, float(np.count_nonzero(a != b)) / a.size)
        if dist < best_dist:
            best_dist = dist
            best_char = ch
    return best_char


def template_ocr(img: np.ndarray) -> list[tuple[str | None, str, tuple[int, int, int, int]]]:
    """Read dark text items off a white-background stimulus.

    Pipeline: threshold at 128, 8-connected components, group components into
    lines by vertical overlap, merge x-overlapping components within a line
    (multi-part glyphs like '='), classify each cell against the glyph table,
    split a line into items at gaps wider than the line height, and parse
    leading 'x=' label prefixes. Every cell maps to its lowest-distance
    glyph, recognizable or not.
    """
    binary = img < 128
    labels = kernels.label_components(binary)
    comps = _component_stats(labels)
    if not comps:
        return []
    # group into lines by vertical overlap (transitive closure over y-ranges)
    comps.sort(key=lambda c: (c[1], c[0]))
    lines: list[list[tuple]] = []
    spans: list[list[int]] = []
    for comp in comps:
        y0, y1 = comp[1], comp[1] + comp[3]
        placed = False
        for line, span in zip(lines, spans):
            if _ranges_overlap(y0, y1, span[0], span[1]):
                line.append(comp)
                span[0] = min(span[0], y0)
                span[1] = max(span[1], y1)
                placed = True
                break
        if not placed:
            lines.append([comp])
            spans.append([y0, y1])
    items = []
    for line, span in zip(lines, spans):
        line.sort(key=lambda c: c[0])
        # merge x-overlapping components into glyph cells
        cells: list[list[int]] = []  # [x0, x1, y0, y1, [masks...]]
        for x, y, w, h, mask in line:
            if cells and _ranges_overlap(x, x + w, cells[-1][0], cells[-1][1]):
                cell = cells[-1]
                cell[0] = min(cell[0], x)
                cell[1] = max(cell[1], x + w)
                cell[2] = min(cell[2], y)
                cell[3] = max(cell[3], y + h)
                cell[4].append((x, y, w, h, mask))
            else:
                cells.append([x, x + w, y, y + h, [(x, y, w, h, mask)]])
        line_h = span[1] - span[0]
        # split cells into items at wide gaps
        groups: list[list] = [[cells[0]]]
        for prev, cell in zip(cells, cells[1:]):
            if cell[0] - prev[1] > line_h:
                groups.append([cell])
            else:
                groups[-1].append(cell)
        for group in groups:
            chars = []
            for x0, x1, y0, y1, parts in group:
                cell_mask = np.zeros((y1 - y0, x1 - x0), dtype=np.uint8)
                for x, y, w, h, mask in parts:
                    cell_mask[y - y0 : y - y0 + h, x - x0 : x - x0 + w] |= mask
                chars.append(classify_glyph(cell_mask))
            text = "".join(chars)
            gx0 = group[0][0]
            gx1 = group[-1][1]
            gy0 = min(c[2] for c in group)
            gy1 = max(c[3] for c in group)
            bbox = (gx0, gy0, gx1 - gx0, gy1 - gy0)
            if len(text) >= 2 and text[0].isalpha() and text[1] == "=":
                items.append((text[0], text[2:], bbox))
            else:
                items.append((None, text, bbox))
    items.sort(key=lambda it: (it[2][1], it[2][0]))
    return items


# ---------------------------------------------------------------------------
# backends


class PerfectOracle:
    """Answers every trial correctly from its record; checks plumbing only."""

    backend_id = "oracle"

    def ask(self, png: bytes, prompt: str, trial: TrialRecord | None = None) -> Reply:
        if trial is None:
            raise AdapterError("oracle backend needs the trial record")
        return Reply(trial.ground_truth, 0.0, 1, self.backend_id)


class TemplateOcr:
    """Reads the stimulus with template matching against the glyph table."""

    backend_id = "template_ocr"

    def ask(self, png: bytes, prompt: str, trial: TrialRecord | None = None) -> Reply:
        t0 = time.perf_counter()
        img = pngio.decode_png(png)
        if img.ndim == 3:
            img = img[:, :, 0]
        items = template_ocr(img)
        if "variable" in prompt:
            text = next((digits for label, digits, _ in items if label == "a"), "")
        else:
            unlabeled = [digits for label, digits, _ in items if label is None]
            text = unlabeled[0] if unlabeled else (items[0][1] if items else "")
        return Reply(text, (time.perf_counter() - t0) * 1000.0, 1, self.backend_id)


class TokenBucket:
    """Global requests-per-second limiter (thread-safe, blocking acquire)."""

    def __init__(self, rate: float, capacity: float | None = None):
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            time.sleep(wait)


class HttpChatBackend:
    """Wire client for vision chat-completions endpoints.

    Retries timeouts, connection errors, 429 and 5xx with exponential backoff
    plus deterministic per-trial jitter; malformed response bodies and other
    4xx are terminal for that trial. At most `parallelism` requests are in
    flight at once.
    """

    def __init__(self, config: ModelEndpointConfig, replay_path=None):
        self.config = config
        self.backend_id = f"http:{config.model_name}"
        self._sem = threading.Semaphore(config.parallelism)
        self._bucket = TokenBucket(config.rate_limit) if config.rate_limit else None
        self._session = requests.Session()
        self._replay_lock = threading.Lock()
        self._replay_fh = open(replay_path, "a", encoding="utf-8") if replay_path else None

    def close(self):
        if self._replay_fh:
            self._replay_fh.close()
            self._replay_fh = None

    def _record(self, entry: dict) -> None:
        if self._replay_fh is None:
            return
        with self._replay_lock:
            self._replay_fh.write(json.dumps(entry, sort_keys=True) + "\n")
            self._replay_fh.flush()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token_env:
            token = os.environ.get(self.config.auth_token_env)
            if not token:
                raise AuthMissing(f"environment variable {self.config.auth_token_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, png: bytes, prompt: str) -> dict:
        data_url = "data:image/png;base64," + base64.b64encode(png).decode("ascii")
        return {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_reply_tokens,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {"type": "image_url", "image_url": {"url": data_url}},
                    ],
                }
            ],
        }

    def ask(self, png: bytes, prompt: str, trial: TrialRecord | None = None) -> Reply:
        if not prompt:
            raise AdapterError("prompt must be non-empty")
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        payload = self._payload(png, prompt)
        headers = self._headers()
        trial_id = trial.trial_id if trial else ""
        jitter = random.Random(trial_id or None)
        t0 = time.perf_counter()
        last_err: AdapterError | None = None
        for attempt in range(1, self.config.max_retries + 2):
            if attempt > 1:
                backoff = 0.5 * 2 ** (attempt - 2)
                time.sleep(backoff * (1.0 + 0.25 * jitter.random()))
            try:
                with self._sem:
                    if self._bucket:
                        self._bucket.acquire()
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout
                    )
            except (requests.Timeout, requests.ConnectionError) as e:
                last_err = Timeout(str(e))
                self._record({"trial_id": trial_id, "attempt": attempt, "error": str(e)})
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_err = HttpStatus(resp.status_code, resp.text[:500])
                self._record(
                    {"trial_id": trial_id, "attempt": attempt, "status": resp.status_code}
                )
                continue
            if resp.status_code != 200:
                raise HttpStatus(resp.status_code, resp.text[:500])
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                if not isinstance(text, str):
                    raise TypeError("content is not a string")
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise MalformedResponse(f"bad response body: {e}")
            self._record(
                {
                    "trial_id": trial_id,
                    "attempt": attempt,
                    "status": 200,
                    "prompt": prompt,
                    "reply": text,
                }
            )
            return Reply(text, (time.perf_counter() - t0) * 1000.0, attempt, self.backend_id)
        assert last_err is not None
        raise last_err


# ---------------------------------------------------------------------------
# runner


def run_trials(
    records: list[TrialRecord],
    image_root: str,
    backend,
    out_path: str,
    parallelism: int = 1,
    resume: bool = False,
) -> tuple[int, int]:
    """Ask the backend about every trial; append JSONL rows as they finish.

    Returns (answered, errored). With resume=True, trial ids already present
    in the output file are skipped, so parallel partial runs merge safely.
    """
    done: set[str] = set()
    if resume and os.path.exists(out_path):
        with open(out_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    done.add(json.loads(line)["trial_id"])
    todo = [r for r in records if r.trial_id not in done]
    lock = threading.Lock()
    counts = [0, 0]
    fh = open(out_path, "a" if resume else "w", encoding="utf-8")

    def work(rec: TrialRecord) -> None:
        row: dict = {"trial_id": rec.trial_id, "backend_id": getattr(backend, "backend_id", "?")}
        try:
            with open(os.path.join(image_root, rec.image_ref), "rb") as img_fh:
                png = img_fh.read()
            reply = backend.ask(png, rec.prompt, trial=rec)
            row.update(
                reply=reply.text,
                latency_ms=round(reply.latency_ms, 3),
                attempts=reply.attempt_count,
                error=None,
            )
            ok = True
        except AdapterError as e:
            row.update(reply=None, error={"kind": e.kind, "detail": e.detail})
            ok = False
        except OSError as e:
            row.update(reply=None, error={"kind": "io", "detail": str(e)})
            ok = False
        with lock:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            fh.flush()
            counts[0 if ok else 1] += 1

    try:
        if parallelism <= 1:
            for rec in todo:
                work(rec)
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                list(pool.map(work, todo))
    finally:
        fh.close()
    return counts[0], counts[1]


def read_results(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def replay_to_results(replay_path: str, backend_id: str = "replay") -> list[dict]:
    """Reconstruct result rows from an HTTP replay log (status-200 entries)."""
    rows = []
    with open(replay_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            if entry.get("status") == 200 and "reply" in entry:
                rows.append(
                    {
                        "trial_id": entry["trial_id"],
                        "backend_id": backend_id,
                        "reply": entry["reply"],
                        "error": None,
                    }
                )
    return rows
