"""LLM judging of input/output consistency, plus the offline mock judge.

One deterministic prompt asks the model whether the candidate output exactly
matches what the program prints on the given input; the reply is reduced to a
verdict by scanning for standalone yes/no tokens (last occurrence wins, since
models often restate the question before answering). Responses are cached on
disk, keyed by SHA-256 over (model_id, triple hash, prompt template version),
so reruns replay records byte-identically and never touch the network.
"""
from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .corpus import Triple
from .util import canonical_json, read_jsonl, sha256_text, write_text_atomic

VERDICT_MATCH = "match"
VERDICT_NO_MATCH = "no_match"
VERDICT_INVALID = "invalid"

SYSTEM_INSTRUCTION = (
    "You are given a program, an input, and a candidate output. "
    "Decide whether running the program on the input produces exactly the candidate output."
)

USER_TEMPLATE = (
    "Program:\n```\n{code}\n```\n\n"
    "Input:\n```\n{input}\n```\n\n"
    "Candidate output:\n```\n{output}\n```\n\n"
    'Does the candidate output exactly match the program\'s output on this input? '
    'Answer with exactly "yes" or "no".'
)

PROMPT_VERSION = sha256_text(SYSTEM_INSTRUCTION + "\x00" + USER_TEMPLATE)[:12]

_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class JudgmentRecord:
    triple_id: str
    model_id: str
    verdict: str
    raw_response: str
    success: int
    latency: float
    prompt_version: str
    label: int  # ground truth consistency bit, kept so records are self-contained

    def to_dict(self) -> dict:
        return {
            "triple_id": self.triple_id,
            "model_id": self.model_id,
            "verdict": self.verdict,
            "raw_response": self.raw_response,
            "success": self.success,
            "latency": self.latency,
            "prompt_version": self.prompt_version,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "JudgmentRecord":
        return cls(
            triple_id=obj["triple_id"],
            model_id=obj["model_id"],
            verdict=obj["verdict"],
            raw_response=obj["raw_response"],
            success=int(obj["success"]),
            latency=float(obj["latency"]),
            prompt_version=obj["prompt_version"],
            label=int(obj["label"]),
        )


@dataclass(frozen=True)
class AggregateMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    invalid_count: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n": self.n,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "invalid_count": self.invalid_count,
        }


def render_prompt(triple: Triple) -> tuple[str, str]:
    """(system, user) message pair; deterministic in the triple alone."""
    user = USER_TEMPLATE.format(code=triple.program.source, input=triple.input, output=triple.output)
    return SYSTEM_INSTRUCTION, user


def parse_judgment(response: str) -> str:
    """Reduce free text to a verdict; the last standalone yes/no wins."""
    matches = _YES_NO.findall(response)
    if not matches:
        return VERDICT_INVALID
    return VERDICT_MATCH if matches[-1].lower() == "yes" else VERDICT_NO_MATCH


def verdict_bit(verdict: str) -> int | None:
    if verdict == VERDICT_MATCH:
        return 1
    if verdict == VERDICT_NO_MATCH:
        return 0
    return None


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def compute_metrics(pairs: list[tuple[int, int | None]]) -> AggregateMetrics:
    """Confusion-matrix metrics over (label, predicted-bit-or-None) pairs.

    None (an invalid verdict) counts as a wrong prediction of the non-true
    class: a false negative when t=1, a false positive when t=0.
    """
    tp = fp = tn = fn = invalid = 0
    for label, pred in pairs:
        if pred is None:
            invalid += 1
            pred = 1 - label
        if label == 1 and pred == 1:
            tp += 1
        elif label == 1 and pred == 0:
            fn += 1
        elif label == 0 and pred == 1:
            fp += 1
        else:
            tn += 1
    n = len(pairs)
    accuracy = (tp + tn) / n if n else 0.0
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = f1_score(precision, recall)
    return AggregateMetrics(accuracy, precision, recall, f1, n, tp, fp, tn, fn, invalid)


def aggregate(records: list[JudgmentRecord]) -> AggregateMetrics:
    return compute_metrics([(r.label, verdict_bit(r.verdict)) for r in records])


# --- response cache -----------------------------------------------------------


class JudgmentCache:
    """Disk cache of judgment records, one JSON file per key."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(model_id: str, triple_id: str, prompt_version: str) -> str:
        return sha256_text(canonical_json([model_id, triple_id, prompt_version]))

    def get(self, key: str) -> JudgmentRecord | None:
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        import json

        return JudgmentRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, key: str, record: JudgmentRecord) -> None:
        with self._lock:
            write_text_atomic(self.directory / f"{key}.json", canonical_json(record.to_dict()))


# --- transports ---------------------------------------------------------------


class TransportError(RuntimeError):
    """A retryable transport problem (connection, timeout, 429/5xx)."""


class ChatClient:
    """Minimal OpenAI-compatible chat-completions client.

    The API key is read from an environment variable, never from config
    files. ``transport`` can be swapped for a callable in tests; the default
    posts with `requests` and retries transient failures with exponential
    backoff.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str = "IOJUDGE_API_KEY",
        request_timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        transport=None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env
        self.request_timeout = request_timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._transport = transport or self._http_transport

    def _http_transport(self, payload: dict) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = requests.post(
                f"{self.endpoint}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.request_timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"HTTP {response.status_code}")
        if response.status_code != 200:
            raise RuntimeError(f"judge endpoint returned HTTP {response.status_code}: {response.text[:500]}")
        body = response.json()
        return body["choices"][0]["message"]["content"]

    def complete(self, model_id: str, system: str, user: str) -> tuple[str, float]:
        payload = {
            "model": model_id,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": 0,
        }
        started = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                text = self._transport(payload)
                return text, time.monotonic() - started
            except TransportError as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2**attempt))
        raise TransportError(f"transport failed after {self.max_retries + 1} attempts: {last_error}")


def judge_triple(
    client: ChatClient,
    model_id: str,
    triple: Triple,
    cache: JudgmentCache | None = None,
) -> JudgmentRecord:
    """One cached, retried judgment of one triple.

    An invalid verdict is retried once before being recorded; exhausted
    transports yield an invalid record whose raw_response carries the error
    note rather than raising into the caller.
    """
    key = JudgmentCache.key(model_id, triple.triple_id, PROMPT_VERSION)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit

    system, user = render_prompt(triple)
    verdict = VERDICT_INVALID
    raw = ""
    latency = 0.0
    for _ in range(2):  # one retry for invalid replies
        try:
            raw, latency = client.complete(model_id, system, user)
        except TransportError as exc:
            raw = f"[transport error] {exc}"
            verdict = VERDICT_INVALID
            break
        verdict = parse_judgment(raw)
        if verdict != VERDICT_INVALID:
            break

    bit = verdict_bit(verdict)
    success = int(bit == triple.label) if bit is not None else 0
    record = JudgmentRecord(
        triple_id=triple.triple_id,
        model_id=model_id,
        verdict=verdict,
        raw_response=raw,
        success=success,
        latency=latency,
        prompt_version=PROMPT_VERSION,
        label=triple.label,
    )
    if cache is not None:
        cache.put(key, record)
    return record


# --- mock judge ---------------------------------------------------------------

MOCK_PREFIX = "mock:"


def mock_judge(triple: Triple, rule_spec: str) -> JudgmentRecord:
    """Deterministic offline judge driven by a tiny rule language.

    Rules:
      always:yes | always:no        fixed verdict
      output_len_even               yes iff len(output) is even
      code_len_lt:<N>               yes iff len(code) < N
      input_len_lt:<N>              yes iff len(input) < N
      correct_unless_code_over:<N>  answers correctly iff len(code) <= N,
                                    simulating a judge that fails on long code

    Verdicts (hence labels) are reconstructible by re-applying the rule.
    """
    code = triple.program.source
    if rule_spec == "always:yes":
        answer = True
    elif rule_spec == "always:no":
        answer = False
    elif rule_spec == "output_len_even":
        answer = len(triple.output) % 2 == 0
    elif rule_spec.startswith("code_len_lt:"):
        answer = len(code) < int(rule_spec.split(":", 1)[1])
    elif rule_spec.startswith("input_len_lt:"):
        answer = len(triple.input) < int(rule_spec.split(":", 1)[1])
    elif rule_spec.startswith("correct_unless_code_over:"):
        limit = int(rule_spec.split(":", 1)[1])
        truthful = len(code) <= limit
        answer = bool(triple.label) if truthful else not triple.label
    else:
        raise ValueError(f"unknown mock rule: {rule_spec!r}")

    verdict = VERDICT_MATCH if answer else VERDICT_NO_MATCH
    return JudgmentRecord(
        triple_id=triple.triple_id,
        model_id=MOCK_PREFIX + rule_spec,
        verdict=verdict,
        raw_response="yes" if answer else "no",
        success=int(verdict_bit(verdict) == triple.label),
        latency=0.0,
        prompt_version=PROMPT_VERSION,
        label=triple.label,
    )


# --- batch runs ---------------------------------------------------------------


def run_judgments(
    triples: list[Triple],
    model_id: str,
    client: ChatClient | None = None,
    cache: JudgmentCache | None = None,
    concurrency: int = 8,
) -> list[JudgmentRecord]:
    """Judge a list of triples; mock models run serially, real ones pooled.

    Records come back sorted by triple_id regardless of completion order.
    """
    if model_id.startswith(MOCK_PREFIX):
        rule = model_id[len(MOCK_PREFIX):]
        records = [mock_judge(t, rule) for t in triples]
    else:
        if client is None:
            raise ValueError("a ChatClient is required for non-mock models")
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
            records = list(pool.map(lambda t: judge_triple(client, model_id, t, cache), triples))
    return sorted(records, key=lambda r: r.triple_id)


def write_records(path: str | Path, records: list[JudgmentRecord]) -> None:
    ordered = sorted(records, key=lambda r: r.triple_id)
    text = "".join(canonical_json(r.to_dict()) + "\n" for r in ordered)
    write_text_atomic(path, text)


def read_records(path: str | Path) -> list[JudgmentRecord]:
    return [JudgmentRecord.from_dict(obj) for obj in read_jsonl(path)]


def sanitize_model_id(model_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", model_id)
