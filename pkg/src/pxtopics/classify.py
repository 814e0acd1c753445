"""Prompt construction, backend dispatch, and response parsing.

Two backends share one interface: a remote chat-completion endpoint and a
deterministic keyword-table backend that keeps the rest of the pipeline
testable offline. Comment text must already be redacted; the remote path
re-checks this and refuses to transmit anything a PHI rule still matches.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import requests

from pxtopics import phi
from pxtopics.corpus import Comment, LabelVector, Topic, canonical_topics
from pxtopics.errors import (
    BackendUnavailable,
    EmptyResponse,
    ParseFailed,
    TemplatePlaceholderMissing,
    UnknownLabel,
    UnredactedText,
)

STYLES = ("plain", "chain_of_thought")

DEFAULT_PREAMBLE = (
    "You are reviewing feedback comments written by patients after a hospital stay.\n"
    "Assign every applicable topic from the list below to the comment. A comment may\n"
    "match several topics, exactly one, or none at all. Judge only what the comment\n"
    "actually says.\n\nTopics:"
)

DEFAULT_ANSWER_INSTRUCTION = (
    "Respond with a JSON list holding the exact name of every applicable topic, for\n"
    'example ["Topic Name A", "Topic Name B"]. Respond with [] if no topic applies.\n'
    "Output only the list."
)

COT_DIRECTIVE = (
    "Before answering, reason step by step about which topics apply and why. "
    "Then put the final answer, as the JSON list alone, on the last line."
)


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str = DEFAULT_PREAMBLE
    topic_block_format: str = "- {name}: {definition}"
    example_block_format: str = 'Comment: "{text}"\nTopics: {labels}'
    answer_format_instruction: str = DEFAULT_ANSWER_INSTRUCTION
    style: str = "plain"
    examples_intro: str = "Here are labeled examples:"
    comment_intro: str = ""

    def __post_init__(self):
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}, got {self.style!r}")


TEMPLATE_PLACEHOLDERS = ("{{TOPICS}}", "{{EXAMPLES}}", "{{COMMENT}}")


def load_template(path: str | Path | None = None, style: str = "plain") -> PromptTemplate:
    """Load a prompt template file with {{TOPICS}}, {{EXAMPLES}}, {{COMMENT}} markers.

    With no path the bundled default template is used.
    """
    if path is None:
        text = resources.files("pxtopics.data").joinpath("prompt_default.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    missing = [p for p in TEMPLATE_PLACEHOLDERS if p not in text]
    if missing:
        raise TemplatePlaceholderMissing(f"template lacks placeholders: {missing}")
    before_topics, rest = text.split("{{TOPICS}}", 1)
    between, rest = rest.split("{{EXAMPLES}}", 1)
    comment_intro, after = rest.split("{{COMMENT}}", 1)
    return PromptTemplate(
        preamble=before_topics.strip(),
        answer_format_instruction=after.strip(),
        style=style,
        examples_intro=between.strip(),
        comment_intro=comment_intro.strip(),
    )


@dataclass(frozen=True)
class ShotExample:
    text: str
    labels: LabelVector


def load_shot_pool(path: str | Path, phi_config: phi.PhiConfig | None = None) -> tuple[ShotExample, ...]:
    """Load the curated shot pool (JSONL: text + topic-name list), in file order.

    Every example must be PHI-clean since it gets embedded into outgoing prompts.
    """
    shots = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        text = obj["text"]
        spans = phi.detect_all(text, phi_config)
        if spans:
            raise UnredactedText(f"shot example matches PHI rules: {text!r}")
        shots.append(ShotExample(text=text, labels=LabelVector.from_names(obj["labels"])))
    return tuple(shots)


def render_labels(labels: LabelVector) -> str:
    """Canonical answer rendering: a JSON list of exact topic names."""
    return json.dumps(labels.to_names())


def build_prompt(
    template: PromptTemplate,
    topics: Sequence[Topic],
    shots: Sequence[ShotExample],
    comment_text: str,
) -> str:
    """Deterministic prompt assembly: preamble, topic blocks, shot blocks,
    target comment, answer-format instruction."""
    if "{name}" not in template.topic_block_format:
        raise TemplatePlaceholderMissing("topic_block_format lacks {name}")
    if shots and not all(p in template.example_block_format for p in ("{text}", "{labels}")):
        raise TemplatePlaceholderMissing("example_block_format lacks {text} or {labels}")

    parts: list[str] = [template.preamble, ""]
    for topic in topics:
        parts.append(
            template.topic_block_format.format(name=topic.name, definition=topic.definition)
        )
    if shots:
        parts.append("")
        if template.examples_intro:
            parts.append(template.examples_intro)
        for shot in shots:
            parts.append("")
            parts.append(
                template.example_block_format.format(
                    text=shot.text, labels=render_labels(shot.labels)
                )
            )
    parts.append("")
    if template.comment_intro:
        parts.append(template.comment_intro)
    parts.append(f'Comment: "{comment_text}"')
    parts.append("")
    parts.append(template.answer_format_instruction)
    if template.style == "chain_of_thought":
        parts.append("")
        parts.append(COT_DIRECTIVE)
    return "\n".join(parts)


_BRACKETED = re.compile(r"\[[^\[\]]*\]")
_TOKEN_TRIM = " \t\r\n\"'`.;:!?"


def parse_response(raw: str, topics: Sequence[Topic] | None = None) -> LabelVector:
    """Parse a backend response into a label vector.

    Strict path: the final bracketed list, JSON-parsed, with exact canonical
    names. Repair path: split on commas/newlines, trim quoting and stray
    punctuation, match names case-insensitively. Duplicates collapse and an
    empty list is a legal all-zero prediction.
    """
    topics = list(topics) if topics is not None else canonical_topics()
    if not raw or not raw.strip():
        raise EmptyResponse("backend returned an empty response")
    by_exact = {t.name: t.index for t in topics}
    by_folded = {t.name.lower(): t.index for t in topics}

    candidates = _BRACKETED.findall(raw)
    payload = candidates[-1] if candidates else raw

    try:
        parsed = json.loads(payload)
    except json.JSONDecodeError:
        parsed = None
    if isinstance(parsed, list) and all(isinstance(item, str) for item in parsed):
        indices = []
        for item in parsed:
            if item not in by_exact:
                raise UnknownLabel(f"label {item!r} matches no canonical topic name")
            indices.append(by_exact[item])
        return LabelVector.from_indices(indices)

    # repair path
    inner = payload.strip()
    if inner.startswith("[") and inner.endswith("]"):
        inner = inner[1:-1]
    tokens = [t.strip(_TOKEN_TRIM) for t in re.split(r"[,\n;]", inner)]
    indices = []
    for token in tokens:
        if not token:
            continue
        folded = token.lower()
        if folded not in by_folded:
            raise UnknownLabel(f"label {token!r} matches no canonical topic name")
        indices.append(by_folded[folded])
    return LabelVector.from_indices(indices)


def load_keyword_table(path: str | Path | None = None) -> dict[str, int]:
    """Keyword table for the offline backend: lowercase substring -> topic index."""
    if path is None:
        text = resources.files("pxtopics.data").joinpath("keywords.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    table = {str(k).lower(): int(v) for k, v in json.loads(text).items()}
    bad = {k: v for k, v in table.items() if not 0 <= v < 10}
    if bad:
        raise ValueError(f"keyword table maps to out-of-range topic indices: {bad}")
    return table


def rule_backend_classify(comment_text: str, keyword_table: Mapping[str, int]) -> LabelVector:
    """Set bit i iff any mapped substring for topic i occurs in the lowercased text."""
    lowered = comment_text.lower()
    return LabelVector.from_indices(
        index for substring, index in keyword_table.items() if substring in lowered
    )


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "rule_based"  # "rule_based" | "remote_llm"
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 3
    min_request_interval_ms: int = 0
    k_shots: int = 0
    shot_pool: tuple[ShotExample, ...] = ()
    api_key_env: str = "PXTOPICS_API_KEY"
    max_in_flight: int = 1
    keyword_table: Mapping[str, int] | None = None
    backoff_base_s: float = 0.5

    def __post_init__(self):
        if self.kind not in ("rule_based", "remote_llm"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.k_shots < 0:
            raise ValueError("k_shots must be >= 0")
        if self.k_shots > len(self.shot_pool):
            raise ValueError(
                f"k_shots={self.k_shots} exceeds shot pool size {len(self.shot_pool)}"
            )
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise ValueError("max_retries must be >= 0 and max_in_flight >= 1")

    def shots(self) -> tuple[ShotExample, ...]:
        return self.shot_pool[: self.k_shots]


@dataclass(frozen=True)
class ClassificationOutput:
    comment_id: str
    labels: LabelVector
    raw_response: str
    run_id: str
    attempts: int


@dataclass(frozen=True)
class ClassificationFailure:
    comment_id: str
    error: str


@dataclass(frozen=True)
class CorpusRunResult:
    outputs: tuple[ClassificationOutput, ...]
    failures: tuple[ClassificationFailure, ...]


Transport = Callable[[str, dict, float, dict], "tuple[int, dict]"]


def http_transport(url: str, payload: dict, timeout_s: float, headers: dict) -> tuple[int, dict]:
    response = requests.post(url, json=payload, timeout=timeout_s, headers=headers)
    try:
        body = response.json()
    except ValueError:
        body = {}
    return response.status_code, body


class _RateLimiter:
    """Serializes request starts so consecutive sends are >= interval apart."""

    def __init__(self, interval_s: float):
        self._interval = interval_s
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self, sleep: Callable[[float], None]) -> None:
        if self._interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self._interval
        if delay > 0:
            sleep(delay)


def _extract_message_text(body: dict) -> str | None:
    try:
        return body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        return None


def _remote_classify(
    config: BackendConfig,
    template: PromptTemplate,
    comment: Comment,
    topics: Sequence[Topic],
    transport: Transport,
    sleep: Callable[[float], None],
    limiter: _RateLimiter | None,
    run_id: str,
    phi_config: phi.PhiConfig | None,
) -> ClassificationOutput:
    spans = phi.detect_all(comment.text, phi_config)
    if spans:
        raise UnredactedText(
            f"comment {comment.id!r} still matches PHI rules "
            f"({', '.join(s.category.value for s in spans)}); refusing to transmit"
        )
    key = os.environ.get(config.api_key_env, "")
    if not key:
        raise BackendUnavailable(f"environment variable {config.api_key_env!r} is not set")
    prompt = build_prompt(template, topics, config.shots(), comment.text)
    payload = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    }
    headers = {"Authorization": f"Bearer {key}"}

    last_error: Exception = BackendUnavailable("no request attempted")
    for attempt in range(1, config.max_retries + 2):
        if attempt > 1:
            sleep(config.backoff_base_s * 2 ** (attempt - 2))
        if limiter is not None:
            limiter.wait(sleep)
        try:
            status, body = transport(config.endpoint, payload, config.timeout_s, headers)
        except Exception as exc:
            last_error = BackendUnavailable(f"transport error: {exc}")
            continue
        if status >= 500:
            last_error = BackendUnavailable(f"server error {status}")
            continue
        if status != 200:
            raise BackendUnavailable(f"request rejected with status {status}")
        raw = _extract_message_text(body)
        if raw is None:
            last_error = BackendUnavailable("response body lacks a message text")
            continue
        try:
            labels = parse_response(raw, topics)
        except (UnknownLabel, EmptyResponse) as exc:
            last_error = ParseFailed(str(exc))
            continue
        return ClassificationOutput(
            comment_id=comment.id, labels=labels, raw_response=raw, run_id=run_id, attempts=attempt
        )
    raise last_error


def classify_comment(
    config: BackendConfig,
    template: PromptTemplate,
    comment: Comment,
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    run_id: str = "adhoc",
    phi_config: phi.PhiConfig | None = None,
    _limiter: _RateLimiter | None = None,
) -> ClassificationOutput:
    """Classify one (already redacted) comment through the configured backend."""
    topics = canonical_topics()
    if config.kind == "rule_based":
        table = config.keyword_table if config.keyword_table is not None else load_keyword_table()
        labels = rule_backend_classify(comment.text, table)
        return ClassificationOutput(
            comment_id=comment.id,
            labels=labels,
            raw_response=render_labels(labels),
            run_id=run_id,
            attempts=1,
        )
    return _remote_classify(
        config,
        template,
        comment,
        topics,
        transport or http_transport,
        sleep,
        _limiter,
        run_id,
        phi_config,
    )


def classify_corpus(
    config: BackendConfig,
    template: PromptTemplate,
    comments: Sequence[Comment],
    *,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
    run_id: str = "adhoc",
    phi_config: phi.PhiConfig | None = None,
) -> CorpusRunResult:
    """Classify a corpus; output order matches input order, failures are collected.

    Requests are rate limited by ``min_request_interval_ms`` and bounded by
    ``max_in_flight`` concurrent sends; per-comment errors never abort the run.
    """
    limiter = _RateLimiter(config.min_request_interval_ms / 1000.0)
    slots: list[ClassificationOutput | ClassificationFailure | None] = [None] * len(comments)

    def work(index: int, comment: Comment) -> None:
        try:
            slots[index] = classify_comment(
                config,
                template,
                comment,
                transport=transport,
                sleep=sleep,
                run_id=run_id,
                phi_config=phi_config,
                _limiter=limiter,
            )
        except Exception as exc:
            slots[index] = ClassificationFailure(comment_id=comment.id, error=str(exc))

    if config.max_in_flight > 1 and config.kind == "remote_llm":
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            for i, comment in enumerate(comments):
                pool.submit(work, i, comment)
    else:
        for i, comment in enumerate(comments):
            work(i, comment)

    outputs = tuple(s for s in slots if isinstance(s, ClassificationOutput))
    failures = tuple(s for s in slots if isinstance(s, ClassificationFailure))
    return CorpusRunResult(outputs=outputs, failures=failures)
