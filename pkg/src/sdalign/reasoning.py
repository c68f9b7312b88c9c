"""Two-stage generation: summarize the latent attributes of a demonstration
batch, then synthesize labeled samples conditioned on that summary.

Stage 1 asks the generator to describe a fixed attribute schema as a JSON
object; stage 2 asks for multiple unique samples that match the summary and a
target label. Both parsers tolerate surrounding prose and code fences, and
failed parses are re-asked with a format reminder appended.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal, Mapping, Sequence

import requests

from .corpus import Corpus, TextRecord
from .sampling import DemonstrationBatch

log = logging.getLogger(__name__)

SUMMARIZE_PLACEHOLDERS = ("{demonstrations}", "{attributes}")
GENERATE_PLACEHOLDERS = ("{summary}", "{label}", "{n_samples}")

DEFAULT_SUMMARY_TEMPERATURE = 0.2
DEFAULT_GENERATION_TEMPERATURE = 1.0

SUMMARY_FORMAT_REMINDER = (
    "Reminder: respond with a single JSON object only, whose keys are exactly "
    "the quoted attribute names requested above, each with a non-empty string value."
)
SAMPLES_FORMAT_REMINDER = (
    "Reminder: respond with a numbered list only, one sample per item, "
    "or a JSON array of strings."
)

DEFAULT_SCHEMAS: dict[str, tuple[str, ...]] = {
    "sst2": ("movie genres", "topics", "language habits", "review length"),
    "agnews": ("news topics", "writing style", "news length", "subtopics", "location"),
    "amazon": (
        "product information",
        "usage experience",
        "writing style",
        "review length",
        "language habits",
        "subtopics",
    ),
}


class ClientError(RuntimeError):
    """Generator endpoint failed after transport-level retries."""


class GenerationRoundError(RuntimeError):
    """A round exhausted its parse retries; the pipeline records and skips it."""


@dataclass(frozen=True)
class AttributeSchema:
    dataset_name: str
    attributes: tuple[str, ...]

    def __post_init__(self):
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise ValueError("schema needs at least one attribute")
        if any(not a for a in attrs):
            raise ValueError("attribute names must be non-empty")
        if len(set(attrs)) != len(attrs):
            raise ValueError("attribute names must be distinct")


@dataclass(frozen=True)
class AttributeSummary:
    id: str
    pairs: tuple[tuple[str, str], ...]
    demo_ids: tuple[str, ...]
    label: str

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((str(a), str(v)) for a, v in self.pairs))
        object.__setattr__(self, "demo_ids", tuple(self.demo_ids))
        if any(not v for _, v in self.pairs):
            raise ValueError("attribute values must be non-empty")


@dataclass(frozen=True)
class PromptTemplate:
    stage: Literal["summarize", "generate"]
    template_text: str

    def __post_init__(self):
        required = SUMMARIZE_PLACEHOLDERS if self.stage == "summarize" else GENERATE_PLACEHOLDERS
        if self.stage not in ("summarize", "generate"):
            raise ValueError(f"unknown stage {self.stage!r}")
        missing = [p for p in required if p not in self.template_text]
        if missing:
            raise ValueError(f"{self.stage} template missing placeholders: {', '.join(missing)}")

    def render(self, values: Mapping[str, str]) -> str:
        # single pass over the template so substituted text is never rescanned
        pattern = re.compile(r"\{(" + "|".join(re.escape(k) for k in values) + r")\}")
        return pattern.sub(lambda m: values[m.group(1)], self.template_text)


@dataclass(frozen=True)
class TemplatePair:
    summarize: PromptTemplate
    generate: PromptTemplate


@dataclass(frozen=True)
class GenerationOptions:
    n_samples: int = 10
    retries: int = 2
    summary_temperature: float = DEFAULT_SUMMARY_TEMPERATURE
    generation_temperature: float = DEFAULT_GENERATION_TEMPERATURE

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")


def load_default_templates(dataset_name: str | None = None) -> TemplatePair:
    """Templates shipped with the package; Amazon gets its review-specific framing."""
    base = resources.files("sdalign.templates")
    summarize = PromptTemplate("summarize", (base / "summarize.txt").read_text(encoding="utf-8"))
    gen_name = "generate_amazon.txt" if dataset_name == "amazon" else "generate.txt"
    generate = PromptTemplate("generate", (base / gen_name).read_text(encoding="utf-8"))
    return TemplatePair(summarize=summarize, generate=generate)


def load_template(path: str | Path, stage: Literal["summarize", "generate"]) -> PromptTemplate:
    return PromptTemplate(stage, Path(path).read_text(encoding="utf-8"))


def default_schema(dataset_name: str) -> AttributeSchema:
    try:
        return AttributeSchema(dataset_name, DEFAULT_SCHEMAS[dataset_name])
    except KeyError:
        raise ValueError(
            f"no default schema for {dataset_name!r}; known: {sorted(DEFAULT_SCHEMAS)}"
        ) from None


# ---------------------------------------------------------------------------
# prompt construction
# ---------------------------------------------------------------------------


def _render_demonstrations(demos: Sequence[TextRecord]) -> str:
    return "\n".join(f"{i}. ({rec.label}) {rec.text}" for i, rec in enumerate(demos, start=1))


def _render_attributes(schema: AttributeSchema) -> str:
    return "\n".join(f'- "{name}"' for name in schema.attributes)


def _render_summary(summary: AttributeSummary) -> str:
    return "\n".join(f'- "{name}": {value}' for name, value in summary.pairs)


def build_summary_prompt(
    demos: Sequence[TextRecord], schema: AttributeSchema, template: PromptTemplate
) -> str:
    """Stage-1 prompt: demonstrations one per line plus the attribute list."""
    if not demos:
        raise ValueError("need at least one demonstration")
    if template.stage != "summarize":
        raise ValueError(f"expected a summarize template, got stage {template.stage!r}")
    return template.render(
        {"demonstrations": _render_demonstrations(demos), "attributes": _render_attributes(schema)}
    )


def build_generation_prompt(
    summary: AttributeSummary, n_samples: int, template: PromptTemplate
) -> str:
    """Stage-2 prompt: attribute summary, target label, and sample count."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if template.stage != "generate":
        raise ValueError(f"expected a generate template, got stage {template.stage!r}")
    return template.render(
        {"summary": _render_summary(summary), "label": summary.label, "n_samples": str(n_samples)}
    )


# ---------------------------------------------------------------------------
# response parsing
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")
_NUMBERED_ITEM = re.compile(r"^\s*\d+\s*[.)]\s*(.*)$")


def _strip_fences(text: str) -> str:
    return _FENCE.sub("\n", text)


def _first_json_value(text: str, opener: str, closer: str):
    """First balanced JSON value in the text, tolerating surrounding prose.

    Prose may contain stray unbalanced braces, so every opener is a
    candidate start until one yields a balanced span that parses.
    """
    pos = 0
    while True:
        start = text.find(opener, pos)
        if start == -1:
            return None
        depth = 0
        in_string = False
        escaped = False
        end = None
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == opener:
                depth += 1
            elif ch == closer:
                depth -= 1
                if depth == 0:
                    end = i
                    break
        if end is not None:
            try:
                return json.loads(text[start : end + 1])
            except json.JSONDecodeError:
                pass
        pos = start + 1


def parse_attribute_summary(
    response: str,
    schema: AttributeSchema,
    summary_id: str = "summary",
    demo_ids: Sequence[str] = (),
    label: str = "",
) -> AttributeSummary:
    """Extract the first JSON object from the response and validate it against the schema.

    Extra keys are dropped with a warning; a missing schema key or an empty
    value is an error.
    """
    obj = _first_json_value(_strip_fences(response), "{", "}")
    if not isinstance(obj, dict):
        raise ValueError("no parseable JSON object in response")
    extra = [k for k in obj if k not in schema.attributes]
    if extra:
        log.warning("summary %s: dropping unexpected keys %s", summary_id, extra)
    pairs = []
    for name in schema.attributes:
        if name not in obj:
            raise ValueError(f"summary missing attribute key {name!r}")
        value = obj[name]
        if not isinstance(value, str):
            value = json.dumps(value, ensure_ascii=False) if isinstance(value, (list, dict)) else str(value)
        value = value.strip()
        if not value:
            raise ValueError(f"summary has empty value for attribute {name!r}")
        pairs.append((name, value))
    return AttributeSummary(id=summary_id, pairs=tuple(pairs), demo_ids=tuple(demo_ids), label=label)


def parse_generated_samples(response: str, summary: AttributeSummary) -> list[TextRecord]:
    """Split a stage-2 response into synthetic records.

    Accepts a JSON array of strings or a numbered list; blank samples are
    dropped, and every record carries the summary's label and provenance.
    """
    texts: list[str] = []
    array = _first_json_value(_strip_fences(response), "[", "]")
    if isinstance(array, list) and array and all(isinstance(x, (str, int, float)) for x in array):
        texts = [str(x) for x in array]
    else:
        current: list[str] = []
        for line in response.splitlines():
            m = _NUMBERED_ITEM.match(line)
            if m:
                if current:
                    texts.append(" ".join(current))
                current = [m.group(1).strip()]
            elif current and line.strip():
                current.append(line.strip())
        if current:
            texts.append(" ".join(current))
    texts = [t.strip() for t in texts]
    texts = [t for t in texts if t]
    if not texts:
        raise ValueError("zero extractable samples in response")
    return [
        TextRecord(
            id=f"{summary.id}-g{i:03d}",
            text=text,
            label=summary.label,
            source="synthetic",
            meta={"summary_id": summary.id},
        )
        for i, text in enumerate(texts)
    ]


# ---------------------------------------------------------------------------
# generator clients
# ---------------------------------------------------------------------------


class GeneratorClient:
    """Abstract text-completion capability."""

    def complete(self, prompt: str, temperature: float = 1.0) -> str:
        raise NotImplementedError


class HttpChatClient(GeneratorClient):
    """Minimal client for an OpenAI-compatible chat-completions endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.tokens_used = 0

    def complete(self, prompt: str, temperature: float = 1.0) -> str:
        url = f"{self.endpoint}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise ClientError(f"HTTP {resp.status_code} from {url}")
                resp.raise_for_status()
                data = resp.json()
                usage = data.get("usage") or {}
                self.tokens_used += int(usage.get("total_tokens", 0))
                return data["choices"][0]["message"]["content"]
            except (requests.RequestException, ClientError, KeyError, ValueError) as exc:
                last = exc
                if attempt + 1 < self.max_attempts:
                    delay = self.backoff_base * (2**attempt) + random.uniform(0, 0.25)
                    log.warning("generator request failed (%s), retrying in %.1fs", exc, delay)
                    time.sleep(delay)
        raise ClientError(f"generator request failed after {self.max_attempts} attempts: {last}")


def _prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


_MOCK_WORDS = (
    "quiet brisk amber copper river meadow lantern harbor velvet winter "
    "sudden gentle hollow marble cinder drifting narrow golden silver rustic "
    "story camera engine garden ticket window market signal branch stone "
    "melody thread canvas timber saddle anchor ribbon tunnel parcel ledger"
).split()

_MOCK_ATTR_LINE = re.compile(r'^- "(.+)"$', re.MULTILINE)
_MOCK_COUNT = re.compile(r"exactly (\d+)")


class MockGeneratorClient(GeneratorClient):
    """Offline stand-in for the generator: a pure function of (fixtures, prompt).

    Exact responses come from the fixture table, keyed by a short sha256 of
    the prompt. Unmatched prompts get a fabricated response derived from the
    prompt hash: a JSON attribute object when the prompt carries a rendered
    attribute list, or a numbered sample list when it asks for an exact count
    (both markers are emitted by the shipped prompt builders).
    """

    def __init__(self, fixtures: Mapping[str, str] | None = None, fabricate: bool = True):
        self.fixtures = dict(fixtures or {})
        self.fabricate = fabricate
        self.calls: list[str] = []

    @staticmethod
    def key_for(prompt: str) -> str:
        return _prompt_key(prompt)

    def _words(self, rng: random.Random, low: int = 4, high: int = 9) -> str:
        return " ".join(rng.choice(_MOCK_WORDS) for _ in range(rng.randint(low, high)))

    def complete(self, prompt: str, temperature: float = 1.0) -> str:
        self.calls.append(prompt)
        key = _prompt_key(prompt)
        if key in self.fixtures:
            return self.fixtures[key]
        if not self.fabricate:
            raise ClientError(f"mock has no fixture for prompt key {key}")
        rng = random.Random(int(key, 16))
        count_match = _MOCK_COUNT.search(prompt)
        attr_names = [m for m in _MOCK_ATTR_LINE.findall(prompt) if '": ' not in m]
        if count_match and not attr_names:
            n = int(count_match.group(1))
            lines = [f"{i}. {self._words(rng, 5, 11)}" for i in range(1, n + 1)]
            return "\n".join(lines)
        if attr_names:
            return json.dumps({name: self._words(rng, 2, 5) for name in attr_names})
        return self._words(rng)


# ---------------------------------------------------------------------------
# round orchestration
# ---------------------------------------------------------------------------


def run_generation_round(
    client: GeneratorClient,
    batch: DemonstrationBatch,
    corpus: Corpus,
    schema: AttributeSchema,
    templates: TemplatePair,
    opts: GenerationOptions | None = None,
    label: str | None = None,
) -> tuple[AttributeSummary, list[TextRecord]]:
    """Stage 1 then stage 2 for one demonstration batch and one target label.

    Parse failures are re-asked up to ``opts.retries`` times with a format
    reminder appended; an exhausted stage raises GenerationRoundError so the
    caller can record the failure and continue with other rounds.
    """
    opts = opts or GenerationOptions()
    demos = [corpus[m] for m in batch.members]
    if label is None:
        label = demos[0].label
    summary_id = f"s{batch.round:04d}-{label}"
    demo_ids = tuple(rec.id for rec in demos)

    prompt = build_summary_prompt(demos, schema, templates.summarize)
    summary = None
    for attempt in range(opts.retries + 1):
        try:
            response = client.complete(prompt, temperature=opts.summary_temperature)
        except ClientError as exc:
            raise GenerationRoundError(f"round {batch.round} ({label}): stage 1 request failed: {exc}") from exc
        try:
            summary = parse_attribute_summary(response, schema, summary_id, demo_ids, label)
            break
        except ValueError as exc:
            log.warning("round %d (%s): stage 1 parse failed (attempt %d): %s", batch.round, label, attempt + 1, exc)
            prompt = prompt + "\n\n" + SUMMARY_FORMAT_REMINDER
    if summary is None:
        raise GenerationRoundError(f"round {batch.round} ({label}): stage 1 exhausted {opts.retries} retries")

    prompt = build_generation_prompt(summary, opts.n_samples, templates.generate)
    for attempt in range(opts.retries + 1):
        try:
            response = client.complete(prompt, temperature=opts.generation_temperature)
        except ClientError as exc:
            raise GenerationRoundError(f"round {batch.round} ({label}): stage 2 request failed: {exc}") from exc
        try:
            return summary, parse_generated_samples(response, summary)
        except ValueError as exc:
            log.warning("round %d (%s): stage 2 parse failed (attempt %d): %s", batch.round, label, attempt + 1, exc)
            prompt = prompt + "\n\n" + SAMPLES_FORMAT_REMINDER
    raise GenerationRoundError(f"round {batch.round} ({label}): stage 2 exhausted {opts.retries} retries")


def discover_schema(
    client: GeneratorClient,
    demos: Sequence[TextRecord],
    dataset_name: str,
    max_attributes: int = 8,
) -> AttributeSchema:
    """Optional bootstrap: ask the generator to propose an attribute list.

    Shipped schemas are preferred for reproducibility; this exists for new
    datasets without one.
    """
    prompt = (
        "Below are examples from a text dataset:\n\n"
        + _render_demonstrations(demos)
        + f"\n\nName up to {max_attributes} key linguistic or semantic attributes that "
        "characterize such texts (for example topics, writing style, length). "
        "Respond with a JSON array of short attribute-name strings."
    )
    response = client.complete(prompt, temperature=0.2)
    arr = _first_json_value(_strip_fences(response), "[", "]")
    if not isinstance(arr, list) or not arr:
        raise ValueError("no parseable attribute array in response")
    names = []
    for item in arr[:max_attributes]:
        name = str(item).strip().lower()
        if name and name not in names:
            names.append(name)
    return AttributeSchema(dataset_name, tuple(names))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_summaries(summaries: Sequence[AttributeSummary], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in summaries:
            obj = {"id": s.id, "label": s.label, "demo_ids": list(s.demo_ids), "pairs": [list(p) for p in s.pairs]}
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def load_summaries(path: str | Path) -> list[AttributeSummary]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    AttributeSummary(
                        id=obj["id"],
                        pairs=tuple((a, v) for a, v in obj["pairs"]),
                        demo_ids=tuple(obj["demo_ids"]),
                        label=obj["label"],
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}: malformed summary line {lineno}") from exc
    return out
