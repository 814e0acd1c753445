"""Pipeline configuration: a plain sectioned key-value file, fully validated.

Paths are resolved relative to the config file's own directory so a config
travels with its data. Validation collects every problem instead of
stopping at the first; secrets never live in the file, only the name of
the environment variable holding the API key.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from pxtopics.classify import BackendConfig, load_keyword_table, load_shot_pool, load_template
from pxtopics.corpus import SurveySchema
from pxtopics.errors import ConfigInvalid
from pxtopics.phi import PhiCategory, PhiConfig

FORMATS = ("csv", "jsonl")
BACKENDS = ("rules", "remote")
STYLES = ("plain", "chain_of_thought")


@dataclass(frozen=True)
class PipelineConfig:
    source_path: Path
    base_dir: Path

    comments_path: Path | None
    comments_format: str
    annotations_path: Path | None
    annotations_format: str
    gold_path: Path | None
    gold_format: str
    survey_path: Path | None
    survey_format: str
    survey_schema: SurveySchema

    phi_name_gazetteer: Path | None
    phi_custom_terms: Path | None
    phi_disabled: frozenset[PhiCategory]
    phi_sample_size: int

    backend: str
    model: str
    endpoint: str
    api_key_env: str
    temperature: float
    timeout_s: float
    max_retries: int
    min_request_interval_ms: int
    max_in_flight: int
    k_shots: int
    style: str
    template_path: Path | None
    shot_pool_path: Path | None
    keyword_table_path: Path | None

    eval_predictions: tuple[Path, ...]
    assoc_variables: tuple[str, ...]
    alpha: float
    rating_name: str
    rating_range: tuple[int, int]
    assoc_joint: bool

    output_dir: Path
    seed: int

    def sha256(self) -> str:
        return hashlib.sha256(self.source_path.read_bytes()).hexdigest()

    def build_phi_config(self, seed: int | None = None) -> PhiConfig:
        return PhiConfig.from_files(
            name_gazetteer=self.phi_name_gazetteer,
            custom_terms=self.phi_custom_terms,
            disabled=self.phi_disabled,
            sample_size=self.phi_sample_size,
            seed=self.seed if seed is None else seed,
        )

    def build_backend_config(self) -> BackendConfig:
        shot_pool = ()
        if self.shot_pool_path is not None:
            shot_pool = load_shot_pool(self.shot_pool_path, self.build_phi_config())
        keyword_table = load_keyword_table(self.keyword_table_path)
        return BackendConfig(
            kind="remote_llm" if self.backend == "remote" else "rule_based",
            endpoint=self.endpoint,
            model=self.model,
            temperature=self.temperature,
            timeout_s=self.timeout_s,
            max_retries=self.max_retries,
            min_request_interval_ms=self.min_request_interval_ms,
            k_shots=self.k_shots,
            shot_pool=shot_pool,
            api_key_env=self.api_key_env,
            max_in_flight=self.max_in_flight,
            keyword_table=keyword_table,
        )

    def build_template(self):
        return load_template(self.template_path, style=self.style)


class _Reader:
    """Typed accessors over configparser that collect problems instead of raising."""

    def __init__(self, parser: configparser.ConfigParser, base_dir: Path):
        self.parser = parser
        self.base_dir = base_dir
        self.problems: list[str] = []

    def raw(self, section: str, key: str, default: str = "") -> str:
        return self.parser.get(section, key, fallback=default).strip()

    def path(self, section: str, key: str, must_exist: bool = True) -> Path | None:
        value = self.raw(section, key)
        if not value:
            return None
        path = (self.base_dir / value).resolve() if not Path(value).is_absolute() else Path(value)
        if must_exist and not path.exists():
            self.problems.append(f"[{section}] {key}: path does not exist: {value}")
        return path

    def choice(self, section: str, key: str, options: tuple[str, ...], default: str) -> str:
        value = self.raw(section, key, default)
        if value not in options:
            self.problems.append(
                f"[{section}] {key}: {value!r} is not one of {', '.join(options)}"
            )
            return default
        return value

    def number(self, section, key, cast, default, minimum=None, maximum=None, exclusive=False):
        value = self.raw(section, key, str(default))
        try:
            parsed = cast(value)
        except ValueError:
            self.problems.append(f"[{section}] {key}: {value!r} is not a {cast.__name__}")
            return default
        if minimum is not None and (parsed <= minimum if exclusive else parsed < minimum):
            self.problems.append(f"[{section}] {key}: {parsed} below allowed minimum {minimum}")
        if maximum is not None and (parsed >= maximum if exclusive else parsed > maximum):
            self.problems.append(f"[{section}] {key}: {parsed} above allowed maximum {maximum}")
        return parsed

    def csv_list(self, section: str, key: str) -> tuple[str, ...]:
        value = self.raw(section, key)
        if not value:
            return ()
        return tuple(item.strip() for item in value.split(",") if item.strip())


def _parse_ratings(reader: _Reader) -> dict[str, tuple[int, int]]:
    ratings: dict[str, tuple[int, int]] = {}
    for item in reader.csv_list("survey_schema", "ratings"):
        parts = item.rsplit(":", 2)
        if len(parts) == 1:
            ratings[parts[0].strip()] = (0, 10)
            continue
        if len(parts) != 3:
            reader.problems.append(
                f"[survey_schema] ratings: {item!r} must be 'Name' or 'Name:lo:hi'"
            )
            continue
        name, lo, hi = parts[0].strip(), parts[1].strip(), parts[2].strip()
        try:
            ratings[name] = (int(lo), int(hi))
        except ValueError:
            reader.problems.append(f"[survey_schema] ratings: bad range in {item!r}")
    return ratings


def _parse_disabled(reader: _Reader) -> frozenset[PhiCategory]:
    names = reader.csv_list("phi", "disabled")
    out = set()
    for name in names:
        try:
            out.add(PhiCategory(name))
        except ValueError:
            reader.problems.append(f"[phi] disabled: unknown category {name!r}")
    return frozenset(out)


def validate_config(path: str | Path) -> PipelineConfig:
    """Parse and fully validate a pipeline config; all problems are collected
    into one ConfigInvalid instead of failing at the first."""
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid([f"config file not found: {path}"])
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigInvalid([f"config not parseable: {exc}"]) from exc

    reader = _Reader(parser, path.parent.resolve())

    comments_path = reader.path("corpus", "comments")
    comments_format = reader.choice("corpus", "comments_format", FORMATS, "csv")
    annotations_path = reader.path("corpus", "annotations")
    annotations_format = reader.choice("corpus", "annotations_format", FORMATS, "csv")
    gold_path = reader.path("corpus", "gold")
    gold_format = reader.choice("corpus", "gold_format", FORMATS, "csv")
    survey_path = reader.path("corpus", "survey")
    survey_format = reader.choice("corpus", "survey_format", FORMATS, "csv")

    schema = SurveySchema(
        id_column=reader.raw("survey_schema", "id_column", "comment_id") or "comment_id",
        demographics=reader.csv_list("survey_schema", "demographics"),
        ratings=_parse_ratings(reader),
        mc_answers=reader.csv_list("survey_schema", "mc_answers"),
    )

    phi_name_gazetteer = reader.path("phi", "name_gazetteer")
    phi_custom_terms = reader.path("phi", "custom_terms")
    phi_disabled = _parse_disabled(reader)
    phi_sample_size = reader.number("phi", "sample_size", int, 5, minimum=0)

    backend = reader.choice("classify", "backend", BACKENDS, "rules")
    style = reader.choice("classify", "style", STYLES, "plain")
    temperature = reader.number("classify", "temperature", float, 0.0, minimum=0.0)
    timeout_s = reader.number("classify", "timeout_s", float, 30.0, minimum=0.0, exclusive=True)
    max_retries = reader.number("classify", "max_retries", int, 3, minimum=0)
    min_interval = reader.number("classify", "min_request_interval_ms", int, 0, minimum=0)
    max_in_flight = reader.number("classify", "max_in_flight", int, 1, minimum=1)
    k_shots = reader.number("classify", "k_shots", int, 0, minimum=0)
    template_path = reader.path("classify", "template")
    shot_pool_path = reader.path("classify", "shot_pool")
    keyword_table_path = reader.path("classify", "keyword_table")
    model = reader.raw("classify", "model", "gpt-4-turbo")
    endpoint = reader.raw("classify", "endpoint")
    api_key_env = reader.raw("classify", "api_key_env", "PXTOPICS_API_KEY")
    if backend == "remote" and not endpoint:
        reader.problems.append("[classify] endpoint: required for the remote backend")

    eval_predictions = _prediction_paths(reader)

    assoc_variables = reader.csv_list("assoc", "variables")
    alpha = reader.number("assoc", "alpha", float, 0.05, minimum=0.0, maximum=1.0, exclusive=True)
    rating_name = reader.raw("assoc", "rating", "Overall Rating") or "Overall Rating"
    rating_range = schema.ratings.get(rating_name, (0, 10))
    assoc_joint = reader.choice("assoc", "joint", ("true", "false"), "true") == "true"

    output_dir_value = reader.raw("output", "dir", "out") or "out"
    output_dir = (
        Path(output_dir_value)
        if Path(output_dir_value).is_absolute()
        else reader.base_dir / output_dir_value
    )
    seed = reader.number("output", "seed", int, 0, minimum=0)

    if k_shots > 0 and shot_pool_path is None:
        reader.problems.append("[classify] shot_pool: required when k_shots > 0")

    if reader.problems:
        raise ConfigInvalid(reader.problems)

    return PipelineConfig(
        source_path=path,
        base_dir=reader.base_dir,
        comments_path=comments_path,
        comments_format=comments_format,
        annotations_path=annotations_path,
        annotations_format=annotations_format,
        gold_path=gold_path,
        gold_format=gold_format,
        survey_path=survey_path,
        survey_format=survey_format,
        survey_schema=schema,
        phi_name_gazetteer=phi_name_gazetteer,
        phi_custom_terms=phi_custom_terms,
        phi_disabled=phi_disabled,
        phi_sample_size=phi_sample_size,
        backend=backend,
        model=model,
        endpoint=endpoint,
        api_key_env=api_key_env,
        temperature=temperature,
        timeout_s=timeout_s,
        max_retries=max_retries,
        min_request_interval_ms=min_interval,
        max_in_flight=max_in_flight,
        k_shots=k_shots,
        style=style,
        template_path=template_path,
        shot_pool_path=shot_pool_path,
        keyword_table_path=keyword_table_path,
        eval_predictions=eval_predictions,
        assoc_variables=assoc_variables,
        alpha=alpha,
        rating_name=rating_name,
        rating_range=rating_range,
        output_dir=output_dir,
        seed=seed,
    )


def _prediction_paths(reader: _Reader) -> tuple[Path, ...]:
    paths = []
    for value in reader.csv_list("eval", "predictions"):
        candidate = (
            Path(value) if Path(value).is_absolute() else (reader.base_dir / value).resolve()
        )
        # prediction files are produced by earlier runs and may not exist yet
        paths.append(candidate)
    return tuple(paths)
