"""Run configuration: one YAML file describes an end-to-end experiment.

Secrets stay out of the file; the generator API key comes from the
GENERATOR_API_KEY environment variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Mapping

import yaml

from .alignment import OptimizerConfig
from .sampling import DEFAULT_K, DEFAULT_MAX_ROUNDS, DEFAULT_SIGMA, KernelConfig


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _take(section: Mapping[str, Any], name: str, cls, where: str):
    """Build a config dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(section, Mapping):
        raise ConfigError(f"{where}: expected a mapping for {name!r}")
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys in {name!r}: {', '.join(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad {name!r} section: {exc}") from exc


@dataclass(frozen=True)
class EmbedderConfig:
    mode: str = "hash"
    dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("hash", "file"):
            raise ValueError(f"embedder mode must be 'hash' or 'file', got {self.mode!r}")
        if self.dim < 2:
            raise ValueError(f"embedder dim must be >= 2, got {self.dim}")


@dataclass(frozen=True)
class SamplerConfig:
    k: int = DEFAULT_K
    sigma: float = DEFAULT_SIGMA
    max_rounds: int = DEFAULT_MAX_ROUNDS

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must be in (0, 1), got {self.sigma}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")


@dataclass(frozen=True)
class GeneratorConfig:
    endpoint: str = "http://localhost:8000/v1"
    model: str = "default"
    dataset: str = "sst2"
    attributes: tuple[str, ...] = ()
    summarize_template: str = ""
    generate_template: str = ""
    n_samples: int = 10
    retries: int = 2
    summary_temperature: float = 0.2
    generation_temperature: float = 1.0
    mock: bool = False
    mock_fixtures: str = ""
    max_in_flight: int = 4

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes or ()))
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be >= 1, got {self.max_in_flight}")


@dataclass(frozen=True)
class AlignmentConfig:
    n_projections: int = 100
    seed: int = 0
    learning_rate: float = 0.1
    max_iters: int = 2000
    tol: float = 1e-8
    nonneg: bool = True

    def __post_init__(self):
        if self.n_projections < 1:
            raise ValueError(f"n_projections must be >= 1, got {self.n_projections}")

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            max_iters=self.max_iters,
            tol=self.tol,
            nonneg_projection=self.nonneg,
        )


@dataclass(frozen=True)
class ResampleConfig:
    zeta: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.zeta < 1:
            raise ValueError(f"zeta must be >= 1, got {self.zeta}")


@dataclass(frozen=True)
class EvalConfig:
    n_slices: int = 128
    seed: int = 0
    coverage_k: int = 5
    coverage_steps: int = 200
    projection: str = "pca"
    coords_path: str = ""

    def __post_init__(self):
        if self.n_slices < 1:
            raise ValueError(f"n_slices must be >= 1, got {self.n_slices}")
        if self.coverage_k < 1:
            raise ValueError(f"coverage_k must be >= 1, got {self.coverage_k}")
        if self.coverage_steps < 1:
            raise ValueError(f"coverage_steps must be >= 1, got {self.coverage_steps}")
        if self.projection not in ("pca", "file"):
            raise ValueError(f"projection must be 'pca' or 'file', got {self.projection!r}")


@dataclass(frozen=True)
class SweepConfig:
    taus: tuple[float, ...] = (0.3, 0.9, 1.5)
    ks: tuple[int, ...] = (5,)
    n_projections: tuple[int, ...] = (10, 50, 100, 500, 1000)
    coverage_step: int = 50

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        object.__setattr__(self, "n_projections", tuple(int(m) for m in self.n_projections))
        if not (self.taus and self.ks and self.n_projections):
            raise ValueError("sweep grids must be non-empty")
        if self.coverage_step < 1:
            raise ValueError(f"coverage_step must be >= 1, got {self.coverage_step}")


@dataclass(frozen=True)
class PipelineConfig:
    corpus: str
    output_dir: str
    embeddings: str = ""
    gen_embeddings: str = ""
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    kernel: KernelConfig = field(default_factory=lambda: KernelConfig(tau=0.9))
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def out(self, name: str) -> Path:
        return Path(self.output_dir) / name

    def to_dict(self) -> dict:
        return asdict(self)

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Global seed override: every seeded stage uses the same value."""
        from dataclasses import replace

        return replace(
            self,
            embedder=replace(self.embedder, seed=seed),
            alignment=replace(self.alignment, seed=seed),
            resample=replace(self.resample, seed=seed),
            evaluation=replace(self.evaluation, seed=seed),
        )

    def with_mock(self) -> "PipelineConfig":
        from dataclasses import replace

        return replace(self, generator=replace(self.generator, mock=True))


_SECTIONS = {
    "embedder": EmbedderConfig,
    "kernel": KernelConfig,
    "sampler": SamplerConfig,
    "generator": GeneratorConfig,
    "alignment": AlignmentConfig,
    "resample": ResampleConfig,
    "evaluation": EvalConfig,
    "sweep": SweepConfig,
}


def config_from_dict(raw: Mapping[str, Any], where: str = "config") -> PipelineConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{where}: top level must be a mapping")
    known = {"corpus", "output_dir", "embeddings", "gen_embeddings", *_SECTIONS}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown top-level keys: {', '.join(unknown)}")
    for key in ("corpus", "output_dir"):
        if not raw.get(key):
            raise ConfigError(f"{where}: missing required key {key!r}")
    kwargs: dict[str, Any] = {
        "corpus": str(raw["corpus"]),
        "output_dir": str(raw["output_dir"]),
        "embeddings": str(raw.get("embeddings", "") or ""),
        "gen_embeddings": str(raw.get("gen_embeddings", "") or ""),
    }
    for name, cls in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _take(raw[name], name, cls, where)
    try:
        return PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError(f"{path}: empty config")
    cfg = config_from_dict(raw, where=str(path))
    # Paths in the file are relative to the file's directory.
    base = path.parent
    from dataclasses import replace

    def _abs(p: str) -> str:
        return str((base / p).resolve()) if p and not Path(p).is_absolute() else p

    gen = cfg.generator
    gen = replace(
        gen,
        mock_fixtures=_abs(gen.mock_fixtures),
        summarize_template=_abs(gen.summarize_template),
        generate_template=_abs(gen.generate_template),
    )
    return replace(
        cfg,
        corpus=_abs(cfg.corpus),
        output_dir=_abs(cfg.output_dir),
        embeddings=_abs(cfg.embeddings),
        gen_embeddings=_abs(cfg.gen_embeddings),
        generator=gen,
        evaluation=replace(cfg.evaluation, coords_path=_abs(cfg.evaluation.coords_path)),
    )
