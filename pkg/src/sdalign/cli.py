"""Command-line pipeline runner.

Each subcommand consumes only artifacts persisted by earlier stages, so any
stage can be re-run alone. A manifest in the output directory records the
config snapshot, per-stage artifact hashes, timings, and round outcomes.

Exit codes: 0 success, 1 configuration error, 2 stage failure (stage name on
stderr).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import alignment, metrics, reasoning, sampling
from .config import ConfigError, PipelineConfig, load_config
from .corpus import (
    Corpus,
    EmbeddingMatrix,
    hash_embed,
    load_corpus,
    load_embeddings,
    save_corpus,
    save_embeddings,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PIPELINE_STAGES = ("sample", "generate", "align", "resample", "evaluate")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """Per-run record of config, artifact hashes, timings, and round outcomes."""

    def __init__(self, config: dict, path: Path):
        self.path = path
        self.data: dict = {"config": config, "stages": {}, "tokens_used": 0}

    @classmethod
    def open(cls, config: PipelineConfig) -> "RunManifest":
        path = config.out(MANIFEST_NAME)
        manifest = cls(config.to_dict(), path)
        if path.exists():
            try:
                manifest.data = json.loads(path.read_text(encoding="utf-8"))
                manifest.data["config"] = config.to_dict()
            except (json.JSONDecodeError, KeyError):
                log.warning("unreadable manifest at %s, starting fresh", path)
        return manifest

    def record_stage(self, name: str, artifacts: dict[str, Path], seconds: float, **extra) -> None:
        entry = {
            "artifacts": {art.name: _sha256(art) for art in artifacts.values()},
            "seconds": round(seconds, 3),
        }
        entry.update(extra)
        self.data.setdefault("stages", {})[name] = entry
        self.save()

    def add_tokens(self, n: int) -> None:
        self.data["tokens_used"] = int(self.data.get("tokens_used", 0)) + int(n)

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def verify(self) -> list[str]:
        """Names of artifacts that are missing or whose bytes changed."""
        bad = []
        for stage, entry in self.data.get("stages", {}).items():
            for name, digest in entry.get("artifacts", {}).items():
                artifact = self.path.parent / name
                if not artifact.exists():
                    bad.append(f"{stage}:{name} missing")
                elif _sha256(artifact) != digest:
                    bad.append(f"{stage}:{name} hash mismatch")
        return bad


# ---------------------------------------------------------------------------
# artifact helpers
# ---------------------------------------------------------------------------


def _load_ori(config: PipelineConfig) -> Corpus:
    return load_corpus(config.corpus)


def _embed(config: PipelineConfig, corpus: Corpus) -> EmbeddingMatrix:
    from dataclasses import replace

    from .corpus import corpus_fingerprint

    emb = hash_embed(corpus.texts(), dim=config.embedder.dim, seed=config.embedder.seed)
    return replace(emb, corpus_fingerprint=corpus_fingerprint(corpus))


def _ori_embeddings(config: PipelineConfig, corpus: Corpus) -> EmbeddingMatrix:
    """Original-corpus embeddings: explicit file, then the sample stage's artifact,
    then (hash mode only) a fresh computation."""
    if config.embeddings:
        return load_embeddings(config.embeddings, corpus)
    artifact = config.out("embeddings.bin")
    if artifact.exists():
        return load_embeddings(artifact, corpus)
    if config.embedder.mode != "hash":
        raise FileNotFoundError(
            f"no embeddings for {config.corpus}; set 'embeddings' or use the hash embedder"
        )
    return _embed(config, corpus)


def _require(path: Path, stage: str, hint: str) -> Path:
    if not path.exists():
        raise StageError(stage, f"missing artifact {path.name}; run '{hint}' first")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def cmd_sample(config: PipelineConfig, manifest: RunManifest) -> dict[str, Path]:
    corpus = _load_ori(config)
    if config.embeddings:
        emb = load_embeddings(config.embeddings, corpus)
    elif config.embedder.mode == "hash":
        emb = _embed(config, corpus)
    else:
        raise FileNotFoundError("embedder mode 'file' requires the 'embeddings' path")
    emb_path = config.out("embeddings.bin")
    save_embeddings(emb, emb_path)

    state = sampling.init_tracker(emb, config.kernel)
    variance_path = config.out("variance.csv")
    variance_path.unlink(missing_ok=True)

    def snapshot(st: sampling.TrackerState, batch: sampling.DemonstrationBatch) -> None:
        sampling.write_variance_snapshot(st, corpus, variance_path, round_no=batch.round)

    batches = sampling.run_sampling(
        state,
        k=config.sampler.k,
        sigma=config.sampler.sigma,
        max_rounds=config.sampler.max_rounds,
        on_round=snapshot,
    )
    batches_path = config.out("batches.jsonl")
    sampling.save_batches(batches, corpus, batches_path)
    if not variance_path.exists():  # zero rounds still leaves a readable artifact
        sampling.write_variance_snapshot(state, corpus, variance_path, round_no=0)
    return {"batches": batches_path, "variance": variance_path, "embeddings": emb_path}


def _build_client(config: PipelineConfig) -> reasoning.GeneratorClient:
    gen = config.generator
    if gen.mock:
        fixtures = None
        if gen.mock_fixtures:
            fixtures = json.loads(Path(gen.mock_fixtures).read_text(encoding="utf-8"))
        return reasoning.MockGeneratorClient(fixtures=fixtures)
    return reasoning.HttpChatClient(
        endpoint=gen.endpoint,
        model=gen.model,
        api_key=os.environ.get("GENERATOR_API_KEY", ""),
    )


def _build_schema(config: PipelineConfig) -> reasoning.AttributeSchema:
    gen = config.generator
    if gen.attributes:
        return reasoning.AttributeSchema(gen.dataset, tuple(gen.attributes))
    return reasoning.default_schema(gen.dataset)


def _build_templates(config: PipelineConfig) -> reasoning.TemplatePair:
    gen = config.generator
    pair = reasoning.load_default_templates(gen.dataset)
    summarize, generate = pair.summarize, pair.generate
    if gen.summarize_template:
        summarize = reasoning.load_template(gen.summarize_template, "summarize")
    if gen.generate_template:
        generate = reasoning.load_template(gen.generate_template, "generate")
    return reasoning.TemplatePair(summarize=summarize, generate=generate)


def cmd_generate(config: PipelineConfig, manifest: RunManifest) -> dict[str, Path]:
    corpus = _load_ori(config)
    batches = sampling.load_batches(
        _require(config.out("batches.jsonl"), "generate", "sample"), corpus
    )
    if not batches:
        raise StageError("generate", "batches file holds zero rounds")
    client = _build_client(config)
    schema = _build_schema(config)
    templates = _build_templates(config)
    opts = reasoning.GenerationOptions(
        n_samples=config.generator.n_samples,
        retries=config.generator.retries,
        summary_temperature=config.generator.summary_temperature,
        generation_temperature=config.generator.generation_temperature,
    )
    labels = corpus.label_set
    rounds = [(batch, label) for batch in batches for label in labels]

    def run_one(job):
        batch, label = job
        try:
            return reasoning.run_generation_round(
                client, batch, corpus, schema, templates, opts, label=label
            )
        except reasoning.GenerationRoundError as exc:
            log.warning("%s", exc)
            return exc

    with ThreadPoolExecutor(max_workers=config.generator.max_in_flight) as pool:
        results = list(pool.map(run_one, rounds))

    summaries = []
    records = []
    failures = 0
    for result in results:
        if isinstance(result, reasoning.GenerationRoundError):
            failures += 1
            continue
        summary, recs = result
        summaries.append(summary)
        records.extend(recs)
    if not summaries:
        raise StageError("generate", f"all {len(rounds)} generation rounds failed")

    summaries_path = config.out("summaries.jsonl")
    reasoning.save_summaries(summaries, summaries_path)
    generated = Corpus(records=tuple(records), label_set=corpus.label_set)
    generated_path = config.out("generated.jsonl")
    save_corpus(generated, generated_path)
    if isinstance(client, reasoning.HttpChatClient):
        manifest.add_tokens(client.tokens_used)
    manifest.data["rounds"] = {"ok": len(rounds) - failures, "failed": failures}
    return {"summaries": summaries_path, "generated": generated_path}


def _gen_embeddings(config: PipelineConfig, generated: Corpus, stage: str) -> tuple[EmbeddingMatrix, Path | None]:
    if config.gen_embeddings:
        return load_embeddings(config.gen_embeddings, generated), None
    if config.embedder.mode != "hash":
        raise StageError(stage, "embedder mode 'file' requires the 'gen_embeddings' path")
    emb = _embed(config, generated)
    path = config.out("gen_embeddings.bin")
    save_embeddings(emb, path)
    return emb, path


def cmd_align(config: PipelineConfig, manifest: RunManifest) -> dict[str, Path]:
    corpus = _load_ori(config)
    e_ori = _ori_embeddings(config, corpus)
    generated = load_corpus(_require(config.out("generated.jsonl"), "align", "generate"))
    e_gen, gen_emb_path = _gen_embeddings(config, generated, "align")
    projections = alignment.gram_schmidt_projections(
        e_ori.dim, config.alignment.n_projections, config.alignment.seed
    )
    weights = alignment.learn_weights(e_ori, e_gen, projections, config.alignment.optimizer())
    weights_path = config.out("weights.csv")
    alignment.save_weights(weights, generated, weights_path)
    loss_path = config.out("loss.csv")
    alignment.save_loss_trace(weights, loss_path)
    artifacts = {"weights": weights_path, "loss": loss_path}
    if gen_emb_path is not None:
        artifacts["gen_embeddings"] = gen_emb_path
    return artifacts


def cmd_resample(config: PipelineConfig, manifest: RunManifest) -> dict[str, Path]:
    generated = load_corpus(_require(config.out("generated.jsonl"), "resample", "generate"))
    w = alignment.load_weights(_require(config.out("weights.csv"), "resample", "align"), generated)
    resampled = alignment.resample(generated, w, config.resample.zeta, config.resample.seed)
    resampled_path = config.out("resampled.jsonl")
    save_corpus(resampled, resampled_path)
    return {"resampled": resampled_path}


def _coverage_orders(config: PipelineConfig, corpus: Corpus, batches) -> tuple[list[int], list[int], int]:
    gp_order = [batch.anchor for batch in batches]
    rng = np.random.default_rng(config.evaluation.seed)
    random_order = [int(i) for i in rng.permutation(len(corpus))]
    steps = min(config.evaluation.coverage_steps, len(gp_order), len(random_order))
    return gp_order, random_order, steps


def cmd_evaluate(config: PipelineConfig, manifest: RunManifest) -> dict[str, Path]:
    corpus = _load_ori(config)
    e_ori = _ori_embeddings(config, corpus)
    generated = load_corpus(_require(config.out("generated.jsonl"), "evaluate", "generate"))
    e_gen, _ = _gen_embeddings(config, generated, "evaluate")
    resampled = load_corpus(_require(config.out("resampled.jsonl"), "evaluate", "resample"))
    e_res = _embed(config, resampled) if config.embedder.mode == "hash" else None

    ev = config.evaluation
    rows = [
        ("sliced_wasserstein_ori_gen", metrics.sliced_wasserstein(e_ori, e_gen, ev.n_slices, ev.seed)),
    ]
    if e_res is not None:
        rows.append(
            ("sliced_wasserstein_ori_resampled", metrics.sliced_wasserstein(e_ori, e_res, ev.n_slices, ev.seed))
        )
    rows += [
        ("vocabulary_ori", metrics.vocabulary_size(corpus)),
        ("vocabulary_gen", metrics.vocabulary_size(generated)),
        ("vocabulary_resampled", metrics.vocabulary_size(resampled)),
    ]
    metrics_path = config.out("metrics.csv")
    with metrics_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in rows:
            writer.writerow([name, repr(float(value))])

    batches = sampling.load_batches(
        _require(config.out("batches.jsonl"), "evaluate", "sample"), corpus
    )
    coverage_path = config.out("coverage.csv")
    if batches:
        mode = "precomputed" if ev.projection == "file" else "pca"
        points = metrics.project_2d(e_ori, mode=mode, coords_path=ev.coords_path or None)
        gp_order, random_order, steps = _coverage_orders(config, corpus, batches)
        gp = metrics.coverage_curve(points, gp_order, ev.coverage_k, steps)
        rnd = metrics.coverage_curve(points, random_order, ev.coverage_k, steps)
        with coverage_path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "gp", "random"])
            for t in range(steps):
                writer.writerow([t + 1, repr(gp.rates[t]), repr(rnd.rates[t])])
    else:
        coverage_path.write_text("step,gp,random\n", encoding="utf-8")
    return {"metrics": metrics_path, "coverage": coverage_path}


def cmd_sweep(config: PipelineConfig, manifest: RunManifest) -> dict[str, Path]:
    corpus = _load_ori(config)
    e_ori = _ori_embeddings(config, corpus)
    generated = load_corpus(_require(config.out("generated.jsonl"), "sweep", "generate"))
    e_gen, _ = _gen_embeddings(config, generated, "sweep")
    grid = config.sweep
    ref_step = grid.coverage_step

    coverage_cache: dict[tuple[float, int], float] = {}
    points = metrics.project_2d(e_ori)
    for tau, k in itertools.product(grid.taus, grid.ks):
        kernel = sampling.KernelConfig(tau=tau, exponent_form=config.kernel.exponent_form)
        state = sampling.init_tracker(e_ori, kernel)
        batches = sampling.run_sampling(
            state, k=k, sigma=config.sampler.sigma, max_rounds=config.sampler.max_rounds
        )
        if batches:
            order = [batch.anchor for batch in batches]
            steps = min(ref_step, len(order))
            report = metrics.coverage_curve(points, order, k, steps)
            coverage_cache[(tau, k)] = report.rate_at(ref_step)
        else:
            coverage_cache[(tau, k)] = 0.0

    align_cache: dict[int, tuple[float, float]] = {}
    for m in grid.n_projections:
        projections = alignment.gram_schmidt_projections(e_ori.dim, m, config.alignment.seed)
        weights = alignment.learn_weights(e_ori, e_gen, projections, config.alignment.optimizer())
        resampled = alignment.resample(generated, weights, config.resample.zeta, config.resample.seed)
        e_res = _embed(config, resampled)
        sw = metrics.sliced_wasserstein(
            e_ori, e_res, config.evaluation.n_slices, config.evaluation.seed
        )
        align_cache[m] = (weights.loss_trace[-1], sw)

    sweep_path = config.out("sweep.csv")
    with sweep_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "k", "n_projections", "coverage_step", "coverage", "final_loss", "wasserstein"])
        for tau, k, m in itertools.product(grid.taus, grid.ks, grid.n_projections):
            final_loss, sw = align_cache[m]
            writer.writerow(
                [repr(float(tau)), k, m, ref_step, repr(coverage_cache[(tau, k)]), repr(float(final_loss)), repr(float(sw))]
            )
    return {"sweep": sweep_path}


STAGE_FUNCS = {
    "sample": cmd_sample,
    "generate": cmd_generate,
    "align": cmd_align,
    "resample": cmd_resample,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def _run_stage(name: str, config: PipelineConfig, manifest: RunManifest) -> None:
    start = time.perf_counter()
    try:
        artifacts = STAGE_FUNCS[name](config, manifest)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, str(exc)) from exc
    extra = {}
    if name == "generate" and "rounds" in manifest.data:
        extra = {"rounds": manifest.data.pop("rounds")}
    manifest.record_stage(name, artifacts, time.perf_counter() - start, **extra)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdalign",
        description="Curate synthetic text data: GP-guided sampling, attribute-conditioned generation, MMD alignment.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the run config YAML")
    common.add_argument("--seed", type=int, default=None, help="override every stage seed")
    common.add_argument("--mock", action="store_true", help="force the offline mock generator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*PIPELINE_STAGES, "sweep", "pipeline"):
        sub.add_parser(name, parents=[common], help=f"run the {name} stage" if name != "pipeline" else "run all stages")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.mock:
            config = config.with_mock()
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    manifest = RunManifest.open(config)
    stages = PIPELINE_STAGES if args.command == "pipeline" else (args.command,)
    for name in stages:
        try:
            _run_stage(name, config, manifest)
        except StageError as exc:
            print(f"stage {exc.stage} failed: {exc}", file=sys.stderr)
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
