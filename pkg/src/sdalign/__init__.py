"""Synthetic-data curation toolkit.

Selects informative demonstrations from a real corpus with a Gaussian-process
uncertainty tracker, generates labeled synthetic samples through two-stage
attribute reasoning against an LLM endpoint, reweights the synthetic set to
match the real distribution by minimizing a projected MMD objective, and
resamples by the learned weights. Ships distribution and coverage metrics for
evaluating the result.
"""

from .corpus import (
    Corpus,
    EmbeddingMatrix,
    HashEmbedder,
    TextRecord,
    corpus_fingerprint,
    embed_corpus,
    hash_embed,
    load_corpus,
    load_embeddings,
    save_corpus,
    save_embeddings,
)
from .sampling import (
    DemonstrationBatch,
    KernelConfig,
    TrackerState,
    init_tracker,
    load_batches,
    rbf_kernel,
    run_sampling,
    save_batches,
    select_demonstrations,
    update_uncertainty,
)
from .reasoning import (
    AttributeSchema,
    AttributeSummary,
    GenerationOptions,
    GeneratorClient,
    GenerationRoundError,
    HttpChatClient,
    MockGeneratorClient,
    PromptTemplate,
    TemplatePair,
    build_generation_prompt,
    build_summary_prompt,
    default_schema,
    load_default_templates,
    parse_attribute_summary,
    parse_generated_samples,
    run_generation_round,
)
from .alignment import (
    AlignmentWeights,
    OptimizerConfig,
    ProjectionSet,
    gram_schmidt_projections,
    learn_weights,
    load_weights,
    mmd_gradient,
    mmd_loss,
    resample,
    save_weights,
)
from .metrics import (
    CoverageReport,
    Point2D,
    convex_hull,
    coverage_curve,
    polygon_area,
    project_2d,
    sliced_wasserstein,
    vocabulary_size,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "EmbeddingMatrix",
    "HashEmbedder",
    "TextRecord",
    "corpus_fingerprint",
    "embed_corpus",
    "hash_embed",
    "load_corpus",
    "load_embeddings",
    "save_corpus",
    "save_embeddings",
    "DemonstrationBatch",
    "KernelConfig",
    "TrackerState",
    "init_tracker",
    "load_batches",
    "rbf_kernel",
    "run_sampling",
    "save_batches",
    "select_demonstrations",
    "update_uncertainty",
    "AttributeSchema",
    "AttributeSummary",
    "GenerationOptions",
    "GeneratorClient",
    "GenerationRoundError",
    "HttpChatClient",
    "MockGeneratorClient",
    "PromptTemplate",
    "TemplatePair",
    "build_generation_prompt",
    "build_summary_prompt",
    "default_schema",
    "load_default_templates",
    "parse_attribute_summary",
    "parse_generated_samples",
    "run_generation_round",
    "AlignmentWeights",
    "OptimizerConfig",
    "ProjectionSet",
    "gram_schmidt_projections",
    "learn_weights",
    "load_weights",
    "mmd_gradient",
    "mmd_loss",
    "resample",
    "save_weights",
    "CoverageReport",
    "Point2D",
    "convex_hull",
    "coverage_curve",
    "polygon_area",
    "project_2d",
    "sliced_wasserstein",
    "vocabulary_size",
    "__version__",
]
