"""Dynamic visual prompting: training-free theme-specific image generation.

Pipeline: extract key elements from the prompt, match theme-bank images by
embedding similarity, compose them into a masked grid, inpaint once per row
arrangement, score every candidate, and return the argmax.
"""

from .engine import (
    Backends,
    RunConfig,
    RunResult,
    ScoredCandidate,
    ScoreWeights,
    SessionStore,
    evaluate_protocol,
    evaluate_run,
    generate,
    refine,
    score_candidate,
)
from .layout import GridSpec, default_grid

__version__ = "0.1.0"

__all__ = [
    "Backends",
    "GridSpec",
    "RunConfig",
    "RunResult",
    "ScoreWeights",
    "ScoredCandidate",
    "SessionStore",
    "default_grid",
    "evaluate_protocol",
    "evaluate_run",
    "generate",
    "refine",
    "score_candidate",
    "__version__",
]
