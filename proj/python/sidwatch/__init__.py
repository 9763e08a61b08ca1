"""Python access to the sidwatch core: perceptual hashing, near-duplicate
search, detector metrics and retrieval-assisted score resolution."""

from ._core import (
    NearDupIndex,
    __version__,
    auc,
    balanced_accuracy,
    eer_threshold,
    hamming_similarity,
    manifest_summary,
    phash,
    relative_diff,
    resolve_scores,
)

__all__ = [
    "NearDupIndex",
    "__version__",
    "auc",
    "balanced_accuracy",
    "eer_threshold",
    "hamming_similarity",
    "manifest_summary",
    "phash",
    "relative_diff",
    "resolve_scores",
]
