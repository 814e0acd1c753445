"""Patient feedback de-identification, topic classification, and survey association toolkit."""

__version__ = "0.1.0"

from pxtopics.corpus import (
    AnnotationSet,
    Comment,
    LabelVector,
    SurveyRecord,
    Topic,
    canonical_topics,
)
from pxtopics.phi import PhiCategory, RedactionResult, RedactionSpan, detect_all, redact

__all__ = [
    "AnnotationSet",
    "Comment",
    "LabelVector",
    "PhiCategory",
    "RedactionResult",
    "RedactionSpan",
    "SurveyRecord",
    "Topic",
    "canonical_topics",
    "detect_all",
    "redact",
    "__version__",
]
