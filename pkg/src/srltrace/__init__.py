"""Toolkit for relating think-aloud SRL codes to step-level tutor correctness.

Pipeline stages: ingest raw tutor logs and transcript segments, synchronize
the two clocks, window utterances between consecutive tutor actions, merge
human SRL codes, run the SRL loop state machine to build a modeling feature
table, fit random-intercept logistic models with nested comparisons, and mine
outcome-distinguishing unigrams. A seeded simulator generates full synthetic
bundles with known ground truth so every stage is verifiable end to end.
"""

from srltrace.errors import SrlTraceError

__version__ = "0.1.0"

__all__ = ["SrlTraceError", "__version__"]
