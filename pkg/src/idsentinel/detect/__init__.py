from .engine import DetectionEngine, RecordFeatures, extract_features
from .evaluate import evaluate
from .events import AnomalyEvent, Entities, Evidence, TriageConflict
from .rules import AnomalyRule, default_rules, dump_rules, load_rules

__all__ = [
    "AnomalyEvent",
    "AnomalyRule",
    "DetectionEngine",
    "Entities",
    "Evidence",
    "RecordFeatures",
    "TriageConflict",
    "default_rules",
    "dump_rules",
    "evaluate",
    "extract_features",
    "load_rules",
]
