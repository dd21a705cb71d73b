from .runner import ScenarioAbort, ScenarioReport, ScenarioRunner, Targets, export_ground_truth
from .scenarios import build_steps, catalog, expected_class

__all__ = [
    "ScenarioAbort",
    "ScenarioReport",
    "ScenarioRunner",
    "Targets",
    "build_steps",
    "catalog",
    "expected_class",
    "export_ground_truth",
]
