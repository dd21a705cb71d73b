"""Precision/recall of emitted events against scenario ground truth.

An event is a true positive when its class matches a label and at least one
evidence line falls inside that label's log span. A label is covered when
some same-class event overlaps it. False positives keep a confusion listing
of whatever labeled spans they do overlap, so window-boundary spillover is
explainable.
"""

from __future__ import annotations

BENIGN = "benign"


def _overlaps(offsets: list[int], start: int, end: int) -> bool:
    return any(start <= off < end for off in offsets)


def _event_fields(event) -> tuple[str, list[int], int]:
    if isinstance(event, dict):
        return event["attack_class"], [e[0] for e in event["evidence"]], event["event_id"]
    return event.attack_class, event.evidence_offsets(), event.event_id


def evaluate(labels: list[dict], events: list) -> dict:
    """labels: rows as exported by the scenario runner (attack_class,
    start_offset, end_offset, ...); events: AnomalyEvents or their JSON."""
    attack_labels = [l for l in labels if l["attack_class"] != BENIGN]
    classes = sorted(
        {l["attack_class"] for l in attack_labels} | {_event_fields(e)[0] for e in events}
    )

    per_class: dict[str, dict] = {}
    false_positives: list[dict] = []
    confusion: list[dict] = []

    for cls in classes:
        cls_events = [e for e in events if _event_fields(e)[0] == cls]
        cls_labels = [l for l in attack_labels if l["attack_class"] == cls]

        tp = 0
        for event in cls_events:
            _, offsets, event_id = _event_fields(event)
            if any(_overlaps(offsets, l["start_offset"], l["end_offset"]) for l in cls_labels):
                tp += 1
            else:
                overlapping = sorted(
                    {
                        l["attack_class"]
                        for l in labels
                        if _overlaps(offsets, l["start_offset"], l["end_offset"])
                    }
                )
                false_positives.append(
                    {"event_id": event_id, "attack_class": cls, "overlapping_labels": overlapping}
                )
                for other in overlapping:
                    if other != cls:
                        confusion.append({"event_class": cls, "label_class": other})

        covered = sum(
            1
            for l in cls_labels
            if any(
                _overlaps(_event_fields(e)[1], l["start_offset"], l["end_offset"])
                for e in cls_events
            )
        )

        per_class[cls] = {
            "events": len(cls_events),
            "labels": len(cls_labels),
            "true_positives": tp,
            "false_positives": len(cls_events) - tp,
            "labels_covered": covered,
            "precision": tp / len(cls_events) if cls_events else 1.0,
            "recall": covered / len(cls_labels) if cls_labels else 1.0,
        }

    return {
        "per_class": per_class,
        "events_total": len(events),
        "labels_total": len(attack_labels),
        "false_positives": false_positives,
        "confusion": confusion,
    }


def format_report(result: dict) -> str:
    lines = [f"{'class':<22}{'events':>7}{'labels':>7}{'prec':>8}{'recall':>8}"]
    for cls, row in sorted(result["per_class"].items()):
        lines.append(
            f"{cls:<22}{row['events']:>7}{row['labels']:>7}{row['precision']:>8.2f}{row['recall']:>8.2f}"
        )
    lines.append(
        f"total events={result['events_total']} labels={result['labels_total']} "
        f"false_positives={len(result['false_positives'])}"
    )
    return "\n".join(lines)
