"""Per-tree infestation timelines: ordering dated crown classifications and
inferring the transition interval between the last healthy and the first
infested observation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError

LABELS = ("healthy", "infested", "unknown")

STATUS_NEVER = "never-infested"
STATUS_ONSET_KNOWN = "infested-onset-known"
STATUS_ONSET_UNKNOWN = "infested-onset-unknown"
STATUS_INCONSISTENT = "inconsistent"


@dataclass(frozen=True)
class ClassificationResult:
    """Crown classifier output: a distribution over healthy/infested/unknown."""

    probs: dict

    def __post_init__(self):
        total = sum(self.probs.get(k, 0.0) for k in LABELS)
        if abs(total - 1.0) > 1e-6:
            raise DomainError(f"classification probabilities sum to {total}, not 1")
        for k in self.probs:
            if k not in LABELS:
                raise DomainError(f"unexpected classification label {k!r}")

    @property
    def label(self) -> str:
        # Deterministic argmax: probability descending, then label order.
        return max(LABELS, key=lambda k: (self.probs.get(k, 0.0), -LABELS.index(k)))

    @staticmethod
    def certain(label: str) -> "ClassificationResult":
        if label not in LABELS:
            raise DomainError(f"unknown label {label!r}")
        return ClassificationResult({k: (1.0 if k == label else 0.0) for k in LABELS})


@dataclass(frozen=True)
class InfestationTimeline:
    points: tuple[tuple[str, str], ...]  # (date "YYYY-MM", label), date-sorted
    status: str
    transition: tuple[str, str] | None = None  # (last_healthy, first_infested)

    def to_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "status": self.status,
            "transition": list(self.transition) if self.transition else None,
        }


def build_timeline(points: list[tuple[str, "ClassificationResult | str"]]) -> InfestationTimeline:
    """Reduce dated classifications to an infestation timeline.

    Accepts either ClassificationResult values or bare label strings. Points
    labelled unknown are dropped before analysis; the remainder is date-sorted
    and scanned for the healthy -> infested transition.
    """
    if not points:
        raise DomainError("timeline needs at least one observation")
    labelled = []
    for date, cls in points:
        label = cls if isinstance(cls, str) else cls.label
        if label not in LABELS:
            raise DomainError(f"unknown label {label!r}")
        if label != "unknown":
            labelled.append((date, label))
    labelled.sort()

    if not labelled:
        return InfestationTimeline(points=(), status=STATUS_NEVER)

    first_infested = None
    for date, label in labelled:
        if label == "infested":
            first_infested = date
            break

    pts = tuple(labelled)
    if first_infested is None:
        return InfestationTimeline(points=pts, status=STATUS_NEVER)

    last_healthy_before = None
    for date, label in labelled:
        if date >= first_infested:
            break
        if label == "healthy":
            last_healthy_before = date

    healthy_after = any(
        label == "healthy" and date > first_infested for date, label in labelled
    )

    if healthy_after:
        status = STATUS_INCONSISTENT
    elif last_healthy_before is None:
        status = STATUS_ONSET_UNKNOWN
    else:
        status = STATUS_ONSET_KNOWN

    transition = None
    if last_healthy_before is not None:
        transition = (last_healthy_before, first_infested)
    return InfestationTimeline(points=pts, status=status, transition=transition)
