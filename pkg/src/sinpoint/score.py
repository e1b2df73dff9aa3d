"""Detection scoring: distance-gated matching and per-type rate aggregation.

A detection matches a ground-truth point when the types agree and the
Euclidean distance is strictly below ACCEPT_RADIUS pixels.  Matching is
one-to-one, greedy by ascending distance (ties broken by ground-truth order,
then detection order), so one truth cannot absorb several detections.

Rates follow the competition protocol: detection, miss, and false-alarm
counts are all divided by the number of ground-truth points of that type
(the false-alarm rate can therefore exceed 1).  An image is correctly
detected when every ground-truth point is matched and nothing spurious
remains, both types pooled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .labels import ACCEPT_RADIUS, CORE, DELTA, POINT_TYPES, SingularPoint


@dataclass
class MatchResult:
    true_detections: list[tuple[SingularPoint, SingularPoint]]
    missed: list[SingularPoint]
    false_alarms: list[SingularPoint]


@dataclass
class ImageTally:
    n_truth: dict[str, int]
    n_detected: dict[str, int]
    n_missed: dict[str, int]
    n_false: dict[str, int]
    correctly_detected: bool


@dataclass
class TypeRates:
    n_truth: int
    n_detected: int
    n_missed: int
    n_false: int
    detection_rate: float | None = field(init=False)
    miss_rate: float | None = field(init=False)
    false_alarm_rate: float | None = field(init=False)

    def __post_init__(self):
        if self.n_truth:
            self.detection_rate = self.n_detected / self.n_truth
            self.miss_rate = self.n_missed / self.n_truth
            self.false_alarm_rate = self.n_false / self.n_truth
        else:
            # no ground truth of this type anywhere: rates are undefined
            self.detection_rate = None
            self.miss_rate = None
            self.false_alarm_rate = None


@dataclass
class ScoreReport:
    core: TypeRates
    delta: TypeRates
    cd_rate: float
    n_images: int
    n_correct: int


def match_points(detected: list[SingularPoint], truth: list[SingularPoint]) -> MatchResult:
    """Greedy one-to-one matching over (type-equal, distance < 10) candidate pairs."""
    gate = ACCEPT_RADIUS * ACCEPT_RADIUS
    candidates = []
    for ti, t in enumerate(truth):
        for di, d in enumerate(detected):
            if d.ptype != t.ptype:
                continue
            d2 = float(d.x - t.x) ** 2 + float(d.y - t.y) ** 2
            if d2 < gate:
                candidates.append((d2, ti, di))
    candidates.sort()
    used_t: set[int] = set()
    used_d: set[int] = set()
    pairs: list[tuple[SingularPoint, SingularPoint]] = []
    for _, ti, di in candidates:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
        pairs.append((detected[di], truth[ti]))
    missed = [t for ti, t in enumerate(truth) if ti not in used_t]
    false_alarms = [d for di, d in enumerate(detected) if di not in used_d]
    return MatchResult(true_detections=pairs, missed=missed, false_alarms=false_alarms)


def score_image(detected: list[SingularPoint], truth: list[SingularPoint]) -> ImageTally:
    result = match_points(detected, truth)
    n_truth = {p: 0 for p in POINT_TYPES}
    n_detected = {p: 0 for p in POINT_TYPES}
    n_missed = {p: 0 for p in POINT_TYPES}
    n_false = {p: 0 for p in POINT_TYPES}
    for t in truth:
        n_truth[t.ptype] += 1
    for _, t in result.true_detections:
        n_detected[t.ptype] += 1
    for t in result.missed:
        n_missed[t.ptype] += 1
    for d in result.false_alarms:
        n_false[d.ptype] += 1
    return ImageTally(
        n_truth=n_truth,
        n_detected=n_detected,
        n_missed=n_missed,
        n_false=n_false,
        correctly_detected=not result.missed and not result.false_alarms,
    )


def aggregate(tallies: list[ImageTally]) -> ScoreReport:
    if not tallies:
        raise ValueError("aggregate needs at least one scored image")
    rates = {}
    for p in POINT_TYPES:
        rates[p] = TypeRates(
            n_truth=sum(t.n_truth[p] for t in tallies),
            n_detected=sum(t.n_detected[p] for t in tallies),
            n_missed=sum(t.n_missed[p] for t in tallies),
            n_false=sum(t.n_false[p] for t in tallies),
        )
    n_correct = sum(1 for t in tallies if t.correctly_detected)
    return ScoreReport(
        core=rates[CORE],
        delta=rates[DELTA],
        cd_rate=n_correct / len(tallies),
        n_images=len(tallies),
        n_correct=n_correct,
    )


def _pct(rate: float | None) -> str:
    return "n/a" if rate is None else f"{100.0 * rate:.0f}"


def render_table(report: ScoreReport, label: str = "this run") -> str:
    """Aligned text table in the competition layout: CD, then per-type
    detection / miss / false-alarm columns."""
    header1 = (
        f"{'Algorithm':<18}{'CD(%)':>6}  {'Detection rate (%)':^20}"
        f"{'Miss rate (%)':^18}{'False alarm rate (%)':^22}"
    )
    header2 = (
        f"{'':<18}{'':>6}  {'cores':>8}{'deltas':>10}  {'cores':>8}{'deltas':>8}  "
        f"{'cores':>9}{'deltas':>9}"
    )
    row = (
        f"{label:<18}{_pct(report.cd_rate):>6}  "
        f"{_pct(report.core.detection_rate):>8}{_pct(report.delta.detection_rate):>10}  "
        f"{_pct(report.core.miss_rate):>8}{_pct(report.delta.miss_rate):>8}  "
        f"{_pct(report.core.false_alarm_rate):>9}{_pct(report.delta.false_alarm_rate):>9}"
    )
    return "\n".join([header1, header2, row]) + "\n"


def report_to_dict(report: ScoreReport) -> dict:
    """Machine-readable form of the report (documented in FORMATS.md)."""

    def type_dict(r: TypeRates) -> dict:
        return {
            "n_truth": r.n_truth,
            "n_detected": r.n_detected,
            "n_missed": r.n_missed,
            "n_false_alarms": r.n_false,
            "detection_rate": r.detection_rate,
            "miss_rate": r.miss_rate,
            "false_alarm_rate": r.false_alarm_rate,
        }

    return {
        "n_images": report.n_images,
        "n_correctly_detected": report.n_correct,
        "cd_rate": report.cd_rate,
        "core": type_dict(report.core),
        "delta": type_dict(report.delta),
    }
