"""Deterministic scoring of the seven benchmark metrics.

Assessments arrive structured (counts, rubric levels, grades); scoring maps
each to a rational in [0, 1] and aggregation averages them per model and
per metric.  All statistics are computed with `Fraction` and rounded
half-even to three decimals only on emission, so reports are reproducible
bit-for-bit.  The one non-rational step, the log2 in the state-space score,
runs in double precision; its error is orders of magnitude below the
reporting precision.

Not-applicable assessments never contribute anywhere: a missing metric is
recorded as such, not as zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Optional

KINDS = (
    "StateSpace",
    "OutcomePrecision",
    "DirectionAccuracy",
    "CoverageCompleteness",
    "ControlFlow",
    "EdgeCase",
    "DecisionBoundary",
)

OUTCOME_LEVELS = {
    "Exact": Fraction(1),
    "OperatorApprox": Fraction(4, 5),
    "ValueApprox": Fraction(1, 2),
    "Qualitative": Fraction(1, 5),
    "Incorrect": Fraction(0),
}

DIRECTION_LEVELS = {
    "Correct": Fraction(1),
    "CorrectFlawedReasoning": Fraction(3, 4),
    "Partial": Fraction(1, 2),
    "IncorrectSomeFactors": Fraction(1, 4),
    "Incorrect": Fraction(0),
}

CONTROL_GRADES = {
    "Correct": Fraction(1),
    "Partial": Fraction(1, 2),
    "Incorrect": Fraction(0),
}

CONTROL_ASPECTS = ("precedence", "branching", "short_circuit", "override")


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class MetricAssessment:
    model: str
    question: str
    kind: str
    payload: dict
    applicable: bool = True


@dataclass(frozen=True)
class MetricScore:
    kind: str
    value: Optional[Fraction]  # None = not applicable

    @property
    def applicable(self) -> bool:
        return self.value is not None


# ---------------------------------------------------------------------------
# Scoring

def _require_count(payload: dict, name: str, positive: bool = False) -> int:
    if name not in payload:
        raise MetricError(f"field {name!r}: missing")
    v = payload[name]
    if not isinstance(v, int) or isinstance(v, bool):
        raise MetricError(f"field {name!r}: must be an integer")
    if v < 0:
        raise MetricError(f"field {name!r}: must be non-negative")
    if positive and v == 0:
        raise MetricError(f"field {name!r}: must be positive")
    return v


def _optional_count(payload: dict, name: str) -> Optional[int]:
    if payload.get(name) is None:
        return None
    return _require_count(payload, name)


def _ratio(identified: int, truth: int) -> Fraction:
    return min(Fraction(identified, truth), Fraction(1))


def _state_space(payload: dict) -> Fraction:
    truth = _require_count(payload, "truth", positive=True)
    if payload.get("estimate") is None:
        return Fraction(0)
    estimate = _require_count(payload, "estimate")
    diff = abs(estimate - truth)
    if diff == 0:
        return Fraction(1)
    return Fraction(1.0 / (1.0 + math.log2(diff + 1)))


def _outcome_precision(payload: dict) -> Fraction:
    levels = payload.get("levels")
    if not isinstance(levels, list) or not levels:
        raise MetricError("field 'levels': must be a non-empty list")
    total = Fraction(0)
    for lv in levels:
        if lv not in OUTCOME_LEVELS:
            raise MetricError(f"field 'levels': unknown level {lv!r}")
        total += OUTCOME_LEVELS[lv]
    return total / len(levels)


def _direction(payload: dict) -> Fraction:
    level = payload.get("level")
    if level not in DIRECTION_LEVELS:
        raise MetricError(f"field 'level': unknown level {level!r}")
    return DIRECTION_LEVELS[level]


def _coverage(payload: dict) -> Fraction:
    # every applicable method is computed; the best one counts
    truth = _require_count(payload, "truth", positive=True)
    candidates = [Fraction(0)]
    explicit = _optional_count(payload, "explicit_count")
    if explicit is not None:
        candidates.append(_ratio(explicit, truth))
    enumerated = _optional_count(payload, "enumerated_count")
    if enumerated is not None:
        candidates.append(_ratio(enumerated, truth))
    categories = payload.get("categories")
    if categories is not None:
        if not isinstance(categories, dict):
            raise MetricError("field 'categories': must be an object")
        ident = _require_count(categories, "identified")
        total = _require_count(categories, "total", positive=True)
        candidates.append(_ratio(ident, total))
    if payload.get("qualitative_ack"):
        candidates.append(Fraction(1, 4))
    return max(candidates)


def _control_flow(payload: dict) -> Fraction:
    total = Fraction(0)
    for aspect in CONTROL_ASPECTS:
        grade = payload.get(aspect)
        if grade not in CONTROL_GRADES:
            raise MetricError(f"field {aspect!r}: unknown grade {grade!r}")
        total += CONTROL_GRADES[grade]
    return total / 4


def _count_metric(payload: dict) -> Fraction:
    truth = _require_count(payload, "truth", positive=True)
    identified = _require_count(payload, "identified")
    return _ratio(identified, truth)


_SCORERS = {
    "StateSpace": _state_space,
    "OutcomePrecision": _outcome_precision,
    "DirectionAccuracy": _direction,
    "CoverageCompleteness": _coverage,
    "ControlFlow": _control_flow,
    "EdgeCase": _count_metric,
    "DecisionBoundary": _count_metric,
}


def score_assessment(a: MetricAssessment) -> MetricScore:
    if a.kind not in _SCORERS:
        raise MetricError(f"field 'metric': unknown kind {a.kind!r}")
    if not a.applicable:
        return MetricScore(a.kind, None)
    value = _SCORERS[a.kind](a.payload)
    if not (0 <= value <= 1):
        raise MetricError(f"{a.kind}: score {value} out of range")
    return MetricScore(a.kind, value)


# ---------------------------------------------------------------------------
# Tables and aggregation

@dataclass
class ScoreRow:
    model: str
    question: str
    scores: dict[str, Optional[Fraction]] = field(default_factory=dict)


@dataclass
class ScoreTable:
    rows: list[ScoreRow] = field(default_factory=list)

    def row(self, model: str, question: str) -> ScoreRow:
        for r in self.rows:
            if r.model == model and r.question == question:
                return r
        r = ScoreRow(model, question)
        self.rows.append(r)
        return r


def build_table(assessments: list[MetricAssessment]) -> ScoreTable:
    table = ScoreTable()
    for a in assessments:
        row = table.row(a.model, a.question)
        if a.kind in row.scores:
            raise MetricError(
                f"duplicate {a.kind} assessment for ({a.model}, {a.question})")
        row.scores[a.kind] = score_assessment(a).value
    return table


def _mean(values: list[Fraction]) -> Fraction:
    return sum(values, Fraction(0)) / len(values)


def _median(values: list[Fraction]) -> Fraction:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def round3(x: Fraction) -> str:
    """Half-even decimal rounding to three places, in integer arithmetic."""
    if x < 0:
        raise MetricError(f"negative score {x}")
    q, r = divmod(x.numerator * 1000, x.denominator)
    if 2 * r > x.denominator or (2 * r == x.denominator and q % 2 == 1):
        q += 1
    return f"{q // 1000}.{q % 1000:03d}"


@dataclass
class Report:
    models: dict[str, dict]  # model -> {overall: Fraction, metrics: {kind: Fraction|None}}
    metrics: dict[str, dict]  # kind -> {mean: Fraction, median: Fraction}
    row_count: int

    def to_json(self) -> dict:
        return {
            "schema": "regionforge.report/1",
            "rows": self.row_count,
            "models": {
                m: {
                    "overall": round3(info["overall"]),
                    "metrics": {
                        k: (None if v is None else round3(v))
                        for k, v in info["metrics"].items()
                    },
                }
                for m, info in self.models.items()
            },
            "metrics": {
                k: {"mean": round3(st["mean"]), "median": round3(st["median"])}
                for k, st in self.metrics.items()
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def to_csv(self) -> str:
        kinds = [k for k in KINDS if k in self.metrics]
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["model", "overall"] + kinds)
        for m in sorted(self.models):
            info = self.models[m]
            row = [m, round3(info["overall"])]
            for k in kinds:
                v = info["metrics"].get(k)
                row.append("" if v is None else round3(v))
            w.writerow(row)
        return out.getvalue()


def aggregate_scores(table: ScoreTable) -> Report:
    if not table.rows:
        raise MetricError("empty score table")
    models: dict[str, dict] = {}
    by_model: dict[str, dict[str, list[Fraction]]] = {}
    by_metric: dict[str, list[Fraction]] = {}
    for row in table.rows:
        per = by_model.setdefault(row.model, {})
        for kind, value in row.scores.items():
            if value is None:
                continue
            per.setdefault(kind, []).append(value)
            by_metric.setdefault(kind, []).append(value)
    for model, per in by_model.items():
        metric_means = {k: _mean(vs) for k, vs in per.items()}
        if not metric_means:
            raise MetricError(f"model {model!r} has no applicable scores")
        overall = _mean(list(metric_means.values()))
        full = {k: metric_means.get(k) for k in KINDS if k in by_metric}
        models[model] = {"overall": overall, "metrics": full}
    metrics = {
        k: {"mean": _mean(vs), "median": _median(vs)}
        for k, vs in by_metric.items()
    }
    return Report(models=models, metrics=metrics, row_count=len(table.rows))


# ---------------------------------------------------------------------------
# Loading

def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise MetricError(f"{path}: malformed JSON at line {e.lineno}: {e.msg}")
    except OSError as e:
        raise MetricError(f"{path}: {e.strerror}")


def _check_rows(doc: dict, path) -> list:
    rows = doc.get("rows")
    if not isinstance(rows, list):
        raise MetricError(f"{path}: 'rows' must be an array")
    return rows


def load_assessments(path) -> list[MetricAssessment]:
    doc = _load_json(path)
    if doc.get("schema") != "regionforge.assessments/1":
        raise MetricError(f"{path}: expected schema regionforge.assessments/1")
    out = []
    for i, row in enumerate(_check_rows(doc, path)):
        where = f"{path}: row {i}"
        if not isinstance(row, dict):
            raise MetricError(f"{where}: must be an object")
        try:
            model = row["model"]
            question = row["question"]
            kind = row["metric"]
        except KeyError as e:
            raise MetricError(f"{where}: field {e.args[0]!r}: missing")
        if kind not in KINDS:
            raise MetricError(f"{where}: field 'metric': unknown kind {kind!r}")
        applicable = bool(row.get("applicable", True))
        payload = row.get("payload") or {}
        if not isinstance(payload, dict):
            raise MetricError(f"{where}: field 'payload': must be an object")
        a = MetricAssessment(model, question, kind, payload, applicable)
        try:
            score_assessment(a)  # validate eagerly so errors carry the row
        except MetricError as e:
            raise MetricError(f"{where}: {e}")
        out.append(a)
    return out


def _as_fraction(v, where: str) -> Fraction:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise MetricError(f"{where}: must be a number")
    try:
        f = Fraction(Decimal(str(v)))
    except Exception:
        raise MetricError(f"{where}: must be a number")
    if not (0 <= f <= 1):
        raise MetricError(f"{where}: must be within [0, 1]")
    return f


def load_scores(path) -> ScoreTable:
    doc = _load_json(path)
    if doc.get("schema") != "regionforge.scores/1":
        raise MetricError(f"{path}: expected schema regionforge.scores/1")
    table = ScoreTable()
    for i, row in enumerate(_check_rows(doc, path)):
        where = f"{path}: row {i}"
        if not isinstance(row, dict):
            raise MetricError(f"{where}: must be an object")
        try:
            model = row["model"]
            question = row["question"]
            scores = row["scores"]
        except KeyError as e:
            raise MetricError(f"{where}: field {e.args[0]!r}: missing")
        if not isinstance(scores, dict):
            raise MetricError(f"{where}: field 'scores': must be an object")
        target = table.row(model, question)
        for kind, value in scores.items():
            if kind not in KINDS:
                raise MetricError(f"{where}: unknown metric {kind!r}")
            if kind in target.scores:
                raise MetricError(
                    f"{where}: duplicate {kind} for ({model}, {question})")
            if value is None:
                target.scores[kind] = None
            else:
                target.scores[kind] = _as_fraction(value, f"{where}: {kind}")
    return table


def load_table(path) -> ScoreTable:
    """Accept either raw assessments or an already-scored table."""
    doc = _load_json(path)
    schema = doc.get("schema")
    if schema == "regionforge.assessments/1":
        return build_table(load_assessments(path))
    if schema == "regionforge.scores/1":
        return load_scores(path)
    raise MetricError(f"{path}: unrecognized schema {schema!r}")
