"""Fidelity and reliability measures over coded transcripts and session logs.

Implements the MITI-derived scores: behavior counts, the reflection-to-
question ratio, the Global Relational score (mean of empathy and
partnership), the proficiency classification (3.5 and 1.0 thresholds,
inclusive), the six-skill composite rating, plus Cronbach's alpha and the
two-way mixed consistency ICC for averaged ratings. All statistics use
double-precision arithmetic with sample (n-1) variances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from statistics import variance

from .events import CHOICE_MADE, TURN_KINDS

COUNSELOR = "counselor"
CLIENT = "client"
CODES = ("question", "reflection", "other")

GLOBAL_RELATIONAL_THRESHOLD = 3.5
RQ_RATIO_THRESHOLD = 1.0

RATING_MIN, RATING_MAX = 1.0, 5.0
SKILL_RATING_COUNT = 6


class ScoringError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Utterance:
    speaker: str
    text: str
    code: str | None = None


@dataclass(frozen=True)
class AnnotatedTranscript:
    utterances: tuple[Utterance, ...]
    empathy: float
    partnership: float
    skill_ratings: tuple[float, ...] | None = None


@dataclass(frozen=True)
class BehaviorCounts:
    questions: int
    reflections: int


@dataclass(frozen=True)
class MitiScorecard:
    counts: BehaviorCounts
    rq_ratio: float | None
    global_relational: float
    proficient: bool
    composite_skill_rating: float | None

    def to_dict(self) -> dict:
        return {
            "counts": {"questions": self.counts.questions, "reflections": self.counts.reflections},
            "rq_ratio": self.rq_ratio,
            "global_relational": self.global_relational,
            "proficient": self.proficient,
            "composite_skill_rating": self.composite_skill_rating,
        }


@dataclass(frozen=True)
class TrainingMetrics:
    duration_seconds: float
    mistakes: int
    turns: int
    per_skill_mistakes: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "duration_seconds": self.duration_seconds,
            "mistakes": self.mistakes,
            "turns": self.turns,
            "per_skill_mistakes": dict(self.per_skill_mistakes),
        }


def _check_rating(value: float, what: str) -> float:
    value = float(value)
    if not RATING_MIN <= value <= RATING_MAX:
        raise ScoringError("OUT_OF_RANGE", f"{what} must be in [1, 5], got {value}")
    return value


def load_transcript(source: str | Path | dict) -> AnnotatedTranscript:
    """Load a coded transcript from JSON (path, text, or parsed dict)."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        raw = json.loads(path.read_text(encoding="utf-8"))

    utterances = []
    for i, u in enumerate(raw.get("utterances", [])):
        speaker = u.get("speaker")
        if speaker not in (COUNSELOR, CLIENT):
            raise ScoringError("BAD_SPEAKER", f"utterance {i}: speaker must be counselor or client")
        code = u.get("code")
        if code is not None:
            if code not in CODES:
                raise ScoringError("BAD_CODE", f"utterance {i}: unknown code '{code}'")
            if speaker != COUNSELOR:
                raise ScoringError("BAD_CODE", f"utterance {i}: codes belong on counselor utterances")
        utterances.append(Utterance(speaker=speaker, text=u.get("text", ""), code=code))

    ratings = raw.get("global_ratings", {})
    empathy = _check_rating(ratings["empathy"], "empathy")
    partnership = _check_rating(ratings["partnership"], "partnership")

    skills = raw.get("skill_ratings")
    if skills is not None:
        if len(skills) != SKILL_RATING_COUNT:
            raise ScoringError("ARITY", f"skill_ratings must have {SKILL_RATING_COUNT} values")
        skills = tuple(_check_rating(v, "skill rating") for v in skills)

    return AnnotatedTranscript(
        utterances=tuple(utterances), empathy=empathy, partnership=partnership,
        skill_ratings=skills,
    )


def count_behaviors(transcript: AnnotatedTranscript) -> BehaviorCounts:
    questions = sum(
        1 for u in transcript.utterances if u.speaker == COUNSELOR and u.code == "question"
    )
    reflections = sum(
        1 for u in transcript.utterances if u.speaker == COUNSELOR and u.code == "reflection"
    )
    return BehaviorCounts(questions=questions, reflections=reflections)


def rq_ratio(counts: BehaviorCounts) -> float | None:
    """Reflections per question; undefined (None) when there are no questions."""
    if counts.questions == 0:
        return None
    return counts.reflections / counts.questions


def global_relational(empathy: float, partnership: float) -> float:
    empathy = _check_rating(empathy, "empathy")
    partnership = _check_rating(partnership, "partnership")
    return (empathy + partnership) / 2.0


def classify_proficiency(global_score: float, ratio: float | None) -> bool:
    """Both thresholds are inclusive minimums; an undefined ratio never passes."""
    return (
        global_score >= GLOBAL_RELATIONAL_THRESHOLD
        and ratio is not None
        and ratio >= RQ_RATIO_THRESHOLD
    )


def composite_skill_rating(ratings) -> float:
    ratings = list(ratings)
    if len(ratings) != SKILL_RATING_COUNT:
        raise ScoringError("ARITY", f"expected {SKILL_RATING_COUNT} skill ratings, got {len(ratings)}")
    values = [_check_rating(r, "skill rating") for r in ratings]
    return sum(values) / len(values)


def score_transcript(transcript: AnnotatedTranscript) -> MitiScorecard:
    counts = count_behaviors(transcript)
    ratio = rq_ratio(counts)
    global_score = global_relational(transcript.empathy, transcript.partnership)
    composite = (
        composite_skill_rating(transcript.skill_ratings)
        if transcript.skill_ratings is not None
        else None
    )
    return MitiScorecard(
        counts=counts,
        rq_ratio=ratio,
        global_relational=global_score,
        proficient=classify_proficiency(global_score, ratio),
        composite_skill_rating=composite,
    )


# --- reliability over ratings matrices ----------------------------------------


def _check_matrix(rows) -> list[list[float]]:
    # Fractions pass through untouched so reliability statistics can run in
    # exact rational arithmetic; everything else is coerced to float.
    matrix = [[c if isinstance(c, Fraction) else float(c) for c in row] for row in rows]
    if len(matrix) < 2:
        raise ScoringError("BAD_MATRIX", "need at least 2 subjects (rows)")
    width = len(matrix[0])
    if width < 2:
        raise ScoringError("BAD_MATRIX", "need at least 2 raters/items (columns)")
    if any(len(row) != width for row in matrix):
        raise ScoringError("BAD_MATRIX", "ratings matrix must be rectangular")
    return matrix


def load_ratings_csv(path: str | Path) -> list[list[float]]:
    """Headerless CSV, one subject per row, one rater/item per column."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append([float(cell) for cell in line.split(",")])
    return _check_matrix(rows)


def cronbach_alpha(rows) -> float:
    """Internal consistency: alpha = k/(k-1) * (1 - sum item variances / variance of subject totals)."""
    matrix = _check_matrix(rows)
    k = len(matrix[0])
    item_vars = [variance([row[j] for row in matrix]) for j in range(k)]
    total_var = variance([sum(row) for row in matrix])
    if total_var == 0:
        raise ScoringError("DEGENERATE", "total-score variance is zero")
    return k / (k - 1) * (1.0 - sum(item_vars) / total_var)


def icc_avg_consistency(rows) -> float:
    """ICC(C,k): two-way mixed, consistency, averaged measures.

    From the two-way ANOVA mean squares with subjects as rows and raters as
    columns: (MS_rows - MS_error) / MS_rows. Constant per-rater offsets do
    not affect it.
    """
    matrix = _check_matrix(rows)
    n = len(matrix)
    k = len(matrix[0])
    grand = sum(sum(row) for row in matrix) / (n * k)
    row_means = [sum(row) / k for row in matrix]
    col_means = [sum(row[j] for row in matrix) / n for j in range(k)]

    ss_rows = k * sum((m - grand) ** 2 for m in row_means)
    ss_cols = n * sum((m - grand) ** 2 for m in col_means)
    ss_total = sum((cell - grand) ** 2 for row in matrix for cell in row)
    ss_error = ss_total - ss_rows - ss_cols

    ms_rows = ss_rows / (n - 1)
    ms_error = ss_error / ((n - 1) * (k - 1))
    if ms_rows == 0:
        raise ScoringError("DEGENERATE", "between-subject mean square is zero")
    return (ms_rows - ms_error) / ms_rows


# --- metrics from session event logs -------------------------------------------


def training_metrics(log, skills: dict[str, str] | None = None) -> TrainingMetrics:
    """Ratio measures from a persisted session log.

    ``log`` is an EventLog (records of (timestamp-ms, event)). ``skills``
    optionally maps segment ids to skill ids for the per-skill breakdown;
    without it, mistakes are keyed by segment id.
    """
    records = list(log.records)
    if not records:
        raise ScoringError("EMPTY_LOG", "session log has no events")
    first_ts = records[0][0]
    last_ts = records[-1][0]
    duration = (last_ts - first_ts) / 1000.0

    mistakes = 0
    turns = 0
    per_skill: dict[str, int] = {}
    for _ts, event in records:
        if event.kind in TURN_KINDS:
            turns += 1
        if event.kind == CHOICE_MADE and event.adherence == "nonadherent":
            mistakes += 1
            key = skills.get(event.segment, event.segment) if skills else event.segment
            per_skill[key] = per_skill.get(key, 0) + 1

    return TrainingMetrics(
        duration_seconds=duration, mistakes=mistakes, turns=turns, per_skill_mistakes=per_skill
    )
