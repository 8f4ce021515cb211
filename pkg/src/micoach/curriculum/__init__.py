"""Bundled six-skill curriculum: loading, manifest cross-checks, and lint.

Beyond generic script validation, a curriculum must present exactly the six
skills in canonical order, pair each lesson with its practice role-play (via
a call with a retry state), and keep each role-play's success path inside
the turn budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..script import (
    Call,
    Loc,
    PEDAGOGY,
    ROLEPLAY,
    ScriptAST,
    ValidationReport,
    adherent_path,
    parse,
    validate,
)

SKILL_ORDER = (
    "rapport",
    "permission",
    "status",
    "open_questions",
    "active_listening",
    "sharing",
)

TURN_BUDGET = (8, 16)  # acceptable adherent-path length per role-play


class CurriculumError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Persona:
    name: str
    role: str


@dataclass(frozen=True)
class SkillEntry:
    id: str
    pedagogy: str
    roleplay: str


@dataclass(frozen=True)
class CurriculumManifest:
    script_path: Path
    skills: tuple[SkillEntry, ...]
    personas: dict[str, Persona]

    def skill_of_segment(self) -> dict[str, str]:
        mapping: dict[str, str] = {}
        for entry in self.skills:
            mapping[entry.pedagogy] = entry.id
            mapping[entry.roleplay] = entry.id
        return mapping


def bundled_curriculum_dir() -> Path:
    """Directory holding the shipped curriculum files."""
    return Path(str(resources.files("micoach.curriculum") / "data"))


def load_curriculum(path: str | Path | None = None) -> tuple[ScriptAST, CurriculumManifest]:
    """Load and cross-check a curriculum directory (or manifest file).

    Defaults to the bundled COVID-19 vaccination curriculum.
    """
    if path is None:
        path = bundled_curriculum_dir()
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CurriculumError("IO", f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CurriculumError("MANIFEST_MISMATCH", f"manifest is not valid JSON: {exc}") from exc

    try:
        script_path = manifest_path.parent / raw["script"]
        skills = tuple(
            SkillEntry(id=s["id"], pedagogy=s["pedagogy"], roleplay=s["roleplay"])
            for s in raw["skills"]
        )
        personas = {
            agent: Persona(name=p["name"], role=p["role"])
            for agent, p in raw["personas"].items()
        }
    except (KeyError, TypeError) as exc:
        raise CurriculumError("MANIFEST_MISMATCH", f"manifest is missing field: {exc}") from exc

    manifest = CurriculumManifest(script_path=script_path, skills=skills, personas=personas)

    try:
        source = script_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CurriculumError("IO", f"cannot read script: {exc}") from exc
    ast = parse(source)
    report = validate(ast)
    if not report.ok:
        raise CurriculumError(
            "VALIDATION", "script failed validation:\n" + report.render()
        )

    _cross_check(ast, manifest)
    return ast, manifest


def _cross_check(ast: ScriptAST, manifest: CurriculumManifest) -> None:
    ids = tuple(entry.id for entry in manifest.skills)
    if ids != SKILL_ORDER:
        raise CurriculumError(
            "MANIFEST_MISMATCH",
            f"expected the six skills {SKILL_ORDER} in order, got {ids}",
        )
    for entry in manifest.skills:
        for seg_id, kind in ((entry.pedagogy, PEDAGOGY), (entry.roleplay, ROLEPLAY)):
            if not ast.has_segment(seg_id):
                raise CurriculumError(
                    "MANIFEST_MISMATCH", f"manifest names missing segment '{seg_id}'"
                )
            seg = ast.segment(seg_id)
            if seg.kind != kind:
                raise CurriculumError(
                    "MANIFEST_MISMATCH",
                    f"segment '{seg_id}' is kind={seg.kind}, manifest expects {kind}",
                )
            if seg.skill != entry.id:
                raise CurriculumError(
                    "MANIFEST_MISMATCH",
                    f"segment '{seg_id}' carries skill={seg.skill}, manifest expects {entry.id}",
                )
    agents = {seg.agent for seg in ast.segments}
    missing = agents - set(manifest.personas)
    if missing:
        raise CurriculumError(
            "MANIFEST_MISMATCH", f"personas missing for agents: {sorted(missing)}"
        )


def curriculum_lint(ast: ScriptAST, manifest: CurriculumManifest) -> ValidationReport:
    """Authoring checks beyond generic validation: ordering, pairing, budgets."""
    report = ValidationReport()

    ids = tuple(entry.id for entry in manifest.skills)
    if ids != SKILL_ORDER:
        report.error(
            "SKILL_ORDER", Loc(0, 0),
            f"skills must be {SKILL_ORDER} in order, got {ids}",
        )

    for entry in manifest.skills:
        if not ast.has_segment(entry.pedagogy) or not ast.has_segment(entry.roleplay):
            report.error("PAIRING", Loc(0, 0), f"skill '{entry.id}' names missing segments")
            continue
        teach = ast.segment(entry.pedagogy)
        paired = False
        for state in teach.states:
            for action in state.actions:
                if isinstance(action, Call) and action.target == entry.roleplay:
                    if action.onfail is not None:
                        paired = True
                    else:
                        report.error(
                            "PAIRING", action.loc,
                            f"call to '{entry.roleplay}' has no onfail retry state",
                        )
        if not paired:
            report.error(
                "PAIRING", teach.loc,
                f"pedagogy segment '{entry.pedagogy}' never calls '{entry.roleplay}' with a retry state",
            )

        roleplay = ast.segment(entry.roleplay)
        turns = len(adherent_path(ast, entry.roleplay))
        lo, hi = TURN_BUDGET
        if not lo <= turns <= hi:
            report.warn(
                "TURN_BUDGET", roleplay.loc,
                f"adherent path of '{entry.roleplay}' is {turns} turns (target {lo}-{hi})",
            )

    for seg, template in ast.templates():
        for part in template.placeholders():
            if part.fallback is None:
                report.warn(
                    "NO_FALLBACK", seg.loc,
                    f"placeholder '{part.path}' in segment '{seg.id}' has no fallback (video mode needs one)",
                )

    report._sort()
    return report
