"""Static validation of parsed scripts.

Validation never raises: it returns a report whose error list is empty
exactly when the engine can run the script. Entries are sorted by source
location so identical sources always produce identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import (
    ADHERENT,
    END,
    FAIL,
    PEDAGOGY,
    ROLEPLAY,
    UNTAGGED,
    Call,
    End,
    Goto,
    Loc,
    Menu,
    Recap,
    ScriptAST,
    Segment,
    State,
)

ROLEPLAY_OPTION_LIMIT = 2
PEDAGOGY_OPTION_LIMIT = 4


@dataclass(frozen=True)
class ReportEntry:
    code: str
    loc: Loc
    message: str

    @property
    def location(self) -> str:
        return str(self.loc)

    def __str__(self) -> str:
        return f"{self.loc}: {self.code}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[ReportEntry] = field(default_factory=list)
    warnings: list[ReportEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, loc: Loc, message: str) -> None:
        self.errors.append(ReportEntry(code, loc, message))

    def warn(self, code: str, loc: Loc, message: str) -> None:
        self.warnings.append(ReportEntry(code, loc, message))

    def _sort(self) -> None:
        key = lambda e: (e.loc.line, e.loc.col, e.code, e.message)
        self.errors.sort(key=key)
        self.warnings.sort(key=key)

    def render(self) -> str:
        lines = [f"error: {e}" for e in self.errors]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def validate(ast: ScriptAST) -> ValidationReport:
    report = ValidationReport()

    if not ast.has_segment(ast.entry):
        report.error("ENTRY_MISSING", ast.entry_loc, f"entry segment '{ast.entry}' is not defined")

    for seg in ast.segments:
        _check_segment(ast, seg, report)

    _check_call_cycles(ast, report)
    report._sort()
    return report


def _check_segment(ast: ScriptAST, seg: Segment, report: ValidationReport) -> None:
    if not seg.states:
        report.error("EMPTY_SEGMENT", seg.loc, f"segment '{seg.id}' has no states")
        return

    _check_handlers(seg, report)

    for state in seg.states:
        if not state.actions:
            report.error("EMPTY_STATE", state.loc, f"state '{state.id}' has no actions")
        for action in state.actions:
            if isinstance(action, Goto):
                if not seg.has_state(action.target):
                    report.error(
                        "DANGLING_TARGET", action.loc,
                        f"goto target '{action.target}' is not a state of segment '{seg.id}'",
                    )
            elif isinstance(action, Call):
                if not ast.has_segment(action.target):
                    report.error(
                        "DANGLING_TARGET", action.loc,
                        f"call target '{action.target}' is not a segment",
                    )
                if action.onfail is not None and not seg.has_state(action.onfail):
                    report.error(
                        "DANGLING_TARGET", action.loc,
                        f"onfail target '{action.onfail}' is not a state of segment '{seg.id}'",
                    )
            elif isinstance(action, Recap):
                _check_recap(ast, seg, action, report)
            elif isinstance(action, Menu):
                _check_menu(seg, state, action, report)

    _check_reachability(seg, report)


def _check_recap(ast: ScriptAST, seg: Segment, action: Recap, report: ValidationReport) -> None:
    if not ast.has_segment(action.target):
        report.error(
            "DANGLING_TARGET", action.loc, f"recap target '{action.target}' is not a segment"
        )
        return
    target = ast.segment(action.target)
    if target.kind != ROLEPLAY:
        report.error(
            "RECAP_TARGET", action.loc,
            f"recap target '{action.target}' is not a roleplay segment",
        )
    if ast.segment_position(action.target) >= ast.segment_position(seg.id):
        report.error(
            "RECAP_TARGET", action.loc,
            f"recap target '{action.target}' is not defined before segment '{seg.id}'",
        )


def _check_menu(seg: Segment, state: State, menu: Menu, report: ValidationReport) -> None:
    limit = ROLEPLAY_OPTION_LIMIT if seg.kind == ROLEPLAY else PEDAGOGY_OPTION_LIMIT
    if len(menu.options) > limit:
        report.error(
            "OPTION_LIMIT", menu.loc,
            f"{seg.kind} menu has {len(menu.options)} options (limit {limit})",
        )
    if seg.kind == ROLEPLAY:
        adherent = [o for o in menu.options if o.tag == ADHERENT]
        for opt in menu.options:
            if opt.tag == UNTAGGED:
                report.error(
                    "UNTAGGED_OPTION", opt.loc,
                    "roleplay options must be tagged adherent or nonadherent",
                )
        if len(adherent) != 1:
            report.error(
                "ADHERENT_COUNT", menu.loc,
                f"roleplay menu has {len(adherent)} adherent options (exactly 1 required)",
            )
        for opt in adherent:
            if opt.target == FAIL:
                report.error(
                    "ADHERENT_TARGETS_FAIL", opt.loc,
                    "the adherent option must not target !fail",
                )
    for opt in menu.options:
        if opt.target in (FAIL, END):
            if opt.target == FAIL and seg.handler_for(state.id) is None:
                report.error(
                    "NO_FAILURE_HANDLER", opt.loc,
                    f"option targets !fail but segment '{seg.id}' has no applicable failure handler",
                )
        elif not seg.has_state(opt.target):
            report.error(
                "DANGLING_TARGET", opt.loc,
                f"option target '{opt.target}' is not a state of segment '{seg.id}'",
            )


def _check_handlers(seg: Segment, report: ValidationReport) -> None:
    defaults = [h for h in seg.failure_handlers if not h.for_states]
    if len(defaults) > 1:
        for h in defaults[1:]:
            report.error("HANDLER_CONFLICT", h.loc, "segment already has a default failure handler")
    seen: dict[str, Loc] = {}
    for h in seg.failure_handlers:
        for sid in h.for_states:
            if not seg.has_state(sid):
                report.error(
                    "DANGLING_TARGET", h.loc,
                    f"failure handler names unknown state '{sid}'",
                )
            elif sid in seen:
                report.error(
                    "HANDLER_CONFLICT", h.loc,
                    f"state '{sid}' is claimed by more than one failure handler",
                )
            else:
                seen[sid] = h.loc


def _falls_through(state: State) -> bool:
    """A state hands control to the next state in source order when its
    action list can exhaust: it is empty, ends in a plain utterance, or ends
    in a call/recap that returns."""
    if not state.actions:
        return True
    last = state.actions[-1]
    return not isinstance(last, (Menu, Goto, End))


def _check_reachability(seg: Segment, report: ValidationReport) -> None:
    targets: dict[str, set[str]] = {s.id: set() for s in seg.states}
    for i, state in enumerate(seg.states):
        edges = targets[state.id]
        for action in state.actions:
            if isinstance(action, Goto) and seg.has_state(action.target):
                edges.add(action.target)
            elif isinstance(action, Call) and action.onfail and seg.has_state(action.onfail):
                edges.add(action.onfail)
            elif isinstance(action, Menu):
                for opt in action.options:
                    if opt.target not in (FAIL, END) and seg.has_state(opt.target):
                        edges.add(opt.target)
        if _falls_through(state) and i + 1 < len(seg.states):
            edges.add(seg.states[i + 1].id)

    reached = set()
    frontier = [seg.states[0].id]
    while frontier:
        sid = frontier.pop()
        if sid in reached:
            continue
        reached.add(sid)
        frontier.extend(targets[sid])

    for state in seg.states:
        if state.id not in reached:
            report.warn(
                "UNREACHABLE", state.loc,
                f"state '{state.id}' is unreachable from the start of segment '{seg.id}'",
            )


def _check_call_cycles(ast: ScriptAST, report: ValidationReport) -> None:
    calls: dict[str, list[Call]] = {seg.id: [] for seg in ast.segments}
    for seg in ast.segments:
        for state in seg.states:
            for action in state.actions:
                if isinstance(action, Call) and ast.has_segment(action.target):
                    calls[seg.id].append(action)

    WHITE, GREY, BLACK = 0, 1, 2
    color = {seg.id: WHITE for seg in ast.segments}

    def visit(seg_id: str) -> None:
        color[seg_id] = GREY
        for call in calls[seg_id]:
            if color[call.target] == GREY:
                report.error(
                    "CALL_CYCLE", call.loc,
                    f"call to '{call.target}' creates a segment cycle",
                )
            elif color[call.target] == WHITE:
                visit(call.target)
        color[seg_id] = BLACK

    for seg in ast.segments:
        if color[seg.id] == WHITE:
            visit(seg.id)
