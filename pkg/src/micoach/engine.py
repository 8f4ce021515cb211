"""Session engine: interprets a validated script as a layered state machine.

The engine is a pure transition function. ``start_session`` and ``advance``
take a state, never mutate it, and return a fresh state plus the events the
step produced. There is no clock and no randomness inside; identical inputs
yield identical event streams.

Delivery modes:

* ``roleplay``: the full interactive run, pedagogy and practice, with
  failure/retry semantics on nonadherent picks.
* ``didactic``: interactive teaching only; calls into roleplay segments are
  skipped (completion is synthesized so progress still advances) and recap
  playback is suppressed.
* ``video``: a non-interactive success play-through; menus resolve
  automatically (adherent option, else the first safe one), chosen labels are
  emitted as auto-played utterances, no tailored bindings are spoken, and
  each text event carries a suggested display duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .events import (
    AGENT_UTTERANCE,
    CHOICE_MADE,
    FAILURE_UTTERANCE,
    MENU_SHOWN,
    RECAP_UTTERANCE,
    SEGMENT_COMPLETED,
    SEGMENT_FAILED,
    SESSION_COMPLETED,
    TURN_KINDS,
    TurnEvent,
)
from .script import (
    ADHERENT,
    END,
    FAIL,
    NONADHERENT,
    ROLEPLAY as ROLEPLAY_KIND,
    UNTAGGED,
    Call,
    End,
    Goto,
    Menu,
    MenuOption,
    Recap,
    Say,
    ScriptAST,
    Segment,
    Template,
    Placeholder,
    adherent_path,
    validate,
)

DIDACTIC = "didactic"
ROLEPLAY = "roleplay"
VIDEO = "video"
MODES = (DIDACTIC, ROLEPLAY, VIDEO)

ACTIVE = "active"
AWAITING_CHOICE = "awaiting_choice"
COMPLETED = "completed"

USER_SPEAKER = "user"

# Personal binding paths are never spoken in video mode.
PERSONAL_PREFIX = "user."

# Suggested on-screen reading rate for video pacing: 150 words per minute.
WORDS_PER_SECOND = 2.5

DEFAULT_MAX_STEPS = 10_000


class EngineError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass
class Frame:
    """One level of the segment stack.

    ``onfail`` is the state (in the caller's segment) to resume at if this
    frame's segment fails; it is copied from the call that pushed the frame.
    """

    segment: str
    state: str
    action: int = 0
    onfail: str | None = None

    def copy(self) -> "Frame":
        return Frame(self.segment, self.state, self.action, self.onfail)


@dataclass
class EngineConfig:
    session_id: str = "session"
    max_steps: int = DEFAULT_MAX_STEPS


@dataclass
class SessionState:
    script: ScriptAST = field(repr=False, compare=False)
    session_id: str
    mode: str
    bindings: dict[str, str]
    stack: list[Frame] = field(default_factory=list)
    status: str = ACTIVE
    mistake_count: int = 0
    per_segment_mistakes: dict[str, int] = field(default_factory=dict)
    turn_counter: int = 0
    next_seq: int = 1
    completed_segments: list[str] = field(default_factory=list)
    max_steps: int = field(default=DEFAULT_MAX_STEPS, compare=False)

    def clone(self) -> "SessionState":
        return replace(
            self,
            stack=[f.copy() for f in self.stack],
            bindings=dict(self.bindings),
            per_segment_mistakes=dict(self.per_segment_mistakes),
            completed_segments=list(self.completed_segments),
        )


@dataclass(frozen=True)
class ProgressView:
    skills_total: int
    skills_completed: int
    current_skill: str | None
    mistakes: int
    elapsed_turns: int

    def to_dict(self) -> dict:
        return {
            "skills_total": self.skills_total,
            "skills_completed": self.skills_completed,
            "current_skill": self.current_skill,
            "mistakes": self.mistakes,
            "elapsed_turns": self.elapsed_turns,
        }


# --- template rendering ------------------------------------------------------


def render_template(template: Template, bindings: dict[str, str], mode: str) -> str:
    """Resolve a template's placeholders under the given delivery mode.

    Tailored modes (didactic, roleplay) prefer the binding and fall back to
    the placeholder's fallback text. Video mode prefers the fallback and only
    consults bindings for non-personal paths, so a user's name never appears
    in the passive play-through.
    """
    out: list[str] = []
    for part in template.parts:
        if isinstance(part, Placeholder):
            out.append(_resolve(part, bindings, mode))
        else:
            out.append(part.text)
    return "".join(out)


def _resolve(part: Placeholder, bindings: dict[str, str], mode: str) -> str:
    if mode == VIDEO:
        if part.fallback is not None:
            return part.fallback
        if not part.path.startswith(PERSONAL_PREFIX) and part.path in bindings:
            return bindings[part.path]
        raise EngineError(
            "MISSING_BINDING",
            f"video mode cannot render placeholder '{part.path}' without a fallback",
        )
    if part.path in bindings:
        return bindings[part.path]
    if part.fallback is not None:
        return part.fallback
    raise EngineError(
        "MISSING_BINDING", f"no binding or fallback for placeholder '{part.path}'"
    )


def _check_bindings(ast: ScriptAST, bindings: dict[str, str], mode: str) -> None:
    for seg, template in ast.templates():
        if mode == DIDACTIC and seg.kind == ROLEPLAY_KIND:
            continue  # never rendered in this mode
        for part in template.placeholders():
            if part.fallback is not None:
                continue
            if mode == VIDEO:
                if part.path.startswith(PERSONAL_PREFIX) or part.path not in bindings:
                    raise EngineError(
                        "MISSING_BINDING",
                        f"video mode requires a fallback for placeholder '{part.path}'",
                    )
            elif part.path not in bindings:
                raise EngineError(
                    "MISSING_BINDING",
                    f"no binding or fallback for placeholder '{part.path}'",
                )


# --- event emission ----------------------------------------------------------


def _emit(st: SessionState, events: list[TurnEvent], kind: str, segment: str, **fields) -> None:
    display = None
    text = fields.get("text")
    if st.mode == VIDEO and text:
        display = math.ceil(len(text.split()) / WORDS_PER_SECOND)
    event = TurnEvent(
        seq=st.next_seq, kind=kind, segment=segment, display_seconds=display, **fields
    )
    st.next_seq += 1
    if kind in TURN_KINDS:
        st.turn_counter += 1
    events.append(event)


# --- execution core ----------------------------------------------------------


def _complete_segment(st: SessionState, events: list[TurnEvent]) -> None:
    frame = st.stack.pop()
    if frame.segment not in st.completed_segments:
        st.completed_segments.append(frame.segment)
    _emit(st, events, SEGMENT_COMPLETED, segment=frame.segment)
    if st.stack:
        st.stack[-1].action += 1  # resume the caller after its call
    else:
        _emit(st, events, SESSION_COMPLETED, segment=frame.segment)
        st.status = COMPLETED


def _synthesize_completed(st: SessionState, events: list[TurnEvent], segment_id: str) -> None:
    if segment_id not in st.completed_segments:
        st.completed_segments.append(segment_id)
    _emit(st, events, SEGMENT_COMPLETED, segment=segment_id)


def _fail_segment(st: SessionState, events: list[TurnEvent], state_id: str) -> None:
    frame = st.stack[-1]
    seg = st.script.segment(frame.segment)
    handler = seg.handler_for(state_id)
    if handler is None:  # validation rejects this; guard for unvalidated input
        raise EngineError("NO_FAILURE_HANDLER", f"segment '{seg.id}' cannot fail at '{state_id}'")
    for say in handler.lines:
        _emit(
            st, events, FAILURE_UTTERANCE, segment=seg.id, speaker=seg.agent,
            text=render_template(say.template, st.bindings, st.mode),
        )
    _emit(st, events, SEGMENT_FAILED, segment=seg.id)
    failed = st.stack.pop()
    if st.stack and failed.onfail is not None:
        caller = st.stack[-1]
        caller.state = failed.onfail
        caller.action = 0
    else:
        # No retry state to resume at: redo the segment from the top.
        restart = st.script.segment(failed.segment)
        st.stack.append(Frame(failed.segment, restart.states[0].id, 0, failed.onfail))


def _auto_pick(menu: Menu) -> MenuOption:
    """Success-oriented automatic choice: the adherent option when the menu
    is tagged, otherwise the first option that does not fail."""
    for opt in menu.options:
        if opt.tag == ADHERENT:
            return opt
    for opt in menu.options:
        if opt.target != FAIL:
            return opt
    return menu.options[0]


def _assert_consistent(st: SessionState, events: list[TurnEvent]) -> None:
    """Engine self-checks, enforced after every public transition."""
    assert bool(st.stack) == (st.status != COMPLETED), "stack/status mismatch"
    assert st.mistake_count == sum(st.per_segment_mistakes.values()), "mistake ledger mismatch"
    if events:
        last = events[-1]
        if st.status == AWAITING_CHOICE:
            assert last.kind == MENU_SHOWN, "awaiting choice without a menu on top"
        if st.status == COMPLETED:
            assert last.kind == SESSION_COMPLETED, "completed without a completion event"


def _run(st: SessionState, events: list[TurnEvent]) -> None:
    steps = 0
    while st.stack:
        steps += 1
        if steps > st.max_steps:
            raise EngineError(
                "STEP_BOUND", f"no menu or completion within {st.max_steps} steps"
            )
        frame = st.stack[-1]
        seg = st.script.segment(frame.segment)
        state = seg.state(frame.state)

        if frame.action >= len(state.actions):
            pos = seg.state_position(frame.state)
            if pos + 1 < len(seg.states):
                frame.state = seg.states[pos + 1].id
                frame.action = 0
            else:
                _complete_segment(st, events)
            continue

        action = state.actions[frame.action]

        if isinstance(action, Say):
            _emit(
                st, events, AGENT_UTTERANCE, segment=seg.id, speaker=seg.agent,
                text=render_template(action.template, st.bindings, st.mode),
            )
            frame.action += 1

        elif isinstance(action, Menu):
            if st.mode == VIDEO:
                opt = _auto_pick(action)
                _emit(
                    st, events, RECAP_UTTERANCE, segment=seg.id, speaker=USER_SPEAKER,
                    text=render_template(opt.label, st.bindings, st.mode),
                )
                if opt.target == END:
                    _complete_segment(st, events)
                elif opt.target == FAIL:  # unreachable for validated scripts
                    _fail_segment(st, events, state.id)
                else:
                    frame.state = opt.target
                    frame.action = 0
            else:
                rendered = tuple(
                    (o.id, render_template(o.label, st.bindings, st.mode))
                    for o in action.options
                )
                _emit(st, events, MENU_SHOWN, segment=seg.id, options=rendered)
                st.status = AWAITING_CHOICE
                return

        elif isinstance(action, Goto):
            frame.state = action.target
            frame.action = 0

        elif isinstance(action, Call):
            target = st.script.segment(action.target)
            if st.mode == DIDACTIC and target.kind == ROLEPLAY_KIND:
                _synthesize_completed(st, events, target.id)
                frame.action += 1
            else:
                st.stack.append(Frame(target.id, target.states[0].id, 0, action.onfail))

        elif isinstance(action, Recap):
            if st.mode == ROLEPLAY:
                target = st.script.segment(action.target)
                for speaker, template in adherent_path(st.script, action.target):
                    _emit(
                        st, events, RECAP_UTTERANCE, segment=target.id, speaker=speaker,
                        text=render_template(template, st.bindings, st.mode),
                    )
            frame.action += 1

        elif isinstance(action, End):
            _complete_segment(st, events)

    st.status = COMPLETED


# --- public operations -------------------------------------------------------


def start_session(
    ast: ScriptAST,
    mode: str,
    bindings: dict[str, str] | None = None,
    config: EngineConfig | None = None,
) -> tuple[SessionState, list[TurnEvent]]:
    """Open a session and run it to its first menu (or to completion)."""
    if mode not in MODES:
        raise EngineError("INVALID_MODE", f"unknown mode '{mode}'")
    report = validate(ast)
    if not report.ok:
        raise EngineError(
            "UNVALIDATED_SCRIPT", f"script has {len(report.errors)} validation errors"
        )
    bindings = dict(bindings or {})
    _check_bindings(ast, bindings, mode)
    config = config or EngineConfig()

    entry = ast.segment(ast.entry)
    st = SessionState(
        script=ast,
        session_id=config.session_id,
        mode=mode,
        bindings=bindings,
        stack=[Frame(entry.id, entry.states[0].id, 0, None)],
        max_steps=config.max_steps,
    )
    events: list[TurnEvent] = []
    _run(st, events)
    _assert_consistent(st, events)
    return st, events


def pending_menu(state: SessionState) -> tuple[Segment, Menu] | None:
    """The menu the session is resting on, if it awaits a choice."""
    if state.status != AWAITING_CHOICE or not state.stack:
        return None
    frame = state.stack[-1]
    seg = state.script.segment(frame.segment)
    action = seg.state(frame.state).actions[frame.action]
    if not isinstance(action, Menu):
        return None
    return seg, action


def advance(
    state: SessionState, choice: str | None
) -> tuple[SessionState, list[TurnEvent]]:
    """Apply one trainee choice and run to the next menu or to completion."""
    if state.status == COMPLETED:
        raise EngineError("ENGINE_HALTED", "session already completed")
    if state.status != AWAITING_CHOICE:
        raise EngineError("CHOICE_NOT_EXPECTED", f"session status is '{state.status}'")
    pending = pending_menu(state)
    if pending is None:
        raise EngineError("CHOICE_NOT_EXPECTED", "no menu is awaiting an answer")
    seg, menu = pending
    opt = next((o for o in menu.options if o.id == choice), None)
    if opt is None:
        raise EngineError("UNKNOWN_OPTION", f"option '{choice}' is not in the displayed menu")

    st = state.clone()
    events: list[TurnEvent] = []
    st.status = ACTIVE
    frame = st.stack[-1]
    state_id = frame.state

    label = render_template(opt.label, st.bindings, st.mode)
    _emit(
        st, events, CHOICE_MADE, segment=seg.id, speaker=USER_SPEAKER,
        text=label, options=((opt.id, label),),
        adherence=None if opt.tag == UNTAGGED else opt.tag,
    )
    if opt.tag == NONADHERENT:
        st.mistake_count += 1
        st.per_segment_mistakes[seg.id] = st.per_segment_mistakes.get(seg.id, 0) + 1

    if opt.target == FAIL:
        _fail_segment(st, events, state_id)
    elif opt.target == END:
        _complete_segment(st, events)
    else:
        frame.state = opt.target
        frame.action = 0

    _run(st, events)
    _assert_consistent(st, events)
    return st, events


def session_progress(state: SessionState) -> ProgressView:
    """Skill-level progress derived from completed segments and counters."""
    skills: list[str] = []
    by_skill: dict[str, list[str]] = {}
    for seg in state.script.segments:
        if seg.skill is not None:
            if seg.skill not in by_skill:
                skills.append(seg.skill)
                by_skill[seg.skill] = []
            by_skill[seg.skill].append(seg.id)

    done = set(state.completed_segments)
    completed = [s for s in skills if all(sid in done for sid in by_skill[s])]

    current: str | None = None
    for frame in reversed(state.stack):
        skill = state.script.segment(frame.segment).skill
        if skill is not None:
            current = skill
            break
    if current is None:
        current = next((s for s in skills if s not in completed), None)

    return ProgressView(
        skills_total=len(skills),
        skills_completed=len(completed),
        current_skill=current,
        mistakes=state.mistake_count,
        elapsed_turns=state.turn_counter,
    )
