"""AST for the dialogue scripting language.

A script is a flat list of discourse segments, each a small state machine.
States hold an ordered action list; menus branch on the trainee's choice.
All nodes are immutable; source locations are carried for diagnostics but
excluded from structural equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# Sentinel transition targets (menu options only).
FAIL = "!fail"
END = "!end"

PEDAGOGY = "pedagogy"
ROLEPLAY = "roleplay"

ADHERENT = "adherent"
NONADHERENT = "nonadherent"
UNTAGGED = "untagged"


@dataclass(frozen=True)
class Loc:
    """1-based source position."""

    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


@dataclass(frozen=True)
class Literal:
    text: str


@dataclass(frozen=True)
class Placeholder:
    path: str
    fallback: str | None = None


@dataclass(frozen=True)
class Template:
    """A say/option string lexed into literal and placeholder parts."""

    parts: tuple[Literal | Placeholder, ...]

    def placeholders(self) -> tuple[Placeholder, ...]:
        return tuple(p for p in self.parts if isinstance(p, Placeholder))

    @classmethod
    def of(cls, text: str) -> "Template":
        return cls(parts=(Literal(text),) if text else ())


@dataclass(frozen=True)
class Say:
    template: Template
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class MenuOption:
    id: str
    tag: str  # ADHERENT | NONADHERENT | UNTAGGED
    label: Template
    target: str  # state id, FAIL, or END
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class Menu:
    options: tuple[MenuOption, ...]
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class Goto:
    target: str
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class Call:
    target: str
    onfail: str | None
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class Recap:
    target: str
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class End:
    loc: Loc = field(compare=False)


Action = Say | Menu | Goto | Call | Recap | End

# Actions that end a state's action list; nothing may follow them.
TERMINAL_ACTIONS = (Menu, Goto, Call, Recap, End)


@dataclass(frozen=True)
class State:
    id: str
    actions: tuple[Action, ...]
    loc: Loc = field(compare=False)

    def menu(self) -> Menu | None:
        for a in self.actions:
            if isinstance(a, Menu):
                return a
        return None


@dataclass(frozen=True)
class FailureHandler:
    """Lines the role-play agent speaks when the trainee picks a FAIL option.

    An empty ``for_states`` marks the segment's default handler.
    """

    for_states: tuple[str, ...]
    lines: tuple[Say, ...]
    loc: Loc = field(compare=False)


@dataclass(frozen=True)
class Segment:
    id: str
    kind: str  # PEDAGOGY | ROLEPLAY
    agent: str
    skill: str | None
    states: tuple[State, ...]
    failure_handlers: tuple[FailureHandler, ...]
    loc: Loc = field(compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_state_index", {s.id: i for i, s in enumerate(self.states)})

    def state(self, state_id: str) -> State:
        return self.states[self._state_index[state_id]]

    def has_state(self, state_id: str) -> bool:
        return state_id in self._state_index

    def state_position(self, state_id: str) -> int:
        return self._state_index[state_id]

    def handler_for(self, state_id: str) -> FailureHandler | None:
        """Most specific applicable handler: named-state match beats default."""
        default = None
        for h in self.failure_handlers:
            if state_id in h.for_states:
                return h
            if not h.for_states:
                default = h
        return default


@dataclass(frozen=True)
class ScriptAST:
    name: str
    version: int
    entry: str
    segments: tuple[Segment, ...]
    entry_loc: Loc = field(compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_seg_index", {s.id: i for i, s in enumerate(self.segments)})

    def segment(self, segment_id: str) -> Segment:
        return self.segments[self._seg_index[segment_id]]

    def has_segment(self, segment_id: str) -> bool:
        return segment_id in self._seg_index

    def segment_position(self, segment_id: str) -> int:
        return self._seg_index[segment_id]

    def templates(self):
        """Yield (segment, template) for every template in the script."""
        for seg in self.segments:
            for state in seg.states:
                for action in state.actions:
                    if isinstance(action, Say):
                        yield seg, action.template
                    elif isinstance(action, Menu):
                        for opt in action.options:
                            yield seg, opt.label
            for handler in seg.failure_handlers:
                for say in handler.lines:
                    yield seg, say.template
