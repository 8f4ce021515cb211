"""Success-path extraction for roleplay segments.

The adherent path is the unique utterance sequence obtained by always
choosing the adherent menu option; it backs recap playback, the passive
video rendering, and the authoring turn-budget checks.
"""

from __future__ import annotations

from .ast import ADHERENT, END, FAIL, ROLEPLAY, End, Goto, Menu, Say, ScriptAST, Template

# Speaker tag for trainee-side entries in a path (labels the trainee picks).
USER_SPEAKER = "user"

DEFAULT_STEP_BOUND = 10_000


class PathError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def adherent_path(
    ast: ScriptAST, segment_id: str, step_bound: int = DEFAULT_STEP_BOUND
) -> list[tuple[str, Template]]:
    """Walk a roleplay segment always picking the adherent option.

    Returns (speaker, template) pairs: the segment agent's lines and the
    trainee's chosen labels, in play order. Nested call/recap content is the
    target segment's own material and is not part of this segment's path.
    """
    if not ast.has_segment(segment_id):
        raise PathError("UNKNOWN_SEGMENT", f"no segment '{segment_id}'")
    seg = ast.segment(segment_id)
    if seg.kind != ROLEPLAY:
        raise PathError("NOT_ROLEPLAY", f"segment '{segment_id}' is {seg.kind}, not roleplay")

    path: list[tuple[str, Template]] = []
    state = seg.states[0]
    index = 0
    steps = 0
    while True:
        steps += 1
        if steps > step_bound:
            raise PathError(
                "PATH_DIVERGES",
                f"adherent path of '{segment_id}' did not reach END within {step_bound} steps",
            )
        if index >= len(state.actions):
            pos = seg.state_position(state.id)
            if pos + 1 < len(seg.states):
                state = seg.states[pos + 1]
                index = 0
                continue
            return path
        action = state.actions[index]
        if isinstance(action, Say):
            path.append((seg.agent, action.template))
            index += 1
        elif isinstance(action, Menu):
            chosen = next(o for o in action.options if o.tag == ADHERENT)
            path.append((USER_SPEAKER, chosen.label))
            if chosen.target == END:
                return path
            if chosen.target == FAIL:
                raise PathError(
                    "PATH_DIVERGES",
                    f"adherent option in '{segment_id}' targets !fail",
                )
            state = seg.state(chosen.target)
            index = 0
        elif isinstance(action, Goto):
            state = seg.state(action.target)
            index = 0
        elif isinstance(action, End):
            return path
        else:
            # Call/Recap return control without contributing to this path.
            index += 1
