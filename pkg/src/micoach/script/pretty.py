"""Canonical re-serialization of an AST back to script source.

Re-parsing pretty-printed output reproduces the AST exactly; tests rely on
this round trip.
"""

from __future__ import annotations

from .ast import (
    END,
    FAIL,
    UNTAGGED,
    Call,
    End,
    Goto,
    Literal,
    Menu,
    Placeholder,
    Recap,
    Say,
    ScriptAST,
    Segment,
    State,
    Template,
)

_ESCAPE = {"\\": "\\\\", '"': '\\"', "{": "\\{", "}": "\\}"}


def _escape(text: str) -> str:
    return "".join(_ESCAPE.get(ch, ch) for ch in text)


def format_template(template: Template) -> str:
    out = []
    for part in template.parts:
        if isinstance(part, Literal):
            out.append(_escape(part.text))
        elif isinstance(part, Placeholder):
            if part.fallback is None:
                out.append("{" + part.path + "}")
            else:
                out.append("{" + part.path + "|" + _escape(part.fallback) + "}")
    return '"' + "".join(out) + '"'


def _target(target: str) -> str:
    return target  # FAIL/END sentinels already carry their source spelling


def pretty(ast: ScriptAST) -> str:
    lines: list[str] = [f'script "{_escape(ast.name)}" version {ast.version} entry {ast.entry}', ""]
    for seg in ast.segments:
        lines.extend(_segment(seg))
        lines.append("")
    return "\n".join(lines)


def _segment(seg: Segment) -> list[str]:
    attrs = [f"kind={seg.kind}", f"agent={seg.agent}"]
    if seg.skill is not None:
        attrs.append(f"skill={seg.skill}")
    lines = [f"segment {seg.id} ({', '.join(attrs)}) {{"]
    for state in seg.states:
        lines.extend("  " + l for l in _state(state))
    for handler in seg.failure_handlers:
        head = "failure"
        if handler.for_states:
            head += " for " + ", ".join(handler.for_states)
        lines.append(f"  {head} {{")
        for say in handler.lines:
            lines.append(f"    say {format_template(say.template)}")
        lines.append("  }")
    lines.append("}")
    return lines


def _state(state: State) -> list[str]:
    lines = [f"state {state.id} {{"]
    for action in state.actions:
        if isinstance(action, Say):
            lines.append(f"  say {format_template(action.template)}")
        elif isinstance(action, Menu):
            lines.append("  menu {")
            for opt in action.options:
                tag = "" if opt.tag == UNTAGGED else opt.tag + " "
                lines.append(f"    option {tag}{format_template(opt.label)} -> {_target(opt.target)}")
            lines.append("  }")
        elif isinstance(action, Goto):
            lines.append(f"  goto {action.target}")
        elif isinstance(action, Call):
            suffix = f" onfail {action.onfail}" if action.onfail else ""
            lines.append(f"  call {action.target}{suffix}")
        elif isinstance(action, Recap):
            lines.append(f"  recap {action.target}")
        elif isinstance(action, End):
            lines.append("  end")
    lines.append("}")
    return lines
