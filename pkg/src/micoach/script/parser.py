"""Lexer and recursive-descent parser for ``.miscript`` sources.

The grammar is brace-structured with ``#`` line comments. Template strings
are lexed into literal/placeholder parts at parse time; placeholders take
the form ``{path}`` or ``{path|fallback}`` with escapes ``\\{ \\} \\" \\\\``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import (
    ADHERENT,
    END,
    FAIL,
    NONADHERENT,
    PEDAGOGY,
    ROLEPLAY,
    UNTAGGED,
    Call,
    End,
    FailureHandler,
    Goto,
    Literal,
    Loc,
    Menu,
    MenuOption,
    Placeholder,
    Recap,
    Say,
    ScriptAST,
    Segment,
    State,
    Template,
)

KEYWORDS = {
    "script", "version", "entry", "segment", "state", "say", "menu", "option",
    "goto", "call", "recap", "end", "failure", "for", "onfail",
    "kind", "agent", "skill", "pedagogy", "roleplay", "adherent", "nonadherent",
}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PATH_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*\Z")
_ESCAPES = {"{": "{", "}": "}", '"': '"', "\\": "\\"}


class ParseError(Exception):
    """Syntax error with the 1-based position of the first offending token."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | string | punct | sentinel | eof
    value: str
    line: int
    col: int
    template: Template | None = None


class _Lexer:
    def __init__(self, source: str):
        # Normalize CRLF so column math is byte-stable across platforms.
        self.text = source.replace("\r\n", "\n")
        self.pos = 0
        self.line = 1
        self.col = 1

    def _advance(self, ch: str) -> None:
        self.pos += 1
        if ch == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1

    def tokens(self) -> list[Token]:
        out = []
        while True:
            tok = self._next()
            out.append(tok)
            if tok.kind == "eof":
                return out

    def _next(self) -> Token:
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch in " \t\n":
                self._advance(ch)
            elif ch == "#":
                while self.pos < len(text) and text[self.pos] != "\n":
                    self._advance(text[self.pos])
            else:
                break
        if self.pos >= len(text):
            return Token("eof", "", self.line, self.col)

        line, col = self.line, self.col
        ch = text[self.pos]

        if ch == '"':
            return self._string(line, col)
        if ch.isdigit():
            start = self.pos
            while self.pos < len(text) and text[self.pos].isdigit():
                self._advance(text[self.pos])
            return Token("int", text[start:self.pos], line, col)
        m = _IDENT_RE.match(text, self.pos)
        if m:
            word = m.group(0)
            for c in word:
                self._advance(c)
            return Token("ident", word, line, col)
        if ch == "!":
            m = _IDENT_RE.match(text, self.pos + 1)
            if m and m.group(0) in ("fail", "end"):
                word = "!" + m.group(0)
                for c in word:
                    self._advance(c)
                return Token("sentinel", word, line, col)
            raise ParseError("expected '!fail' or '!end'", line, col)
        if ch == "-" and text[self.pos:self.pos + 2] == "->":
            self._advance("-")
            self._advance(">")
            return Token("punct", "->", line, col)
        if ch in "{}(),=":
            self._advance(ch)
            return Token("punct", ch, line, col)
        raise ParseError(f"unexpected character {ch!r}", line, col)

    def _string(self, line: int, col: int) -> Token:
        # Decode the quoted string into (char, line, col, escaped) tuples,
        # then build the template structure from the decoded stream.
        self._advance('"')
        chars: list[tuple[str, int, int, bool]] = []
        while True:
            if self.pos >= len(self.text) or self.text[self.pos] == "\n":
                raise ParseError("unterminated string", line, col)
            ch = self.text[self.pos]
            if ch == '"':
                self._advance(ch)
                break
            if ch == "\\":
                at_line, at_col = self.line, self.col
                self._advance(ch)
                if self.pos >= len(self.text) or self.text[self.pos] == "\n":
                    raise ParseError("unterminated string", line, col)
                esc = self.text[self.pos]
                if esc not in _ESCAPES:
                    raise ParseError(f"invalid escape '\\{esc}'", at_line, at_col)
                self._advance(esc)
                chars.append((_ESCAPES[esc], at_line, at_col, True))
            else:
                chars.append((ch, self.line, self.col, False))
                self._advance(ch)
        template = _assemble_template(chars, line, col)
        raw = "".join(c for c, _, _, _ in chars)
        return Token("string", raw, line, col, template=template)


def _assemble_template(
    chars: list[tuple[str, int, int, bool]], str_line: int, str_col: int
) -> Template:
    parts: list[Literal | Placeholder] = []
    buf: list[str] = []
    i = 0
    n = len(chars)

    def flush() -> None:
        if buf:
            parts.append(Literal("".join(buf)))
            buf.clear()

    while i < n:
        ch, line, col, escaped = chars[i]
        if ch == "{" and not escaped:
            flush()
            i += 1
            path_chars: list[str] = []
            fallback_chars: list[str] | None = None
            closed = False
            while i < n:
                c, cl, cc, esc = chars[i]
                if c == "}" and not esc:
                    closed = True
                    i += 1
                    break
                if c == "{" and not esc:
                    raise ParseError("malformed placeholder", cl, cc)
                if c == "|" and not esc and fallback_chars is None:
                    fallback_chars = []
                elif fallback_chars is not None:
                    fallback_chars.append(c)
                else:
                    path_chars.append(c)
                i += 1
            path = "".join(path_chars)
            if not closed or not _PATH_RE.match(path):
                raise ParseError("malformed placeholder", line, col)
            fallback = "".join(fallback_chars) if fallback_chars is not None else None
            parts.append(Placeholder(path, fallback))
        else:
            buf.append(ch)
            i += 1
    flush()
    return Template(parts=tuple(parts))


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect_keyword(self, word: str) -> Token:
        tok = self.next()
        if tok.kind != "ident" or tok.value != word:
            raise ParseError(f"expected keyword '{word}'", tok.line, tok.col)
        return tok

    def expect_punct(self, value: str) -> Token:
        tok = self.next()
        if tok.kind == "eof" and value == "}":
            raise ParseError("unbalanced braces", tok.line, tok.col)
        if tok.kind != "punct" or tok.value != value:
            raise ParseError(f"expected '{value}'", tok.line, tok.col)
        return tok

    def expect_ident(self, what: str) -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise ParseError(f"expected {what}", tok.line, tok.col)
        if tok.value in KEYWORDS:
            raise ParseError(f"reserved keyword '{tok.value}' used as {what}", tok.line, tok.col)
        return tok

    def expect_string(self) -> Token:
        tok = self.next()
        if tok.kind != "string":
            raise ParseError("expected string", tok.line, tok.col)
        return tok

    def expect_int(self) -> Token:
        tok = self.next()
        if tok.kind != "int":
            raise ParseError("expected integer", tok.line, tok.col)
        return tok

    # --- grammar -----------------------------------------------------------

    def script(self) -> ScriptAST:
        self.expect_keyword("script")
        name = self.expect_string()
        self.expect_keyword("version")
        version = self.expect_int()
        self.expect_keyword("entry")
        entry = self.expect_ident("segment id")

        segments: list[Segment] = []
        seen: dict[str, Loc] = {}
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "ident" and tok.value == "segment":
                seg = self.segment()
                if seg.id in seen:
                    raise ParseError(f"duplicate segment id '{seg.id}'", seg.loc.line, seg.loc.col)
                seen[seg.id] = seg.loc
                segments.append(seg)
            else:
                raise ParseError("unknown keyword, expected 'segment'", tok.line, tok.col)
        return ScriptAST(
            name=name.value,
            version=int(version.value),
            entry=entry.value,
            segments=tuple(segments),
            entry_loc=Loc(entry.line, entry.col),
        )

    def segment(self) -> Segment:
        kw = self.expect_keyword("segment")
        ident = self.expect_ident("segment id")
        self.expect_punct("(")
        kind: str | None = None
        agent: str | None = None
        skill: str | None = None
        while True:
            attr = self.next()
            if attr.kind != "ident" or attr.value not in ("kind", "agent", "skill"):
                raise ParseError("expected segment attribute (kind, agent, skill)", attr.line, attr.col)
            self.expect_punct("=")
            if attr.value == "kind":
                val = self.next()
                if val.kind != "ident" or val.value not in (PEDAGOGY, ROLEPLAY):
                    raise ParseError("kind must be 'pedagogy' or 'roleplay'", val.line, val.col)
                if kind is not None:
                    raise ParseError("duplicate attribute 'kind'", attr.line, attr.col)
                kind = val.value
            elif attr.value == "agent":
                if agent is not None:
                    raise ParseError("duplicate attribute 'agent'", attr.line, attr.col)
                agent = self.expect_ident("agent id").value
            else:
                if skill is not None:
                    raise ParseError("duplicate attribute 'skill'", attr.line, attr.col)
                skill = self.expect_ident("skill id").value
            tok = self.next()
            if tok.kind == "punct" and tok.value == ",":
                continue
            if tok.kind == "punct" and tok.value == ")":
                break
            raise ParseError("expected ',' or ')'", tok.line, tok.col)
        if kind is None:
            raise ParseError("segment is missing attribute 'kind'", kw.line, kw.col)
        if agent is None:
            raise ParseError("segment is missing attribute 'agent'", kw.line, kw.col)

        self.expect_punct("{")
        states: list[State] = []
        handlers: list[FailureHandler] = []
        seen: dict[str, Loc] = {}
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == "}":
                self.next()
                break
            if tok.kind == "eof":
                raise ParseError("unbalanced braces", tok.line, tok.col)
            if tok.kind == "ident" and tok.value == "state":
                st = self.state(ident.value)
                if st.id in seen:
                    raise ParseError(f"duplicate state id '{st.id}'", st.loc.line, st.loc.col)
                seen[st.id] = st.loc
                states.append(st)
            elif tok.kind == "ident" and tok.value == "failure":
                handlers.append(self.failure())
            else:
                raise ParseError("unknown keyword, expected 'state' or 'failure'", tok.line, tok.col)
        return Segment(
            id=ident.value,
            kind=kind,
            agent=agent,
            skill=skill,
            states=tuple(states),
            failure_handlers=tuple(handlers),
            loc=Loc(ident.line, ident.col),
        )

    def state(self, segment_id: str) -> State:
        self.expect_keyword("state")
        ident = self.expect_ident("state id")
        self.expect_punct("{")
        actions: list = []
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == "}":
                self.next()
                break
            if tok.kind == "eof":
                raise ParseError("unbalanced braces", tok.line, tok.col)
            if actions and isinstance(actions[-1], (Menu, Goto, Call, Recap, End)):
                raise ParseError("action after control transfer", tok.line, tok.col)
            actions.append(self.action(f"{segment_id}.{ident.value}"))
        return State(id=ident.value, actions=tuple(actions), loc=Loc(ident.line, ident.col))

    def action(self, menu_scope: str):
        tok = self.next()
        if tok.kind != "ident":
            raise ParseError("expected an action", tok.line, tok.col)
        loc = Loc(tok.line, tok.col)
        if tok.value == "say":
            s = self.expect_string()
            return Say(template=s.template, loc=loc)
        if tok.value == "menu":
            return self.menu(loc, menu_scope)
        if tok.value == "goto":
            return Goto(target=self.expect_ident("state id").value, loc=loc)
        if tok.value == "call":
            target = self.expect_ident("segment id").value
            onfail = None
            nxt = self.peek()
            if nxt.kind == "ident" and nxt.value == "onfail":
                self.next()
                onfail = self.expect_ident("state id").value
            return Call(target=target, onfail=onfail, loc=loc)
        if tok.value == "recap":
            return Recap(target=self.expect_ident("segment id").value, loc=loc)
        if tok.value == "end":
            return End(loc=loc)
        raise ParseError(f"unknown keyword '{tok.value}'", tok.line, tok.col)

    def menu(self, loc: Loc, scope: str) -> Menu:
        self.expect_punct("{")
        options: list[MenuOption] = []
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == "}":
                self.next()
                break
            if tok.kind == "eof":
                raise ParseError("unbalanced braces", tok.line, tok.col)
            options.append(self.option(scope, len(options) + 1))
        if not options:
            raise ParseError("menu requires at least one option", loc.line, loc.col)
        return Menu(options=tuple(options), loc=loc)

    def option(self, scope: str, ordinal: int) -> MenuOption:
        kw = self.expect_keyword("option")
        tag = UNTAGGED
        tok = self.peek()
        if tok.kind == "ident" and tok.value in (ADHERENT, NONADHERENT):
            tag = tok.value
            self.next()
        label = self.expect_string()
        self.expect_punct("->")
        tgt = self.next()
        if tgt.kind == "sentinel":
            target = FAIL if tgt.value == "!fail" else END
        elif tgt.kind == "ident" and tgt.value not in KEYWORDS:
            target = tgt.value
        else:
            raise ParseError("expected state id, '!fail' or '!end'", tgt.line, tgt.col)
        return MenuOption(
            id=f"{scope}.o{ordinal}",
            tag=tag,
            label=label.template,
            target=target,
            loc=Loc(kw.line, kw.col),
        )

    def failure(self) -> FailureHandler:
        kw = self.expect_keyword("failure")
        for_states: list[str] = []
        tok = self.peek()
        if tok.kind == "ident" and tok.value == "for":
            self.next()
            for_states.append(self.expect_ident("state id").value)
            while self.peek().kind == "punct" and self.peek().value == ",":
                self.next()
                for_states.append(self.expect_ident("state id").value)
        self.expect_punct("{")
        lines: list[Say] = []
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == "}":
                self.next()
                break
            if tok.kind == "eof":
                raise ParseError("unbalanced braces", tok.line, tok.col)
            say_kw = self.expect_keyword("say")
            s = self.expect_string()
            lines.append(Say(template=s.template, loc=Loc(say_kw.line, say_kw.col)))
        if not lines:
            raise ParseError("failure handler requires at least one say", kw.line, kw.col)
        return FailureHandler(for_states=tuple(for_states), lines=tuple(lines), loc=Loc(kw.line, kw.col))


def parse(source: str) -> ScriptAST:
    """Parse UTF-8 script text into an AST, raising ParseError on bad input."""
    tokens = _Lexer(source).tokens()
    parser = _Parser(tokens)
    ast = parser.script()
    trailing = parser.peek()
    if trailing.kind != "eof":
        raise ParseError("trailing input after script", trailing.line, trailing.col)
    return ast
