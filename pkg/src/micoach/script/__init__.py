"""The dialogue scripting language: AST, parser, validator, path tools."""

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
from .parser import ParseError, parse
from .paths import PathError, adherent_path
from .pretty import format_template, pretty
from .validate import ReportEntry, ValidationReport, validate

__all__ = [
    "ADHERENT", "END", "FAIL", "NONADHERENT", "PEDAGOGY", "ROLEPLAY", "UNTAGGED",
    "Call", "End", "FailureHandler", "Goto", "Literal", "Loc", "Menu", "MenuOption",
    "Placeholder", "Recap", "Say", "ScriptAST", "Segment", "State", "Template",
    "ParseError", "parse", "PathError", "adherent_path", "format_template", "pretty",
    "ReportEntry", "ValidationReport", "validate",
]
