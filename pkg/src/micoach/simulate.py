"""Scripted-user simulation harness.

Drives the engine with deterministic user policies to verify dialogue
graphs behaviorally and to collect mistake/turn statistics. Random policies
use a self-contained xoshiro256** generator seeded via splitmix64, so a
(policy, seed) pair replays identically on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .engine import (
    AWAITING_CHOICE,
    COMPLETED,
    EngineConfig,
    SessionState,
    advance,
    pending_menu,
    start_session,
)
from .events import AGENT_UTTERANCE, CHOICE_MADE, TurnEvent
from .script import ADHERENT, NONADHERENT, ROLEPLAY as ROLEPLAY_KIND, ScriptAST

DEFAULT_STEP_BOUND = 100_000

ALWAYS_ADHERENT = "always_adherent"
NONADHERENT_ONCE = "always_nonadherent_once_then_adherent"
RANDOM = "random"
SCRIPTED = "scripted"

_MASK = (1 << 64) - 1


class SimError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


def _splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        yield z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256StarStar:
    """Reference xoshiro256** with splitmix64 seeding."""

    def __init__(self, seed: int):
        sm = _splitmix64(seed & _MASK)
        self.s = [next(sm), next(sm), next(sm), next(sm)]

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)


@dataclass(frozen=True)
class Policy:
    kind: str
    seed: int = 0
    p_nonadherent: float = 0.0
    skip_menus: int = 0  # for NONADHERENT_ONCE: flub the (skip_menus+1)-th tagged menu
    choices: tuple[str, ...] = ()

    @classmethod
    def always_adherent(cls) -> "Policy":
        return cls(kind=ALWAYS_ADHERENT)

    @classmethod
    def nonadherent_once(cls, skip_menus: int = 0) -> "Policy":
        return cls(kind=NONADHERENT_ONCE, skip_menus=skip_menus)

    @classmethod
    def random(cls, p_nonadherent: float, seed: int) -> "Policy":
        return cls(kind=RANDOM, p_nonadherent=p_nonadherent, seed=seed)

    @classmethod
    def scripted(cls, choices, seed: int = 0) -> "Policy":
        return cls(kind=SCRIPTED, choices=tuple(choices), seed=seed)

    def with_seed(self, seed: int) -> "Policy":
        return replace(self, seed=seed)

    def driver(self) -> "_Driver":
        return _Driver(self)


class _Driver:
    """Per-run policy state: consumes one decision per displayed menu.

    Directives for scripted policies: an option id, or one of the tokens
    ``adherent``, ``nonadherent``, ``first``.
    """

    def __init__(self, policy: Policy):
        self.policy = policy
        self.rng = Xoshiro256StarStar(policy.seed)
        self.tagged_menus_seen = 0
        self.cursor = 0
        self.flubbed = False

    def choose(self, options) -> str | None:
        adherent = next((o for o in options if o.tag == ADHERENT), None)
        nonadherent = next((o for o in options if o.tag == NONADHERENT), None)
        tagged = adherent is not None or nonadherent is not None
        p = self.policy

        if p.kind == ALWAYS_ADHERENT:
            return (adherent or options[0]).id
        if p.kind == NONADHERENT_ONCE:
            if tagged:
                index = self.tagged_menus_seen
                self.tagged_menus_seen += 1
                if index == p.skip_menus and not self.flubbed and nonadherent is not None:
                    self.flubbed = True
                    return nonadherent.id
                return (adherent or options[0]).id
            return options[0].id
        if p.kind == RANDOM:
            if tagged:
                roll = self.rng.random()
                if roll < p.p_nonadherent and nonadherent is not None:
                    return nonadherent.id
                return (adherent or options[0]).id
            return options[0].id
        if p.kind == SCRIPTED:
            if self.cursor >= len(p.choices):
                return None
            directive = p.choices[self.cursor]
            self.cursor += 1
            if directive == "adherent":
                return (adherent or options[0]).id
            if directive == "nonadherent":
                return (nonadherent or adherent or options[0]).id
            if directive == "first":
                return options[0].id
            return directive
        raise SimError("BAD_POLICY", f"unknown policy kind '{p.kind}'")


@dataclass
class SimTrace:
    events: list[TurnEvent]
    mistakes: int
    turns: int
    completed: bool
    per_skill_turns: dict[str, int]
    seed: int = 0
    final_state: SessionState | None = field(default=None, repr=False)


def simulate(
    ast: ScriptAST,
    mode: str,
    policy: Policy,
    bindings: dict[str, str] | None = None,
    step_bound: int = DEFAULT_STEP_BOUND,
) -> SimTrace:
    """Run one full session under a policy; deterministic given the seed."""
    st, events = start_session(
        ast, mode, bindings, EngineConfig(session_id=f"sim-{policy.seed}")
    )
    all_events = list(events)
    driver = policy.driver()
    steps = 0
    while st.status == AWAITING_CHOICE:
        steps += 1
        if steps > step_bound:
            raise SimError(
                "STEP_BOUND_EXCEEDED",
                f"session not complete after {step_bound} choices (script graph defect?)",
            )
        seg, menu = pending_menu(st)
        pick = driver.choose(menu.options)
        if pick is None:  # scripted policy ran out of directives
            break
        st, new_events = advance(st, pick)
        all_events.extend(new_events)

    per_skill: dict[str, int] = {}
    for event in all_events:
        if event.kind in (AGENT_UTTERANCE, CHOICE_MADE):
            skill = ast.segment(event.segment).skill
            if skill is not None:
                per_skill[skill] = per_skill.get(skill, 0) + 1

    return SimTrace(
        events=all_events,
        mistakes=st.mistake_count,
        turns=st.turn_counter,
        completed=st.status == COMPLETED,
        per_skill_turns=per_skill,
        seed=policy.seed,
        final_state=st,
    )


@dataclass(frozen=True)
class RunStat:
    seed: int
    mistakes: int
    turns: int
    completed: bool

    def to_dict(self) -> dict:
        return {
            "seed": self.seed, "mistakes": self.mistakes,
            "turns": self.turns, "completed": self.completed,
        }


@dataclass(frozen=True)
class BatchSummary:
    mode: str
    policy_kind: str
    n_runs: int
    first_seed: int
    mean_mistakes: float
    std_mistakes: float
    mean_turns: float
    std_turns: float
    completion_rate: float
    per_skill_turns_mean: dict[str, float]
    runs: tuple[RunStat, ...]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "policy": self.policy_kind,
            "n_runs": self.n_runs,
            "first_seed": self.first_seed,
            "mean_mistakes": self.mean_mistakes,
            "std_mistakes": self.std_mistakes,
            "mean_turns": self.mean_turns,
            "std_turns": self.std_turns,
            "completion_rate": self.completion_rate,
            "per_skill_turns_mean": dict(self.per_skill_turns_mean),
        }


def _mean_std(values) -> tuple[float, float]:
    values = list(values)
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, var ** 0.5


def batch_stats(
    ast: ScriptAST,
    mode: str,
    policy: Policy,
    n_runs: int,
    bindings: dict[str, str] | None = None,
) -> BatchSummary:
    """Aggregate independent runs seeded seed, seed+1, ..., seed+n-1."""
    if n_runs < 1:
        raise SimError("BAD_RUN_COUNT", "n_runs must be at least 1")
    runs: list[RunStat] = []
    skill_totals: dict[str, int] = {}
    for i in range(n_runs):
        trace = simulate(ast, mode, policy.with_seed(policy.seed + i), bindings)
        runs.append(
            RunStat(
                seed=trace.seed, mistakes=trace.mistakes,
                turns=trace.turns, completed=trace.completed,
            )
        )
        for skill, turns in trace.per_skill_turns.items():
            skill_totals[skill] = skill_totals.get(skill, 0) + turns

    mean_m, std_m = _mean_std(r.mistakes for r in runs)
    mean_t, std_t = _mean_std(r.turns for r in runs)
    return BatchSummary(
        mode=mode,
        policy_kind=policy.kind,
        n_runs=n_runs,
        first_seed=policy.seed,
        mean_mistakes=mean_m,
        std_mistakes=std_m,
        mean_turns=mean_t,
        std_turns=std_t,
        completion_rate=sum(1 for r in runs if r.completed) / n_runs,
        per_skill_turns_mean={k: v / n_runs for k, v in sorted(skill_totals.items())},
        runs=tuple(runs),
    )
