"""Simulator: policies, determinism, failure statistics, cross-module checks."""

import pytest

from micoach.curriculum import load_curriculum
from micoach.events import (
    AGENT_UTTERANCE,
    CHOICE_MADE,
    SEGMENT_COMPLETED,
    SEGMENT_FAILED,
    events_to_jsonl,
)
from micoach.scoring import training_metrics
from micoach.script import adherent_path, parse
from micoach.simulate import Policy, SimError, Xoshiro256StarStar, batch_stats, simulate
from micoach.store import EventLog

from genscript import DRILL


@pytest.fixture(scope="module")
def curriculum():
    return load_curriculum()


def tagged_menu_count(ast, segment_id: str) -> int:
    return sum(1 for speaker, _ in adherent_path(ast, segment_id) if speaker == "user")


def test_always_adherent_completes_with_zero_mistakes(curriculum):
    ast, _ = curriculum
    trace = simulate(ast, "roleplay", Policy.always_adherent())
    assert trace.completed and trace.mistakes == 0
    assert not any(e.kind == SEGMENT_FAILED for e in trace.events)


def test_one_nonadherent_pick_in_skill_five(curriculum):
    ast, manifest = curriculum
    # flub the first menu of the fifth skill's role-play
    prior = sum(tagged_menu_count(ast, e.roleplay) for e in manifest.skills[:4])
    trace = simulate(ast, "roleplay", Policy.nonadherent_once(skip_menus=prior))
    assert trace.completed
    assert trace.mistakes == 1

    listening_rp = manifest.skills[4].roleplay
    kinds = [(e.kind, e.segment) for e in trace.events]
    fail_at = kinds.index((SEGMENT_FAILED, listening_rp))
    assert (CHOICE_MADE, listening_rp) in kinds[:fail_at]
    # the failed segment is retried and eventually completes
    assert (SEGMENT_COMPLETED, listening_rp) in kinds[fail_at:]
    failed_choice = next(
        e for e in trace.events
        if e.kind == CHOICE_MADE and e.segment == listening_rp and e.adherence == "nonadherent"
    )
    assert failed_choice.seq < trace.events[fail_at].seq


def test_random_policy_is_deterministic_under_seed(curriculum):
    ast, _ = curriculum
    a = simulate(ast, "roleplay", Policy.random(0.5, seed=42))
    b = simulate(ast, "roleplay", Policy.random(0.5, seed=42))
    assert events_to_jsonl(a.events) == events_to_jsonl(b.events)
    assert (a.mistakes, a.turns, a.completed) == (b.mistakes, b.turns, b.completed)
    c = simulate(ast, "roleplay", Policy.random(0.5, seed=43))
    assert events_to_jsonl(a.events) != events_to_jsonl(c.events)


def test_scripted_policy_exhaustion_marks_incomplete(curriculum):
    ast, _ = curriculum
    trace = simulate(ast, "roleplay", Policy.scripted(["adherent"] * 3))
    assert not trace.completed
    assert sum(1 for e in trace.events if e.kind == CHOICE_MADE) == 3


def test_scripted_policy_with_option_ids():
    ast = parse(DRILL)
    trace = simulate(ast, "roleplay", Policy.scripted(["rp.q.o1"]))
    assert trace.completed and trace.mistakes == 0


def test_always_adherent_turns_match_adherent_path_lengths(curriculum):
    ast, manifest = curriculum
    trace = simulate(ast, "roleplay", Policy.always_adherent())
    for entry in manifest.skills:
        fresh = [
            e for e in trace.events
            if e.segment == entry.roleplay and e.kind in (AGENT_UTTERANCE, CHOICE_MADE)
        ]
        assert len(fresh) == len(adherent_path(ast, entry.roleplay))


def test_simulator_counts_agree_with_training_metrics(curriculum):
    ast, _ = curriculum
    trace = simulate(ast, "roleplay", Policy.nonadherent_once(skip_menus=2))
    log = EventLog(
        session_id="t", records=[(1000 * i, e) for i, e in enumerate(trace.events)]
    )
    metrics = training_metrics(log)
    assert metrics.mistakes == trace.mistakes == 1
    assert metrics.turns == trace.turns


def test_batch_always_adherent(curriculum):
    ast, _ = curriculum
    summary = batch_stats(ast, "roleplay", Policy.always_adherent(), n_runs=20)
    assert summary.mean_mistakes == 0.0
    assert summary.completion_rate == 1.0
    assert summary.std_mistakes == 0.0
    assert [r.seed for r in summary.runs] == list(range(20))


def test_batch_geometric_failure_rate_sanity():
    ast = parse(DRILL)
    p = 0.3
    summary = batch_stats(ast, "roleplay", Policy.random(p, seed=7), n_runs=2000)
    expected = p / (1 - p)
    se = (p ** 0.5 / (1 - p)) / (2000 ** 0.5)
    assert abs(summary.mean_mistakes - expected) < 3 * se
    assert summary.completion_rate == 1.0


def test_step_bound_exceeded_signals_defect():
    ast = parse(DRILL)
    with pytest.raises(SimError) as err:
        simulate(ast, "roleplay", Policy.random(1.0, seed=1), step_bound=50)
    assert err.value.code == "STEP_BOUND_EXCEEDED"


def test_bad_run_count():
    ast = parse(DRILL)
    with pytest.raises(SimError):
        batch_stats(ast, "roleplay", Policy.always_adherent(), n_runs=0)


def test_xoshiro_is_stable_across_calls():
    rng = Xoshiro256StarStar(42)
    first = [rng.next_u64() for _ in range(4)]
    rng2 = Xoshiro256StarStar(42)
    assert [rng2.next_u64() for _ in range(4)] == first
    assert all(0.0 <= Xoshiro256StarStar(9).random() < 1.0 for _ in range(5))


def test_video_simulation_has_no_choices(curriculum):
    ast, _ = curriculum
    trace = simulate(ast, "video", Policy.always_adherent())
    assert trace.completed
    assert not any(e.kind == CHOICE_MADE for e in trace.events)
