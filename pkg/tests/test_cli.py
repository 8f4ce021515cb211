"""CLI subcommands run end to end against the bundled curriculum."""

import json

import pytest

from micoach.cli import main
from micoach.curriculum import bundled_curriculum_dir


@pytest.fixture(scope="module")
def script_path():
    return str(bundled_curriculum_dir() / "vaccine_mi.miscript")


def test_validate_ok(script_path, capsys):
    assert main(["validate", script_path]) == 0
    assert "ok:" in capsys.readouterr().out


def test_validate_bad_script(tmp_path, capsys):
    bad = tmp_path / "bad.miscript"
    bad.write_text('script "x" version 1 entry ghost', encoding="utf-8")
    assert main(["validate", str(bad)]) == 1
    assert "ENTRY_MISSING" in capsys.readouterr().out


def test_validate_parse_error(tmp_path, capsys):
    torn = tmp_path / "torn.miscript"
    torn.write_text('script "x" version 1 entry s segment s (kind=pedagogy, agent=c) {', encoding="utf-8")
    assert main(["validate", str(torn)]) == 1
    assert "parse error" in capsys.readouterr().err


def test_simulate_single_run_writes_events(script_path, tmp_path, capsys):
    out = tmp_path / "events.jsonl"
    code = main(["simulate", script_path, "--mode", "roleplay", "--events-out", str(out)])
    assert code == 0
    assert "completed=True mistakes=0" in capsys.readouterr().out
    lines = out.read_text(encoding="utf-8").splitlines()
    assert json.loads(lines[0])["kind"] == "AgentUtterance"


def test_simulate_batch_and_report(script_path, tmp_path, capsys):
    runs = tmp_path / "runs.jsonl"
    report_dir = tmp_path / "figs"
    code = main(
        ["simulate", script_path, "--policy", "random", "--p", "0.3", "--seed", "42",
         "--runs", "25", "--out", str(runs), "--report-dir", str(report_dir)]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "runs=25" in out
    assert len(runs.read_text(encoding="utf-8").splitlines()) == 25
    assert (report_dir / "mistakes_hist.png").exists()
    assert (report_dir / "runs.csv").exists()


def test_report_from_recorded_runs(script_path, tmp_path):
    runs = tmp_path / "runs.jsonl"
    main(["simulate", script_path, "--policy", "random", "--p", "0.5", "--seed", "1",
          "--runs", "10", "--out", str(runs)])
    out_dir = tmp_path / "rendered"
    assert main(["report", "--runs", str(runs), "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "summary.csv").exists()
    assert (out_dir / "mistakes_hist.png").exists()


def test_score_transcript_with_ratings(tmp_path, capsys):
    transcript = tmp_path / "t.json"
    transcript.write_text(
        json.dumps(
            {
                "utterances": [
                    {"speaker": "counselor", "text": "how do you feel?", "code": "question"},
                    {"speaker": "client", "text": "unsure"},
                    {"speaker": "counselor", "text": "you feel unsure", "code": "reflection"},
                ],
                "global_ratings": {"empathy": 4, "partnership": 4},
                "skill_ratings": [4, 4, 4, 3, 3, 4],
            }
        ),
        encoding="utf-8",
    )
    ratings = tmp_path / "r.csv"
    ratings.write_text("3,4\n5,5\n2,3\n4,4\n", encoding="utf-8")
    assert main(["score", "--transcript", str(transcript), "--ratings", str(ratings)]) == 0
    card = json.loads(capsys.readouterr().out)
    assert card["proficient"] is True
    assert card["rq_ratio"] == 1.0
    assert card["counts"] == {"questions": 1, "reflections": 1}
    assert 0 <= card["reliability"]["icc_avg_consistency"] <= 1
    assert "cronbach_alpha" in card["reliability"]


def test_score_writes_file(tmp_path):
    transcript = tmp_path / "t.json"
    transcript.write_text(
        json.dumps(
            {
                "utterances": [],
                "global_ratings": {"empathy": 2, "partnership": 2},
            }
        ),
        encoding="utf-8",
    )
    out = tmp_path / "card.json"
    assert main(["score", "--transcript", str(transcript), "--out", str(out)]) == 0
    card = json.loads(out.read_text(encoding="utf-8"))
    assert card["proficient"] is False
    assert card["rq_ratio"] is None
