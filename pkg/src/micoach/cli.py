"""Command line interface: validate, simulate, score, report, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .curriculum import bundled_curriculum_dir, curriculum_lint, load_curriculum
from .script import ParseError, parse, validate
from .simulate import Policy, batch_stats, simulate


def _load_script(path: str):
    source = Path(path).read_text(encoding="utf-8")
    return parse(source)


def cmd_validate(args) -> int:
    try:
        ast = _load_script(args.script)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    report = validate(ast)
    if report.errors or report.warnings:
        print(report.render())
    if report.ok and args.lint:
        _ast, manifest = load_curriculum(Path(args.script).parent)
        lint = curriculum_lint(ast, manifest)
        if lint.errors or lint.warnings:
            print(lint.render())
        if not lint.ok:
            return 1
    if report.ok:
        print(f"ok: {len(ast.segments)} segments")
        return 0
    return 1


def _build_policy(args) -> Policy:
    if args.policy == "adherent":
        return Policy.always_adherent()
    if args.policy == "nonadherent-once":
        return Policy.nonadherent_once(skip_menus=args.skip_menus)
    if args.policy == "random":
        return Policy.random(p_nonadherent=args.p, seed=args.seed)
    if args.policy == "scripted":
        choices = [c for c in (args.choices or "").split(",") if c]
        return Policy.scripted(choices, seed=args.seed)
    raise SystemExit(f"unknown policy {args.policy}")


def cmd_simulate(args) -> int:
    ast = _load_script(args.script)
    policy = _build_policy(args)
    if args.runs == 1:
        trace = simulate(ast, args.mode, policy)
        print(
            f"completed={trace.completed} mistakes={trace.mistakes} turns={trace.turns}"
        )
        if args.events_out:
            from .events import events_to_jsonl

            Path(args.events_out).write_text(events_to_jsonl(trace.events), encoding="utf-8")
            print(f"wrote {len(trace.events)} events to {args.events_out}")
        return 0

    summary = batch_stats(ast, args.mode, policy, args.runs)
    print(
        f"runs={summary.n_runs} mean_mistakes={summary.mean_mistakes:.4f} "
        f"(sd {summary.std_mistakes:.4f}) mean_turns={summary.mean_turns:.2f} "
        f"completion={summary.completion_rate:.1%}"
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for run in summary.runs:
                fh.write(json.dumps(run.to_dict(), sort_keys=True) + "\n")
        print(f"wrote per-run stats to {args.out}")
    if args.report_dir:
        from .report import write_batch_report

        paths = write_batch_report(summary, args.report_dir)
        for p in paths:
            print(f"wrote {p}")
    return 0


def cmd_score(args) -> int:
    from .scoring import load_ratings_csv, load_transcript, score_transcript
    from .scoring import cronbach_alpha, icc_avg_consistency

    transcript = load_transcript(args.transcript)
    card = score_transcript(transcript).to_dict()
    if args.ratings:
        matrix = load_ratings_csv(args.ratings)
        card["reliability"] = {
            "cronbach_alpha": cronbach_alpha(matrix),
            "icc_avg_consistency": icc_avg_consistency(matrix),
        }
    text = json.dumps(card, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote scorecard to {args.out}")
    else:
        print(text)
    return 0


def cmd_report(args) -> int:
    from .report import write_batch_report
    from .simulate import BatchSummary, RunStat

    runs = []
    for line in Path(args.runs).read_text(encoding="utf-8").splitlines():
        if line.strip():
            d = json.loads(line)
            runs.append(
                RunStat(
                    seed=d["seed"], mistakes=d["mistakes"],
                    turns=d["turns"], completed=d["completed"],
                )
            )
    if not runs:
        print("no runs in input", file=sys.stderr)
        return 1
    mistakes = [r.mistakes for r in runs]
    turns = [r.turns for r in runs]

    def mean(v):
        return sum(v) / len(v)

    def sd(v):
        if len(v) < 2:
            return 0.0
        m = mean(v)
        return (sum((x - m) ** 2 for x in v) / (len(v) - 1)) ** 0.5

    summary = BatchSummary(
        mode=args.mode, policy_kind="recorded", n_runs=len(runs), first_seed=runs[0].seed,
        mean_mistakes=mean(mistakes), std_mistakes=sd(mistakes),
        mean_turns=mean(turns), std_turns=sd(turns),
        completion_rate=sum(1 for r in runs if r.completed) / len(runs),
        per_skill_turns_mean={}, runs=tuple(runs),
    )
    for p in write_batch_report(summary, args.out_dir):
        print(f"wrote {p}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    curriculum_dir = args.curriculum or bundled_curriculum_dir()
    ast, _manifest = load_curriculum(curriculum_dir)
    app = create_app(ast, data_dir=args.data, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="micoach", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a script")
    p.add_argument("script")
    p.add_argument("--lint", action="store_true", help="also run curriculum lint")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="drive a script with a user policy")
    p.add_argument("script")
    p.add_argument("--mode", choices=["didactic", "roleplay", "video"], default="roleplay")
    p.add_argument(
        "--policy", choices=["adherent", "nonadherent-once", "random", "scripted"],
        default="adherent",
    )
    p.add_argument("--p", type=float, default=0.0, help="nonadherent probability (random policy)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-menus", type=int, default=0, help="tagged menus before the one flub")
    p.add_argument("--choices", help="comma-separated directives (scripted policy)")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out", help="per-run stats as JSONL (batch runs)")
    p.add_argument("--events-out", help="full event trace as JSONL (single run)")
    p.add_argument("--report-dir", help="write CSV tables and figures here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="score a coded transcript")
    p.add_argument("--transcript", required=True)
    p.add_argument("--ratings", help="headerless CSV ratings matrix (rows = subjects)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="render figures and tables from recorded runs")
    p.add_argument("--runs", required=True, help="per-run stats JSONL from simulate --out")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", default="roleplay")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--data", default="data")
    p.add_argument("--curriculum", help="curriculum directory (defaults to bundled)")
    p.add_argument("--ui", help="static frontend directory to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
