"""Command-line interface.

Subcommands: eval-interactive, eval-traditional, train-rl, train-lm,
train-session-scorer, score-corpus, report. Every run is reproducible from
its flags and seed alone. Environment overrides (endpoints and timeout
only): TODSIM_ENDPOINT_SYSTEM, TODSIM_ENDPOINT_SIMULATOR, TODSIM_TIMEOUT.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .agents import (
    AgendaUser,
    PolicyParameters,
    PolicySystem,
    PolicyUser,
    PlaybackSystem,
    RuleSystem,
    SIMULATOR,
    SYSTEM_ROLE,
    uniform_random_system,
)
from .corpus import (
    dialogue_to_session,
    load_corpus,
    load_policy,
    load_sessions,
    sample_goals,
    save_policy,
    save_sessions,
)
from .engine import INTERACTIVE, TRADITIONAL, run_corpus
from .errors import TodsimError
from .goal_tracker import TerminationConfig
from .metrics import tokenize
from .report import (
    read_csv_rows,
    render_table,
    svg_histogram,
    table_from_rows,
    write_csv,
)
from .rl import RLConfig, train_alternating, training_log_csv
from .scorers import (
    CoherenceClassifier,
    LanguageModel,
    make_pair_samples,
    train_lm,
    train_session_scorer,
)


def _timeout(args) -> float:
    env = os.environ.get("TODSIM_TIMEOUT")
    if env:
        return float(env)
    return args.timeout


def _endpoint_override(role: str, spec: str) -> str:
    env = os.environ.get(f"TODSIM_ENDPOINT_{role.upper()}")
    return env if env else spec


def _make_simulator(spec: str, bundle, args):
    if spec == "agenda":
        return AgendaUser(k=args.k)
    if spec.startswith("policy:"):
        params = load_policy(spec.split(":", 1)[1], bundle.ontology)
        return PolicyUser(params)
    if spec.startswith(("external:", "tcp:", "cmd:")):
        from .protocol import ExternalUserAgent

        endpoint = spec.split(":", 1)[1] if spec.startswith("external:") else spec
        return ExternalUserAgent(_endpoint_override("simulator", endpoint),
                                 timeout=_timeout(args))
    raise TodsimError(f"unknown simulator {spec!r}")


def _make_system(spec: str, bundle, args, annotated=None):
    if spec == "rule":
        return RuleSystem(bundle.db)
    if spec == "random":
        return uniform_random_system(bundle.ontology, bundle.db)
    if spec == "oracle":
        if annotated is None:
            raise TodsimError("oracle system only exists in traditional mode")
        return PlaybackSystem(annotated)
    if spec.startswith("policy:"):
        params = load_policy(spec.split(":", 1)[1], bundle.ontology)
        return PolicySystem(params, bundle.db)
    if spec.startswith(("external:", "tcp:", "cmd:")):
        from .protocol import ExternalSystemAgent

        endpoint = spec.split(":", 1)[1] if spec.startswith("external:") else spec
        return ExternalSystemAgent(_endpoint_override("system", endpoint),
                                   timeout=_timeout(args))
    raise TodsimError(f"unknown system {spec!r}")


def _load_scorers(args):
    lm = LanguageModel.load(args.lm) if args.lm else None
    clf = CoherenceClassifier.load(args.classifier) if args.classifier else None
    return lm, clf


def _emit_report(report, args) -> None:
    sys.stdout.write(render_table(report))
    if args.out:
        write_csv(args.out, report)
    if getattr(args, "save_sessions", None):
        sessions = [r.session for r in report.records if r.session is not None]
        save_sessions(args.save_sessions, sessions)


def _cmd_eval_interactive(args) -> int:
    bundle = load_corpus(args.corpus)
    goals = list(bundle.goals)
    if args.goals:
        goals = sample_goals(bundle.ontology, bundle.db, args.goals, args.seed)
    simulator = _make_simulator(args.simulator, bundle, args)
    system = _make_system(args.system, bundle, args)
    lm, clf = _load_scorers(args)
    report = run_corpus(INTERACTIVE, simulator, system, goals, bundle.db,
                        TerminationConfig(max_turns=args.max_turns),
                        sent_scorer=lm, pair_scorer=clf,
                        seed=args.seed, workers=args.workers)
    _emit_report(report, args)
    for closer in (getattr(simulator, "close", None), getattr(system, "close", None)):
        if closer:
            closer()
    return 0


def _cmd_eval_traditional(args) -> int:
    bundle = load_corpus(args.corpus)
    if not bundle.dialogues:
        raise TodsimError("corpus has no annotated dialogues")
    lm, clf = _load_scorers(args)
    system = None
    system_factory = None
    if args.system == "oracle":
        system_factory = PlaybackSystem
    else:
        system = _make_system(args.system, bundle, args)
    report = run_corpus(TRADITIONAL, None, system, list(bundle.dialogues), bundle.db,
                        sent_scorer=lm, pair_scorer=clf,
                        seed=args.seed, workers=args.workers,
                        system_factory=system_factory)
    _emit_report(report, args)
    closer = getattr(system, "close", None)
    if closer:
        closer()
    return 0


def _cmd_train_rl(args) -> int:
    bundle = load_corpus(args.corpus)
    lm, clf = _load_scorers(args)
    cfg = RLConfig(gamma=args.gamma, alpha=args.alpha, beta=args.beta,
                   learning_rate=args.lr, goals_per_epoch=args.goals_per_epoch,
                   episodes_per_phase=args.episodes_per_phase, epochs=args.epochs,
                   sent_floor=args.sent_floor, seed=args.seed)
    pool = list(bundle.goals)
    if args.sample_pool:
        pool = sample_goals(bundle.ontology, bundle.db, args.sample_pool, args.seed,
                            max_informs=2, min_requests=1, max_requests=2,
                            booking_prob=0.3, multi_domain_prob=0.0)
    sim = PolicyParameters.zeros(SIMULATOR, bundle.ontology)
    sys_params = PolicyParameters.zeros(SYSTEM_ROLE, bundle.ontology)
    if args.init_simulator:
        sim = load_policy(args.init_simulator, bundle.ontology)
    if args.init_system:
        sys_params = load_policy(args.init_system, bundle.ontology)
    result = train_alternating(sim, sys_params, pool, bundle.db, cfg, lm=lm, clf=clf,
                               term_cfg=TerminationConfig(max_turns=args.max_turns))
    if args.out_simulator:
        save_policy(args.out_simulator, result.sim_params)
    if args.out_system:
        save_policy(args.out_system, result.sys_params)
    if args.log:
        Path(args.log).write_text(training_log_csv(result.log), encoding="utf-8")
    last = result.log[-1]
    sys.stdout.write(f"final phase success_rate {last.success_rate:.3f} "
                     f"mean_reward {last.mean_reward:.3f}\n")
    return 0


def _cmd_train_lm(args) -> int:
    bundle = load_corpus(args.corpus)
    corpus = []
    for d in bundle.dialogues:
        for t in d.turns:
            corpus.append(tokenize(t.user_utterance))
            corpus.append(tokenize(t.system_utterance))
    model = train_lm([c for c in corpus if c], order=args.order,
                     smoothing=args.smoothing)
    model.save(args.out)
    sys.stdout.write(f"trained order-{model.order} lm over {len(corpus)} sentences "
                     f"(vocab {model.vocab_size}) -> {args.out}\n")
    return 0


def _cmd_train_session_scorer(args) -> int:
    bundle = load_corpus(args.corpus)
    sessions = [dialogue_to_session(d) for d in bundle.dialogues]
    samples = make_pair_samples(sessions, negative_ratio=args.negative_ratio,
                                seed=args.seed)
    clf = train_session_scorer(samples, seed=args.seed)
    clf.save(args.out)
    sys.stdout.write(f"trained pair scorer on {len(samples)} samples "
                     f"(train accuracy {clf.meta['train_accuracy']:.3f}) -> {args.out}\n")
    return 0


def _cmd_score_corpus(args) -> int:
    from .engine import CorpusAggregates, EvaluationReport, SessionRecord, score_session
    from .metrics import inform_success

    sessions = load_sessions(args.sessions)
    if not sessions:
        raise TodsimError("session log is empty")
    lm = LanguageModel.load(args.lm) if args.lm else None
    clf = CoherenceClassifier.load(args.classifier) if args.classifier else None
    if lm is None and clf is None:
        raise TodsimError("score-corpus needs --lm and/or --classifier")
    bundle = load_corpus(args.corpus)
    records = []
    sents, sesses = [], []
    for i, session in enumerate(sessions):
        metric = inform_success(session, bundle.db)
        sent, sess = score_session(session, lm, clf)
        if sent is not None:
            sents.append(sent)
        if sess is not None:
            sesses.append(sess)
        records.append(SessionRecord(f"s{i:04d}", metric.inform, metric.success,
                                     len(session.turns), session.termination,
                                     sent, sess, session=session))
    ok = records
    aggregates = CorpusAggregates(
        sessions=len(ok), failures=0,
        inform_pct=100.0 * sum(r.inform for r in ok) / len(ok),
        success_pct=100.0 * sum(r.success for r in ok) / len(ok),
        bleu=None, combined=None,
        mean_sent=sum(sents) / len(sents) if sents else None,
        mean_sess=sum(sesses) / len(sesses) if sesses else None,
    )
    report = EvaluationReport("scored", tuple(records), aggregates)
    sys.stdout.write(render_table(report))
    if args.out:
        write_csv(args.out, report)
    return 0


def _cmd_report(args) -> int:
    rows = read_csv_rows(args.infile)
    if not rows:
        raise TodsimError("empty report")
    table = table_from_rows(rows)
    sys.stdout.write(table)
    if args.out_table:
        Path(args.out_table).write_text(table, encoding="utf-8")
    plot_path = args.out_plot
    if plot_path:
        values = [float(r["sent_score"]) for r in rows if r["sent_score"] != "NA"]
        if not values:
            values = [float(r["turns"]) for r in rows]
            title = "turn count distribution"
        else:
            title = "sentence-score distribution"
        Path(plot_path).write_text(svg_histogram(values, title), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="todsim",
        description="Interactive evaluation harness for task-oriented dialogue.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_eval(p):
        p.add_argument("--config", help="JSON run-config file (flags override it)")
        p.add_argument("--corpus", default="toy")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", help="per-session CSV path")
        p.add_argument("--save-sessions", help="JSONL session log path")
        p.add_argument("--lm", help="sentence scorer model file")
        p.add_argument("--classifier", help="pair scorer model file")
        p.add_argument("--timeout", type=float, default=30.0,
                       help="external agent timeout in seconds")

    p = sub.add_parser("eval-interactive", help="simulator vs system evaluation")
    common_eval(p)
    p.add_argument("--simulator", default="agenda",
                   help="agenda | policy:FILE | external:ENDPOINT")
    p.add_argument("--system", default="rule",
                   help="rule | random | policy:FILE | external:ENDPOINT")
    p.add_argument("--goals", type=int, default=0,
                   help="sample this many goals instead of the corpus goal list")
    p.add_argument("--max-turns", type=int, default=20)
    p.add_argument("--k", type=int, default=2, help="agenda acts per user turn")
    p.set_defaults(fn=_cmd_eval_interactive)

    p = sub.add_parser("eval-traditional", help="annotated-utterance replay evaluation")
    common_eval(p)
    p.add_argument("--system", default="rule",
                   help="rule | random | oracle | policy:FILE | external:ENDPOINT")
    p.set_defaults(fn=_cmd_eval_traditional)

    p = sub.add_parser("train-rl", help="alternating REINFORCE for both agents")
    p.add_argument("--config", help="JSON run-config file (flags override it)")
    p.add_argument("--corpus", default="toy")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--episodes-per-phase", type=int, default=200)
    p.add_argument("--goals-per-epoch", type=int, default=200)
    p.add_argument("--sample-pool", type=int, default=0,
                   help="sample a fresh goal pool of this size for training")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--sent-floor", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-turns", type=int, default=20)
    p.add_argument("--lm")
    p.add_argument("--classifier")
    p.add_argument("--init-simulator")
    p.add_argument("--init-system")
    p.add_argument("--out-simulator")
    p.add_argument("--out-system")
    p.add_argument("--log", help="training log CSV path")
    p.set_defaults(fn=_cmd_train_rl)

    p = sub.add_parser("train-lm", help="train the n-gram sentence scorer")
    p.add_argument("--corpus", default="toy")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--smoothing", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train_lm)

    p = sub.add_parser("train-session-scorer", help="train the pair coherence scorer")
    p.add_argument("--corpus", default="toy")
    p.add_argument("--negative-ratio", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train_session_scorer)

    p = sub.add_parser("score-corpus", help="run both scorers over a session log")
    p.add_argument("--sessions", required=True, help="JSONL session log")
    p.add_argument("--corpus", default="toy")
    p.add_argument("--lm")
    p.add_argument("--classifier")
    p.add_argument("--out", help="per-session CSV path")
    p.set_defaults(fn=_cmd_score_corpus)

    p = sub.add_parser("report", help="render a CSV report as table + histogram")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-table")
    p.add_argument("--out-plot", help="SVG histogram path")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            from .runconfig import load_run_config

            overrides = load_run_config(args.config, args.command)
            explicit = {tok.split("=", 1)[0] for tok in argv if tok.startswith("--")}
            for dest, value in overrides.items():
                if "--" + dest.replace("_", "-") not in explicit:
                    setattr(args, dest, value)
        return args.fn(args)
    except TodsimError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: missing input: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
