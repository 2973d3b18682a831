"""Session drivers: interactive (simulator <-> system) and traditional
(annotated-utterance replay) modes, plus corpus-level evaluation.

The termination check after each turn is evaluated against the goal state
the simulator saw at the start of that turn, so a goal-finishing exchange is
followed by one farewell turn before the session closes with
goals_complete.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .agents import SystemAgent, UserAgent
from .domain import (
    BeliefState,
    DialogueAct,
    Goal,
    GoalState,
    Session,
    Turn,
    VenueDatabase,
)
from .errors import AgentUnresponsiveError, EngineError, PreconditionError
from .goal_tracker import TerminationConfig, extract_finished, should_terminate, update
from .metrics import corpus_bleu, inform_success, tokenize
from .scorers import PairScorer, SentenceScorer, session_score
from .seeding import derive_seed

INTERACTIVE = "interactive"
TRADITIONAL = "traditional"


@dataclass(frozen=True)
class AnnotatedTurn:
    user_utterance: str
    user_acts: tuple[DialogueAct, ...]
    system_utterance: str
    system_acts: tuple[DialogueAct, ...]

    def __post_init__(self):
        object.__setattr__(self, "user_acts", tuple(self.user_acts))
        object.__setattr__(self, "system_acts", tuple(self.system_acts))


@dataclass(frozen=True)
class AnnotatedDialogue:
    goal: Goal
    turns: tuple[AnnotatedTurn, ...]

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))


def run_interactive(simulator: UserAgent, system: SystemAgent, goal: Goal,
                    db: VenueDatabase, cfg: TerminationConfig | None = None,
                    seed: int = 0) -> Session:
    """Drive one simulator/system session until a termination reason fires.

    Deterministic given the seed and deterministic agents. An unresponsive
    external agent ends the session as max_turns_exceeded; any other agent
    failure propagates as EngineError with the partial session attached.
    """
    cfg = cfg or TerminationConfig()
    state = GoalState.from_goal(goal)
    belief = BeliefState()
    turns: list[Turn] = []
    termination = "max_turns_exceeded"
    for idx in range(cfg.max_turns):
        pre_state = state
        try:
            user_out = simulator.user_turn(pre_state, tuple(turns),
                                           derive_seed(seed, idx, "user"))
            belief, sys_out = system.system_turn(belief, tuple(turns),
                                                 user_out.utterance, user_out.acts,
                                                 derive_seed(seed, idx, "system"))
        except AgentUnresponsiveError:
            termination = "max_turns_exceeded"
            break
        except Exception as exc:
            partial = Session(goal, tuple(turns), "max_turns_exceeded")
            raise EngineError(f"agent failed at turn {idx}: {exc}", partial) from exc
        turns.append(Turn(idx, user_out.utterance, user_out.acts,
                          sys_out.utterance, sys_out.acts, belief))
        finished = extract_finished(state, user_out.acts, sys_out.acts)
        state = update(state, finished)
        reason = should_terminate(pre_state, idx, user_out.acts, sys_out.acts, cfg)
        if reason:
            termination = reason
            break
    return Session(goal, tuple(turns), termination)


def run_traditional(system: SystemAgent, annotated: AnnotatedDialogue,
                    db: VenueDatabase, seed: int = 0) -> Session:
    """Replay annotated user turns against the system, recording generated
    responses. User turns are never altered by what the system generated;
    this deliberately reproduces the policy mismatch of replay evaluation."""
    if not annotated.turns:
        raise PreconditionError("empty dialogue")
    belief = BeliefState()
    turns: list[Turn] = []
    for idx, at in enumerate(annotated.turns):
        try:
            belief, sys_out = system.system_turn(belief, tuple(turns),
                                                 at.user_utterance, at.user_acts,
                                                 derive_seed(seed, idx, "system"))
        except Exception as exc:
            partial = Session(annotated.goal, tuple(turns), "replay_exhausted")
            raise EngineError(f"agent failed at turn {idx}: {exc}", partial) from exc
        turns.append(Turn(idx, at.user_utterance, at.user_acts,
                          sys_out.utterance, sys_out.acts, belief))
    return Session(annotated.goal, tuple(turns), "replay_exhausted")


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    inform: int | None
    success: int | None
    turns: int | None
    termination: str | None
    sent_score: float | None
    sess_score: float | None
    error: str | None = None
    session: Session | None = None


@dataclass(frozen=True)
class CorpusAggregates:
    sessions: int
    failures: int
    inform_pct: float
    success_pct: float
    bleu: float | None
    combined: float | None
    mean_sent: float | None
    mean_sess: float | None


@dataclass(frozen=True)
class EvaluationReport:
    mode: str
    records: tuple[SessionRecord, ...]
    aggregates: CorpusAggregates


def mean_sentence_score(scorer: SentenceScorer, session: Session) -> float | None:
    """Mean fluency score over the session's non-empty system utterances."""
    scores = [scorer.score_text(u) for u in session.system_utterances() if tokenize(u)]
    return sum(scores) / len(scores) if scores else None


def score_session(session: Session, sent_scorer: SentenceScorer | None,
                  pair_scorer: PairScorer | None) -> tuple[float | None, float | None]:
    sent = mean_sentence_score(sent_scorer, session) if sent_scorer else None
    sess = (session_score(pair_scorer, session)
            if pair_scorer and session.turns else None)
    return sent, sess


def run_corpus(mode: str, simulator: UserAgent | None, system: SystemAgent | None,
               inputs: Sequence, db: VenueDatabase,
               cfg: TerminationConfig | None = None,
               sent_scorer: SentenceScorer | None = None,
               pair_scorer: PairScorer | None = None,
               seed: int = 0, workers: int = 1,
               system_factory=None) -> EvaluationReport:
    """Run every input through the chosen mode and aggregate.

    Interactive inputs are goals; traditional inputs are annotated dialogues.
    Per-session seeds derive from (seed, index), so reports are byte-stable
    under any worker count. Failing sessions are recorded and excluded from
    the aggregates. BLEU (and with it the combined score) only exists in
    traditional mode. `system_factory` (input -> agent) builds a fresh system
    per session, e.g. oracle playback of each annotated dialogue.
    """
    if mode not in (INTERACTIVE, TRADITIONAL):
        raise PreconditionError(f"unknown mode {mode!r}")
    if not inputs:
        raise PreconditionError("no inputs to evaluate")
    if mode == INTERACTIVE and simulator is None:
        raise PreconditionError("interactive mode needs a simulator")
    if system is None and system_factory is None:
        raise PreconditionError("need a system agent or a system factory")
    cfg = cfg or TerminationConfig()

    def one(i: int):
        session_seed = derive_seed(seed, i)
        sid = f"s{i:04d}"
        agent = system_factory(inputs[i]) if system_factory is not None else system
        try:
            if mode == INTERACTIVE:
                session = run_interactive(simulator, agent, inputs[i], db, cfg,
                                          session_seed)
                bleu_pairs = []
            else:
                session = run_traditional(agent, inputs[i], db, session_seed)
                bleu_pairs = [
                    (tokenize(turn.system_utterance), tokenize(at.system_utterance))
                    for turn, at in zip(session.turns, inputs[i].turns)
                ]
            metric = inform_success(session, db)
            sent, sess = score_session(session, sent_scorer, pair_scorer)
            return SessionRecord(sid, metric.inform, metric.success,
                                 len(session.turns), session.termination,
                                 sent, sess, session=session), bleu_pairs
        except Exception as exc:
            return SessionRecord(sid, None, None, None, None, None, None,
                                 error=str(exc)), []

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(len(inputs))))
    else:
        results = [one(i) for i in range(len(inputs))]

    records = tuple(rec for rec, _ in results)
    ok = [r for r in records if r.error is None]
    failures = len(records) - len(ok)
    if ok:
        inform_pct = 100.0 * sum(r.inform for r in ok) / len(ok)
        success_pct = 100.0 * sum(r.success for r in ok) / len(ok)
    else:
        inform_pct = success_pct = 0.0

    bleu = combined = None
    if mode == TRADITIONAL and ok:
        hyps, refs = [], []
        for rec, pairs in results:
            if rec.error is None:
                for hyp, ref in pairs:
                    hyps.append(hyp)
                    refs.append(ref)
        if hyps:
            from .metrics import combined_score

            bleu = corpus_bleu(hyps, refs)
            combined = combined_score(inform_pct, success_pct, bleu)

    sent_vals = [r.sent_score for r in ok if r.sent_score is not None]
    sess_vals = [r.sess_score for r in ok if r.sess_score is not None]
    aggregates = CorpusAggregates(
        sessions=len(ok),
        failures=failures,
        inform_pct=inform_pct,
        success_pct=success_pct,
        bleu=bleu,
        combined=combined,
        mean_sent=sum(sent_vals) / len(sent_vals) if sent_vals else None,
        mean_sess=sum(sess_vals) / len(sess_vals) if sess_vals else None,
    )
    return EvaluationReport(mode, records, aggregates)
