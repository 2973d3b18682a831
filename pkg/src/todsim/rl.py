"""Turn-level discounted REINFORCE for both agents.

Each episode is one interactive session between the two softmax policies.
The episode reward (success bit, optionally shaped by the fluency and
coherence scores) is broadcast as R_t to every turn; a turn's gradient
weights token position i of |A_t| by gamma^(|A_t| - i), so earlier tokens
are discounted more. Training alternates: freeze one agent, update the
other for a block of episodes, then swap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .agents import (
    MAX_POLICY_TOKENS,
    PolicyParameters,
    PolicySystem,
    PolicyUser,
    SIMULATOR,
    SYSTEM_ROLE,
    TurnTrace,
)
from .domain import Goal, Session, VenueDatabase
from .engine import run_interactive
from .errors import ConfigurationError, PreconditionError, TrainingDivergedError
from .goal_tracker import TerminationConfig
from .metrics import inform_success
from .scorers import PairScorer, SentenceScorer, session_score
from .seeding import derive_seed


@dataclass(frozen=True)
class RLConfig:
    gamma: float = 0.99
    alpha: float = 0.0
    beta: float = 0.0
    learning_rate: float = 0.1
    goals_per_epoch: int = 200
    episodes_per_phase: int = 200
    epochs: int = 20
    sent_floor: float = 0.1
    seed: int = 0
    max_tokens: int = MAX_POLICY_TOKENS
    use_baseline: bool = False
    divergence_limit: float = 1e6

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("gamma must be in (0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("alpha and beta must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.sent_floor <= 0:
            raise ConfigurationError("sent_floor must be > 0")
        if min(self.goals_per_epoch, self.episodes_per_phase, self.epochs) < 1:
            raise ConfigurationError("epoch/episode counts must be >= 1")


@dataclass(frozen=True)
class RewardSignal:
    success: int
    sent: float
    sess: float
    total: float


def compute_reward(session: Session, db: VenueDatabase, cfg: RLConfig,
                   lm: SentenceScorer | None = None,
                   clf: PairScorer | None = None) -> RewardSignal:
    """Episode reward: success + alpha / max(sent, floor) + beta * sess."""
    if cfg.alpha > 0 and lm is None:
        raise ConfigurationError("alpha > 0 needs a sentence scorer")
    if cfg.beta > 0 and clf is None:
        raise ConfigurationError("beta > 0 needs a pair scorer")
    success = inform_success(session, db).success
    sent = 0.0
    if lm is not None and session.turns:
        from .engine import mean_sentence_score

        sent = mean_sentence_score(lm, session) or 0.0
    sess = 0.0
    if clf is not None and session.turns:
        sess = session_score(clf, session)
    total = float(success)
    if cfg.alpha > 0:
        total += cfg.alpha / max(sent, cfg.sent_floor)
    if cfg.beta > 0:
        total += cfg.beta * sess
    return RewardSignal(success, sent, sess, total)


def turn_gradient(trace: TurnTrace, params: PolicyParameters, r_t: float,
                  gamma: float) -> np.ndarray:
    """Analytic REINFORCE gradient of one turn's token sequence.

    sum_i gamma^(|A_t| - i) * R_t * grad log pi(token_i | features_i), where
    for the softmax policy the log-prob gradient at one token is
    (onehot(chosen) - probs) outer features.
    """
    grad = np.zeros_like(params.weights)
    n = len(trace.records)
    if n == 0 or r_t == 0.0:
        return grad
    n_tokens, n_features = params.weights.shape
    for i, rec in enumerate(trace.records):
        if len(rec.probs) != n_tokens:
            raise PreconditionError("trace probability vector does not match the vocabulary")
        if rec.feature_idx and max(rec.feature_idx) >= n_features:
            raise PreconditionError("trace feature index outside the feature schema")
        coeff = r_t * gamma ** (n - 1 - i)
        kernels.accumulate_grad(grad, np.asarray(rec.probs, dtype=np.float64),
                                rec.chosen,
                                np.asarray(rec.feature_idx, dtype=np.int64), coeff)
    return grad


def run_episode(sim_params: PolicyParameters, sys_params: PolicyParameters,
                goal: Goal, db: VenueDatabase, cfg: RLConfig, seed: int,
                term_cfg: TerminationConfig | None = None,
                lm: SentenceScorer | None = None, clf: PairScorer | None = None
                ) -> tuple[Session, list[tuple[str, TurnTrace]], RewardSignal]:
    """One policy-vs-policy session with trace capture and its reward."""
    traces: list[tuple[str, TurnTrace]] = []
    simulator = PolicyUser(sim_params, cfg.max_tokens, capture=traces)
    system = PolicySystem(sys_params, db, cfg.max_tokens, capture=traces)
    session = run_interactive(simulator, system, goal, db,
                              term_cfg or TerminationConfig(), seed)
    reward = compute_reward(session, db, cfg, lm, clf)
    return session, traces, reward


@dataclass(frozen=True)
class TrainingLogEntry:
    epoch: int
    phase: int
    success_rate: float
    mean_reward: float
    mean_sent: float | None
    mean_sess: float | None


@dataclass
class TrainingResult:
    sim_params: PolicyParameters
    sys_params: PolicyParameters
    log: list[TrainingLogEntry] = field(default_factory=list)


def _sample_epoch_goals(pool: Sequence[Goal], count: int,
                        rng: np.random.Generator) -> list[Goal]:
    replace = len(pool) < count
    idx = rng.choice(len(pool), size=count, replace=replace)
    return [pool[int(i)] for i in idx]


def train_alternating(sim_params: PolicyParameters, sys_params: PolicyParameters,
                      goal_pool: Sequence[Goal], db: VenueDatabase, cfg: RLConfig,
                      lm: SentenceScorer | None = None,
                      clf: PairScorer | None = None,
                      term_cfg: TerminationConfig | None = None,
                      dev_goals: Sequence[Goal] | None = None) -> TrainingResult:
    """Alternating REINFORCE: per epoch, freeze the system and update the
    simulator for episodes_per_phase episodes, then vice versa.

    Updates are applied per episode (accumulated turn gradients, one
    learning-rate step). The input parameter objects are never mutated;
    trained copies are returned. Aborts with diagnostics if any weight
    magnitude exceeds the divergence limit. When `dev_goals` is given, the
    first half (by index) is evaluated after every epoch and the
    best-scoring snapshot is returned instead of the final one.
    """
    if not goal_pool:
        raise PreconditionError("goal pool is empty")
    if cfg.alpha > 0 and lm is None:
        raise ConfigurationError("alpha > 0 needs a sentence scorer")
    if cfg.beta > 0 and clf is None:
        raise ConfigurationError("beta > 0 needs a pair scorer")
    term_cfg = term_cfg or TerminationConfig()
    sim = sim_params.copy()
    sys_ = sys_params.copy()
    result = TrainingResult(sim, sys_)
    dev_half = list(dev_goals[: (len(dev_goals) + 1) // 2]) if dev_goals else []
    best_dev = -1.0
    baseline = 0.0
    for epoch in range(cfg.epochs):
        goals_rng = np.random.default_rng(derive_seed(cfg.seed, "goals", epoch))
        goals = _sample_epoch_goals(goal_pool, cfg.goals_per_epoch, goals_rng)
        for phase, learner_role in ((1, SIMULATOR), (2, SYSTEM_ROLE)):
            learner = sim if learner_role == SIMULATOR else sys_
            stats: list[RewardSignal] = []
            for ep in range(cfg.episodes_per_phase):
                goal = goals[ep % len(goals)]
                seed = derive_seed(cfg.seed, "episode", epoch, phase, ep)
                _, traces, reward = run_episode(sim, sys_, goal, db, cfg, seed,
                                                term_cfg, lm, clf)
                stats.append(reward)
                advantage = reward.total
                if cfg.use_baseline:
                    advantage -= baseline
                    baseline = 0.9 * baseline + 0.1 * reward.total
                if advantage != 0.0:
                    grad = np.zeros_like(learner.weights)
                    for role, trace in traces:
                        if role == learner_role:
                            grad += turn_gradient(trace, learner, advantage, cfg.gamma)
                    learner.weights += cfg.learning_rate * grad
                    peak = float(np.abs(learner.weights).max())
                    if peak > cfg.divergence_limit:
                        raise TrainingDivergedError(
                            f"weight magnitude {peak:.3g} exceeded the limit",
                            {"epoch": epoch, "phase": phase, "episode": ep,
                             "role": learner_role, "max_weight": peak},
                        )
            n = len(stats)
            result.log.append(TrainingLogEntry(
                epoch, phase,
                success_rate=sum(s.success for s in stats) / n,
                mean_reward=sum(s.total for s in stats) / n,
                mean_sent=sum(s.sent for s in stats) / n if lm is not None else None,
                mean_sess=sum(s.sess for s in stats) / n if clf is not None else None,
            ))
        if dev_half:
            rate = evaluate_success(sim, sys_, dev_half, db,
                                    derive_seed(cfg.seed, "dev", epoch),
                                    term_cfg, cfg.max_tokens)
            if rate > best_dev:
                best_dev = rate
                result.sim_params = sim.copy()
                result.sys_params = sys_.copy()
    return result


def evaluate_success(sim_params: PolicyParameters, sys_params: PolicyParameters,
                     goals: Sequence[Goal], db: VenueDatabase, seed: int,
                     term_cfg: TerminationConfig | None = None,
                     max_tokens: int = MAX_POLICY_TOKENS) -> float:
    """Interactive success rate of a policy pair over a goal list, no updates."""
    if not goals:
        raise PreconditionError("no goals to evaluate")
    term_cfg = term_cfg or TerminationConfig()
    simulator = PolicyUser(sim_params, max_tokens)
    system = PolicySystem(sys_params, db, max_tokens)
    wins = 0
    for i, goal in enumerate(goals):
        session = run_interactive(simulator, system, goal, db, term_cfg,
                                  derive_seed(seed, "eval", i))
        wins += inform_success(session, db).success
    return wins / len(goals)


def training_log_csv(entries: Sequence[TrainingLogEntry]) -> str:
    lines = ["epoch,phase,success_rate,mean_reward,mean_sent,mean_sess"]
    for e in entries:
        sent = f"{e.mean_sent:.6f}" if e.mean_sent is not None else ""
        sess = f"{e.mean_sess:.6f}" if e.mean_sess is not None else ""
        lines.append(f"{e.epoch},{e.phase},{e.success_rate:.6f},"
                     f"{e.mean_reward:.6f},{sent},{sess}")
    return "\n".join(lines) + "\n"
