"""The two interacting parties behind one agent contract.

User simulators: an agenda rule policy that reads acts off the unfinished
goal items, and a trainable softmax token policy. Dialogue systems: a
database-backed rule system, a trainable softmax policy whose act skeletons
are grounded against the database, and (see todsim.protocol) external agents
attached over the wire protocol.

Trainable policies sample composite action tokens of the form
``act_type:domain:slot[:value-class]`` from softmax(weights . features) and
record a TurnTrace for REINFORCE.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from . import kernels
from .domain import (
    BOOKING_SLOT,
    BYE,
    GREET,
    NAME_SLOT,
    THANK,
    BeliefState,
    BookingObligation,
    DialogueAct,
    GoalState,
    InformObligation,
    Ontology,
    RequestObligation,
    Turn,
    VenueDatabase,
    book,
    inform,
    item_sort_key,
    nooffer,
    offer,
    request,
)
from .errors import ConfigurationError, PreconditionError
from .templates import SYSTEM, USER, realize

SIMULATOR = "simulator"
SYSTEM_ROLE = "system"

END_TOKEN = "end"

# Cap on sampled action tokens per turn (the end token counts).
MAX_POLICY_TOKENS = 4

# Turn indices at or above this land in the last bucket.
_TURN_BUCKETS = 6

SIM_SCHEMA = "sim-v1"
SYS_SCHEMA = "sys-v1"


@dataclass(frozen=True)
class TraceRecord:
    """One sampled policy token: features, choice, and the full distribution."""

    feature_idx: tuple[int, ...]
    chosen: int
    logprob: float
    probs: np.ndarray

    def __eq__(self, other):
        return self is other


@dataclass
class TurnTrace:
    """Per-token records for one turn; length is the policy sequence length."""

    records: list[TraceRecord]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class AgentTurnOutput:
    acts: tuple[DialogueAct, ...]
    utterance: str
    trace: TurnTrace | None = None

    def __post_init__(self):
        object.__setattr__(self, "acts", tuple(self.acts))


def simulator_vocabulary(ontology: Ontology) -> tuple[str, ...]:
    toks: list[str] = []
    domains = sorted(ontology.domains)
    for d in domains:
        for s in ontology.informable_slots(d):
            toks.append(f"inform:{d}:{s}:goal")
    for d in domains:
        toks.append(f"inform:{d}:{BOOKING_SLOT}:yes")
    for d in domains:
        for s in ontology.requestable_slots(d):
            toks.append(f"request:{d}:{s}")
    toks += ["bye", "thank", END_TOKEN]
    return tuple(toks)


def system_vocabulary(ontology: Ontology) -> tuple[str, ...]:
    toks: list[str] = []
    domains = sorted(ontology.domains)
    for d in domains:
        for s in ontology.requestable_slots(d):
            toks.append(f"inform:{d}:{s}:db")
    for d in domains:
        toks.append(f"offer:{d}:{NAME_SLOT}:db")
    for d in domains:
        toks.append(f"book:{d}:reference:ref")
    for d in domains:
        toks.append(f"nooffer:{d}")
    toks += ["bye", END_TOKEN]
    return tuple(toks)


def simulator_feature_names(ontology: Ontology) -> tuple[str, ...]:
    names = []
    domains = sorted(ontology.domains)
    for d in domains:
        for s in ontology.informable_slots(d):
            names.append(f"unfinished:inform:{d}:{s}")
    for d in domains:
        for s in ontology.requestable_slots(d):
            names.append(f"unfinished:request:{d}:{s}")
    for d in domains:
        names.append(f"unfinished:booking:{d}")
    names += [f"last_sys:{t}" for t in
              ("inform", "request", "offer", "book", "nooffer", "bye", "thank", "greet")]
    names += [f"turn_bucket:{b}" for b in range(_TURN_BUCKETS)]
    return tuple(names)


def system_feature_names(ontology: Ontology) -> tuple[str, ...]:
    names = [f"user:{t}" for t in
              ("inform", "request", "offer", "book", "nooffer", "bye", "thank", "greet")]
    domains = sorted(ontology.domains)
    for d in domains:
        for s in ontology.requestable_slots(d):
            names.append(f"user_request:{d}:{s}")
    for d in domains:
        for s in ontology.informable_slots(d):
            names.append(f"user_inform:{d}:{s}")
    for d in domains:
        names.append(f"user_booking:{d}")
    return tuple(names)


def decode_token(token: str, ontology: Ontology) -> DialogueAct | None:
    """Act skeleton for a vocabulary token, or None for the end token.

    Raises PreconditionError when the token does not name a valid act
    against the ontology (used to validate loaded checkpoints).
    """
    if token == END_TOKEN:
        return None
    if token in ("bye", "thank"):
        return DialogueAct(token)
    parts = token.split(":")
    act_type, domain = parts[0], parts[1] if len(parts) > 1 else ""
    if not ontology.has_domain(domain):
        raise PreconditionError(f"token {token!r}: unknown domain")
    if act_type == "nooffer":
        return nooffer(domain)
    slot = parts[2] if len(parts) > 2 else ""
    if act_type == "inform" and slot == BOOKING_SLOT:
        return inform(domain, BOOKING_SLOT, "yes")
    if act_type == "inform" and (ontology.is_informable(domain, slot)
                                 or ontology.is_requestable(domain, slot)):
        return inform(domain, slot, "")
    if act_type == "request" and ontology.is_requestable(domain, slot):
        return request(domain, slot)
    if act_type == "offer" and slot == NAME_SLOT:
        return offer(domain, NAME_SLOT, "")
    if act_type == "book" and slot == "reference":
        return book(domain, "")
    raise PreconditionError(f"token {token!r} does not decode to a valid act")


@dataclass
class PolicyParameters:
    """Softmax token policy: role, action vocabulary, feature schema, weights."""

    role: str
    action_vocabulary: tuple[str, ...]
    feature_schema: str
    feature_names: tuple[str, ...]
    weights: np.ndarray

    def __post_init__(self):
        if self.role not in (SIMULATOR, SYSTEM_ROLE):
            raise ConfigurationError(f"unknown policy role {self.role!r}")
        self.action_vocabulary = tuple(self.action_vocabulary)
        self.feature_names = tuple(self.feature_names)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        expected = (len(self.action_vocabulary), len(self.feature_names))
        if self.weights.shape != expected:
            raise ConfigurationError(
                f"weights shape {self.weights.shape} != (vocab, features) {expected}"
            )
        if not np.isfinite(self.weights).all():
            raise ConfigurationError("policy weights must be finite")
        self._feature_index = {n: i for i, n in enumerate(self.feature_names)}
        self._end_index = self.action_vocabulary.index(END_TOKEN)

    @staticmethod
    def zeros(role: str, ontology: Ontology) -> "PolicyParameters":
        if role == SIMULATOR:
            vocab, schema, names = (simulator_vocabulary(ontology), SIM_SCHEMA,
                                    simulator_feature_names(ontology))
        else:
            vocab, schema, names = (system_vocabulary(ontology), SYS_SCHEMA,
                                    system_feature_names(ontology))
        return PolicyParameters(role, vocab, schema, names,
                                np.zeros((len(vocab), len(names))))

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(self.role, self.action_vocabulary, self.feature_schema,
                                self.feature_names, self.weights.copy())

    def validate(self, ontology: Ontology) -> None:
        for token in self.action_vocabulary:
            decode_token(token, ontology)

    def feature_indices(self, active: Sequence[str]) -> np.ndarray:
        """Indices of the active feature names; out-of-schema names are ignored."""
        idx = sorted(self._feature_index[n] for n in set(active) if n in self._feature_index)
        return np.asarray(idx, dtype=np.int64)


def _sample_turn(params: PolicyParameters, active: Sequence[str],
                 rng: np.random.Generator, max_tokens: int) -> tuple[list[int], TurnTrace]:
    fi = params.feature_indices(active)
    fi_tuple = tuple(int(i) for i in fi)
    probs = kernels.softmax_probs(params.weights, fi)
    records: list[TraceRecord] = []
    chosen: list[int] = []
    for _ in range(max_tokens):
        a = int(kernels.sample_index(probs, rng.random()))
        records.append(TraceRecord(fi_tuple, a, math.log(probs[a]), probs))
        if a == params._end_index:
            break
        chosen.append(a)
    return chosen, TurnTrace(records)


def _simulator_active_features(state: GoalState, history: Sequence[Turn]) -> list[str]:
    active = [f"turn_bucket:{min(len(history), _TURN_BUCKETS - 1)}"]
    for item in state.unfinished:
        if isinstance(item, InformObligation):
            active.append(f"unfinished:inform:{item.domain}:{item.slot}")
        elif isinstance(item, RequestObligation):
            active.append(f"unfinished:request:{item.domain}:{item.slot}")
        else:
            active.append(f"unfinished:booking:{item.domain}")
    if history:
        for a in history[-1].system_acts:
            active.append(f"last_sys:{a.act_type}")
    return active


def _system_active_features(user_acts: Sequence[DialogueAct]) -> list[str]:
    active = []
    for a in user_acts:
        active.append(f"user:{a.act_type}")
        if a.act_type == "request":
            active.append(f"user_request:{a.domain}:{a.slot}")
        elif a.act_type == "inform":
            if a.slot == BOOKING_SLOT:
                active.append(f"user_booking:{a.domain}")
            else:
                active.append(f"user_inform:{a.domain}:{a.slot}")
    return active


def booking_reference(domain: str, name: str) -> str:
    """Deterministic booking code for a (domain, entity) pair."""
    digest = hashlib.blake2b(f"{domain}:{name}".encode(), digest_size=4).hexdigest()
    return f"ref-{digest}"


def absorb_user_informs(belief: BeliefState, user_acts: Sequence[DialogueAct]) -> BeliefState:
    """Fold user inform acts into the belief state (booking requests excluded)."""
    for a in user_acts:
        if a.act_type == "inform" and a.slot and a.slot != BOOKING_SLOT:
            belief = belief.with_inform(a.domain, a.slot, a.value)
    return belief


def _dedupe(acts: list[DialogueAct]) -> list[DialogueAct]:
    seen: set[DialogueAct] = set()
    out = []
    for a in acts:
        if a not in seen:
            out.append(a)
            seen.add(a)
    return out


def agenda_user_turn(state: GoalState, history: Sequence[Turn], k: int) -> AgentTurnOutput:
    """Rule simulator: emit acts for up to k unfinished items in canonical
    order (informs, then requests, then booking); bye once nothing is left."""
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if not state.unfinished:
        acts = [BYE]
    else:
        items = sorted(state.unfinished, key=item_sort_key)[:k]
        acts = []
        for item in items:
            if isinstance(item, InformObligation):
                acts.append(inform(item.domain, item.slot, item.value))
            elif isinstance(item, RequestObligation):
                acts.append(request(item.domain, item.slot))
            else:
                acts.append(inform(item.domain, BOOKING_SLOT, "yes"))
    return AgentTurnOutput(tuple(acts), realize(USER, acts))


def policy_user_turn(params: PolicyParameters, state: GoalState, history: Sequence[Turn],
                     rng_seed: int, max_tokens: int = MAX_POLICY_TOKENS) -> AgentTurnOutput:
    """Trainable simulator turn. Inform skeletons are grounded with the goal's
    values; skeletons outside the goal are dropped from the act list (their
    tokens stay in the trace). Deterministic given rng_seed."""
    if params.role != SIMULATOR:
        raise ConfigurationError(f"expected simulator parameters, got {params.role!r}")
    rng = np.random.default_rng(rng_seed)
    tokens, trace = _sample_turn(params, _simulator_active_features(state, history),
                                 rng, max_tokens)
    inform_values = {(it.domain, it.slot): it.value
                     for it in state.all_items if isinstance(it, InformObligation)}
    booking_domains = {it.domain for it in state.all_items
                       if isinstance(it, BookingObligation)}
    acts: list[DialogueAct] = []
    for t in tokens:
        tok = params.action_vocabulary[t]
        if tok == "bye":
            acts.append(BYE)
        elif tok == "thank":
            acts.append(THANK)
        else:
            kind, domain, slot = tok.split(":")[:3]
            if kind == "request":
                acts.append(request(domain, slot))
            elif slot == BOOKING_SLOT:
                if domain in booking_domains:
                    acts.append(inform(domain, BOOKING_SLOT, "yes"))
            else:
                value = inform_values.get((domain, slot))
                if value is not None:
                    acts.append(inform(domain, slot, value))
    acts = _dedupe(acts)
    return AgentTurnOutput(tuple(acts), realize(USER, acts), trace)


def rule_system_turn(db: VenueDatabase, belief: BeliefState,
                     user_acts: Sequence[DialogueAct]) -> tuple[BeliefState, AgentTurnOutput]:
    """Reference database-backed system.

    Folds user informs into the belief, queries each engaged domain, answers
    requested slots from the first match, offers that entity by name, books
    on request, and echoes farewells with bye.
    """
    if any(a.act_type in ("bye", "thank") for a in user_acts):
        return belief, AgentTurnOutput((BYE,), realize(SYSTEM, [BYE]))
    belief = absorb_user_informs(belief, user_acts)
    engaged: list[str] = []
    for a in user_acts:
        if a.domain and a.domain not in engaged:
            engaged.append(a.domain)
    acts: list[DialogueAct] = []
    for d in engaged:
        matches = db.query(d, belief.constraints(d))
        if not matches:
            acts.append(nooffer(d))
            continue
        ent = matches[0]
        for a in user_acts:
            if a.act_type == "request" and a.domain == d:
                value = ent.get(a.slot, "")
                acts.append(inform(d, a.slot, value) if value else nooffer(d))
        acts.append(offer(d, NAME_SLOT, ent[NAME_SLOT]))
        if any(a.act_type == "inform" and a.slot == BOOKING_SLOT and a.domain == d
               for a in user_acts):
            acts.append(book(d, booking_reference(d, ent[NAME_SLOT])))
    if not acts:
        acts = [GREET]
    acts = _dedupe(acts)
    return belief, AgentTurnOutput(tuple(acts), realize(SYSTEM, acts))


def policy_system_turn(params: PolicyParameters, db: VenueDatabase, belief: BeliefState,
                       user_acts: Sequence[DialogueAct], rng_seed: int,
                       max_tokens: int = MAX_POLICY_TOKENS) -> tuple[BeliefState, AgentTurnOutput]:
    """Trainable system turn: the policy picks act skeletons, the database
    grounds their values against the current belief. A skeleton with no
    matching entity downgrades to nooffer."""
    if params.role != SYSTEM_ROLE:
        raise ConfigurationError(f"expected system parameters, got {params.role!r}")
    rng = np.random.default_rng(rng_seed)
    belief = absorb_user_informs(belief, user_acts)
    tokens, trace = _sample_turn(params, _system_active_features(user_acts), rng, max_tokens)

    match_cache: dict[str, dict[str, str] | None] = {}

    def first_match(domain: str) -> dict[str, str] | None:
        if domain not in match_cache:
            rows = db.query(domain, belief.constraints(domain))
            match_cache[domain] = rows[0] if rows else None
        return match_cache[domain]

    acts: list[DialogueAct] = []
    for t in tokens:
        tok = params.action_vocabulary[t]
        if tok == "bye":
            acts.append(BYE)
            continue
        parts = tok.split(":")
        kind, domain = parts[0], parts[1]
        if kind == "nooffer":
            acts.append(nooffer(domain))
            continue
        ent = first_match(domain)
        if ent is None:
            acts.append(nooffer(domain))
        elif kind == "inform":
            slot = parts[2]
            value = ent.get(slot, "")
            acts.append(inform(domain, slot, value) if value else nooffer(domain))
        elif kind == "offer":
            acts.append(offer(domain, NAME_SLOT, ent[NAME_SLOT]))
        elif kind == "book":
            acts.append(book(domain, booking_reference(domain, ent[NAME_SLOT])))
    acts = _dedupe(acts)
    return belief, AgentTurnOutput(tuple(acts), realize(SYSTEM, acts), trace)


class UserAgent(Protocol):
    def user_turn(self, state: GoalState, history: Sequence[Turn],
                  seed: int) -> AgentTurnOutput: ...


class SystemAgent(Protocol):
    def system_turn(self, belief: BeliefState, history: Sequence[Turn],
                    user_utterance: str, user_acts: Sequence[DialogueAct],
                    seed: int) -> tuple[BeliefState, AgentTurnOutput]: ...


class AgendaUser:
    """Engine adapter for the agenda simulator."""

    def __init__(self, k: int = 2):
        self.k = k

    def user_turn(self, state, history, seed):
        return agenda_user_turn(state, history, self.k)


class PolicyUser:
    """Engine adapter for the trainable simulator; optionally captures traces."""

    def __init__(self, params: PolicyParameters, max_tokens: int = MAX_POLICY_TOKENS,
                 capture: list | None = None):
        self.params = params
        self.max_tokens = max_tokens
        self.capture = capture

    def user_turn(self, state, history, seed):
        out = policy_user_turn(self.params, state, history, seed, self.max_tokens)
        if self.capture is not None:
            self.capture.append((SIMULATOR, out.trace))
        return out


class RuleSystem:
    """Engine adapter for the database-backed rule system."""

    def __init__(self, db: VenueDatabase):
        self.db = db

    def system_turn(self, belief, history, user_utterance, user_acts, seed):
        return rule_system_turn(self.db, belief, user_acts)


class PolicySystem:
    """Engine adapter for the trainable system; optionally captures traces."""

    def __init__(self, params: PolicyParameters, db: VenueDatabase,
                 max_tokens: int = MAX_POLICY_TOKENS, capture: list | None = None):
        self.params = params
        self.db = db
        self.max_tokens = max_tokens
        self.capture = capture

    def system_turn(self, belief, history, user_utterance, user_acts, seed):
        belief, out = policy_system_turn(self.params, self.db, belief, user_acts,
                                         seed, self.max_tokens)
        if self.capture is not None:
            self.capture.append((SYSTEM_ROLE, out.trace))
        return belief, out


class RandomActSystem:
    """Uniform-random-act system: token skeletons drawn uniformly and grounded
    against a uniformly random entity, ignoring the belief state entirely."""

    def __init__(self, ontology: Ontology, db: VenueDatabase,
                 max_tokens: int = MAX_POLICY_TOKENS):
        self.vocab = system_vocabulary(ontology)
        self.db = db
        self.max_tokens = max_tokens

    def system_turn(self, belief, history, user_utterance, user_acts, seed):
        rng = np.random.default_rng(seed)
        belief = absorb_user_informs(belief, user_acts)
        acts: list[DialogueAct] = []
        for _ in range(self.max_tokens):
            tok = self.vocab[int(rng.integers(len(self.vocab)))]
            if tok == END_TOKEN:
                break
            if tok == "bye":
                acts.append(BYE)
                continue
            parts = tok.split(":")
            kind, domain = parts[0], parts[1]
            rows = self.db.entities(domain)
            if kind == "nooffer" or not rows:
                acts.append(nooffer(domain))
                continue
            ent = rows[int(rng.integers(len(rows)))]
            if kind == "inform":
                value = ent.get(parts[2], "")
                acts.append(inform(domain, parts[2], value) if value
                            else nooffer(domain))
            elif kind == "offer":
                acts.append(offer(domain, NAME_SLOT, ent[NAME_SLOT]))
            else:
                acts.append(book(domain, booking_reference(domain, ent[NAME_SLOT])))
        acts = _dedupe(acts)
        return belief, AgentTurnOutput(tuple(acts), realize(SYSTEM, acts))


def uniform_random_system(ontology: Ontology, db: VenueDatabase) -> RandomActSystem:
    """Factory for the uniform-random-act reference system."""
    return RandomActSystem(ontology, db)


class PlaybackSystem:
    """Replays the oracle system side of an annotated dialogue verbatim."""

    def __init__(self, annotated):
        self.annotated = annotated

    def system_turn(self, belief, history, user_utterance, user_acts, seed):
        i = len(history)
        if i >= len(self.annotated.turns):
            raise PreconditionError("playback exhausted: no annotated turn left")
        turn = self.annotated.turns[i]
        belief = absorb_user_informs(belief, user_acts)
        return belief, AgentTurnOutput(tuple(turn.system_acts), turn.system_utterance)
