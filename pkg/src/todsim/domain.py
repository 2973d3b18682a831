"""Core dialogue data types: acts, goals, goal states, beliefs, turns, sessions.

Everything here is immutable after construction and safe to share across
concurrent evaluation workers. Slot names and values are normalized
(trimmed, lowercased) at construction so comparisons are case-insensitive
everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from .errors import PreconditionError

ACT_TYPES = ("inform", "request", "offer", "book", "nooffer", "bye", "thank", "greet")

# Acts that carry no domain/slot/value payload.
BARE_ACTS = frozenset({"bye", "thank", "greet"})

# Slots used by convention rather than listed in the ontology: "name"
# identifies an entity, "booking" carries a user's booking request,
# "reference" carries the system's booking confirmation code.
NAME_SLOT = "name"
BOOKING_SLOT = "booking"
REFERENCE_SLOT = "reference"


def norm(text: str) -> str:
    """Normalize a slot/value/domain identifier for comparison."""
    return " ".join(str(text).strip().lower().split())


@dataclass(frozen=True)
class DialogueAct:
    """One (act_type, domain, slot, value) unit of dialogue intent.

    Structural rules enforced at construction:
      - act_type is one of ACT_TYPES
      - bye/thank/greet carry no domain, slot, or value
      - request carries no value
      - inform/offer/book require a domain and a slot (value may be empty)
      - nooffer requires a domain; slot and value are optional
    """

    act_type: str
    domain: str = ""
    slot: str = ""
    value: str = ""

    def __post_init__(self):
        object.__setattr__(self, "act_type", norm(self.act_type))
        object.__setattr__(self, "domain", norm(self.domain))
        object.__setattr__(self, "slot", norm(self.slot))
        object.__setattr__(self, "value", norm(self.value))
        t = self.act_type
        if t not in ACT_TYPES:
            raise PreconditionError(f"unknown act_type {t!r}")
        if t in BARE_ACTS:
            if self.domain or self.slot or self.value:
                raise PreconditionError(f"act {t!r} must carry no domain/slot/value")
        elif t == "request":
            if self.value:
                raise PreconditionError("request acts carry no value")
            if not self.domain or not self.slot:
                raise PreconditionError("request acts need a domain and a slot")
        elif t == "nooffer":
            if not self.domain:
                raise PreconditionError("nooffer acts need a domain")
        else:  # inform, offer, book
            if not self.domain or not self.slot:
                raise PreconditionError(f"{t} acts need a domain and a slot")


def inform(domain: str, slot: str, value: str) -> DialogueAct:
    return DialogueAct("inform", domain, slot, value)


def request(domain: str, slot: str) -> DialogueAct:
    return DialogueAct("request", domain, slot)


def offer(domain: str, slot: str, value: str) -> DialogueAct:
    return DialogueAct("offer", domain, slot, value)


def book(domain: str, value: str) -> DialogueAct:
    return DialogueAct("book", domain, REFERENCE_SLOT, value)


def nooffer(domain: str) -> DialogueAct:
    return DialogueAct("nooffer", domain)


BYE = DialogueAct("bye")
THANK = DialogueAct("thank")
GREET = DialogueAct("greet")


@dataclass(frozen=True)
class DomainSchema:
    """Per-domain slot layout: informable slot -> permitted values, requestable slots."""

    informable: Mapping[str, frozenset[str]]
    requestable: frozenset[str]


@dataclass(frozen=True)
class Ontology:
    """Closed slot/value schema every goal, belief, and database validates against."""

    domains: Mapping[str, DomainSchema]

    def has_domain(self, domain: str) -> bool:
        return domain in self.domains

    def informable_slots(self, domain: str) -> tuple[str, ...]:
        return tuple(sorted(self.domains[domain].informable))

    def requestable_slots(self, domain: str) -> tuple[str, ...]:
        return tuple(sorted(self.domains[domain].requestable))

    def is_informable(self, domain: str, slot: str) -> bool:
        return domain in self.domains and slot in self.domains[domain].informable

    def is_requestable(self, domain: str, slot: str) -> bool:
        return domain in self.domains and slot in self.domains[domain].requestable

    def valid_value(self, domain: str, slot: str, value: str) -> bool:
        if not self.is_informable(domain, slot):
            return False
        return norm(value) in self.domains[domain].informable[slot]

    @staticmethod
    def build(spec: Mapping[str, Mapping]) -> "Ontology":
        """Build from plain nested mappings (the corpus file layout)."""
        domains = {}
        for dom, schema in spec.items():
            informable = {
                norm(slot): frozenset(norm(v) for v in values)
                for slot, values in schema.get("informable", {}).items()
            }
            requestable = frozenset(norm(s) for s in schema.get("requestable", ()))
            domains[norm(dom)] = DomainSchema(informable, requestable)
        return Ontology(domains)


@dataclass(frozen=True)
class DomainGoal:
    """The user's wishes within one domain."""

    informable: Mapping[str, str]
    requestable: frozenset[str]
    needs_booking: bool = False


@dataclass(frozen=True)
class Goal:
    """The user's full task definition across domains."""

    domains: Mapping[str, DomainGoal]

    @staticmethod
    def build(spec: Mapping[str, Mapping]) -> "Goal":
        domains = {}
        for dom, g in spec.items():
            domains[norm(dom)] = DomainGoal(
                informable={norm(s): norm(v) for s, v in g.get("informable", {}).items()},
                requestable=frozenset(norm(s) for s in g.get("requestable", ())),
                needs_booking=bool(g.get("needs_booking", False)),
            )
        return Goal(domains)


@dataclass(frozen=True)
class InformObligation:
    domain: str
    slot: str
    value: str


@dataclass(frozen=True)
class RequestObligation:
    domain: str
    slot: str


@dataclass(frozen=True)
class BookingObligation:
    domain: str


GoalItem = Union[InformObligation, RequestObligation, BookingObligation]

# Sort key giving the canonical agenda order: informs, then requests, then bookings.
_KIND_RANK = {InformObligation: 0, RequestObligation: 1, BookingObligation: 2}


def item_sort_key(item: GoalItem) -> tuple:
    rank = _KIND_RANK[type(item)]
    if isinstance(item, InformObligation):
        return (rank, item.domain, item.slot, item.value)
    if isinstance(item, RequestObligation):
        return (rank, item.domain, item.slot, "")
    return (rank, item.domain, "", "")


@dataclass(frozen=True)
class GoalState:
    """Partition of a goal's items into unfinished and finished obligations."""

    unfinished: frozenset[GoalItem]
    finished: frozenset[GoalItem] = frozenset()

    @staticmethod
    def from_goal(goal: Goal) -> "GoalState":
        return GoalState(unfinished=goal_to_items(goal))

    @property
    def all_items(self) -> frozenset[GoalItem]:
        return self.unfinished | self.finished


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_goal(goal: Goal, ontology: Ontology) -> ValidationResult:
    """Check a goal against the ontology; violations are returned, never raised."""
    violations: list[str] = []
    if not goal.domains:
        violations.append("goal has no domains")
    for dom, g in goal.domains.items():
        if not ontology.has_domain(dom):
            violations.append(f"unknown domain {dom!r}")
            continue
        for slot, value in g.informable.items():
            if not ontology.is_informable(dom, slot):
                violations.append(f"unknown slot {dom}.{slot}")
            elif not ontology.valid_value(dom, slot, value):
                violations.append(f"unknown value {dom}.{slot}={value!r}")
        for slot in g.requestable:
            if not ontology.is_requestable(dom, slot):
                violations.append(f"unknown requestable {dom}.{slot}")
        overlap = set(g.informable) & set(g.requestable)
        if overlap:
            violations.append(
                f"overlapping slot sets in {dom}: {', '.join(sorted(overlap))}"
            )
    return ValidationResult(ok=not violations, violations=tuple(violations))


def goal_to_items(goal: Goal) -> frozenset[GoalItem]:
    """Expand a goal into its obligation items.

    One InformObligation per informable (domain, slot, value), one
    RequestObligation per requestable (domain, slot), one BookingObligation
    per domain that needs booking. An empty goal yields an empty set.
    """
    items: set[GoalItem] = set()
    for dom, g in goal.domains.items():
        overlap = set(g.informable) & set(g.requestable)
        if overlap:
            raise PreconditionError(
                f"invalid goal: slots {sorted(overlap)} both informable and requestable in {dom}"
            )
        for slot, value in g.informable.items():
            items.add(InformObligation(dom, slot, value))
        for slot in g.requestable:
            items.add(RequestObligation(dom, slot))
        if g.needs_booking:
            items.add(BookingObligation(dom))
    return frozenset(items)


class BeliefState:
    """The system's accumulated slot constraints, domain -> slot -> value."""

    __slots__ = ("_constraints",)

    def __init__(self, constraints: Mapping[str, Mapping[str, str]] | None = None):
        frozen: dict[str, dict[str, str]] = {}
        for dom, slots in (constraints or {}).items():
            if slots:
                frozen[norm(dom)] = {norm(s): norm(v) for s, v in slots.items()}
        self._constraints = frozen

    def with_inform(self, domain: str, slot: str, value: str) -> "BeliefState":
        updated = {d: dict(s) for d, s in self._constraints.items()}
        updated.setdefault(norm(domain), {})[norm(slot)] = norm(value)
        return BeliefState(updated)

    def constraints(self, domain: str) -> dict[str, str]:
        return dict(self._constraints.get(norm(domain), {}))

    def domains(self) -> tuple[str, ...]:
        return tuple(sorted(self._constraints))

    def as_dict(self) -> dict[str, dict[str, str]]:
        return {d: dict(s) for d, s in sorted(self._constraints.items())}

    def __eq__(self, other) -> bool:
        return isinstance(other, BeliefState) and self.as_dict() == other.as_dict()

    def __repr__(self) -> str:
        return f"BeliefState({self.as_dict()!r})"

    def validate(self, ontology: Ontology) -> ValidationResult:
        violations = [
            f"unknown constraint {d}.{s}"
            for d, slots in self._constraints.items()
            for s in slots
            if not ontology.is_informable(d, s)
        ]
        return ValidationResult(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class Turn:
    """One user/system exchange plus the belief snapshot after the system acted."""

    index: int
    user_utterance: str
    user_acts: tuple[DialogueAct, ...]
    system_utterance: str
    system_acts: tuple[DialogueAct, ...]
    belief_state: BeliefState = field(default_factory=BeliefState)

    def __post_init__(self):
        if self.index < 0:
            raise PreconditionError("turn index must be non-negative")
        object.__setattr__(self, "user_acts", tuple(self.user_acts))
        object.__setattr__(self, "system_acts", tuple(self.system_acts))


TERMINATIONS = ("goals_complete", "farewell_act", "max_turns_exceeded", "replay_exhausted")


@dataclass(frozen=True)
class Session:
    """A completed dialogue: the goal, its turns, and why it ended."""

    goal: Goal
    turns: tuple[Turn, ...]
    termination: str

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if self.termination not in TERMINATIONS:
            raise PreconditionError(f"unknown termination {self.termination!r}")
        for i, turn in enumerate(self.turns):
            if turn.index != i:
                raise PreconditionError("turn indices must be consecutive from 0")

    def user_utterances(self) -> tuple[str, ...]:
        return tuple(t.user_utterance for t in self.turns)

    def system_utterances(self) -> tuple[str, ...]:
        return tuple(t.system_utterance for t in self.turns)


class VenueDatabase:
    """Entity records per domain; each record maps slot -> value and has a unique name."""

    __slots__ = ("_entities",)

    def __init__(self, entities: Mapping[str, Iterable[Mapping[str, str]]]):
        store: dict[str, tuple[dict[str, str], ...]] = {}
        for dom, records in entities.items():
            rows = tuple({norm(s): norm(v) for s, v in rec.items()} for rec in records)
            names = [r.get(NAME_SLOT, "") for r in rows]
            if any(not n for n in names):
                raise PreconditionError(f"database {dom!r} has an entity without a name")
            if len(set(names)) != len(names):
                raise PreconditionError(f"database {dom!r} has duplicate entity names")
            store[norm(dom)] = rows
        self._entities = store

    def domains(self) -> tuple[str, ...]:
        return tuple(sorted(self._entities))

    def entities(self, domain: str) -> tuple[dict[str, str], ...]:
        return tuple(dict(r) for r in self._entities.get(norm(domain), ()))

    def query(self, domain: str, constraints: Mapping[str, str]) -> list[dict[str, str]]:
        """Entities of `domain` matching every constraint, in stored order."""
        wanted = {norm(s): norm(v) for s, v in constraints.items()}
        out = []
        for rec in self._entities.get(norm(domain), ()):
            if all(rec.get(s) == v for s, v in wanted.items()):
                out.append(dict(rec))
        return out

    def find(self, domain: str, name: str) -> dict[str, str] | None:
        target = norm(name)
        for rec in self._entities.get(norm(domain), ()):
            if rec.get(NAME_SLOT) == target:
                return dict(rec)
        return None

    def as_dict(self) -> dict[str, list[dict[str, str]]]:
        return {d: [dict(r) for r in rows] for d, rows in sorted(self._entities.items())}

    def __eq__(self, other) -> bool:
        return isinstance(other, VenueDatabase) and self.as_dict() == other.as_dict()

    def validate(self, ontology: Ontology) -> ValidationResult:
        violations: list[str] = []
        for dom, rows in self._entities.items():
            if not ontology.has_domain(dom):
                violations.append(f"unknown domain {dom!r}")
                continue
            for rec in rows:
                for slot, value in rec.items():
                    if slot == NAME_SLOT:
                        continue
                    if ontology.is_informable(dom, slot):
                        if not ontology.valid_value(dom, slot, value):
                            violations.append(
                                f"entity {rec.get(NAME_SLOT)}: bad value {dom}.{slot}={value!r}"
                            )
                    elif not ontology.is_requestable(dom, slot):
                        violations.append(
                            f"entity {rec.get(NAME_SLOT)}: unknown slot {dom}.{slot}"
                        )
        return ValidationResult(ok=not violations, violations=tuple(violations))
