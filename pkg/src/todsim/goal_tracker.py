"""Goal-state tracking: derive finished obligations from a turn's acts,
cut them from the unfinished set, and decide when a session ends.

All functions are pure over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .domain import (
    BookingObligation,
    DialogueAct,
    GoalItem,
    GoalState,
    InformObligation,
    RequestObligation,
    REFERENCE_SLOT,
)
from .errors import PreconditionError


@dataclass(frozen=True)
class TerminationConfig:
    max_turns: int = 20
    farewell_acts: frozenset[str] = field(default_factory=lambda: frozenset({"bye", "thank"}))

    def __post_init__(self):
        if self.max_turns < 1:
            raise PreconditionError("max_turns must be >= 1")


def extract_finished(
    state: GoalState,
    user_acts: list[DialogueAct] | tuple[DialogueAct, ...],
    system_acts: list[DialogueAct] | tuple[DialogueAct, ...],
) -> frozenset[GoalItem]:
    """Obligations from state.unfinished that this turn's acts finish.

    - InformObligation(d, s, v): the user informed exactly (d, s, v).
    - RequestObligation(d, s): the system informed or offered (d, s) with a
      non-empty value.
    - BookingObligation(d): the system emitted book(d, reference, ...) with a
      non-empty reference.

    A system nooffer never finishes anything; the obligation stays open.
    """
    user_informs = {
        (a.domain, a.slot, a.value) for a in user_acts if a.act_type == "inform"
    }
    system_answers = {
        (a.domain, a.slot)
        for a in system_acts
        if a.act_type in ("inform", "offer") and a.value
    }
    booked = {
        a.domain
        for a in system_acts
        if a.act_type == "book" and a.slot == REFERENCE_SLOT and a.value
    }

    finished: set[GoalItem] = set()
    for item in state.unfinished:
        if isinstance(item, InformObligation):
            if (item.domain, item.slot, item.value) in user_informs:
                finished.add(item)
        elif isinstance(item, RequestObligation):
            if (item.domain, item.slot) in system_answers:
                finished.add(item)
        elif isinstance(item, BookingObligation):
            if item.domain in booked:
                finished.add(item)
    return frozenset(finished)


def update(state: GoalState, finished: frozenset[GoalItem]) -> GoalState:
    """Move `finished` items out of the unfinished set.

    Conservation holds by construction: no item is created or lost.
    """
    stray = set(finished) - set(state.unfinished)
    if stray:
        raise PreconditionError(f"items not in unfinished set: {sorted(map(str, stray))}")
    return GoalState(
        unfinished=state.unfinished - finished,
        finished=state.finished | frozenset(finished),
    )


def should_terminate(
    state: GoalState,
    turn_index: int,
    last_user_acts: list[DialogueAct] | tuple[DialogueAct, ...],
    last_system_acts: list[DialogueAct] | tuple[DialogueAct, ...],
    cfg: TerminationConfig,
) -> str | None:
    """Termination reason after a turn, or None to keep going.

    Checks, in priority order: every obligation finished; a farewell act on
    either side; the turn cap reached (turn_index + 1 >= max_turns).
    """
    if not state.unfinished:
        return "goals_complete"
    acts = tuple(last_user_acts) + tuple(last_system_acts)
    if any(a.act_type in cfg.farewell_acts for a in acts):
        return "farewell_act"
    if turn_index + 1 >= cfg.max_turns:
        return "max_turns_exceeded"
    return None
