"""Canonical JSON encoding for every shared data type.

decode(encode(x)) == x for all of them, and encoding is canonical (sorted
keys, compact separators) so equal values always produce identical bytes.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .agents import PolicyParameters
from .domain import (
    BeliefState,
    BookingObligation,
    DialogueAct,
    Goal,
    GoalItem,
    GoalState,
    InformObligation,
    Ontology,
    RequestObligation,
    Session,
    Turn,
    VenueDatabase,
)
from .engine import AnnotatedDialogue, AnnotatedTurn
from .errors import SchemaError


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def act_to_obj(act: DialogueAct) -> dict:
    out = {"act": act.act_type}
    if act.domain:
        out["domain"] = act.domain
    if act.slot:
        out["slot"] = act.slot
    if act.value:
        out["value"] = act.value
    return out


def act_from_obj(obj: dict) -> DialogueAct:
    if not isinstance(obj, dict) or "act" not in obj:
        raise SchemaError(f"not a dialogue act: {obj!r}", source="act")
    return DialogueAct(obj["act"], obj.get("domain", ""), obj.get("slot", ""),
                       obj.get("value", ""))


def goal_to_obj(goal: Goal) -> dict:
    return {
        dom: {
            "informable": dict(sorted(g.informable.items())),
            "requestable": sorted(g.requestable),
            "needs_booking": g.needs_booking,
        }
        for dom, g in sorted(goal.domains.items())
    }


def goal_from_obj(obj: dict) -> Goal:
    if not isinstance(obj, dict):
        raise SchemaError(f"not a goal object: {obj!r}", source="goal")
    return Goal.build(obj)


def _item_to_obj(item: GoalItem) -> dict:
    if isinstance(item, InformObligation):
        return {"kind": "inform", "domain": item.domain, "slot": item.slot,
                "value": item.value}
    if isinstance(item, RequestObligation):
        return {"kind": "request", "domain": item.domain, "slot": item.slot}
    return {"kind": "booking", "domain": item.domain}


def _item_from_obj(obj: dict) -> GoalItem:
    kind = obj.get("kind")
    if kind == "inform":
        return InformObligation(obj["domain"], obj["slot"], obj["value"])
    if kind == "request":
        return RequestObligation(obj["domain"], obj["slot"])
    if kind == "booking":
        return BookingObligation(obj["domain"])
    raise SchemaError(f"unknown goal item kind {kind!r}", source="goal_state")


def goal_state_to_obj(state: GoalState) -> dict:
    return {
        "unfinished": sorted((_item_to_obj(i) for i in state.unfinished),
                             key=canonical_json),
        "finished": sorted((_item_to_obj(i) for i in state.finished),
                           key=canonical_json),
    }


def goal_state_from_obj(obj: dict) -> GoalState:
    return GoalState(
        unfinished=frozenset(_item_from_obj(i) for i in obj.get("unfinished", [])),
        finished=frozenset(_item_from_obj(i) for i in obj.get("finished", [])),
    )


def belief_to_obj(belief: BeliefState) -> dict:
    return belief.as_dict()


def belief_from_obj(obj: dict) -> BeliefState:
    return BeliefState(obj)


def turn_to_obj(turn: Turn) -> dict:
    return {
        "index": turn.index,
        "user_utterance": turn.user_utterance,
        "user_acts": [act_to_obj(a) for a in turn.user_acts],
        "system_utterance": turn.system_utterance,
        "system_acts": [act_to_obj(a) for a in turn.system_acts],
        "belief_state": belief_to_obj(turn.belief_state),
    }


def turn_from_obj(obj: dict) -> Turn:
    return Turn(
        index=int(obj["index"]),
        user_utterance=obj.get("user_utterance", ""),
        user_acts=tuple(act_from_obj(a) for a in obj.get("user_acts", [])),
        system_utterance=obj.get("system_utterance", ""),
        system_acts=tuple(act_from_obj(a) for a in obj.get("system_acts", [])),
        belief_state=belief_from_obj(obj.get("belief_state", {})),
    )


def session_to_obj(session: Session) -> dict:
    return {
        "goal": goal_to_obj(session.goal),
        "turns": [turn_to_obj(t) for t in session.turns],
        "termination": session.termination,
    }


def session_from_obj(obj: dict) -> Session:
    return Session(
        goal=goal_from_obj(obj.get("goal", {})),
        turns=tuple(turn_from_obj(t) for t in obj.get("turns", [])),
        termination=obj.get("termination", ""),
    )


def dialogue_to_obj(dialogue: AnnotatedDialogue) -> dict:
    return {
        "goal": goal_to_obj(dialogue.goal),
        "turns": [
            {
                "user_utterance": t.user_utterance,
                "user_acts": [act_to_obj(a) for a in t.user_acts],
                "system_utterance": t.system_utterance,
                "system_acts": [act_to_obj(a) for a in t.system_acts],
            }
            for t in dialogue.turns
        ],
    }


def dialogue_from_obj(obj: dict) -> AnnotatedDialogue:
    turns = tuple(
        AnnotatedTurn(
            user_utterance=t.get("user_utterance", ""),
            user_acts=tuple(act_from_obj(a) for a in t.get("user_acts", [])),
            system_utterance=t.get("system_utterance", ""),
            system_acts=tuple(act_from_obj(a) for a in t.get("system_acts", [])),
        )
        for t in obj.get("turns", [])
    )
    return AnnotatedDialogue(goal=goal_from_obj(obj.get("goal", {})), turns=turns)


def ontology_to_obj(ontology: Ontology) -> dict:
    return {
        dom: {
            "informable": {s: sorted(vs) for s, vs in sorted(schema.informable.items())},
            "requestable": sorted(schema.requestable),
        }
        for dom, schema in sorted(ontology.domains.items())
    }


def ontology_from_obj(obj: dict) -> Ontology:
    if not isinstance(obj, dict) or not obj:
        raise SchemaError("ontology must be a non-empty object", source="ontology")
    return Ontology.build(obj)


def database_to_obj(db: VenueDatabase) -> dict:
    return db.as_dict()


def database_from_obj(obj: dict) -> VenueDatabase:
    if not isinstance(obj, dict):
        raise SchemaError("database must be an object", source="database")
    return VenueDatabase(obj)


def policy_to_obj(params: PolicyParameters) -> dict:
    return {
        "format": "todsim-policy",
        "version": 1,
        "role": params.role,
        "action_vocabulary": list(params.action_vocabulary),
        "feature_schema": params.feature_schema,
        "feature_names": list(params.feature_names),
        "weights": [[float(w) for w in row] for row in params.weights],
    }


def policy_from_obj(obj: dict) -> PolicyParameters:
    if obj.get("format") != "todsim-policy" or obj.get("version") != 1:
        raise SchemaError("not a todsim-policy v1 document", source="policy")
    return PolicyParameters(
        role=obj["role"],
        action_vocabulary=tuple(obj["action_vocabulary"]),
        feature_schema=obj["feature_schema"],
        feature_names=tuple(obj["feature_names"]),
        weights=np.asarray(obj["weights"], dtype=np.float64),
    )
