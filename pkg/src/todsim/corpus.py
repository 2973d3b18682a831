"""Corpus ingestion and fixtures.

Corpus bundles are four UTF-8 JSON documents in one directory: ontology,
database, goals, dialogues. The built-in toy corpus under todsim/data/toy is
the normative example of the schemas. Dialogue acts from richer annotation
schemes are folded onto the closed act set at ingestion (alias table below),
counting one warning per folded or dropped act.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .agents import PolicyParameters, absorb_user_informs
from .domain import (
    BeliefState,
    Goal,
    Ontology,
    Session,
    Turn,
    VenueDatabase,
    validate_goal,
)
from .engine import AnnotatedDialogue, AnnotatedTurn
from .errors import SchemaError
from .serialize import (
    act_from_obj,
    canonical_json,
    database_from_obj,
    dialogue_to_obj,
    goal_from_obj,
    goal_to_obj,
    ontology_from_obj,
    policy_from_obj,
    policy_to_obj,
    session_from_obj,
    session_to_obj,
)

# Richer annotation schemes fold onto the closed act set.
ACT_ALIASES = {
    "recommend": "offer",
    "select": "offer",
    "offerbook": "book",
    "offerbooked": "book",
    "nobook": "nooffer",
    "welcome": "greet",
    "reqmore": "greet",
}

KNOWN_ACTS = {"inform", "request", "offer", "book", "nooffer", "bye", "thank", "greet"}

TOY_CORPUS = "toy"


@dataclass(frozen=True)
class CorpusBundle:
    ontology: Ontology
    db: VenueDatabase
    goals: tuple[Goal, ...]
    dialogues: tuple[AnnotatedDialogue, ...]
    warnings: int = 0


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SchemaError("file not found", source=str(path))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}", source=str(path))


def _map_act_obj(obj: dict, warnings: list[int]) -> dict | None:
    """Fold one raw act object onto the closed act set; None drops it."""
    act = str(obj.get("act", "")).strip().lower()
    if act in KNOWN_ACTS:
        return obj
    warnings[0] += 1
    if act in ACT_ALIASES:
        return {**obj, "act": ACT_ALIASES[act]}
    if obj.get("domain") and obj.get("slot"):
        return {**obj, "act": "inform"}
    return None


def _acts_from_objs(objs: Iterable[dict], warnings: list[int], *, source: str, path: str):
    acts = []
    for i, raw in enumerate(objs):
        mapped = _map_act_obj(raw, warnings)
        if mapped is None:
            continue
        try:
            acts.append(act_from_obj(mapped))
        except Exception as exc:
            raise SchemaError(str(exc), source=source, path=f"{path}.acts[{i}]")
    return tuple(acts)


def toy_corpus_dir() -> Path:
    return Path(resources.files("todsim").joinpath("data", "toy"))  # type: ignore[arg-type]


def load_corpus(location: str | Path = TOY_CORPUS) -> CorpusBundle:
    """Load and cross-validate a corpus directory ("toy" for the built-in one)."""
    root = toy_corpus_dir() if str(location) == TOY_CORPUS else Path(location)
    ontology = ontology_from_obj(_read_json(root / "ontology.json"))
    db = database_from_obj(_read_json(root / "database.json"))
    db_check = db.validate(ontology)
    if not db_check.ok:
        raise SchemaError("; ".join(db_check.violations),
                          source=str(root / "database.json"))

    warnings = [0]
    goals = []
    for i, obj in enumerate(_read_json(root / "goals.json")):
        goal = goal_from_obj(obj)
        check = validate_goal(goal, ontology)
        if not check.ok:
            raise SchemaError("; ".join(check.violations),
                              source=str(root / "goals.json"), path=f"goals[{i}]")
        goals.append(goal)

    dialogues = []
    dlg_path = root / "dialogues.json"
    for i, obj in enumerate(_read_json(dlg_path)):
        goal = goal_from_obj(obj.get("goal", {}))
        check = validate_goal(goal, ontology)
        if not check.ok:
            raise SchemaError("; ".join(check.violations),
                              source=str(dlg_path), path=f"dialogues[{i}].goal")
        raw_turns = obj.get("turns", [])
        if not raw_turns:
            raise SchemaError("dialogue has no turns", source=str(dlg_path),
                              path=f"dialogues[{i}]")
        turns = []
        for j, t in enumerate(raw_turns):
            where = f"dialogues[{i}].turns[{j}]"
            turns.append(AnnotatedTurn(
                user_utterance=t.get("user_utterance", ""),
                user_acts=_acts_from_objs(t.get("user_acts", []), warnings,
                                          source=str(dlg_path), path=where),
                system_utterance=t.get("system_utterance", ""),
                system_acts=_acts_from_objs(t.get("system_acts", []), warnings,
                                            source=str(dlg_path), path=where),
            ))
        dialogues.append(AnnotatedDialogue(goal, tuple(turns)))

    return CorpusBundle(ontology, db, tuple(goals), tuple(dialogues), warnings[0])


def sample_goals(ontology: Ontology, db: VenueDatabase, n: int, seed: int, *,
                 min_informs: int = 1, max_informs: int = 3, min_requests: int = 1,
                 max_requests: int = 3, booking_prob: float = 0.5,
                 multi_domain_prob: float = 0.3) -> list[Goal]:
    """Draw n satisfiable goals: constraints are copied off a database entity,
    so at least one venue always matches."""
    rng = np.random.default_rng(seed)
    domains = db.domains()
    goals = []
    for _ in range(n):
        count = 2 if len(domains) > 1 and rng.random() < multi_domain_prob else 1
        picked = list(rng.choice(len(domains), size=count, replace=False))
        spec = {}
        for di in picked:
            dom = domains[int(di)]
            rows = db.entities(dom)
            ent = rows[int(rng.integers(len(rows)))]
            informable_slots = [s for s in ontology.informable_slots(dom) if s in ent]
            hi = min(max_informs, len(informable_slots))
            lo = min(min_informs, hi)
            n_inf = int(rng.integers(lo, hi + 1))
            chosen = rng.choice(len(informable_slots), size=n_inf, replace=False)
            requestables = list(ontology.requestable_slots(dom))
            n_req = int(rng.integers(min_requests, max_requests + 1))
            req_idx = rng.choice(len(requestables), size=min(n_req, len(requestables)),
                                 replace=False)
            spec[dom] = {
                "informable": {informable_slots[int(i)]: ent[informable_slots[int(i)]]
                               for i in chosen},
                "requestable": [requestables[int(i)] for i in req_idx],
                "needs_booking": bool(rng.random() < booking_prob),
            }
        goals.append(Goal.build(spec))
    return goals


def dialogue_to_session(dialogue: AnnotatedDialogue) -> Session:
    """View an annotated dialogue as a session (for scorer training)."""
    belief = BeliefState()
    turns = []
    for i, t in enumerate(dialogue.turns):
        belief = absorb_user_informs(belief, t.user_acts)
        turns.append(Turn(i, t.user_utterance, t.user_acts,
                          t.system_utterance, t.system_acts, belief))
    return Session(dialogue.goal, tuple(turns), "replay_exhausted")


def save_sessions(path: str | Path, sessions: Sequence[Session]) -> None:
    lines = [canonical_json(session_to_obj(s)) for s in sessions]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_sessions(path: str | Path) -> list[Session]:
    sessions = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            sessions.append(session_from_obj(json.loads(line)))
        except Exception as exc:
            raise SchemaError(f"bad session line: {exc}", source=str(path),
                              path=f"line {i + 1}")
    return sessions


def save_policy(path: str | Path, params: PolicyParameters) -> None:
    Path(path).write_text(json.dumps(policy_to_obj(params), sort_keys=True, indent=1),
                          encoding="utf-8")


def load_policy(path: str | Path, ontology: Ontology | None = None) -> PolicyParameters:
    params = policy_from_obj(_read_json(Path(path)))
    if ontology is not None:
        params.validate(ontology)
    return params


def save_goals(path: str | Path, goals: Sequence[Goal]) -> None:
    obj = [goal_to_obj(g) for g in goals]
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1), encoding="utf-8")


def save_dialogues(path: str | Path, dialogues: Sequence[AnnotatedDialogue]) -> None:
    obj = [dialogue_to_obj(d) for d in dialogues]
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1), encoding="utf-8")
