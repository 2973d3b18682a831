"""Regenerate the frozen toy goals and annotated dialogues.

The dialogues are agenda-simulator / rule-system sessions over sampled
goals; freezing them keeps tests and scorer training deterministic without
shipping any external data.
"""

import json
from pathlib import Path

from todsim.agents import AgendaUser, RuleSystem
from todsim.corpus import sample_goals, save_dialogues, save_goals
from todsim.engine import AnnotatedDialogue, AnnotatedTurn, run_interactive
from todsim.goal_tracker import TerminationConfig
from todsim.serialize import database_from_obj, ontology_from_obj

N_GOALS = 40
N_DIALOGUES = 48


def main():
    root = Path(__file__).resolve().parents[1] / "src" / "todsim" / "data" / "toy"
    ontology = ontology_from_obj(json.loads((root / "ontology.json").read_text()))
    db = database_from_obj(json.loads((root / "database.json").read_text()))

    goals = sample_goals(ontology, db, N_GOALS, seed=11)
    save_goals(root / "goals.json", goals)

    dialogue_goals = sample_goals(ontology, db, N_DIALOGUES, seed=23)
    simulator = AgendaUser(k=2)
    system = RuleSystem(db)
    dialogues = []
    for i, goal in enumerate(dialogue_goals):
        session = run_interactive(simulator, system, goal, db,
                                  TerminationConfig(), seed=1000 + i)
        turns = tuple(
            AnnotatedTurn(t.user_utterance, t.user_acts,
                          t.system_utterance, t.system_acts)
            for t in session.turns
        )
        dialogues.append(AnnotatedDialogue(goal, turns))
    save_dialogues(root / "dialogues.json", dialogues)
    print(f"wrote {len(goals)} goals and {len(dialogues)} dialogues to {root}")


if __name__ == "__main__":
    main()
