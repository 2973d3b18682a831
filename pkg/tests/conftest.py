import pytest

from todsim.agents import AgendaUser, RuleSystem
from todsim.corpus import dialogue_to_session, load_corpus
from todsim.engine import run_interactive
from todsim.goal_tracker import TerminationConfig
from todsim.metrics import tokenize
from todsim.scorers import make_pair_samples, train_lm, train_session_scorer


@pytest.fixture(scope="session")
def bundle():
    return load_corpus("toy")


@pytest.fixture(scope="session")
def toy_sessions(bundle):
    return [dialogue_to_session(d) for d in bundle.dialogues]


@pytest.fixture(scope="session")
def toy_lm(bundle):
    corpus = []
    for d in bundle.dialogues:
        for t in d.turns:
            corpus.append(tokenize(t.user_utterance))
            corpus.append(tokenize(t.system_utterance))
    return train_lm([c for c in corpus if c], order=3, smoothing=0.1)


@pytest.fixture(scope="session")
def toy_clf(toy_sessions):
    samples = make_pair_samples(toy_sessions, negative_ratio=1.0, seed=3)
    return train_session_scorer(samples, seed=3)


@pytest.fixture(scope="session")
def interactive_session_factory(bundle):
    """Seeded agenda/rule sessions for scorer and metric tests."""

    def make(goal, seed=0, max_turns=20, k=2):
        return run_interactive(AgendaUser(k=k), RuleSystem(bundle.db), goal,
                               bundle.db, TerminationConfig(max_turns=max_turns), seed)

    return make
