import pytest

from todsim.agents import AgendaUser, PlaybackSystem, RuleSystem, uniform_random_system
from todsim.domain import Goal, goal_to_items
from todsim.engine import (
    AnnotatedDialogue,
    AnnotatedTurn,
    run_corpus,
    run_interactive,
    run_traditional,
)
from todsim.errors import EngineError, PreconditionError
from todsim.goal_tracker import TerminationConfig
from todsim.metrics import inform_success

TWO_ITEM_GOAL = Goal.build({"restaurant": {"informable": {"food": "italian"},
                                           "requestable": ["phone"]}})


class TestRunInteractive:
    def test_empty_goal_terminates_turn_zero(self, bundle):
        session = run_interactive(AgendaUser(), RuleSystem(bundle.db), Goal({}),
                                  bundle.db, TerminationConfig(), seed=0)
        assert len(session.turns) == 1
        assert session.termination == "goals_complete"
        assert [a.act_type for a in session.turns[0].user_acts] == ["bye"]

    def test_two_item_goal_hand_trace(self, bundle):
        # turn 0: inform + request answered; turn 1: bye <-> bye
        session = run_interactive(AgendaUser(k=2), RuleSystem(bundle.db),
                                  TWO_ITEM_GOAL, bundle.db, TerminationConfig(), seed=0)
        assert len(session.turns) == 2
        assert session.termination == "goals_complete"
        t0, t1 = session.turns
        assert [a.act_type for a in t0.user_acts] == ["inform", "request"]
        answered = [a for a in t0.system_acts if a.act_type == "inform"]
        # DB-scan oracle: first italian restaurant in stored order
        first_italian = next(r for r in bundle.db.entities("restaurant")
                             if r["food"] == "italian")
        assert answered == [a for a in answered if a.value == first_italian["phone"]]
        assert [a.act_type for a in t1.user_acts] == ["bye"]
        assert [a.act_type for a in t1.system_acts] == ["bye"]
        result = inform_success(session, bundle.db)
        assert (result.inform, result.success) == (1, 1)

    def test_non_progress_hits_max_turns(self, bundle):
        class StonewallSystem:
            def system_turn(self, belief, history, user_utterance, user_acts, seed):
                from todsim.agents import AgentTurnOutput
                from todsim.domain import request
                from todsim.templates import SYSTEM, realize

                acts = (request("restaurant", "area"),)
                return belief, AgentTurnOutput(acts, realize(SYSTEM, acts))

        session = run_interactive(AgendaUser(), StonewallSystem(), TWO_ITEM_GOAL,
                                  bundle.db, TerminationConfig(max_turns=20), seed=0)
        assert session.termination == "max_turns_exceeded"
        assert len(session.turns) == 20

    def test_session_length_bounded_by_max_turns(self, bundle):
        system = uniform_random_system(bundle.ontology, bundle.db)
        for max_turns in (1, 3, 7):
            cfg = TerminationConfig(max_turns=max_turns)
            for i, goal in enumerate(bundle.goals[:10]):
                session = run_interactive(AgendaUser(), system, goal, bundle.db, cfg,
                                          seed=i)
                assert len(session.turns) <= max_turns

    def test_closed_loop_bound(self, bundle):
        for i, goal in enumerate(bundle.goals):
            session = run_interactive(AgendaUser(k=2), RuleSystem(bundle.db), goal,
                                      bundle.db, TerminationConfig(), seed=i)
            assert session.termination == "goals_complete"
            assert len(session.turns) <= len(goal_to_items(goal)) + 2

    def test_agent_failure_attaches_partial_session(self, bundle):
        class ExplodingSystem:
            def system_turn(self, belief, history, user_utterance, user_acts, seed):
                if len(history) >= 1:
                    raise RuntimeError("boom")
                return RuleSystem(bundle.db).system_turn(
                    belief, history, user_utterance, user_acts, seed)

        goal = Goal.build({"restaurant": {"informable": {"food": "italian"},
                                          "requestable": ["phone", "postcode",
                                                          "address"]}})
        with pytest.raises(EngineError) as err:
            run_interactive(AgendaUser(k=1), ExplodingSystem(), goal, bundle.db,
                            TerminationConfig(), seed=0)
        assert len(err.value.partial_session.turns) == 1

    def test_user_turns_depend_only_on_generated_history(self, bundle):
        """Instrumentation: the simulator only ever sees the turns produced
        so far in this very run."""
        produced = []

        class InstrumentedUser(AgendaUser):
            def user_turn(self, state, history, seed):
                assert [t.user_utterance for t in history] == \
                    [p[0] for p in produced]
                assert [t.system_utterance for t in history] == \
                    [p[1] for p in produced]
                return super().user_turn(state, history, seed)

        class RecordingSystem(RuleSystem):
            def system_turn(self, belief, history, user_utterance, user_acts, seed):
                belief, out = super().system_turn(belief, history, user_utterance,
                                                  user_acts, seed)
                produced.append((user_utterance, out.utterance))
                return belief, out

        for i, goal in enumerate(bundle.goals[:10]):
            produced.clear()
            run_interactive(InstrumentedUser(), RecordingSystem(bundle.db), goal,
                            bundle.db, TerminationConfig(), seed=i)


class TestRunTraditional:
    def test_oracle_playback_reproduces_dialogue(self, bundle):
        dialogue = bundle.dialogues[0]
        session = run_traditional(PlaybackSystem(dialogue), dialogue, bundle.db)
        assert session.termination == "replay_exhausted"
        assert len(session.turns) == len(dialogue.turns)
        for turn, at in zip(session.turns, dialogue.turns):
            assert turn.user_utterance == at.user_utterance
            assert turn.system_utterance == at.system_utterance
            assert turn.user_acts == at.user_acts
            assert turn.system_acts == at.system_acts

    def test_user_turns_byte_identical(self, bundle):
        for dialogue in bundle.dialogues[:10]:
            session = run_traditional(RuleSystem(bundle.db), dialogue, bundle.db)
            for turn, at in zip(session.turns, dialogue.turns):
                assert turn.user_utterance == at.user_utterance
                assert turn.user_acts == at.user_acts

    def test_mismatch_recorded_verbatim(self, bundle):
        # the annotated user presupposes a hotel answer that rule never gave
        from todsim.domain import inform, request

        turns = (
            AnnotatedTurn("i am looking for a hotel whose area is north .",
                          (inform("hotel", "area", "north"),),
                          "oracle reply", ()),
            AnnotatedTurn("what is the phone of the restaurant ?",
                          (request("restaurant", "phone"),),
                          "oracle reply 2", ()),
        )
        goal = Goal.build({"hotel": {"informable": {"area": "north"},
                                     "requestable": ["phone"]}})
        dialogue = AnnotatedDialogue(goal, turns)
        session = run_traditional(RuleSystem(bundle.db), dialogue, bundle.db)
        # replay never repairs: the restaurant question is asked even though
        # the generated history was all about hotels
        assert session.turns[1].user_utterance == turns[1].user_utterance
        assert session.turns[1].user_acts == turns[1].user_acts

    def test_empty_dialogue_rejected(self, bundle):
        dialogue = AnnotatedDialogue.__new__(AnnotatedDialogue)
        object.__setattr__(dialogue, "goal", Goal({}))
        object.__setattr__(dialogue, "turns", ())
        with pytest.raises(PreconditionError, match="empty dialogue"):
            run_traditional(RuleSystem(bundle.db), dialogue, bundle.db)


class TestRunCorpus:
    def test_interactive_closed_loop_all_success(self, bundle):
        report = run_corpus("interactive", AgendaUser(), RuleSystem(bundle.db),
                            bundle.goals, bundle.db, seed=3)
        assert report.aggregates.inform_pct == 100.0
        assert report.aggregates.success_pct == 100.0
        assert report.aggregates.bleu is None
        assert report.aggregates.combined is None

    def test_traditional_oracle_playback_bleu_100(self, bundle):
        report = run_corpus("traditional", None, None, bundle.dialogues, bundle.db,
                            seed=3, system_factory=PlaybackSystem)
        assert report.aggregates.bleu == pytest.approx(100.0)
        assert report.aggregates.combined == pytest.approx(
            (report.aggregates.inform_pct + report.aggregates.success_pct) / 2 + 100.0)

    def test_aggregates_recomputable_from_records(self, bundle, toy_lm, toy_clf):
        report = run_corpus("interactive", AgendaUser(), RuleSystem(bundle.db),
                            bundle.goals[:10], bundle.db,
                            sent_scorer=toy_lm, pair_scorer=toy_clf, seed=5)
        ok = [r for r in report.records if r.error is None]
        assert report.aggregates.inform_pct == pytest.approx(
            100.0 * sum(r.inform for r in ok) / len(ok))
        assert report.aggregates.success_pct == pytest.approx(
            100.0 * sum(r.success for r in ok) / len(ok))
        assert report.aggregates.mean_sent == pytest.approx(
            sum(r.sent_score for r in ok) / len(ok))
        assert report.aggregates.mean_sess == pytest.approx(
            sum(r.sess_score for r in ok) / len(ok))

    def test_worker_count_does_not_change_records(self, bundle, toy_lm, toy_clf):
        kwargs = dict(inputs=bundle.goals, db=bundle.db, sent_scorer=toy_lm,
                      pair_scorer=toy_clf, seed=11)
        seq = run_corpus("interactive", AgendaUser(), RuleSystem(bundle.db),
                         workers=1, **kwargs)
        par = run_corpus("interactive", AgendaUser(), RuleSystem(bundle.db),
                         workers=8, **kwargs)
        assert seq.records == par.records
        assert seq.aggregates == par.aggregates

    def test_failures_recorded_and_excluded(self, bundle):
        class FlakySystem(RuleSystem):
            def system_turn(self, belief, history, user_utterance, user_acts, seed):
                if not history and "hotel" in user_utterance:
                    raise RuntimeError("flaky")
                return super().system_turn(belief, history, user_utterance,
                                           user_acts, seed)

        report = run_corpus("interactive", AgendaUser(), FlakySystem(bundle.db),
                            bundle.goals, bundle.db, seed=3)
        assert report.aggregates.failures > 0
        failing = [r for r in report.records if r.error is not None]
        assert all("flaky" in r.error for r in failing)
        assert report.aggregates.sessions + report.aggregates.failures \
            == len(bundle.goals)

    def test_empty_inputs_rejected(self, bundle):
        with pytest.raises(PreconditionError):
            run_corpus("interactive", AgendaUser(), RuleSystem(bundle.db), [],
                       bundle.db)

    def test_unknown_mode_rejected(self, bundle):
        with pytest.raises(PreconditionError):
            run_corpus("hybrid", AgendaUser(), RuleSystem(bundle.db), bundle.goals,
                       bundle.db)
