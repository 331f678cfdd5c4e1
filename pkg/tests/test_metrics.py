import json
from importlib.resources import files

import pytest

from stageflow.metrics import (
    DialogueMetrics,
    MetricsReport,
    PersonaFacts,
    causal_chain_present,
    compute_session_metrics,
    metaphor_reframe_present,
)
from stageflow.store import read_events

from .helpers import LogBuilder
from .oracles import oracle_metrics

ROOT = "business failure"


def metrics_for(builder, lexicon, hidden=(), root=None):
    return compute_session_metrics(
        builder.events, PersonaFacts(hidden_stressors=tuple(hidden), root_cause=root), lexicon
    )


def assert_matches_oracle(builder, lexicon, hidden=(), root=None):
    got = metrics_for(builder, lexicon, hidden, root).to_dict()
    want = oracle_metrics(builder.records(), list(hidden), root)
    for key, value in want.items():
        if key == "counts":
            continue
        if isinstance(value, bool):
            assert got[key] == value, key
        else:
            assert got[key] == pytest.approx(value, abs=1e-9), key
    return want


def plain_session():
    return (
        LogBuilder()
        .user("It was a long week.")
        .go("continue")
        .agent("That sounds tiring. What part weighs most?")
        .user("Mostly the commute.")
        .go("continue")
        .agent("Long commutes can drain the whole day.")
    )


def test_uneventful_session_baseline(lexicon):
    m = metrics_for(plain_session(), lexicon)
    assert m.exposure_completeness == 1.0  # no hidden stressors to expose
    assert not m.restructuring_success
    assert m.adoption_rate == 0.0
    assert m.premature_suggestion_rate == 0.0
    assert m.ineffective_support_rate == 0.0
    assert not m.root_cause_identified
    assert not m.plans_proposed
    assert m.score() == pytest.approx(3.0 / 6.0)
    assert_matches_oracle(plain_session(), lexicon)


def test_exposure_requires_reveal_then_acknowledgment(lexicon):
    revealed_and_named = (
        LogBuilder()
        .user("Work has been rough.")
        .go("continue")
        .agent("What makes it rough lately?")
        .user("Honestly the workload is crushing me.")
        .go("continue")
        .agent("That workload sounds relentless.")
    )
    m = metrics_for(revealed_and_named, lexicon, hidden=["workload"])
    assert m.exposure_completeness == 1.0

    revealed_never_named = (
        LogBuilder()
        .user("Work has been rough.")
        .go("continue")
        .agent("What makes it rough lately?")
        .user("Honestly the workload is crushing me.")
        .go("continue")
        .agent("I hear you.")
    )
    assert metrics_for(revealed_never_named, lexicon, hidden=["workload"]).exposure_completeness == 0.0

    named_before_reveal = (
        LogBuilder()
        .user("Work has been rough.")
        .go("continue")
        .agent("Is it the workload?")
        .user("Maybe.")
        .go("continue")
        .agent("Take your time.")
        .user("Fine — yes, the workload.")
        .go("continue")
        .agent("Thank you for saying it.")
    )
    assert metrics_for(named_before_reveal, lexicon, hidden=["workload"]).exposure_completeness == 0.0

    partial = (
        LogBuilder()
        .user("The workload is too much.")
        .go("continue")
        .agent("The workload part sounds heavy.")
    )
    m = metrics_for(partial, lexicon, hidden=["workload", "marriage"])
    assert m.exposure_completeness == 0.5
    assert_matches_oracle(partial, lexicon, hidden=["workload", "marriage"])


def test_restructuring_chain_with_later_acknowledgment(lexicon):
    b = (
        LogBuilder()
        .user("I feel trapped, no matter how hard I try.")
        .go("ready_for_insight")
        .agent(
            "Could the fear itself be steering you?",
            reasoning=f"{ROOT} → fear of repeating it → hesitation",
        )
        .user("That makes sense, I had not connected those.")
        .go("continue")
        .agent("That connection took honesty to see.")
    )
    m = metrics_for(b, lexicon, root=ROOT)
    assert m.restructuring_success
    assert m.root_cause_identified
    assert_matches_oracle(b, lexicon, root=ROOT)


def test_restructuring_fails_without_acknowledgment(lexicon):
    b = (
        LogBuilder()
        .user("I feel trapped.")
        .go("ready_for_insight")
        .agent("A thought.", reasoning=f"{ROOT} → fear → hesitation")
        .user("Hmm, maybe.")
        .go("continue")
        .agent("Take your time with it.")
    )
    m = metrics_for(b, lexicon, root=ROOT)
    assert not m.restructuring_success
    assert m.root_cause_identified  # chain still names the root cause
    assert_matches_oracle(b, lexicon, root=ROOT)


def test_restructuring_ignores_earlier_acknowledgment(lexicon):
    b = (
        LogBuilder()
        .user("That makes sense already, somehow.")
        .go("ready_for_insight")
        .agent("Wait for it.", reasoning=f"{ROOT} → fear → hesitation")
    )
    assert not metrics_for(b, lexicon, root=ROOT).restructuring_success


def test_restructuring_attempt_must_be_insight_stage(lexicon):
    b = (
        LogBuilder()
        .user("Long week.")
        .go("continue")
        .agent("A reframe too early.", reasoning=f"{ROOT} → fear → hesitation")
        .user("That makes sense.")
        .go("continue")
        .agent("Glad it lands.")
    )
    m = metrics_for(b, lexicon, root=ROOT)
    assert not m.restructuring_success  # exploration-stage attempt does not count
    assert m.root_cause_identified
    assert_matches_oracle(b, lexicon, root=ROOT)


def test_restructuring_via_metaphor_sentence(lexicon):
    b = (
        LogBuilder()
        .user("I feel trapped.")
        .go("ready_for_insight")
        .agent(f"It's like the {ROOT} still steers the wheel. Does that ring true?")
        .user("You're right, it does.")
        .go("continue")
        .agent("Sitting with that is hard.")
    )
    m = metrics_for(b, lexicon, root=ROOT)
    assert m.restructuring_success
    assert not m.root_cause_identified  # named in the reply, never in reasoning
    assert_matches_oracle(b, lexicon, root=ROOT)


def test_metaphor_marker_and_root_must_share_a_sentence(lexicon):
    assert metaphor_reframe_present(f"It's like a loop. The {ROOT} hurt.", ROOT, lexicon) is False
    assert metaphor_reframe_present(f"It's like the {ROOT} never left.", ROOT, lexicon) is True
    assert metaphor_reframe_present("", ROOT, lexicon) is False


def test_causal_chain_needs_two_arrows_and_root():
    assert causal_chain_present(f"{ROOT} → fear → hesitation", ROOT)
    assert not causal_chain_present(f"{ROOT} → fear", ROOT)
    assert not causal_chain_present("a → b → c", ROOT)
    assert not causal_chain_present("", ROOT)
    assert not causal_chain_present("a → b → c", None)


def test_adoption_counts_final_statuses(lexicon):
    b = (
        LogBuilder()
        .user("Ready to plan.")
        .go("continue")
        .agent("Here is a plan.")
        .plan("Record triggers", "Short walk", "Call mentor")
        .user("I'll start with step 1.")
        .go("continue")
        .agent("Good start.")
        .status(1, "accepted")
        .user("I can't do step 3.")
        .go("continue")
        .agent("That's okay.")
        .status(3, "rejected")
    )
    m = metrics_for(b, lexicon)
    assert m.adoption_rate == pytest.approx(1.0 / 3.0)
    assert m.plans_proposed
    want = assert_matches_oracle(b, lexicon)
    assert want["counts"]["steps"] == 3
    assert want["counts"]["accepted"] == 1


def test_adoption_spans_multiple_plans(lexicon):
    b = (
        LogBuilder()
        .user("Plan one?")
        .go("continue")
        .agent("First plan.")
        .plan("Step a", "Step b", "Step c")
        .user("I'll try step 1.")
        .go("continue")
        .agent("Noted.")
        .status(1, "accepted")
        .user("Another plan?")
        .go("continue")
        .agent("Second plan.")
        .plan("Step d")
        .user("I can do that.")
        .go("continue")
        .agent("Great.")
        .status(1, "accepted")
    )
    m = metrics_for(b, lexicon)
    assert m.adoption_rate == pytest.approx(2.0 / 4.0)
    assert_matches_oracle(b, lexicon)


def test_premature_counts_only_early_stage_suggestions(lexicon):
    b = (
        LogBuilder()
        .user("Rough week.")
        .go("continue")
        .agent("You should try a walk. That sounds rough.")  # E: 1 of 2 premature
        .user("I want to change, where to start?")
        .go("ready_for_insight")  # -> insight (applicable from exploration)
        .agent("You could journal it.")  # I: 1 of 1 premature
        .user("I should change my situation.")
        .go("ready_for_action")  # -> action
        .agent("Try the first step today. One breath at a time.")  # A: suggestions allowed
    )
    m = metrics_for(b, lexicon)
    # 5 agent sentences total, 2 premature (exploration + insight).
    assert m.premature_suggestion_rate == pytest.approx(2.0 / 5.0)
    want = assert_matches_oracle(b, lexicon)
    assert want["counts"] == {"sentences": 5, "premature": 2, "generic": 0, "steps": 0, "accepted": 0}


def test_ineffective_counts_generic_everywhere(lexicon):
    b = (
        LogBuilder()
        .user("Rough week.")
        .go("continue")
        .agent("Things will get better. Tell me more.")
        .user("I should change my ways.")
        .go("ready_for_insight")
        .agent("Stay positive!")
    )
    m = metrics_for(b, lexicon)
    assert m.ineffective_support_rate == pytest.approx(2.0 / 3.0)
    assert_matches_oracle(b, lexicon)


def test_stage_attribution_follows_overrides(lexicon):
    b = (
        LogBuilder()
        .user("Hello.")
        .go("continue")
        .override("action")
        .agent("You should try the plan now.")  # action stage: not premature
    )
    assert metrics_for(b, lexicon).premature_suggestion_rate == 0.0
    assert_matches_oracle(b, lexicon)


def test_root_cause_only_counts_reasoning(lexicon):
    in_reply_only = (
        LogBuilder().user("Hi.").go("continue").agent(f"The {ROOT} clearly shaped this.")
    )
    assert not metrics_for(in_reply_only, lexicon, root=ROOT).root_cause_identified
    in_reasoning = (
        LogBuilder().user("Hi.").go("continue").agent("Mm.", reasoning=f"maybe {ROOT} matters")
    )
    assert metrics_for(in_reasoning, lexicon, root=ROOT).root_cause_identified


def test_score_arithmetic_exact():
    m = DialogueMetrics(
        exposure_completeness=1.0,
        restructuring_success=True,
        adoption_rate=0.5,
        premature_suggestion_rate=0.25,
        ineffective_support_rate=0.0,
        root_cause_identified=False,
        plans_proposed=True,
    )
    assert m.score() == pytest.approx((1.0 + 1.0 + 0.5 + 0.75 + 1.0 + 0.0) / 6.0)
    assert m.to_dict()["score"] == pytest.approx(m.score())


def test_aggregate_means_and_empty():
    a = DialogueMetrics(1.0, True, 1.0, 0.0, 0.0, True, True)
    b = DialogueMetrics(0.0, False, 0.0, 0.5, 0.25, False, False)
    report = MetricsReport(sessions={"a": a, "b": b})
    agg = report.aggregate()
    assert agg["sessions"] == 2
    assert agg["exposure_completeness"] == pytest.approx(0.5)
    assert agg["restructuring_success_rate"] == pytest.approx(0.5)
    assert agg["adoption_rate"] == pytest.approx(0.5)
    assert agg["premature_suggestion_rate"] == pytest.approx(0.25)
    assert agg["ineffective_support_rate"] == pytest.approx(0.125)
    assert agg["root_cause_identified_rate"] == pytest.approx(0.5)
    assert agg["score"] == pytest.approx((a.score() + b.score()) / 2)
    assert MetricsReport().aggregate() == {}


def test_golden_logs_match_oracle_and_frozen_report(lexicon, personas):
    golden = files("stageflow") / "data" / "golden"
    frozen = json.loads((golden / "metrics.json").read_text(encoding="utf-8"))
    full_sessions = frozen["reports"]["full"]["sessions"]
    facts = {p.id: p.facts() for p in personas}
    for persona in personas:
        events = read_events(str(golden / f"{persona.id}.events.jsonl"))
        computed = compute_session_metrics(events, facts[persona.id], lexicon).to_dict()
        recounted = oracle_metrics(
            [e.to_record() for e in events],
            list(facts[persona.id].hidden_stressors),
            facts[persona.id].root_cause,
        )
        for key, value in recounted.items():
            if key == "counts":
                continue
            assert computed[key] == pytest.approx(value, abs=1e-9), (persona.id, key)
        for key, value in full_sessions[persona.id].items():
            assert computed[key] == pytest.approx(value, abs=1e-9), (persona.id, key)
