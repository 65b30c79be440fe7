from __future__ import annotations

import json
import random

import pytest

from skillforge.errors import EvolutionError, ProtocolError, ValidationError
from skillforge.gradients import (
    AggregatedGradient,
    ConcatenatingAggregator,
    KeywordMajorityAggregator,
    SemanticGradient,
    aggregate_gradients,
    apply_gradient,
    apply_summaries,
    extract_gradient,
    format_update_directions,
    gradient_to_json,
    parse_candidate_json,
    parse_gradient_json,
    render_segment,
    summarize_trajectory,
)
from skillforge.scripted import DoctorRule, ScriptedDoctor, ScriptedEvolver, ScriptedSummarizer

from helpers import make_trajectory


def _gradient_reply(initiation="", policy="", termination="", related=True, diagnosis="found it"):
    return json.dumps(
        {
            "diagnosis": diagnosis,
            "is_related": related,
            "semantic_gradient": {
                "initiation": initiation,
                "policy": policy,
                "termination": termination,
            },
        }
    )


def test_parse_gradient_policy_and_termination_only():
    text = _gradient_reply(policy="Add a strict guess history ledger", termination="Do not stop early")
    g = parse_gradient_json(text, source_episode="ep7")
    assert g.is_related
    assert g.g_initiation == ""
    assert "ledger" in g.g_policy
    assert g.g_termination
    assert g.source_episode == "ep7"


def test_parse_gradient_unrelated_normalizes_components():
    text = json.dumps(
        {
            "diagnosis": "skill irrelevant",
            "is_related": False,
            "semantic_gradient": {"initiation": "x", "policy": "y", "termination": "z"},
        }
    )
    g = parse_gradient_json(text)
    assert not g.is_related
    assert (g.g_initiation, g.g_policy, g.g_termination) == ("", "", "")


def test_parse_gradient_missing_key():
    with pytest.raises(ProtocolError):
        parse_gradient_json('{"diagnosis": "d", "is_related": true}')


def test_parse_gradient_fenced():
    text = "```json\n" + _gradient_reply(policy="p") + "\n```"
    assert parse_gradient_json(text).g_policy == "p"


def test_gradient_round_trip():
    text = _gradient_reply(policy="keep a ledger", termination="stop later")
    g = parse_gradient_json(text)
    again = parse_gradient_json(gradient_to_json(g))
    assert again == g
    assert json.loads(gradient_to_json(g)) == json.loads(text)


def test_unrelated_with_components_invalid():
    with pytest.raises(ValidationError):
        SemanticGradient(diagnosis="d", is_related=False, g_policy="x")


def test_empty_diagnosis_invalid():
    with pytest.raises(ValidationError):
        SemanticGradient(diagnosis="", is_related=True)


# ── Extraction ───────────────────────────────────────────────────────


def test_extract_gradient_scripted_rule(explorer_skill):
    traj = make_trajectory([0.0, 0.0], skill_id=explorer_skill.id)
    doctor = ScriptedDoctor(
        rules=[DoctorRule(pattern="state 0", reply=_gradient_reply(policy="fixed policy text"))],
        default_reply=_gradient_reply(),
    )
    g = extract_gradient(traj, explorer_skill, doctor)
    assert g.g_policy == "fixed policy text"
    assert g.source_episode == traj.episode_id


def test_extract_gradient_requires_active_skill(explorer_skill):
    traj = make_trajectory([0.0], skill_id=999)
    doctor = ScriptedDoctor(rules=[], default_reply=_gradient_reply())
    with pytest.raises(ValidationError):
        extract_gradient(traj, explorer_skill, doctor)


def test_extract_gradient_unparseable_raises_protocol(explorer_skill):
    traj = make_trajectory([0.0], skill_id=explorer_skill.id)
    doctor = ScriptedDoctor(rules=[], default_reply="utter nonsense")
    with pytest.raises(ProtocolError):
        extract_gradient(traj, explorer_skill, doctor, retries=1)


def test_render_segment_covers_only_active_steps(explorer_skill):
    traj = make_trajectory([1.0, 2.0, 3.0], skill_id=explorer_skill.id)
    text = render_segment(traj, explorer_skill.id)
    assert text.count("[Action]") == 3
    assert render_segment(traj, 12345) == ""


# ── Aggregation ──────────────────────────────────────────────────────


def _sg(policy="", initiation="", termination="", episode="ep0", related=True):
    return SemanticGradient(
        diagnosis="d",
        is_related=related,
        g_initiation=initiation if related else "",
        g_policy=policy if related else "",
        g_termination=termination if related else "",
        source_episode=episode,
    )


def test_aggregate_collapses_duplicates():
    grads = [_sg(policy="same text", episode=f"ep{i}") for i in range(3)]
    agg = aggregate_gradients(grads, KeywordMajorityAggregator())
    assert agg.g_policy == "same text"
    assert agg.contributing == ("ep0", "ep1", "ep2")
    assert agg.dropped == ()


def test_aggregate_filters_unrelated():
    grads = [_sg(policy="keep this", episode="ep0"), _sg(related=False, episode="ep1")]
    agg = aggregate_gradients(grads, KeywordMajorityAggregator())
    assert agg.g_policy == "keep this"
    assert "ep1" not in agg.contributing and "ep1" not in agg.dropped


def test_aggregate_majority_keyword_drops_minority():
    keywords = ("ledger", "reset")
    grads = [
        _sg(policy="keep a ledger of moves", episode="ep0"),
        _sg(policy="maintain the ledger strictly", episode="ep1"),
        _sg(policy="reset the plan each turn", episode="ep2"),
    ]
    agg = aggregate_gradients(grads, KeywordMajorityAggregator(keywords))
    assert "ledger" in agg.g_policy
    assert "reset" not in agg.g_policy
    assert agg.dropped == ("ep2",)
    assert set(agg.contributing) == {"ep0", "ep1"}


def test_aggregate_permutation_invariant():
    keywords = ("ledger",)
    grads = [
        _sg(policy="keep a ledger", episode="ep0"),
        _sg(policy="write every move into the ledger", episode="ep1"),
        _sg(termination="stop after feedback", episode="ep2"),
    ]
    rng = random.Random(0)
    baseline = aggregate_gradients(grads, KeywordMajorityAggregator(keywords))
    for _ in range(10):
        shuffled = grads[:]
        rng.shuffle(shuffled)
        assert aggregate_gradients(shuffled, KeywordMajorityAggregator(keywords)) == baseline


def test_aggregate_all_unrelated_empty():
    grads = [_sg(related=False, episode="ep0"), _sg(related=False, episode="ep1")]
    agg = aggregate_gradients(grads, KeywordMajorityAggregator())
    assert agg.is_empty


def test_aggregate_empty_list_rejected():
    with pytest.raises(ValidationError):
        aggregate_gradients([], KeywordMajorityAggregator())


def test_concatenating_aggregator_joins_distinct():
    grads = [_sg(policy="a", episode="ep0"), _sg(policy="b", episode="ep1")]
    agg = ConcatenatingAggregator().consolidate(grads)
    assert agg.g_policy == "a\nb"
    assert agg.contributing == ("ep0", "ep1")


# ── Candidate generation ─────────────────────────────────────────────


def test_parse_candidate_strict_fields():
    doc = {"skill_name": "N", "initiation": "i", "policy": ["s1"], "termination": "t"}
    spec = parse_candidate_json(json.dumps(doc))
    assert spec.policy == ("s1",)
    doc["extra"] = 1
    with pytest.raises(ProtocolError):
        parse_candidate_json(json.dumps(doc))
    del doc["extra"], doc["policy"]
    with pytest.raises(ProtocolError):
        parse_candidate_json(json.dumps(doc))


def test_parse_candidate_fenced_and_string_policy():
    doc = {"skill_name": "N", "initiation": "i", "policy": "single step", "termination": "t"}
    text = "Here you go:\n```json\n" + json.dumps(doc) + "\n```"
    assert parse_candidate_json(text).policy == ("single step",)


def test_apply_gradient_zero_gradient_identity(explorer_skill):
    agg = AggregatedGradient()
    kids = apply_gradient(explorer_skill, agg, ScriptedEvolver(), 3, first_id=10)
    assert len(kids) == 3
    for kid in kids:
        assert kid.initiation == explorer_skill.initiation
        assert kid.policy_steps == explorer_skill.policy_steps
        assert kid.termination == explorer_skill.termination
        assert kid.version == explorer_skill.version + 1
        assert kid.parent_id == explorer_skill.id
    assert sorted({k.id for k in kids}) == [10, 11, 12]


def test_apply_gradient_appends_policy_step(explorer_skill):
    agg = AggregatedGradient(g_policy="always check the ledger")
    kids = apply_gradient(explorer_skill, agg, ScriptedEvolver(), 1, first_id=10)
    assert len(kids[0].policy_steps) == len(explorer_skill.policy_steps) + 1
    assert kids[0].policy_steps[-1] == "always check the ledger"


def test_apply_gradient_component_locality(explorer_skill):
    agg = AggregatedGradient(g_policy="only the policy moves")
    kid = apply_gradient(explorer_skill, agg, ScriptedEvolver(), 1, first_id=10)[0]
    assert kid.initiation == explorer_skill.initiation
    assert kid.termination == explorer_skill.termination


def test_apply_gradient_cardinality(explorer_skill):
    agg = AggregatedGradient(g_policy="p")
    kids = apply_gradient(explorer_skill, agg, ScriptedEvolver(), 3, first_id=50)
    assert len(kids) == 3
    assert len({k.id for k in kids}) == 3
    assert {k.parent_id for k in kids} == {explorer_skill.id}


class GarbageEvolver:
    def propose(self, skill, update, mode="gradient"):
        return "not json at all"


def test_apply_gradient_all_unparseable_raises(explorer_skill):
    agg = AggregatedGradient(g_policy="p")
    with pytest.raises(EvolutionError):
        apply_gradient(explorer_skill, agg, GarbageEvolver(), 2, first_id=10)


def test_apply_gradient_rejects_zero_candidates(explorer_skill):
    with pytest.raises(ValidationError):
        apply_gradient(explorer_skill, AggregatedGradient(), ScriptedEvolver(), 0)


def test_apply_summaries_mode(explorer_skill):
    kids = apply_summaries(explorer_skill, ["ran fine twice"], ScriptedEvolver(), 2, first_id=30)
    assert len(kids) == 2
    assert kids[0].policy_steps[-1] == "Review the outcome summaries before acting."


def test_format_update_directions():
    agg = AggregatedGradient(g_policy="p-text")
    text = format_update_directions(agg)
    assert "Policy update: p-text" in text
    assert "Initiation update: (no change)" in text


# ── Summaries ────────────────────────────────────────────────────────


def test_summarize_trajectory_scripted(explorer_skill):
    traj = make_trajectory([0.0, 0.75], skill_id=explorer_skill.id)
    summary = summarize_trajectory(traj, ScriptedSummarizer())
    assert "0.75" in summary
    assert "steps" in summary


def test_summarize_empty_trajectory_rejected():
    from skillforge.trajectory import Trajectory

    empty = Trajectory(episode_id="e", steps=(), total_return=0.0)
    with pytest.raises(ValidationError):
        summarize_trajectory(empty, ScriptedSummarizer())


class GarbageSummarizer:
    def summarize(self, trajectory_text, reward):
        return "no json"


def test_summarize_unparseable_raises(explorer_skill):
    traj = make_trajectory([0.0], skill_id=explorer_skill.id)
    with pytest.raises(ProtocolError):
        summarize_trajectory(traj, GarbageSummarizer())
