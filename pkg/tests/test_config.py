from __future__ import annotations

import json

import pytest

from skillforge.config import (
    DEFAULTS,
    apply_overrides,
    build_bundle,
    build_env_factory,
    load_config,
    parse_override,
)
from skillforge.envs import LineWorldEnv, MastermindEnv
from skillforge.errors import ConfigError
from skillforge.scripted import CueLineWorldPolicy, TablePolicy


def test_defaults_validate():
    doc = load_config(None)
    assert doc["pool"]["capacity"] == 16
    assert doc["run"]["batch_size"] == 8
    assert doc["run"]["iterations"] == 20
    assert doc["gate"]["epsilon"] == 0.2


def test_unknown_top_level_field():
    with pytest.raises(ConfigError, match="unknown config fields"):
        load_config(None, ["bogus_top=1"])


def test_unknown_nested_field_reports_path():
    with pytest.raises(ConfigError, match="gate.shrink"):
        load_config(None, ["gate.shrink=0.5"])


def test_override_parsing_types():
    assert parse_override("run.seed=42") == ("run.seed", 42)
    assert parse_override("gate.gamma=0.5") == ("gate.gamma", 0.5)
    assert parse_override("ablation.fifo=true") == ("ablation.fifo", True)
    assert parse_override("env.name=mastermind") == ("env.name", "mastermind")
    with pytest.raises(ConfigError):
        parse_override("no-equals-sign")


def test_overrides_merge_deep():
    doc = apply_overrides(DEFAULTS, ["run.seed=3", "pool.capacity=4"])
    assert doc["run"]["seed"] == 3
    assert doc["pool"]["capacity"] == 4
    assert doc["run"]["batch_size"] == DEFAULTS["run"]["batch_size"]


def test_config_file_merges_with_defaults(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"run": {"seed": 5}}))
    doc = load_config(path)
    assert doc["run"]["seed"] == 5
    assert doc["run"]["iterations"] == 20


def test_invalid_json_config_reports_offset(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="offset"):
        load_config(path)


def test_build_env_factory_lineworld():
    factory, name = build_env_factory(load_config(None))
    assert name == "lineworld"
    assert isinstance(factory(), LineWorldEnv)


def test_build_env_factory_mastermind_tier():
    doc = load_config(None, ["env.name=mastermind", "env.tier=Hard"])
    factory, name = build_env_factory(doc)
    env = factory()
    assert isinstance(env, MastermindEnv)
    assert name == "mastermind-Hard"
    assert env.config.code_length == 5
    assert env.config.digit_max == 8


def test_build_env_factory_unknown_env():
    with pytest.raises(ConfigError, match="env.name"):
        build_env_factory(load_config(None, ["env.name=chess"]))


def test_build_bundle_default_scripted():
    bundle = build_bundle(load_config(None))
    assert isinstance(bundle.backends.policy, CueLineWorldPolicy)
    assert bundle.evolution_params.epsilon == 0.2
    assert not bundle.evolution_params.no_gate


def test_build_bundle_table_policy():
    doc = load_config(
        None,
        ['backends.policy={"type": "scripted.table", "rules": [{"action": "right"}]}'],
    )
    bundle = build_bundle(doc)
    assert isinstance(bundle.backends.policy, TablePolicy)


def test_build_bundle_remote_requires_fields():
    doc = load_config(None, ['backends.policy={"type": "remote", "model": "m"}'])
    with pytest.raises(ConfigError, match="base_url"):
        build_bundle(doc)


def test_build_bundle_remote_unknown_field():
    doc = load_config(
        None,
        ['backends.policy={"type": "remote", "base_url": "http://x", "model": "m", "oops": 1}'],
    )
    with pytest.raises(ConfigError, match="oops"):
        build_bundle(doc)


def test_build_bundle_value_selector(small_pool):
    from helpers import make_state

    bundle = build_bundle(load_config(None, ["run.selector=value", "run.top_k=2"]))
    chosen = bundle.selector(make_state("feedback from earlier guesses available"), small_pool)
    assert chosen.id in {s.id for s in small_pool.skills}


def test_prompt_override_from_file(tmp_path, opener_skill):
    custom = tmp_path / "decision.txt"
    custom.write_text("CUSTOM TEMPLATE state=${state} admissible=${admissible} skill=${skill}\n")
    doc = load_config(None, [f"prompts.decision={custom}"])
    bundle = build_bundle(doc)
    from skillforge.prompts import render_decision
    from helpers import make_state

    # the override reaches any remote role through the shared prompt set;
    # render directly to confirm the template content
    text = render_decision(
        custom.read_text(), make_state("here"), opener_skill
    )
    assert text.startswith("CUSTOM TEMPLATE state=here")
    assert doc["prompts"]["decision"] == str(custom)


def test_mastermind_scripted_smoke():
    doc = load_config(
        None,
        [
            "env.name=mastermind",
            'backends.policy={"type": "scripted.table", "rules": '
            '[{"state_contains": "Turn 1.", "action": "[1 2 3 4]"}, '
            '{"state_contains": "Turn 2.", "action": "[2 3 4 5]"}, '
            '{"action": "[3 4 5 6]"}]}',
        ],
    )
    bundle = build_bundle(doc)
    from skillforge.runtime import collect_batch
    from skillforge.seeds import seed_pool

    batch = collect_batch(
        bundle.env_factory,
        seed_pool(capacity=4),
        bundle.backends.policy,
        bundle.judge,
        2,
        seed=5,
        selector=bundle.selector,
        max_steps=8,
    )
    assert len(batch) == 2
    assert all(t.env_name == "mastermind-v0" for t in batch)
    assert all("black peg(s)" in t.steps[-1].state.text or t.steps for t in batch)
