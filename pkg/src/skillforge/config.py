"""Run configuration: a single JSON document, dotted-path overrides, wiring.

Secrets never live in the config; remote backends name the environment
variable holding their API key. Unknown keys are rejected with their full
field path so typos surface immediately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import prompts, scripted
from .backends import (
    BackendConfig,
    RemoteDoctor,
    RemoteEvolver,
    RemoteJudge,
    RemotePolicy,
    RemoteSummarizer,
)
from .envs import LineWorldConfig, LineWorldEnv, MastermindConfig, MastermindEnv
from .errors import ConfigError
from .evolution import EvolutionBackends, EvolutionParams
from .gradients import ConcatenatingAggregator, KeywordMajorityAggregator
from .runtime import Selector, similarity_selector, value_selector

_SCHEMA: dict[str, set[str]] = {
    "env": {"name", "tier", "code_length", "digit_min", "digit_max", "allow_duplicates",
            "max_turns", "length", "start", "vary_start_with_seed", "invalid_penalty",
            "invalid_retry_budget", "win_reward", "goal_reward"},
    "backends": {"policy", "judge", "doctor", "aggregator", "evolver", "summarizer"},
    "gate": {"gamma", "epsilon", "alpha", "whole_trajectory"},
    "pool": {"capacity", "n_candidates", "redundancy_threshold", "reward_mode"},
    "run": {"batch_size", "iterations", "seed", "max_steps", "parallelism",
            "record_prompts", "selector", "top_k", "episodes", "success_threshold"},
    "ablation": {"no_gate", "fifo", "no_sg"},
}
_TOP_LEVEL = set(_SCHEMA) | {"seeds_file", "prompts", "out_dir"}

DEFAULTS: dict[str, Any] = {
    "env": {"name": "lineworld"},
    "backends": {
        "policy": {"type": "scripted.lineworld_cue"},
        "judge": {"type": "scripted.always_continue"},
        "doctor": {"type": "scripted.lineworld"},
        "aggregator": {"type": "keyword_majority"},
        "evolver": {"type": "scripted"},
        "summarizer": {"type": "scripted"},
    },
    "gate": {"gamma": 1.0, "epsilon": 0.2, "alpha": 0.1, "whole_trajectory": False},
    "pool": {"capacity": 16, "n_candidates": 3, "redundancy_threshold": 0.9,
             "reward_mode": "per_step"},
    "run": {"batch_size": 8, "iterations": 20, "seed": 0, "max_steps": 20, "parallelism": 1,
            "record_prompts": False, "selector": "similarity", "top_k": 3, "episodes": 50,
            "success_threshold": 1.0},
    "ablation": {"no_gate": False, "fifo": False, "no_sg": False},
    "seeds_file": None,
    "prompts": {},
    "out_dir": "runs/latest",
}


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in extra.items():
        where = f"{path}.{key}" if path else key
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value, where)
        else:
            out[key] = value
    return out


def _validate(doc: dict) -> None:
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    for section, allowed in _SCHEMA.items():
        value = doc.get(section, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config field '{section}' must be an object")
        if section == "backends":
            continue
        bad = set(value) - allowed
        if bad:
            raise ConfigError(
                f"unknown config fields: {sorted(f'{section}.{k}' for k in bad)}"
            )


def parse_override(item: str) -> tuple[str, Any]:
    """Parse one 'dotted.path=value' override; values are JSON when they parse."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    for item in overrides:
        key, value = parse_override(item)
        parts = key.split(".")
        nested: Any = value
        for part in reversed(parts):
            nested = {part: nested}
        doc = _merge(doc, nested)
    return doc


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> dict:
    doc = DEFAULTS
    if path is not None:
        try:
            loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON at offset {exc.pos}: {exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        doc = _merge(doc, loaded)
    doc = apply_overrides(doc, overrides or [])
    _validate(doc)
    return doc


# ── Wiring ───────────────────────────────────────────────────────────


def build_env_factory(doc: dict) -> tuple[Callable[[], Any], str]:
    env = doc["env"]
    name = env.get("name", "lineworld")
    params = {k: v for k, v in env.items() if k not in ("name", "tier")}
    if name == "lineworld":
        cfg = LineWorldConfig(**params)
        return (lambda: LineWorldEnv(cfg)), "lineworld"
    if name == "mastermind":
        tier = env.get("tier", "v0")
        cfg = MastermindConfig.from_tier(tier, **params)
        return (lambda: MastermindEnv(cfg)), f"mastermind-{tier}"
    raise ConfigError(f"unknown env.name {name!r}")


def _backend_config(spec: dict) -> BackendConfig:
    allowed = {"type", "base_url", "model", "api_key_env", "temperature", "max_retries",
               "timeout", "supports_logprobs", "scoring_mode", "name"}
    bad = set(spec) - allowed
    if bad:
        raise ConfigError(f"unknown remote backend fields: {sorted(bad)}")
    if "base_url" not in spec or "model" not in spec:
        raise ConfigError("remote backend needs 'base_url' and 'model'")
    return BackendConfig(**{k: v for k, v in spec.items() if k != "type"})


@dataclass
class RuntimeBundle:
    """Everything a run needs beyond the pool: env factory, backends, selector."""

    env_factory: Callable[[], Any]
    env_name: str
    backends: EvolutionBackends
    judge: Any
    selector: Selector
    evolution_params: EvolutionParams
    doc: dict = field(repr=False, default_factory=dict)


def build_bundle(doc: dict) -> RuntimeBundle:
    prompt_set = prompts.PromptSet.default()
    if doc.get("prompts"):
        prompt_set = prompt_set.with_overrides(doc["prompts"])

    env_factory, env_name = build_env_factory(doc)
    spec = doc["backends"]

    policy_spec = spec.get("policy", {"type": "scripted.lineworld_cue"})
    ptype = policy_spec.get("type", "remote")
    if ptype == "scripted.lineworld_cue":
        policy = scripted.CueLineWorldPolicy(
            **{k: v for k, v in policy_spec.items() if k != "type"}
        )
    elif ptype == "scripted.table":
        rules = [scripted.PolicyRule(**r) for r in policy_spec.get("rules", [])]
        scoring = [scripted.PolicyRule(**r) for r in policy_spec.get("scoring", [])]
        policy = scripted.TablePolicy(
            rules, scoring, default_action=policy_spec.get("default_action", "")
        )
    elif ptype == "remote":
        policy = RemotePolicy(_backend_config(policy_spec), prompt_set)
    else:
        raise ConfigError(f"unknown backends.policy.type {ptype!r}")

    judge_spec = spec.get("judge", {"type": "scripted.always_continue"})
    jtype = judge_spec.get("type", "remote")
    if jtype == "scripted.always_continue":
        judge = scripted.StaticJudge("CONTINUE")
    elif jtype == "scripted.always_done":
        judge = scripted.StaticJudge("DONE")
    elif jtype == "scripted.substring":
        judge = scripted.SubstringJudge(judge_spec.get("done_keys", []))
    elif jtype == "remote":
        judge = RemoteJudge(_backend_config(judge_spec), prompt_set)
    else:
        raise ConfigError(f"unknown backends.judge.type {jtype!r}")

    doctor_spec = spec.get("doctor", {"type": "scripted.lineworld"})
    dtype = doctor_spec.get("type", "remote")
    if dtype == "scripted.lineworld":
        doctor = scripted.lineworld_doctor()
    elif dtype == "scripted.rules":
        doctor = scripted.ScriptedDoctor(
            [scripted.DoctorRule(**r) for r in doctor_spec.get("rules", [])],
            doctor_spec.get("default_reply", scripted.no_update_reply()),
        )
    elif dtype == "remote":
        doctor = RemoteDoctor(_backend_config(doctor_spec), prompt_set)
    else:
        raise ConfigError(f"unknown backends.doctor.type {dtype!r}")

    agg_spec = spec.get("aggregator", {"type": "keyword_majority"})
    atype = agg_spec.get("type", "keyword_majority")
    if atype == "keyword_majority":
        aggregator = KeywordMajorityAggregator(agg_spec.get("keywords", []))
    elif atype == "concat":
        aggregator = ConcatenatingAggregator()
    else:
        raise ConfigError(f"unknown backends.aggregator.type {atype!r}")

    evolver_spec = spec.get("evolver", {"type": "scripted"})
    etype = evolver_spec.get("type", "remote")
    if etype == "scripted":
        evolver = scripted.ScriptedEvolver()
    elif etype == "remote":
        evolver = RemoteEvolver(_backend_config(evolver_spec), prompt_set)
    else:
        raise ConfigError(f"unknown backends.evolver.type {etype!r}")

    summarizer_spec = spec.get("summarizer", {"type": "scripted"})
    stype = summarizer_spec.get("type", "remote")
    if stype == "scripted":
        summarizer = scripted.ScriptedSummarizer()
    elif stype == "remote":
        summarizer = RemoteSummarizer(_backend_config(summarizer_spec), prompt_set)
    else:
        raise ConfigError(f"unknown backends.summarizer.type {stype!r}")

    run = doc["run"]
    if run.get("selector", "similarity") == "value":
        selector = value_selector(k=int(run.get("top_k", 3)))
    else:
        selector = similarity_selector()

    gate = doc["gate"]
    ablation = doc["ablation"]
    params = EvolutionParams(
        gamma=float(gate["gamma"]),
        epsilon=float(gate["epsilon"]),
        alpha=float(gate["alpha"]),
        n_candidates=int(doc["pool"]["n_candidates"]),
        redundancy_threshold=float(doc["pool"]["redundancy_threshold"]),
        reward_mode=doc["pool"]["reward_mode"],
        no_gate=bool(ablation["no_gate"]),
        fifo=bool(ablation["fifo"]),
        no_sg=bool(ablation["no_sg"]),
        whole_trajectory_gate=bool(gate["whole_trajectory"]),
    )
    return RuntimeBundle(
        env_factory=env_factory,
        env_name=env_name,
        backends=EvolutionBackends(
            policy=policy,
            doctor=doctor,
            aggregator=aggregator,
            evolver=evolver,
            summarizer=summarizer,
        ),
        judge=judge,
        selector=selector,
        evolution_params=params,
        doc=doc,
    )
