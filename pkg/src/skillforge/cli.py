"""Command-line entry points: train, eval, inspect, metrics.

Any config key can be overridden on the command line with its dotted path
(``--run.seed 42`` or ``--set run.seed=42``). Exit codes: 0 success,
1 validation problem, 2 runtime failure, 3 missing backend capability.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from .errors import CapabilityError, ConfigError, PoolFileError, SkillForgeError, ValidationError
from .evolution import evolve
from .metrics import BatchPoint, build_report, mean_pool_score, mean_return, write_plot_data
from .runtime import collect_batch
from .seeds import builtin_seed_skills, load_seeds, seed_pool
from .skills import SkillPool, load_pool, online_score, save_pool
from .trajectory import read_trajectories, write_trajectories

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CAPABILITY = 3


def _extract_dotted_flags(argv: list[str]) -> tuple[list[str], list[str]]:
    """Pull ``--section.key value`` pairs out of argv as config overrides."""
    remaining: list[str] = []
    overrides: list[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token.startswith("--") and "." in token.split("=", 1)[0]:
            key = token[2:]
            if "=" in key:
                overrides.append(key)
            else:
                if i + 1 >= len(argv):
                    raise ConfigError(f"flag {token} needs a value")
                overrides.append(f"{key}={argv[i + 1]}")
                i += 1
        else:
            remaining.append(token)
        i += 1
    return remaining, overrides


def _load(args, overrides: list[str]) -> dict:
    merged = list(overrides) + [item for item in (args.set or [])]
    return config_mod.load_config(args.config, merged)


def _initial_pool(doc: dict) -> SkillPool:
    capacity = int(doc["pool"]["capacity"])
    if doc.get("seeds_file"):
        return seed_pool(capacity, load_seeds(doc["seeds_file"]))
    return seed_pool(capacity, builtin_seed_skills())


def cmd_train(args, overrides: list[str]) -> int:
    doc = _load(args, overrides)
    bundle = config_mod.build_bundle(doc)
    run = doc["run"]
    out = Path(args.out or doc["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    pool = _initial_pool(doc)
    (out / "config_echo.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    save_pool(pool, out / "pool_0000.json")
    save_pool(pool, out / "seeds.json")

    iterations = int(run["iterations"])
    seed = int(run["seed"])
    points: list[BatchPoint] = []
    with open(out / "audit.jsonl", "w", encoding="utf-8") as audit:
        for n in range(1, iterations + 1):
            batch = collect_batch(
                bundle.env_factory,
                pool,
                bundle.backends.policy,
                bundle.judge,
                int(run["batch_size"]),
                seed * 100_000 + n,
                selector=bundle.selector,
                max_steps=int(run["max_steps"]),
                record_prompts=bool(run["record_prompts"]),
                parallelism=int(run["parallelism"]),
            )
            write_trajectories(batch, out / f"trajectories_{n:04d}.jsonl")
            pool, record = evolve(pool, batch, bundle.backends, bundle.evolution_params)
            audit.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            save_pool(pool, out / f"pool_{n:04d}.json")
            points.append(
                BatchPoint(
                    batch_index=record.batch_index,
                    mean_return=mean_return(batch),
                    pool_size=len(pool),
                    mean_online_score=mean_pool_score(pool),
                )
            )
            print(
                f"batch {record.batch_index}: mean return {points[-1].mean_return:.3f}, "
                f"pool {len(pool)}, admissions {record.admissions}"
            )

    save_pool(pool, out / "pool_final.json")
    write_plot_data(points, out / "plot_data.csv")
    if points:
        last_batch = list(read_trajectories(out / f"trajectories_{iterations:04d}.jsonl"))
        report = build_report(
            pool,
            last_batch,
            success_threshold=float(run["success_threshold"]),
        )
        (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        if not args.no_figures:
            from .plots import render_points

            render_points(points, out / "figures")
    print(f"run artifacts in {out}")
    return EXIT_OK


def cmd_eval(args, overrides: list[str]) -> int:
    doc = _load(args, overrides)
    bundle = config_mod.build_bundle(doc)
    run = doc["run"]
    pool = load_pool(args.pool)
    episodes = int(args.episodes or run["episodes"])
    batch = collect_batch(
        bundle.env_factory,
        pool,
        bundle.backends.policy,
        bundle.judge,
        episodes,
        int(run["seed"]),
        selector=bundle.selector,
        max_steps=int(run["max_steps"]),
        record_prompts=bool(run["record_prompts"]),
        parallelism=int(run["parallelism"]),
    )
    report = build_report(
        pool,
        batch,
        scope=args.scope,
        source_env=args.source_env,
        source_backend=args.source_backend,
        success_threshold=float(run["success_threshold"]),
    )
    report["pool_file"] = str(args.pool)
    report["backend"] = getattr(bundle.backends.policy, "name", "")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectories(batch, out / "eval_trajectories.jsonl")
        (out / "eval_report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n"
        )
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_inspect(args, _overrides: list[str]) -> int:
    pool = load_pool(args.pool)
    by_id = {s.id: s for s in pool.skills}
    print(
        f"pool: {len(pool.skills)} skill(s), capacity {pool.capacity}, "
        f"batch {pool.batch_index}, step baseline {pool.step_baseline:.6g}, "
        f"return baseline {pool.return_baseline:.6g}"
    )
    for skill in pool.skills:
        print(
            f"  [{skill.id}] {skill.name} v{skill.version}  "
            f"score {online_score(skill):.6g}  gain {skill.cum_gain:.6g}  "
            f"invocations {skill.invocations}  created batch {skill.created_batch}  "
            f"tokens {skill.token_count}"
        )
        chain = [skill]
        while chain[-1].parent_id is not None and chain[-1].parent_id in by_id:
            chain.append(by_id[chain[-1].parent_id])
        if len(chain) > 1:
            arrow = " -> ".join(f"{s.name} v{s.version}" for s in reversed(chain))
            print(f"      lineage: {arrow}")
        elif skill.parent_id is not None:
            print(f"      lineage: parent {skill.parent_id} (pruned) -> {skill.name} v{skill.version}")
    return EXIT_OK


def cmd_metrics(args, _overrides: list[str]) -> int:
    pool = load_pool(args.pool)
    batches = [list(read_trajectories(path)) for path in args.trajectories]
    flat = [t for batch in batches for t in batch]
    report = build_report(
        pool,
        flat,
        scope=args.scope,
        source_env=args.source_env,
        source_backend=args.source_backend,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    points = [
        BatchPoint(
            batch_index=i,
            mean_return=mean_return(batch),
            pool_size=len(pool),
            mean_online_score=mean_pool_score(pool),
        )
        for i, batch in enumerate(batches)
        if batch
    ]
    write_plot_data(points, out / "plot_data.csv")
    if points and not args.no_figures:
        from .plots import render_points

        render_points(points, out / "figures")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillforge",
        description="Learn and reuse procedural skills from interaction experience.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="config override by dotted path (repeatable)",
        )

    p_train = sub.add_parser("train", help="run the evolution loop")
    common(p_train)
    p_train.add_argument("--out", help="run directory (defaults to config out_dir)")
    p_train.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="frozen-pool rollouts and metrics")
    common(p_eval)
    p_eval.add_argument("--pool", required=True, help="pool snapshot file")
    p_eval.add_argument("--episodes", type=int, help="episode count (default from config)")
    p_eval.add_argument("--scope", default="in_domain",
                        choices=["in_domain", "cross_task", "cross_agent"])
    p_eval.add_argument("--source-env", help="env the pool was learned on (cross_task)")
    p_eval.add_argument("--source-backend", help="backend the pool was learned with (cross_agent)")
    p_eval.add_argument("--out", help="directory for eval artifacts")
    p_eval.set_defaults(func=cmd_eval)

    p_inspect = sub.add_parser("inspect", help="human-readable pool listing")
    p_inspect.add_argument("--pool", required=True, help="pool snapshot file")
    p_inspect.set_defaults(func=cmd_inspect)

    p_metrics = sub.add_parser("metrics", help="offline metrics from logs")
    p_metrics.add_argument("--pool", required=True)
    p_metrics.add_argument("--trajectories", nargs="+", required=True,
                           help="trajectory JSONL files, one per batch")
    p_metrics.add_argument("--scope", default="in_domain",
                           choices=["in_domain", "cross_task", "cross_agent"])
    p_metrics.add_argument("--source-env")
    p_metrics.add_argument("--source-backend")
    p_metrics.add_argument("--out", default="metrics_out")
    p_metrics.add_argument("--no-figures", action="store_true")
    p_metrics.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        remaining, overrides = _extract_dotted_flags(argv)
        args = build_parser().parse_args(remaining)
        return args.func(args, overrides)
    except (ConfigError, ValidationError, PoolFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (SkillForgeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
