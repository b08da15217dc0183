"""Command-line entry point: ``i2a-lab <subcommand> [--seed N] [--config FILE] [--out PATH]``.

Exit status is 0 on success, 2 on usage errors and 3 when an invariant
check fails (unsolvable generated level, broken call accounting, ...).
"""

import argparse
import json
import logging
import os
import sys
import time

from .. import __version__
from ..rng import Rng
from ..sokoban.core import format_level, parse_level_file, replay
from ..sokoban.procgen import GenerationFailed, GenParams, generate_level
from ..training.trainer import TrainConfig, evaluate, load_checkpoint, make_agent, save_checkpoint, train
from .experiments import (InvariantViolation, OptimalAgent, agent_policy_fn, config_hash, generate_levels,
                          run_efficiency_bench, run_generalization, run_robustness, summarize_efficiency,
                          toy_config)

log = logging.getLogger("i2a_lab")

EXIT_INVARIANT = 3


def load_config(path):
    """Flat JSON object of hyperparameters (``None`` -> empty)."""
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


class JsonlWriter:
    def __init__(self, path):
        self.fh = open(path, "w") if path and path != "-" else sys.stdout
        self.own = self.fh is not sys.stdout

    def write(self, rec):
        self.fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        if self.own:
            self.fh.close()


def _gen_params(args, cfg):
    d = {"width": args.width, "height": args.height, "num_boxes": args.boxes}
    d.update({k: v for k, v in cfg.items() if k in GenParams.__dataclass_fields__})
    return GenParams(**d)


def cmd_gen(args):
    cfg = load_config(args.config)
    params = _gen_params(args, cfg)
    chash = config_hash({"gen": params.__dict__})
    out = open(args.out, "w") if args.out else sys.stdout
    bad = 0
    try:
        for i in range(args.n):
            seed = args.seed + i
            try:
                cand = generate_level(params, seed)
            except GenerationFailed as exc:
                log.warning("%s", exc)
                continue
            if not replay(cand.state, cand.solution_trace).solved:
                bad += 1
            meta = {"seed": seed, "score": cand.score, "config_hash": chash,
                    "solution": "".join("udlrn"[a] for a in cand.solution_trace)}
            out.write(format_level(cand.state, meta) + "\n\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if bad:
        raise InvariantViolation(f"{bad} generated levels failed forward replay")
    return 0


def _train_config(args):
    d = load_config(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    for key in ("agent", "model", "episodes"):
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    return TrainConfig.from_dict(dict(toy_config().to_dict(), **d)) if args.toy else TrainConfig.from_dict(d)


def cmd_train(args):
    cfg = _train_config(args)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.time()
    res = train(cfg, metrics_path=os.path.join(args.out, "metrics.jsonl"),
                log=lambda r: log.info("episodes %d eval %.3f", r["episodes"], r["eval_solve_rate"]))
    save_checkpoint(res.agent, cfg, os.path.join(args.out, "checkpoint.json"))
    final = res.metrics[-1]
    print(f"trained {cfg.agent}/{cfg.model} seed {cfg.seed} in {time.time() - t0:.1f}s: "
          f"eval solve rate {final['eval_solve_rate']:.3f} ({final['episodes']} episodes)")
    return 0


def _levels_from(args, cfg):
    if args.levels:
        with open(args.levels) as fh:
            return [s for _, s in parse_level_file(fh.read())]
    params = GenParams(width=cfg.width, height=cfg.height, num_boxes=cfg.boxes, walk_steps=cfg.walk_steps)
    return generate_levels(params, args.n, 2_000_000_000 + args.seed)[0]


def cmd_eval(args):
    agent, cfg = load_checkpoint(args.checkpoint)
    levels = _levels_from(args, cfg)
    bad = [i for i, s in enumerate(levels) if (s.width, s.height) != (cfg.width, cfg.height)]
    if bad:
        s = levels[bad[0]]
        raise ValueError(f"checkpoint was trained on {cfg.width}x{cfg.height} rooms but level {bad[0]} "
                         f"is {s.width}x{s.height}")
    rng = Rng(args.seed)
    before = agent.model_calls
    ev = evaluate(agent, levels, rng, args.greedy, cfg.max_steps)
    if ev["model_calls"] != agent.model_calls - before:
        raise InvariantViolation("evaluation call accounting mismatch")
    w = JsonlWriter(args.out)
    chash = cfg.config_hash()
    for i, (solved, steps) in enumerate(zip(ev["solved"], ev["steps"])):
        w.write({"level": i, "solved": solved, "steps": steps, "config_hash": chash, "seed": args.seed})
    w.close()
    print(f"solve rate {ev['solve_rate']:.3f} over {len(levels)} levels, {ev['model_calls']} model calls",
          file=sys.stderr)
    return 0


def cmd_plan(args):
    from ..planners.mcts import SimulatorModel, mcts_play
    cfg = load_config(args.config)
    budget = int(cfg.get("budget", args.budget))
    max_steps = int(cfg.get("max_steps", args.max_steps))
    if args.levels:
        with open(args.levels) as fh:
            levels = [s for _, s in parse_level_file(fh.read())]
    else:
        levels = generate_levels(_gen_params(args, cfg), args.n, args.seed)[0]
    w = JsonlWriter(args.out)
    chash = config_hash({"budget": budget, "max_steps": max_steps, "c": args.c})
    solved = 0
    for i, level in enumerate(levels):
        model = SimulatorModel(max_steps)
        res = mcts_play(level, budget=budget, c=args.c, model=model, max_steps=max_steps)
        if res.model_calls != model.calls:
            raise InvariantViolation("MCTS call accounting mismatch")
        if res.solved and not replay(level, res.actions).solved:
            raise InvariantViolation(f"level {i}: reported solution does not replay")
        solved += res.solved
        w.write({"level": i, "solved": res.solved, "steps": res.steps, "model_calls": res.model_calls,
                 "actions": "".join("udlrn"[a] for a in res.actions), "config_hash": chash, "seed": args.seed})
    w.close()
    print(f"MCTS solved {solved}/{len(levels)}", file=sys.stderr)
    return 0


def cmd_bench_efficiency(args):
    cfg = load_config(args.config)
    budgets = cfg.pop("budgets", args.budgets)
    agents = {}
    if args.checkpoint:
        agent, tcfg = load_checkpoint(args.checkpoint)
        agents[agent.kind] = agent
        params = GenParams(width=tcfg.width, height=tcfg.height, num_boxes=tcfg.boxes)
    else:
        params = _gen_params(args, cfg)
        tcfg = TrainConfig.from_dict(dict(depth=5, width=params.width, height=params.height,
                                          boxes=params.num_boxes, seed=args.seed))
        agents["i2a-untrained"] = make_agent(tcfg)
    levels = generate_levels(params, args.n, 3_000_000_000 + args.seed)[0]
    chash = config_hash({"budgets": budgets, "gen": params.__dict__, "agents": sorted(agents), "n": args.n})
    records = list(run_efficiency_bench(levels, agents, budgets, args.seed, args.max_steps, chash,
                                        random_calls=args.random_calls))
    w = JsonlWriter(args.out)
    for rec in records:
        w.write(rec)
    w.close()
    for row in summarize_efficiency(records):
        print(f"{row['solver']:>14} budget={row['budget']!s:>7} solve={row['solve_rate']:.3f} "
              f"calls/solved={row['calls_per_solved']}", file=sys.stderr)
    return 0


def cmd_bench_generalize(args):
    if args.checkpoint:
        agent, _ = load_checkpoint(args.checkpoint)
        policy = agent_policy_fn(agent, Rng(args.seed))
        name = agent.kind
    else:
        policy = OptimalAgent().policy_fn()
        name = "optimal"
    boxes = range(args.min_boxes, args.max_boxes + 1)
    rows = run_generalization(policy, boxes, args.n, args.width, args.height, args.seed, args.max_steps)
    chash = config_hash({"agent": name, "boxes": list(boxes), "n": args.n, "size": [args.width, args.height]})
    w = JsonlWriter(args.out)
    for row in rows:
        w.write(dict(row, agent=name, config_hash=chash, seed=args.seed))
        print(f"boxes={row['boxes']} solve={row['solve_rate']} failures={row['generation_failures']}",
              file=sys.stderr)
    w.close()
    return 0


def cmd_bench_robustness(args):
    base = _train_config(args)
    seeds = [args.seed + i for i in range(args.seeds)]
    report = run_robustness(base, seeds)
    w = JsonlWriter(args.out)
    for rec in report["records"]:
        w.write(dict(rec, seed=rec["seed"]))
    w.write({"summary": {k: v for k, v in report.items() if k != "records"}, "config_hash": base.config_hash(),
             "seed": args.seed})
    w.close()
    for k, v in report["medians"].items():
        print(f"{k:>22}: {v:.3f}", file=sys.stderr)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="i2a-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--config", help="JSON file of key/value settings")
        sp.add_argument("--out", help="output path (default: stdout)")

    def room(sp, width=10, height=10, boxes=4):
        sp.add_argument("--width", type=int, default=width)
        sp.add_argument("--height", type=int, default=height)
        sp.add_argument("--boxes", type=int, default=boxes)

    sp = sub.add_parser("gen", help="generate levels with verified solutions")
    common(sp)
    room(sp)
    sp.add_argument("-n", type=int, default=10)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="train an agent (writes metrics.jsonl and checkpoint.json)")
    common(sp, seed=None)
    sp.add_argument("--agent", choices=["i2a", "copy", "baseline", "baseline-large", "mc-search"])
    sp.add_argument("--model", choices=["perfect", "corrupted", "copy"])
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--toy", action="store_true", help="start from the 6x6 one-box toy settings")
    sp.set_defaults(func=cmd_train, out="run")

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("checkpoint")
    sp.add_argument("--levels", help="level file (default: freshly generated)")
    sp.add_argument("-n", type=int, default=100)
    sp.add_argument("--greedy", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("plan", help="solve levels with MCTS")
    common(sp)
    room(sp, boxes=1)
    sp.add_argument("--levels")
    sp.add_argument("-n", type=int, default=10)
    sp.add_argument("--budget", type=int, default=10_000)
    sp.add_argument("--max-steps", type=int, default=120)
    sp.add_argument("-c", type=float, default=1.0)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("bench-efficiency", help="model calls needed to solve levels")
    common(sp)
    room(sp, boxes=1)
    sp.add_argument("--checkpoint")
    sp.add_argument("-n", type=int, default=20)
    sp.add_argument("--budgets", type=int, nargs="*", default=[100, 1000])
    sp.add_argument("--random-calls", type=int, default=0, help="also run uniform random search with this cap")
    sp.add_argument("--max-steps", type=int, default=120)
    sp.set_defaults(func=cmd_bench_efficiency)

    sp = sub.add_parser("bench-generalize", help="solve rate per box count")
    common(sp)
    sp.add_argument("--checkpoint", help="agent checkpoint (default: scripted optimal agent)")
    sp.add_argument("-n", type=int, default=10)
    sp.add_argument("--width", type=int, default=7)
    sp.add_argument("--height", type=int, default=7)
    sp.add_argument("--min-boxes", type=int, default=1)
    sp.add_argument("--max-boxes", type=int, default=3)
    sp.add_argument("--max-steps", type=int, default=120)
    sp.set_defaults(func=cmd_bench_generalize)

    sp = sub.add_parser("bench-robustness", help="perfect vs corrupted model for I2A and MC search")
    common(sp)
    sp.add_argument("--seeds", type=int, default=3)
    sp.add_argument("--episodes", type=int)
    sp.set_defaults(func=cmd_bench_robustness, toy=True, agent=None, model=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
