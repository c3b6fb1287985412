"""Command-line entry points: serve, render, eval, train."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np


def _load_backgrounds(args, image_size: int):
    if getattr(args, "background_root", None):
        from .backgrounds import load_background_set
        return load_background_set(args.background_root, split=args.background_split,
                                   size=(image_size, image_size))
    return None


def _cmd_serve(args) -> int:
    from .server import serve, serve_stdio
    backgrounds = _load_backgrounds(args, args.image_size)
    if args.stdio:
        serve_stdio(background_set=backgrounds, image_size=args.image_size)
        return 0
    server = serve((args.host, args.port), background_set=backgrounds,
                   image_size=args.image_size)
    host, port = server.address
    print(f"serving environments on {host}:{port}", flush=True)
    try:
        import threading
        threading.Event().wait()
    except KeyboardInterrupt:
        server.close()
    return 0


def _cmd_render(args) -> int:
    from .harness import blend_strip, difficulty_strip
    backgrounds = _load_backgrounds(args, args.image_size)
    strip = difficulty_strip(args.task, args.out, seed=args.seed, dynamic=args.dynamic,
                             image_size=args.image_size, background_set=backgrounds)
    blend = blend_strip(args.task, args.out, seed=args.seed,
                        image_size=args.image_size, background_set=backgrounds)
    print(f"wrote {strip}")
    print(f"wrote {blend}")
    if args.preset != "none":
        from .env import make_env
        from .backgrounds import write_ppm
        env = make_env(args.task, args.preset, dynamic=args.dynamic, seed=args.seed,
                       background_set=backgrounds, image_size=args.image_size)
        frame = env.reset().observation
        path = Path(args.out) / f"preset_{args.preset}_{args.task}.ppm"
        write_ppm(path, frame)
        print(f"wrote {path}")
    return 0


def _cmd_eval(args) -> int:
    from .harness import evaluate_agent
    backgrounds = _load_backgrounds(args, args.image_size)
    summary = evaluate_agent(args.task, args.preset, args.dynamic, args.agent,
                             args.episodes, args.seed, out_dir=args.out,
                             background_set=backgrounds, image_size=args.image_size)
    print(f"{summary['task']} [{summary['preset']}] {summary['agent']}: "
          f"{summary['mean_return']:.1f} +- {summary['stderr']:.1f} "
          f"over {summary['episodes']} episodes")
    return 0


def _cmd_train(args) -> int:
    from .env import make_env
    from .qtopt import AugConfig, CEMConfig, TrainConfig, evaluate, train
    backgrounds = _load_backgrounds(args, args.image_size)
    env = make_env(args.task, args.preset, dynamic=args.dynamic, seed=args.seed,
                   background_set=backgrounds, image_size=args.image_size,
                   observation=args.observation)
    aug = AugConfig.named(args.aug, crop_size=args.crop_size)
    cem = CEMConfig(population=args.cem_population, iterations=args.cem_iterations,
                    elites=args.cem_elites)
    config = TrainConfig(steps=args.steps, batch_size=args.batch_size, lr=args.lr,
                         hidden_dim=args.hidden_dim, gamma=args.gamma,
                         replay_capacity=args.replay_capacity, warmup=args.warmup)
    agent, log = train(env, aug, cem, config, seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "episode", "episode_return", "loss"])
        for record in log:
            writer.writerow([record.get("step", ""), record.get("episode", ""),
                             record.get("episode_return", ""), record.get("loss", "")])
    from .nn import tree_flatten
    np.savez(out / "critic.npz", flat_params=tree_flatten(agent.params))
    print(f"wrote {out / 'metrics.csv'}")

    if args.eval_episodes > 0:
        eval_env = make_env(args.task, args.preset, dynamic=args.dynamic,
                            seed=args.seed + 1, background_set=backgrounds,
                            image_size=args.image_size, observation=args.observation)
        returns = evaluate(eval_env, agent, args.eval_episodes, seed=args.seed)
        print(f"eval over {len(returns)} episodes: mean return {np.mean(returns):.1f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distraxion",
                                     description="Distracting continuous-control benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_preset=True):
        p.add_argument("--task", default="cartpole_swingup",
                       choices=["cartpole_swingup", "reacher_easy", "ball_in_cup_catch"])
        if with_preset:
            p.add_argument("--preset", default="none",
                           choices=["none", "easy", "medium", "blind"])
        p.add_argument("--dynamic", action="store_true")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--image-size", type=int, default=100)
        p.add_argument("--background-root", default=None,
                       help="dataset root with <split>/<video>/<NNNNN>.ppm frames; "
                            "procedural backgrounds are used when omitted")
        p.add_argument("--background-split", default="train")

    p_serve = sub.add_parser("serve", help="run the wire-protocol environment server")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=7755)
    p_serve.add_argument("--stdio", action="store_true",
                         help="serve one session over stdin/stdout")
    p_serve.add_argument("--image-size", type=int, default=100)
    p_serve.add_argument("--background-root", default=None)
    p_serve.add_argument("--background-split", default="train")
    p_serve.set_defaults(func=_cmd_serve)

    p_render = sub.add_parser("render", help="write difficulty and blend frame strips")
    common(p_render)
    p_render.add_argument("--out", required=True)
    p_render.set_defaults(func=_cmd_render)

    p_eval = sub.add_parser("eval", help="evaluate a reference agent")
    common(p_eval)
    p_eval.add_argument("--agent", default="random", choices=["random", "scripted"])
    p_eval.add_argument("--episodes", type=int, default=100)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_train = sub.add_parser("train", help="train desk-scale QT-Opt with crop augmentation")
    common(p_train)
    p_train.add_argument("--aug", default="rad", choices=["none", "rad", "drq"])
    p_train.add_argument("--steps", type=int, default=50_000)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--observation", default="pixels", choices=["pixels", "state"])
    p_train.add_argument("--crop-size", type=int, default=84)
    p_train.add_argument("--batch-size", type=int, default=512)
    p_train.add_argument("--hidden-dim", type=int, default=256)
    p_train.add_argument("--lr", type=float, default=1e-4)
    p_train.add_argument("--gamma", type=float, default=0.99)
    p_train.add_argument("--replay-capacity", type=int, default=100_000)
    p_train.add_argument("--warmup", type=int, default=1_000)
    p_train.add_argument("--cem-population", type=int, default=64)
    p_train.add_argument("--cem-iterations", type=int, default=2)
    p_train.add_argument("--cem-elites", type=int, default=6)
    p_train.add_argument("--eval-episodes", type=int, default=0)
    p_train.set_defaults(func=_cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
