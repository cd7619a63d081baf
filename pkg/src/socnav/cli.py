"""Command-line pipeline: gen-data, train, eval, rollout.

Every command is deterministic for fixed flags: rerunning it reproduces
its output files byte for byte. Exit codes: 0 success, 2 usage errors
(bad flags, missing paths), 1 runtime failures.
"""

import argparse
import os
import sys

import numpy as np

from . import cnp, encoder, envgen, evaluate, planner, sim
from .config import resolve_config
from .nets import load_checkpoint
from .world import save_pgm_gray


class UsageError(Exception):
    pass


def _add_config_flag(p):
    p.add_argument("--config", help="key=value config file (default: $SOCNAV_CONFIG)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="socnav",
        description="Learn navigation from demonstrations and run it in a 2D simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a demonstration dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=("static", "social"), default="static",
                   help="static environments or scripted-pedestrian episodes")
    p.add_argument("--grid-size", type=int, dest="grid_size")
    p.add_argument("--obstacles", type=int, dest="n_obstacles")
    p.add_argument("--degree", type=int)
    _add_config_flag(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--model-kind", choices=("cnp", "conv-cnmp", "social"),
                   required=True, dest="model_kind")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, default=0)
    _add_config_flag(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a trained model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="report file to write")
    _add_config_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="execute a model in the simulator")
    p.add_argument("--scenario", required=True, help="scenario file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--forecaster", choices=("cv", "oracle"), default="cv")
    p.add_argument("--overlay", action="store_true",
                   help="also write an overlay PGM of the executed paths")
    _add_config_flag(p)
    p.set_defaults(func=cmd_rollout)
    return parser


def _config_from(args, extra=None):
    overrides = dict(extra or {})
    for key in ("grid_size", "n_obstacles", "degree", "epochs", "lr"):
        if hasattr(args, key) and getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    return resolve_config(config_path=args.config, overrides=overrides)


def _require_dir(path, what):
    if not os.path.isdir(path):
        raise UsageError(f"{what} directory not found: {path}")


def _require_file(path, what):
    if not os.path.isfile(path):
        raise UsageError(f"{what} not found: {path}")


def cmd_gen_data(args):
    cfg = _config_from(args)
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    if args.kind == "static":
        envgen.generate_dataset(args.out, count=args.episodes, seed=args.seed,
                                grid_size=cfg.grid_size, n_obstacles=cfg.n_obstacles,
                                world_size=cfg.world_size, degree=cfg.degree,
                                n_samples=cfg.n_samples)
    else:
        planner.generate_social_dataset(
            args.out, count=args.episodes, seed=args.seed,
            world_size=cfg.world_size, grid_size=cfg.grid_size,
            start=(cfg.social_start_x, cfg.social_start_y),
            goal=(cfg.social_goal_x, cfg.social_goal_y),
            horizon=cfg.horizon, forecast_dt=cfg.forecast_dt, r0=cfg.r0,
            dr=cfg.dr, d_safe=cfg.d_safe, t_ref=cfg.t_ref)
    print(f"wrote {args.episodes} episodes to {args.out}")
    return 0


def _load_static_episodes(data_dir):
    dataset = envgen.load_dataset(data_dir)
    return dataset, [(ep.load_grid(), ep.load_trajectory()) for ep in dataset.episodes]


def _write_loss_csv(path, history):
    with open(path, "w") as fh:
        fh.write("epoch,nll\n")
        for i, nll in enumerate(history):
            fh.write(f"{i},{nll:.17g}\n")


def cmd_train(args):
    cfg = _config_from(args)
    _require_dir(args.data, "dataset")
    _require_file(os.path.join(args.data, "manifest.txt"), "dataset manifest")
    meta = {"epochs": cfg.epochs, "lr": repr(cfg.lr), "seed": args.seed,
            "data": os.path.basename(os.path.normpath(args.data))}
    if args.model_kind == "social":
        dataset = planner.load_social_dataset(args.data)
        m = dataset.manifest
        spm = planner.SocialPlannerModel.create(
            horizon=int(m["horizon"]), forecast_dt=float(m["forecast_dt"]),
            t_ref=float(m["t_ref"]), world_size=float(m["world_size"]),
            d_safe=float(m["d_safe"]), d_r=cfg.d_r, n_max=cfg.n_max,
            seed=args.seed)
        _, history = planner.train_social_planner(
            spm, dataset.training_pairs(), epochs=cfg.epochs, lr=cfg.lr,
            seed=args.seed)
        spm.save(args.out, extra_meta=meta)
    else:
        dataset, episodes = _load_static_episodes(args.data)
        if args.model_kind == "cnp":
            model = cnp.CnpModel.create(d_gamma=0, sm_dim=2, d_r=cfg.d_r,
                                        n_max=cfg.n_max, hidden=cfg.hidden,
                                        depth=cfg.depth, seed=args.seed)
            trajs = [traj for _, traj in episodes]
            _, history = cnp.train(model, trajs, epochs=cfg.epochs, lr=cfg.lr,
                                   seed=args.seed)
            model.save(args.out, extra_meta=meta)
        else:
            grid_size = int(dataset.manifest["grid_size"])
            model = encoder.ConvCnmpModel.create(
                grid_size=grid_size, d_gamma=cfg.d_gamma, d_r=cfg.d_r,
                n_max=cfg.n_max, hidden=cfg.hidden, depth=cfg.depth,
                seed=args.seed)
            _, history = encoder.train_conv_cnmp(model, episodes,
                                                 epochs=cfg.epochs, lr=cfg.lr,
                                                 seed=args.seed)
            model.save(args.out, extra_meta=meta)
    _write_loss_csv(args.out + ".loss.csv", history)
    print(f"trained {args.model_kind} for {cfg.epochs} epochs, "
          f"final nll {history[-1]:.6f}, wrote {args.out}")
    return 0


def _load_model(path):
    _require_file(path, "model checkpoint")
    _, meta = load_checkpoint(path)
    kind = meta.get("kind", "cnp")
    if kind == "social":
        return kind, planner.SocialPlannerModel.load(path)
    if kind == "conv-cnmp":
        return kind, encoder.ConvCnmpModel.load(path)
    return kind, cnp.CnpModel.load(path)[0]


def cmd_eval(args):
    _config_from(args)
    _require_dir(args.data, "dataset")
    kind, model = _load_model(args.model)
    if kind == "social":
        dataset = planner.load_social_dataset(args.data)
        result = evaluate.evaluate_social(model, dataset.episodes)
    else:
        _, episodes = _load_static_episodes(args.data)
        result = evaluate.evaluate_static(model, episodes)
    evaluate.save_report(args.report, result, extra={"model_kind": kind})
    print(f"evaluated {kind} on {result.episodes} episodes, "
          f"nll {result.nll:.6f}, wrote {args.report}")
    return 0


def _overlay_image(scenario, rollout):
    grid = scenario.grid
    img = np.where(grid.cells == 1, 255, 0).astype(np.int64)
    trace = rollout.trace
    for i in range(len(trace)):
        r, c = grid.cell_of_meters((trace.x[i], trace.y[i]))
        if img[r, c] == 0:
            img[r, c] = 128
    if trace.ped_xy.shape[1]:
        for i in range(trace.ped_xy.shape[0]):
            for j in range(trace.ped_xy.shape[1]):
                r, c = grid.cell_of_meters(trace.ped_xy[i, j])
                if img[r, c] == 0:
                    img[r, c] = 64
    return img


def cmd_rollout(args):
    cfg = _config_from(args)
    _require_file(args.scenario, "scenario file")
    scenario = sim.load_scenario(args.scenario)
    kind, model = _load_model(args.model)
    dwa_cfg = cfg.dwa()
    if kind == "social":
        rollout = planner.track_plan(scenario, model, cfg=dwa_cfg,
                                     forecaster=args.forecaster, dt=cfg.sim_dt,
                                     personal_zone=cfg.personal_zone,
                                     r0=cfg.r0, dr=cfg.dr)
    else:
        policy = planner.make_static_policy(model, scenario, dwa_cfg)
        rollout = sim.run_episode(scenario, policy, dt=cfg.sim_dt,
                                  limits=dwa_cfg.limits(),
                                  personal_zone=cfg.personal_zone,
                                  robot_radius=cfg.robot_radius)
    metrics = sim.compute_metrics(rollout, personal_zone=cfg.personal_zone)
    os.makedirs(args.out, exist_ok=True)
    sim.save_trace_csv(os.path.join(args.out, "trace.csv"), rollout.trace)
    sim.save_metrics(os.path.join(args.out, "metrics.txt"), metrics)
    if args.overlay:
        save_pgm_gray(os.path.join(args.out, "overlay.pgm"),
                      _overlay_image(scenario, rollout))
    print(f"rollout: success={int(metrics.success)} duration={metrics.duration:.2f} "
          f"path_length={metrics.path_length:.3f} min_ped_dist={metrics.min_ped_dist:.3f}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures: training divergence, no path
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
