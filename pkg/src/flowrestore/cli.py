"""Command-line front end.

Subcommands: train, restore, experiment, ablate, simulate-sde,
certify-bounds, oracle-field. Every command reads the same config format
(see harness.parse_config); --seed, --out and --unsafe-h override the
corresponding config fields. Exit codes: 0 success, 2 config error,
3 numerical divergence, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .flowfield import (GaussianField, MlpField, field_lipschitz_estimate,
                        load_field, save_field)
from .fmtrain import TrainConfig, make_data_source, train
from .harness import (ConfigError, DivergenceError, ExperimentConfig, ablate,
                      build_problem, build_schedule, build_solver_config,
                      load_config, parse_config, run_experiment, test_images)
from .metrics import psnr, ssim
from .netpbm import NetpbmError, read_netpbm, write_netpbm
from .numerics import RngStream
from .schedule import BoundInputs
from .sdelab import (convergence_certificate, discrete_vs_sde,
                     process_from_schedule, simulate_ensemble,
                     write_certificate_csv, write_discrepancy_csv)
from .solver import restore, write_trajectory_csv


def _config_from(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.out is not None:
        overrides["out"] = args.out
    if args.unsafe_h:
        overrides["unsafe_h"] = True
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _field_from(cfg: ExperimentConfig):
    if not cfg.checkpoint:
        raise ConfigError("field.checkpoint not set")
    return load_field(cfg.checkpoint)


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _first_problem(cfg: ExperimentConfig, clean=None):
    """Problem for test image 0 under the first seed, matching the
    experiment loop's RNG layout."""
    seed = cfg.seeds[0]
    if clean is None:
        clean = test_images(cfg)[0]
    problem = build_problem(cfg, clean, RngStream(seed).derive("degrade", 0))
    solver_cfg = build_solver_config(cfg, seed=seed * 100_000)
    return clean, problem, solver_cfg


def _cmd_train(args) -> int:
    cfg = _config_from(args)
    if not cfg.checkpoint:
        raise ConfigError("field.checkpoint must name the file to write")
    data = make_data_source("synthetic-images", size=cfg.size,
                            generator=cfg.generator)
    field = MlpField(cfg.size * cfg.size, hidden=cfg.hidden,
                     seed=cfg.train_seed)
    train_cfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                            learning_rate=cfg.learning_rate,
                            lipschitz_coeff=cfg.lipschitz_coeff,
                            probes_per_batch=cfg.probes_per_batch,
                            seed=cfg.train_seed)
    field, records = train(field, data, train_cfg)
    path = Path(cfg.checkpoint)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    save_field(field, path)
    print(f"trained {train_cfg.epochs} steps; final loss "
          f"{records[-1].total:.6f}; wrote {path}")
    return 0


def _cmd_restore(args) -> int:
    cfg = _config_from(args)
    field = _field_from(cfg)
    clean = None
    if args.image:
        clean = read_netpbm(args.image)
        if clean.ndim == 3:
            clean = clean.mean(axis=2)
    clean, problem, solver_cfg = _first_problem(cfg, clean)
    x, traj = restore(problem, field, solver_cfg, reference=clean)
    out = _out_dir(cfg)
    write_netpbm(out / "clean.pgm", clean)
    if problem.observation.ndim == 2:
        write_netpbm(out / "degraded.pgm",
                     np.clip(problem.observation, 0.0, 1.0))
    write_netpbm(out / "restored.pgm", np.clip(x, 0.0, 1.0))
    write_trajectory_csv(out / "trajectory.csv", traj)
    if traj.diverged:
        print(f"diverged after {len(traj.records) - 1} iterations; "
              f"partial results in {out}", file=sys.stderr)
        return 3
    print(f"psnr={psnr(clean, x):.2f} ssim={ssim(clean, x):.4f} wrote {out}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _config_from(args)
    report = run_experiment(cfg)
    print(f"psnr {report.psnr_mean:.2f} +- {report.psnr_std:.2f}")
    print(f"ssim {report.ssim_mean:.4f} +- {report.ssim_std:.4f}")
    print(f"report {Path(cfg.out) / 'report.csv'} "
          f"(config {report.config_hash})")
    return 0


def _parse_axis_values(axis: str, raw: str):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("--values must list at least one value")
    if axis == "h":
        return [float(p) for p in parts]
    if axis == "lambda":
        return [p if p == "linear" else float(p) for p in parts]
    pairs = []
    for p in parts:
        if ":" not in p:
            raise ConfigError("lipschitz values take the form coeff:path")
        coeff, path = p.split(":", 1)
        pairs.append((float(coeff), path))
    return pairs


def _cmd_ablate(args) -> int:
    cfg = _config_from(args)
    values = _parse_axis_values(args.axis, args.values)
    result = ablate(cfg, args.axis, values)
    for row in result.rows:
        extras = "".join(
            f" {key}={row.extra[key]:.4g}" for key in sorted(row.extra)
            if np.isscalar(row.extra[key]))
        print(f"{args.axis}={row.label}: psnr {row.psnr_mean:.2f} "
              f"+- {row.psnr_std:.2f}{extras}")
    for name, verdict in sorted(result.verdicts.items()):
        print(f"verdict {name}: {verdict}")
    print(f"table {Path(cfg.out) / f'ablate-{args.axis}.csv'}")
    return 0


def _cmd_simulate_sde(args) -> int:
    cfg = _config_from(args)
    field = _field_from(cfg)
    _, problem, solver_cfg = _first_problem(cfg)
    report = discrete_vs_sde(problem, field, solver_cfg, policy=args.policy,
                             refine=args.refine,
                             noise_free=args.noise_free)
    out = _out_dir(cfg)
    write_discrepancy_csv(out / "discrepancy.csv", report)
    print(f"policy={report.policy} sup={report.sup:.6g} "
          f"sup_relative={report.sup_relative:.6g} "
          f"wrote {out / 'discrepancy.csv'}")
    return 0


def _cmd_certify_bounds(args) -> int:
    cfg = _config_from(args)
    field = _field_from(cfg)
    if cfg.k >= cfg.n:
        raise ConfigError("certify-bounds needs solver.k < solver.n")
    case = args.case
    if case is None:
        case = ("strongly-convex" if cfg.operator == "identity-noise"
                else "convex")
    if case == "strongly-convex" and cfg.operator != "identity-noise":
        raise ConfigError("strongly-convex case needs the identity-noise "
                          "operator (unit curvature)")
    clean, problem, solver_cfg = _first_problem(cfg)
    _, traj = restore(problem, field, solver_cfg)
    if traj.diverged or len(traj.records) <= cfg.k:
        raise DivergenceError("solver run diverged before the anchor")
    anchor = traj.records[cfg.k].x.reshape(-1)

    shape = clean.shape

    def grad_flat(v: np.ndarray) -> np.ndarray:
        # Ensemble states are flat vectors; the operator wants image shape.
        return problem.grad(v.reshape(shape)).reshape(-1)

    schedule = build_schedule(cfg)
    proc, ts = process_from_schedule(schedule, cfg.k, cfg.n, field,
                                     grad_f=grad_flat,
                                     rescale=args.rescale, dim=anchor.size)
    seed = cfg.seeds[0]
    ensemble = simulate_ensemble(proc, anchor, ts,
                                 RngStream(seed).derive("certify"),
                                 paths=args.paths)

    probe_rng = RngStream(seed).derive("certify-probes")
    stride = max(1, (cfg.n - cfg.k) // 6)
    levels = [schedule.level(k) for k in range(cfg.k, cfg.n + 1, stride)]
    xs = [ensemble.states[0, j] for j in
          range(0, ensemble.states.shape[1], max(1, len(ts) // 4))]
    inputs = BoundInputs(
        t0=float(ts[0]), t=float(ts[-1]),
        L_u=field_lipschitz_estimate(field, levels, xs, probe_rng,
                                     n_iters=10),
        L_f=problem.lipschitz_constant(),
        M_f=max(float(np.linalg.norm(grad_flat(v)))
                for v in ensemble.states[::max(1, args.paths // 8), -1]),
        mu_f=1.0 if cfg.operator == "identity-noise" else 0.0,
        beta=proc.beta if proc.beta is not None else (lambda s: 0.0),
        sigma=proc.sigma_at, dim=anchor.size, case=case)
    report = convergence_certificate(ensemble, inputs,
                                     alpha=proc.alpha if args.rescale
                                     else None)
    out = _out_dir(cfg)
    write_certificate_csv(out / "certificate.csv", report)
    worst = float(np.min(report.margin + 3.0 * report.se))
    print(f"case={report.case} violations={report.violations} "
          f"worst margin+3se={worst:.6g} wrote {out / 'certificate.csv'}")
    return 0


def _cmd_oracle_field(args) -> int:
    cfg = _config_from(args)
    mean = np.array([float(v) for v in
                     args.mean.replace(",", " ").split()])
    if mean.size == 0:
        raise ConfigError("--mean must list at least one number")
    oracle = GaussianField(mean, args.std)
    ts = np.linspace(0.0, 1.0, args.points)
    offsets = np.linspace(-2.0 * args.std, 2.0 * args.std, args.points)
    lines = ["t,offset," + ",".join(f"u{i}" for i in range(mean.size))]
    for t in ts:
        for r in offsets:
            u = oracle.eval_field(float(t), mean + r)
            lines.append(f"{float(t)!r},{float(r)!r}," +
                         ",".join(repr(float(v)) for v in u))
    out = _out_dir(cfg)
    (out / "oracle.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'oracle.csv'} "
          f"({args.points}x{args.points} grid, dim {mean.size})")
    return 0


def _add_common(sub) -> None:
    sub.add_argument("--config", metavar="PATH",
                     help="experiment config file (INI)")
    sub.add_argument("--seed", type=int, metavar="N",
                     help="run a single seed, overriding run.seeds")
    sub.add_argument("--out", metavar="DIR", help="override run.out")
    sub.add_argument("--unsafe-h", action="store_true",
                     help="lift the extrapolation cap (divergence demos)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowrestore",
        description="Flow-matching image restoration toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train a field and write a checkpoint")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("restore", help="restore one image")
    _add_common(p)
    p.add_argument("--image", metavar="PATH",
                   help="PGM/PPM to restore (default: first test image)")
    p.set_defaults(func=_cmd_restore)

    p = subs.add_parser("experiment", help="full multi-seed experiment")
    _add_common(p)
    p.set_defaults(func=_cmd_experiment)

    p = subs.add_parser("ablate", help="sweep one axis and compare")
    _add_common(p)
    p.add_argument("--axis", required=True,
                   choices=("h", "lambda", "lipschitz"))
    p.add_argument("--values", required=True, metavar="LIST",
                   help="comma-separated; lipschitz uses coeff:path pairs")
    p.set_defaults(func=_cmd_ablate)

    p = subs.add_parser("simulate-sde",
                        help="solver-vs-SDE discrepancy report")
    _add_common(p)
    p.add_argument("--policy", choices=("matched", "refined"),
                   default="matched")
    p.add_argument("--refine", type=int, default=64)
    p.add_argument("--noise-free", action="store_true")
    p.set_defaults(func=_cmd_simulate_sde)

    p = subs.add_parser("certify-bounds",
                        help="Monte-Carlo convergence certificate")
    _add_common(p)
    p.add_argument("--paths", type=int, default=300)
    p.add_argument("--rescale", action="store_true",
                   help="extrapolation-rescaled variant")
    p.add_argument("--case", choices=("strongly-convex", "convex",
                                      "lipschitz"))
    p.set_defaults(func=_cmd_certify_bounds)

    p = subs.add_parser("oracle-field",
                        help="dump the Gaussian closed-form field on a grid")
    _add_common(p)
    p.add_argument("--mean", default="0.0", metavar="LIST",
                   help="comma-separated mean vector")
    p.add_argument("--std", type=float, default=0.5)
    p.add_argument("--points", type=int, default=9)
    p.set_defaults(func=_cmd_oracle_field)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NetpbmError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
