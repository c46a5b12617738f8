"""Experiment harness: config parsing, restoration runs, ablation drivers.

Configuration is flat INI-style key-value with sections. Parsing is strict:
unknown sections or keys are rejected, operator parameters are only accepted
for the operator actually selected, and parse -> serialize -> parse is the
identity. The config hash is taken over the canonical serialization, so it
is invariant to whitespace and key order but changes with any semantic
field.

Runs are sequential and deterministic; seeds are independent of each other,
and all files for a run directory are written by the single run loop, so a
re-run with the same config and seeds reproduces every CSV byte for byte
(timing goes to a .log sidecar, never into CSVs).
"""

import configparser
import hashlib
import io
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import corpus
from .degrade import FidelityProblem, degrade_observe, make_operator
from .flowfield import load_field
from .fmtrain import make_data_source, mean_jacobian_norm
from .metrics import psnr, ssim
from .netpbm import write_netpbm
from .numerics import RngStream
from .schedule import Schedule
from .solver import SolverConfig, restore

_OPERATOR_PARAMS = {
    "identity-noise": {},
    "gaussian-blur": {"kernel_std": float, "kernel_size": int},
    "downsample": {"factor": int},
    "random-mask": {"drop_fraction": float, "mask_seed": int},
    "box-mask": {"area_fraction": float},
}

_INITS = ("observation-adjoint", "zeros", "gaussian")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DivergenceError(RuntimeError):
    """A restoration run left the finite range."""


@dataclass
class ExperimentConfig:
    # [task]
    operator: str = "gaussian-blur"
    noise_std: float = 0.02
    op_params: dict = field(default_factory=dict)
    # [data]
    size: int = 16
    generator: str = "smooth-blobs"
    count: int = 3
    image_seed: int = 777
    # [field]
    checkpoint: str = ""
    # [solver]
    schedule: str = "geometric"
    lam: float = 0.965
    gamma: object = "tied"
    n: int = 100
    k: int = 80
    h: float = 0.0
    h_ramp: int = 0
    noise_draws: int = 1
    init: str = "observation-adjoint"
    max_extrapolation: float = 0.99
    unsafe_h: bool = False
    # [run]
    seeds: tuple = (0, 1, 2, 3, 4)
    out: str = "runs/default"
    # [train]
    epochs: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    lipschitz_coeff: float = 0.0
    probes_per_batch: int = 1
    hidden: tuple = (128, 128)
    train_seed: int = 0


def _parse_gamma(raw: str):
    if raw == "tied":
        return "tied"
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"solver.gamma must be 'tied' or a number, "
                          f"got {raw!r}") from None
    return value


def _parse_ints(raw: str, key: str) -> tuple:
    parts = raw.replace(",", " ").split()
    if not parts:
        raise ConfigError(f"{key} must list at least one integer")
    try:
        values = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key} must be integers, got {raw!r}") from None
    return values


def _typed(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as "
                          f"{typ.__name__}") from None


_SCALAR_KEYS = {
    "task": {"operator": str, "noise_std": float},
    "data": {"size": int, "generator": str, "count": int, "image_seed": int},
    "field": {"checkpoint": str},
    "solver": {"schedule": str, "lam": float, "n": int, "k": int,
               "h": float, "h_ramp": int, "noise_draws": int, "init": str,
               "max_extrapolation": float, "unsafe_h": bool},
    "run": {"out": str},
    "train": {"epochs": int, "batch_size": int, "learning_rate": float,
              "lipschitz_coeff": float, "probes_per_batch": int,
              "train_seed": int},
}

_FIELD_FOR_KEY = {"n": "n", "k": "k"}


def parse_config(text: str, overrides: dict = None) -> ExperimentConfig:
    """Parse config text; typed attribute overrides (e.g. from CLI flags)
    are applied before validation so they can relax or tighten the file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    known_sections = set(_SCALAR_KEYS) | {"run"}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")

    cfg = ExperimentConfig()
    if parser.has_section("task"):
        items = dict(parser.items("task"))
        operator = items.pop("operator", cfg.operator)
        if operator not in _OPERATOR_PARAMS:
            raise ConfigError(f"task.operator must be one of "
                              f"{sorted(_OPERATOR_PARAMS)}, got {operator!r}")
        cfg.operator = operator
        if "noise_std" in items:
            cfg.noise_std = _typed("task", "noise_std",
                                   items.pop("noise_std"), float)
        allowed = _OPERATOR_PARAMS[operator]
        for key, raw in items.items():
            if key not in allowed:
                raise ConfigError(f"unknown key task.{key} for operator "
                                  f"{operator!r}")
            cfg.op_params[key] = _typed("task", key, raw, allowed[key])

    for section in ("data", "field", "solver", "train"):
        if not parser.has_section(section):
            continue
        allowed = _SCALAR_KEYS[section]
        for key, raw in parser.items(section):
            if section == "solver" and key == "gamma":
                cfg.gamma = _parse_gamma(raw)
                continue
            if section == "train" and key == "hidden":
                cfg.hidden = _parse_ints(raw, "train.hidden")
                continue
            if key not in allowed:
                raise ConfigError(f"unknown key {section}.{key}")
            setattr(cfg, _FIELD_FOR_KEY.get(key, key),
                    _typed(section, key, raw, allowed[key]))

    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key == "seeds":
                seeds = _parse_ints(raw, "run.seeds")
                if len(set(seeds)) != len(seeds):
                    raise ConfigError("run.seeds must be distinct")
                cfg.seeds = seeds
            elif key == "out":
                cfg.out = raw.strip()
            else:
                raise ConfigError(f"unknown key run.{key}")

    for key, value in (overrides or {}).items():
        setattr(cfg, key, value)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.count < 1:
        raise ConfigError("data.count must be >= 1")
    if cfg.size < 4:
        raise ConfigError("data.size must be >= 4")
    if cfg.generator != "mixed" and cfg.generator not in corpus.KINDS:
        raise ConfigError(f"data.generator must be 'mixed' or one of "
                          f"{list(corpus.KINDS)}, got {cfg.generator!r}")
    if cfg.init not in _INITS:
        raise ConfigError(f"solver.init must be one of {_INITS}")
    if cfg.noise_std < 0.0:
        raise ConfigError("task.noise_std must be >= 0")
    try:
        build_schedule(cfg)
        build_solver_config(cfg, seed=0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: dict = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text: fixed section and key order, repr'd floats."""
    def fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, tuple):
            return " ".join(str(v) for v in value)
        return str(value)

    out = io.StringIO()
    out.write("[task]\n")
    out.write(f"operator = {cfg.operator}\n")
    out.write(f"noise_std = {fmt(cfg.noise_std)}\n")
    for key in sorted(cfg.op_params):
        out.write(f"{key} = {fmt(cfg.op_params[key])}\n")
    out.write("\n[data]\n")
    for key in ("size", "generator", "count", "image_seed"):
        out.write(f"{key} = {fmt(getattr(cfg, key))}\n")
    out.write("\n[field]\n")
    out.write(f"checkpoint = {cfg.checkpoint}\n")
    out.write("\n[solver]\n")
    out.write(f"schedule = {cfg.schedule}\n")
    out.write(f"lam = {fmt(cfg.lam)}\n")
    out.write(f"gamma = {fmt(cfg.gamma)}\n")
    for key in ("n", "k", "h", "h_ramp", "noise_draws", "init",
                "max_extrapolation", "unsafe_h"):
        out.write(f"{key} = {fmt(getattr(cfg, key))}\n")
    out.write("\n[run]\n")
    out.write(f"seeds = {fmt(cfg.seeds)}\n")
    out.write(f"out = {cfg.out}\n")
    out.write("\n[train]\n")
    for key in ("epochs", "batch_size", "learning_rate", "lipschitz_coeff",
                "probes_per_batch", "hidden", "train_seed"):
        out.write(f"{key} = {fmt(getattr(cfg, key))}\n")
    return out.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    digest = hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
    return digest[:16]


# --------------------------------------------------------------- builders

def build_schedule(cfg: ExperimentConfig) -> Schedule:
    if cfg.schedule == "geometric":
        return Schedule.geometric(cfg.lam, cfg.n, gamma=cfg.gamma, h=cfg.h)
    if cfg.schedule == "linear":
        return Schedule.linear(cfg.n, gamma=cfg.gamma, h=cfg.h)
    raise ConfigError(f"solver.schedule must be geometric or linear, "
                      f"got {cfg.schedule!r}")


def build_solver_config(cfg: ExperimentConfig, seed: int) -> SolverConfig:
    return SolverConfig(schedule=build_schedule(cfg), N=cfg.n, K=cfg.k,
                        h=cfg.h, h_ramp=cfg.h_ramp,
                        max_extrapolation=cfg.max_extrapolation,
                        noise_draws_per_step=cfg.noise_draws, seed=seed,
                        init=cfg.init, allow_unsafe_h=cfg.unsafe_h)


def test_images(cfg: ExperimentConfig) -> list:
    """Clean evaluation images, fixed across seeds (runs vary the noise)."""
    data = make_data_source("synthetic-images", size=cfg.size,
                            generator=cfg.generator)
    rng = RngStream(cfg.image_seed).derive("test-images")
    batch = data.sample(rng, cfg.count)
    return [np.clip(img.reshape(cfg.size, cfg.size), 0.0, 1.0)
            for img in batch]


def build_problem(cfg: ExperimentConfig, clean: np.ndarray,
                  rng: RngStream) -> FidelityProblem:
    op = make_operator(cfg.operator, clean.shape, cfg.noise_std,
                       **cfg.op_params)
    observation = degrade_observe(op, clean, rng)
    return FidelityProblem(op, observation)


# ----------------------------------------------------------------- metrics

@dataclass
class MetricsReport:
    rows: list                 # (seed, image_index, psnr, ssim)
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    runtime: float
    config_hash: str
    seed_psnr: dict            # seed -> mean psnr over its images
    psnr_curve: np.ndarray = None  # mean PSNR per iteration, when collected


def aggregate_metrics(rows) -> tuple:
    """Mean +- std over per-seed means, matching the run protocol
    (each seed is one independent run; images average within the run)."""
    seeds = sorted({r[0] for r in rows})
    seed_psnr = {s: float(np.mean([r[2] for r in rows if r[0] == s]))
                 for s in seeds}
    seed_ssim = {s: float(np.mean([r[3] for r in rows if r[0] == s]))
                 for s in seeds}
    p = np.array([seed_psnr[s] for s in seeds])
    q = np.array([seed_ssim[s] for s in seeds])
    ddof = 1 if len(seeds) > 1 else 0
    return (float(p.mean()), float(p.std(ddof=ddof)),
            float(q.mean()), float(q.std(ddof=ddof)), seed_psnr)


def _fmt(x: float) -> str:
    if isinstance(x, float):
        x = float(x)  # numpy scalars repr as np.float64(...)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


# -------------------------------------------------------------------- runs

def run_experiment(cfg: ExperimentConfig, field=None,
                   want_curves: bool = False) -> MetricsReport:
    """degrade -> restore -> metrics for every (seed, image); writes
    per-seed CSVs and PGM images plus an aggregate report under cfg.out."""
    started = time.perf_counter()
    if field is None:
        if not cfg.checkpoint:
            raise ConfigError("field.checkpoint not set and no field passed")
        field = load_field(cfg.checkpoint)
    cleans = test_images(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, clean in enumerate(cleans):
        write_netpbm(out / f"clean-{i:03d}.pgm", clean)

    rows = []
    curves = []
    for seed in cfg.seeds:
        seed_dir = out / f"seed-{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        lines = ["image,psnr,ssim"]
        for i, clean in enumerate(cleans):
            problem = build_problem(
                cfg, clean, RngStream(seed).derive("degrade", i))
            solver_cfg = build_solver_config(cfg,
                                             seed=seed * 100_000 + i)
            try:
                x, traj = restore(problem, field, solver_cfg,
                                  reference=clean)
            except FloatingPointError as exc:
                raise DivergenceError(str(exc)) from exc
            if traj.diverged:
                raise DivergenceError(
                    f"seed {seed} image {i} left the finite range")
            p, s = psnr(clean, x), ssim(clean, x)
            rows.append((seed, i, p, s))
            lines.append(f"{i},{_fmt(p)},{_fmt(s)}")
            write_netpbm(seed_dir / f"restored-{i:03d}.pgm",
                         np.clip(x, 0.0, 1.0))
            obs = problem.observation
            if obs.ndim == 2:
                write_netpbm(seed_dir / f"degraded-{i:03d}.pgm",
                             np.clip(obs, 0.0, 1.0))
            if want_curves:
                curves.append(traj.column("psnr"))
        (seed_dir / "metrics.csv").write_text("\n".join(lines) + "\n")

    p_mean, p_std, s_mean, s_std, seed_psnr = aggregate_metrics(rows)
    digest = config_hash(cfg)
    report_lines = ["metric,mean,std",
                    f"psnr,{_fmt(p_mean)},{_fmt(p_std)}",
                    f"ssim,{_fmt(s_mean)},{_fmt(s_std)}",
                    f"# config={digest} seeds={' '.join(map(str, cfg.seeds))}"]
    (out / "report.csv").write_text("\n".join(report_lines) + "\n")
    runtime = time.perf_counter() - started
    (out / "run.log").write_text(
        f"config={digest}\nruntime_s={runtime:.3f}\n")
    return MetricsReport(
        rows=rows, psnr_mean=p_mean, psnr_std=p_std, ssim_mean=s_mean,
        ssim_std=s_std, runtime=runtime, config_hash=digest,
        seed_psnr=seed_psnr,
        psnr_curve=np.mean(curves, axis=0) if curves else None)


# ---------------------------------------------------------------- ablation

@dataclass
class AblationRow:
    label: str
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    seed_psnr: dict
    extra: dict


@dataclass
class AblationResult:
    axis: str
    rows: list
    verdicts: dict


def jacobian_norm_profile(field, states, ts, rng: RngStream,
                          probes: int = 8) -> float:
    """One smoothness scalar for a field: the root of the Hutchinson
    ||J||_F^2 estimate averaged over the sampled times and states."""
    batch = np.stack([np.asarray(x, dtype=np.float64).reshape(-1)
                      for x in states])
    points = [(float(t), batch) for t in ts]
    return math.sqrt(max(mean_jacobian_norm(field, points, rng, probes),
                         0.0))


def _sub_out(cfg: ExperimentConfig, axis: str, label: str):
    return replace(cfg, op_params=dict(cfg.op_params),
                   out=str(Path(cfg.out) / f"{axis}-{label}"))


def ablate(cfg: ExperimentConfig, axis: str, values, field=None,
           fields: dict = None) -> AblationResult:
    """One experiment per axis value, merged into a table with ordering
    verdicts.

    axis "h": values are extrapolation coefficients; verdict checks that
    larger h reaches the h-baseline's final PSNR (within 0.2 dB) at an
    earlier post-k iteration.
    axis "lambda": values are geometric ratios, or the string "linear" for
    the linear baseline; verdicts report the interior peak and the
    geometric-vs-linear ordering.
    axis "lipschitz": values are (coefficient, checkpoint) pairs (the
    penalty acts at training time); verdict checks the penalized field
    shrinks the mean Jacobian-norm estimate without costing PSNR.
    """
    if axis not in ("h", "lambda", "lipschitz"):
        raise ConfigError(f"unknown ablation axis {axis!r}")
    if axis != "lipschitz" and field is None:
        if not cfg.checkpoint:
            raise ConfigError("field.checkpoint not set and no field passed")
        field = load_field(cfg.checkpoint)
    rows = []
    verdicts = {}

    if axis == "h":
        hs = sorted(float(v) for v in values)
        for h in hs:
            sub = _sub_out(cfg, "h", _fmt(h))
            sub.h = h
            rep = run_experiment(sub, field=field, want_curves=True)
            rows.append(AblationRow(
                label=_fmt(h), psnr_mean=rep.psnr_mean,
                psnr_std=rep.psnr_std, ssim_mean=rep.ssim_mean,
                ssim_std=rep.ssim_std, seed_psnr=rep.seed_psnr,
                extra={"curve": rep.psnr_curve}))
        target = rows[0].extra["curve"][-1] - 0.2
        for row in rows:
            hit = np.nonzero(row.extra["curve"][cfg.k:] >= target)[0]
            row.extra["hit_iteration"] = (float(cfg.k + hit[0]) if hit.size
                                          else float("inf"))
        hits = [row.extra["hit_iteration"] for row in rows]
        verdicts["earlier_with_larger_h"] = (
            all(b <= a for a, b in zip(hits, hits[1:]))
            and hits[-1] < hits[0])

    elif axis == "lambda":
        numeric = sorted(float(v) for v in values if v != "linear")
        labels = [repr(v) for v in numeric] + (
            ["linear"] if "linear" in values else [])
        for label in labels:
            sub = _sub_out(cfg, "lambda", label)
            if label == "linear":
                sub.schedule = "linear"
            else:
                sub.schedule = "geometric"
                sub.lam = float(label)
            rep = run_experiment(sub, field=field)
            rows.append(AblationRow(
                label=label, psnr_mean=rep.psnr_mean, psnr_std=rep.psnr_std,
                ssim_mean=rep.ssim_mean, ssim_std=rep.ssim_std,
                seed_psnr=rep.seed_psnr, extra={}))
        geo = [r for r in rows if r.label != "linear"]
        if len(geo) >= 3:
            peak = int(np.argmax([r.psnr_mean for r in geo]))
            verdicts["interior_peak"] = 0 < peak < len(geo) - 1
        lin = [r for r in rows if r.label == "linear"]
        if lin:
            verdicts["geometric_beats_linear"] = (
                max(r.psnr_mean for r in geo) > lin[0].psnr_mean)

    else:
        pairs = sorted((float(c), str(p)) for c, p in values)
        probe_rng = RngStream(314).derive("jacobian-probes")
        states = [img.reshape(-1) for img in test_images(cfg)]
        ts = np.linspace(0.1, 0.9, 5)
        for coeff, path in pairs:
            loaded = (fields or {}).get(coeff) or load_field(path)
            sub = _sub_out(cfg, "lipschitz", _fmt(coeff))
            sub.checkpoint = path
            rep = run_experiment(sub, field=loaded)
            jn = jacobian_norm_profile(loaded, states, ts, probe_rng)
            rows.append(AblationRow(
                label=_fmt(coeff), psnr_mean=rep.psnr_mean,
                psnr_std=rep.psnr_std, ssim_mean=rep.ssim_mean,
                ssim_std=rep.ssim_std, seed_psnr=rep.seed_psnr,
                extra={"jacobian_norm": jn}))
        jns = [r.extra["jacobian_norm"] for r in rows]
        verdicts["penalty_shrinks_jacobian"] = all(
            b < a for a, b in zip(jns, jns[1:]))
        base = rows[0].psnr_mean
        verdicts["psnr_within_half_db"] = all(
            r.psnr_mean >= base - 0.5 for r in rows[1:])

    _write_ablation_csv(Path(cfg.out) / f"ablate-{axis}.csv", axis, rows,
                        verdicts)
    return AblationResult(axis=axis, rows=rows, verdicts=verdicts)


def _write_ablation_csv(path, axis, rows, verdicts) -> None:
    extra_keys = sorted({k for row in rows for k in row.extra
                         if np.isscalar(row.extra[k])})
    header = "value,psnr_mean,psnr_std,ssim_mean,ssim_std" + "".join(
        f",{k}" for k in extra_keys)
    lines = [header]
    for row in rows:
        cells = [row.label, _fmt(row.psnr_mean), _fmt(row.psnr_std),
                 _fmt(row.ssim_mean), _fmt(row.ssim_std)]
        cells += [_fmt(row.extra.get(k, float("nan"))) for k in extra_keys]
        lines.append(",".join(cells))
    verdict_text = " ".join(f"{k}={v}" for k, v in sorted(verdicts.items()))
    lines.append(f"# axis={axis} {verdict_text}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
