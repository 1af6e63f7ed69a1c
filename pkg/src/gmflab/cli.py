"""Command-line entry point: ``gmflab <subcommand> [--config FILE] [--key value ...]``.

Settings resolve in three layers: registry defaults, then a flat ``key = value``
config file, then command-line flags. Unknown keys or flags exit with status 2
and name the key; runtime failures exit with status 1 after removing any files
the run had already written. The output directory is ``--out``, else
``$GMFLAB_OUT``, else ``./gmflab_out``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, GmfLabError
from .report import ExperimentReport, atomic_write, jsonable, rows_to_csv

OUT_ENV = "GMFLAB_OUT"


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(" ", "").split(",") if t]


def _float_list(text: str) -> list[float]:
    return [float(Fraction(t)) for t in text.replace(" ", "").split(",") if t]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _number(text: str) -> float:
    return float(Fraction(text.strip()))


def _fraction(text: str) -> str:
    return str(Fraction(text.strip()))


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    help: str
    choices: tuple | None = None


DATA_KEYS = {
    "d": Key(int, 2, "modality count"),
    "k_shared": Key(int, 8, "shared latent dimension"),
    "k_specific": Key(_int_list, None, "specific latent dims per modality (default 8 each)"),
    "m": Key(_int_list, None, "observed dims per modality (default 32 each)"),
    "sigma": Key(_number, 0.1, "observation noise"),
    "classes": Key(int, 4, "class count"),
    "samples": Key(int, 4000, "sample count"),
    "positive_fraction": Key(_number, None, "binary label imbalance (optional)"),
}
TRAIN_KEYS = {
    "method": Key(str, "gmf", "fusion method", ("concat-baseline", "gmf", "gmf-no-barrier")),
    "extractor": Key(str, "frozen-identity", "extractor mode", ("frozen-identity", "trainable")),
    "epochs": Key(int, 20, "training epochs"),
    "batch": Key(int, 64, "minibatch size"),
    "lr": Key(_number, 0.01, "learning rate"),
    "momentum": Key(_number, 0.9, "SGD momentum"),
    "weight_decay": Key(_number, 1e-4, "weight decay"),
    "lambda_dis": Key(_number, 1.0, "dissociation loss weight"),
    "n": Key(int, 4, "GMF magnification"),
    "boundary": Key(_fraction, "1/2", "GMF boundary as a fraction of n*l"),
}

REGISTRY: dict[str, dict[str, Key]] = {
    "param-count": {
        "dims": Key(_int_list, [512, 512], "feature length per modality"),
        "n": Key(int, 4, "magnification"),
        "boundary": Key(_fraction, "1/2", "boundary as a fraction of n*l"),
    },
    "rank-sim": {
        "d": Key(int, 8, "base dimension"),
        "n": Key(_number, 2.0, "magnification (may be fractional)"),
        "trials": Key(int, 1000, "number of random draws"),
    },
    "updown": {
        "base_dim": Key(int, 8, "feature length l"),
        "raw_dim": Key(int, 16, "raw input dimension"),
        "classes": Key(int, 8, "class count"),
        "samples": Key(int, 3000, "sample count"),
        "magnifications": Key(_float_list, [0.5, 1.0, 2.0, 4.0], "magnification grid"),
        "seeds": Key(_int_list, None, "seed set (default: seed, seed+1, seed+2)"),
        "epochs": Key(int, 400, "training epochs"),
        "anneal_epochs": Key(int, 100, "final epochs at lr/10"),
        "batch": Key(int, 64, "minibatch size"),
        "lr": Key(_number, 0.01, "learning rate"),
        "momentum": Key(_number, 0.9, "SGD momentum"),
        "weight_decay": Key(_number, 1e-4, "weight decay"),
        "readout_scale": Key(_number, 3.0, "label readout temperature"),
        "identity_init": Key(_bool, False, "start n=1 probes at the identity"),
    },
    "dim-sweep": {
        "intrinsic_dim": Key(int, 2, "latent dimension k"),
        "ambient_dim": Key(int, 10, "observed dimension"),
        "classes": Key(int, 3, "class count"),
        "samples": Key(int, 600, "sample count"),
        "label_noise": Key(_number, 0.1, "label flip probability"),
        "widths": Key(_int_list, [1, 2, 4, 8, 16, 32, 64, 128], "hidden widths"),
        "seeds": Key(_int_list, None, "seed set (default: seed, seed+1, seed+2)"),
        "epochs": Key(int, 200, "training epochs"),
        "anneal_epochs": Key(int, 0, "final epochs at lr/10"),
        "batch": Key(int, 64, "minibatch size"),
        "lr": Key(_number, 0.05, "learning rate"),
        "momentum": Key(_number, 0.9, "SGD momentum"),
        "weight_decay": Key(_number, 1e-4, "weight decay"),
    },
    "pnp-solve": {
        "cells": Key(int, 64, "grid cells"),
        "length": Key(_number, 1.0, "domain length"),
        "u0": Key(_number, 1.0, "applied potential in thermal units"),
        "debye_length": Key(_number, 0.05, "Debye length"),
        "c0": Key(_number, 1.0, "initial concentration"),
        "diffusivity": Key(_number, 1.0, "ion diffusivity"),
        "mode": Key(str, "steady", "steady: equilibrium solve; march: time-march to steady; "
                    "transient: fixed steps", ("steady", "march", "transient")),
        "dt": Key(_number, 1e-3, "time step (transient mode)"),
        "steps": Key(int, 100, "number of steps (transient mode)"),
    },
    "gmf-train": {**DATA_KEYS, **TRAIN_KEYS},
    "eval-missing": {**DATA_KEYS, **TRAIN_KEYS,
                     "checkpoint": Key(str, "", "trained weights (default: train first)")},
}


def read_config_file(path, registry: dict[str, Key]) -> dict[str, str]:
    values: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}", key=line)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in registry:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'", key=key)
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'", key=key)
        values[key] = value
    return values


def resolve(subcommand: str, file_values: dict[str, str], flags: dict[str, str | None]) -> dict:
    """Defaults < config file < flags; every value parsed and choice-checked."""
    registry = REGISTRY[subcommand]
    out: dict[str, Any] = {}
    for key, spec in registry.items():
        raw = flags.get(key)
        if raw is None:
            raw = file_values.get(key)
        if raw is None:
            out[key] = spec.default
            continue
        try:
            value = spec.parse(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for '{key}': {raw!r} ({exc})", key=key) from None
        if spec.choices and value not in spec.choices:
            raise ConfigError(f"'{key}' must be one of {spec.choices}, got {value!r}", key=key)
        out[key] = value
    return out


class _Outputs:
    """Tracks files written by one run so a failure can remove them."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.paths: list[Path] = []

    def _prepare(self, name: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / name
        self.paths.append(path)
        return path

    def text(self, name: str, text: str) -> Path:
        path = self._prepare(name)
        atomic_write(path, text)
        return path

    def report(self, report: ExperimentReport, stem: str) -> None:
        self.text(f"{stem}.csv", report.to_csv_text())
        self.text(f"{stem}.json", report.to_json_text())

    def cleanup(self) -> None:
        for p in self.paths:
            for q in (p, p.with_name(p.name + ".tmp")):
                if q.exists():
                    q.unlink()


def _json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def _seed_list(cfg: dict, seed: int) -> tuple[int, ...]:
    return tuple(cfg["seeds"]) if cfg["seeds"] else (seed, seed + 1, seed + 2)


def cmd_param_count(cfg, seed, out: _Outputs) -> None:
    from .gmf import GmfConfig, flops_estimate, param_count, weight_count
    gcfg = GmfConfig(tuple(cfg["dims"]), cfg["n"], cfg["boundary"])
    count = param_count(gcfg)
    print(count)
    out.text("param_count.json", _json({"config": {**cfg, "seed": seed}, "params": count,
                                        "weights": weight_count(gcfg), "flops": flops_estimate(gcfg)}))


def cmd_rank_sim(cfg, seed, out: _Outputs) -> None:
    from .entropy_lab import RankTrialConfig, rank_trial
    result = rank_trial(RankTrialConfig(cfg["d"], cfg["n"], cfg["trials"], seed))
    ranks, counts = np.unique(result.ranks, return_counts=True)
    report = ExperimentReport("rank_sim", {**cfg, "seed": seed}, seeds=[seed])
    report.rows = [{"rank": int(r), "count": int(c)} for r, c in zip(ranks, counts)]
    report.metrics = {"fraction": result.full_rank_fraction, "full_rank_fraction": result.full_rank_fraction,
                      "rank_d_fraction": result.rank_d_fraction, "rows": result.config.rows}
    out.report(report, "rank_sim")
    print(f"full-rank fraction {result.full_rank_fraction}  rank-d fraction {result.rank_d_fraction}")


def cmd_updown(cfg, seed, out: _Outputs) -> None:
    from .entropy_lab import MappingExperimentConfig, up_down_experiment
    kw = {k: v for k, v in cfg.items() if k != "seeds"}
    kw["magnifications"] = tuple(kw["magnifications"])
    report = up_down_experiment(MappingExperimentConfig(**kw, seeds=_seed_list(cfg, seed)))
    report.config = {**cfg, "seed": seed, "seeds": list(report.seeds)}
    out.report(report, "updown")
    for a in report.aggregate:
        print(f"{a['cell']:>8}  test acc {a['test_acc_mean']:.4f} "
              f"[{a['test_acc_min']:.4f}, {a['test_acc_max']:.4f}]")


def cmd_dim_sweep(cfg, seed, out: _Outputs) -> None:
    from .entropy_lab import WidthSweepConfig, width_sweep
    kw = {k: v for k, v in cfg.items() if k != "seeds"}
    kw["widths"] = tuple(kw["widths"])
    report = width_sweep(WidthSweepConfig(**kw, seeds=_seed_list(cfg, seed)))
    report.config = {**cfg, "seed": seed, "seeds": list(report.seeds)}
    out.report(report, "dim_sweep")
    for a in report.aggregate:
        print(f"{a['cell']:>10}  test acc {a['test_acc_mean']:.4f}  ratio {a['ratio_mean']:.4f}")


def cmd_pnp_solve(cfg, seed, out: _Outputs) -> None:
    from . import pnp
    system = pnp.PnpSystem.symmetric_binary(cfg["debye_length"], cfg["u0"], cfg["cells"], cfg["length"],
                                            cfg["c0"], cfg["diffusivity"])
    if cfg["mode"] == "steady":
        state = pnp.solve_steady(system)
    elif cfg["mode"] == "march":
        state = pnp.march_to_steady(system)
    else:
        state = pnp.initial_state(system)
        for _ in range(cfg["steps"]):
            state = pnp.transient_step(state, cfg["dt"], system)
    report = ExperimentReport("pnp_solve", {**cfg, "seed": seed}, seeds=[seed])
    report.rows = [{"x": x, "phi": p, "c_plus": cp, "c_minus": cm}
                   for x, p, cp, cm in zip(system.x, state.phi, state.c[0], state.c[1])]
    fluxes = pnp.face_fluxes(state, system)
    report.metrics = {
        "poisson_residual": pnp.poisson_residual(state.phi, state.charge(system), system),
        "nernst_deviation": pnp.max_nernst_deviation(state, system).tolist(),
        "max_face_flux": float(np.max(np.abs(fluxes))),
        "totals": state.totals(system).tolist(),
        "zero_crossing": pnp.zero_crossing(state, system),
        "t": state.t, "sweeps": state.sweeps,
        "thermal_voltage_si": pnp.THERMAL_VOLTAGE_SI,
    }
    out.text("pnp_profile.csv", rows_to_csv(report.rows, ["x", "phi", "c_plus", "c_minus"]))
    out.text("pnp_solve.json", report.to_json_text())
    print(f"nernst deviation {max(report.metrics['nernst_deviation']):.3e}  "
          f"max flux {report.metrics['max_face_flux']:.3e}")


def _dataset_and_config(cfg, seed):
    from .synth_bench import SyntheticSpec, TrainConfig, generate_dataset
    d = cfg["d"]
    spec = SyntheticSpec(d, cfg["k_shared"], tuple(cfg["k_specific"] or [8] * d),
                         tuple(cfg["m"] or [32] * d), cfg["sigma"], cfg["classes"], cfg["samples"],
                         cfg["positive_fraction"])
    tcfg = TrainConfig(cfg["method"], cfg["extractor"], cfg["epochs"], cfg["batch"], cfg["lr"],
                       cfg["momentum"], cfg["weight_decay"], cfg["lambda_dis"], cfg["n"],
                       float(Fraction(cfg["boundary"])), seed=seed)
    return generate_dataset(spec, seed), tcfg


def cmd_gmf_train(cfg, seed, out: _Outputs) -> None:
    from .synth_bench import save_dataset, train_fusion
    from .tensor_core import checkpoint
    dataset, tcfg = _dataset_and_config(cfg, seed)
    run = train_fusion(dataset, tcfg)
    run.report.config = {**cfg, "seed": seed}
    if run.report.metrics["failed"]:
        raise GmfLabError(f"training diverged: {run.report.metrics['message']}")
    out.report(run.report, "gmf_train")
    ckpt = out._prepare("gmf_train.ckpt")
    checkpoint.save(ckpt, run.model.state_dict())
    out.text("gmf_train.ckpt.json", _json({"config": {**cfg, "seed": seed},
                                           "params": run.model.counts()}))
    data_path = out._prepare("dataset.ckpt")
    out.paths.append(data_path.with_name("dataset.ckpt.json"))
    save_dataset(dataset, data_path)
    m = run.report.metrics
    print(f"test acc {m['test_acc']:.4f}  L_dis {m['dis_initial']:.4g} -> {m['dis_final']:.4g}")


def cmd_eval_missing(cfg, seed, out: _Outputs) -> None:
    from .synth_bench import FusionModel, missing_modality_eval, train_fusion
    from .tensor_core import checkpoint
    dataset, tcfg = _dataset_and_config(cfg, seed)
    if cfg["checkpoint"]:
        model = FusionModel(dataset.spec.m, dataset.spec.classes, tcfg)
        state = checkpoint.load(cfg["checkpoint"])
        missing = {p.name for p in model.parameters()} - set(state)
        if missing:
            raise ConfigError(f"checkpoint lacks {sorted(missing)[:3]}", key="checkpoint")
        model.load_state_dict(state)
    else:
        run = train_fusion(dataset, tcfg)
        if run.report.metrics["failed"]:
            raise GmfLabError(f"training diverged: {run.report.metrics['message']}")
        model = run.model
    report = ExperimentReport("eval_missing", {**cfg, "seed": seed}, seeds=[seed])
    for drop in [None, *range(dataset.spec.d)]:
        report.rows.append(missing_modality_eval(model, dataset, drop))
    out.report(report, "eval_missing")
    for r in report.rows:
        print(f"dropped {r['dropped']:>2}  accuracy {r['accuracy']:.4f}")


COMMANDS = {
    "param-count": cmd_param_count, "rank-sim": cmd_rank_sim, "updown": cmd_updown,
    "dim-sweep": cmd_dim_sweep, "pnp-solve": cmd_pnp_solve, "gmf-train": cmd_gmf_train,
    "eval-missing": cmd_eval_missing,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmflab", allow_abbrev=False)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, registry in REGISTRY.items():
        p = sub.add_parser(name, allow_abbrev=False)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else ./gmflab_out)")
        p.add_argument("--seed", type=int, default=0, help="global seed")
        for key, spec in registry.items():
            p.add_argument(f"--{key}", dest=f"key_{key}", default=None, metavar="VALUE",
                           help=f"{spec.help} (default: {spec.default})")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    registry = REGISTRY[args.subcommand]
    out = _Outputs(Path(args.out or os.environ.get(OUT_ENV) or "gmflab_out"))
    try:
        file_values = read_config_file(args.config, registry) if args.config else {}
        flags = {k: getattr(args, f"key_{k}") for k in registry}
        cfg = resolve(args.subcommand, file_values, flags)
        COMMANDS[args.subcommand](cfg, args.seed, out)
    except ConfigError as exc:
        out.cleanup()
        print(f"gmflab {args.subcommand}: config error [{exc.key}]: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any runtime failure: report, clean up, exit 1
        out.cleanup()
        print(f"gmflab {args.subcommand}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
