"""Command-line experiment runner.

A single JSON config (sections: model, basis, noise, sim, optional study)
drives an ensemble run; artifacts land in the output directory as stats.csv,
summary.json, conditions.json and manifest.json.  Exit codes: 0 success,
2 inadmissible coefficients, 3 blow-up budget exceeded, 64 usage errors.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys

import numpy as np

from . import __version__
from .diagnostics import export_csv
from .integrator import BlowUpBudgetExceeded, SimConfig, run_ensemble
from .model import ModelParams, check_conditions
from .noise import NoiseSpec
from .spectral import SpectralBasis, project, synthesize
from .studies import STUDIES, run_study

__all__ = ["main", "load_config", "build_experiment"]

EXIT_OK = 0
EXIT_INADMISSIBLE = 2
EXIT_BLOWUP = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


def _parse_override(text: str):
    if "=" not in text:
        raise UsageError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _apply_override(config: dict, key: str, value) -> None:
    parts = key.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise UsageError(f"override path {key!r} crosses a non-object entry")
    node[parts[-1]] = value


def load_config(path: str, overrides=()) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}")
    for item in overrides:
        _apply_override(config, *_parse_override(item))
    return config


def _initial_coeffs(basis: SpectralBasis, p: ModelParams, spec: dict) -> np.ndarray:
    kind = spec.get("kind", "coeffs")
    if kind == "coeffs":
        values = np.asarray(spec["values"], dtype=float)
        if values.shape != (p.n, basis.n_modes):
            raise UsageError(
                f"initial coefficients must have shape ({p.n}, {basis.n_modes})"
            )
        return values
    if kind == "cos":
        # one list of cosine amplitudes per species: u_i = sum_m amp[m] cos(m pi x / L)
        if basis.dim != 1:
            raise UsageError("cosine initial data is only defined for one spatial dimension")
        amps = spec["amplitudes"]
        if len(amps) != p.n:
            raise UsageError("need one amplitude list per species")
        x = basis.grid(0)
        L = basis.lengths[0]
        rows = []
        for amp in amps:
            field = np.zeros_like(x)
            for m, a in enumerate(amp):
                field += a * np.cos(m * np.pi * x / L)
            rows.append(project(basis, field))
        return np.stack(rows)
    raise UsageError(f"unknown initial-data kind {spec.get('kind')!r}")


def build_experiment(config: dict):
    """Instantiate (model, report, basis, noise, sim) from a config dict."""
    for section in ("model", "basis", "noise", "sim"):
        if section not in config:
            raise UsageError(f"config is missing the {section!r} section")
    p = ModelParams.from_dict(config["model"])
    basis = SpectralBasis.from_dict(config["basis"])
    noise_dict = dict(config["noise"])
    env_seed = os.environ.get("SKT_SPDE_SEED")
    if env_seed is not None:
        noise_dict["seed"] = int(env_seed)
    spec = NoiseSpec.from_dict(noise_dict)
    sim = dict(config["sim"])
    initial = _initial_coeffs(basis, p, sim.pop("initial"))
    cfg = SimConfig(initial=initial, **sim)
    report = check_conditions(p)
    return p, report, basis, spec, cfg


def _summary(stats) -> dict:
    out = {
        "total_paths": stats.total_paths,
        "blown_up": stats.blown,
        "save_times": stats.save_times.tolist(),
        "path_estimates": {},
        "terminal": {},
    }
    for name, acc in stats.path_stats.items():
        out["path_estimates"][name] = {
            "mean": np.asarray(acc.mean).tolist(),
            "stderr": np.asarray(acc.stderr).tolist(),
        }
    for name, acc in stats.time_stats.items():
        out["terminal"][name] = {
            "mean": np.asarray(acc.mean[-1]).tolist(),
            "stderr": np.asarray(acc.stderr[-1]).tolist(),
        }
    return out


def _manifest(config: dict, spec: NoiseSpec | None) -> dict:
    import scipy

    return {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "master_seed": spec.master_seed if spec is not None else None,
        "config": config,
    }


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_run(args) -> int:
    config = load_config(args.config, args.set or ())
    study = args.study or config.get("study")
    outdir = args.output or config.get("output_dir", ".")
    os.makedirs(outdir, exist_ok=True)

    if study:
        if study not in STUDIES:
            raise UsageError(
                f"unknown study {study!r}; available: {', '.join(sorted(STUDIES))}"
            )
        kwargs = dict(config.get("study_args", {}))
        if args.workers and "workers" in STUDIES[study].__code__.co_varnames:
            kwargs.setdefault("workers", args.workers)
        result = run_study(study, **kwargs)
        _write_json(os.path.join(outdir, "summary.json"), {"study": study, "result": result})
        _write_json(os.path.join(outdir, "manifest.json"), _manifest(config, None))
        print(f"study {study} written to {outdir}/summary.json")
        return EXIT_OK

    p, report, basis, spec, cfg = build_experiment(config)
    _write_json(os.path.join(outdir, "conditions.json"), report.to_dict())
    if not report.admissible:
        alpha1 = "undefined" if report.alpha1 is None else f"{report.alpha1:.6g}"
        print(
            "admissibility failed: "
            f"detailed_balance={report.detailed_balance}, alpha1={alpha1}, "
            f"alpha2={report.alpha2:.6g}; both coercivity routes are closed",
            file=sys.stderr,
        )
        return EXIT_INADMISSIBLE

    workers = args.workers or 1
    try:
        stats = run_ensemble(basis, p, spec, cfg, report=report, workers=workers)
    except BlowUpBudgetExceeded as exc:
        print(
            f"blow-up budget exceeded: {exc.blown} of {exc.total} paths diverged",
            file=sys.stderr,
        )
        if exc.stats is not None:
            export_csv(exc.stats, os.path.join(outdir, "stats.csv"))
        return EXIT_BLOWUP

    export_csv(stats, os.path.join(outdir, "stats.csv"))
    _write_json(os.path.join(outdir, "summary.json"), _summary(stats))
    _write_json(os.path.join(outdir, "manifest.json"), _manifest(config, spec))
    print(
        f"{stats.total_paths} paths ({stats.blown} blown up) -> {outdir}/stats.csv"
    )
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 64, not argparse's default 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skt-spde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an ensemble or canned study from a JSON config")
    run.add_argument("config", help="path to the JSON experiment config")
    run.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config entry via dotted path (repeatable)",
    )
    run.add_argument("--workers", type=int, default=0, help="worker threads (default 1)")
    run.add_argument("--output", help="output directory (default from config, else cwd)")
    run.add_argument("--study", help="run a canned study instead of the configured ensemble")
    run.set_defaults(func=_cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
