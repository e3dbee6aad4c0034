"""Command-line surface: simulate | verify | born | postselect | marginal.

Configuration is a flat key=value text file with # comments; command-line
flags mirror the keys one-to-one and override the file.  Every command
writes a run manifest (resolved configuration, seed, tool version, wall
time, output digests, check flags) so a run can be reproduced exactly:
same configuration and seed give byte-identical CSV output for any worker
count.

Exit codes: 0 success / verification PASS, 1 verification FAIL,
2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, analysis, model, stats
from .engine import simulate
from .model import MeasurementConfig, Setting, SuperpositionSpec

__all__ = ["main", "resolve_config", "parse_config_file", "load_manifest_config"]

DEFAULT_SEED = 12345

_SCHEMA = {
    "x1": float,
    "r": float,
    "alpha0": float,
    "c1sq": float,
    "g": float,
    "gtf": float,
    "dt": float,
    "n": int,
    "seed": int,
    "measure": str,
    "mixture": bool,
    "grid_dx": float,
    "grid_dp": float,
    "paper_scale": bool,
    "workers": int,
    "out_dir": str,
    "shift_x1": float,
    "oracle": bool,
}

_DEFAULTS = {
    "x1": 1.0,
    "r": 2.0,
    "alpha0": None,
    "c1sq": 0.5,
    "g": 1.0,
    "gtf": 3.0,
    "dt": 0.1,
    "n": 200_000,
    "seed": None,
    "measure": "x",
    "mixture": False,
    "grid_dx": 0.1,
    "grid_dp": 0.2,
    "paper_scale": False,
    "workers": None,
    "out_dir": ".",
    "shift_x1": 0.0,
    "oracle": False,
}


class ConfigError(Exception):
    pass


def _parse_bool(raw):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_config_file(path):
    """Read a key=value config file; errors carry the offending line number."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line.strip()!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in _SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            typ = _SCHEMA[key]
            try:
                values[key] = _parse_bool(raw) if typ is bool else typ(raw)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: invalid {typ.__name__} value {raw!r} for {key}"
                )
    return values


def load_manifest_config(path):
    """Pull the resolved config dict back out of a run manifest."""
    if not os.path.exists(path):
        raise ConfigError(f"manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    if "config" not in manifest:
        raise ConfigError(f"{path}: no config section in manifest")
    return {k: v for k, v in manifest["config"].items() if k in _SCHEMA}


def resolve_config(file_values, flag_values):
    """Defaults < config file < flags; then derive spec, cfg and grid steps."""
    merged = dict(_DEFAULTS)
    merged.update(file_values)
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    if merged["seed"] is None:
        env = os.environ.get("QTRAJ_SEED")
        if env is not None:
            try:
                merged["seed"] = int(env)
            except ValueError:
                raise ConfigError(f"QTRAJ_SEED must be an integer, got {env!r}")
        else:
            merged["seed"] = DEFAULT_SEED
    if merged["paper_scale"]:
        merged["n"] = 2_000_000
        merged["grid_dx"] = 0.02
        merged["grid_dp"] = 0.05
    if merged["alpha0"] is not None:
        merged["r"] = 0.0
        merged["x1"] = 2.0 * merged["alpha0"]
    if merged["workers"] is None:
        merged["workers"] = os.cpu_count() or 1
    if merged["measure"] not in ("x", "p"):
        raise ConfigError(f"measure must be 'x' or 'p', got {merged['measure']!r}")
    try:
        spec = SuperpositionSpec(
            c1_sq=merged["c1sq"],
            x1=merged["x1"],
            r=merged["r"],
            mixture=merged["mixture"],
        )
        cfg = MeasurementConfig(
            g=merged["g"],
            setting=Setting.X if merged["measure"] == "x" else Setting.P,
            t_f=merged["gtf"] / merged["g"] if merged["g"] > 0 else merged["gtf"],
            dt=merged["dt"] / merged["g"] if merged["g"] > 0 else merged["dt"],
            n_samples=int(merged["n"]),
            seed=int(merged["seed"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    return merged, spec, cfg


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir, command, merged, outputs, checks, t_start):
    manifest = {
        "tool": "qtraj",
        "version": __version__,
        "command": command,
        "config": {k: merged[k] for k in _SCHEMA},
        "seed": merged["seed"],
        "wall_time_s": time.time() - t_start,
        "outputs": [{"path": os.path.basename(p), "sha256": _sha256(p)} for p in outputs],
        "checks": checks,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_trajectories_csv(path, batch):
    steps = np.asarray(batch.stored_steps)
    times = steps * batch.grid.dt
    n, k = batch.amplified.shape
    sample_ids = np.repeat(np.arange(n, dtype=np.int64), k)
    t_col = np.tile(times, n)
    if batch.cfg.setting is Setting.X:
        x_col, p_col = batch.amplified.ravel(), batch.attenuated.ravel()
    else:
        x_col, p_col = batch.attenuated.ravel(), batch.amplified.ravel()
    hill_col = np.repeat(batch.boundary_hill.astype(np.int64), k)
    with open(path, "w", newline="") as fh:
        fh.write("sample_id,t,x,p,hill\n")
        np.savetxt(
            fh,
            np.column_stack([sample_ids, t_col, x_col, p_col, hill_col]),
            fmt=["%d", "%.17g", "%.17g", "%.17g", "%d"],
            delimiter=",",
        )


def _json_dump(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_simulate(merged, spec, cfg):
    t0 = time.time()
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    batch = simulate(spec, cfg, workers=merged["workers"])
    csv_path = os.path.join(out_dir, "trajectories.csv")
    _write_trajectories_csv(csv_path, batch)
    _write_manifest(out_dir, "simulate", merged, [csv_path], {}, t0)
    print(f"simulate: {cfg.n_samples} trajectories x {cfg.n_steps + 1} slices -> {csv_path}")
    return 0


def _cmd_verify(merged, spec, cfg):
    t0 = time.time()
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    grid = stats.Grid3.auto(spec, cfg, dx=merged["grid_dx"], dp=merged["grid_dp"])
    binned = stats.accumulate_counts(spec, cfg, grid, workers=merged["workers"])
    model_spec = spec
    if merged["shift_x1"]:
        model_spec = SuperpositionSpec(
            c1_sq=spec.c1_sq, x1=spec.x1 + merged["shift_x1"], r=spec.r, mixture=spec.mixture
        )
    probs = stats.analytic_bin_probs(model_spec, cfg, grid)
    report = stats.chi2_time_averaged(binned, probs)
    report_path = os.path.join(out_dir, "chi2_report.json")
    _json_dump(report_path, report.to_dict())
    hist_path = os.path.join(out_dir, "histogram.csv")
    stats.write_histogram_csv(hist_path, binned, probs)
    _write_manifest(
        out_dir, "verify", merged, [report_path, hist_path], {"chi2_pass": bool(report.passed)}, t0
    )
    verdict = "PASS" if report.passed else "FAIL"
    print(
        f"verify: chi2_bar={report.chi2_bar:.1f} k={report.k:.1f} "
        f"band=[{report.band_lo:.1f}, {report.band_hi:.1f}] -> {verdict}"
    )
    return 0 if report.passed else 1


def _cmd_born(merged, spec, cfg):
    t0 = time.time()
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    batch = simulate(spec, cfg, workers=merged["workers"], store_steps=(0, cfg.n_steps))
    estimate = analysis.born_fraction(batch)
    oracle_mass = analysis.born_oracle(spec, cfg)
    z = (estimate.f_plus - spec.c1_sq) / estimate.se if estimate.se > 0 else float("nan")
    payload = estimate.to_dict()
    payload.update(
        {
            "c1_sq": spec.c1_sq,
            "oracle_mass_plus": oracle_mass,
            "z_vs_c1sq": z,
            "within_3se": bool(abs(estimate.f_plus - spec.c1_sq) < 3.0 * estimate.se),
        }
    )
    path = os.path.join(out_dir, "born.json")
    _json_dump(path, payload)
    _write_manifest(out_dir, "born", merged, [path], {"born_within_3se": payload["within_3se"]}, t0)
    print(
        f"born: f_plus={estimate.f_plus:.5f} (c1_sq={spec.c1_sq}, se={estimate.se:.1e}, "
        f"oracle={oracle_mass:.5f})"
    )
    return 0


def _cmd_postselect(merged, spec, cfg):
    t0 = time.time()
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    batch = simulate(spec, cfg, workers=merged["workers"], store_steps=(0, cfg.n_steps))
    report = analysis.postselect(batch, sign="+")
    payload = {"sampled": report.to_dict()}
    if merged["oracle"]:
        payload["oracle"] = analysis.postselect_oracle(spec, cfg, sign="+").to_dict()
    path = os.path.join(out_dir, "postselect.json")
    _json_dump(path, payload)
    hist_path = os.path.join(out_dir, "qplus_histogram.csv")
    analysis.write_qplus_csv(hist_path, report)
    _write_manifest(out_dir, "postselect", merged, [path, hist_path], {}, t0)
    eps = "nan" if not math.isfinite(report.epsilon) else f"{report.epsilon:.4f}"
    print(
        f"postselect: n={report.n_selected} var_x_cond={report.var_x_cond:.4f} "
        f"var_p_cond={report.var_p_cond:.4f} epsilon={eps}"
    )
    return 0


def _cmd_marginal(merged, spec, cfg):
    t0 = time.time()
    out_dir = merged["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    gt_f = cfg.signed_g * cfg.t_f
    sx0 = math.sqrt(float(model.sigma_x2(spec.r, 0.0)))
    sp0 = math.sqrt(float(model.sigma_p2(spec.r, 0.0)))
    sxf = math.sqrt(float(model.sigma_x2(spec.r, gt_f)))
    spf = math.sqrt(float(model.sigma_p2(spec.r, gt_f)))
    gx1 = math.exp(gt_f) * spec.x1
    xs0 = np.linspace(-(spec.x1 + 6 * sx0), spec.x1 + 6 * sx0, 2001)
    xsf = np.linspace(-(gx1 + 6 * sxf), gx1 + 6 * sxf, 2001)
    ps0 = np.linspace(-6 * sp0, 6 * sp0, 2001)
    rows.append(("x_initial", xs0, model.marginal_x(spec, xs0, 0.0, cfg)))
    rows.append(("x_final", xsf, model.marginal_x(spec, xsf, cfg.t_f, cfg)))
    rows.append(("p_initial", ps0, model.marginal_p_initial(spec, ps0)))
    if cfg.setting is Setting.P:
        psf = np.linspace(-6 * spf, 6 * spf, 2001)
        rows.append(("p_final", psf, model.marginal_p_amplified(spec, psf, cfg.t_f, cfg)))
        pt = np.linspace(-6 * math.exp(spec.r), 6 * math.exp(spec.r), 2001)
        rows.append(("p_final_scaled", pt, model.marginal_p_amplified_scaled(spec, pt)))
    else:
        xt = np.linspace(-(spec.x1 + 6), spec.x1 + 6, 2001)
        rows.append(("x_final_scaled", xt, model.scaled_x_marginal(spec, xt, cfg.t_f, cfg)))
    path = os.path.join(out_dir, "marginals.csv")
    with open(path, "w", newline="") as fh:
        fh.write("kind,coord,density\n")
        for kind, coords, dens in rows:
            for c, d in zip(coords, dens):
                fh.write(f"{kind},{c:.17g},{d:.17g}\n")
    _write_manifest(out_dir, "marginal", merged, [path], {}, t0)
    print(f"marginal: analytic curves -> {path}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "born": _cmd_born,
    "postselect": _cmd_postselect,
    "marginal": _cmd_marginal,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qtraj",
        description="Forward-backward stochastic trajectory simulator for "
        "quadrature measurement by parametric amplification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("config", nargs="?", help="key=value config file")
        cmd.add_argument("--from-manifest", help="reuse the config of a previous run manifest")
        cmd.add_argument("--x1", type=float)
        cmd.add_argument("--r", type=float)
        cmd.add_argument("--alpha0", type=float, help="coherent cat: sets r=0, x1=2*alpha0")
        cmd.add_argument("--c1sq", type=float)
        cmd.add_argument("--g", type=float)
        cmd.add_argument("--gtf", type=float, help="dimensionless horizon g*t_f")
        cmd.add_argument("--dt", type=float, help="dimensionless step g*dt")
        cmd.add_argument("--n", type=int)
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--measure", choices=["x", "p"])
        cmd.add_argument("--mixture", action="store_const", const=True)
        cmd.add_argument("--grid-dx", dest="grid_dx", type=float)
        cmd.add_argument("--grid-dp", dest="grid_dp", type=float)
        cmd.add_argument("--paper-scale", dest="paper_scale", action="store_const", const=True)
        cmd.add_argument("--workers", type=int)
        cmd.add_argument("--out-dir", dest="out_dir")
        cmd.add_argument("--shift-x1", dest="shift_x1", type=float)
        cmd.add_argument("--oracle", action="store_const", const=True)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = {}
        if args.from_manifest:
            file_values.update(load_manifest_config(args.from_manifest))
        if args.config:
            file_values.update(parse_config_file(args.config))
        flag_values = {k: getattr(args, k) for k in _SCHEMA if hasattr(args, k)}
        merged, spec, cfg = resolve_config(file_values, flag_values)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](merged, spec, cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
