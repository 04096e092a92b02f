"""Command-line entry point: ``aidsim {sensitivity,pde,odmr,curve,image}``.

Every command reads an optional YAML config, writes CSV tables into
``--out`` together with ``manifest.json`` (resolved config, seed, versions;
byte-stable) and ``run_info.json`` (timestamps, thread count).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import fields, replace

import numpy as np

from . import __version__, _kernels
from . import carrier_dynamics as cd
from . import config as cfgmod
from . import imaging as im
from . import montecarlo as mc
from . import sensitivity as sens
from .config import ConfigError
from .tables import format_value, write_csv

log = logging.getLogger("aidsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class NumericalFailure(RuntimeError):
    pass


@contextmanager
def _executor(threads: int):
    if threads <= 1:
        yield None
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield pool


def _mapper(pool):
    return map if pool is None else pool.map


def _label(x) -> str:
    return format_value(float(x))


# ---------------------------------------------------------------------------
# sensitivity

_UNITS = {
    "k0_mean": "photons", "k_mean": "photons", "ka_mean": "photons", "w_mean": "carriers",
    "contrast_sos": "1", "q0_mean": "prob", "q1_mean": "prob", "p_mean": "prob", "r_mean": "prob",
    "lambda_mean": "prob", "n": "repeats",
}


def cmd_sensitivity(cfg, out, threads):
    sc = cfg["sensitivity"]
    param = sc["parameter"]
    q_fields = {f.name for f in fields(sens.QubitReadoutParams)}
    t_fields = {f.name for f in fields(sens.TimingBudget)}
    if param not in q_fields | t_fields:
        raise ConfigError(f"sensitivity.parameter: unknown parameter {param!r}")
    unit = _UNITS.get(param, "s")
    header = [f"{param}_{unit}", "status", "eta_sos_exact_sqrt_s", "eta_sos_approx_sqrt_s",
              "eta_scc_sqrt_s", "eta_aid_sqrt_s", "eta_aid_high_ka_sqrt_s", "eta_aid_low_ka_sqrt_s",
              "eta_aid_background_sqrt_s", "criterion_lhs", "criterion_rhs", "criterion_margin", "aid_wins"]
    rows = []
    for value in sc["values"]:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"sensitivity.values: expected numbers, got {value!r}")
        if param in q_fields:
            q, t = cfgmod.qubit(cfg, **{param: value}), cfgmod.timing(cfg)
        else:
            q, t = cfgmod.qubit(cfg), cfgmod.timing(cfg, **{param: value})
        row = [value]
        try:
            sos = sens.eta_sos(q, t)
            vals = [sos.exact, sos.approximate, sens.eta_scc(q, t), sens.eta_aid(q, t),
                    sens.eta_aid_limit_high_ka(q, t), sens.eta_aid_limit_low_ka(q, t),
                    sens.eta_aid_background_limit(q, t)]
            crit = sens.aid_beats_sos(q, t)
            row += ["ok"] + vals + [crit.lhs, crit.rhs, crit.margin, crit.aid_wins]
        except sens.DegenerateParameterError:
            row += ["degenerate"] + [math.nan] * 10 + [""]
        rows.append(row)
    write_csv(os.path.join(out, "sensitivity.csv"), header, rows)
    return {"rows": len(rows)}


# ---------------------------------------------------------------------------
# pde


def _grid(cfg, params):
    g = cfg["pde"]["grid"]
    try:
        return cd.RadialGrid.geometric(R_max=params.R_max_um, dr_min=g["dr_min"], dr_max=g["dr_max"],
                                       refine=int(g["refine"]), thickness=params.thickness_um)
    except ValueError as exc:
        raise ConfigError(f"pde.grid: {exc}") from None


def _pde_cycles(pc):
    if pc["spacing"] == "log":
        cycles = cd.cycle_grid(pc["n_max"], int(pc["per_decade"]))
    elif pc["spacing"] == "linear":
        if pc["samples"] < 2:
            raise ConfigError("pde.samples: need at least two samples")
        cycles = np.unique(np.round(np.linspace(0.0, pc["n_max"], int(pc["samples"]))))
    else:
        raise ConfigError(f"pde.spacing: expected 'linear' or 'log', got {pc['spacing']!r}")
    extra = pc["profile_cycles"] or []
    for c in extra:
        if not isinstance(c, (int, float)) or c < 0 or c > pc["n_max"]:
            raise ConfigError(f"pde.profile_cycles: {c!r} outside [0, n_max]")
    return np.unique(np.concatenate([cycles, np.round(np.asarray(extra, dtype=float))]))


def cmd_pde(cfg, out, threads):
    pc = cfg["pde"]
    params = cfgmod.material(cfg)
    if pc["n_max"] < 0:
        raise ConfigError("pde.n_max: must be >= 0")
    eps_list = [float(e) for e in pc["epsilons"]]
    if not eps_list or any(e < 0 for e in eps_list):
        raise ConfigError("pde.epsilons: need a nonempty list of values >= 0")
    grid = _grid(cfg, params)
    cycles = _pde_cycles(pc)
    profile_cycles = set(np.round(pc["profile_cycles"] or [cycles[-1]]).tolist())
    try:
        with _executor(threads) as pool:
            res = cd.background_sweep(params, eps_list, cycles, grid=grid, mapper=_mapper(pool),
                                      keep_states=True, rtol=pc["rtol"])
    except cd.SolverError as exc:
        raise NumericalFailure(f"carrier dynamics: {exc}") from exc

    cons_rows, summary_rows = [], []
    for eps in eps_list:
        curve, states = res[eps]
        tag = _label(eps)
        header, rows = cd.activation_table(curve)
        write_csv(os.path.join(out, f"activation_eps{tag}.csv"), header, rows.tolist())
        prof_rows = []
        h = cd.profile_table(states[0])[0]
        for st, c in zip(states, curve.n_cycles):
            if c in profile_cycles:
                rws = cd.profile_table(st)[1]
                prof_rows += [[c, st.time] + r for r in rws.tolist()]
            total = cd.total_ionized_charge(st)
            bal = cd.charge_balance(st)
            cons_rows.append([eps, c, st.time, bal, total, abs(bal) / total if total else 0.0,
                              st.generated_electrons, st.generated_holes, st.steps, st.error_estimate])
        write_csv(os.path.join(out, f"profiles_eps{tag}.csv"), ["cycle", "time_s"] + h, prof_rows)
        r2 = cd.linear_r2(curve.n_cycles, curve.activated) if curve.n_cycles.size > 2 else math.nan
        summary_rows.append([eps, curve.n_cycles[-1], curve.activated[-1], r2,
                             float(np.nanmean(curve.lambda_eff)) if curve.lambda_eff.size else math.nan])
    write_csv(os.path.join(out, "conservation.csv"),
              ["epsilon", "cycle", "time_s", "charge_balance_e", "total_charge_e", "relative_drift",
               "generated_electrons", "generated_holes", "steps", "error_estimate"], cons_rows)
    write_csv(os.path.join(out, "activation_summary.csv"),
              ["epsilon", "final_cycle", "final_activated_count", "linear_r2", "mean_lambda_eff"],
              summary_rows)
    return {"epsilons": eps_list, "samples": int(cycles.size)}


# ---------------------------------------------------------------------------
# odmr


def _schedule(sc, path):
    mode = sc["mode"]
    if mode == "constant":
        if not 0 <= sc["value"] <= 1:
            raise ConfigError(f"{path}.value: lambda must lie in [0, 1]")
        return mc.LambdaSchedule.constant(sc["value"])
    if mode in ("pde", "file"):
        p = sc.get("path")
        if not p:
            raise ConfigError(f"{path}.path: a lambda_eff CSV from the pde command is required")
        if not os.path.exists(p):
            raise ConfigError(f"{path}.path: lambda_eff file {p!r} not found")
        try:
            return mc.LambdaSchedule.from_csv(p)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{path}.path: {exc}") from None
    raise ConfigError(f"{path}.mode: expected 'constant' or 'pde', got {mode!r}")


def cmd_odmr(cfg, out, threads):
    oc = cfg["odmr"]
    if oc["mode"] not in ("sos", "aid"):
        raise ConfigError(f"odmr.mode: expected 'sos' or 'aid', got {oc['mode']!r}")
    if oc["points"] < 1:
        raise ConfigError("odmr.points: need at least one point")
    if oc["runs"] < 2:
        raise ConfigError("odmr.runs: need at least two runs")
    response = _build(mc.SpinResponse, dict(center_freq=oc["center_hz"], fwhm=oc["fwhm_hz"]), "odmr")
    sweep = np.linspace(oc["start_hz"], oc["stop_hz"], int(oc["points"]))
    schedule = _schedule(oc["schedule"], "odmr.schedule") if oc["mode"] == "aid" else 1.0
    base = _build(
        mc.ExperimentConfig,
        dict(qubit=cfgmod.qubit(cfg), timing=cfgmod.timing(cfg), response=response, sweep=tuple(sweep),
             n=int(oc["n"]), lambda_schedule=schedule, background_defects=int(oc["background_defects"]),
             q_w=oc["q_w"], contrast_aid=oc["contrast_aid"], runs=int(oc["runs"]), seed=cfg["seed"]),
        "odmr",
    )
    off = oc["off_point_hz"] if oc["off_point_hz"] is not None else oc["center_hz"] + 100 * oc["fwhm_hz"]
    simulate = mc.simulate_sos if oc["mode"] == "sos" else mc.simulate_aid
    try:
        spec = simulate(base, threads=threads)
        pair = simulate(replace(base, sweep=(oc["center_hz"], off)), threads=threads,
                        stream=f"{oc['mode']}-snr")
    except ValueError as exc:
        raise ConfigError(f"odmr: {exc}") from None
    write_csv(os.path.join(out, "spectrum.csv"),
              ["point_Hz", "summed_counts", "mean_counts_per_run", "runs", "seed"],
              [[p, int(spec.counts[:, k].sum()), spec.counts[:, k].mean(), base.runs, cfg["seed"]]
               for k, p in enumerate(sweep)])
    est = mc.estimate_snr(pair.counts[:, 0], pair.counts[:, 1], seed=cfg["seed"])
    if oc["mode"] == "sos":
        m_on, m_off = base.n * base.sos_mean(oc["center_hz"]), base.n * base.sos_mean(off)
        expected = abs(m_on - m_off) / math.sqrt(m_on + m_off) if m_on + m_off > 0 else 0.0
    else:
        m_on, v_on = mc.aid_run_moments(base, base.aid_q(oc["center_hz"]))
        m_off, v_off = mc.aid_run_moments(base, base.aid_q(off))
        expected = abs(m_on - m_off) / math.sqrt(v_on + v_off) if v_on + v_off > 0 else 0.0
    try:
        fc, fw, depth, baseline = mc.fit_lorentzian(sweep, spec.mean)
    except (RuntimeError, ValueError):
        fc = fw = depth = baseline = math.nan
    write_csv(os.path.join(out, "snr.csv"),
              ["mode", "on_point_Hz", "off_point_Hz", "runs", "snr", "snr_ci_low", "snr_ci_high",
               "snr_expected", "fit_center_Hz", "fit_fwhm_Hz", "fit_depth_counts", "fit_baseline_counts"],
              [[oc["mode"], oc["center_hz"], off, base.runs, est.value, est.ci_low, est.ci_high, expected,
                fc, fw, depth, baseline]])
    return {"snr": est.value}


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# curve


def cmd_curve(cfg, out, threads):
    cc = cfg["curve"]
    n_values = [int(n) for n in cc["n_values"]]
    if any(n < 1 for n in n_values):
        raise ConfigError("curve.n_values: repeat counts must be >= 1")
    if cc["runs"] < 2:
        raise ConfigError("curve.runs: need at least two runs")
    sc = cc["schedule"]
    schedules = {}
    if sc["mode"] == "pde" and sc.get("path") is None:
        params = cfgmod.material(cfg)
        eps_list = [float(e) for e in cc["epsilons"]]
        if not eps_list or any(e < 0 for e in eps_list):
            raise ConfigError("curve.epsilons: need a nonempty list of values >= 0")
        n_max = max(n_values) if n_values else 1
        cycles = cd.cycle_grid(n_max, int(sc["per_decade"]))
        try:
            with _executor(threads) as pool:
                curves = cd.background_sweep(params, eps_list, cycles, grid=_grid(cfg, params),
                                             mapper=_mapper(pool), rtol=cfg["pde"]["rtol"])
        except cd.SolverError as exc:
            raise NumericalFailure(f"carrier dynamics: {exc}") from exc
        for eps in eps_list:
            curve = curves[eps]
            header, rows = cd.activation_table(curve)
            write_csv(os.path.join(out, f"lambda_eps{_label(eps)}.csv"), header, rows.tolist())
            lam = np.clip(curve.lambda_eff, 0.0, 1.0)
            schedules[eps] = mc.LambdaSchedule.from_curve(curve.n_cycles, lam)
    else:
        schedules[math.nan] = _schedule(sc, "curve.schedule")

    timing = cfgmod.timing(cfg)
    rows = []
    for eps, schedule in schedules.items():
        for defects in cc["background_defects"]:
            if int(defects) != defects or defects < 0:
                raise ConfigError(f"curve.background_defects: {defects!r} is not a count")
            exp = _build(
                mc.ExperimentConfig,
                dict(qubit=cfgmod.qubit(cfg), timing=timing, n=1, lambda_schedule=schedule,
                     background_defects=int(defects), q_w=cc["q_w"], contrast_aid=cc["contrast_aid"],
                     runs=int(cc["runs"]), seed=cfg["seed"]),
                "curve",
            )
            try:
                pts = mc.sensitivity_curve(exp, n_values, threads=threads, resamples=int(cc["resamples"]))
            except ValueError as exc:
                raise ConfigError(f"curve: {exc}") from None
            rows += [[eps, int(defects)] + list(p.row()) for p in pts]
    write_csv(os.path.join(out, "curve.csv"), ["epsilon", "background_defects"] + list(mc.SensitivityPoint.HEADER),
              rows)
    return {"rows": len(rows)}


# ---------------------------------------------------------------------------
# image


def _read_image(path, pitch):
    if not path or not os.path.exists(path):
        raise ConfigError(f"image: input image {path!r} not found")
    try:
        if path.lower().endswith(".pgm"):
            return im.read_pgm(path, pitch)
        return im.read_image_csv(path, pitch)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"image: cannot read {path}: {exc}") from None


def cmd_image(cfg, out, threads):
    ic = cfg["image"]
    if ic["source"] == "forward":
        try:
            on, off = im.siv_image_pair(
                front_radius=ic["front_radius_um"], carrier_ratio=ic["carrier_ratio"],
                capture_length=ic["capture_length_um"], ancilla_density=ic["ancilla_density_um3"],
                photons_per_ancilla=ic["photons_per_ancilla"], background=ic["background_counts"],
                pitch=ic["pitch_um"], shape=tuple(int(s) for s in ic["shape"]), noise=ic["noise"],
                seed=cfg["seed"],
            )
        except ValueError as exc:
            raise ConfigError(f"image: {exc}") from None
    elif ic["source"] == "files":
        on, off = _read_image(ic["on_path"], ic["pitch_um"]), _read_image(ic["off_path"], ic["pitch_um"])
    else:
        raise ConfigError(f"image.source: expected 'forward' or 'files', got {ic['source']!r}")
    if not on.same_geometry(off):
        raise ConfigError("image: on and off images differ in geometry")
    try:
        sweep = im.sweep_ring(on, off, ic["r_grid_um"], ic["w_grid_um"], mode=ic["mode"],
                              inner_mask=ic["inner_mask_um"])
    except ValueError as exc:
        raise ConfigError(f"image: {exc}") from None
    for name, img in (("on", on), ("off", off)):
        im.write_image_csv(img, os.path.join(out, f"image_{name}.csv"))
        im.write_pgm(img, os.path.join(out, f"image_{name}.pgm"))
    diff = im.differential_image(on, off)
    write_csv(os.path.join(out, "image_diff.csv"), [f"col{j}_counts" for j in range(diff.shape[1])],
              diff.tolist())
    p_on, p_off = im.radial_profile(on), im.radial_profile(off)
    write_csv(os.path.join(out, "radial_profile.csv"),
              ["r_um", "on_counts", "off_counts", "dF_counts", "pixels"],
              [[r, a, b, a - b, int(c)] for r, a, b, c in zip(p_on.radii, p_on.values, p_off.values,
                                                              p_on.pixel_counts)])
    write_csv(os.path.join(out, "ring_sweep.csv"), im.RingSweep.HEADER, sweep.rows)
    best_rows = []
    for metric, cell in sweep.best.items():
        best_rows.append([metric] + (list(cell) if cell else [math.nan, math.nan]))
    write_csv(os.path.join(out, "ring_best.csv"), ["metric", "r_um", "w_um"], best_rows)
    return {"rings": len(sweep.rows)}


# ---------------------------------------------------------------------------
# driver

COMMANDS = {
    "sensitivity": cmd_sensitivity,
    "pde": cmd_pde,
    "odmr": cmd_odmr,
    "curve": cmd_curve,
    "image": cmd_image,
}


def _versions():
    import scipy

    return {"aidsim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": "%d.%d" % sys.version_info[:2]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aidsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aidsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
        p.add_argument("--out", default="aidsim-out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg = cfgmod.load_config(args.config, args.seed)
        os.makedirs(args.out, exist_ok=True)
        manifest = {"command": args.command, "seed": cfg["seed"], "config": cfg, "versions": _versions()}
        with open(os.path.join(args.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with np.errstate(divide="ignore", invalid="ignore"):
            summary = COMMANDS[args.command](cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"aidsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, cd.SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"aidsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    with open(os.path.join(args.out, "run_info.json"), "w") as fh:
        json.dump({"started_unix": started, "finished_unix": time.time(), "threads": args.threads,
                   "kernel_backend": _kernels.BACKEND, "summary": summary}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
