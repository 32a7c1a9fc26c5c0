"""Command-line front end: ``iontometer run|project|validate``.

Configs are JSON with units at the boundary (Hz, Gauss, volts, seconds).
They are validated against :data:`SCHEMA` before anything is computed, then
converted once to SI. A run writes one CSV per figure panel, a
``summary.json`` (echoed config, SI inputs, key outputs, versions, seed) and a
``manifest.json`` mapping every CSV to its panel.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, analysis, physics, protocols
from .config import SensorConfig, TimingBudget
from .physics import DomainError, GradientField, IonSpecies, TrapConfig, ZeemanTransition
from .signals import CouplingModel, NoiseSpec, synthesize_band_noise
from .constants import gauss_to_tesla

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}
_count = {"type": "integer", "minimum": 1}


def _obj(props, required=(), **extra):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False, **extra}


_tau_grid = _obj({"start_s": _pos, "stop_s": _pos, "num": {"type": "integer", "minimum": 2}},
                 ["start_s", "stop_s", "num"])

_SENSOR = _obj({
    "ion": _obj({"species": {"type": "string", "enum": sorted(physics.SPECIES)},
                 "name": {"type": "string"}, "mass_amu": _pos,
                 "charge_state": {"type": "integer", "minimum": 1}},
                anyOf=[{"required": ["species"]}, {"required": ["mass_amu"]}]),
    "trap": _obj({"axial_hz": _pos, "radial_hz": _pos}, ["axial_hz"]),
    "gradient": _obj({"B0_gauss": _nonneg, "dBdz_T_per_m": {"type": "number"}},
                     ["B0_gauss", "dBdz_T_per_m"]),
    "transition": _obj({"order": {"enum": ["first", "second"]}, "coefficient": _pos},
                       ["order"]),
    "alpha_per_m": {"type": "number"},
    "eta": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
    "T2_s": _pos,
    "t_m_s": _nonneg,
    "gamma_override": {"type": ["number", "null"]},
    "readout_efficiency": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
    "background_decay_per_s": _nonneg,
    "coupling": _obj({"capacitance_F": _pos, "resistance_ohm": {"type": ["number", "null"]}}),
}, ["ion", "trap", "gradient", "transition"])


def _experiment(kind, props, required=()):
    return _obj({"type": {"const": kind}, **props}, ["type", *required])


_hahn = {"taus_s": _pos_list, "tau_grid": _tau_grid, "shots": _count,
         "n_points": {"type": "integer", "minimum": 12}, "periods": {"type": "number", "minimum": 1}}

_EXPERIMENTS = [
    _experiment("hahn_ac", _hahn),
    _experiment("hahn_dc", _hahn),
    _experiment("shot_noise", {"tau_s": _pos, "total_shots": _count,
                               "subset_sizes": {"type": "array", "items": _count, "minItems": 3},
                               "mode": {"enum": ["AC", "DC"]}}),
    _experiment("spin_lock", {"lock_rabi_hz": _pos,
                              "psd_levels": {"type": "array", "items": _nonneg, "minItems": 1},
                              "shots": _count, "realizations": _count, "bandwidth_hz": _pos,
                              "n_durations": {"type": "integer", "minimum": 4},
                              "periodogram_record_s": _pos},
                ["lock_rabi_hz", "psd_levels"]),
    _experiment("t2", {"taus_s": _pos_list, "shots": _count,
                       "n_phases": {"type": "integer", "minimum": 5}}),
    _experiment("calibrate_alpha", {"dV_V": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                                    "alpha_true_per_m": {"type": "number"}, "shots": _count,
                                    "probe_time_s": _pos}),
    _experiment("calibrate_gradient", {"shots": _count, "probe_time_s": _pos}),
    _experiment("project", {"tau_s": _pos, "T2_s": _pos, "t_m_s": _nonneg}),
]

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "iontometer run configuration",
    "type": "object",
    "properties": {
        "sensor": _SENSOR,
        "experiment": {"type": "object", "required": ["type"],
                       "properties": {"type": {"enum": [e["properties"]["type"]["const"]
                                                         for e in _EXPERIMENTS]}},
                       "allOf": [{"if": {"properties": {"type": {"const": e["properties"]["type"]["const"]}}},
                                  "then": e} for e in _EXPERIMENTS]},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "full": {"type": "object", "description": "overrides applied by --full (dotted keys)"},
    },
    "required": ["sensor", "experiment", "seed"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Configuration problem, carrying the dotted path of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"numerical failure in {stage}: {message}")
        self.stage = stage


# --- config handling --------------------------------------------------------

def _error_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in (err.instance or {})]
        parts += missing[:1]
    elif err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        parts += extra[:1]
    return ".".join(parts)


def validate(cfg: dict) -> None:
    """Raise :class:`ConfigError` for the most specific schema violation."""
    errors = list(jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise ConfigError(_error_path(err), err.message)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, assignments) -> dict:
    """Return a copy with ``a.b.c=value`` assignments applied (values parsed as JSON)."""
    out = copy.deepcopy(cfg)
    for item in assignments:
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigError(item, "override must look like key=value")
            key, raw = item.split("=", 1)
            value = _parse_value(raw)
        else:
            key, value = item
        node = out
        *head, last = key.split(".")
        for part in head:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"{part!r} is not an object")
        node[last] = value
    return out


def load_config(path, overrides=(), seed=None, full=False) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as err:
        raise ConfigError("", f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("", f"invalid JSON: {err}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("", "top level must be an object")
    if full:
        cfg = apply_overrides(cfg, cfg.get("full", {}).items())
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = seed
    validate(cfg)
    return cfg


def sensor_from_dict(d: dict) -> SensorConfig:
    """Build a :class:`SensorConfig` from the boundary-unit ``sensor`` block."""
    ion_d = d["ion"]
    if "species" in ion_d:
        ion = physics.species(ion_d["species"])
    else:
        ion = IonSpecies.from_amu(ion_d.get("name", "ion"), ion_d["mass_amu"], ion_d.get("charge_state", 1))
    radial = d["trap"].get("radial_hz", 1.5e6)
    trap = TrapConfig.from_hz(d["trap"]["axial_hz"], radial, radial)
    grad = GradientField(gauss_to_tesla(d["gradient"]["B0_gauss"]), d["gradient"]["dBdz_T_per_m"])
    tr = d["transition"]
    if tr["order"] == "first":
        transition = ZeemanTransition.first_order(*([tr["coefficient"]] if "coefficient" in tr else []))
    else:
        transition = ZeemanTransition("second", tr.get("coefficient", ZeemanTransition.clock().coeff))
    coupling = d.get("coupling", {})
    R = coupling.get("resistance_ohm")
    kw = dict(
        alpha=d.get("alpha_per_m", -95.64),
        eta=d.get("eta", 0.018),
        T2=d.get("T2_s", 0.304),
        coupling=CouplingModel(coupling.get("capacitance_F", 220e-12), math.inf if R is None else R),
        gamma_override=d.get("gamma_override"),
        readout_efficiency=d.get("readout_efficiency"),
        background_decay=d.get("background_decay_per_s", 0.0),
    )
    if "t_m_s" in d:
        kw["timing"] = TimingBudget.lumped(d["t_m_s"])
    return SensorConfig(ion, trap, grad, transition, **kw)


def sensor_si(cfg: SensorConfig) -> dict:
    return {
        "ion": cfg.ion.name, "mass_kg": cfg.ion.mass, "charge_C": cfg.ion.charge,
        "nu_axial_rad_per_s": cfg.trap.nu_axial, "B0_T": cfg.gradient.B0, "dBdz_T_per_m": cfg.gradient.dBdz,
        "transition_order": cfg.transition.order, "d_omega_dB_rad_per_s_per_T": cfg.chain.d_omega_dB,
        "gamma_forward_rad_m_per_V": cfg.chain.gamma, "gamma_used_rad_m_per_V": cfg.gamma,
        "alpha_per_m": cfg.alpha, "eta": cfg.eta, "C": cfg.C, "T2_s": cfg.T2, "t_m_s": cfg.t_m,
        "background_decay_per_s": cfg.background_decay,
    }


# --- experiment runners -----------------------------------------------------
# Each returns (datasets, outputs) where datasets is a list of
# (filename, panel, csv_text).

def _taus(exp):
    if "taus_s" in exp:
        return [float(t) for t in exp["taus_s"]]
    g = exp.get("tau_grid", {"start_s": 0.025, "stop_s": 0.25, "num": 12})
    if g["stop_s"] <= g["start_s"]:
        raise ConfigError("experiment.tau_grid.stop_s", "must exceed start_s")
    return [float(t) for t in np.linspace(g["start_s"], g["stop_s"], g["num"])]


def _hahn(sensor, exp, seed, mode):
    taus = _taus(exp)
    reports = protocols.run_sensitivity_campaign(sensor, mode, taus, exp.get("shots", 300), seed,
                                                 exp.get("n_points", 12), exp.get("periods", 1.5))
    ok = [r for r in reports if r.converged]
    if not ok:
        raise StageError("fringe fit", reports[0].message)
    best = min(ok, key=lambda r: r.S)
    opt = analysis.optimal_tau(sensor.T2, sensor.t_m, sensor.gamma, sensor.C, mode)
    panel = "fig2" + ("a" if mode == "AC" else "b")
    fringes = [(f"fringe_{mode.lower()}_{j:02d}.csv", f"{panel}-inset", r.experiment.to_csv())
               for j, r in enumerate(reports) if r.experiment is not None]
    outputs = {
        "mode": mode,
        "tau_opt_grid_s": best.tau, "S_min": best.S, "S_min_err": best.S_err,
        "tau_opt_continuous_s": opt.tau, "S_theory_at_tau_opt": opt.S,
        "failed_points": [{"tau_s": r.tau, "message": r.message} for r in reports if not r.converged],
    }
    return [(f"sensitivity_{mode.lower()}.csv", panel, protocols.campaign_csv(reports)), *fringes], outputs


def _shot_noise(sensor, exp, seed):
    mode = exp.get("mode", "AC")
    tau = exp.get("tau_s") or analysis.optimal_tau(sensor.T2, sensor.t_m, sensor.gamma, sensor.C, mode).tau
    M = exp.get("total_shots", 50_000)
    sizes = exp.get("subset_sizes") or [n for n in (10, 20, 50, 100, 200, 500, 1000, 2500, 5000) if M % n == 0]
    table = protocols.run_shot_noise_scaling(sensor, tau, M, sizes, seed, mode)
    outputs = {"tau_s": tau, "slope": table.slope, "slope_err": table.slope_err,
               "E_min_1s_V_per_m": table.E_1s, "E_min_1s_err": table.E_1s_err,
               "point_charge_distance_m": physics.point_charge_distance(table.E_1s)}
    return [("shot_noise.csv", "fig3", table.to_csv())], outputs


def _spin_lock(sensor, exp, seed):
    rabi = 2 * math.pi * exp["lock_rabi_hz"]
    bw = exp.get("bandwidth_hz", 3e3)
    levels = exp["psd_levels"]
    res = protocols.run_spin_locking(sensor, rabi, levels, None, exp.get("shots", 500), seed,
                                     exp.get("realizations", 200), bw,
                                     n_durations=exp.get("n_durations", 24))
    curves = ["psd_two_sided,tau_s,p_up,p_err"]
    for lv in sorted(res.levels, key=lambda lv: lv.psd_two_sided):
        curves += [f"{protocols._fmt(lv.psd_two_sided)},{protocols._fmt(t)},{protocols._fmt(p)},"
                   f"{protocols._fmt(e)}" for t, p, e in zip(lv.durations, lv.p_up, lv.p_err)]
    data = [("spin_lock_decay.csv", "fig4b", "\n".join(curves) + "\n"),
            ("spin_lock_rates.csv", "fig4c", res.to_csv())]
    driven = [s for s in levels if s > 0]
    if driven:
        s_max = max(driven)
        center = exp["lock_rabi_hz"]
        w = synthesize_band_noise(NoiseSpec(center, bw, s_max, exp.get("periodogram_record_s", 0.2), seed))
        pg = analysis.periodogram(w, "rectangular", segments=4)
        keep = pg.band(max(center - 5 * bw, 0.0), center + 5 * bw)
        rows = ["frequency_Hz,psd_two_sided"] + [f"{protocols._fmt(f)},{protocols._fmt(p)}"
                                                 for f, p in zip(pg.frequencies[keep], pg.psd_two_sided[keep])]
        data.insert(0, ("noise_periodogram.csv", "fig4a", "\n".join(rows) + "\n"))
    outputs = {
        "lock_rabi_rad_per_s": rabi,
        "levels": [{"psd_two_sided": lv.psd_two_sided, "Gamma_per_s": lv.gamma, "Gamma_err": lv.gamma_err,
                    "Gamma_upper_bound": lv.fit.upper_bound,
                    "Gamma_analytic": protocols.decay_rate(sensor.gamma, lv.psd_two_sided) + sensor.background_decay,
                    "S_E_inverted": float(s)}
                   for lv, s in zip(res.levels, res.S_E)],
        "Gamma0_per_s": res.gamma0, "S_E_min": res.S_E_min,
    }
    return data, outputs


def _t2(sensor, exp, seed):
    taus = exp.get("taus_s") or list(np.linspace(0.02, 0.6, 12))
    res = protocols.run_t2(sensor, taus, exp.get("shots", 300), seed, exp.get("n_phases", 25))
    return [("t2_contrast.csv", "fig9", res.to_csv())], {"T2_s": res.T2, "T2_err": res.T2_err,
                                                         "fit": res.fit.as_dict()}


def _alpha(sensor, exp, seed):
    dV = exp.get("dV_V") or list(np.linspace(-0.5, 0.5, 11))
    res = protocols.calibrate_geometric_factor(sensor, dV, exp.get("shots", 300), seed,
                                               exp.get("alpha_true_per_m"), exp.get("probe_time_s", 10e-3))
    outputs = {"alpha_per_m": res.alpha, "alpha_err": res.alpha_err, "d_omega_dV": res.d_omega_dV,
               "d_omega_dV_err": res.d_omega_dV_err, "gamma_rad_m_per_V": res.gamma}
    return [("alpha_calibration.csv", "fig7", res.to_csv())], outputs


def _gradient(sensor, exp, seed):
    res = protocols.calibrate_gradient(sensor, exp.get("shots", 300), seed, exp.get("probe_time_s", 10e-3))
    half = res.separation / 2
    csv_text = (f"z_m,B_T\n{protocols._fmt(-half)},{protocols._fmt(res.B1)}\n"
                f"{protocols._fmt(half)},{protocols._fmt(res.B2)}\n")
    outputs = {"separation_m": res.separation, "dBdz_T_per_m": res.dBdz, "dBdz_err": res.dBdz_err}
    return [("gradient_calibration.csv", "fig6", csv_text)], outputs


def _project(sensor, exp, seed):
    tau = exp.get("tau_s", 0.17)
    T2 = exp.get("T2_s", 2 * tau)
    t_m = exp.get("t_m_s", sensor.t_m)
    S = protocols.project_sensitivity(sensor, tau, T2, t_m)
    return [], {"tau_s": tau, "T2_s": T2, "t_m_s": t_m, "gamma_rad_m_per_V": sensor.chain.gamma,
                "S_V_per_m_sqrtHz": S}


RUNNERS = {
    "hahn_ac": lambda s, e, k: _hahn(s, e, k, "AC"),
    "hahn_dc": lambda s, e, k: _hahn(s, e, k, "DC"),
    "shot_noise": _shot_noise,
    "spin_lock": _spin_lock,
    "t2": _t2,
    "calibrate_alpha": _alpha,
    "calibrate_gradient": _gradient,
    "project": _project,
}


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def execute(cfg: dict, out_dir) -> dict:
    """Run a validated config and write its artifacts. Returns the summary."""
    try:
        sensor = sensor_from_dict(cfg["sensor"])
    except (DomainError, ValueError) as err:
        raise ConfigError("sensor", str(err)) from None
    exp = cfg["experiment"]
    kind = exp["type"]
    try:
        datasets, outputs = RUNNERS[kind](sensor, exp, int(cfg["seed"]))
    except ConfigError:
        raise
    except (ArithmeticError, DomainError, analysis.FitError, ValueError) as err:
        raise StageError(kind, str(err)) from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for name, panel, text in datasets:
        with open(out / name, "w", newline="") as fh:
            fh.write(text)
        manifest.append({"file": name, "panel": panel})
    summary = _clean({
        "experiment": kind,
        "seed": cfg["seed"],
        "config": cfg,
        "inputs_si": sensor_si(sensor),
        "outputs": outputs,
        "versions": {"iontometer": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": ".".join(map(str, sys.version_info[:3]))},
    })
    _dump(summary, out / "summary.json")
    _dump({"experiment": kind, "datasets": manifest}, out / "manifest.json")
    return summary


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- argument parsing ---------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iontometer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write its datasets")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key by dotted path; VALUE is parsed as JSON when possible")
    run.add_argument("--full", action="store_true", help="apply the config's full-size 'full' overrides")
    run.add_argument("--out", help="output directory (default: the config's 'output' or ./out)")

    val = sub.add_parser("validate", help="check a config against the schema")
    val.add_argument("--config")
    val.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    val.add_argument("--schema", action="store_true", help="print the JSON schema and exit")

    proj = sub.add_parser("project", help="sensitivity of a hypothetical sensor")
    proj.add_argument("--config", help="config whose sensor block is projected")
    proj.add_argument("--species", default="9Be+", choices=sorted(physics.SPECIES))
    proj.add_argument("--axial-hz", type=float, default=100e3)
    proj.add_argument("--gradient", type=float, default=200.0, help="dB/dz in T/m")
    proj.add_argument("--hz-per-gauss", type=float, default=2.1e6)
    proj.add_argument("--tau", type=float, default=0.17)
    proj.add_argument("--T2", type=float)
    proj.add_argument("--t-m", type=float, default=0.0)
    proj.add_argument("--C", type=float, default=1.0)
    proj.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return p


def _project_cli(args) -> int:
    if args.config:
        cfg = load_config(args.config, args.set)
        sensor = sensor_from_dict(cfg["sensor"])
    else:
        sensor = SensorConfig(physics.species(args.species), TrapConfig.from_hz(args.axial_hz),
                              GradientField(0.0, args.gradient), ZeemanTransition.first_order(args.hz_per_gauss),
                              eta=0.0, readout_efficiency=args.C)
    T2 = args.T2 if args.T2 is not None else 2 * args.tau
    S = protocols.project_sensitivity(sensor, args.tau, T2, args.t_m)
    print(json.dumps({"gamma_rad_m_per_V": sensor.chain.gamma, "tau_s": args.tau, "T2_s": T2,
                      "t_m_s": args.t_m, "C": sensor.C, "S_V_per_m_sqrtHz": S}, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            if args.schema:
                print(json.dumps(SCHEMA, indent=2))
                return EXIT_OK
            if not args.config:
                raise ConfigError("", "--config is required unless --schema is given")
            cfg = load_config(args.config, args.set)
            sensor_from_dict(cfg["sensor"])
            print(f"{args.config}: ok ({cfg['experiment']['type']})")
            return EXIT_OK
        if args.command == "project":
            return _project_cli(args)
        cfg = load_config(args.config, args.set, args.seed, args.full)
        out = args.out or cfg.get("output") or "out"
        summary = execute(cfg, out)
        print(json.dumps(summary["outputs"], indent=2))
        return EXIT_OK
    except ConfigError as err:
        print(f"iontometer: invalid configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, KeyError) as err:
        print(f"iontometer: invalid configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as err:
        print(f"iontometer: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
