"""Experiment configuration, named presets, and artifact serialization.

A configuration is a nested mapping with fixed sections (trap, reservoir,
loading, outcoupling, run, onset, sweep, output). Unknown keys anywhere are
errors, every preset expands to a complete explicit mapping, and
``parse_config(dump_config(cfg)) == cfg`` holds for all of them. The same
mapping drives single runs, parameter sweeps, and the branching-ratio scan
(``kind: bre-scan``).

Serialization helpers write the per-replica trajectory CSV, the
ensemble-mean CSV, the sweep scan CSV, and a versioned JSON summary. All
writers are deterministic: fixed column orders, fixed key orders, shortest
round-trip float formatting, LF line endings, no timestamps.
"""

import copy
import json
import math
import os

import numpy as np
import yaml

from .units import (TrapSpec, ReservoirSpec, NaturalUnits, CHROMIUM_52_MASS,
                    gamma_eff_from_reservoir)
from .pump import LoadingConfig, OutcouplingPolicy
from .engine import SimulationParams, OBSERVABLE_KEYS
from .observables import OnsetCriterion, onset_time, locate_threshold
from . import __version__

SCHEMA_VERSION = 1

OMEGA_G_1KHZ = 2.0 * math.pi * 1000.0

TRAJECTORY_COLUMNS = ("t", "N", "N0", "fraction", "energy_per_particle",
                      "cum_evaporated", "cum_outcoupled", "cum_not_trapped",
                      "events_total")

_INT_COLUMNS = {"N", "N0", "cum_evaporated", "cum_outcoupled",
                "cum_not_trapped", "events_total"}

# Trajectory attribute backing each CSV column after the time axis.
_COLUMN_SOURCES = {
    "N": "n_total",
    "N0": "n0",
    "fraction": "fraction",
    "energy_per_particle": "energy_per_particle",
    "cum_evaporated": "cum_evaporated",
    "cum_outcoupled": "cum_outcoupled",
    "cum_not_trapped": "cum_not_trapped",
    "events_total": "events_total",
}


class ConfigError(ValueError):
    """A configuration document failed validation."""


def _template():
    """Complete configuration with every key present, as a nested dict."""
    return {
        "kind": "simulation",
        "name": "run",
        "trap": {
            "omega_g": OMEGA_G_1KHZ,
            "m_max": 50,
            "mass": CHROMIUM_52_MASS,
            "scattering_length": 6e-9,
            "virtual_extra": 10,
        },
        "reservoir": None,
        "loading": {
            "gamma_eff": 0.01,
            "mode": "per-shell",
            "max_load_shell": None,
        },
        "outcoupling": {
            "variant": "off",
            "xi": None,
            "gamma_out": None,
            "c": 1.17,
            "f_max": 0.05,
            "resample_interval": 2.0 * math.pi * 10.0,
            "start_time": 0.0,
        },
        "run": {
            "t_end": 1e5,
            "seed": 0,
            "realizations": 1,
            "sample_points": 201,
            "engine": "fast",
            "max_events": None,
            "initial_occupancy": None,
            "evaporation": True,
            "delta": None,
            "avg_start": None,
            "workers": 0,
        },
        "onset": {
            "n_abs": 20,
            "f_rel": 0.05,
            "sustained": True,
        },
        "sweep": None,
        "bre": None,
        "output": {
            "dir": "out/run",
            "stabilization_window": None,
            "retention_frac": 0.5,
            "reference_extraction_rate_si": None,
        },
    }


_RESERVOIR_TEMPLATE = {
    "gamma_eg": 0.0,
    "n_ex": 0.0,
    "N_ex": 0.0,
    "T": 1e-6,
    "omega_e": 0.0,
    "omega_rec": 0.0,
    "mass": CHROMIUM_52_MASS,
    "formula": "excited-trap",
}

_SWEEP_TEMPLATE = {
    "parameter": "",
    "values": [],
    "t_end": None,
}

_BRE_TEMPLATE = {
    "branching_ratios": [],
    "occupancies": [],
    "eta": 0.3,
    "initial_level": 2,
    "m_g": None,
    "reabsorption_strength": 0.01,
    "validity_limit": 0.5,
    "check_convergence": True,
}

# Keys whose value may be a mapping with its own fixed template.
_SUBSECTION_TEMPLATES = {
    "reservoir": _RESERVOIR_TEMPLATE,
    "sweep": _SWEEP_TEMPLATE,
    "bre": _BRE_TEMPLATE,
}

# Parameters a sweep may address, with the coercion applied to its values.
SWEEPABLE = {
    "loading.gamma_eff": float,
    "trap.scattering_length": float,
    "trap.m_max": int,
    "trap.virtual_extra": int,
    "outcoupling.xi": float,
    "run.t_end": float,
}


def _type_name(value):
    return type(value).__name__


# Expected kind for leaves whose template default is None, plus leaves that
# may be set to null to request a derived value.
_NULLABLE_KINDS = {
    "loading.gamma_eff": "number",
    "loading.max_load_shell": "int",
    "outcoupling.xi": "number",
    "outcoupling.gamma_out": "number",
    "run.max_events": "int",
    "run.initial_occupancy": "list",
    "run.delta": "number",
    "run.avg_start": "number",
    "output.stabilization_window": "list",
    "output.reference_extraction_rate_si": "number",
    "bre.m_g": "int",
    "sweep.t_end": "list",
}


def _kind_of(default, path):
    if default is None:
        return _NULLABLE_KINDS.get(path)
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "number"
    if isinstance(default, str):
        return "str"
    if isinstance(default, list):
        return "list"
    return None


def _check_scalar(path, value, default):
    """Type-check a leaf against the template entry for that key."""
    if value is None:
        if default is not None and path not in _NULLABLE_KINDS:
            raise ConfigError("key %s must not be null" % path)
        return None
    kind = _kind_of(default, path)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError("key %s expects a boolean, got %s"
                              % (path, _type_name(value)))
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("key %s expects an integer, got %s"
                              % (path, _type_name(value)))
        return value
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("key %s expects a number, got %s"
                              % (path, _type_name(value)))
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError("key %s expects a string, got %s"
                              % (path, _type_name(value)))
        return value
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError("key %s expects a list, got %s"
                              % (path, _type_name(value)))
        return value
    raise ConfigError("key %s has unsupported value type %s"
                      % (path, _type_name(value)))


def _merge_section(prefix, defaults, user):
    if not isinstance(user, dict):
        raise ConfigError("section %s must be a mapping, got %s"
                          % (prefix or "<root>", _type_name(user)))
    out = {}
    for key in user:
        if key not in defaults:
            path = "%s.%s" % (prefix, key) if prefix else key
            raise ConfigError("unknown key %s (no such setting)" % path)
    for key, default in defaults.items():
        path = "%s.%s" % (prefix, key) if prefix else key
        if key not in user:
            out[key] = copy.deepcopy(default)
            continue
        value = user[key]
        if key in _SUBSECTION_TEMPLATES and prefix == "":
            if value is None:
                out[key] = None
            else:
                out[key] = _merge_section(key, _SUBSECTION_TEMPLATES[key], value)
        elif isinstance(default, dict):
            if value is None:
                raise ConfigError("section %s must not be null" % path)
            out[key] = _merge_section(path, default, value)
        else:
            out[key] = _check_scalar(path, value, default)
    return out


def _validate_semantics(cfg):
    if cfg["kind"] not in ("simulation", "bre-scan"):
        raise ConfigError("kind must be 'simulation' or 'bre-scan', got %r"
                          % (cfg["kind"],))
    if cfg["kind"] == "bre-scan":
        if cfg["bre"] is None:
            raise ConfigError("kind bre-scan requires a bre section")
        for key in ("branching_ratios", "occupancies"):
            vals = cfg["bre"][key]
            if not vals or not all(isinstance(v, (int, float))
                                   and not isinstance(v, bool) for v in vals):
                raise ConfigError("bre.%s must be a non-empty list of numbers"
                                  % key)
        return
    occ = cfg["run"]["initial_occupancy"]
    if occ is not None:
        if not isinstance(occ, list) or not occ or \
                not all(isinstance(v, int) and not isinstance(v, bool)
                        and v >= 0 for v in occ):
            raise ConfigError("run.initial_occupancy must be a list of "
                              "non-negative integers")
    if cfg["run"]["sample_points"] < 2:
        raise ConfigError("run.sample_points must be at least 2")
    window = cfg["output"]["stabilization_window"]
    if window is not None:
        ok = (isinstance(window, list) and len(window) == 2
              and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                      for v in window) and window[0] < window[1])
        if not ok:
            raise ConfigError("output.stabilization_window must be a pair "
                              "[t_start, t_end] with t_start < t_end")
        cfg["output"]["stabilization_window"] = [float(window[0]),
                                                 float(window[1])]
    sweep = cfg["sweep"]
    if sweep is not None:
        param = sweep["parameter"]
        if param not in SWEEPABLE:
            raise ConfigError("sweep.parameter %r is not sweepable; choose "
                              "one of: %s" % (param, ", ".join(sorted(SWEEPABLE))))
        values = sweep["values"]
        if not values:
            raise ConfigError("sweep.values must be a non-empty list")
        coerce = SWEEPABLE[param]
        try:
            sweep["values"] = [coerce(v) for v in values]
        except (TypeError, ValueError):
            raise ConfigError("sweep.values entries must be %s-like for %s"
                              % (coerce.__name__, param))
        ends = sweep["t_end"]
        if ends is not None:
            if not isinstance(ends, list) or len(ends) != len(values) or \
                    not all(isinstance(v, (int, float))
                            and not isinstance(v, bool) for v in ends):
                raise ConfigError("sweep.t_end must be null or a list of "
                                  "numbers matching sweep.values in length")
            sweep["t_end"] = [float(v) for v in ends]


def validate_config(data):
    """Merge a raw mapping onto the template and check every key.

    Returns the completed configuration dict. Unknown keys, wrong types,
    and inconsistent sections raise ConfigError naming the offending path.
    """
    merged = _merge_section("", _template(), data)
    _validate_semantics(merged)
    return merged


def parse_config(text):
    """Parse a YAML document into a validated configuration."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config is not valid YAML: %s" % exc)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping, got %s"
                          % _type_name(data))
    return validate_config(data)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg):
    """Render a configuration back to YAML with stable key order."""
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=False)


def set_override(cfg, dotted, raw):
    """Apply one key=value override; the value is parsed as YAML."""
    parts = dotted.split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError("unknown override key %s" % dotted)
        if node[part] is None and part in _SUBSECTION_TEMPLATES:
            node[part] = copy.deepcopy(_SUBSECTION_TEMPLATES[part])
        node = node[part]
        if not isinstance(node, dict):
            raise ConfigError("override key %s does not address a setting"
                              % dotted)
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError("unknown override key %s" % dotted)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigError("override value %r for %s is not valid YAML"
                          % (raw, dotted))
    node[leaf] = _coerce_numeric_strings(value)


def _coerce_numeric_strings(value):
    """Turn bare-exponent literals like 2e5 into numbers.

    YAML leaves them as strings, which is never what an override means;
    non-numeric strings pass through untouched.
    """
    if isinstance(value, list):
        return [_coerce_numeric_strings(v) for v in value]
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            pass
        try:
            return float(value)
        except ValueError:
            return value
    return value


def apply_overrides(cfg, pairs):
    """Apply key=value strings, then re-validate the whole document."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError("override %r is not of the form key=value" % pair)
        dotted, raw = pair.split("=", 1)
        set_override(cfg, dotted.strip(), raw.strip())
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# Presets


def _simulation_preset(name, **edits):
    cfg = _template()
    cfg["name"] = name
    cfg["output"]["dir"] = "out/%s" % name
    for dotted, value in edits.items():
        node = cfg
        parts = dotted.split("__")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
    return cfg


def _fig7_base(name):
    # growth stage of 0.35 s, then a 16 s outcoupled hold
    start = 0.35 * OMEGA_G_1KHZ
    return _simulation_preset(
        name,
        trap__m_max=10,
        loading__gamma_eff=1e-3,
        loading__mode="per-state-ergodic",
        outcoupling__start_time=start,
        run__t_end=start + 16.0 * OMEGA_G_1KHZ,
        run__realizations=10,
        run__sample_points=401,
    )


def preset(name):
    """Return the fully expanded configuration for a named experiment.

    fig3: baseline continuous-loading run (fixed delivery rate with
      condensate-seeking landing) watched for condensation onset.
    fig4: loading-rate sweep of the fig3 system.
    fig5: scattering-length sweep of the fig3 system with the delivery
      band restricted to the lowest shells.
    fig6: trap-depth comparison (m_max 30 vs 60) under uniform delivery
      into shells 0..40, where the shallow trap loses the high part of
      the flux over its barrier and the deep trap retains it.
    fig7: growth stage followed by a constant-outcoupling ratio scan that
      brackets the survival threshold.
    fig8: growth stage followed by a randomized outcoupling hold with
      stabilization statistics over the hold window.
    thermalization: tiny closed system relaxing to its stationary mixture.
    bre-scaling: deterministic branching-ratio scaling-exponent scan.
    """
    builders = {
        "fig3": lambda: _simulation_preset(
            "fig3",
            loading__mode="stimulated",
            run__t_end=1e5,
            run__realizations=10,
        ),
        "fig4": lambda: _simulation_preset(
            "fig4",
            loading__mode="stimulated",
            run__t_end=1e5,
            run__realizations=10,
            sweep={"parameter": "loading.gamma_eff",
                   "values": [0.01, 0.1, 1.0],
                   "t_end": [1e5, 3e4, 1e4]},
        ),
        "fig5": lambda: _simulation_preset(
            "fig5",
            loading__mode="stimulated",
            loading__max_load_shell=5,
            run__t_end=1e5,
            run__realizations=10,
            sweep={"parameter": "trap.scattering_length",
                   "values": [1.25e-9, 6e-9, 24e-9],
                   "t_end": [3e4, 2e4, 2e4]},
        ),
        "fig6": lambda: _simulation_preset(
            "fig6",
            loading__mode="uniform",
            loading__max_load_shell=40,
            run__t_end=2e5,
            run__realizations=10,
            sweep={"parameter": "trap.m_max",
                   "values": [30, 60],
                   "t_end": None},
        ),
        "fig7": lambda: _fig7(),
        "fig8": lambda: _fig8(),
        "thermalization": lambda: _simulation_preset(
            "thermalization",
            trap__m_max=2,
            trap__virtual_extra=0,
            loading__gamma_eff=0.0,
            run__t_end=2e6,
            run__realizations=10,
            run__initial_occupancy=[0, 3, 0],
            run__evaporation=False,
        ),
        "bre-scaling": lambda: _bre_scaling(),
    }
    if name not in builders:
        raise ConfigError("unknown preset %r; available presets: %s"
                          % (name, ", ".join(sorted(builders))))
    cfg = builders[name]()
    return validate_config(cfg)


def _fig7():
    cfg = _fig7_base("fig7")
    cfg["outcoupling"]["variant"] = "constant"
    cfg["sweep"] = {"parameter": "outcoupling.xi",
                    "values": [1.0, 1.05, 1.1, 1.15, 1.2, 1.3, 1.4, 1.5],
                    "t_end": None}
    return cfg


def _fig8():
    cfg = _fig7_base("fig8")
    start = cfg["outcoupling"]["start_time"]
    hold = 40.0 * OMEGA_G_1KHZ
    cfg["outcoupling"]["variant"] = "randomized"
    cfg["run"]["t_end"] = start + hold
    cfg["run"]["sample_points"] = 801
    cfg["output"]["stabilization_window"] = [start, start + hold]
    cfg["output"]["reference_extraction_rate_si"] = 7500.0
    return cfg


def _bre_scaling():
    cfg = _template()
    cfg["kind"] = "bre-scan"
    cfg["name"] = "bre-scaling"
    cfg["output"]["dir"] = "out/bre-scaling"
    ratios = [float(x) for x in np.logspace(-4.0, -2.0, 5)]
    cfg["bre"] = dict(_BRE_TEMPLATE)
    cfg["bre"]["branching_ratios"] = ratios
    cfg["bre"]["occupancies"] = [1.0, 3.0, 10.0, 32.0, 100.0]
    return cfg


PRESET_NAMES = ("fig3", "fig4", "fig5", "fig6", "fig7", "fig8",
                "thermalization", "bre-scaling")


# ---------------------------------------------------------------------------
# Config -> engine parameters


def gamma_eff_natural(cfg):
    """Loading rate in trap units, deriving it from the reservoir if asked.

    loading.gamma_eff null requires a reservoir section; the advisory
    reservoir formula then supplies the rate (converted from 1/s).
    """
    gamma = cfg["loading"]["gamma_eff"]
    if gamma is not None:
        return float(gamma)
    res = cfg["reservoir"]
    if res is None:
        raise ConfigError("loading.gamma_eff is null and no reservoir "
                          "section is present to derive it from")
    spec = ReservoirSpec(gamma_eg=res["gamma_eg"], n_ex=res["n_ex"],
                         N_ex=res["N_ex"], T=res["T"],
                         omega_e=res["omega_e"], omega_rec=res["omega_rec"],
                         mass=res["mass"])
    rate_si = gamma_eff_from_reservoir(spec, formula=res["formula"])
    return NaturalUnits(cfg["trap"]["omega_g"]).rate_from_si(rate_si)


def to_simulation_params(cfg):
    """Build engine-ready SimulationParams from a validated configuration."""
    if cfg["kind"] != "simulation":
        raise ConfigError("config kind %r does not describe a simulation"
                          % (cfg["kind"],))
    trap = TrapSpec(omega_g=cfg["trap"]["omega_g"],
                    m_max=cfg["trap"]["m_max"],
                    mass=cfg["trap"]["mass"],
                    scattering_length=cfg["trap"]["scattering_length"],
                    virtual_extra=cfg["trap"]["virtual_extra"])
    loading = LoadingConfig(gamma_eff=gamma_eff_natural(cfg),
                            mode=cfg["loading"]["mode"],
                            max_load_shell=cfg["loading"]["max_load_shell"])
    out = cfg["outcoupling"]
    policy = OutcouplingPolicy(variant=out["variant"], xi=out["xi"],
                               gamma_out=out["gamma_out"], c=out["c"],
                               f_max=out["f_max"],
                               resample_interval=out["resample_interval"],
                               start_time=out["start_time"])
    run = cfg["run"]
    occ = run["initial_occupancy"]
    grid = np.linspace(0.0, run["t_end"], run["sample_points"])
    return SimulationParams(
        trap=trap,
        loading=loading,
        t_end=run["t_end"],
        outcoupling=policy,
        delta=run["delta"],
        sample_grid=grid,
        seed=run["seed"],
        realizations=run["realizations"],
        initial_occupancy=tuple(occ) if occ is not None else None,
        evaporation=run["evaporation"],
        engine=run["engine"],
        max_events=run["max_events"],
        avg_start=run["avg_start"],
        workers=run["workers"],
    )


def onset_criterion(cfg):
    onset = cfg["onset"]
    return OnsetCriterion(n_abs=onset["n_abs"], f_rel=onset["f_rel"],
                          sustained=onset["sustained"])


def _set_dotted(cfg, dotted, value):
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value


def expand_points(cfg):
    """Expand a configuration into its run points.

    Returns a list of (label, point_config, overrides) triples: one entry
    ("single", cfg, {}) without a sweep, otherwise one per sweep value with
    the parameter (and optional per-point t_end) substituted.
    """
    if cfg["sweep"] is None:
        return [("single", cfg, {})]
    sweep = cfg["sweep"]
    param = sweep["parameter"]
    leaf = param.split(".")[-1]
    points = []
    for i, value in enumerate(sweep["values"]):
        pt = copy.deepcopy(cfg)
        pt["sweep"] = None
        _set_dotted(pt, param, value)
        overrides = {param: value}
        if sweep["t_end"] is not None:
            pt["run"]["t_end"] = sweep["t_end"][i]
            overrides["run.t_end"] = sweep["t_end"][i]
        label = "%s=%s" % (leaf, _format_value(value))
        points.append((label, pt, overrides))
    return points


def _format_value(value):
    if isinstance(value, int):
        return "%d" % value
    return "%g" % value


# ---------------------------------------------------------------------------
# Writers


def _fmt_float(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _cell(column, value):
    if column in _INT_COLUMNS:
        return "%d" % int(value)
    return _fmt_float(value)


def write_trajectory_csv(path, trajectory):
    """One row per sample-grid point, fixed column order."""
    lines = [",".join(TRAJECTORY_COLUMNS)]
    times = trajectory.times
    for i in range(len(times)):
        row = [_fmt_float(times[i])]
        for col in TRAJECTORY_COLUMNS[1:]:
            row.append(_cell(col, getattr(trajectory, _COLUMN_SOURCES[col])[i]))
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


def ensemble_columns():
    cols = ["t"]
    for name in TRAJECTORY_COLUMNS[1:]:
        cols.append(name + "_mean")
        cols.append(name + "_stderr")
    return cols


def write_ensemble_csv(path, result):
    """Mean and standard error of every trajectory column, same grid."""
    cols = ensemble_columns()
    lines = [",".join(cols)]
    times = result.times
    keys = [_COLUMN_SOURCES[name] for name in TRAJECTORY_COLUMNS[1:]]
    for i in range(len(times)):
        row = [_fmt_float(times[i])]
        for key in keys:
            row.append(_fmt_float(result.mean[key][i]))
            row.append(_fmt_float(result.stderr[key][i]))
        lines.append(",".join(row))
    _write_text(path, "\n".join(lines) + "\n")


SCAN_COLUMNS = ("parameter", "value", "t_end", "onset_natural",
                "onset_seconds", "onset_stderr_natural", "final_N_mean",
                "final_N_stderr", "final_N0_mean", "final_N0_stderr",
                "final_fraction_mean", "final_fraction_stderr")


def write_scan_csv(path, rows):
    """One row per sweep point; onset cells may be empty (no onset)."""
    lines = [",".join(SCAN_COLUMNS)]
    for row in rows:
        cells = []
        for col in SCAN_COLUMNS:
            value = row[col]
            if value is None:
                cells.append("")
            elif col == "parameter":
                cells.append(str(value))
            else:
                cells.append(_fmt_float(value))
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def write_summary_json(path, summary):
    _write_text(path, json.dumps(_jsonify(summary), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Summary assembly


def _onset_block(cfg, result, units):
    crit = onset_criterion(cfg)
    mean_view = result.mean_trajectory()
    value = onset_time(mean_view.times, mean_view.n0, mean_view.n_total, crit)
    per_replica = [onset_time(tr.times, tr.n0, tr.n_total, crit)
                   for tr in result.trajectories]
    finite = [v for v in per_replica if v is not None]
    if len(finite) > 1:
        stderr = float(np.std(finite, ddof=1) / math.sqrt(len(finite)))
    else:
        stderr = None
    return {
        "natural": value,
        "seconds": units.time_to_si(value) if value is not None else None,
        "stderr_natural": stderr,
        "per_replica_natural": per_replica,
        "criterion": {"n_abs": crit.n_abs, "f_rel": crit.f_rel,
                      "sustained": crit.sustained},
    }


def _final_block(result):
    out = {}
    for name in ("n_total", "n0", "fraction", "energy_per_particle"):
        out[name + "_mean"] = float(result.mean[name][-1])
        out[name + "_stderr"] = float(result.stderr[name][-1])
    return out


def _stabilization_block(cfg, result, units):
    from .observables import stabilization_stats
    window = cfg["output"]["stabilization_window"]
    if window is None:
        return None
    per = [stabilization_stats(tr, window) for tr in result.trajectories]
    mean_n0 = float(np.mean([s.mean_n0 for s in per]))
    rel = [s.relative_std for s in per]
    extracted = [s.extracted_atoms for s in per]
    rates = [s.extraction_rate for s in per]
    rate_nat = float(np.mean(rates))
    return {
        "window_natural": [window[0], window[1]],
        "window_seconds": [units.time_to_si(window[0]),
                           units.time_to_si(window[1])],
        "mean_n0": mean_n0,
        "relative_std_mean": float(np.mean(rel)),
        "relative_std_max": float(np.max(rel)),
        "extracted_atoms_mean": float(np.mean(extracted)),
        "extracted_atoms_per_replica": [int(v) for v in extracted],
        "extraction_rate_natural": rate_nat,
        "extraction_rate_si": units.rate_to_si(rate_nat),
        "reference_extraction_rate_si":
            cfg["output"]["reference_extraction_rate_si"],
    }


def point_summary(cfg, result, label, overrides, files):
    """Summary block for one run point of an experiment."""
    units = NaturalUnits(cfg["trap"]["omega_g"])
    t_end = cfg["run"]["t_end"]
    return {
        "label": label,
        "overrides": overrides,
        "t_end": {"natural": t_end, "seconds": units.time_to_si(t_end)},
        "onset": _onset_block(cfg, result, units),
        "final": _final_block(result),
        "stabilization": _stabilization_block(cfg, result, units),
        "files": files,
    }


def threshold_summary(cfg, xi_values, final_n0, reference_n0):
    """Survival-threshold block for an outcoupling-ratio sweep."""
    level = cfg["output"]["retention_frac"] * reference_n0
    bracket, xi0, open_ended = locate_threshold(xi_values, final_n0, level)
    return {
        "xi": list(xi_values),
        "final_n0": [float(v) for v in final_n0],
        "reference_n0": float(reference_n0),
        "retention_frac": cfg["output"]["retention_frac"],
        "retention_level": float(level),
        "bracket": [bracket[0], bracket[1]],
        "xi0": xi0,
        "open_ended": open_ended,
    }


def experiment_summary(cfg, preset_name, points, threshold=None):
    """Top-level versioned summary document for one experiment."""
    units = NaturalUnits(cfg["trap"]["omega_g"])
    return {
        "schema_version": SCHEMA_VERSION,
        "generator": {"package": "becload", "version": __version__},
        "kind": cfg["kind"],
        "name": cfg["name"],
        "preset": preset_name,
        "seed": cfg["run"]["seed"],
        "realizations": cfg["run"]["realizations"],
        "loading_mode": cfg["loading"]["mode"],
        "omega_g": cfg["trap"]["omega_g"],
        "time_unit_seconds": units.time_to_si(1.0),
        "points": points,
        "threshold": threshold,
        "config": cfg,
    }
