"""Command-line entry point for batch experiments.

Subcommands:

``run``
    Execute a configuration (from a YAML file or a named preset), write the
    per-point trajectory CSV, ensemble-mean CSV, optional sweep scan CSV,
    and the versioned JSON summary into the output directory.
``preset-dump``
    Print the fully expanded YAML for a named preset.
``bre-scan``
    Run the deterministic branching-ratio scaling scan and write its grid
    CSV and JSON summary.

Every run is reproducible: rerunning with the same seed produces
byte-identical artifacts.
"""

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from .config import (ConfigError, preset, load_config, apply_overrides,
                     dump_config, expand_points, to_simulation_params,
                     point_summary, threshold_summary, experiment_summary,
                     write_trajectory_csv, write_ensemble_csv, write_scan_csv,
                     write_summary_json, SCHEMA_VERSION)
from .engine import ensemble
from . import __version__


def _load(args):
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.preset:
        cfg = preset(args.preset)
        name = args.preset
    elif args.config:
        cfg = load_config(args.config)
        name = None
    else:
        raise ConfigError("one of --preset or --config is required")
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if getattr(args, "realizations", None) is not None:
        cfg["run"]["realizations"] = args.realizations
    return cfg, name


def _emit(path, writer, *payload):
    writer(path, *payload)
    print("wrote %s" % path)


def _pre_start_reference(cfg, result):
    """Ensemble-mean condensate occupation just before outcoupling starts."""
    start = cfg["outcoupling"]["start_time"]
    idx = np.nonzero(result.times <= start)[0]
    if idx.size == 0:
        raise ConfigError("sample grid has no point before "
                          "outcoupling.start_time; cannot reference the "
                          "threshold scan")
    return float(result.mean["n0"][int(idx[-1])])


def _run_simulation(cfg, preset_name, out_dir):
    points = expand_points(cfg)
    single = cfg["sweep"] is None
    sweep_param = None if single else cfg["sweep"]["parameter"]
    xi_scan = sweep_param == "outcoupling.xi"
    blocks = []
    scan_rows = []
    xi_values = []
    xi_finals = []
    reference = None
    for label, pt, overrides in points:
        params = to_simulation_params(pt)
        result = ensemble(params)
        subdir = out_dir if single else os.path.join(out_dir, label)
        traj_path = os.path.join(subdir, "trajectory.csv")
        ens_path = os.path.join(subdir, "ensemble.csv")
        _emit(traj_path, write_trajectory_csv, result.trajectories[0])
        _emit(ens_path, write_ensemble_csv, result)
        files = {"trajectory": os.path.relpath(traj_path, out_dir),
                 "ensemble": os.path.relpath(ens_path, out_dir)}
        block = point_summary(pt, result, label, overrides, files)
        blocks.append(block)
        if xi_scan:
            if reference is None:
                reference = _pre_start_reference(pt, result)
            xi_values.append(pt["outcoupling"]["xi"])
            xi_finals.append(block["final"]["n0_mean"])
        if not single:
            onset = block["onset"]
            scan_rows.append({
                "parameter": sweep_param,
                "value": overrides[sweep_param],
                "t_end": pt["run"]["t_end"],
                "onset_natural": onset["natural"],
                "onset_seconds": onset["seconds"],
                "onset_stderr_natural": onset["stderr_natural"],
                "final_N_mean": block["final"]["n_total_mean"],
                "final_N_stderr": block["final"]["n_total_stderr"],
                "final_N0_mean": block["final"]["n0_mean"],
                "final_N0_stderr": block["final"]["n0_stderr"],
                "final_fraction_mean": block["final"]["fraction_mean"],
                "final_fraction_stderr": block["final"]["fraction_stderr"],
            })
    threshold = None
    if xi_scan:
        threshold = threshold_summary(cfg, xi_values, xi_finals, reference)
    if not single:
        _emit(os.path.join(out_dir, "scan.csv"), write_scan_csv, scan_rows)
    summary = experiment_summary(cfg, preset_name, blocks, threshold)
    _emit(os.path.join(out_dir, "summary.json"), write_summary_json, summary)
    return 0


def _run_bre(cfg, preset_name, out_dir):
    from .branching import scaling_report

    opts = cfg["bre"]
    fit = scaling_report(opts["branching_ratios"], opts["occupancies"],
                         eta=opts["eta"],
                         initial_level=opts["initial_level"],
                         m_g=opts["m_g"],
                         reabsorption_strength=opts["reabsorption_strength"],
                         validity_limit=opts["validity_limit"],
                         check_convergence=opts["check_convergence"])
    report = fit.as_dict()
    _emit(os.path.join(out_dir, "grid.csv"), _write_bre_grid, report["grid"])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "generator": {"package": "becload", "version": __version__},
        "kind": "bre-scan",
        "name": cfg["name"],
        "preset": preset_name,
        "scaling": report,
        "config": cfg,
    }
    _emit(os.path.join(out_dir, "summary.json"), write_summary_json, summary)
    return 0


_BRE_GRID_COLUMNS = ("branching_ratio", "occupancy", "within_validity",
                     "A0", "A1a", "A1b", "A2a_neutral", "A2a_bad",
                     "A2a_good", "A2a_cross", "A2b", "residual")


def _write_bre_grid(path, grid_rows):
    lines = [",".join(_BRE_GRID_COLUMNS)]
    for row in grid_rows:
        cells = [cfgmod._fmt_float(row["branching_ratio"]),
                 cfgmod._fmt_float(row["occupancy"]),
                 "1" if row["within_validity"] else "0"]
        for term in _BRE_GRID_COLUMNS[3:]:
            cells.append(cfgmod._fmt_float(row["terms"][term]))
        lines.append(",".join(cells))
    cfgmod._write_text(path, "\n".join(lines) + "\n")


def _cmd_run(args):
    cfg, name = _load(args)
    out_dir = args.out_dir or cfg["output"]["dir"]
    if cfg["kind"] == "bre-scan":
        return _run_bre(cfg, name, out_dir)
    return _run_simulation(cfg, name, out_dir)


def _cmd_preset_dump(args):
    cfg = preset(args.preset)
    text = dump_config(cfg)
    if args.out:
        cfgmod._write_text(args.out, text)
        print("wrote %s" % args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_bre_scan(args):
    cfg = preset("bre-scaling")
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    out_dir = args.out_dir or cfg["output"]["dir"]
    return _run_bre(cfg, "bre-scaling", out_dir)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="becload",
        description="Stochastic kinetics of continuously loaded trapped "
                    "bosons: batch runs, presets, and scaling scans.")
    parser.add_argument("--version", action="version",
                        version="becload %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment configuration")
    run_p.add_argument("--config", help="YAML configuration file")
    run_p.add_argument("--preset", help="named preset to run")
    run_p.add_argument("--seed", type=int, help="override run.seed")
    run_p.add_argument("--realizations", type=int,
                       help="override run.realizations")
    run_p.add_argument("--out-dir", help="override output.dir")
    run_p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    run_p.set_defaults(func=_cmd_run)

    dump_p = sub.add_parser("preset-dump",
                            help="print the expanded YAML of a preset")
    dump_p.add_argument("--preset", required=True)
    dump_p.add_argument("--out", help="write to a file instead of stdout")
    dump_p.set_defaults(func=_cmd_preset_dump)

    bre_p = sub.add_parser("bre-scan",
                           help="run the branching-ratio scaling scan")
    bre_p.add_argument("--out-dir", help="override output.dir")
    bre_p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
    bre_p.set_defaults(func=_cmd_bre_scan)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
