"""Command-line front end: subcommands, file emission, exit codes.

Every subcommand loads one config file, runs the selected engine and
writes its outputs atomically (temp file, then rename) into the output
directory: JSON reports, fixed-schema CSV tables and, unless disabled,
PNG figures next to them.  Identical (config, seed) inputs produce
byte-identical CSV/JSON.

Exit codes: 0 success, 2 configuration error, 3 numerical/no-event error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from math import sqrt
from pathlib import Path

from . import analysis, calibrate, exact, mc
from .config import (
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    config_digest,
    load_config,
)
from .mc import CountsRow, CountsTable
from .protocol import NoEventError, estimate_local_precision
from .qstate import NumericalError
from .timing import attempt_rate, schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SCHEMA_VERSION = 1

COUNTS_HEADER = "setting_1,setting_4,n_pp,n_pm,n_mp,n_mm,attempts"
SCAN_HEADER = "t_us,visibility,stderr"

#: verification bases: diagonal, rectilinear, circular analyzer pairs
FIDELITY_BASES = (("diag", (45.0, 45.0)), ("rect", (0.0, 0.0)), ("circ", ("circ", "circ")))

OUTCOME_KEYS = ("pp", "pm", "mp", "mm")


# ---------------------------------------------------------------------------
# file helpers


def _atomic_write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def _write_json(path: Path, payload: dict) -> Path:
    return _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cell(value) -> str:
    if isinstance(value, bool):
        raise TypeError("no boolean cells in CSV output")
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _counts_csv(table: CountsTable) -> str:
    lines = [COUNTS_HEADER]
    for row in table.rows:
        lines.append(",".join(_cell(v) for v in (
            row.setting_1, row.setting_4, row.n_pp, row.n_pm, row.n_mp,
            row.n_mm, row.attempts,
        )))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# engine orchestration


def _run_exact_suite(cfg: ExperimentConfig):
    report = exact.run_exact(
        cfg.site_i, cfg.site_ii, cfg.station, cfg.memory,
        cfg.timing.storage_time_us, cfg.chsh_settings, attempts=cfg.n_trials,
    )
    table = CountsTable(rows=[], seed=cfg.master_seed)
    for srep in report.settings:
        counts = {k: srep.probs[k] * cfg.n_trials for k in OUTCOME_KEYS}
        table.rows.append(CountsRow(
            setting_1=srep.setting[0], setting_4=srep.setting[1],
            n_pp=counts["pp"], n_pm=counts["pm"], n_mp=counts["mp"],
            n_mm=counts["mm"], attempts=cfg.n_trials,
        ))
    for name, (s1, s4) in FIDELITY_BASES:
        probs = report.basis_probs[name]
        table.rows.append(CountsRow(
            setting_1=s1, setting_4=s4,
            n_pp=probs["pp"] * cfg.n_trials, n_pm=probs["pm"] * cfg.n_trials,
            n_mp=probs["mp"] * cfg.n_trials, n_mm=probs["mm"] * cfg.n_trials,
            attempts=cfg.n_trials,
        ))
    return report, table


def _run_mc_suite(cfg: ExperimentConfig, n_workers: int = 1):
    settings = list(cfg.chsh_settings) + [pair for _, pair in FIDELITY_BASES]
    table = mc.run_monte_carlo(
        cfg.site_i, cfg.site_ii, cfg.station, cfg.memory,
        cfg.timing.storage_time_us, settings, cfg.n_trials, cfg.master_seed,
        n_workers=n_workers,
    )
    return table


def _estimators_from_table(cfg: ExperimentConfig, table: CountsTable):
    chsh_rows = table.rows[: 4]
    estimates = [
        analysis.correlation(r.n_pp, r.n_pm, r.n_mp, r.n_mm) for r in chsh_rows
    ]
    chsh = analysis.chsh_s(estimates, cfg.chsh_settings)
    basis_rows = {name: table.row_for(*pair) for name, pair in FIDELITY_BASES}
    fidelity = analysis.fidelity_from_settings(
        *(
            (basis_rows[n].n_pp, basis_rows[n].n_pm, basis_rows[n].n_mp, basis_rows[n].n_mm)
            for n in ("diag", "rect", "circ")
        )
    )
    diag = basis_rows["diag"]
    vis = analysis.visibility(diag.n_pp + diag.n_mm, diag.n_pm + diag.n_mp)
    return chsh, fidelity, vis


def _chsh_payload(chsh: analysis.CHSHResult) -> dict:
    return {
        "s": chsh.s,
        "stderr": chsh.stderr,
        "sign_pattern": list(chsh.sign_pattern),
        "settings": [list(s) for s in chsh.settings],
        "correlations": list(chsh.correlations),
        "violation_sigma": chsh.violation_sigma,
    }


def _fidelity_payload(fid: analysis.FidelityEstimate) -> dict:
    threshold = analysis.werner_chsh_threshold()
    return {
        "value": fid.value,
        "stderr": fid.stderr,
        "e_xx": fid.e_xx,
        "e_yy": fid.e_yy,
        "e_zz": fid.e_zz,
        "werner_chsh_threshold": threshold,
        "exceeds_werner_threshold": fid.value > threshold,
    }


def _visibility_payload(vis: analysis.VisibilityEstimate) -> dict:
    return {
        "value": vis.value,
        "stderr": vis.stderr,
        "bell_capable": vis.bell_capable,
        "threshold": 1.0 / sqrt(2.0),
    }


def _records(cfg, scenario, chsh=None, fidelity=None, vis=None, rate=None) -> list:
    digest = config_digest(cfg)
    seed = cfg.master_seed
    out = []
    if chsh is not None:
        out.append(ResultRecord(scenario, "S", chsh.s, chsh.stderr, digest, seed))
        for setting, est in zip(cfg.chsh_settings, chsh.correlations):
            out.append(ResultRecord(
                f"{scenario}:E({setting[0]},{setting[1]})", "E", est, 0.0, digest, seed
            ))
    if fidelity is not None:
        out.append(ResultRecord(scenario, "F", fidelity.value, fidelity.stderr, digest, seed))
    if vis is not None:
        out.append(ResultRecord(scenario, "V", vis.value, vis.stderr, digest, seed))
    if rate is not None:
        out.append(ResultRecord(scenario, "rate", rate, 0.0, digest, seed))
    return [r.as_dict() for r in out]


def _base_payload(cfg: ExperimentConfig, scenario: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario,
        "engine": cfg.engine,
        "attempts": cfg.n_trials,
        "seed": cfg.master_seed,
        "inputs_digest": config_digest(cfg),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_swap(cfg: ExperimentConfig, out_dir: Path, render_figures: bool = True,
             n_workers: int = 1) -> list:
    """Full pipeline report: heralding, storage, verification estimators."""
    written = []
    if cfg.engine == "exact":
        report, table = _run_exact_suite(cfg)
        chsh, fidelity, vis = report.chsh, report.fidelity, report.visibility
    else:
        table = _run_mc_suite(cfg, n_workers)
        report = None
        chsh, fidelity, vis = _estimators_from_table(cfg, table)
    payload = _base_payload(cfg, "swap")
    payload.update({
        "chsh": _chsh_payload(chsh),
        "fidelity": _fidelity_payload(fidelity),
        "visibility": _visibility_payload(vis),
        "records": _records(cfg, "swap", chsh, fidelity, vis,
                            rate=attempt_rate(cfg.timing)),
    })
    if report is not None:
        v_ap_i = calibrate.atom_photon_visibility(cfg.site_i)
        v_ap_ii = calibrate.atom_photon_visibility(cfg.site_ii)
        precision = estimate_local_precision(v_ap_i, v_ap_ii, vis.value)
        payload.update({
            "bsm_success_prob": report.bsm_prob,
            "memory_fidelity": report.memory_fidelity,
            "stored_memory_fidelity": report.stored_memory_fidelity,
            "pair_fidelity_postselected": report.pair_fidelity,
            "local_precision": {
                "value": precision.value,
                "raw": precision.raw,
                "model_violation": precision.model_violation,
                "v_ap_i": v_ap_i,
                "v_ap_ii": v_ap_ii,
                "v_aa": vis.value,
            },
        })
    written.append(_write_json(out_dir / "state_report.json", payload))
    written.append(_atomic_write(out_dir / "counts.csv", _counts_csv(table)))
    if render_figures:
        from . import figures

        fractions = {}
        for name, pair in FIDELITY_BASES:
            row = table.row_for(*pair)
            total = max(row.outcome_total(), 1e-300)
            fractions[name] = [row.n_pp / total, row.n_pm / total,
                               row.n_mp / total, row.n_mm / total]
        fig_path = out_dir / "fractions.png"
        figures.fractions_figure(fractions, fig_path)
        written.append(fig_path)
    return written


def cmd_chsh(cfg: ExperimentConfig, out_dir: Path, render_figures: bool = True,
             n_workers: int = 1) -> list:
    """CHSH S parameter at the configured four analyzer settings."""
    if cfg.engine == "exact":
        report, table = _run_exact_suite(cfg)
        chsh = report.chsh
        term_stderrs = [0.0] * 4
    else:
        table = _run_mc_suite(cfg, n_workers)
        estimates = [
            analysis.correlation(r.n_pp, r.n_pm, r.n_mp, r.n_mm)
            for r in table.rows[:4]
        ]
        chsh = analysis.chsh_s(estimates, cfg.chsh_settings)
        term_stderrs = [e.stderr for e in estimates]
    table = CountsTable(rows=table.rows[:4], seed=table.seed)
    payload = _base_payload(cfg, "chsh")
    payload["chsh"] = _chsh_payload(chsh)
    payload["records"] = _records(cfg, "chsh", chsh=chsh)
    written = [
        _write_json(out_dir / "chsh.json", payload),
        _atomic_write(out_dir / "counts.csv", _counts_csv(table)),
    ]
    if render_figures:
        from . import figures

        fig_path = out_dir / "chsh.png"
        figures.chsh_figure(
            cfg.chsh_settings, chsh.correlations,
            term_stderrs, chsh.s, chsh.stderr, fig_path,
        )
        written.append(fig_path)
    return written


def _scan_visibility(cfg: ExperimentConfig, t_us: float, n_workers: int):
    if cfg.engine == "exact":
        state = exact.run_pipeline(cfg.site_i, cfg.site_ii, cfg.station,
                                   cfg.memory, t_us)
        probs = exact.joint_outcome_probs(state.rho_pair, exact.DIAG, exact.DIAG,
                                          cfg.station.dark_prob)
        total = max(sum(probs.values()), 1e-300)
        value = (probs["pp"] + probs["mm"] - probs["pm"] - probs["mp"]) / total
        return analysis.VisibilityEstimate(value=value, stderr=0.0)
    table = mc.run_monte_carlo(
        cfg.site_i, cfg.site_ii, cfg.station, cfg.memory, t_us,
        [(45.0, 45.0)], cfg.n_trials, cfg.master_seed, n_workers=n_workers,
    )
    row = table.rows[0]
    return analysis.visibility(row.n_pp + row.n_mm, row.n_pm + row.n_mp)


def cmd_scan_storage(cfg: ExperimentConfig, out_dir: Path, t_list=None,
                     render_figures: bool = True, n_workers: int = 1) -> list:
    """Visibility versus storage time; rows sorted by ascending time."""
    times = tuple(t_list) if t_list else cfg.scan_times_us
    if not times:
        raise ConfigError("scan-storage needs storage times (--times or [scan] t_us)")
    if any(t < 0 for t in times):
        raise ConfigError("scan times must be nonnegative")
    rows = []
    for t in sorted(times):
        vis = _scan_visibility(cfg, float(t), n_workers)
        rows.append((float(t), vis.value, vis.stderr))
    lines = [SCAN_HEADER] + [",".join(repr(v) for v in row) for row in rows]
    written = [_atomic_write(out_dir / "scan.csv", "\n".join(lines) + "\n")]
    if render_figures:
        from . import figures

        fig_path = out_dir / "scan.png"
        figures.scan_figure(rows, fig_path)
        written.append(fig_path)
    return written


def cmd_fidelity(cfg: ExperimentConfig, out_dir: Path, render_figures: bool = True,
                 n_workers: int = 1) -> list:
    """Bell-state fidelity from the three conjugate-basis measurements."""
    if cfg.engine == "exact":
        report, table = _run_exact_suite(cfg)
        fidelity = report.fidelity
    else:
        table = _run_mc_suite(cfg, n_workers)
        fidelity = None
    basis_rows = {name: table.row_for(*pair) for name, pair in FIDELITY_BASES}
    table = CountsTable(rows=[basis_rows[n] for n, _ in FIDELITY_BASES], seed=table.seed)
    if fidelity is None:
        fidelity = analysis.fidelity_from_settings(
            *(
                (basis_rows[n].n_pp, basis_rows[n].n_pm, basis_rows[n].n_mp, basis_rows[n].n_mm)
                for n in ("diag", "rect", "circ")
            )
        )
    payload = _base_payload(cfg, "fidelity")
    payload["fidelity"] = _fidelity_payload(fidelity)
    payload["records"] = _records(cfg, "fidelity", fidelity=fidelity)
    written = [
        _write_json(out_dir / "fidelity.json", payload),
        _atomic_write(out_dir / "counts.csv", _counts_csv(table)),
    ]
    if render_figures:
        from . import figures

        fractions = {}
        for name, _ in FIDELITY_BASES:
            row = basis_rows[name]
            total = max(row.outcome_total(), 1e-300)
            fractions[name] = [row.n_pp / total, row.n_pm / total,
                               row.n_mp / total, row.n_mm / total]
        fig_path = out_dir / "fractions.png"
        figures.fractions_figure(fractions, fig_path)
        written.append(fig_path)
    return written


def cmd_rate(cfg: ExperimentConfig, out_dir: Path) -> list:
    """Attempt and coincidence rates from the timing arithmetic."""
    log = schedule(cfg.timing)
    rate = attempt_rate(cfg.timing)
    state = exact.run_pipeline(cfg.site_i, cfg.site_ii, cfg.station, cfg.memory,
                               cfg.timing.storage_time_us)
    probs = exact.joint_outcome_probs(state.rho_pair, exact.DIAG, exact.DIAG,
                                      cfg.station.dark_prob)
    fourfold = sum(probs.values()) * state.bsm_prob
    payload = _base_payload(cfg, "rate")
    payload.update({
        "write_slots_per_window": cfg.timing.write_slots_per_window,
        "write_events_scheduled": len(log.of_kind("write")),
        "attempt_rate_per_s": rate,
        "fiber_delay_ns": cfg.timing.fiber_delay_ns,
        "bsm_success_prob_per_attempt": state.bsm_prob,
        "bsm_success_rate_per_s": state.bsm_prob * rate,
        "fourfold_prob_per_attempt": fourfold,
        "fourfold_rate_per_s": fourfold * rate,
        "records": _records(cfg, "rate", rate=rate),
    })
    return [_write_json(out_dir / "rate.json", payload)]


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repeatersim",
        description="Simulator of an atomic-ensemble entanglement-swapping node",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("swap", "full heralded-swap pipeline report"),
        ("scan-storage", "visibility as a function of storage time"),
        ("chsh", "CHSH S parameter at the configured settings"),
        ("fidelity", "Bell-state fidelity from three analysis bases"),
        ("rate", "attempt and coincidence rate arithmetic"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config (TOML)")
        p.add_argument("--engine", choices=("exact", "mc"), default=None,
                       help="override the configured engine")
        p.add_argument("--trials", type=int, default=None, help="override n_trials")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="worker threads for the sampling engine")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering next to the data files")
        if name == "scan-storage":
            p.add_argument("--times", default=None,
                           help="comma-separated storage times in microseconds")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    engine = cfg.engine
    if args.engine is not None:
        engine = "monte-carlo" if args.engine == "mc" else "exact"
    return ExperimentConfig(
        site_i=cfg.site_i, site_ii=cfg.site_ii, station=cfg.station,
        memory=cfg.memory, timing=cfg.timing, chsh_settings=cfg.chsh_settings,
        engine=engine,
        n_trials=args.trials if args.trials is not None else cfg.n_trials,
        master_seed=args.seed if args.seed is not None else cfg.master_seed,
        scan_times_us=cfg.scan_times_us,
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out_dir = Path(args.out)
        figures_on = not args.no_figures
        if args.command == "swap":
            written = cmd_swap(cfg, out_dir, figures_on, args.workers)
        elif args.command == "chsh":
            written = cmd_chsh(cfg, out_dir, figures_on, args.workers)
        elif args.command == "fidelity":
            written = cmd_fidelity(cfg, out_dir, figures_on, args.workers)
        elif args.command == "rate":
            written = cmd_rate(cfg, out_dir)
        else:
            times = None
            if args.times:
                times = [float(t) for t in args.times.split(",") if t.strip()]
            written = cmd_scan_storage(cfg, out_dir, times, figures_on, args.workers)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoEventError, NumericalError) as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
