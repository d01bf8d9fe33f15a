"""Command-line front end.

Commands
--------
price       grid value, European estimate and delta at the spot
decompose   full premium decomposition with PASS/FAIL report
region      exercise-region CSV dump (plus optional surface dump)
convergence refinement ladder of decomposition residuals
selftest    run the acceptance checks and report per-criterion PASS/FAIL

Shared flags: ``--config <path>``, ``--out <dir>``, ``--seed <int>``,
``--threads <int>``. Reports are deterministic for a given config and seed
(timings go to the log, never into report files). Exit code 0 iff every
check run by the command passed; config errors exit with 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import __version__, eep, mc, obstacle_pde
from .acceptance import CRITERIA, run_all
from .config import RunConfig, load_config
from .errors import ConfigError, EeplabError

log = logging.getLogger("eeplab")

DEFAULT_LADDER = ((51, 50, 10_000), (101, 100, 100_000), (201, 200, 1_000_000))


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_summary_csv(path: str, cfg: RunConfig, result: eep.DecompositionResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "params_hash", "v_pde", "v_european", "premium",
                         "residual", "stderr_european", "stderr_premium",
                         "combined_stderr", "passed"])
        writer.writerow([
            cfg.payoff.family, cfg.params_hash(),
            f"{result.v_reference:.12g}", f"{result.v_european.value:.12g}",
            f"{result.premium.value:.12g}", f"{result.residual:.12g}",
            f"{result.v_european.stderr:.12g}", f"{result.premium.stderr:.12g}",
            f"{result.combined_stderr:.12g}", str(int(result.passed)),
        ])


def _solve_surface(cfg: RunConfig):
    params, spec, spot = cfg.build_objects()
    grid = obstacle_pde.build_grid(params, spot, cfg.pde.nodes_per_axis,
                                   cfg.pde.time_steps)
    surface = obstacle_pde.solve_lcp(
        params, spec, grid, cfg.pde.theta, omega=cfg.pde.psor_omega,
        tol=cfg.pde.psor_tol, max_sweeps=cfg.pde.psor_max_sweeps)
    region = obstacle_pde.exercise_region(surface, cfg.pde.eps_exercise)
    return params, spec, spot, surface, region


def _optional_dumps(cfg: RunConfig, out_dir: str, params, spec, spot, surface,
                    region) -> None:
    if cfg.output.surface_csv:
        path = os.path.join(out_dir, "surface.csv")
        obstacle_pde.surface_to_csv(surface, region, path)
        log.info("wrote %s", path)
    if cfg.output.region_csv:
        path = os.path.join(out_dir, "region.csv")
        obstacle_pde.region_to_csv(region, path)
        log.info("wrote %s", path)
    if cfg.output.paths_csv:
        path = os.path.join(out_dir, "paths.csv")
        batch = mc.simulate_paths(params, spot, cfg.mc.mesh_steps,
                                  min(cfg.mc.n_paths, 100), cfg.mc.seed)
        mc.paths_to_csv(batch, path)
        log.info("wrote %s", path)


def _cmd_price(cfg: RunConfig, out_dir: str) -> int:
    params, spec, spot, surface, region = _solve_surface(cfg)
    v_pde = obstacle_pde.value_at(surface, spot.s, spot.x)
    d = obstacle_pde.delta(surface, params, spot.s, spot.x)
    v_eur = mc.price_european(params, spec, spot, cfg.mc.n_paths, cfg.mc.seed,
                              antithetic=cfg.mc.antithetic,
                              chunk_size=cfg.mc.chunk_size)
    print(f"V_pde     = {v_pde:.6f}")
    print(f"V_european= {v_eur.value:.6f} +- {v_eur.stderr:.6f}")
    print(f"delta     = {np.array2string(d, precision=6)}")
    report = {
        "command": "price",
        "config": cfg.canonical_dict(),
        "params_hash": cfg.params_hash(),
        "v_pde": {"value": v_pde, "tol_abs": cfg.tolerance_abs(spec)},
        "v_european": {"value": v_eur.value, "stderr": v_eur.stderr,
                       "n_samples": v_eur.n_samples},
        "delta": [float(v) for v in d],
        "version": __version__,
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    _optional_dumps(cfg, out_dir, params, spec, spot, surface, region)
    return 0


def _cmd_decompose(cfg: RunConfig, out_dir: str) -> int:
    result = eep.decompose(cfg)
    for stage, secs in result.timings.items():
        log.info("stage %-10s %.2fs", stage, secs)
    print(f"V_pde     = {result.v_reference:.6f}")
    print(f"V_european= {result.v_european.value:.6f} +- {result.v_european.stderr:.6f}")
    print(f"premium   = {result.premium.value:.6f} +- {result.premium.stderr:.6f}")
    print(f"residual  = {result.residual:+.6f} "
          f"(tol {max(result.tol_abs, result.stderr_mult * result.combined_stderr):.6f})")
    print("PASS" if result.passed else "FAIL")
    report = {"command": "decompose", "config": cfg.canonical_dict(),
              "params_hash": cfg.params_hash(), "version": __version__,
              **result.report_dict()}
    _write_json(os.path.join(out_dir, "report.json"), report)
    _write_summary_csv(os.path.join(out_dir, "summary.csv"), cfg, result)
    if cfg.output.surface_csv or cfg.output.region_csv or cfg.output.paths_csv:
        if cfg.n <= 2:
            params, spec, spot, surface, region = _solve_surface(cfg)
            _optional_dumps(cfg, out_dir, params, spec, spot, surface, region)
    return 0 if result.passed else 1


def _cmd_region(cfg: RunConfig, out_dir: str) -> int:
    params, spec, spot, surface, region = _solve_surface(cfg)
    path = os.path.join(out_dir, "region.csv")
    obstacle_pde.region_to_csv(region, path)
    print(f"wrote {path}")
    if cfg.output.surface_csv:
        spath = os.path.join(out_dir, "surface.csv")
        obstacle_pde.surface_to_csv(surface, region, spath)
        print(f"wrote {spath}")
    return 0


def _parse_ladder(text: str):
    rungs = []
    for item in text.split(","):
        parts = item.strip().split("x")
        if len(parts) != 3:
            raise ConfigError("<ladder>", f"expected NODESxSTEPSxPATHS, got {item!r}")
        rungs.append(tuple(int(p) for p in parts))
    return rungs


def _cmd_convergence(cfg: RunConfig, out_dir: str, ladder) -> int:
    rows, ok = eep.convergence_study(cfg, ladder)
    path = os.path.join(out_dir, "convergence.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v)
                             for k, v in row.items()})
    for row in rows:
        print(f"nodes={row['nodes']:>4} steps={row['time_steps']:>4} "
              f"paths={row['paths']:>8}  residual={row['residual']:+.5f} "
              f"(se={row['combined_stderr']:.5f}) decay_ok={row['decay_ok']}")
    print(f"wrote {path}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_selftest(numbers) -> int:
    results = run_all(numbers)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eeplab",
        description="American option laboratory: obstacle-problem PDE, "
                    "penalization, Monte Carlo and the premium identity.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="path to the JSON run-config")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (0 = auto)")

    for name, help_text in (("price", "grid price, European estimate and delta"),
                            ("decompose", "premium decomposition report"),
                            ("region", "exercise-region CSV dump")):
        add_common(sub.add_parser(name, help=help_text))

    conv = sub.add_parser("convergence", help="refinement ladder study")
    add_common(conv)
    conv.add_argument("--ladder",
                      default=",".join(f"{a}x{b}x{c}" for a, b, c in DEFAULT_LADDER),
                      help="comma-separated NODESxSTEPSxPATHS rungs")

    st = sub.add_parser("selftest", help="run acceptance criteria")
    st.add_argument("--criteria", default=None,
                    help=f"comma-separated subset of {sorted(CRITERIA)}")
    st.add_argument("--threads", type=int, default=None)
    return parser


def _apply_threads(threads: int | None) -> None:
    if threads is not None and threads > 0:
        import numba

        numba.set_num_threads(threads)
        log.info("numba threads set to %d", threads)


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "selftest":
            _apply_threads(args.threads)
            numbers = None
            if args.criteria:
                numbers = [int(v) for v in args.criteria.split(",")]
                unknown = set(numbers) - set(CRITERIA)
                if unknown:
                    raise ConfigError("<criteria>", f"unknown criteria {sorted(unknown)}")
            return _cmd_selftest(numbers)

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.override(seed=args.seed)
        if args.threads is not None:
            cfg = cfg.override(threads=args.threads)
        if args.out is not None:
            cfg = cfg.override(out_dir=args.out)
        _apply_threads(cfg.threads if cfg.threads else None)
        out_dir = cfg.output.dir
        os.makedirs(out_dir, exist_ok=True)

        if args.command == "price":
            return _cmd_price(cfg, out_dir)
        if args.command == "decompose":
            return _cmd_decompose(cfg, out_dir)
        if args.command == "region":
            return _cmd_region(cfg, out_dir)
        if args.command == "convergence":
            return _cmd_convergence(cfg, out_dir, _parse_ladder(args.ladder))
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EeplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
