"""Command-line entry point: ``biolage {ibm,pde,moments,compare,analyze-chi} --config FILE``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, ibm, io, pde
from .config import SCENARIOS, RunSpec, load_config
from .errors import BiolageError
from .initial import DiracCohort
from .moments import (
    MomentVector,
    find_k0,
    integrate_moments,
    moments_of_density,
    recursion_residual,
)


class _Outputs:
    """Records every file written so a failed run can be cleaned up."""

    def __init__(self, root: Path):
        self.root = root
        self.created_root = not root.exists()
        root.mkdir(parents=True, exist_ok=True)
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            p.unlink(missing_ok=True)
        if self.created_root and not any(self.root.iterdir()):
            self.root.rmdir()


# --------------------------------------------------------------------------
# shared set-up
# --------------------------------------------------------------------------
def _deterministic_ic(spec: RunSpec):
    """Initial data for the grid and moment routes; counted in individuals when demography is on."""
    ic = spec.initial
    if spec.params.demography is None:
        return ic
    mass = ic.mass
    return ic.scaled(spec.numerics.n_individuals / mass) if mass > 0 else ic


def _initial_moments(ic, K: int) -> MomentVector:
    if isinstance(ic, DiracCohort):
        return MomentVector(0.0, ic.moments(K))
    return moments_of_density(ic.density, ic.support_bound, K)


def _grid(spec: RunSpec) -> pde.Grid:
    num = spec.numerics
    ic = _deterministic_ic(spec)
    b_max = num.b_max if num.b_max is not None else pde.suggest_b_max(spec.params, ic, num.t_end)
    if num.n_cells is not None:
        return pde.Grid(float(b_max), int(num.n_cells))
    return pde.Grid.with_width(float(b_max), num.cell_width)


def _ode(spec: RunSpec, K: int):
    ic = _deterministic_ic(spec)
    num = spec.numerics
    return integrate_moments(spec.params, _initial_moments(ic, K), num.t_end, num.dt, num.output_times)


def _bin_widths(spec: RunSpec) -> list:
    num = spec.numerics
    if num.bin_width != "auto":
        return [float(num.bin_width)] * len(num.output_times)
    if not spec.params.is_linear:
        return [1.0] * len(num.output_times)
    traj = _ode(spec, 2)
    widths = []
    for v in traj.vectors:
        m = v.normalized()
        widths.append(analysis.auto_bin_width(math.sqrt(max(m[2] - m[1] ** 2, 0.0))))
    return widths


def _hist_top(spec: RunSpec, grid: Optional[pde.Grid]) -> float:
    num = spec.numerics
    if num.hist_b_max is not None:
        return float(num.hist_b_max)
    return grid.b_max if grid is not None else _grid(spec).b_max


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------
def _run_ibm(spec: RunSpec, out: _Outputs, grid: Optional[pde.Grid] = None, prefix: str = ""):
    num = spec.numerics
    K = num.moment_order(spec.scenario)
    widths = _bin_widths(spec)
    top = _hist_top(spec, grid)
    results = ibm.run_replicates(
        num.replicates, num.n_individuals, spec.initial, spec.params, num.output_times, num.seed,
        K=K, bin_width=widths, hist_b_max=top,
    )
    for i, t in enumerate(num.output_times):
        pooled = results[0].histograms[i]
        for r in results[1:]:
            pooled = pooled + r.histograms[i]
        io.write_histogram(out.path(f"{prefix}histogram_t{t:g}.csv"), pooled)
    for r in results:
        io.write_moments(out.path(f"{prefix}moments_r{r.replicate:03d}.csv"), r.moments)
    summary = {
        "replicates": [
            {"replicate": r.replicate, "event_counts": r.event_counts, "sizes": r.sizes, "mean_ages": r.mean_ages}
            for r in results
        ],
        "bin_widths": widths,
        "hist_b_max": top,
    }
    io.write_json(out.path(f"{prefix}summary.json"), summary)
    return results


def _run_pde(spec: RunSpec, out: _Outputs, grid: Optional[pde.Grid] = None, prefix: str = ""):
    num = spec.numerics
    grid = grid or _grid(spec)
    state = pde.initial_state(grid, _deterministic_ic(spec))
    traj = pde.run(spec.params, state, num.output_times, courant=num.courant, order=num.order)
    K = num.moment_order(spec.scenario)
    moms = [pde.density_moments(s, K) for s in traj.snapshots]
    if spec.output.density:
        io.write_density(out.path(f"{prefix}density.csv"), traj.snapshots)
    io.write_moments(out.path(f"{prefix}moments.csv"), moms)
    io.write_json(out.path(f"{prefix}ledger.json"), traj.report)
    return traj, moms


def _run_moments(spec: RunSpec, out: _Outputs, prefix: str = ""):
    K = spec.numerics.moment_order(spec.scenario)
    traj = _ode(spec, K)
    io.write_moments(out.path(f"{prefix}moments.csv"), traj.vectors)
    k0 = find_k0(spec.params, K) if K >= 1 and spec.params.tau > 0 else None
    last = traj.vectors[-1]
    res = recursion_residual(last, spec.params)
    summary = {
        "K": K,
        "dt": spec.numerics.dt,
        "k0": None if k0 is None else k0.k0,
        "k0_status": None if k0 is None else k0.status,
        "final_residual_max_abs": float(np.max(np.abs(res))) if np.all(np.isfinite(res)) else None,
    }
    io.write_json(out.path(f"{prefix}summary.json"), summary)
    return traj


def _run_compare(spec: RunSpec, out: _Outputs, quiet: bool):
    num = spec.numerics
    grid = _grid(spec)
    results = _run_ibm(spec, out, grid, prefix="ibm_")
    traj, pde_moms = _run_pde(spec, out, grid, prefix="pde_")
    ode = _run_moments(spec, out, prefix="ode_")
    K = min(4, num.moment_order(spec.scenario))
    ode_vecs = [v if v.K == K else MomentVector(v.t, v.values[: K + 1], v.flags[: K + 1]) for v in ode.vectors]
    report = analysis.triangle(
        [[r.moments[i] for r in results] for i in range(len(num.output_times))],
        pde_moms,
        ode_vecs,
        [h for h in results[0].histograms],
        traj.snapshots,
        k_max=K,
        sample_se=results[0].rel_se,
        scenario="compare",
    )
    if spec.params.tau_minus == 0 and spec.params.demography is None:
        b_star = spec.initial.support_bound
        for s in traj.snapshots:
            sr = analysis.support_check(s, b_star)
            report.add(f"t={s.t:g} pde support excess", sr.max_age - sr.bound, 0.0, max_age=sr.max_age)
    report.provenance = {
        "seed": num.seed,
        "replicates": num.replicates,
        "n_individuals": num.n_individuals,
        "grid": traj.report["grid"],
        "courant": num.courant,
        "order": num.order,
        "ode_dt": num.dt,
    }
    io.write_json(out.path("report.json"), report.to_dict())
    if not quiet:
        print(report.summary())
    return report


def _run_chi(spec: RunSpec, out: _Outputs):
    K = spec.numerics.moment_order(spec.scenario)
    rep = analysis.chi_report(spec.params, K)
    path = out.path("chi.csv")
    io.write_rows(path, ["k", "chi"], zip(rep["k"].tolist(), rep["chi"]))
    io.write_json(
        out.path("chi.json"),
        {"case": rep["case"], "x_max": rep["x_max"], "criterion": rep["criterion"], "k0": rep["k0"], "k0_status": rep["k0_status"]},
    )
    return rep


def execute(spec: RunSpec, out_dir=None, quiet: bool = False) -> int:
    """Run ``spec`` and write its outputs plus ``run_spec.json`` and ``manifest.json``.

    Returns 0 on success.  On any error the files written so far are removed,
    a diagnostic goes to stderr and 1 is returned.
    """
    root = Path(out_dir if out_dir is not None else spec.output.dir)
    out = _Outputs(root)
    try:
        io.write_json(out.path("run_spec.json"), spec.to_dict())
        if spec.scenario == "ibm":
            _run_ibm(spec, out)
        elif spec.scenario == "pde":
            _run_pde(spec, out)
        elif spec.scenario == "moments":
            _run_moments(spec, out)
        elif spec.scenario == "compare":
            _run_compare(spec, out, quiet)
        else:
            _run_chi(spec, out)
        files = list(out.paths)
        io.write_json(out.path("manifest.json"), io.manifest(files, root))
    except (BiolageError, ValueError, ArithmeticError, OSError) as exc:
        out.discard()
        print(f"biolage {spec.scenario}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if not quiet:
        print(f"wrote {len(out.paths)} files to {root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biolage", description="Biological-age jump model simulations.")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML or JSON run configuration")
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, default=None, help="overrides numerics.seed")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_config(args.config, scenario=args.scenario)
        if args.seed is not None:
            if args.seed < 0:
                raise BiolageError("--seed must be >= 0")
            spec.numerics.seed = args.seed
    except (BiolageError, ValueError, OSError) as exc:
        print(f"biolage: config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return execute(spec, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
