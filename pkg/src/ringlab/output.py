"""Run directories, manifests and sweeps."""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import os
import platform
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .config import RunConfig, SweepSpec, config_from_dict, config_to_dict
from .evolver import SimulationResult, Termination, run_simulation
from .grid import format_float, write_profile_csv
from .profile import NoConvergenceError, ShootingConfig, find_admissible

OUTPUT_ROOT_ENV = "RINGLAB_OUTPUT_ROOT"

EXIT_CODES = {
    Termination.FOCUS_TARGET_REACHED: 0,
    Termination.DT_UNDERFLOW: 3,
    Termination.DIVERGED: 4,
    Termination.MAX_STEPS: 5,
}
EXIT_CONFIG_ERROR = 2
EXIT_FAILURE = 1


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def resolve_output(out: str | None, default_name: str) -> Path:
    """``out`` as given when absolute, otherwise under the output root."""
    if out is not None and Path(out).is_absolute():
        return Path(out)
    return output_root() / (out if out is not None else default_name)


def level_tag(level: float) -> str:
    """``1e4`` for exact decades, otherwise the shortest float repr."""
    k = round(np.log10(level))
    if abs(level - 10.0**k) <= 1e-9 * level:
        return f"1e{k}"
    return repr(float(level))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(path: Path, data) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(outdir: Path, body: dict, files: list[str]) -> Path:
    """Manifest with an inventory of ``files`` (relative to ``outdir``) and their checksums."""
    outdir = Path(outdir)
    inventory = {name: {"sha256": _sha256(outdir / name), "bytes": (outdir / name).stat().st_size} for name in sorted(files)}
    manifest = {**body, "tool_version": __version__, "python": platform.python_version(), "files": inventory}
    path = outdir / "manifest.json"
    write_json_atomic(path, manifest)
    return path


def resolve_s0(rc: RunConfig) -> tuple[float | None, str]:
    """``S0`` used in the NLS focusing factor and a note on where it came from."""
    c = rc.sim
    if rc.s0_mode == "fixed":
        return c.s0, "fixed"
    if rc.s0_mode == "unit":
        return None, "unit"
    s0 = _admissible_s0(c.spec.sigma)
    if s0 is None:
        return None, "unit (admissible profile not found)"
    return s0, "admissible profile"


@functools.lru_cache(maxsize=None)
def _admissible_s0(sigma: float) -> float | None:
    try:
        return find_admissible(sigma).s0
    except NoConvergenceError:
        return None


def run_to_directory(rc: RunConfig, outdir: Path, dump_grids: bool = False, progress=None) -> SimulationResult:
    """Simulate and write ``series.csv``, snapshots, optional grids and the manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    s0, s0_note = resolve_s0(rc)
    sim = replace(rc.sim, s0=s0)
    result = run_simulation(sim, progress=progress)
    files = ["series.csv"]
    result.series.write_csv(outdir / "series.csv")
    snaps = []
    for sn in result.snapshots:
        name = f"snapshot_{level_tag(sn.level)}.csv"
        write_profile_csv(outdir / name, sn.grid.nodes, sn.state.values)
        files.append(name)
        snaps.append({"level": sn.level, "file": name, "t": sn.state.t, "L": sn.L, "r_max": sn.r_max})
    if dump_grids:
        gdir = outdir / "grids"
        gdir.mkdir(exist_ok=True)
        for k, g in enumerate(result.grids):
            name = f"grids/grid_{k:04d}.csv"
            with open(outdir / name, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["r"])
                w.writerows([format_float(x)] for x in g.nodes)
            files.append(name)
    body = {
        "config": config_to_dict(rc),
        "s0_used": s0,
        "s0_source": s0_note,
        "termination": result.termination.value,
        "wall_time_s": result.wall_time,
        "steps": result.steps,
        "regrids": result.regrids,
        "step_halvings": result.halvings,
        "max_power_drift": result.max_power_drift,
        "power_drift_exceeded": result.power_drift_exceeded,
        "hamiltonian_drift_per_decade": hamiltonian_drift(result),
        "snapshots": snaps,
        "unverified_defaults": [
            "corrector_iters", "corrector_tol", "dt0", "regrid", "outer boundary: homogeneous Dirichlet",
        ],
    }
    write_manifest(outdir, body, files)
    return result


def hamiltonian_drift(result: SimulationResult) -> list[dict]:
    """Relative change of the Hamiltonian across each decade of focusing."""
    s = result.series
    if s.family.is_heat or len(s) < 2:
        return []
    inv = s.inv_L
    out = []
    k = int(np.floor(np.log10(inv[0])))
    while 10.0 ** (k + 1) <= inv[-1]:
        i0 = int(np.searchsorted(inv, 10.0**k)) if 10.0**k > inv[0] else 0
        i1 = int(np.searchsorted(inv, 10.0 ** (k + 1)))
        i1 = min(i1, len(s) - 1)
        h0, h1 = s.hamiltonian[i0], s.hamiltonian[i1]
        out.append({"from": 10.0**k, "to": 10.0 ** (k + 1), "relative_change": float(abs(h1 - h0) / max(abs(h0), 1e-300))})
        k += 1
    return out


# ---------------------------------------------------------------------------
# profile outputs


def profile_to_directory(sigma: float, outdir: Path, cfg: ShootingConfig | None = None) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = cfg or ShootingConfig()
    prof = find_admissible(sigma, cfg)
    write_profile_csv(outdir / "profile.csv", prof.xi, prof.s)
    h, _ = prof.hamiltonian()
    record = {
        "sigma": sigma,
        "kappa": prof.kappa,
        "s0": prof.s0,
        "residual": prof.residual,
        "hamiltonian": h,
        "xi_max": cfg.xi_max,
    }
    write_json_atomic(outdir / "profile.json", record)
    return record


# ---------------------------------------------------------------------------
# sweeps


def _cell_name(index: int, params: dict) -> str:
    parts = [f"{k.replace('.', '-')}={v}" for k, v in params.items()]
    return f"cell_{index:03d}_" + "_".join(parts)


def _run_cell(args):
    kind, cfg, outdir = args
    outdir = Path(outdir)
    try:
        if kind == "profile":
            shoot = ShootingConfig(**{k: v for k, v in cfg.items() if k in ("xi_max", "tolerance")})
            rec = profile_to_directory(float(cfg["sigma"]), outdir, shoot)
            return {"status": "ok", "kappa": rec["kappa"], "s0": rec["s0"], "residual": rec["residual"]}
        rc = config_from_dict(cfg)
        res = run_to_directory(rc, outdir)
        row = {"status": res.termination.value, "kappa": np.nan, "p": np.nan, "r_max_final": float(res.series.r_max[-1])}
        try:
            order = res.series.family.rate_order
            tc = analysis.estimate_tc(res.series, 1.0 / order)
            fit = analysis.fit_power_law(res.series, tc)
            row.update(kappa=fit.kappa, p=fit.p)
        except analysis.FitError:
            pass
        return row
    except Exception as exc:  # recorded per cell, the sweep continues
        return {"status": f"error: {type(exc).__name__}: {exc}"}


def run_sweep(spec: SweepSpec, outdir: Path) -> Path:
    """Run every cell in its own subdirectory and aggregate ``sweep.csv``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cells = spec.cells()
    jobs = []
    names = []
    for i, params in enumerate(cells):
        name = _cell_name(i, params)
        names.append(name)
        cfg = spec.cell_config(params)
        jobs.append((spec.kind, cfg, str(outdir / name)))
    if spec.threads == 1:
        rows = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            rows = list(pool.map(_run_cell, jobs))
    metrics = ("kappa", "s0", "residual") if spec.kind == "profile" else ("kappa", "p", "r_max_final")
    axis_names = [a[0] for a in spec.axes]
    path = outdir / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", *axis_names, *metrics, "status"])
        for name, params, row in zip(names, cells, rows):
            vals = [format_float(row[m]) if m in row else "" for m in metrics]
            w.writerow([name, *[params[a] for a in axis_names], *vals, row["status"]])
    return path
