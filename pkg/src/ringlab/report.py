"""Post-processing of a run directory into ``analysis.json``, profile CSVs and figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import analysis, plotting
from .grid import EquationSpec, Family, FieldState, RadialGrid, format_float, read_profile_csv
from .output import level_tag, write_json_atomic
from .profile import NoConvergenceError, find_admissible


def load_manifest(*dirs: Path) -> dict | None:
    for d in dirs:
        if d is not None and (Path(d) / "manifest.json").exists():
            return json.loads((Path(d) / "manifest.json").read_text())
    return None


def load_snapshots(snap_dir: Path, manifest: dict, spec: EquationSpec):
    """``(state, grid, L, r_max, level, t)`` for every snapshot listed in the manifest."""
    out = []
    for meta in manifest.get("snapshots", []):
        r, v = read_profile_csv(Path(snap_dir) / meta["file"])
        grid = RadialGrid(r, spec.d)
        state = FieldState(v, spec, t=meta["t"])
        out.append((state, grid, meta["L"], meta["r_max"], meta["level"], meta["t"]))
    return out


def _spec_from(manifest: dict | None, family, sigma, d, m) -> EquationSpec:
    cfg = (manifest or {}).get("config", {})
    family = family or cfg.get("family")
    sigma = sigma if sigma is not None else cfg.get("sigma")
    d = d if d is not None else cfg.get("d")
    m = m if m is not None else cfg.get("m", 0)
    if family is None or sigma is None or d is None:
        raise ValueError("family, sigma and d are needed: pass them or keep manifest.json next to the data")
    return EquationSpec(Family(family), int(d), float(sigma), int(m), int(d) == 1)


def _write_rescaled(path: Path, prof: analysis.RescaledProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "amplitude"])
        for x, a in zip(prof.rho, prof.amplitude):
            w.writerow([format_float(x), format_float(a)])


def rescale_snapshot(state, grid, spec: EquationSpec, L: float, r_max: float, span: float = 10.0):
    """Rescaled profile with the family's normalization.

    Heat solutions use the log-corrected width, with ``tc - t`` inferred from
    the focusing factor itself.
    """
    width = None
    if spec.family is Family.NLHE:
        gap = analysis.heat_gap(L, spec.sigma)
        width = analysis.heat_width(state.t + gap, state.t, spec.sigma)
    return analysis.rescale_profile(state, grid, spec, L, r_max, width=width, span=span)


def analyze_directory(
    series_path: Path,
    snapshots_dir: Path | None,
    outdir: Path,
    family=None,
    sigma=None,
    d=None,
    m=None,
    figures: bool = True,
) -> dict:
    series_path = Path(series_path)
    if not series_path.is_file():
        raise FileNotFoundError(f"series file not found: {series_path}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(snapshots_dir, series_path.parent)
    spec = _spec_from(manifest, family, sigma, d, m)
    series = analysis.BlowupSeries.read_csv(series_path, spec.family, spec.sigma, spec.d)
    order = spec.family.rate_order
    result: dict = {"family": spec.family.value, "sigma": spec.sigma, "d": spec.d, "rate_order": order}
    errors = {}

    tc = fit = None
    try:
        tc = analysis.estimate_tc(series, 1.0 / order)
        fit = analysis.fit_power_law(series, tc)
    except analysis.FitError as exc:
        errors["fit"] = str(exc)
    result["tc"] = tc
    result["kappa"] = fit.kappa if fit else None
    result["p"] = fit.p if fit else None
    result["fit_window"] = list(fit.window) if fit else None
    result["fit_residual"] = fit.residual if fit else None
    try:
        result["rate_limit"] = analysis.rate_limit(series, order)
    except analysis.FitError as exc:
        result["rate_limit"] = None
        errors["rate_limit"] = str(exc)
    result["r_max_final"] = float(series.r_max[-1])

    cls = None
    if spec.d > 1 and not spec.family.is_heat:
        c = analysis.classify_ring(spec.sigma, spec.d, spec.family)
        cls = {"alpha": c.alpha, "regime": c.regime, "p": c.p, "expanding_forbidden": c.expanding_forbidden}
    result["classification"] = cls

    snaps = []
    if manifest is not None:
        snaps = load_snapshots(snapshots_dir or series_path.parent, manifest, spec)

    result["gamma"] = None
    if spec.d > 1 and not spec.family.is_heat and snaps:
        # skip the earliest decade, which is usually still transient
        use = [s for s in snaps if s[4] >= 100] if len([s for s in snaps if s[4] >= 100]) >= 3 else snaps
        try:
            result["gamma"] = analysis.ring_power_scaling([s[:4] for s in use])
            result["gamma_levels"] = [s[4] for s in use]
        except (analysis.FitError, analysis.DomainError) as exc:
            errors["gamma"] = str(exc)

    profiles = []
    files = []
    for state, grid, L, r_max, level, _t in snaps:
        try:
            prof = rescale_snapshot(state, grid, spec, L, r_max)
        except analysis.DomainError as exc:
            errors[f"profile_{level_tag(level)}"] = str(exc)
            continue
        name = f"rescaled_{level_tag(level)}.csv"
        _write_rescaled(outdir / name, prof)
        profiles.append(prof)
        files.append(name)
    result["rescaled_profiles"] = files
    if len(profiles) >= 2:
        result["profile_distance_last_two"] = analysis.compare_profiles(profiles[-1], profiles[-2])

    reference = None
    if spec.family is Family.NLS and manifest is not None and manifest.get("s0_source") == "admissible profile":
        try:
            reference = analysis.admissible_rescaled(find_admissible(spec.sigma))
        except (NoConvergenceError, analysis.DomainError) as exc:
            errors["admissible_profile"] = str(exc)
        if reference is not None and profiles:
            result["admissible_profile_distance"] = analysis.compare_profiles(profiles[-1], reference)
    if spec.family is Family.NLHE:
        reference = analysis.profile_from_function(lambda x: (1 + x**2) ** (-1 / (2 * spec.sigma)), spec.family)
        if profiles:
            result["heat_profile_distance"] = analysis.compare_profiles(profiles[-1], reference, rho_max=2.0)

    figs = []
    if figures:
        figs.append(plotting.plot_ring_radius(series, outdir / "ring_radius.png").name)
        if fit is not None:
            figs.append(plotting.plot_rate_fit(series, tc, fit, outdir / "rate_fit.png").name)
        if len(series) >= 3:
            figs.append(plotting.plot_rate_limit(series, order, outdir / "rate_limit.png", result["rate_limit"]).name)
        if profiles:
            figs.append(plotting.plot_profiles(profiles, outdir / "profiles.png", reference).name)
    result["figures"] = figs
    result["errors"] = errors
    write_json_atomic(outdir / "analysis.json", _jsonable(result))
    return result


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x
