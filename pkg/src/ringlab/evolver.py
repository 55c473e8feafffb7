"""Time integration of focusing solutions with static regridding.

The linear part of every family is built from finite-volume operators that
are self-adjoint in the grid's weighted inner product, so Crank-Nicolson is
exactly unitary for the Schrodinger families.  The nonlinearity is taken at
the time midpoint and iterated to self-consistency.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import analysis
from .grid import (
    BandedOperator,
    DomainError,
    EquationSpec,
    FieldState,
    RadialGrid,
    RingLabError,
    locate_peak,
    radial_biharmonic,
    radial_laplacian,
    stiffness_matrix,
    weighted_power,
)
from .regrid import RegridPolicy, equidistribute, monitor_function, needs_regrid, regrid


class StepFailure(RingLabError):
    """A time step could not be completed; the driver halves ``dt``."""


class ICKind(str, enum.Enum):
    GAUSSIAN_1D = "gaussian_1d"
    GAUSSIAN_RING = "gaussian_ring"
    SUPER_GAUSSIAN = "super_gaussian"
    VORTEX_RING = "vortex_ring"
    PSI_Q_EXPANDING = "psi_q_expanding"


@dataclass(frozen=True)
class InitialCondition:
    """Closed-form initial data.

    gaussian_1d      ``A exp(-w x^2)``
    gaussian_ring    ``A exp(-w (r - r0)^2)``
    super_gaussian   ``A exp(-w r^4)``
    vortex_ring      ``A tanh(c r^2) exp(-w (r - r0)^2)``
    psi_q_expanding  ``(1+s)^(1/2s) sech^(1/s)(s (r - r0)) exp(-i a r^2 - i (1 - a)(r - r0)^2)``
    """

    kind: ICKind
    amplitude: float = 2.0
    width: float = 2.0
    radius: float = 5.0
    core: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ICKind(self.kind))
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not self.core > 0:
            raise ValueError("core must be positive")


def expanding_alpha(sigma: float, d: int) -> float:
    return (2.0 - sigma) / (sigma * (d - 1))


def evaluate_ic(ic: InitialCondition, grid: RadialGrid, spec: EquationSpec) -> FieldState:
    r = grid.nodes
    k = ic.kind
    if k is ICKind.VORTEX_RING and spec.m == 0:
        raise ValueError("vortex_ring needs a nonzero vortex charge m")
    if k is ICKind.GAUSSIAN_1D:
        v = ic.amplitude * np.exp(-ic.width * r**2)
    elif k is ICKind.GAUSSIAN_RING:
        v = ic.amplitude * np.exp(-ic.width * (r - ic.radius) ** 2)
    elif k is ICKind.SUPER_GAUSSIAN:
        v = ic.amplitude * np.exp(-ic.width * r**4)
    elif k is ICKind.VORTEX_RING:
        v = ic.amplitude * np.tanh(ic.core * r**2) * np.exp(-ic.width * (r - ic.radius) ** 2)
    else:
        if spec.family.is_heat:
            raise ValueError("psi_q_expanding is complex and needs a Schrodinger family")
        if spec.d < 2:
            raise ValueError("psi_q_expanding needs d >= 2")
        s = spec.sigma
        a = expanding_alpha(s, spec.d)
        x = s * (r - ic.radius)
        # sech^(1/s) written to avoid overflow of cosh far from the ring
        sech = np.exp(-np.abs(x)) * 2.0 / (1.0 + np.exp(-2.0 * np.abs(x)))
        v = (1 + s) ** (1 / (2 * s)) * sech ** (1 / s) * np.exp(-1j * a * r**2 - 1j * (1 - a) * (r - ic.radius) ** 2)
    return FieldState(v, spec)


# ---------------------------------------------------------------------------
# right-hand side


def nonlinearity(values: np.ndarray, sigma: float) -> np.ndarray:
    return np.abs(values) ** (2 * sigma) * values


def spatial_operator(spec: EquationSpec, field: FieldState, grid: RadialGrid) -> FieldState:
    """Right-hand side ``f`` of ``u_t = f(u)``, using the Fornberg operators."""
    if field.spec.family is not spec.family:
        raise DomainError("field and equation belong to different families")
    field.check(grid)
    u = field.values
    fam = spec.family
    if fam.is_biharmonic:
        lin = -radial_biharmonic(field, grid).values
    else:
        lin = radial_laplacian(field, grid).values
    if spec.m:
        r = grid.nodes
        pos = r > 0
        pot = np.zeros_like(u)
        pot[pos] = spec.m**2 / r[pos] ** 2 * u[pos]
        lin = lin - pot if not fam.is_biharmonic else lin + pot
    out = lin + nonlinearity(u, spec.sigma)
    if not fam.is_heat:
        out = 1j * out
    return field.with_values(out)


# ---------------------------------------------------------------------------
# Crank-Nicolson system


class LinearPart:
    """Implicit linear operator of a family on a fixed grid.

    ``A = W^-1 K - m^2/r^2`` on the unknown nodes (Dirichlet at ``r_outer``
    and, for vortices, at the origin); the family operator is ``A`` or
    ``-A^2``, and ``u_t = c (op u + N(u))`` with ``c = i`` for Schrodinger
    families.
    """

    def __init__(self, spec: EquationSpec, grid: RadialGrid):
        self.spec = spec
        self.grid = grid
        n = len(grid)
        free = np.ones(n, dtype=bool)
        free[-1] = False
        if spec.m and grid.has_origin:
            free[0] = False
        self.free = free
        idx = np.nonzero(free)[0]
        self.idx = idx
        # contiguous unknowns: slicing the band storage drops the boundary couplings
        k = stiffness_matrix(grid)
        lap = BandedOperator(1, 1, k.bands[:, idx[0] : idx[-1] + 1].copy()).row_scale(1.0 / grid.weights[idx])
        if spec.m:
            lap.bands[1] -= spec.m**2 / grid.nodes[idx] ** 2
        self.op = lap.compose(lap).scale(-1.0) if spec.family.is_biharmonic else lap
        self.c = 1.0 if spec.family.is_heat else 1j
        self._dt = None
        self._lhs = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        out[self.idx] = self.op @ u[self.idx]
        return out

    def lhs(self, dt: float) -> np.ndarray:
        """Banded storage of ``I - (dt/2) c op`` for ``solve_banded``."""
        if dt != self._dt:
            op = self.op
            bands = (-0.5 * dt * self.c) * op.bands
            bands = bands.astype(complex if self.c == 1j else float)
            bands[op.upper] += 1.0
            self._lhs, self._dt = bands, dt
        return self._lhs

    def solve(self, dt: float, rhs: np.ndarray) -> np.ndarray:
        op = self.op
        out = np.zeros_like(rhs)
        try:
            out[self.idx] = solve_banded((op.lower, op.upper), self.lhs(dt), rhs[self.idx], check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise StepFailure(f"banded solve failed: {exc}") from exc
        return out


def step_predictor_corrector_cn(
    state: FieldState,
    grid: RadialGrid,
    dt: float,
    spec: EquationSpec | None = None,
    iters: int = 3,
    tol: float = 1e-10,
    *,
    linear: LinearPart | None = None,
    nonlinear: bool = True,
    fail_tol: float = 1e-5,
) -> FieldState:
    """One Crank-Nicolson step with the nonlinearity at the midpoint.

    Predictor uses ``N(u^n)``; each corrector re-evaluates ``N`` at
    ``(u^k + u^n)/2``.  Iteration stops when the max-norm change relative to
    ``max|u^n|`` drops below ``tol``; if after ``iters`` correctors the change
    still exceeds ``fail_tol`` a :class:`StepFailure` is raised.
    ``nonlinear=False`` drops the nonlinear term (a test hook).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    spec = state.spec if spec is None else spec
    lin = linear if linear is not None else LinearPart(spec, grid)
    u0 = state.values
    c = lin.c
    base = u0 + (0.5 * dt * c) * lin.apply(u0)
    if not nonlinear:
        return state.with_values(lin.solve(dt, base), t=state.t + dt, dt=dt)
    scale = max(float(np.max(np.abs(u0))), 1e-300)
    sig = spec.sigma
    u = lin.solve(dt, base + (dt * c) * nonlinearity(u0, sig))
    change = np.inf
    for _ in range(iters):
        mid = 0.5 * (u + u0)
        new = lin.solve(dt, base + (dt * c) * nonlinearity(mid, sig))
        change = float(np.max(np.abs(new - u))) / scale
        u = new
        if change < tol:
            break
    if not np.isfinite(change) or change > fail_tol:
        raise StepFailure(f"corrector change {change:.3e} after {iters} iterations")
    return state.with_values(u, t=state.t + dt, dt=dt)


# ---------------------------------------------------------------------------
# observables


def hamiltonian(state: FieldState, grid: RadialGrid) -> float:
    """``int (|D u|^2 - |u|^(2s+2)/(s+1)) r^(d-1) dr`` with the finite-volume operators.

    ``D`` is the gradient for second-order families and the Laplacian for
    biharmonic ones; the vortex potential adds ``m^2/r^2 |u|^2``.
    """
    u = state.values
    spec = state.spec
    s = spec.sigma
    w = grid.weights
    r = grid.nodes
    k = stiffness_matrix(grid)
    if spec.family.is_biharmonic:
        lap = (k @ u) / w
        if spec.m:
            pos = r > 0
            lap[pos] -= spec.m**2 / r[pos] ** 2 * u[pos]
        kin = float(np.dot(w, np.abs(lap) ** 2))
    else:
        kin = -float(np.real(np.vdot(u, k @ u)))
        if spec.m:
            pos = r > 0
            kin += float(np.dot(w[pos], spec.m**2 / r[pos] ** 2 * np.abs(u[pos]) ** 2))
    pot = float(np.dot(w, np.abs(u) ** (2 * s + 2))) / (s + 1)
    return kin - pot


# ---------------------------------------------------------------------------
# driver


class Termination(str, enum.Enum):
    FOCUS_TARGET_REACHED = "focus_target_reached"
    DT_UNDERFLOW = "dt_underflow"
    DIVERGED = "diverged"
    MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class SimulationConfig:
    spec: EquationSpec
    ic: InitialCondition
    r_outer: float = 20.0
    n_points: int = 1600
    dt0: float = 1e-4
    focus_target: float = 1e4
    corrector_iters: int = 3
    corrector_tol: float = 1e-10
    corrector_fail_tol: float = 1e-5
    regrid: RegridPolicy = field(default_factory=lambda: RegridPolicy(min_points_across_peak=64))
    sample_growth: float = 0.01
    max_steps: int = 2_000_000
    max_halvings: int = 30
    s0: float | None = None
    power_drift_threshold: float = 1e-8
    snapshot_levels: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.focus_target > 1:
            raise ValueError("focus_target must exceed 1")
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if self.n_points < 64:
            raise ValueError("n_points must be at least 64")
        if not self.r_outer > 0:
            raise ValueError("r_outer must be positive")
        if not self.sample_growth > 0:
            raise ValueError("sample_growth must be positive")
        if self.corrector_iters < 0:
            raise ValueError("corrector_iters must be non-negative")

    @property
    def step_exponent(self) -> int:
        return self.spec.family.rate_order


@dataclass
class Snapshot:
    level: float
    state: FieldState
    grid: RadialGrid
    L: float
    r_max: float


@dataclass
class SimulationResult:
    series: analysis.BlowupSeries
    snapshots: list[Snapshot]
    termination: Termination
    grids: list[RadialGrid] = field(default_factory=list)
    final_state: FieldState | None = None
    final_grid: RadialGrid | None = None
    steps: int = 0
    regrids: int = 0
    halvings: int = 0
    max_power_drift: float = 0.0
    power_drift_exceeded: bool = False
    wall_time: float = 0.0


def initial_grid(cfg: SimulationConfig) -> tuple[FieldState, RadialGrid]:
    """IC on a grid already adapted to it (the IC is re-evaluated, not interpolated)."""
    d = cfg.spec.d
    g = RadialGrid.uniform(cfg.r_outer, cfg.n_points, d)
    st = evaluate_ic(cfg.ic, g, cfg.spec)
    x, m, window = monitor_function(st, g, cfg.regrid)
    g = RadialGrid(equidistribute(m, x, cfg.n_points, cfg.regrid, window).nodes, d)
    return evaluate_ic(cfg.ic, g, cfg.spec), g


def _decade_levels(inv0: float, target: float, extra) -> list[float]:
    levels = {10.0**k for k in range(1, 40) if inv0 < 10.0**k <= target * (1 + 1e-12)}
    levels.update(x for x in extra if x > inv0)
    return sorted(levels)


def run_simulation(cfg: SimulationConfig, progress=None) -> SimulationResult:
    """Advance the configured problem until it focuses to ``cfg.focus_target``.

    The step follows ``dt = dt0 min(1, (L/L0)^s)`` with ``s`` the rate order of
    the family.  Samples are recorded whenever ``log(1/L)`` has moved by
    ``sample_growth`` since the last sample, and snapshots when ``1/L``
    first crosses each decade.
    """
    wall = time.perf_counter()
    spec = cfg.spec
    state, grid = initial_grid(cfg)
    ref = cfg.s0

    def observe(st, g):
        rm, amp = locate_peak(st, g)
        return rm, amp, analysis.focusing_factor(amp, spec, ref)

    rm, amp, L = observe(state, grid)
    L0 = L
    s = cfg.step_exponent
    lin = LinearPart(spec, grid)
    rows: list[tuple] = []
    regrids = 0
    steps_since_regrid = 0
    halvings = 0
    grids = [grid]
    levels = _decade_levels(1.0 / L, cfg.focus_target, cfg.snapshot_levels)
    snapshots: list[Snapshot] = []
    # relative power drift between consecutive regrids (transfers excluded)
    p_ref = weighted_power(state, grid)
    max_drift = 0.0

    def record(st, g, rm, amp, L):
        rows.append((st.t, st.dt, 1.0 / L, rm, amp, weighted_power(st, g), hamiltonian(st, g), regrids))

    record(state, grid, rm, amp, L)
    last_log = math.log(1.0 / L)
    log_step = math.log1p(cfg.sample_growth)
    termination = Termination.MAX_STEPS
    steps = 0
    while steps < cfg.max_steps:
        dt = cfg.dt0 * min(1.0, (L / L0) ** s)
        tries = 0
        while True:
            try:
                new = step_predictor_corrector_cn(
                    state, grid, dt, spec, cfg.corrector_iters, cfg.corrector_tol,
                    linear=lin, fail_tol=cfg.corrector_fail_tol,
                )
                new_amp = float(np.max(np.abs(new.values)))
                if not np.isfinite(new_amp):
                    raise StepFailure("non-finite field")
                break
            except StepFailure:
                tries += 1
                halvings += 1
                dt *= 0.5
                if tries > cfg.max_halvings or state.t + dt == state.t:
                    termination = Termination.DT_UNDERFLOW
                    break
        if termination is Termination.DT_UNDERFLOW:
            break
        steps += 1
        if new_amp > 1e3 * amp:
            termination = Termination.DIVERGED
            state = new
            break
        state = new
        steps_since_regrid += 1
        if steps_since_regrid >= cfg.regrid.min_steps_between and needs_regrid(state, grid, cfg.regrid):
            p_old = weighted_power(state, grid)
            state, grid = regrid(state, grid, cfg.regrid)
            lin = LinearPart(spec, grid)
            grids.append(grid)
            regrids += 1
            steps_since_regrid = 0
            if not spec.family.is_heat:
                max_drift = max(max_drift, abs(p_old - p_ref) / p_ref)
            p_ref = weighted_power(state, grid)
        rm, amp, L = observe(state, grid)
        inv = 1.0 / L
        if abs(math.log(inv) - last_log) >= log_step:
            record(state, grid, rm, amp, L)
            last_log = math.log(inv)
            if progress is not None:
                progress(state.t, inv, rm, regrids)
        while levels and inv >= levels[0]:
            snapshots.append(Snapshot(levels.pop(0), state, grid, L, rm))
        if inv >= cfg.focus_target:
            if rows[-1][0] != state.t:
                record(state, grid, rm, amp, L)
            termination = Termination.FOCUS_TARGET_REACHED
            break
    if rows[-1][0] != state.t and termination is not Termination.DIVERGED:
        rm, amp, L = observe(state, grid)
        record(state, grid, rm, amp, L)
    if not spec.family.is_heat:
        max_drift = max(max_drift, abs(weighted_power(state, grid) - p_ref) / p_ref)
    series = analysis.BlowupSeries.from_arrays(spec.family, spec.sigma, spec.d, rows)
    return SimulationResult(
        series=series,
        snapshots=snapshots,
        termination=termination,
        grids=grids,
        final_state=state,
        final_grid=grid,
        steps=steps,
        regrids=regrids,
        halvings=halvings,
        max_power_drift=max_drift,
        power_drift_exceeded=max_drift > cfg.power_drift_threshold,
        wall_time=time.perf_counter() - wall,
    )
