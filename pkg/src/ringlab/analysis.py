"""Diagnostics computed from simulation output.

Focusing factors, singularity-time and blowup-rate fits, the limits of
``L L_t`` and ``L^3 L_t``, rescaled profiles, ring classification and the
scaling of the power held inside the ring.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import DomainError, EquationSpec, Family, FieldState, NoPeakError, RadialGrid, RingLabError, format_float


class FitError(RingLabError):
    """A fit was requested on data that cannot support it."""


SERIES_COLUMNS = ("t", "dt", "inv_L", "r_max", "amplitude", "power", "hamiltonian", "regrid_count")


@dataclass
class BlowupSeries:
    """Time series of focusing observables, one row per sample."""

    family: Family
    sigma: float
    d: int
    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    L: np.ndarray = field(default_factory=lambda: np.empty(0))
    r_max: np.ndarray = field(default_factory=lambda: np.empty(0))
    power: np.ndarray = field(default_factory=lambda: np.empty(0))
    hamiltonian: np.ndarray = field(default_factory=lambda: np.empty(0))
    dt: np.ndarray = field(default_factory=lambda: np.empty(0))
    amplitude: np.ndarray = field(default_factory=lambda: np.empty(0))
    regrid_count: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    tc: float | None = None

    def __post_init__(self):
        self.family = Family(self.family)
        n = len(self.t)
        for name in ("t", "L", "r_max", "power", "hamiltonian", "dt", "amplitude"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.size == 0 and n:
                v = np.full(n, np.nan)
            setattr(self, name, v)
        rc = np.asarray(self.regrid_count, dtype=int)
        self.regrid_count = rc if rc.size else np.zeros(n, dtype=int)
        if any(getattr(self, k).size != n for k in ("L", "r_max", "power", "hamiltonian", "dt", "amplitude")):
            raise ValueError("all series columns must have the same length")
        if n > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("series times must be strictly increasing")
        if np.any(self.L <= 0):
            raise ValueError("L must be positive")

    def __len__(self) -> int:
        return self.t.size

    @property
    def inv_L(self) -> np.ndarray:
        return 1.0 / self.L

    @classmethod
    def from_arrays(cls, family, sigma, d, rows) -> "BlowupSeries":
        """Build from ``(t, dt, inv_L, r_max, amplitude, power, hamiltonian, regrid_count)`` rows."""
        a = np.asarray(rows, dtype=float).reshape(-1, len(SERIES_COLUMNS))
        return cls(
            family, sigma, d, t=a[:, 0], dt=a[:, 1], L=1.0 / a[:, 2], r_max=a[:, 3],
            amplitude=a[:, 4], power=a[:, 5], hamiltonian=a[:, 6], regrid_count=a[:, 7].astype(int),
        )

    def tail(self, decades: float) -> np.ndarray:
        """Indices of samples within ``decades`` of the final focusing level."""
        inv = self.inv_L
        return np.nonzero(inv >= inv[-1] * 10.0 ** (-decades))[0]

    def decades(self) -> float:
        inv = self.inv_L
        return float(np.log10(inv.max() / inv[0])) if inv.size else 0.0

    def write_csv(self, path) -> None:
        cols = [self.t, self.dt, self.inv_L, self.r_max, self.amplitude, self.power, self.hamiltonian]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for i in range(len(self)):
                w.writerow([format_float(c[i]) for c in cols] + [str(int(self.regrid_count[i]))])

    @classmethod
    def read_csv(cls, path, family, sigma, d) -> "BlowupSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != SERIES_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [[float(x) for x in row] for row in reader if row]
        return cls.from_arrays(family, sigma, d, rows)


@dataclass(frozen=True)
class FitResult:
    kappa: float
    p: float
    window: tuple[int, int]
    residual: float


@dataclass(frozen=True)
class RescaledProfile:
    rho: np.ndarray
    amplitude: np.ndarray
    level: float
    family: Family


# ---------------------------------------------------------------------------
# focusing factor


def focusing_factor(state: FieldState | float, spec: EquationSpec, reference=None) -> float:
    """Family-specific focusing scale from the sup-norm.

    NLS: ``(S0 / max|psi|)^sigma`` with ``S0`` taken from ``reference`` (an
    admissible profile or a number; 1 when omitted).  BNLS and BNLHE:
    ``max|psi|^(-sigma/2)``.  NLHE: ``max|u|^(-sigma)``.
    ``state`` may also be the amplitude itself.
    """
    amp = float(np.max(np.abs(state.values))) if isinstance(state, FieldState) else float(state)
    if not amp > 0:
        raise NoPeakError("focusing factor of a zero field")
    s = spec.sigma
    fam = spec.family
    if fam is Family.NLS:
        s0 = 1.0 if reference is None else float(getattr(reference, "s0", reference))
        return (s0 / amp) ** s
    if fam is Family.NLHE:
        return amp ** (-s)
    return amp ** (-s / 2)


def amplitude_exponent(spec: EquationSpec) -> float:
    """``e`` in ``L^e |psi|``: the rescaling that keeps the peak bounded."""
    return 2.0 / spec.sigma if spec.family.is_biharmonic else 1.0 / spec.sigma


# ---------------------------------------------------------------------------
# rate fits


def _default_window(series: BlowupSeries, decades: float = 2.0, settle: int = 5) -> np.ndarray:
    idx = series.tail(decades)
    rc = series.regrid_count
    keep = np.ones(len(series), dtype=bool)
    for j in np.nonzero(np.diff(rc) != 0)[0] + 1:
        keep[j : j + settle] = False
    sel = idx[keep[idx]]
    return sel if sel.size >= 5 else idx


def _linfit(x, y):
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    return coef, float(np.sqrt(np.mean(res**2)))


def estimate_tc(series: BlowupSeries, p_hint: float, window=None) -> float:
    """Singularity time from a straight-line fit of ``L^(1/p)`` against ``t``.

    A first pass uses ``p_hint``; the exponent is then refitted with
    :func:`fit_power_law` and the line fit repeated with it.
    """
    idx = _tail_indices(series, window)
    L = series.L[idx]
    t = series.t[idx]
    if idx.size < 10:
        raise FitError(f"need at least 10 tail samples, got {idx.size}")
    if np.any(np.diff(L) >= 0):
        raise FitError("L must be strictly decreasing over the fit window")

    def pass_(p):
        (slope, icept), _ = _linfit(t, L ** (1.0 / p))
        if not slope < 0:
            raise FitError("fitted L^(1/p) is not decreasing")
        return -icept / slope

    tc = pass_(p_hint)
    if not tc > t[-1]:
        raise FitError("extrapolated singularity time precedes the data")
    p = fit_power_law(series, tc, (int(idx[0]), int(idx[-1]) + 1)).p
    tc2 = pass_(p)
    return tc2 if tc2 > t[-1] else tc


def _tail_indices(series: BlowupSeries, window) -> np.ndarray:
    if window is None:
        idx = series.tail(1.0)
        if idx.size < 10:
            idx = np.arange(max(0, len(series) - 10), len(series))
        return idx
    a, b = window
    return np.arange(a, b)


def fit_power_law(series: BlowupSeries, tc: float, window=None) -> FitResult:
    """Regression of ``log L`` on ``log(tc - t)``: ``L ~ kappa (tc - t)^p``.

    The default window covers the final two decades of focusing with five
    samples dropped after every regrid.
    """
    idx = _default_window(series) if window is None else np.arange(*window)
    if idx.size < 3 or idx[0] < 0 or idx[-1] >= len(series):
        raise FitError("fit window must hold at least 3 samples inside the series")
    gap = tc - series.t[idx]
    if np.any(gap <= 0):
        raise FitError("fit window reaches past the singularity time")
    (p, icept), res = _linfit(np.log(gap), np.log(series.L[idx]))
    if not np.isfinite(res):
        raise FitError("non-finite fit residual")
    return FitResult(float(np.exp(icept)), float(p), (int(idx[0]), int(idx[-1]) + 1), res)


def rate_derivative(series: BlowupSeries, order: int) -> np.ndarray:
    """``L^(order-1) L_t`` at the interior samples (three-point nonuniform differences)."""
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    t, L = series.t, series.L
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    lt = (-h1 / (h0 * (h0 + h1)) * L[:-2] + (h1 - h0) / (h0 * h1) * L[1:-1] + h0 / (h1 * (h0 + h1)) * L[2:])
    return L[1:-1] ** (order - 1) * lt


def rate_limit(series: BlowupSeries, order: int, min_decades: float = 2.0) -> float:
    """Tail value of ``L L_t`` (order 2) or ``L^3 L_t`` (order 4).

    Median over the samples of the final decade of focusing.
    """
    if series.decades() < min_decades:
        raise FitError(f"series spans {series.decades():.2f} decades; {min_decades} required")
    q = rate_derivative(series, order)
    inv = series.inv_L[1:-1]
    sel = inv >= series.inv_L[-1] / 10.0
    if np.count_nonzero(sel) < 3:
        raise FitError("too few samples in the final decade")
    return float(np.median(q[sel]))


# ---------------------------------------------------------------------------
# profiles


def heat_width(tc: float, t: float, sigma: float) -> float:
    """Log-corrected spatial scale of peak-type heat blowup."""
    gap = tc - t
    if not 0 < gap < 1:
        raise DomainError("heat width needs 0 < tc - t < 1")
    return float(np.sqrt(2 * (2 + 1 / sigma) * gap * abs(np.log(gap))))


def heat_gap(lam: float, sigma: float) -> float:
    """``tc - t`` implied by the heat focusing factor, ``lam = sqrt(2 sigma (tc - t))``."""
    return lam * lam / (2.0 * sigma)


def rescale_profile(
    state: FieldState,
    grid: RadialGrid,
    spec: EquationSpec,
    L: float,
    r_max: float,
    width: float | None = None,
    span: float = 10.0,
    samples: int = 401,
) -> RescaledProfile:
    """``A(rho) = L^e |psi(r_max + w rho)|`` on a uniform ``rho`` grid over ``[-span, span]``.

    ``w`` defaults to ``L``; heat solutions pass the log-corrected width.
    On grids starting at the origin, negative radii are folded back since
    ``|psi|`` is even in ``r``.
    """
    if not L > 0:
        raise DomainError("L must be positive")
    state.check(grid)
    w = L if width is None else width
    rho = np.linspace(-span, span, samples)
    r = r_max + w * rho
    if grid.has_origin:
        r = np.abs(r)
    if r.min() < grid.nodes[0] - 1e-12 or r.max() > grid.nodes[-1]:
        raise DomainError("rho window leaves the computational domain")
    amp = np.abs(state.values)
    nodes = grid.nodes
    # spline through the nodes covering the window plus a margin
    lo = max(0, np.searchsorted(nodes, r.min()) - 4)
    hi = min(nodes.size, np.searchsorted(nodes, r.max()) + 4)
    x, y = nodes[lo:hi], amp[lo:hi]
    if grid.has_origin and lo == 0:
        x = np.concatenate([-x[:0:-1], x])
        y = np.concatenate([y[:0:-1], y])
    a = CubicSpline(x, y)(r) * L ** amplitude_exponent(spec)
    return RescaledProfile(rho, a, 1.0 / L, spec.family)


def rescaled_complex(
    state: FieldState, grid: RadialGrid, spec: EquationSpec, L: float, r_max: float, span: float = 12.0, step: float = 0.2
) -> tuple[np.ndarray, np.ndarray]:
    """Complex rescaled profile ``L^e psi(r_max + L xi)`` on a uniform ``xi`` grid over ``[0, span]``.

    The phase is rotated so the value at ``xi = 0`` is real and positive.
    A coarse ``step`` keeps grid-scale roughness out of high derivatives.
    """
    if not (L > 0 and step > 0):
        raise DomainError("L and step must be positive")
    state.check(grid)
    xi = np.arange(0.0, span + step / 2, step)
    r = r_max + L * xi
    if r[-1] > grid.nodes[-1]:
        raise DomainError("xi window leaves the computational domain")
    x, y = grid.nodes, np.asarray(state.values, dtype=complex)
    if grid.has_origin:
        x = np.concatenate([-x[:0:-1], x])
        y = np.concatenate([y[:0:-1], y])
    b = CubicSpline(x, y)(r) * L ** amplitude_exponent(spec)
    return xi, b * np.exp(-1j * np.angle(b[0]))


def compare_profiles(a: RescaledProfile, b: RescaledProfile, rho_max: float | None = None) -> float:
    """Sup-distance over the common ``rho`` range, ``b`` resampled linearly onto ``a``."""
    lo = max(a.rho[0], b.rho[0])
    hi = min(a.rho[-1], b.rho[-1])
    if rho_max is not None:
        lo, hi = max(lo, -rho_max), min(hi, rho_max)
    if not hi > lo:
        raise DomainError("profiles have no common rho range")
    sel = (a.rho >= lo) & (a.rho <= hi)
    return float(np.max(np.abs(a.amplitude[sel] - np.interp(a.rho[sel], b.rho, b.amplitude))))


def profile_from_function(func, family: Family, span: float = 10.0, samples: int = 401, level: float = np.inf):
    rho = np.linspace(-span, span, samples)
    return RescaledProfile(rho, np.asarray(func(rho), dtype=float), level, Family(family))


def admissible_rescaled(profile, span: float = 10.0, samples: int = 401) -> RescaledProfile:
    """The admissible ``|S|`` as a rescaled profile, mirrored to negative ``rho``."""
    xi = profile.xi
    amp = profile.amplitude
    f = CubicSpline(np.concatenate([-xi[:0:-1], xi]), np.concatenate([amp[:0:-1], amp]))
    if span > xi[-1]:
        raise DomainError("span exceeds the profile's computed range")
    return profile_from_function(f, Family.NLS, span, samples)


# ---------------------------------------------------------------------------
# ring classification and power scaling


@dataclass(frozen=True)
class RingClass:
    alpha: float
    regime: str
    p: float | None
    expanding_forbidden: bool


def classify_ring(sigma: float, d: int, family: Family | str = Family.NLS) -> RingClass:
    """Shrinkage exponent and regime of collapsing ring solutions.

    ``alpha = (2 - sigma)/(sigma (d - 1))`` for NLS and
    ``(4 - sigma)/(sigma (d - 1))`` for BNLS; ``r_max ~ r0 L^alpha``.
    Rings shrink for ``0 < alpha < 1``, collapse at equal rate for
    ``alpha = 1`` and stand for ``alpha <= 0``; a negative ``alpha`` would
    mean an expanding ring, which cannot be singular.
    """
    family = Family(family)
    if family not in (Family.NLS, Family.BNLS):
        raise ValueError("ring classification is defined for NLS and BNLS")
    if d <= 1:
        raise DomainError("ring classification needs d > 1")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    crit = 2.0 if family is Family.NLS else 4.0
    alpha = (crit - sigma) / (sigma * (d - 1))
    base = 1.0 if family is Family.NLS else 3.0
    # small tolerance so that sigma = 2 (resp. 4) lands on alpha = 0 exactly
    if abs(alpha) < 1e-14:
        alpha = 0.0
    if alpha > 1:
        return RingClass(alpha, "subcritical", None, False)
    if alpha == 1:
        return RingClass(alpha, "equal_rate", 1.0 / (base + 1.0), False)
    if alpha > 0:
        return RingClass(alpha, "shrinking", 1.0 / (base + alpha), False)
    return RingClass(alpha, "standing", 0.5 if family is Family.NLS else 0.25, alpha < 0)


def ring_power(state: FieldState, grid: RadialGrid, L: float, r_max: float, rho_c: float = 5.0) -> float:
    """``int |psi|^2 r^(d-1) dr`` over ``|r - r_max| < rho_c L``, with fractional end cells."""
    lo, hi = r_max - rho_c * L, r_max + rho_c * L
    r = grid.nodes
    if lo < r[0] or hi > r[-1]:
        raise DomainError("ring window leaves the computational domain")
    # dense piecewise-linear quadrature of |psi|^2 r^(d-1) inside the window
    nodes = r[(r > lo) & (r < hi)]
    x = np.concatenate([[lo], nodes, [hi]])
    amp2 = np.abs(state.values) ** 2
    g = np.interp(x, r, amp2) * x ** (grid.d - 1)
    return float(np.trapezoid(g, x))


def ring_power_scaling(snapshots, rho_c: float = 5.0, sigma: float | None = None, d: int | None = None) -> float:
    """Exponent ``gamma`` of ``P(L) ~ L^gamma`` for the power inside the ring.

    ``snapshots`` holds ``(state, grid, L, r_max)`` tuples.
    """
    if len(snapshots) < 3:
        raise FitError("need at least 3 snapshots")
    Ls = np.array([s[2] for s in snapshots], dtype=float)
    # decade snapshots land slightly past each level, hence the small slack
    if np.log10(Ls.max() / Ls.min()) < 2 - 0.01:
        raise FitError("snapshots must span at least 2 decades of L")
    P = np.array([ring_power(st, g, L, rm, rho_c) for st, g, L, rm in snapshots])
    (gamma, _), _ = _linfit(np.log(Ls), np.log(P))
    return float(gamma)
