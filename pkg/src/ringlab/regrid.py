"""Static grid redistribution.

The field is advanced on a fixed grid until the peak is under-resolved; a new
grid with the same number of nodes is then built by equidistributing a
monitor function, and the field is interpolated onto it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DomainError, FieldState, RadialGrid, derivative_operator, fornberg_weights, locate_peak


@dataclass(frozen=True)
class RegridPolicy:
    min_points_across_peak: int = 12
    # shares of the node budget given to the uniform floor, the solution
    # gradient and the log-spaced core around the peak
    floor_share: float = 0.25
    gradient_share: float = 0.25
    core_share: float = 0.5
    max_fraction_in_peak: float = 0.6
    peak_window: float = 10.0
    interpolation_degree: int = 3
    min_steps_between: int = 10

    def __post_init__(self):
        if not 0 < self.max_fraction_in_peak < 1:
            raise ValueError("max_fraction_in_peak must lie in (0, 1)")
        if self.min_points_across_peak < 8:
            raise ValueError("min_points_across_peak must be >= 8")
        shares = (self.floor_share, self.gradient_share, self.core_share)
        if min(shares) < 0 or self.floor_share <= 0:
            raise ValueError("monitor shares must be non-negative with a positive floor")


def half_width(values, grid: RadialGrid, peak: tuple[float, float] | None = None) -> float:
    """Distance from the peak to the nearest point where ``|f|`` halves.

    Returns ``inf`` when the maximum sits on the outer boundary or ``|f|``
    never drops to half its peak value.
    """
    a = np.abs(np.asarray(values))
    r = grid.nodes
    rmax, amp = locate_peak(a, grid) if peak is None else peak
    i = int(np.argmax(a))
    if i == a.size - 1:
        return np.inf
    half = 0.5 * amp
    best = np.inf
    right = np.nonzero(a[i:] < half)[0]
    if right.size:
        j = i + right[0]
        x = r[j - 1] + (r[j] - r[j - 1]) * (a[j - 1] - half) / (a[j - 1] - a[j])
        best = x - rmax
    left = np.nonzero(a[: i + 1] < half)[0]
    if left.size:
        j = left[-1]
        x = r[j] + (r[j + 1] - r[j]) * (half - a[j]) / (a[j + 1] - a[j])
        best = min(best, rmax - x)
    return float(best) if best > 0 else float(np.min(grid.spacing))


def needs_regrid(state: FieldState, grid: RadialGrid, policy: RegridPolicy = RegridPolicy()) -> bool:
    """True when fewer than ``min_points_across_peak`` nodes sit within one half-width of the peak."""
    a = np.abs(state.values)
    if not a.max() > 0:
        return False
    peak = locate_peak(a, grid)
    hw = half_width(a, grid, peak)
    if not np.isfinite(hw):
        return False
    inside = np.count_nonzero(np.abs(grid.nodes - peak[0]) <= hw)
    return inside < policy.min_points_across_peak


# ---------------------------------------------------------------------------
# equidistribution


def _cumulative(x, m):
    """Exact running integral of the piecewise-linear interpolant of ``m``."""
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (m[1:] + m[:-1]))])


def _invert(x, m, cum, targets):
    """Positions where the piecewise-quadratic cumulative hits ``targets``."""
    j = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, x.size - 2)
    h = x[j + 1] - x[j]
    m0 = m[j]
    slope = (m[j + 1] - m0) / h
    rem = targets - cum[j]
    # solve m0 s + slope s^2 / 2 = rem for s in [0, h]
    disc = np.sqrt(np.maximum(m0 * m0 + 2 * slope * rem, 0.0))
    denom = m0 + disc
    s = np.where(denom > 0, 2 * rem / np.where(denom > 0, denom, 1.0), 0.0)
    return x[j] + np.clip(s, 0.0, h)


def _equidistribute_raw(x, m, n):
    cum = _cumulative(x, m)
    targets = cum[-1] * np.arange(n) / (n - 1)
    nodes = _invert(x, m, cum, targets)
    nodes[0], nodes[-1] = x[0], x[-1]
    return nodes


def equidistribute(
    monitor,
    grid: RadialGrid | np.ndarray,
    n: int,
    policy: RegridPolicy = RegridPolicy(),
    window: tuple[float, float] | str | None = "auto",
) -> RadialGrid:
    """Nodes carrying equal integrals of the piecewise-linear monitor.

    ``monitor`` is sampled on ``grid`` (a :class:`RadialGrid` or node array).
    When more than ``floor(cap * (n - 2))`` interior nodes would fall inside
    the peak window, the monitor is scaled down inside the window until
    exactly that many do.  ``window="auto"`` centers it on the monitor's
    maximum with ``policy.peak_window`` half-widths of the monitor's excess
    over its minimum on each side; ``None`` disables the cap.  Endpoints are
    preserved.
    """
    x = grid.nodes if isinstance(grid, RadialGrid) else np.asarray(grid, dtype=float)
    d = grid.d if isinstance(grid, RadialGrid) else 1
    m = np.asarray(monitor, dtype=float)
    if m.shape != x.shape:
        raise ValueError("monitor must be sampled on the grid nodes")
    if not np.all(m > 0) or not np.all(np.isfinite(m)):
        raise DomainError("monitor must be positive and finite")
    if n < 9:
        raise ValueError("need at least 9 nodes")
    nodes = _equidistribute_raw(x, m, n)
    if isinstance(window, str):
        if window != "auto":
            raise ValueError("window must be a (lo, hi) pair, 'auto' or None")
        window = monitor_window(x, m, policy)
    if window is not None:
        lo, hi = window
        cap = int(np.floor(policy.max_fraction_in_peak * (n - 2)))

        # the scaled monitor ramps across one sampling interval at each edge
        inside = (x >= lo) & (x <= hi)

        def count(scale):
            nd = _equidistribute_raw(x, np.where(inside, m * scale, m), n)
            return np.count_nonzero((nd[1:-1] >= lo) & (nd[1:-1] <= hi)), nd

        if count(1.0)[0] > cap:
            a, b = -60.0, 0.0  # log2 of the scale factor, count(a) <= cap < count(b)
            for _ in range(80):
                mid = 0.5 * (a + b)
                if count(2.0**mid)[0] <= cap:
                    a = mid
                else:
                    b = mid
            nodes = count(2.0**a)[1]
    return RadialGrid(nodes, d)


def monitor_window(x, m, policy: RegridPolicy = RegridPolicy()) -> tuple[float, float] | None:
    """Peak window of a sampled monitor, or ``None`` when it has no interior peak."""
    excess = m - m.min()
    i = int(np.argmax(excess))
    if not excess[i] > 0:
        return None
    half = 0.5 * excess[i]
    right = np.nonzero(excess[i:] < half)[0]
    left = np.nonzero(excess[: i + 1] < half)[0]
    w = []
    if right.size:
        j = i + right[0]
        w.append(x[j - 1] + (x[j] - x[j - 1]) * (excess[j - 1] - half) / (excess[j - 1] - excess[j]) - x[i])
    if left.size:
        j = left[-1]
        w.append(x[i] - x[j] - (x[j + 1] - x[j]) * (half - excess[j]) / (excess[j + 1] - excess[j]))
    if not w:
        return None
    hw = min(w)
    return (x[i] - policy.peak_window * hw, x[i] + policy.peak_window * hw)


def scaled_cell_integrals(x, m, nodes):
    """Integral of the piecewise-linear monitor over each cell of ``nodes``."""
    cum = _cumulative(x, m)
    xs = np.asarray(nodes)
    j = np.clip(np.searchsorted(x, xs, side="right") - 1, 0, x.size - 2)
    s = xs - x[j]
    h = x[j + 1] - x[j]
    slope = (m[j + 1] - m[j]) / h
    c = cum[j] + m[j] * s + 0.5 * slope * s * s
    return np.diff(c)


def monitor_function(state: FieldState, grid: RadialGrid, policy: RegridPolicy = RegridPolicy(), samples: int | None = None):
    """Composite monitor sampled on a fine auxiliary grid.

    Three normalized parts, each owning a share of the node budget:
    a uniform floor, the relative gradient ``|f_r| / max|f|`` (resolves the
    peak flanks and outgoing waves), and ``1/sqrt(w^2 + (r - r_max)^2)``
    with ``w`` the peak half-width, which keeps a constant relative
    resolution through the transition region between core and exterior.
    Returns ``(x, m, window)``.
    """
    r = grid.nodes
    f = state.values
    a = np.abs(f)
    amp_peak = locate_peak(a, grid)
    rmax, amp = amp_peak
    hw = half_width(a, grid, amp_peak)
    span = r[-1] - r[0]
    n = samples or 4 * len(grid)
    if np.isfinite(hw):
        u = np.linspace(np.arcsinh((r[0] - rmax) / hw), np.arcsinh((r[-1] - rmax) / hw), n)
        extra = rmax + hw * np.sinh(u)
    else:
        extra = np.linspace(r[0], r[-1], n)
    x = np.union1d(r, np.clip(extra, r[0], r[-1]))

    parity = state.spec.parity if grid.has_origin else None
    grad = np.abs(derivative_operator(grid, 1, 5, parity) @ f) / amp
    g = np.interp(x, r, grad)
    parts = [np.full(x.size, 1.0 / span)]
    shares = [policy.floor_share]
    gi = _cumulative(x, g)[-1]
    if policy.gradient_share > 0 and gi > 0:
        parts.append(g / gi)
        shares.append(policy.gradient_share)
    if policy.core_share > 0 and np.isfinite(hw):
        core = 1.0 / np.hypot(hw, x - rmax)
        parts.append(core / _cumulative(x, core)[-1])
        shares.append(policy.core_share)
    shares = np.asarray(shares) / np.sum(shares)
    m = sum(s * p for s, p in zip(shares, parts))
    window = None
    if np.isfinite(hw):
        w = policy.peak_window * hw
        window = (rmax - w, rmax + w)
    return x, m, window


def regrid(state: FieldState, grid: RadialGrid, policy: RegridPolicy = RegridPolicy()):
    """New equidistributed grid with the field transferred onto it."""
    x, m, window = monitor_function(state, grid, policy)
    new = equidistribute(m, x, len(grid), policy, window)
    new = RadialGrid(new.nodes, grid.d)
    return transfer_field(state, grid, new, policy.interpolation_degree), new


# ---------------------------------------------------------------------------
# interpolation


def transfer_field(field: FieldState, old: RadialGrid, new: RadialGrid, degree: int = 3) -> FieldState:
    """Piecewise-polynomial interpolation with a local range clamp.

    Each new node uses the ``degree + 1`` old nodes around its bracketing
    interval.  Real and imaginary parts are clamped to the range of their
    stencil values and the modulus to the stencil's largest modulus, so no
    new extremum is created.
    """
    field.check(old)
    x = new.nodes
    r = old.nodes
    if x[0] < r[0] - 1e-14 * max(1.0, abs(r[0])) or x[-1] > r[-1] * (1 + 1e-14) + 1e-300:
        raise DomainError("transfer would extrapolate outside the old grid")
    x = np.clip(x, r[0], r[-1])
    w = degree + 1
    if len(old) < w:
        raise ValueError("old grid too small for the interpolation degree")
    j = np.clip(np.searchsorted(r, x, side="right") - 1, 0, r.size - 2)
    start = np.clip(j - (w // 2 - 1) if w % 2 == 0 else j - w // 2, 0, r.size - w)
    idx = start[:, None] + np.arange(w)[None, :]
    wts = fornberg_weights(x, r[idx], 0)
    f = field.values[idx]
    out = np.sum(wts * f, axis=1)

    def clamp(v, part):
        return np.clip(v, part.min(axis=1), part.max(axis=1))

    if np.iscomplexobj(out):
        out = clamp(out.real, f.real) + 1j * clamp(out.imag, f.imag)
        cap = np.abs(f).max(axis=1)
        mod = np.abs(out)
        over = mod > cap
        out[over] *= cap[over] / mod[over]
    else:
        out = clamp(out, f)
    # exact hits keep the old value bit-for-bit
    hit = r[j] == x
    out[hit] = field.values[j[hit]]
    return field.with_values(out)
