"""Radial grids, nonuniform finite-difference operators and weighted norms.

Every field in the package lives on a :class:`RadialGrid`: a strictly increasing
set of radii on ``[r_0, r_outer]`` together with the spatial dimension ``d``.
Derivatives use local polynomial (Fornberg) weights; the radial origin is
handled by ghost reflection with a parity chosen from the vortex charge.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class RingLabError(Exception):
    """Base class for all errors raised by the package."""


class GridSizeError(RingLabError):
    pass


class DomainError(RingLabError):
    pass


class NoPeakError(RingLabError):
    pass


class Family(str, enum.Enum):
    NLS = "NLS"
    BNLS = "BNLS"
    NLHE = "NLHE"
    BNLHE = "BNLHE"

    @property
    def is_heat(self) -> bool:
        return self in (Family.NLHE, Family.BNLHE)

    @property
    def is_biharmonic(self) -> bool:
        return self in (Family.BNLS, Family.BNLHE)

    @property
    def rate_order(self) -> int:
        """Exponent ``s`` of the natural time scale ``dt ~ L**s``."""
        return 4 if self.is_biharmonic else 2


@dataclass(frozen=True)
class EquationSpec:
    family: Family
    d: int = 1
    sigma: float = 3.0
    m: int = 0
    one_dimensional: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.d < 1:
            raise DomainError("d must be >= 1")
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if self.m != 0 and self.family is not Family.NLS:
            raise DomainError("vortex charge m is only defined for the NLS family")
        if self.one_dimensional and self.d != 1:
            raise DomainError("one_dimensional equations require d = 1")

    @property
    def parity(self) -> int:
        """Reflection parity of the field across r = 0 (+1 even, -1 odd)."""
        return -1 if self.m % 2 else 1


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    d: int = 1

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 9:
            raise GridSizeError(f"a radial grid needs at least 9 nodes, got {r.size}")
        if r[0] < 0:
            raise DomainError("first node must be >= 0")
        if np.any(np.diff(r) <= 0):
            raise DomainError("nodes must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @classmethod
    def uniform(cls, r_outer: float, n: int, d: int = 1, r_inner: float = 0.0) -> "RadialGrid":
        return cls(np.linspace(r_inner, r_outer, n), d)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def r_outer(self) -> float:
        return float(self.nodes[-1])

    @property
    def has_origin(self) -> bool:
        return self.nodes[0] == 0.0

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def faces(self) -> np.ndarray:
        """Dual-cell boundaries: the endpoints and all cell midpoints."""
        r = self.nodes
        return np.concatenate([[r[0]], 0.5 * (r[1:] + r[:-1]), [r[-1]]])

    @cached_property
    def weights(self) -> np.ndarray:
        """Dual-cell measures ``int r**(d-1) dr`` between neighbouring faces.

        Strictly positive (also at ``r = 0``), summing to the measure of
        ``[r_0, r_outer]``, and second-order accurate on smooth grids.
        """
        f = self.faces**self.d / self.d
        return np.diff(f)

    def measure(self) -> float:
        return (self.nodes[-1] ** self.d - self.nodes[0] ** self.d) / self.d


@dataclass(eq=False)
class FieldState:
    values: np.ndarray
    spec: EquationSpec
    t: float = 0.0
    dt: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if self.spec.family.is_heat:
            if np.iscomplexobj(v):
                if np.any(v.imag != 0):
                    raise DomainError("heat-family fields must be real")
                v = v.real
            v = v.astype(float)
        else:
            v = v.astype(complex)
        self.values = v

    def with_values(self, values, t=None, dt=None) -> "FieldState":
        return FieldState(values, self.spec, self.t if t is None else t, self.dt if dt is None else dt)

    def check(self, grid: RadialGrid) -> None:
        if self.values.shape != (len(grid),):
            raise GridSizeError(
                f"field has {self.values.size} values but the grid has {len(grid)} nodes"
            )


# ---------------------------------------------------------------------------
# finite-difference weights and banded operators


def fornberg_weights(z: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights of derivative ``order`` at points ``z``.

    ``x`` has shape ``(rows, w)`` holding the stencil nodes for each
    evaluation point ``z[row]``.  Vectorized form of Fornberg's recursion
    (Math. Comp. 51, 1988); returns an array of shape ``(rows, w)``.
    """
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    rows, w = x.shape
    c = np.zeros((rows, w, order + 1))
    c[:, 0, 0] = 1.0
    c1 = np.ones(rows)
    c4 = x[:, 0] - z
    for i in range(1, w):
        mn = min(i, order)
        c2 = np.ones(rows)
        c5 = c4
        c4 = x[:, i] - z
        for j in range(i):
            c3 = x[:, i] - x[:, j]
            c2 = c2 * c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[:, i, k] = c1 * (k * c[:, i - 1, k - 1] - c5 * c[:, i - 1, k]) / c2
                c[:, i, 0] = -c1 * c5 * c[:, i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[:, j, k] = (c4 * c[:, j, k] - k * c[:, j, k - 1]) / c3
            c[:, j, 0] = c4 * c[:, j, 0] / c3
        c1 = c2
    return c[:, :, order]


@dataclass(eq=False)
class BandedOperator:
    """Square banded matrix in LAPACK ``(l + u + 1, n)`` diagonal-ordered storage."""

    lower: int
    upper: int
    bands: np.ndarray

    @property
    def n(self) -> int:
        return self.bands.shape[1]

    @classmethod
    def from_rows(cls, cols: np.ndarray, vals: np.ndarray, n: int) -> "BandedOperator":
        """Assemble from per-row column indices and coefficients (duplicates add)."""
        rows = np.broadcast_to(np.arange(n)[:, None], cols.shape)
        off = cols - rows
        lower = int(max(0, -off.min()))
        upper = int(max(0, off.max()))
        bands = np.zeros((lower + upper + 1, n), dtype=np.result_type(vals, float))
        np.add.at(bands, (upper - off, cols), vals)
        return cls(lower, upper, bands)

    @classmethod
    def from_dense(cls, a: np.ndarray, lower: int, upper: int) -> "BandedOperator":
        n = a.shape[0]
        bands = np.zeros((lower + upper + 1, n), dtype=a.dtype)
        for k in range(-lower, upper + 1):
            diag = np.diagonal(a, k)
            if k >= 0:
                bands[upper - k, k:] = diag
            else:
                bands[upper - k, : n + k] = diag
        return cls(lower, upper, bands)

    @classmethod
    def diagonal(cls, diag: np.ndarray) -> "BandedOperator":
        return cls(0, 0, np.asarray(diag)[None, :].copy())

    def todense(self) -> np.ndarray:
        n = self.n
        a = np.zeros((n, n), dtype=self.bands.dtype)
        for k in range(-self.lower, self.upper + 1):
            idx = np.arange(max(0, -k), min(n, n - k))
            a[idx, idx + k] = self.bands[self.upper - k, idx + k]
        return a

    def __matmul__(self, x):
        x = np.asarray(x)
        n = self.n
        out = np.zeros(n, dtype=np.result_type(self.bands, x))
        for k in range(-self.lower, self.upper + 1):
            b = self.bands[self.upper - k]
            if k >= 0:
                out[: n - k] += b[k:] * x[k:]
            else:
                out[-k:] += b[: n + k] * x[: n + k]
        return out

    def _widen(self, lower: int, upper: int) -> np.ndarray:
        bands = np.zeros((lower + upper + 1, self.n), dtype=self.bands.dtype)
        bands[upper - self.upper : upper + self.lower + 1] = self.bands
        return bands

    def __add__(self, other: "BandedOperator") -> "BandedOperator":
        lo, up = max(self.lower, other.lower), max(self.upper, other.upper)
        return BandedOperator(lo, up, self._widen(lo, up) + other._widen(lo, up))

    def __sub__(self, other: "BandedOperator") -> "BandedOperator":
        return self + other.scale(-1)

    def scale(self, a) -> "BandedOperator":
        return BandedOperator(self.lower, self.upper, self.bands * a)

    def row_scale(self, s: np.ndarray) -> "BandedOperator":
        """``diag(s) @ self``."""
        n = self.n
        bands = self.bands.astype(np.result_type(self.bands, s)).copy()
        for k in range(-self.lower, self.upper + 1):
            row = self.upper - k
            cols = np.arange(n)
            rows = cols - k
            ok = (rows >= 0) & (rows < n)
            bands[row, cols[ok]] *= s[rows[ok]]
        return BandedOperator(self.lower, self.upper, bands)

    def compose(self, other: "BandedOperator") -> "BandedOperator":
        """Matrix product ``self @ other`` kept in banded form."""
        lo, up = self.lower + other.lower, self.upper + other.upper
        n = self.n
        bands = np.zeros((lo + up + 1, n), dtype=np.result_type(self.bands, other.bands))
        for k1 in range(-self.lower, self.upper + 1):
            b1 = self.bands[self.upper - k1]
            for k2 in range(-other.lower, other.upper + 1):
                b2 = other.bands[other.upper - k2]
                k = k1 + k2
                # entry (i, i+k) += A[i, i+k1] * B[i+k1, i+k]
                i = np.arange(max(0, -k1, -k), min(n, n - k1, n - k))
                bands[up - k, i + k] += b1[i + k1] * b2[i + k]
        return BandedOperator(lo, up, bands)


def _stencils(grid: RadialGrid, width: int, parity: int | None):
    """Stencil node positions, target columns and reflection signs for each row."""
    r = grid.nodes
    n = r.size
    half = width // 2
    if parity is None:
        start = np.clip(np.arange(n) - half, 0, n - width)
        idx = start[:, None] + np.arange(width)[None, :]
        return r[idx], idx, np.ones(idx.shape)
    first = 1 if grid.has_origin else 0
    ghost_src = np.arange(first, first + half)[::-1]
    ext_r = np.concatenate([-r[ghost_src], r])
    ext_col = np.concatenate([ghost_src, np.arange(n)])
    ext_sign = np.concatenate([np.full(half, float(parity)), np.ones(n)])
    start = np.clip(np.arange(n), 0, n + half - width)
    idx = start[:, None] + np.arange(width)[None, :]
    return ext_r[idx], ext_col[idx], ext_sign[idx]


def derivative_operator(
    grid: RadialGrid, order: int, stencil_width: int | None = None, parity: int | None = None
) -> BandedOperator:
    """Banded approximation of ``d^order/dr^order`` on the grid nodes.

    Row ``i`` holds local polynomial-fit weights over ``stencil_width`` nodes,
    exact for polynomials of degree ``< stencil_width``.  With ``parity`` set,
    stencils near the origin reach across ``r = 0`` onto mirrored nodes
    (``+1`` even, ``-1`` odd); otherwise they are shifted one-sided.
    """
    if not 1 <= order <= 4:
        raise ValueError("order must be between 1 and 4")
    if stencil_width is None:
        stencil_width = 5 if order <= 2 else 7
    if stencil_width % 2 == 0 or stencil_width < order + 1:
        raise ValueError("stencil_width must be odd and at least order + 1")
    if len(grid) < stencil_width:
        raise GridSizeError(f"grid of {len(grid)} nodes cannot hold a {stencil_width}-point stencil")
    if parity is not None and len(grid) < stencil_width + stencil_width // 2 + 1:
        raise GridSizeError("grid too small for reflected stencils")
    xs, cols, sign = _stencils(grid, stencil_width, parity)
    w = fornberg_weights(grid.nodes, xs, order) * sign
    return BandedOperator.from_rows(cols, w, len(grid))


def _regular_mask(field: FieldState, grid: RadialGrid):
    """Check the origin condition; return the boolean mask of nodes with r > 0."""
    r = grid.nodes
    pos = r > 0
    if grid.has_origin and field.spec.m != 0:
        v0 = field.values[0]
        if abs(v0) > 1e-12 * max(1.0, np.max(np.abs(field.values))):
            raise DomainError("a vortex field (m != 0) must vanish at r = 0")
    return pos


def radial_laplacian(field: FieldState, grid: RadialGrid) -> FieldState:
    """``f_rr + (d-1)/r f_r``; at ``r = 0`` the regular limit ``d f_rr``."""
    field.check(grid)
    spec = field.spec
    pos = _regular_mask(field, grid)
    parity = spec.parity if grid.has_origin else None
    f = field.values
    d1 = derivative_operator(grid, 1, 5, parity) @ f
    d2 = derivative_operator(grid, 2, 5, parity) @ f
    out = d2.copy()
    r = grid.nodes
    out[pos] += (grid.d - 1) / r[pos] * d1[pos]
    if grid.has_origin:
        out[0] = 0.0 if spec.m != 0 else grid.d * d2[0]
    return field.with_values(out)


def radial_biharmonic(field: FieldState, grid: RadialGrid) -> FieldState:
    """Radial bi-Laplacian in expanded form.

    ``-(d-1)(d-3)/r^3 f_r + (d-1)(d-3)/r^2 f_rr + 2(d-1)/r f_rrr + f_rrrr``;
    at the origin the regular limit ``d(d+2)/3 f_rrrr`` is used.
    """
    field.check(grid)
    spec = field.spec
    pos = _regular_mask(field, grid)
    parity = spec.parity if grid.has_origin else None
    f = field.values
    d = grid.d
    r = grid.nodes
    derivs = [derivative_operator(grid, k, 7, parity) @ f for k in (1, 2, 3, 4)]
    out = derivs[3].copy()
    c = (d - 1) * (d - 3)
    rp = r[pos]
    out[pos] += -c / rp**3 * derivs[0][pos] + c / rp**2 * derivs[1][pos] + 2 * (d - 1) / rp * derivs[2][pos]
    if grid.has_origin:
        out[0] = 0.0 if spec.m != 0 else d * (d + 2) / 3.0 * derivs[3][0]
    return field.with_values(out)


def weighted_power(field: FieldState, grid: RadialGrid) -> float:
    """``int |f|^2 r^(d-1) dr`` by the dual-cell quadrature of the grid."""
    field.check(grid)
    return float(np.dot(grid.weights, np.abs(field.values) ** 2))


def locate_peak(field: FieldState | np.ndarray, grid: RadialGrid) -> tuple[float, float]:
    """Parabolically refined location and value of ``max |f|``.

    The fit passes through the discrete maximum and its two neighbours; on a
    flat plateau the leftmost maximal node wins.  At the first node of a grid
    touching the origin, the mirrored neighbour is used for even fields.
    """
    values = field.values if isinstance(field, FieldState) else np.asarray(field)
    a = np.abs(values)
    i = int(np.argmax(a))
    amax = a[i]
    if not amax > 0:
        raise NoPeakError("field is identically zero")
    r = grid.nodes
    if 0 < i < a.size - 1:
        x = r[i - 1 : i + 2]
        y = a[i - 1 : i + 2]
    elif i == 0 and grid.has_origin:
        x = np.array([-r[1], r[0], r[1]])
        y = np.array([a[1], a[0], a[1]])
    else:
        return float(r[i]), float(amax)
    if y[2] == amax:
        return float(r[i]), float(amax)
    h0, h1 = x[1] - x[0], x[2] - x[1]
    # divided differences of the interpolating parabola
    s0 = (y[1] - y[0]) / h0
    s1 = (y[2] - y[1]) / h1
    curv = (s1 - s0) / (h0 + h1)
    if curv >= 0:
        return float(r[i]), float(amax)
    # p(x) = y1 + b (x - x1) + curv (x - x1)^2
    b = s0 + curv * h0
    dx = -b / (2 * curv)
    dx = min(max(dx, -h0), h1)
    return float(x[1] + dx), float(y[1] + b * dx + curv * dx * dx)


# ---------------------------------------------------------------------------
# conservative operators used by the time stepper


def stiffness_matrix(grid: RadialGrid) -> BandedOperator:
    """Symmetric finite-volume stiffness for ``(r^(d-1) f_r)_r``.

    Fluxes through the interior faces ``r_(i+1/2)`` give
    ``K_(i,i+1) = r_(i+1/2)^(d-1) / h_i``; ``diag(1/weights) @ K`` is a
    Laplacian that is self-adjoint in the inner product of
    :attr:`RadialGrid.weights`.
    """
    mu = grid.faces[1:-1] ** (grid.d - 1) / grid.spacing
    n = len(grid)
    bands = np.zeros((3, n))
    bands[0, 1:] = mu
    bands[2, :-1] = mu
    bands[1, :-1] -= mu
    bands[1, 1:] -= mu
    return BandedOperator(1, 1, bands)


# ---------------------------------------------------------------------------
# snapshot files


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_profile_csv(path, r, values) -> None:
    """Write ``r,re,im`` rows with 17 significant digits."""
    values = np.asarray(values)
    re = values.real
    im = values.imag if np.iscomplexobj(values) else np.zeros_like(re)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "re", "im"])
        for row in zip(r, re, im):
            w.writerow([format_float(v) for v in row])


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]
