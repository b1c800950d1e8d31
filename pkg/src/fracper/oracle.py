"""Brute-force grid evaluation of the localized fractional perimeter.

A planar set is discretized as a boolean cell mask on a square box,
with an exact conical description outside.  The localized perimeter is
a sum of kernel interactions over cell pairs with at least one cell in
the localization window; the convolution structure of the pair sum is
exploited with FFTs, touching cell pairs use exact square-square kernel
integrals, and everything outside the inscribed disk of the box is
integrated semi-analytically against the conical tail.

A compactly supported polynomial bump field transports the mask
(fourth-order one-step backward flow plus resampling), which yields
centered first and second differences of the perimeter along the flow.
These are the cross-checks for the analytic second-variation forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import dblquad, quad
from scipy.interpolate import RectBivariateSpline
from scipy.signal import fftconvolve

from .cone import PlanarCone, cone_from_json, cone_to_json
from .kernels import _gauss01, _graded_offsets

TWO_PI = 2.0 * math.pi

__all__ = [
    "GridSet",
    "FlowField",
    "per_s_localized",
    "flow_set",
    "second_difference",
    "first_difference",
    "flow_area_check",
    "save_grid",
    "load_grid",
    "cone_tail_field",
]

_MIN_RESOLUTION = 64


# ---------------------------------------------------------------------------
# grid sets
# ---------------------------------------------------------------------------


@dataclass
class GridSet:
    """Boolean discretization of a planar set on the box [-R, R]^2.

    ``inside[ix, iy]`` classifies the cell whose center is
    ``(-R + (ix + 1/2) h, -R + (iy + 1/2) h)`` with ``h = 2 R / resolution``.
    If the set is exactly conical outside the box, ``conical_tail``
    carries that cone and the outermost cell ring must agree with it.
    """

    box: float
    resolution: int
    inside: np.ndarray
    conical_tail: PlanarCone | None = None

    def __post_init__(self):
        if self.resolution < _MIN_RESOLUTION:
            raise ValueError(f"resolution must be >= {_MIN_RESOLUTION}, got {self.resolution}")
        if self.box <= 0:
            raise ValueError("box half-width must be positive")
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != (self.resolution, self.resolution):
            raise ValueError("mask shape must be (resolution, resolution)")
        self.inside = inside
        if self.conical_tail is not None:
            self._check_tail_ring()

    @property
    def h(self) -> float:
        return 2.0 * self.box / self.resolution

    def centers(self):
        c = -self.box + (np.arange(self.resolution) + 0.5) * self.h
        return c

    def _check_tail_ring(self):
        c = self.centers()
        xs, ys = np.meshgrid(c, c, indexing="ij")
        ring = np.zeros_like(self.inside)
        ring[0, :] = ring[-1, :] = True
        ring[:, 0] = ring[:, -1] = True
        want = self.conical_tail.contains_mask(xs[ring], ys[ring])
        if not np.array_equal(want, self.inside[ring]):
            raise ValueError("mask disagrees with the conical tail on the outermost ring")

    @classmethod
    def from_cone(cls, cone: PlanarCone, box: float, resolution: int) -> "GridSet":
        c = -box + (np.arange(resolution) + 0.5) * (2.0 * box / resolution)
        xs, ys = np.meshgrid(c, c, indexing="ij")
        return cls(box, resolution, cone.contains_mask(xs, ys), cone)

    def complement(self) -> "GridSet":
        tail = self.conical_tail.complement() if self.conical_tail else None
        return GridSet(self.box, self.resolution, ~self.inside, tail)

    def area(self) -> float:
        return float(np.count_nonzero(self.inside)) * self.h ** 2


def save_grid(grid: GridSet, path) -> None:
    """Persist a grid as a one-line JSON header plus packed mask bits."""
    header = {
        "box": grid.box,
        "resolution": grid.resolution,
        "tail_cone": json.loads(cone_to_json(grid.conical_tail)) if grid.conical_tail else None,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("ascii") + b"\n")
        f.write(np.packbits(grid.inside.ravel()).tobytes())


def load_grid(path) -> GridSet:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("ascii"))
        raw = np.frombuffer(f.read(), dtype=np.uint8)
    n = header["resolution"]
    bits = np.unpackbits(raw)[: n * n].astype(bool).reshape(n, n)
    tail = cone_from_json(header["tail_cone"]) if header["tail_cone"] else None
    return GridSet(header["box"], n, bits, tail)


# ---------------------------------------------------------------------------
# cell-pair kernel with touching-pair corrections
# ---------------------------------------------------------------------------


def _tent_density_integral(p: int, q: int, s: float) -> float:
    """Exact kernel integral between unit cells at integer offset (p, q).

    Equals ``iint rho_p(z) rho_q(v) (z^2+v^2)^(-(2+s)/2)`` with tent
    densities rho_k(t) = max(0, 1 - |t - k|).
    """
    def tent(t, k):
        return max(0.0, 1.0 - abs(t - k))

    if p <= 1 and q <= 1:
        # support touches the kernel singularity at the origin: integrate
        # on panels graded toward it, one quadrant of the support at a time
        g, w = _gauss01(10)
        total = 0.0
        for z0 in (p - 1, p):
            for v0 in (q - 1, q):
                za, zb = sorted((z0, z0 + 1), key=abs)
                va, vb = sorted((v0, v0 + 1), key=abs)
                zcuts = _corner_graded(z0, z0 + 1)
                vcuts = _corner_graded(v0, v0 + 1)
                for zl, zr in zip(zcuts[:-1], zcuts[1:]):
                    z = zl + (zr - zl) * g
                    wz = (zr - zl) * w * np.array([tent(t, p) for t in z])
                    for vl, vr in zip(vcuts[:-1], vcuts[1:]):
                        v = vl + (vr - vl) * g
                        wv = (vr - vl) * w * np.array([tent(t, q) for t in v])
                        kern = (z[:, None] ** 2 + v[None, :] ** 2) ** (-(2.0 + s) / 2.0)
                        total += float(wz @ kern @ wv)
        return total
    val, _ = dblquad(
        lambda v, z: tent(z, p) * tent(v, q) * (z * z + v * v) ** (-(2.0 + s) / 2.0),
        p - 1.0, p + 1.0, q - 1.0, q + 1.0, epsabs=1e-12, epsrel=1e-10,
    )
    return val


def _corner_graded(lo: float, hi: float) -> np.ndarray:
    """Panel cuts on [lo, hi] graded toward 0 if 0 is an endpoint."""
    if lo == 0.0:
        return _graded_offsets(hi - lo, 1e-9)
    if hi == 0.0:
        return -_graded_offsets(hi - lo, 1e-9)[::-1]
    return np.array([lo, hi])


_EXACT_OFFSET = 2   # exact tent integrals for max(|i|,|j|) <= this
_REFINED_OFFSET = 8  # 4x4 subcell midpoint beyond that, up to this


@lru_cache(maxsize=16)
def _offset_kernel_values(s: float):
    """Dimensionless near-offset kernel table {(i, j): value}, i <= j."""
    table = {}
    for i in range(_EXACT_OFFSET + 1):
        for j in range(i, _EXACT_OFFSET + 1):
            if i == 0 and j == 0:
                continue
            table[(i, j)] = _tent_density_integral(i, j, s)
    # subcell-refined midpoint ring
    sub = (np.arange(4) + 0.5) / 4.0 - 0.5
    dz = (sub[:, None] - sub[None, :]).ravel()  # 16 subcell offset combos per axis
    for i in range(_REFINED_OFFSET + 1):
        for j in range(i, _REFINED_OFFSET + 1):
            if (i, j) in table or (i == 0 and j == 0):
                continue
            z = i + dz
            v = j + dz
            kern = (z[:, None] ** 2 + v[None, :] ** 2) ** (-(2.0 + s) / 2.0)
            table[(i, j)] = float(np.mean(kern))
    return table


def _kernel_grid(n: int, s: float) -> np.ndarray:
    """Dimensionless cell-pair kernel on the offset lattice [-(n-1), n-1]^2."""
    d = np.arange(-(n - 1), n)
    D2 = d[:, None] ** 2 + d[None, :] ** 2
    with np.errstate(divide="ignore"):
        grid = D2.astype(float) ** (-(2.0 + s) / 2.0)
    grid[n - 1, n - 1] = 0.0
    table = _offset_kernel_values(float(s))
    for (i, j), val in table.items():
        for a, b in {(i, j), (j, i)}:
            for sa in ((1, -1) if a else (1,)):
                for sb in ((1, -1) if b else (1,)):
                    grid[n - 1 + sa * a, n - 1 + sb * b] = val
    return grid


def _pair_sum(mask_a: np.ndarray, mask_b: np.ndarray, kernel: np.ndarray) -> float:
    """sum over x in A, y in B of kernel(y - x), via FFT convolution."""
    if not mask_a.any() or not mask_b.any():
        return 0.0
    conv = fftconvolve(mask_a.astype(float), kernel, mode="same")
    return float(np.sum(conv[mask_b]))


# ---------------------------------------------------------------------------
# conical tail field
# ---------------------------------------------------------------------------


def _radial_tail(A, b, s):
    """int_A^inf (u^2 + b^2)^(-(2+s)/2) du for A > 0, vectorized."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast(A, b).shape)
    A, b = np.broadcast_arrays(A, b)
    small = b < 1e-5 * A
    if np.any(small):
        a = A[small]
        bb = b[small]
        out[small] = a ** (-1.0 - s) / (1.0 + s) - 0.5 * (2.0 + s) * bb ** 2 * a ** (
            -3.0 - s
        ) / (3.0 + s)
    if np.any(~small):
        a = A[~small]
        bb = b[~small]
        psi0 = np.arctan2(a, bb)
        g, w = _gauss01(40)
        psi = psi0[..., None] + (0.5 * math.pi - psi0)[..., None] * g
        integ = np.sum(np.cos(psi) ** s * w, axis=-1) * (0.5 * math.pi - psi0)
        out[~small] = bb ** (-1.0 - s) * integ
    return out


def _sector_tail_integral(alpha, beta, R, x, s):
    """iint over the sector (alpha, beta), r > R of |x - y|^(-(2+s)) dy."""
    rho = math.hypot(x[0], x[1])
    if rho >= R:
        raise ValueError("evaluation point must lie inside the inscribed disk")
    phix = math.atan2(x[1], x[0])

    def integrand(phi):
        cpsi = math.cos(phi - phix)
        c = rho * cpsi
        b = abs(rho * math.sin(phi - phix))
        A = R - c
        head = (A * A + b * b) ** (-s / 2.0) / s
        return head + c * float(_radial_tail(A, b, s))

    val, _ = quad(integrand, alpha, beta, epsabs=1e-13, epsrel=1e-10, limit=200)
    return val


def cone_tail_field(cone: PlanarCone, want_inside: bool, R: float, x, s: float) -> float:
    """Kernel mass of the conical set (or complement) beyond the disk of radius R.

    Returns ``int over {|y| > R, y in E (or E^c)} |x - y|^(-(2+s)) dy``
    for x strictly inside the disk.
    """
    angles = list(cone.ray_angles) + [cone.ray_angles[0] + TWO_PI]
    total = 0.0
    for k in range(cone.n_rays):
        if cone.sector_inside(k + 1) == want_inside:
            total += _sector_tail_integral(angles[k], angles[k + 1], R, x, s)
    return total


# ---------------------------------------------------------------------------
# localized fractional perimeter
# ---------------------------------------------------------------------------


def _omega_mask(grid: GridSet, omega) -> np.ndarray:
    x0, x1, y0, y1 = (float(v) for v in omega)
    if not (x0 < x1 and y0 < y1):
        raise ValueError("omega must be a nonempty box (xmin, xmax, ymin, ymax)")
    R = grid.box
    if x0 < -R or x1 > R or y0 < -R or y1 > R:
        raise ValueError("omega must be contained in the grid box")
    c = grid.centers()
    inx = (c >= x0) & (c <= x1)
    iny = (c >= y0) & (c <= y1)
    return inx[:, None] & iny[None, :]


def _disk_mask(grid: GridSet) -> np.ndarray:
    c = grid.centers()
    return (c[:, None] ** 2 + c[None, :] ** 2) <= grid.box ** 2


_TAIL_COARSE = 33


def _tail_field_on(grid: GridSet, cells: np.ndarray, want_inside: bool, s: float) -> np.ndarray:
    """Conical tail mass evaluated at the given cells via a spline of a coarse grid."""
    cone = grid.conical_tail
    if cone is None:
        raise ValueError("grid has no conical tail description")
    ix, iy = np.nonzero(cells)
    if ix.size == 0:
        return np.zeros(0)
    c = grid.centers()
    xs, ys = c[ix], c[iy]
    gx = np.linspace(xs.min() - grid.h, xs.max() + grid.h, _TAIL_COARSE)
    gy = np.linspace(ys.min() - grid.h, ys.max() + grid.h, _TAIL_COARSE)
    vals = np.empty((gx.size, gy.size))
    for i, xv in enumerate(gx):
        for j, yv in enumerate(gy):
            vals[i, j] = cone_tail_field(cone, want_inside, grid.box, (xv, yv), s)
    spline = RectBivariateSpline(gx, gy, vals, kx=3, ky=3)
    return spline.ev(xs, ys)


def per_s_localized(grid: GridSet, omega, s: float) -> float:
    """Localized fractional perimeter of the grid set in the window omega.

    ``omega`` is a sub-box (xmin, xmax, ymin, ymax) of the grid box.
    Cell pairs inside the inscribed disk are summed with the corrected
    pair kernel; interactions with the region beyond the disk use the
    conical tail analytically (required whenever omega cells interact
    with it, i.e. always, unless the grid has a tail cone attached).
    """
    s = float(s)
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    om = _omega_mask(grid, omega)
    disk = _disk_mask(grid)
    E = grid.inside & disk
    Ec = ~grid.inside & disk
    h = grid.h

    kernel = _kernel_grid(grid.resolution, s)
    pieces = [
        _pair_sum(E & om, Ec, kernel),
        _pair_sum(E & ~om, Ec & om, kernel),
    ]
    total = math.fsum(pieces) * h ** (2.0 - s)

    if grid.conical_tail is not None:
        tail_out = _tail_field_on(grid, E & om, want_inside=False, s=s)
        tail_in = _tail_field_on(grid, Ec & om, want_inside=True, s=s)
        total += (math.fsum(tail_out.tolist()) + math.fsum(tail_in.tolist())) * h ** 2
    return total


# ---------------------------------------------------------------------------
# flow fields and transported masks
# ---------------------------------------------------------------------------

# max over u of |d/du (1-u^2)^4| = 8 u (1-u^2)^3 at u = 1/sqrt(7)
_BUMP_SLOPE_MAX = 8.0 / math.sqrt(7.0) * (6.0 / 7.0) ** 3


@dataclass(frozen=True)
class FlowField:
    """Compactly supported bump field X(y) = a * direction * (1 - |y-c|^2/r^2)^4."""

    center: tuple
    radius: float
    direction: tuple
    amplitude: float = 1.0

    def __post_init__(self):
        cx, cy = (float(v) for v in self.center)
        dx, dy = (float(v) for v in self.direction)
        nrm = math.hypot(dx, dy)
        if nrm == 0.0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "center", (cx, cy))
        object.__setattr__(self, "direction", (dx / nrm, dy / nrm))
        if self.radius <= 0.0:
            raise ValueError("support radius must be positive")
        if math.hypot(cx, cy) <= self.radius:
            raise ValueError("support ball must exclude the coordinate origin")

    def profile(self, r2_over_rho2: np.ndarray) -> np.ndarray:
        return self.amplitude * np.where(r2_over_rho2 < 1.0, (1.0 - r2_over_rho2) ** 4, 0.0)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate the field at points of shape (..., 2)."""
        w = pts - np.asarray(self.center)
        r2 = np.sum(w * w, axis=-1) / self.radius ** 2
        p = self.profile(r2)
        return p[..., None] * np.asarray(self.direction)

    def lipschitz_bound(self) -> float:
        return abs(self.amplitude) * _BUMP_SLOPE_MAX / self.radius

    def div(self, pts: np.ndarray) -> np.ndarray:
        """Divergence direction . grad(profile) at points (..., 2)."""
        w = pts - np.asarray(self.center)
        r2 = np.sum(w * w, axis=-1) / self.radius ** 2
        fac = np.where(r2 < 1.0, -8.0 * self.amplitude / self.radius ** 2 * (1.0 - r2) ** 3, 0.0)
        return fac * (w @ np.asarray(self.direction))


_CFL_SAFETY = 0.5


def _check_cfl(field: FlowField, t: float):
    if abs(t) * field.lipschitz_bound() > _CFL_SAFETY:
        raise ValueError(
            f"flow step too large: |t| * Lip = {abs(t) * field.lipschitz_bound():.3g} "
            f"exceeds the safety bound {_CFL_SAFETY}"
        )


def _rk4_step(field: FlowField, pts: np.ndarray, t: float) -> np.ndarray:
    k1 = field(pts)
    k2 = field(pts + 0.5 * t * k1)
    k3 = field(pts + 0.5 * t * k2)
    k4 = field(pts + t * k3)
    return pts + (t / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def flow_set(grid: GridSet, field: FlowField, t: float) -> GridSet:
    """Transport the mask by the flow of the field at time t.

    Each potentially moving cell center is pulled back by one
    fourth-order step and classified against the original set (mask
    lookup inside the box, conical tail outside).
    """
    _check_cfl(field, t)
    cx, cy = field.center
    if max(abs(cx) + field.radius, abs(cy) + field.radius) > grid.box:
        raise ValueError("field support must be contained in the grid box")
    if t == 0.0:
        return GridSet(grid.box, grid.resolution, grid.inside.copy(), grid.conical_tail)

    c = grid.centers()
    reach = field.radius + abs(t) * 1.001
    selx = np.abs(c - cx) <= reach
    sely = np.abs(c - cy) <= reach
    sub = selx[:, None] & sely[None, :]
    ix, iy = np.nonzero(sub)
    pts = np.stack([c[ix], c[iy]], axis=-1)
    pre = _rk4_step(field, pts, -t)

    # classify preimages against the original set
    h = grid.h
    jx = np.clip(np.floor((pre[:, 0] + grid.box) / h).astype(int), 0, grid.resolution - 1)
    jy = np.clip(np.floor((pre[:, 1] + grid.box) / h).astype(int), 0, grid.resolution - 1)
    new_vals = grid.inside[jx, jy]

    out = grid.inside.copy()
    out[ix, iy] = new_vals
    return GridSet(grid.box, grid.resolution, out, grid.conical_tail)


def flow_area_check(grid: GridSet, field: FlowField, t: float):
    """Measured vs divergence-theorem area change under the flow.

    The prediction carries the second-order term
    ``t^2/2 * int_E (X . grad(div X) + (div X)^2)`` so the comparison
    isolates transport errors rather than Taylor truncation.
    """
    moved = flow_set(grid, field, t)
    measured = moved.area() - grid.area()
    c = grid.centers()
    xs, ys = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([xs[grid.inside], ys[grid.inside]], axis=-1)
    divs = field.div(pts)
    g1 = float(np.sum(divs)) * grid.h ** 2
    # second order: d/dt of int_{E_t} div X at t = 0
    eps = 1e-6
    shifted = pts + eps * field(pts)
    ddiv = (field.div(shifted) - divs) / eps
    g2 = float(np.sum(ddiv + divs ** 2)) * grid.h ** 2
    predicted = t * g1 + 0.5 * t * t * g2
    return measured, predicted


# ---------------------------------------------------------------------------
# flow differences of the localized perimeter
# ---------------------------------------------------------------------------


def first_difference(grid: GridSet, field: FlowField, omega, s: float, t: float) -> float:
    """Centered first difference of the localized perimeter along the flow."""
    pp = per_s_localized(flow_set(grid, field, t), omega, s)
    pm = per_s_localized(flow_set(grid, field, -t), omega, s)
    return (pp - pm) / (2.0 * t)


def second_difference(
    grid: GridSet,
    field: FlowField,
    omega,
    s: float,
    t: float,
    richardson: bool = True,
) -> float:
    """Centered second difference of the localized perimeter along the flow.

    With ``richardson`` the O(t^2) truncation is cancelled by combining
    steps t and t/2.
    """
    p0 = per_s_localized(grid, omega, s)

    def sd(step):
        pp = per_s_localized(flow_set(grid, field, step), omega, s)
        pm = per_s_localized(flow_set(grid, field, -step), omega, s)
        return (pp - 2.0 * p0 + pm) / step ** 2

    coarse = sd(t)
    if not richardson:
        return coarse
    fine = sd(0.5 * t)
    return (4.0 * fine - coarse) / 3.0
