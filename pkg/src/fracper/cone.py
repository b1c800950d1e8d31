"""Open cones in the plane as alternating unions of sectors.

A cone is described by the angles of its boundary rays (an even number,
strictly increasing in [0, 2pi)) together with one bit saying whether
the sector between the first and second ray belongs to the set.  All
downstream analysis (curvature, quadratic forms, grid oracles) consumes
this representation through outward normals and pairwise ray angles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PlanarCone", "RayPoint", "named_cone", "cone_from_json", "cone_to_json"]

TWO_PI = 2.0 * math.pi

# validation tolerance for angle comparisons (construction only; the
# formulas downstream consume cosines of exact differences)
_ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class RayPoint:
    """A boundary point given by its ray index (1-based) and radius > 0."""

    ray_index: int
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class PlanarCone:
    ray_angles: tuple
    first_sector_inside: bool = True

    def __post_init__(self):
        angles = tuple(float(a) for a in self.ray_angles)
        if len(angles) < 2 or len(angles) % 2 != 0:
            raise ValueError(f"need an even number >= 2 of rays, got {len(angles)}")
        for a in angles:
            if not (-_ANGLE_TOL <= a < TWO_PI):
                raise ValueError(f"ray angle {a} outside [0, 2pi)")
        for a, b in zip(angles, angles[1:]):
            if b - a <= _ANGLE_TOL:
                raise ValueError("ray angles must be strictly increasing")
        object.__setattr__(self, "ray_angles", angles)

    # -- basic queries ---------------------------------------------------

    @property
    def n_rays(self) -> int:
        return len(self.ray_angles)

    def _check_index(self, i: int) -> int:
        if not 1 <= i <= self.n_rays:
            raise IndexError(f"ray index {i} out of range 1..{self.n_rays}")
        return i

    def ray_angle(self, i: int) -> float:
        return self.ray_angles[self._check_index(i) - 1]

    def ray_direction(self, i: int) -> np.ndarray:
        a = self.ray_angle(i)
        return np.array([math.cos(a), math.sin(a)])

    def sector_inside(self, k: int) -> bool:
        """Whether sector k (between ray k and ray k+1, cyclically) is in the set."""
        k = (k - 1) % self.n_rays + 1
        return self.first_sector_inside == (k % 2 == 1)

    def normal_angle(self, i: int) -> float:
        """Direction of the outward normal on ray i, as an angle.

        Not reduced mod 2pi: differences of these angles feed cosines,
        and keeping them unreduced makes equal normals (e.g. the two
        rays of a half-plane) give |nu_i - nu_j|^2 = 0 exactly.
        """
        i = self._check_index(i)
        a = self.ray_angles[i - 1]
        # ray i separates sector i-1 (clockwise side) from sector i;
        # exactly one of the two is inside since sectors alternate
        if self.sector_inside(i):
            return a - 0.5 * math.pi
        return a + 0.5 * math.pi

    def outward_normal(self, i: int) -> np.ndarray:
        """Unit normal on ray i pointing out of the adjacent inside sector."""
        psi = self.normal_angle(i)
        return np.array([math.cos(psi), math.sin(psi)])

    def pairwise_angle(self, i: int, j: int) -> float:
        """Counterclockwise angle from ray i to ray j, in (0, 2pi)."""
        i = self._check_index(i)
        j = self._check_index(j)
        if i == j:
            raise ValueError("pairwise angle undefined for i == j")
        d = (self.ray_angles[j - 1] - self.ray_angles[i - 1]) % TWO_PI
        return d

    def normal_jump_sq(self, i: int, j: int) -> float:
        """|nu_i - nu_j|^2 from the explicit normals, via 2 - 2 cos(psi_i - psi_j)."""
        return 2.0 - 2.0 * math.cos(self.normal_angle(i) - self.normal_angle(j))

    def classical_perimeter_annulus(self) -> float:
        """Length of the boundary inside the annulus 1 < |x| < 2: one unit per ray."""
        return float(self.n_rays)

    # -- membership ------------------------------------------------------

    def contains(self, x: float, y: float) -> bool:
        """Whether the open cone contains the point (points on rays excluded)."""
        phi = math.atan2(y, x) % TWO_PI
        angles = self.ray_angles
        # index of the last ray with angle <= phi (sector 2N wraps past 2pi)
        k = int(np.searchsorted(angles, phi, side="right"))
        if k == 0:
            k = self.n_rays
        return self.sector_inside(k)

    def contains_mask(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized membership for arrays of coordinates."""
        phi = np.mod(np.arctan2(ys, xs), TWO_PI)
        k = np.searchsorted(np.asarray(self.ray_angles), phi, side="right")
        k = np.where(k == 0, self.n_rays, k)
        inside_odd = self.first_sector_inside
        return (k % 2 == 1) == inside_odd

    # -- derived cones ---------------------------------------------------

    def complement(self) -> "PlanarCone":
        return PlanarCone(self.ray_angles, not self.first_sector_inside)

    def rotated(self, alpha: float) -> "PlanarCone":
        """Rotate the cone by alpha, re-sorting rays into [0, 2pi)."""
        shifted = [(a + alpha) % TWO_PI for a in self.ray_angles]
        order = sorted(range(len(shifted)), key=lambda k: shifted[k])
        new_angles = [shifted[k] for k in order]
        # sector starting at the ray that lands first keeps its membership
        lead = order[0] + 1  # 1-based index of original ray now first
        return PlanarCone(tuple(new_angles), self.sector_inside(lead))


# -- construction helpers -------------------------------------------------


def named_cone(name: str) -> PlanarCone:
    """Build one of the named cones: halfplane, cross, sector:<theta>, k-fan:<k>."""
    if name == "halfplane":
        return PlanarCone((0.0, math.pi), True)
    if name == "cross":
        return PlanarCone((0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi), True)
    if name.startswith("sector:"):
        theta = float(name.split(":", 1)[1])
        if not 0.0 < theta < TWO_PI:
            raise ValueError(f"sector opening must lie in (0, 2pi), got {theta}")
        return PlanarCone((0.0, theta), True)
    if name.startswith("k-fan:"):
        k = int(name.split(":", 1)[1])
        if k < 1:
            raise ValueError(f"fan order must be >= 1, got {k}")
        return PlanarCone(tuple(j * math.pi / k for j in range(2 * k)), True)
    raise ValueError(f"unknown cone name {name!r}")


def cone_from_json(doc) -> PlanarCone:
    """Parse {"rays": [...], "first_sector_inside": bool} (dict or JSON text)."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        rays = doc["rays"]
        inside = bool(doc["first_sector_inside"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"cone document missing field: {exc}") from exc
    return PlanarCone(tuple(float(r) for r in rays), inside)


def cone_to_json(cone: PlanarCone) -> str:
    return json.dumps(
        {"rays": list(cone.ray_angles), "first_sector_inside": cone.first_sector_inside}
    )
