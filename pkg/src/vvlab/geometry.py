"""Domain backends: wall distance, extended normals, curvature, collar grids.

Two reduced geometries are supported:

* ``flat_channel`` -- gap 0 < y < H with periodic tangential directions,
  walls at y = 0 ("lower") and y = H ("upper");
* ``annulus_gap``  -- gap r1 < r < r2 between concentric cylinders with
  periodic theta and axial z, walls at r = r1 ("inner") and r = r2 ("outer").

Both expose a distance function ``phi`` that equals the distance to the
nearest wall inside the collar {phi < eta} and is capped by a smooth
monotone cubic blend outside, the inward unit normal n = grad(phi), and the
exact Laplacian of phi.  Vector components are stored in the orthonormal
right-handed frame of the geometry: (x, y, z) for the channel and
(rad, theta, axial) for the annulus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousNormalError, ConfigError, DomainViolationError

FLAT_CHANNEL = "flat_channel"
ANNULUS_GAP = "annulus_gap"

# fraction of eta where the layer cutoff starts to roll off
CUTOFF_PLATEAU = 0.5
# fraction of eta used as the width of the cubic cap blend beyond the collar
CAP_BLEND = 0.5


@dataclass(frozen=True)
class Wall:
    """One wall of a reduced geometry.

    ``into_domain`` is +1 when the wall-normal coordinate increases into the
    domain.  ``tangent_names`` lists the two tangential component names in an
    order such that t1 x t2 = n (right-handed wall frame).
    """

    wall_id: str
    coord: float
    into_domain: float
    normal: np.ndarray
    tangent_names: tuple


@dataclass(frozen=True)
class GeometryDescriptor:
    kind: str
    eta: float
    h: float | None = None
    r1: float | None = None
    r2: float | None = None

    def __post_init__(self):
        if self.kind == FLAT_CHANNEL:
            if self.h is None or self.h <= 0:
                raise ConfigError("flat_channel needs gap height h > 0")
            gap = self.h
        elif self.kind == ANNULUS_GAP:
            if self.r1 is None or self.r2 is None:
                raise ConfigError("annulus_gap needs radii r1, r2")
            if not (0 < self.r1 < self.r2):
                raise ConfigError("annulus_gap needs 0 < r1 < r2")
            gap = self.r2 - self.r1
        else:
            raise ConfigError(f"unknown geometry kind {self.kind!r}")
        if not (0 < self.eta < gap / 2):
            raise ConfigError("eta must satisfy 0 < eta < gap/2 so collars are disjoint")

    # -- frame metadata ----------------------------------------------------

    @property
    def comp_names(self) -> tuple:
        if self.kind == FLAT_CHANNEL:
            return ("x", "y", "z")
        return ("rad", "theta", "axial")

    @property
    def normal_comp(self) -> int:
        """Index of the wall-normal component in ``comp_names``."""
        return 1 if self.kind == FLAT_CHANNEL else 0

    @property
    def gap(self) -> float:
        return self.h if self.kind == FLAT_CHANNEL else self.r2 - self.r1

    @property
    def coord_bounds(self) -> tuple:
        if self.kind == FLAT_CHANNEL:
            return (0.0, self.h)
        return (self.r1, self.r2)

    def walls(self) -> tuple:
        if self.kind == FLAT_CHANNEL:
            return (
                Wall("lower", 0.0, +1.0, np.array([0.0, 1.0, 0.0]), ("z", "x")),
                Wall("upper", self.h, -1.0, np.array([0.0, -1.0, 0.0]), ("x", "z")),
            )
        return (
            Wall("inner", self.r1, +1.0, np.array([1.0, 0.0, 0.0]), ("theta", "axial")),
            Wall("outer", self.r2, -1.0, np.array([-1.0, 0.0, 0.0]), ("axial", "theta")),
        )

    def wall(self, wall_id: str) -> Wall:
        for w in self.walls():
            if w.wall_id == wall_id:
                return w
        raise ConfigError(f"unknown wall {wall_id!r} for {self.kind}")

    # -- grids and measures --------------------------------------------------

    def volume_grid(self, n: int) -> np.ndarray:
        """Uniform cross-coordinate grid including both walls."""
        lo, hi = self.coord_bounds
        return np.linspace(lo, hi, n)

    def measure(self, coords: np.ndarray) -> np.ndarray:
        """Volume measure density at the given cross coordinates.

        Tangential directions carry unit extent for the channel and full
        circumference times unit axial length for the annulus.
        """
        coords = np.asarray(coords, dtype=float)
        if self.kind == FLAT_CHANNEL:
            return np.ones_like(coords)
        return 2.0 * np.pi * coords

    def quadrature_weights(self, coords: np.ndarray) -> np.ndarray:
        """Trapezoid weights times the volume measure density."""
        coords = np.asarray(coords, dtype=float)
        w = np.zeros_like(coords)
        d = np.diff(coords)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w * self.measure(coords)


def flat_channel(h: float, eta: float) -> GeometryDescriptor:
    return GeometryDescriptor(kind=FLAT_CHANNEL, eta=eta, h=h)


def annulus_gap(r1: float, r2: float, eta: float) -> GeometryDescriptor:
    return GeometryDescriptor(kind=ANNULUS_GAP, eta=eta, r1=r1, r2=r2)


# ---------------------------------------------------------------------------
# distance, normal, curvature
# ---------------------------------------------------------------------------


def _check_inside(geom: GeometryDescriptor, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    lo, hi = geom.coord_bounds
    tol = 1e-12 * geom.gap
    if np.any(coords < lo - tol) or np.any(coords > hi + tol):
        raise DomainViolationError(
            f"coordinate outside closed domain [{lo}, {hi}]"
        )
    return coords


def wall_distance(geom: GeometryDescriptor, wall_id: str, coords) -> np.ndarray:
    """Exact (uncapped) distance to one wall; smooth on the whole domain."""
    coords = _check_inside(geom, coords)
    w = geom.wall(wall_id)
    return w.into_domain * (coords - w.coord)


def min_wall_distance(geom: GeometryDescriptor, coords) -> np.ndarray:
    """Raw distance to the nearest wall (no cap); kinked at the midline."""
    coords = _check_inside(geom, coords)
    lo, hi = geom.coord_bounds
    return np.minimum(coords - lo, hi - coords)


def signed_distance(geom: GeometryDescriptor, coords) -> np.ndarray:
    """Distance to the nearest wall inside the collar, capped smoothly outside.

    Inside {d < eta} this is the exact wall distance.  Beyond eta the value
    follows the monotone cubic blend eta + w*(s - s^3/3), s = (d-eta)/w,
    saturating at eta + 2w/3, so phi >= eta everywhere outside the collar.
    """
    d = min_wall_distance(geom, coords)
    eta = geom.eta
    w = CAP_BLEND * eta
    s = np.clip((d - eta) / w, 0.0, 1.0)
    capped = eta + w * (s - s**3 / 3.0)
    return np.where(d <= eta, d, capped)


def _nearest_wall_sign(geom: GeometryDescriptor, coords) -> np.ndarray:
    """+1 where the first wall is nearest, -1 for the second; error on ties."""
    coords = _check_inside(geom, coords)
    lo, hi = geom.coord_bounds
    d_lo = coords - lo
    d_hi = hi - coords
    tie = np.isclose(d_lo, d_hi, rtol=0.0, atol=1e-14 * geom.gap)
    if np.any(tie):
        raise AmbiguousNormalError(
            "point equidistant from both walls; stay inside one collar"
        )
    return np.where(d_lo < d_hi, 1.0, -1.0)


def normal_field(geom: GeometryDescriptor, coords) -> np.ndarray:
    """Extended inward unit normal n = grad(phi) at the given coordinates.

    Shape (..., 3) in the geometry component frame.  Unit length inside the
    collars; the same unit direction is returned outside (the cap region
    scales grad(phi) but not its direction).
    """
    sign = _nearest_wall_sign(geom, coords)
    lo_wall, hi_wall = geom.walls()
    n = np.empty(np.shape(sign) + (3,))
    n[...] = np.where(
        sign[..., None] > 0, lo_wall.normal, hi_wall.normal
    )
    return n


def laplacian_phi(geom: GeometryDescriptor, coords) -> np.ndarray:
    """Exact Laplacian of the wall distance at collar points.

    Zero for the flat channel; +1/r in the inner collar and -1/r in the
    outer collar of the annulus.
    """
    sign = _nearest_wall_sign(geom, coords)
    if geom.kind == FLAT_CHANNEL:
        return np.zeros_like(sign)
    coords = np.asarray(coords, dtype=float)
    return sign / coords


def collar_cutoff(geom: GeometryDescriptor, distance) -> np.ndarray:
    """Smooth cutoff in the wall distance: 1 on [0, eta/2], 0 beyond eta.

    Quintic smoothstep transition, C^2 at both ends.  Layer terms are
    multiplied by this cutoff so they vanish outside the collar.
    """
    d = np.asarray(distance, dtype=float)
    a = CUTOFF_PLATEAU * geom.eta
    x = np.clip((d - a) / (geom.eta - a), 0.0, 1.0)
    smooth = x**3 * (10.0 - 15.0 * x + 6.0 * x**2)
    return 1.0 - smooth


# ---------------------------------------------------------------------------
# collar charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollarChart:
    """Tabulated collar data for one wall.

    ``s_grid`` holds the slow-coordinate samples: the cross coordinates of
    grid points along the wall-normal direction inside the collar, clustered
    geometrically toward the wall.  For fully symmetric flows the layer
    coefficients are constant over ``s_grid`` and a single sample would
    suffice; the chart always stores the full set.
    """

    wall_id: str
    s_grid: np.ndarray      # cross coordinates of the collar samples
    phi: np.ndarray         # wall distance at each sample
    normal: np.ndarray      # (n, 3) inward unit normals
    lap_phi: np.ndarray     # exact Laplacian of phi at each sample
    s_weights: np.ndarray   # shell measure weights for slow integrals


def build_collar(geom: GeometryDescriptor, n_points: int, stretch: float = 1.12):
    """Build one CollarChart per wall with geometric clustering at the wall.

    Spacings grow by the factor ``stretch`` away from the wall; sample 0 sits
    on the wall and the last sample at distance eta.  Deterministic.
    """
    if n_points < 4:
        raise ConfigError("collar needs n_points >= 4")
    if not (1.0 < stretch <= 1.5):
        raise ConfigError("stretch ratio should lie in (1, 1.5]")
    j = np.arange(n_points, dtype=float)
    d = geom.eta * (stretch**j - 1.0) / (stretch ** (n_points - 1) - 1.0)
    charts = {}
    for w in geom.walls():
        coords = w.coord + w.into_domain * d
        phi = signed_distance(geom, coords)
        normal = np.tile(w.normal, (n_points, 1))
        lap = laplacian_phi(geom, coords)
        weights = geom.quadrature_weights(np.sort(coords))
        if w.into_domain < 0:
            weights = weights[::-1].copy()
        charts[w.wall_id] = CollarChart(
            wall_id=w.wall_id,
            s_grid=coords,
            phi=phi,
            normal=normal,
            lap_phi=lap,
            s_weights=weights,
        )
    return charts
