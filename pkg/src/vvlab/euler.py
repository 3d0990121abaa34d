"""Inviscid base flows: exact steady families in the reduced geometries plus
a manufactured mode, with the boundary data handed to the layer solver.

The analytic families are exact steady solutions with zero normal velocity:

* swirl   u0 = U(r) e_theta in the annulus, pressure balancing U^2/r;
* shear   u0 = U(y) e_x in the channel, constant pressure.

For both families the stretching coefficient f = (u0 . n)/phi vanishes
identically and the tangential projection of the layer coupling
(u0 . grad u_b + u_b . grad u0) is zero; the pieces that feed the layer
solver are therefore the wall data g = curl u0 x n and, for the pressure
corrector, the normal coupling coefficients c with (coupling . n) = c . b.
The manufactured mode prescribes velocity, pressure and forcing plus
nonzero f, couplings and time-dependent g to exercise the remaining code
paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ConfigError, InvalidProfileError

# ---------------------------------------------------------------------------
# radial / shear profiles with exact derivatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaurentProfile:
    """U(r) = sum_k c_k r^k with integer powers k >= -1.

    Covers rigid rotation (k=1), the potential vortex (k=-1) and general
    polynomial swirls with exact derivatives and an exact pressure integral.
    """

    coeffs: dict

    def __post_init__(self):
        for k in self.coeffs:
            if k < -1:
                raise ConfigError("powers below r^-1 are not supported")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for k, c in self.coeffs.items():
            out = out + c * r ** float(k)
        return out

    def deriv(self, r, order=1):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for k, c in self.coeffs.items():
            fac = 1.0
            for j in range(order):
                fac *= k - j
            if fac != 0.0:
                out = out + c * fac * r ** float(k - order)
        return out

    def vorticity(self, r):
        """(1/r) d(r U)/dr as an exact series: sum c_k (k+1) r^(k-1).

        The k = -1 term drops symbolically, so the potential vortex is
        curl free to the bit, not merely to round-off.
        """
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for k, c in self.coeffs.items():
            if k != -1:
                out = out + c * (k + 1) * r ** float(k - 1)
        return out

    def pressure(self, r):
        """Exact antiderivative of U(r)^2 / r (squared Laurent series)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        items = list(self.coeffs.items())
        for k1, c1 in items:
            for k2, c2 in items:
                n = k1 + k2 - 1
                if n == -1:
                    out = out + c1 * c2 * np.log(r)
                else:
                    out = out + c1 * c2 * r ** float(n + 1) / (n + 1)
        return out


@dataclass(frozen=True)
class ShearProfile:
    """U(y) = polynomial + sum of cosine modes amp*cos(k*pi*y/h)."""

    poly: tuple = ()
    cosines: tuple = ()       # (amp, k) pairs
    h: float = 1.0

    def value(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for j, c in enumerate(self.poly):
            out = out + c * y ** float(j)
        for amp, k in self.cosines:
            out = out + amp * np.cos(k * math.pi * y / self.h)
        return out

    def deriv(self, y, order=1):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for j, c in enumerate(self.poly):
            fac = 1.0
            for i in range(order):
                fac *= j - i
            if fac != 0.0:
                out = out + c * fac * y ** float(j - order)
        for amp, k in self.cosines:
            om = k * math.pi / self.h
            phase = order % 4
            trig = [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin][phase]
            out = out + amp * om**order * trig(om * y)
        return out


# ---------------------------------------------------------------------------
# base flow container
# ---------------------------------------------------------------------------


@dataclass
class BaseFlow:
    """Evaluators for the inviscid base flow and its layer coefficients.

    All volume evaluators take (t, coords) with 1D cross coordinates and
    return arrays in the geometry component frame, shape (3, n).
    """

    family: str
    geom: geo.GeometryDescriptor
    steady: bool
    velocity: callable
    curl: callable
    pressure_gradient: callable
    convective: callable
    time_derivative: callable
    forcing: callable
    # layer-side coefficients
    f_stretch: callable            # f(t, s) -> (n_s,)
    coupling_matrix: callable      # A(t, wall, s) -> (2, 2, n_s), acts on tangential comps
    normal_coupling: callable      # c(t, wall, s) -> (2, n_s): (coupling . n) = sum c_i b_i
    normal_coupling_deriv: callable  # d/ds of the c coefficients, (2, n_s)
    layer_forcing: callable | None = None   # F(t, wall, s, z) -> (2, n_s, n_z), MMS only
    meta: dict = field(default_factory=dict)

    def divergence(self, t, coords):
        """Exact divergence; zero for every family provided here."""
        coords = np.asarray(coords, dtype=float)
        return np.zeros_like(coords)


def _zeros3(coords):
    coords = np.asarray(coords, dtype=float)
    return np.zeros((3, coords.size))


def swirl_base_flow(profile: LaurentProfile, geom: geo.GeometryDescriptor) -> BaseFlow:
    """u0 = U(r) e_theta: exact steady solution with d(pi0)/dr = U^2/r."""
    if geom.kind != geo.ANNULUS_GAP:
        raise ConfigError("swirl base flow requires the annulus geometry")
    probe = np.linspace(geom.r1, geom.r2, 64)
    if not np.all(np.isfinite(profile.value(probe))):
        raise InvalidProfileError("swirl profile not finite on [r1, r2]")

    def velocity(t, coords):
        out = _zeros3(coords)
        out[1] = profile.value(coords)
        return out

    def curl(t, coords):
        # curl(U e_theta) = (1/r) d(r U)/dr e_axial, exact series form
        coords = np.asarray(coords, dtype=float)
        out = _zeros3(coords)
        out[2] = profile.vorticity(coords)
        return out

    def pressure_gradient(t, coords):
        coords = np.asarray(coords, dtype=float)
        out = _zeros3(coords)
        out[0] = profile.value(coords) ** 2 / coords
        return out

    def convective(t, coords):
        # (u . grad) u = -(U^2/r) e_rad for a pure swirl
        coords = np.asarray(coords, dtype=float)
        out = _zeros3(coords)
        out[0] = -profile.value(coords) ** 2 / coords
        return out

    def f_stretch(t, s):
        return np.zeros_like(np.atleast_1d(np.asarray(s, dtype=float)))

    def coupling_matrix(t, wall, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.zeros((2, 2, len(s)))

    def normal_coupling(t, wall, s):
        # (u0.grad u_b + u_b.grad u0) = -(2 U b_theta / r) e_rad
        s = np.atleast_1d(np.asarray(s, dtype=float))
        sign = 1.0 if wall == "inner" else -1.0
        c = np.zeros((2, len(s)))
        w = geom.wall(wall)
        theta_slot = w.tangent_names.index("theta")
        c[theta_slot] = -2.0 * profile.value(s) / s * sign
        return c

    def normal_coupling_deriv(t, wall, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        sign = 1.0 if wall == "inner" else -1.0
        c = np.zeros((2, len(s)))
        w = geom.wall(wall)
        theta_slot = w.tangent_names.index("theta")
        u, du = profile.value(s), profile.deriv(s)
        c[theta_slot] = -2.0 * (du * s - u) / s**2 * sign
        return c

    return BaseFlow(
        family=f"swirl({profile.coeffs})",
        geom=geom,
        steady=True,
        velocity=velocity,
        curl=curl,
        pressure_gradient=pressure_gradient,
        convective=convective,
        time_derivative=lambda t, c: _zeros3(c),
        forcing=lambda t, c: _zeros3(c),
        f_stretch=f_stretch,
        coupling_matrix=coupling_matrix,
        normal_coupling=normal_coupling,
        normal_coupling_deriv=normal_coupling_deriv,
        meta={"profile": profile},
    )


def rigid_rotation(omega: float, geom: geo.GeometryDescriptor) -> BaseFlow:
    flow = swirl_base_flow(LaurentProfile({1: omega}), geom)
    flow.family = f"rigid(omega={omega})"
    return flow


def potential_vortex(circulation: float, geom: geo.GeometryDescriptor) -> BaseFlow:
    flow = swirl_base_flow(LaurentProfile({-1: circulation}), geom)
    flow.family = f"vortex(c={circulation})"
    return flow


def channel_base_flow(profile: ShearProfile, geom: geo.GeometryDescriptor) -> BaseFlow:
    """u0 = U(y) e_x: exact steady parallel shear, constant pressure."""
    if geom.kind != geo.FLAT_CHANNEL:
        raise ConfigError("shear base flow requires the channel geometry")
    probe = np.linspace(0.0, geom.h, 64)
    if not np.all(np.isfinite(profile.value(probe))):
        raise InvalidProfileError("shear profile not finite on [0, H]")

    def velocity(t, coords):
        out = _zeros3(coords)
        out[0] = profile.value(coords)
        return out

    def curl(t, coords):
        # curl(U(y) e_x) = -U'(y) e_z
        out = _zeros3(coords)
        out[2] = -profile.deriv(coords)
        return out

    def zero_coeffs(t, wall, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.zeros((2, len(s)))

    return BaseFlow(
        family="shear",
        geom=geom,
        steady=True,
        velocity=velocity,
        curl=curl,
        pressure_gradient=lambda t, c: _zeros3(c),
        convective=lambda t, c: _zeros3(c),
        time_derivative=lambda t, c: _zeros3(c),
        forcing=lambda t, c: _zeros3(c),
        f_stretch=lambda t, s: np.zeros_like(np.atleast_1d(np.asarray(s, dtype=float))),
        coupling_matrix=lambda t, wall, s: np.zeros(
            (2, 2, len(np.atleast_1d(np.asarray(s, dtype=float))))),
        normal_coupling=zero_coeffs,
        normal_coupling_deriv=zero_coeffs,
        meta={"profile": profile},
    )


@dataclass
class ManufacturedCase:
    """Prescribed flow plus computed forcing; coefficients for layer tests."""

    name: str
    velocity: callable
    pressure_gradient: callable
    time_derivative: callable
    convective: callable
    curl: callable
    forcing: callable
    f_stretch: callable
    coupling_matrix: callable
    normal_coupling: callable
    normal_coupling_deriv: callable
    layer_forcing: callable | None = None


def manufactured_flow(case: ManufacturedCase, geom: geo.GeometryDescriptor) -> BaseFlow:
    return BaseFlow(
        family=f"manufactured:{case.name}",
        geom=geom,
        steady=False,
        velocity=case.velocity,
        curl=case.curl,
        pressure_gradient=case.pressure_gradient,
        convective=case.convective,
        time_derivative=case.time_derivative,
        forcing=case.forcing,
        f_stretch=case.f_stretch,
        coupling_matrix=case.coupling_matrix,
        normal_coupling=case.normal_coupling,
        normal_coupling_deriv=case.normal_coupling_deriv,
        layer_forcing=case.layer_forcing,
        meta={"case": case.name},
    )


def oscillating_shear_case(geom: geo.GeometryDescriptor, amp=1.0, omega=2.0,
                           f0=0.4, pressure_bug=0.0) -> ManufacturedCase:
    """Unsteady shear u0 = amp*cos(omega t)*cos(pi y/H) e_x with the forcing
    that makes it an exact forced solution; supplies a nonzero smooth f for
    the layer stretching term.  ``pressure_bug`` biases the pressure
    gradient to act as a negative control for the residual check."""
    if geom.kind != geo.FLAT_CHANNEL:
        raise ConfigError("oscillating shear case requires the channel")
    h = geom.h

    def shape(y):
        return np.cos(math.pi * np.asarray(y, dtype=float) / h)

    def velocity(t, coords):
        out = _zeros3(coords)
        out[0] = amp * math.cos(omega * t) * shape(coords)
        return out

    def time_derivative(t, coords):
        out = _zeros3(coords)
        out[0] = -amp * omega * math.sin(omega * t) * shape(coords)
        return out

    def pressure_gradient(t, coords):
        out = _zeros3(coords)
        out[1] = pressure_bug
        return out

    def forcing(t, coords):
        # exact balance of the unbiased flow: F = du/dt (convective term is 0)
        return time_derivative(t, coords)

    def curl(t, coords):
        coords = np.asarray(coords, dtype=float)
        out = _zeros3(coords)
        out[2] = amp * math.cos(omega * t) * math.pi / h * np.sin(math.pi * coords / h)
        return out

    def f_stretch(t, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.full(len(s), f0 * math.cos(omega * t))

    def coupling_matrix(t, wall, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        a = np.zeros((2, 2, len(s)))
        a[0, 0] = 0.3
        a[1, 1] = -0.2
        a[0, 1] = 0.1
        return a

    def zero_coeffs(t, wall, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.zeros((2, len(s)))

    return ManufacturedCase(
        name="oscillating_shear",
        velocity=velocity,
        pressure_gradient=pressure_gradient,
        time_derivative=time_derivative,
        convective=lambda t, c: _zeros3(c),
        curl=curl,
        forcing=forcing,
        f_stretch=f_stretch,
        coupling_matrix=coupling_matrix,
        normal_coupling=zero_coeffs,
        normal_coupling_deriv=zero_coeffs,
    )


def layer_mms_case(geom: geo.GeometryDescriptor, omega: float = 3.0,
                   f0: float = 0.0, a_mat=None,
                   coupling_mode: str = "cross") -> ManufacturedCase:
    """Manufactured layer solution b(t, z) = sin(omega t) exp(-z^2) w.

    Zero initial data and zero wall datum (d/dz b(t,0) = 0, so curl = 0).
    The forcing closes the layer equation for the requested coupling mode,
    so the marched solution must converge to b at the solver's orders.
    """
    w_dir = np.array([1.0, 0.5])
    a_mat = np.zeros((2, 2)) if a_mat is None else np.asarray(a_mat, dtype=float)
    j_rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    a_eff = j_rot @ a_mat if coupling_mode == "cross" else a_mat

    def exact(t, z):
        return math.sin(omega * t) * np.exp(-np.asarray(z) ** 2)[None, :] * w_dir[:, None]

    def layer_forcing(t, wall, s, z):
        # F = db/dt - d2b/dz2 + f z db/dz + A_eff b for the exact profile
        s = np.atleast_1d(np.asarray(s, dtype=float))
        z = np.asarray(z, dtype=float)
        a = math.sin(omega * t)
        da = omega * math.cos(omega * t)
        shape = np.exp(-(z**2))
        core = da - a * (4.0 * z**2 - 2.0) - 2.0 * f0 * math.cos(omega * t) * z**2 * a
        f2 = core[None, :] * w_dir[:, None] * shape[None, :] \
            + a * (a_eff @ w_dir)[:, None] * shape[None, :]
        return np.broadcast_to(f2[:, None, :], (2, len(s), len(z))).copy()

    def zero3(t, coords):
        return _zeros3(coords)

    def zero_coeffs(t, wall, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.zeros((2, len(s)))

    case = ManufacturedCase(
        name="layer_mms",
        velocity=zero3,
        pressure_gradient=zero3,
        time_derivative=zero3,
        convective=zero3,
        curl=zero3,
        forcing=zero3,
        f_stretch=lambda t, s: np.full(
            len(np.atleast_1d(np.asarray(s, dtype=float))), f0 * math.cos(omega * t)),
        coupling_matrix=lambda t, wall, s: np.repeat(
            a_mat[:, :, None], len(np.atleast_1d(np.asarray(s, dtype=float))), axis=2),
        normal_coupling=zero_coeffs,
        normal_coupling_deriv=zero_coeffs,
        layer_forcing=layer_forcing,
    )
    case.exact_profile = exact
    return case


# ---------------------------------------------------------------------------
# residual and boundary data
# ---------------------------------------------------------------------------


def euler_residual(flow: BaseFlow, coords, t: float = 0.0,
                   mode: str = "analytic") -> float:
    """Max norm of du/dt + (u.grad)u + grad(pi) - F plus the divergence.

    mode="analytic" uses the exact evaluators; mode="fd" replaces the
    pressure gradient by a centered difference of the integrated pressure
    when available, exposing the O(h^2) consistency of the tabulated data.
    """
    coords = np.asarray(coords, dtype=float)
    mom = (flow.time_derivative(t, coords) + flow.convective(t, coords)
           + flow.pressure_gradient(t, coords) - flow.forcing(t, coords))
    if mode == "fd":
        prof = flow.meta.get("profile")
        if isinstance(prof, LaurentProfile):
            from .spaces import diff_along
            pvals = prof.pressure(coords)
            mom = mom - flow.pressure_gradient(t, coords)
            mom[0] += diff_along(pvals, coords, axis=-1)
    div = flow.divergence(t, coords)
    return float(np.abs(mom).max() + np.abs(div).max())


@dataclass(frozen=True)
class BoundaryData:
    """Wall data for the layer solver.

    ``g`` holds curl(u0) x n in the tangential wall frame; the layer solver
    imposes d/dz u_b|_{z=0} = -g.  Sign convention recorded explicitly so
    it can be asserted against the closed-form heat benchmark.
    """

    wall_id: str
    tangent_names: tuple
    g: np.ndarray                 # (2, n_s)
    sign_convention: str = "solver applies dz u_b(0) = -g with g = curl(u0) x n"


def boundary_data_g(flow: BaseFlow, geom: geo.GeometryDescriptor,
                    t: float = 0.0, samples=None) -> dict:
    """curl(u0) x n per wall, expressed in the tangential wall frame.

    ``samples`` maps wall_id to slow-coordinate arrays (defaults to the wall
    point itself); the extended normal is constant along the wall-normal
    direction in both reduced geometries.
    """
    comp = {name: i for i, name in enumerate(geom.comp_names)}
    samples = samples or {}
    out = {}
    for w in geom.walls():
        s = np.atleast_1d(np.asarray(
            samples.get(w.wall_id, [w.coord]), dtype=float))
        cu = flow.curl(t, s)                       # (3, n_s)
        g_vec = np.cross(cu.T, w.normal).T         # right-handed frames
        g = np.stack([g_vec[comp[name]] for name in w.tangent_names])
        out[w.wall_id] = BoundaryData(wall_id=w.wall_id,
                                      tangent_names=w.tangent_names, g=g)
    return out
