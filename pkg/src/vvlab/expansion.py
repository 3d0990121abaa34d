"""Ansatz assembly, remainder extraction, and the Weyl/Leray split.

The approximate field is u0 + sqrt(nu) u_b(x, phi/sqrt(nu)) + nu v, layer
terms cut off inside the collar; the remainder R = (u_nu - ansatz)/nu is
what the convergence theory bounds uniformly.  In the reduced symmetric
geometries the Weyl decomposition is exact: gradients are precisely the
wall-normal component fields (potential by radial quadrature) and the
divergence-free tangent fields are the remaining components, so the
projector is idempotent and orthogonal to round-off.  A finite-difference
Neumann solve is kept alongside as an independent cross-check of the
potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .errors import AlignmentError, ConfigError, SolverError
from .euler import BaseFlow
from .layer import LayerProfile, slow_curl_at_wall, v_wall_value, wall_value
from .ns import ViscousSolution
from .spaces import VolumeField, curl_volume, eval_profile_on_wall, volume_norm


@dataclass
class AnsatzBundle:
    """Composite approximation and its pieces on a volume grid."""

    nu: float
    geom: geo.GeometryDescriptor
    coords: np.ndarray
    times: np.ndarray
    u_approx: np.ndarray           # (n_t, 3, n)
    u0_part: np.ndarray
    layer_part: np.ndarray         # already scaled by sqrt(nu)
    v_part: np.ndarray             # already scaled by nu
    interp_error_est: float = 0.0

    def field_at(self, it: int) -> VolumeField:
        return VolumeField(geom=self.geom, coords=self.coords,
                           values=self.u_approx[it])


def assemble_ansatz(flow: BaseFlow, profile: LayerProfile,
                    geom: geo.GeometryDescriptor, nu: float,
                    coords: np.ndarray, times=None) -> AnsatzBundle:
    """Evaluate u0 + sqrt(nu) u_b + nu v on the volume grid at shared times."""
    if nu <= 0:
        raise ConfigError("nu must be positive")
    if profile.geom.kind != geom.kind:
        raise ConfigError("profile geometry does not match")
    times = profile.times if times is None else np.asarray(times, dtype=float)
    idx = [profile.time_index(t) for t in times]   # AlignmentError on mismatch

    comp = {name: i for i, name in enumerate(geom.comp_names)}
    n = len(coords)
    n_t = len(times)
    u0_part = np.zeros((n_t, 3, n))
    layer_part = np.zeros((n_t, 3, n))
    v_part = np.zeros((n_t, 3, n))
    interp_est = 0.0

    for jt, (t, it) in enumerate(zip(times, idx)):
        u0_part[jt] = flow.velocity(t, coords)
        for w in geom.walls():
            pf = profile.profile(w.wall_id, it)
            vals = eval_profile_on_wall(pf, geom, w.wall_id, coords, nu)
            for slot, name in enumerate(w.tangent_names):
                layer_part[jt, comp[name]] += math.sqrt(nu) * vals[slot]
            interp_est = max(interp_est, _interp_error_estimate(pf, vals))
            series = profile.walls[w.wall_id]
            if series.v is not None:
                vpf = profile.v_profile(w.wall_id, it)
                vbar = eval_profile_on_wall(vpf, geom, w.wall_id, coords, nu)[0]
                v_part[jt] += nu * vbar[None, :] * w.normal[:, None]

    return AnsatzBundle(
        nu=nu, geom=geom, coords=np.asarray(coords, dtype=float),
        times=np.asarray(times, dtype=float),
        u_approx=u0_part + layer_part + v_part,
        u0_part=u0_part, layer_part=layer_part, v_part=v_part,
        interp_error_est=interp_est * math.sqrt(nu),
    )


def _interp_error_estimate(pf, evaluated) -> float:
    """Crude cubic-interpolation error proxy: node-scale curvature of the
    profile against the evaluated magnitude scale."""
    z = pf.grid.z
    if pf.grid.nz < 4:
        return 0.0
    d2 = np.abs(np.diff(pf.values, n=2, axis=-1)).max(initial=0.0)
    return float(d2) * 0.05


# ---------------------------------------------------------------------------
# Leray / Weyl projection
# ---------------------------------------------------------------------------


def solve_neumann_potential(vf: VolumeField) -> np.ndarray:
    """Potential chi with grad chi matching the normal component.

    In the reduced geometries the Neumann problem div(grad chi) = div u,
    d(chi)/dn = u . n integrates in closed form: chi' = u_n along the cross
    coordinate.  Returned with weighted mean zero (the compatibility and
    gauge fixing of the Neumann problem).
    """
    un = vf.values[vf.geom.normal_comp]
    x = vf.coords
    chi = np.concatenate([[0.0], np.cumsum(0.5 * (un[1:] + un[:-1]) * np.diff(x))])
    w = vf.geom.quadrature_weights(x)
    chi -= np.sum(w * chi) / np.sum(w)
    return chi


def solve_neumann_potential_fd(vf: VolumeField) -> np.ndarray:
    """Tridiagonal finite-difference Neumann solve for the same potential.

    Variational form: minimize ||G chi - u_mid||^2 weighted with the
    midpoint measure (G the staggered gradient), whose normal equations are
    the measure-weighted Neumann Laplace problem with natural flux
    conditions.  Independent of the quadrature route; used as a
    cross-check.  Raises SolverError when the solve fails.
    """
    x = vf.coords
    n = len(x)
    h = x[1] - x[0]
    m = vf.geom.measure(x)
    un = vf.values[vf.geom.normal_comp]
    w_mid = 0.5 * (m[1:] + m[:-1]) * h               # midpoint measure weights
    u_mid = 0.5 * (un[1:] + un[:-1])
    # normal equations of the staggered least squares: (G^T W G) chi = G^T W u
    lo = -w_mid / h**2
    up = -w_mid / h**2
    di = np.zeros(n)
    di[0] = w_mid[0] / h**2
    di[-1] = w_mid[-1] / h**2
    di[1:-1] = (w_mid[:-1] + w_mid[1:]) / h**2
    flux = w_mid * u_mid / h
    rhs = np.zeros(n)
    rhs[0] = -flux[0]
    rhs[-1] = flux[-1]
    rhs[1:-1] = flux[:-1] - flux[1:]
    a = sp.diags([lo, di, up], [-1, 0, 1], format="lil")
    # pin the gauge at node 0 (rhs is compatible: it sums to zero)
    a[0, :] = 0.0
    a[0, 0] = 1.0
    rhs[0] = 0.0
    try:
        chi = spla.splu(a.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SolverError("Neumann solve failed", residual=None) from exc
    res = float(np.abs(a.tocsc() @ chi - rhs).max())
    if not np.isfinite(res) or res > 1e-8 * max(1.0, float(np.abs(rhs).max())):
        raise SolverError("Neumann solve did not converge", residual=res)
    w = vf.geom.quadrature_weights(x)
    chi -= np.sum(w * chi) / np.sum(w)
    return chi


def leray_project(vf: VolumeField):
    """Split a volume field into (divergence-free tangent part, gradient part).

    Exact in the reduced geometries: the gradient part is the wall-normal
    component (whose potential solve_neumann_potential integrates), the
    projected part the tangential components.  Idempotent and orthogonal to
    round-off by construction.
    """
    grad_vals = np.zeros_like(vf.values)
    nc = vf.geom.normal_comp
    grad_vals[nc] = vf.values[nc]
    p_vals = vf.values - grad_vals
    p_field = VolumeField(geom=vf.geom, coords=vf.coords, values=p_vals)
    g_field = VolumeField(geom=vf.geom, coords=vf.coords, values=grad_vals)
    return p_field, g_field


# ---------------------------------------------------------------------------
# remainder
# ---------------------------------------------------------------------------


@dataclass
class RemainderField:
    nu: float
    geom: geo.GeometryDescriptor
    coords: np.ndarray
    times: np.ndarray
    values: np.ndarray             # (n_t, 3, n): (u_nu - ansatz)/nu
    p_values: np.ndarray           # Leray-projected part
    g_values: np.ndarray           # gradient part
    interp_error_est: float = 0.0

    def field_at(self, it: int, part: str = "full") -> VolumeField:
        vals = {"full": self.values, "P": self.p_values,
                "I-P": self.g_values}[part][it]
        return VolumeField(geom=self.geom, coords=self.coords, values=vals)

    def norm_rows(self, specs) -> list:
        rows = []
        for it, t in enumerate(self.times):
            for spec in specs:
                for part in ("full", "P", "I-P"):
                    rows.append((float(t), spec if isinstance(spec, str) else spec.label,
                                 part, volume_norm(self.field_at(it, part), spec)))
        return rows


def extract_remainder(sol: ViscousSolution, bundle: AnsatzBundle) -> RemainderField:
    """R = (u_nu - ansatz)/nu at the shared time stamps."""
    if abs(sol.nu - bundle.nu) > 1e-15 * max(sol.nu, bundle.nu):
        raise ConfigError("viscosities of solution and ansatz differ")
    if sol.geom.kind != bundle.geom.kind or len(sol.coords) != len(bundle.coords) \
            or not np.allclose(sol.coords, bundle.coords, rtol=0.0, atol=1e-12):
        raise ConfigError("grid incompatibility between solution and ansatz")
    n_t = len(bundle.times)
    values = np.zeros_like(bundle.u_approx)
    p_values = np.zeros_like(values)
    g_values = np.zeros_like(values)
    for jt, t in enumerate(bundle.times):
        it = sol.time_index(t)                        # raises if not stored
        values[jt] = (sol.values[it] - bundle.u_approx[jt]) / bundle.nu
        vf = VolumeField(geom=bundle.geom, coords=bundle.coords, values=values[jt])
        p_field, g_field = leray_project(vf)
        p_values[jt] = p_field.values
        g_values[jt] = g_field.values
    return RemainderField(
        nu=bundle.nu, geom=bundle.geom, coords=bundle.coords,
        times=bundle.times.copy(), values=values,
        p_values=p_values, g_values=g_values,
        interp_error_est=bundle.interp_error_est / bundle.nu,
    )


def remainder_bc_residual(rem: RemainderField, profile: LayerProfile,
                          nu: float) -> tuple:
    """Max-norm residuals of the two remainder wall identities.

    First: R . n + vbar(t, 0) = 0.  Second (tangential, vector magnitude):
    curl R x n + nu^{-1/2} curl_x u_b|_{z=0} x n + curl_x v|_{z=0} x n = 0.
    The slow curl of v vanishes for wall-normal slow sampling.
    """
    geom = rem.geom
    res_n = 0.0
    res_t = 0.0
    comp = {name: i for i, name in enumerate(geom.comp_names)}
    for it, t in enumerate(rem.times):
        ip = profile.time_index(t)
        vf = rem.field_at(it)
        curl = curl_volume(vf)
        for left, w in zip((True, False), geom.walls()):
            i = 0 if left else -1
            rn = float(vf.values[:, i] @ w.normal)
            res_n = max(res_n, abs(rn + v_wall_value(profile, w.wall_id, ip)))
            curl_wall = curl[:, i]
            term_r = np.cross(curl_wall, w.normal)
            cx = slow_curl_at_wall(profile, w.wall_id, ip)
            term_b = np.cross(cx, w.normal) / math.sqrt(nu)
            res_t = max(res_t, float(np.linalg.norm(term_r + term_b)))
    return res_n, res_t
