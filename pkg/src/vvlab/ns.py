"""Viscous reference solutions with vorticity-free slip walls.

The studied flows are exact invariant manifolds of the slip-wall problem,
so the solver reduces to one parabolic equation in the cross coordinate:

* annulus swirl:  d/dt u_th = nu (u_th'' + u_th'/r - u_th/r^2), with
  (1/r) d(r u_th)/dr = 0 at r1 and r2 (zero wall vorticity);
* channel shear:  d/dt u_x = nu u_x'', with u_x' = 0 at both walls.

Time stepping is Crank-Nicolson, second order in space; the wall condition
is folded into the operator through a ghost node eliminated with the
second-order centered stencil of the vorticity (channel: mirror ghost).
The first steps may be taken as backward-Euler half steps to damp the
incompatible start (the initial vorticity does not satisfy the wall
condition), which keeps the scheme second order globally.

Pressure is recovered as d(pi)/dr = u_th^2 / r when needed and not stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .errors import ConfigError, StepSizeError
from .spaces import VolumeField, curl_volume

MIN_POINTS = 32


@dataclass
class ViscousSolution:
    nu: float
    geom: geo.GeometryDescriptor
    coords: np.ndarray
    times: np.ndarray
    values: np.ndarray             # (n_t, 3, n) in the geometry frame
    dt: float
    t_end: float
    scheme: dict = field(default_factory=dict)

    def field_at(self, it: int) -> VolumeField:
        return VolumeField(geom=self.geom, coords=self.coords,
                           values=self.values[it])

    def time_index(self, t: float) -> int:
        idx = np.nonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-10))[0]
        if len(idx) == 0:
            raise ConfigError(f"time {t} not stored")
        return int(idx[0])


def _swirl_operator(r: np.ndarray) -> sp.spmatrix:
    """u'' + u'/r - u/r^2 with the zero-vorticity ghost rows folded in."""
    n = len(r)
    h = r[1] - r[0]
    lo = np.empty(n - 1)
    di = np.empty(n)
    up = np.empty(n - 1)
    ri = r[1:-1]
    lo[:-1] = 1.0 / h**2 - 1.0 / (2.0 * h * ri)
    di[1:-1] = -2.0 / h**2 - 1.0 / ri**2
    up[1:] = 1.0 / h**2 + 1.0 / (2.0 * h * ri)
    # ghost from (u_1 - u_{-1})/(2h) + u_0/r_0 = 0
    di[0] = -2.0 / h**2 + 2.0 / (h * r[0]) - 2.0 / r[0] ** 2
    up[0] = 2.0 / h**2
    # ghost from (u_N - u_{N-2})/(2h) + u_{N-1}/r_{N-1} = 0
    di[-1] = -2.0 / h**2 - 2.0 / (h * r[-1]) - 2.0 / r[-1] ** 2
    lo[-1] = 2.0 / h**2
    return sp.diags([lo, di, up], [-1, 0, 1], format="csc")


def _channel_operator(y: np.ndarray) -> sp.spmatrix:
    """u'' with mirror-ghost Neumann rows (u' = 0 at both walls)."""
    n = len(y)
    h = y[1] - y[0]
    lo = np.full(n - 1, 1.0 / h**2)
    di = np.full(n, -2.0 / h**2)
    up = np.full(n - 1, 1.0 / h**2)
    up[0] = 2.0 / h**2
    lo[-1] = 2.0 / h**2
    return sp.diags([lo, di, up], [-1, 0, 1], format="csc")


def _drive_swirl(r, prof) -> np.ndarray:
    """nu-free drive L(u0) for the deviation-form march, swirl case.

    Interior rows use the exact profile derivatives (the centered stencil
    applied to order-one values loses all significant digits on fine grids
    because the true residual is O(h^2)); the ghost wall rows, whose values
    are genuinely large for incompatible data, use the discrete formula.
    """
    h = r[1] - r[0]
    v = prof.value(r)
    out = prof.deriv(r, 2) + prof.deriv(r, 1) / r - v / r**2
    out[0] = 2.0 * (v[1] - v[0]) / h**2 + 2.0 * v[0] / (h * r[0]) - 2.0 * v[0] / r[0] ** 2
    out[-1] = 2.0 * (v[-2] - v[-1]) / h**2 - 2.0 * v[-1] / (h * r[-1]) \
        - 2.0 * v[-1] / r[-1] ** 2
    return out


def _drive_channel(y, prof) -> np.ndarray:
    h = y[1] - y[0]
    v = prof.value(y)
    out = prof.deriv(y, 2)
    out[0] = 2.0 * (v[1] - v[0]) / h**2
    out[-1] = 2.0 * (v[-2] - v[-1]) / h**2
    return out


def _resolve_store_steps(dt, t_end, store_times, store_every):
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise ConfigError("t_end must be an integer multiple of dt")
    if store_times is not None:
        steps = []
        for t in store_times:
            k = int(round(t / dt))
            if abs(k * dt - t) > 1e-9 * max(t_end, 1.0) or not (0 <= k <= n_steps):
                raise ConfigError(f"store time {t} is not a step multiple within [0, t_end]")
            steps.append(k)
        return n_steps, sorted(set(steps))
    every = store_every or max(1, n_steps // 8)
    steps = list(range(0, n_steps + 1, every))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return n_steps, steps


def _march(op, u0, nu, dt, n_steps, store_steps, rannacher, drive=None):
    """March in deviation form u = u0 + w, w(0) = 0.

    The constant drive nu*L(u0) enters the right-hand side, so w carries
    full relative precision even when it stays many orders below u0 (exact
    steady states then deviate only by the scheme's truncation, not by
    round-off of order-one arithmetic).
    """
    n = len(u0)
    eye = sp.identity(n, format="csc")
    lu = spla.splu((eye - 0.5 * nu * dt * op).tocsc())
    # backward Euler over dt/2 shares the CN matrix (I - nu dt/2 L)
    m_plus = eye + 0.5 * nu * dt * op
    drive = nu * (op @ u0 if drive is None else drive)

    out = np.zeros((len(store_steps), n))
    out_idx = {k: i for i, k in enumerate(store_steps)}
    w = np.zeros(n)
    if 0 in out_idx:
        out[out_idx[0]] = u0
    for k in range(n_steps):
        if k < rannacher:
            w = lu.solve(w + 0.5 * dt * drive)
            w = lu.solve(w + 0.5 * dt * drive)
        else:
            w = lu.solve(m_plus @ w + dt * drive)
        if (k + 1) in out_idx:
            out[out_idx[k + 1]] = u0 + w
    return out


def _pack(values_1d, comp_index, n_t, n):
    vals = np.zeros((n_t, 3, n))
    vals[:, comp_index, :] = values_1d
    return vals


def solve_ns_swirl(geom: geo.GeometryDescriptor, u0_profile, nu: float,
                   nr: int, dt: float, t_end: float,
                   store_times=None, store_every=None,
                   rannacher: int = 2) -> ViscousSolution:
    """Azimuthal swirl solve in the annulus with zero wall vorticity."""
    if geom.kind != geo.ANNULUS_GAP:
        raise ConfigError("swirl solver requires the annulus geometry")
    if nr < MIN_POINTS:
        raise ConfigError(f"nr must be >= {MIN_POINTS}")
    if dt <= 0:
        raise StepSizeError("dt must be positive")
    r = geom.volume_grid(nr)
    if hasattr(u0_profile, "value"):
        u0 = u0_profile.value(r)
        drive = _drive_swirl(r, u0_profile) if hasattr(u0_profile, "deriv") else None
    else:
        u0 = u0_profile(r)
        drive = None
    n_steps, store_steps = _resolve_store_steps(dt, t_end, store_times, store_every)
    series = _march(_swirl_operator(r), np.asarray(u0, dtype=float), nu, dt,
                    n_steps, store_steps, rannacher, drive=drive)
    times = np.array([k * dt for k in store_steps])
    return ViscousSolution(
        nu=nu, geom=geom, coords=r, times=times,
        values=_pack(series, 1, len(store_steps), nr),
        dt=dt, t_end=t_end,
        scheme={"method": "crank-nicolson", "bc": "ghost zero-vorticity",
                "rannacher_steps": rannacher, "nr": nr},
    )


def solve_ns_channel(geom: geo.GeometryDescriptor, u0_profile, nu: float,
                     ny: int, dt: float, t_end: float,
                     store_times=None, store_every=None,
                     rannacher: int = 2) -> ViscousSolution:
    """Parallel shear solve in the channel with zero wall shear of the layer
    component (u_x' = 0 at both walls)."""
    if geom.kind != geo.FLAT_CHANNEL:
        raise ConfigError("channel solver requires the flat channel geometry")
    if ny < MIN_POINTS:
        raise ConfigError(f"ny must be >= {MIN_POINTS}")
    if dt <= 0:
        raise StepSizeError("dt must be positive")
    y = geom.volume_grid(ny)
    if hasattr(u0_profile, "value"):
        u0 = u0_profile.value(y)
        drive = _drive_channel(y, u0_profile) if hasattr(u0_profile, "deriv") else None
    else:
        u0 = u0_profile(y)
        drive = None
    n_steps, store_steps = _resolve_store_steps(dt, t_end, store_times, store_every)
    series = _march(_channel_operator(y), np.asarray(u0, dtype=float), nu, dt,
                    n_steps, store_steps, rannacher, drive=drive)
    times = np.array([k * dt for k in store_steps])
    return ViscousSolution(
        nu=nu, geom=geom, coords=y, times=times,
        values=_pack(series, 0, len(store_steps), ny),
        dt=dt, t_end=t_end,
        scheme={"method": "crank-nicolson", "bc": "mirror-ghost Neumann",
                "rannacher_steps": rannacher, "ny": ny},
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def energy_identity_residual(sol: ViscousSolution) -> np.ndarray:
    """Per stored interval: |d(E)/dt + nu ||curl u||^2| / E_0.

    The dissipation is the trapezoid average of the two endpoint values, so
    the residual is O(dt_store^2) plus the O(h^2) error of the discrete
    curl.  The solution must be stored densely enough in time.
    """
    w = sol.geom.quadrature_weights(sol.coords)
    n_t = len(sol.times)
    energy = np.array([
        0.5 * float(np.sum(w * np.sum(sol.values[i] ** 2, axis=0)))
        for i in range(n_t)
    ])
    diss = np.array([
        float(np.sum(w * np.sum(curl_volume(sol.field_at(i)) ** 2, axis=0)))
        for i in range(n_t)
    ])
    e0 = energy[0] if energy[0] > 0 else 1.0
    dts = np.diff(sol.times)
    res = np.abs(np.diff(energy) / dts
                 + sol.nu * 0.5 * (diss[1:] + diss[:-1]))
    return res / e0


def _one_sided_deriv(u: np.ndarray, h: float, left: bool) -> float:
    """Fourth-order 5-point one-sided first derivative at the boundary."""
    if left:
        c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
        return float(c @ u[:5])
    c = np.array([3.0, -16.0, 36.0, -48.0, 25.0]) / (12.0 * h)
    return float(c @ u[-5:])


def bc_residual(sol: ViscousSolution) -> np.ndarray:
    """Max over walls of |u . n| + |curl u x n| per stored time.

    Measured with fourth-order one-sided stencils (a different stencil than
    the one imposing the condition, so this reflects the solution's true
    boundary error, not the scheme's algebraic identity).
    """
    h = sol.coords[1] - sol.coords[0]
    geom = sol.geom
    out = np.zeros(len(sol.times))
    n_comp = geom.normal_comp
    for it in range(len(sol.times)):
        vals = sol.values[it]
        worst = 0.0
        for left, wall in zip((True, False), geom.walls()):
            i = 0 if left else -1
            un = abs(vals[n_comp, i])
            if geom.kind == geo.ANNULUS_GAP:
                du = _one_sided_deriv(vals[1], h, left)
                omega = du + vals[1, i] / sol.coords[i]
                tang = abs(omega)
            else:
                dux = _one_sided_deriv(vals[0], h, left)
                duz = _one_sided_deriv(vals[2], h, left)
                tang = math.hypot(dux, duz)
            worst = max(worst, un + tang)
        out[it] = worst
    return out


def angular_momentum(sol: ViscousSolution, it: int) -> float:
    """Total angular momentum int u_theta r dV (annulus only)."""
    w = sol.geom.quadrature_weights(sol.coords)
    return float(np.sum(w * sol.coords * sol.values[it, 1]))


def radial_pressure_gradient(sol: ViscousSolution, it: int) -> np.ndarray:
    """Recovered pressure gradient d(pi)/dr = u_theta^2 / r of a swirl state.

    Not stored with the solution; the swirl manifold eliminates the pressure
    from the evolution and this is its pointwise reconstruction.
    """
    if sol.geom.kind != geo.ANNULUS_GAP:
        raise ConfigError("pressure recovery applies to the annulus swirl")
    return sol.values[it, 1] ** 2 / sol.coords
