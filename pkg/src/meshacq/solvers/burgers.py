"""Finite-volume viscous Burgers solver on arbitrary sorted 1D node sets.

Nodes carry the unknowns; each node owns the dual cell bounded by the
midpoints to its neighbours. Convective face fluxes use MUSCL
reconstruction (Van Leer) with node-to-face distances and a blend of the
Godunov and Rusanov fluxes. Diffusion uses a two-point face gradient.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.integrate import RK45

from ..core import BoundaryMode, BurgersParams


class IntegrationError(RuntimeError):
    def __init__(self, message: str, last_time: float):
        self.last_time = last_time
        super().__init__(f"{message} (last accepted time {last_time:.6g})")


@dataclass(frozen=True)
class AugmentationPolicy:
    max_gap_ratio: float = 3.0
    max_adjacent_ratio: float = 2.0
    anchor_walls: bool = True

    def __post_init__(self):
        if self.max_gap_ratio <= 1 or self.max_adjacent_ratio <= 1:
            raise ValueError("augmentation caps must exceed 1")


@dataclass(frozen=True)
class FluxConfig:
    blend: float = 0.8  # 1 = Godunov, 0 = Rusanov

    def __post_init__(self):
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("flux blend must lie in [0, 1]")


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-6
    atol: float = 1e-8
    cfl: float = 0.5
    speed_floor: float = 1e-8

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveDiagnostics:
    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evals: int = 0
    wall_time: float = 0.0
    augmented_nodes: int = 0


def van_leer_limiter(r):
    r = np.asarray(r, dtype=np.float64)
    return (r + np.abs(r)) / (1.0 + np.abs(r))


def augment_geometry(nodes, nominal_h: float, policy: AugmentationPolicy = AugmentationPolicy()):
    """Insert midpoints until gaps and neighbouring-gap ratios respect the caps.

    Returns the augmented node array and, for each original node, its index in
    the augmented array.
    """
    x = np.asarray(nodes, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("augmentation needs at least 2 nodes")
    if np.any(np.diff(x) <= 0):
        raise ValueError("nodes must be strictly increasing")
    pts = x.tolist()
    if policy.anchor_walls:
        if pts[0] > 0.0:
            pts.insert(0, 0.0)
        if pts[-1] < 1.0:
            pts.append(1.0)
    cap = policy.max_gap_ratio * nominal_h
    ratio = policy.max_adjacent_ratio
    # bisect the worst offender until nothing violates; each split halves a gap
    # so the loop terminates once all gaps are below cap and neighbours balanced
    while True:
        g = np.diff(pts)
        over = g - cap
        worst = int(np.argmax(over))
        if over[worst] > 1e-14:
            pts.insert(worst + 1, 0.5 * (pts[worst] + pts[worst + 1]))
            continue
        if len(g) < 2:
            break
        r = g[1:] / g[:-1]
        bad = np.maximum(r, 1.0 / r)
        k = int(np.argmax(bad))
        if bad[k] <= ratio * (1 + 1e-12):
            break
        j = k + 1 if r[k] > 1 else k  # split the larger of the pair
        pts.insert(j + 1, 0.5 * (pts[j] + pts[j + 1]))
    aug = np.asarray(pts)
    index_map = np.searchsorted(aug, x)
    return aug, index_map


class _Discretization:
    """Precomputed geometry for one node set."""

    def __init__(self, nodes: np.ndarray, periodic: bool, pin_left: bool, pin_right: bool):
        self.x = nodes
        self.periodic = periodic
        m = nodes.size
        if periodic:
            gaps = np.diff(np.append(nodes, nodes[0] + 1.0))  # gap i: node i -> i+1 (wrapped)
            self.gap = gaps
            self.vol = 0.5 * (gaps + np.roll(gaps, 1))
        else:
            gaps = np.diff(nodes)
            self.gap = gaps
            self.vol = np.empty(m)
            self.vol[1:-1] = 0.5 * (gaps[1:] + gaps[:-1])
            # outer cells extend to the domain edge (zero-flux) when not pinned
            self.vol[0] = 0.5 * gaps[0] + nodes[0]
            self.vol[-1] = 0.5 * gaps[-1] + (1.0 - nodes[-1])
        self.pin_left = pin_left
        self.pin_right = pin_right


@njit(cache=True)
def _face_flux(ul, ur, blend):
    fl = 0.5 * ul * ul
    fr = 0.5 * ur * ur
    rus = 0.5 * (fl + fr) - 0.5 * max(abs(ul), abs(ur)) * (ur - ul)
    # exact Riemann flux for the convex flux u^2/2
    if ul <= ur:
        god = 0.0 if (ul < 0.0 and ur > 0.0) else min(fl, fr)
    else:
        god = max(fl, fr)
    return blend * god + (1.0 - blend) * rus


@njit(cache=True)
def _limited_slope(um, u, up, gap_left, gap_right):
    fwd = (up - u) / gap_right
    if fwd == 0.0:
        return 0.0
    r = ((u - um) / gap_left) / fwd
    return (r + abs(r)) / (1.0 + abs(r)) * fwd


@njit(cache=True)
def _rhs_walls(u, gap, vol, nu, blend, pin_left, pin_right):
    m = u.size
    slope = np.zeros(m)
    for i in range(1, m - 1):
        slope[i] = _limited_slope(u[i - 1], u[i], u[i + 1], gap[i - 1], gap[i])
    out = np.empty(m)
    prev = 0.0
    for i in range(m - 1):
        ul = u[i] + slope[i] * 0.5 * gap[i]
        ur = u[i + 1] - slope[i + 1] * 0.5 * gap[i]
        f = _face_flux(ul, ur, blend) - nu * (u[i + 1] - u[i]) / gap[i]
        if i == 0:
            out[0] = 0.0 if pin_left else -f / vol[0]
        else:
            out[i] = -(f - prev) / vol[i]
        prev = f
    out[m - 1] = 0.0 if pin_right else prev / vol[m - 1]
    return out


@njit(cache=True)
def _rhs_periodic(u, gap, vol, nu, blend):
    m = u.size
    slope = np.empty(m)
    for i in range(m):
        slope[i] = _limited_slope(u[i - 1], u[i], u[(i + 1) % m], gap[i - 1], gap[i])
    flux = np.empty(m)
    for i in range(m):
        j = (i + 1) % m
        ul = u[i] + slope[i] * 0.5 * gap[i]
        ur = u[j] - slope[j] * 0.5 * gap[i]
        flux[i] = _face_flux(ul, ur, blend) - nu * (u[j] - u[i]) / gap[i]
    out = np.empty(m)
    for i in range(m):
        out[i] = -(flux[i] - flux[i - 1]) / vol[i]
    return out


def _make_rhs(disc: _Discretization, nu: float, blend: float, counter: list):
    gap, vol = disc.gap, disc.vol
    if disc.periodic:

        def rhs(_t, u):
            counter[0] += 1
            return _rhs_periodic(u, gap, vol, nu, blend)

    else:
        pin_l, pin_r = bool(disc.pin_left), bool(disc.pin_right)

        def rhs(_t, u):
            counter[0] += 1
            return _rhs_walls(u, gap, vol, nu, blend, pin_l, pin_r)

    return rhs


def _integrate(u0, disc, params: BurgersParams, flux: FluxConfig, integ: IntegratorConfig, diag: SolveDiagnostics):
    counter = [0]
    rhs = _make_rhs(disc, params.viscosity, flux.blend, counter)
    min_gap = float(np.min(disc.gap))
    speed = max(float(np.max(np.abs(u0))), integ.speed_floor)
    dt0 = min(integ.cfl * min_gap / speed, params.horizon)
    stepper = RK45(rhs, 0.0, u0, params.horizon, rtol=integ.rtol, atol=integ.atol, first_step=dt0)
    accepted = 0
    while stepper.status == "running":
        msg = stepper.step()
        if stepper.status == "failed":
            diag.rhs_evals += counter[0]
            raise IntegrationError(f"Burgers integration failed: {msg}", float(stepper.t))
        accepted += 1
    diag.rhs_evals += counter[0]
    diag.accepted_steps += accepted
    # RK45 costs 6 evaluations per attempt after the initial one
    diag.rejected_steps += max((counter[0] - 1) // 6 - accepted, 0)
    return stepper.y


def burgers_solve_nonuniform(
    ic_values,
    nodes,
    params: BurgersParams = BurgersParams(),
    flux: FluxConfig = FluxConfig(),
    aug: AugmentationPolicy | None = AugmentationPolicy(),
    restrict_output: bool = True,
    integrator: IntegratorConfig = IntegratorConfig(),
    diagnostics: SolveDiagnostics | None = None,
):
    """Advance u_t + u u_x = nu u_xx to the horizon on the given nodes.

    The initial condition is linearly re-interpolated onto the augmented node
    set. With ``restrict_output`` the result is reported on the original nodes,
    otherwise ``(augmented_nodes, values)`` is returned.
    """
    start = time.perf_counter()
    diag = diagnostics if diagnostics is not None else SolveDiagnostics()
    x = np.asarray(nodes, dtype=np.float64)
    u0 = np.asarray(ic_values, dtype=np.float64)
    if x.shape != u0.shape:
        raise ValueError(f"ic shape {u0.shape} does not match nodes {x.shape}")
    if np.any((x < 0) | (x > 1)):
        raise ValueError("nodes must lie in [0, 1]")
    if not np.all(np.isfinite(u0)):
        raise ValueError("initial condition must be finite")
    periodic = params.boundary is BoundaryMode.PERIODIC
    h = 1.0 / (params.n - 1)
    if aug is not None:
        xa, index_map = augment_geometry(x, h, aug)
    else:
        xa, index_map = x.copy(), np.arange(x.size)
    ua = np.interp(xa, x, u0)
    if periodic:
        # the node at 1 is the image of the node at 0
        dup = xa.size > 1 and xa[0] == 0.0 and xa[-1] == 1.0
        core_x = xa[:-1] if dup else xa
        disc = _Discretization(core_x, True, False, False)
        ucore = _integrate(ua[: core_x.size], disc, params, flux, integrator, diag)
        ua_t = np.append(ucore, ucore[0]) if dup else ucore
    else:
        disc = _Discretization(xa, False, xa[0] == 0.0, xa[-1] == 1.0)
        ua_t = _integrate(ua, disc, params, flux, integrator, diag)
    diag.augmented_nodes = xa.size
    diag.wall_time += time.perf_counter() - start
    if restrict_output:
        return ua_t[index_map]
    return xa, ua_t


def burgers_solve_uniform(ic, params: BurgersParams = BurgersParams(), flux: FluxConfig = FluxConfig(), **kwargs):
    """Dense reference solve on the uniform grid of ``params.n`` nodes."""
    x = np.linspace(0.0, 1.0, params.n)
    return burgers_solve_nonuniform(ic, x, params, flux, **kwargs)
