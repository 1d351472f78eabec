"""Equilibria, stability and planar phase portraits of the noiseless bounded system.

Equilibria are found twice, independently: a scalar root problem in s (after
eliminating z and h algebraically) and a 3-D Newton polish with a
finite-difference Jacobian. Eigenvalues come from the Jacobian of the vector
field with ds/dt already substituted into dz/dt and dh/dt, which is exactly how
:func:`cyclesim._kernels.bounded_rhs` evaluates it.

Phase portraits live in the planes ``z - c1*s = C``. The in-plane coordinate
``s'`` is the Euclidean coordinate along the direction (1, c1) of the (s, z)
plane::

    s' = (s + c1*z) / sqrt(1 + c1**2)

so any displacement along the plane normal leaves (s', h) unchanged. Within a
plane, z is slaved to ``C + c1*s`` and the (small) normal velocity is dropped;
the portrait, separatrix and basins are those of this 2-D restricted flow. How
far the true 3-D flow drifts off the plane is reported per fan trajectory.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect

from . import _kernels as _k
from .model import BoundedState, Params

STABLE = "stable_focus_node"
SADDLE = "saddle"
OTHER = "other"

DEFAULT_PLANES = (-0.48, -1.00, -1.11)
FD_REL_STEP = 1e-6


# ---------------------------------------------------------------------------
# Generic helpers


def _scan_roots(f, lo, hi, n):
    """All roots of scalar ``f`` on [lo, hi] by sign scan plus bisection."""
    grid = np.linspace(lo, hi, n)
    vals = np.array([f(x) for x in grid])
    roots = []
    for i in range(n):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif i + 1 < n and vals[i] * vals[i + 1] < 0.0:
            roots.append(bisect(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15,
                                maxiter=200))
    return roots


def numeric_jacobian(fun, x, rel_step=FD_REL_STEP):
    """Central-difference Jacobian of ``fun: R^n -> R^n`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        step = rel_step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        J[:, j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * step)
    return J


def classify(eigenvalues) -> str:
    """``stable_focus_node`` if every real part is negative, ``saddle`` if
    real parts have mixed signs, ``other`` otherwise."""
    re = np.real(np.asarray(eigenvalues))
    if np.all(re < 0):
        return STABLE
    if np.any(re < 0) and np.any(re > 0):
        return SADDLE
    return OTHER


# ---------------------------------------------------------------------------
# Equilibria of the bounded system


@dataclass(frozen=True)
class EquilibriumPoint:
    state: BoundedState
    eigenvalues: tuple
    classification: str
    residual: tuple = ()
    scalar_root: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "h": self.state.h, "s": self.state.s, "z": self.state.z,
            "eigenvalues": [[float(np.real(e)), float(np.imag(e))] for e in self.eigenvalues],
            "classification": self.classification,
            "residual": [float(r) for r in self.residual],
            "scalar_root": self.scalar_root,
        }


def equilibrium_h(s, params: Params):
    """h on the equilibrium manifold: dh/dt = 0 with ds/dt = dz/dt = 0."""
    return math.tanh((params.k1 + params.k2) * params.c2 * (s - params.s_star)
                     + params.epsilon)


def equilibrium_z(s, params: Params):
    """z on the equilibrium line ``exp(z) = b + tau_y*c2*(s - s_star)``."""
    arg = params.b + params.tau_y * params.c2 * (s - params.s_star)
    if not arg > 0:
        raise ValueError(f"no equilibrium z for s={s!r}: b + tau_y*c2*(s - s*) = {arg!r} <= 0")
    return math.log(arg)


def scalar_residual(s, params: Params):
    return -s + math.tanh(params.beta1 * s + params.beta2 * equilibrium_h(s, params))


def _bounded_field(params):
    P = params.as_array()

    def fun(x):
        return np.array(_k.bounded_rhs(x[0], x[1], x[2], 0.0, P))
    return fun


def bounded_jacobian(state: BoundedState, params: Params) -> np.ndarray:
    return numeric_jacobian(_bounded_field(params), state.as_array())


def _newton(fun, x, tol=1e-15, max_iter=30):
    x = np.array(x, dtype=np.float64)
    for _ in range(max_iter):
        g = fun(x)
        if np.max(np.abs(g)) < tol:
            break
        J = numeric_jacobian(fun, x)
        dx = np.linalg.solve(J, -g)
        x = x + dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    return x


def find_equilibria(params: Params, n_scan: int = 20001, expected=None):
    """Fixed points of the noiseless bounded system, sorted by s.

    If ``expected`` is given and the count differs, a ``RuntimeWarning`` is
    issued.
    """
    roots = _scan_roots(lambda s: scalar_residual(s, params), -1.0, 1.0, n_scan)
    fun = _bounded_field(params)
    points = []
    for s0 in roots:
        try:
            z0 = equilibrium_z(s0, params)
        except ValueError:
            warnings.warn(f"discarding root s={s0:.6g}: exp(z) argument <= 0",
                          RuntimeWarning, stacklevel=2)
            continue
        x = _newton(fun, [equilibrium_h(s0, params), s0, z0])
        eig = np.linalg.eigvals(numeric_jacobian(fun, x))
        eig = tuple(sorted(eig, key=lambda e: (np.real(e), np.imag(e))))
        points.append(EquilibriumPoint(
            state=BoundedState(float(x[0]), float(x[1]), float(x[2])),
            eigenvalues=eig, classification=classify(eig),
            residual=tuple(float(v) for v in fun(x)), scalar_root=float(s0)))
    points.sort(key=lambda e: e.state.s)
    if expected is not None and len(points) != expected:
        warnings.warn(f"found {len(points)} equilibria, expected {expected}",
                      RuntimeWarning, stacklevel=2)
    return points


@lru_cache(maxsize=64)
def _cached_equilibria(params: Params):
    return tuple(find_equilibria(params))


def expansion_equilibrium(params: Params) -> EquilibriumPoint:
    """The stable equilibrium with the largest s."""
    stable = [e for e in _cached_equilibria(params) if e.classification == STABLE]
    if not stable:
        raise ValueError("no stable equilibrium for these parameters")
    return stable[-1]


def sentiment_equilibria(beta1, beta2=1.0, h=0.0, n_scan=20001):
    """Roots of ``-s + tanh(beta1*s + beta2*h)`` with their stability.

    Returns a list of ``(s, is_stable)``; stability is the sign of the
    derivative ``-1 + beta1 * sech^2``.
    """
    f = lambda s: -s + math.tanh(beta1 * s + beta2 * h)  # noqa: E731
    out = []
    for s in _scan_roots(f, -1.0, 1.0, n_scan):
        slope = -1.0 + beta1 / math.cosh(beta1 * s + beta2 * h) ** 2
        out.append((s, slope < 0))
    return out


# ---------------------------------------------------------------------------
# Planes z - c1*s = C


@dataclass(frozen=True)
class PlaneSpec:
    C: float
    c1: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.C) and math.isfinite(self.c1)):
            raise ValueError("plane constants must be finite")

    @property
    def norm(self) -> float:
        return math.sqrt(1.0 + self.c1 * self.c1)

    def s_prime(self, s, z):
        return (np.asarray(s) + self.c1 * np.asarray(z)) / self.norm

    def s_prime_of_plane_s(self, s):
        """s' of the point with in-plane sentiment ``s`` (z = C + c1*s)."""
        return (np.asarray(s) * (1.0 + self.c1 ** 2) + self.c1 * self.C) / self.norm

    def plane_s_of_s_prime(self, sp):
        return (np.asarray(sp) * self.norm - self.c1 * self.C) / (1.0 + self.c1 ** 2)

    def normal_offset(self, s, z):
        """Signed distance from the plane in the (s, z) coordinates."""
        return (np.asarray(z) - self.c1 * np.asarray(s) - self.C) / self.norm


def project_to_plane(traj, plane: PlaneSpec):
    """Orthogonal projection of a trajectory onto a plane, as (s', h) arrays.

    Accepts a bounded-formulation ``Trajectory`` (or anything with ``s``, ``z``
    and ``h`` arrays).
    """
    s = np.asarray(traj.s)
    z = np.asarray(traj.z)
    return plane.s_prime(s, z), np.asarray(traj.h).copy()


def plane_for_params(C, params: Params) -> PlaneSpec:
    return PlaneSpec(C=C, c1=params.c1)


@dataclass(frozen=True)
class PlanarEquilibrium:
    s: float
    h: float
    eigenvalues: tuple
    classification: str


def plane_equilibria(params: Params, plane: PlaneSpec, n_scan=20001):
    """Fixed points of the in-plane restricted flow, sorted by s."""
    C = plane.C

    def h_of(s):
        z = C + params.c1 * s
        return math.tanh(params.k1 * params.c2 * (s - params.s_star)
                         + params.k2 * params.omega_y * (math.exp(z) - params.b)
                         + params.epsilon)

    def f(s):
        return -s + math.tanh(params.beta1 * s + params.beta2 * h_of(s))

    P = params.as_array()

    def fun(x):
        return np.array(_k.plane_rhs(x[0], x[1], C, P))

    out = []
    for s in _scan_roots(f, -1.0, 1.0, n_scan):
        x = _newton(fun, [s, h_of(s)])
        eig = np.linalg.eigvals(numeric_jacobian(fun, x))
        eig = tuple(sorted(eig, key=lambda e: (np.real(e), np.imag(e))))
        out.append(PlanarEquilibrium(float(x[0]), float(x[1]), eig, classify(eig)))
    return out


@dataclass
class Separatrix:
    """Stable manifold of the in-plane saddle, ordered boundary to boundary.

    ``s`` is the in-plane sentiment, ``s_prime`` and ``h`` the plane
    coordinates.
    """

    plane: PlaneSpec
    s: np.ndarray
    h: np.ndarray
    saddle: PlanarEquilibrium

    @property
    def s_prime(self):
        return self.plane.s_prime_of_plane_s(self.s)


@dataclass
class PhasePortrait:
    plane: PlaneSpec
    window: tuple            # (s_lo, s_hi, h_lo, h_hi) in in-plane s
    trajectories: list       # list of (n, 2) arrays of (s', h)
    end_labels: list         # attractor index reached, -1 if none
    end_distances: list      # distance of the last point from that attractor
    out_of_plane_drift: list  # max |normal offset| of the 3-D flow from the same seed
    separatrix: Separatrix
    attractors: list         # stable PlanarEquilibrium, sorted by s
    barriers: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _stable_and_saddle(params, plane):
    eqs = plane_equilibria(params, plane)
    stable = [e for e in eqs if e.classification == STABLE]
    saddles = [e for e in eqs if e.classification == SADDLE]
    return stable, saddles


def default_window(params: Params, plane: PlaneSpec):
    """In-plane s spanning the attractors +-50% of their spread, clipped to
    [-1, 1]; h in [-1, 1]."""
    stable, _ = _stable_and_saddle(params, plane)
    if len(stable) >= 2:
        lo, hi = stable[0].s, stable[-1].s
        pad = 0.5 * (hi - lo)
        return (max(-1.0, lo - pad), min(1.0, hi + pad), -1.0, 1.0)
    return (-1.0, 1.0, -1.0, 1.0)


def _clip_to_window(p_in, p_out, window):
    """Point where the segment p_in -> p_out leaves the window."""
    s_lo, s_hi, h_lo, h_hi = window
    t_best = 1.0
    d = p_out - p_in
    for k, (lo, hi) in enumerate(((s_lo, s_hi), (h_lo, h_hi))):
        if d[k] != 0.0:
            for bound in (lo, hi):
                t = (bound - p_in[k]) / d[k]
                if 0.0 <= t < t_best:
                    q = p_in + t * d
                    if (s_lo - 1e-12 <= q[0] <= s_hi + 1e-12
                            and h_lo - 1e-12 <= q[1] <= h_hi + 1e-12):
                        t_best = t
    q = p_in + t_best * d
    return np.array([min(max(q[0], s_lo), s_hi), min(max(q[1], h_lo), h_hi)])


def separatrix(params: Params, plane: PlaneSpec, window=None, dt=0.25,
               max_days=20000.0, perturbation=1e-6) -> Separatrix:
    """Trace the separatrix by backward integration from the in-plane saddle.

    Starts at the saddle displaced by ``+-perturbation`` along its stable
    eigenvector and integrates the restricted flow backward in time until each
    branch leaves ``window``; exit points are clipped onto the boundary.
    """
    stable, saddles = _stable_and_saddle(params, plane)
    if not saddles:
        raise ValueError(f"no saddle in plane C={plane.C}")
    # The saddle between the outermost attractors.
    saddle = saddles[len(saddles) // 2]
    if window is None:
        window = default_window(params, plane)
    P = params.as_array()
    J = numeric_jacobian(lambda x: np.array(_k.plane_rhs(x[0], x[1], plane.C, P)),
                         [saddle.s, saddle.h])
    w, v = np.linalg.eig(J)
    vs = np.real(v[:, int(np.argmin(np.real(w)))])
    vs /= np.linalg.norm(vs)
    win = np.asarray(window, dtype=np.float64)
    n_steps = int(max_days / dt)
    branches = []
    for sign in (1.0, -1.0):
        s0 = saddle.s + sign * perturbation * vs[0]
        h0 = saddle.h + sign * perturbation * vs[1]
        path = _k.plane_path(s0, h0, plane.C, -dt, n_steps, win, P)
        last = path[-1]
        outside = (last[0] < win[0] or last[0] > win[1] or last[1] < win[2]
                   or last[1] > win[3] or not np.all(np.isfinite(last)))
        if outside:
            path = np.vstack([path[:-1], _clip_to_window(path[-2], last, window)])
        branches.append(path)
    pts = np.vstack([branches[0][::-1], [[saddle.s, saddle.h]], branches[1]])
    return Separatrix(plane=plane, s=pts[:, 0].copy(), h=pts[:, 1].copy(), saddle=saddle)


def _perimeter_param(p, window):
    """Counter-clockwise position along the window boundary in [0, 4)."""
    s_lo, s_hi, h_lo, h_hi = window
    s, h = p
    tol = 1e-9
    if abs(h - h_lo) < tol:
        return (s - s_lo) / (s_hi - s_lo)
    if abs(s - s_hi) < tol:
        return 1.0 + (h - h_lo) / (h_hi - h_lo)
    if abs(h - h_hi) < tol:
        return 2.0 + (s_hi - s) / (s_hi - s_lo)
    if abs(s - s_lo) < tol:
        return 3.0 + (h_hi - h) / (h_hi - h_lo)
    raise ValueError(f"point {p} is not on the window boundary")


def separatrix_polygon(sep: Separatrix, window) -> np.ndarray:
    """Polygon bounded by the separatrix and the window boundary (ccw from the
    separatrix end back to its start)."""
    s_lo, s_hi, h_lo, h_hi = window
    start = np.array([sep.s[0], sep.h[0]])
    end = np.array([sep.s[-1], sep.h[-1]])
    t_start = _perimeter_param(start, window)
    t_end = _perimeter_param(end, window)
    corners = [(1.0, (s_hi, h_lo)), (2.0, (s_hi, h_hi)), (3.0, (s_lo, h_hi)),
               (4.0, (s_lo, h_lo))]
    span = (t_start - t_end) % 4.0
    extra = []
    for tc, c in corners + [(tc + 4.0, c) for tc, c in corners]:
        if 0.0 < tc - t_end < span:
            extra.append((tc - t_end, c))
    extra.sort()
    pts = np.column_stack([sep.s, sep.h])
    if extra:
        pts = np.vstack([pts, np.array([c for _, c in extra])])
    return pts


def points_in_polygon(px, py, poly) -> np.ndarray:
    """Even-odd ray casting; vectorised over points."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(px.shape, dtype=bool)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for a, b, c, d in zip(x0, y0, x1, y1):
        if b == d:
            continue
        cond = (b > py) != (d > py)
        xint = a + (py - b) * (c - a) / (d - b)
        inside ^= cond & (px < xint)
    return inside


def separatrix_side_labels(sep: Separatrix, attractors, s, h, window):
    """Label points by the attractor lying on the same side of the separatrix."""
    poly = separatrix_polygon(sep, window)
    inside = points_in_polygon(s, h, poly)
    att_inside = points_in_polygon(np.array([a.s for a in attractors]),
                                   np.array([a.h for a in attractors]), poly)
    if att_inside.sum() != 1:
        raise ValueError("separatrix does not split the attractors")
    a_in = int(np.flatnonzero(att_inside)[0])
    a_out = 1 - a_in
    return np.where(inside, a_in, a_out)


def basin_map(params: Params, plane: PlaneSpec, n=200, window=None, dt=0.5,
              max_days=20000.0, radius=0.02):
    """Brute-force basin labels on an ``n x n`` grid of in-plane starts.

    Returns ``(s_grid, h_grid, labels)``; labels index the stable in-plane
    attractors sorted by s, -1 if none was reached.
    """
    if window is None:
        window = default_window(params, plane)
    stable, _ = _stable_and_saddle(params, plane)
    att = np.array([[a.s, a.h] for a in stable])
    s_lo, s_hi, h_lo, h_hi = window
    # Cell centres.
    sg = s_lo + (np.arange(n) + 0.5) * (s_hi - s_lo) / n
    hg = h_lo + (np.arange(n) + 0.5) * (h_hi - h_lo) / n
    S, H = np.meshgrid(sg, hg)
    labels = _k.plane_basin_labels(S.ravel(), H.ravel(), plane.C, att, radius, dt,
                                   int(max_days / dt), params.as_array())
    return S, H, labels.reshape(S.shape)


def basin_agreement(params: Params, plane: PlaneSpec, n=200, window=None):
    """Fraction of grid cells where brute-force basin and separatrix side agree."""
    if window is None:
        window = default_window(params, plane)
    stable, _ = _stable_and_saddle(params, plane)
    S, H, labels = basin_map(params, plane, n=n, window=window)
    sep = separatrix(params, plane, window=window)
    side = separatrix_side_labels(sep, stable, S, H, window)
    return float(np.mean(side == labels))


def _vertical_crossings(sep: Separatrix, s0):
    """h values where the separatrix polyline crosses in-plane s = s0."""
    s, h = sep.s, sep.h
    out = []
    for i in range(s.size - 1):
        a, b = s[i] - s0, s[i + 1] - s0
        if a == 0.0:
            out.append(h[i])
        elif a * b < 0.0:
            t = a / (a - b)
            out.append(h[i] + t * (h[i + 1] - h[i]))
    if s[-1] == s0:
        out.append(h[-1])
    return out


def barrier(sep: Separatrix, attractor: PlanarEquilibrium, window) -> dict:
    """Distance in h from an attractor to the separatrix within its plane.

    If the separatrix never crosses the attractor's s inside the window, the
    distance to the window edge on the separatrix side is reported and
    ``bounded_by_window`` is set.
    """
    crossings = _vertical_crossings(sep, attractor.s)
    pts = np.column_stack([sep.s, sep.h])
    d = np.hypot(pts[:, 0] - attractor.s, pts[:, 1] - attractor.h)
    euclid = float(d.min())
    if crossings:
        dh = [abs(c - attractor.h) for c in crossings]
        return {"h_distance": float(min(dh)), "bounded_by_window": False,
                "euclidean_distance": euclid}
    nearest_h = pts[int(np.argmin(d)), 1]
    edge = window[2] if nearest_h < attractor.h else window[3]
    return {"h_distance": float(abs(edge - attractor.h)), "bounded_by_window": True,
            "euclidean_distance": euclid}


def plane_barriers(params: Params, plane: PlaneSpec, window=None) -> dict:
    """Barrier heights of the contraction (s < 0) and expansion (s > 0)
    attractors in one plane."""
    if window is None:
        window = default_window(params, plane)
    stable, _ = _stable_and_saddle(params, plane)
    if len(stable) < 2:
        raise ValueError(f"plane C={plane.C} has {len(stable)} stable points, need 2")
    sep = separatrix(params, plane, window=window)
    contraction, expansion = stable[0], stable[-1]
    return {
        "C": plane.C,
        "contraction": {"s": contraction.s, "h": contraction.h,
                        "s_prime": float(plane.s_prime_of_plane_s(contraction.s)),
                        **barrier(sep, contraction, window)},
        "expansion": {"s": expansion.s, "h": expansion.h,
                      "s_prime": float(plane.s_prime_of_plane_s(expansion.s)),
                      **barrier(sep, expansion, window)},
    }


def barrier_heights(params: Params, planes=DEFAULT_PLANES) -> dict:
    """Per-plane barrier heights keyed by the plane constant C."""
    return {float(C): plane_barriers(params, plane_for_params(C, params)) for C in planes}


def _boundary_seeds(window, per_edge):
    s_lo, s_hi, h_lo, h_hi = window
    t = np.linspace(0.0, 1.0, per_edge, endpoint=False)
    bottom = np.column_stack([s_lo + t * (s_hi - s_lo), np.full_like(t, h_lo)])
    right = np.column_stack([np.full_like(t, s_hi), h_lo + t * (h_hi - h_lo)])
    top = np.column_stack([s_hi - t * (s_hi - s_lo), np.full_like(t, h_hi)])
    left = np.column_stack([np.full_like(t, s_lo), h_hi - t * (h_hi - h_lo)])
    return np.vstack([bottom, right, top, left])


def phase_portrait(params: Params, plane: PlaneSpec, fan_density: int = 10,
                   window=None, days: float = 4000.0, dt: float = 0.5,
                   record_every: int = 4) -> PhasePortrait:
    """Trajectory fan emitted from the window boundary, plus separatrix and barriers.

    ``fan_density`` seeds are placed on each window edge. Every seed is
    integrated with the restricted in-plane flow and, separately, with the full
    3-D bounded system from the same point; the latter's maximum distance from
    the plane is the out-of-plane drift metric.
    """
    if window is None:
        window = default_window(params, plane)
    stable, _ = _stable_and_saddle(params, plane)
    P = params.as_array()
    n_steps = int(days / dt)
    # Let boundary seeds move inward; paths stop only once clearly outside.
    run_window = np.array([window[0] - 1e-9, window[1] + 1e-9,
                           window[2] - 1e-9, window[3] + 1e-9])
    trajectories, labels, dists, drift = [], [], [], []
    for s0, h0 in _boundary_seeds(window, fan_density):
        path = _k.plane_path(s0, h0, plane.C, dt, n_steps, run_window, P)
        last = path[-1]
        if stable:
            d = [math.hypot(last[0] - a.s, last[1] - a.h) for a in stable]
            k = int(np.argmin(d))
            labels.append(k)
            dists.append(float(d[k]))
        else:
            labels.append(-1)
            dists.append(float("nan"))
        rec = path[::record_every]
        if (path.shape[0] - 1) % record_every:
            rec = np.vstack([rec, path[-1:]])
        trajectories.append(np.column_stack([plane.s_prime_of_plane_s(rec[:, 0]), rec[:, 1]]))
        full = _k.bounded_path_rk4(h0, s0, plane.C + plane.c1 * s0, dt, n_steps, P)
        drift.append(float(np.max(np.abs(plane.normal_offset(full[:, 1], full[:, 2])))))
    sep = separatrix(params, plane, window=window)
    barriers = plane_barriers(params, plane, window=window) if len(stable) >= 2 else {}
    return PhasePortrait(
        plane=plane, window=tuple(window), trajectories=trajectories,
        end_labels=labels, end_distances=dists, out_of_plane_drift=drift,
        separatrix=sep, attractors=stable, barriers=barriers,
        meta={"s_prime_convention": "s' = (s + c1*z)/sqrt(1 + c1^2)",
              "restricted_flow": "z = C + c1*s, normal velocity dropped",
              "days": days, "dt": dt, "fan_density": fan_density})
