"""Deterministic quadrature and sampling building blocks.

Everything here is geometry-free plumbing: composite Gauss-Legendre panels,
spherical product grids aligned to a chosen axis, a rational stretch for
semi-infinite radial tails, scrambled Sobol clouds with an exponential
importance profile, and centered finite-difference stencils with Richardson
extrapolation.  The density layer decides where the panel knots go; this
module only turns knot lists into nodes and weights.

Node counts are always explicit arguments.  Grids built with the same counts
have the same shape for every evaluation point, which keeps quadrature values
smooth functions of the target point; that matters because finite differences
of those values are used as reference derivatives.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaincinv
from scipy.stats import qmc


def gauss_panels(knots, n_per_panel: int):
    """Composite Gauss-Legendre rule over consecutive panels.

    Degenerate or inverted panels (repeated knots after clipping) are
    dropped, so callers can pass clipped knot lists without cleanup.
    """
    knots = np.asarray(knots, dtype=float)
    base_x, base_w = np.polynomial.legendre.leggauss(n_per_panel)
    nodes, weights = [], []
    for a, b in zip(knots[:-1], knots[1:]):
        if b - a <= 0.0:
            continue
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes.append(mid + half * base_x)
        weights.append(half * base_w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def stretched_tail(r_start: float, r_max: float, n: int):
    """Nodes and weights for a radial tail via the stretch u = r/(1+r).

    Gauss-Legendre in u concentrates nodes near r_start while still
    reaching r_max with a modest count.  Weights include dr/du.
    """
    if r_max <= r_start:
        return np.empty(0), np.empty(0)
    u0, u1 = r_start / (1.0 + r_start), r_max / (1.0 + r_max)
    u, wu = gauss_panels([u0, u1], n)
    r = u / (1.0 - u)
    return r, wu / (1.0 - u) ** 2


def orthonormal_frame(axis) -> tuple:
    """Right-handed frame (e1, e2, axis_hat) with a stable reference pick."""
    a = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(a)
    a = np.array([0.0, 0.0, 1.0]) if norm == 0.0 else a / norm
    ref = np.array([0.0, 0.0, 1.0]) if abs(a[2]) <= 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = ref - np.dot(ref, a) * a
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(a, e1), a


def spherical_grid(center, axis, r_nodes, r_weights, cos_knots, n_per_cos_panel: int,
                   n_phi: int):
    """Product grid r x cos(theta) x phi around `center`, polar axis `axis`.

    Returns (points, weights) with the volume jacobian r^2 folded into the
    weights.  phi is a uniform midpoint rule, exact for trigonometric
    polynomials of degree < n_phi; cos(theta) panels split at `cos_knots`.
    """
    r_nodes = np.asarray(r_nodes, dtype=float)
    r_weights = np.asarray(r_weights, dtype=float)
    c, wc = gauss_panels(cos_knots, n_per_cos_panel)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * math.pi / n_phi)
    e1, e2, a = orthonormal_frame(axis)
    sin = np.sqrt(np.clip(1.0 - c**2, 0.0, None))
    dirs = (
        sin[:, None, None] * np.cos(phi)[None, :, None] * e1
        + sin[:, None, None] * np.sin(phi)[None, :, None] * e2
        + c[:, None, None] * a
    )  # (n_c, n_phi, 3)
    points = np.asarray(center, dtype=float) + (
        r_nodes[:, None, None, None] * dirs[None, :, :, :]
    )
    weights = (
        (r_weights * r_nodes**2)[:, None, None]
        * wc[None, :, None]
        * (2.0 * math.pi / n_phi)
    )
    return points.reshape(-1, 3), weights.reshape(-1)


def sobol_cloud(rates, n_points: int, seed: int):
    """Scrambled Sobol points pushed through an exponential radial profile.

    Each electron gets density rate^3 exp(-rate r) / (8 pi), the square of a
    unit exponential orbital with decay rate/2.  Returns positions shaped
    (M, n, 3) and log of the sampling density; M is n_points rounded up to a
    power of two, as the generator prefers.
    """
    rates = np.asarray(rates, dtype=float)
    n = len(rates)
    engine = qmc.Sobol(3 * n, scramble=True, seed=seed)
    m = max(1, math.ceil(math.log2(max(n_points, 2))))
    u = engine.random_base2(m)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    r = gammaincinv(3.0, u[:, 0::3]) / rates
    cos_t = 2.0 * u[:, 1::3] - 1.0
    phi = 2.0 * math.pi * u[:, 2::3]
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
    pos = np.stack(
        [r * sin_t * np.cos(phi), r * sin_t * np.sin(phi), r * cos_t], axis=-1
    )
    log_q = np.sum(3.0 * np.log(rates) - rates * r, axis=-1) - n * math.log(
        8.0 * math.pi
    )
    return pos, log_q


# Centered stencils, all with O(h^2) truncation error.  Keys are lattice
# offsets in units of the step; the 1/h^k factor is applied by the caller.
CENTRAL_STENCILS = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
}

# Per-axis lattice offsets that serve every mixed stencil of per-axis order
# <= 3 at steps h, 2h and 4h simultaneously.
FD_OFFSETS = (-8, -4, -2, -1, 0, 1, 2, 4, 8)
_FD_INDEX = {o: i for i, o in enumerate(FD_OFFSETS)}


def fd_lattice(x, h0: float) -> np.ndarray:
    """All 9^3 sample points around x needed by `lattice_derivative`."""
    offs = np.asarray(FD_OFFSETS, dtype=float) * h0
    grid = np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), axis=-1)
    return np.asarray(x, dtype=float) + grid  # (9, 9, 9, 3)


def lattice_derivative(values: np.ndarray, alpha, step_multiple: int,
                       h0: float) -> float:
    """Mixed central difference from a 9x9x9 value lattice.

    `values` must be indexed consistently with `fd_lattice`; `alpha` is a
    3-vector of per-axis orders (each <= 3); the stencil runs at step
    step_multiple * h0.
    """
    orders = tuple(int(a) for a in alpha)
    total = 0.0
    for o0, c0 in CENTRAL_STENCILS[orders[0]].items():
        i0 = _FD_INDEX[o0 * step_multiple]
        for o1, c1 in CENTRAL_STENCILS[orders[1]].items():
            i1 = _FD_INDEX[o1 * step_multiple]
            for o2, c2 in CENTRAL_STENCILS[orders[2]].items():
                total += c0 * c1 * c2 * values[i0, i1, _FD_INDEX[o2 * step_multiple]]
    return total / (step_multiple * h0) ** sum(orders)


def richardson(d_h, d_2h, d_4h):
    """Two-stage Richardson extrapolation of an O(h^2) estimator.

    Returns (value, error_estimate); the error combines the spread of the
    first-stage extrapolants with the final correction size.
    """
    rich1 = (4.0 * d_h - d_2h) / 3.0
    rich2 = (4.0 * d_2h - d_4h) / 3.0
    final = (16.0 * rich1 - rich2) / 15.0
    return final, abs(rich1 - rich2) + abs(final - rich1)


def fd_reference_table(f, x, alphas, h0: float = 2.5e-3) -> dict:
    """Richardson-extrapolated mixed derivatives of a scalar field.

    f maps an (M, 3) array of points to M values; alphas is an iterable of
    3-tuples with per-axis order <= 3.  All requested stencils at steps h0,
    2 h0 and 4 h0 read from one shared lattice, and only the lattice points
    some stencil touches are actually evaluated.  Returns
    {alpha: (value, error_estimate)}.
    """
    import itertools

    alphas = [tuple(int(a) for a in alpha) for alpha in alphas]
    needed = set()
    for alpha in alphas:
        for m in (1, 2, 4):
            per_axis = [
                [o * m for o in CENTRAL_STENCILS[k]] for k in alpha
            ]
            needed.update(itertools.product(*per_axis))
    combos = sorted(needed)
    points = np.asarray(x, dtype=float) + h0 * np.asarray(combos, dtype=float)
    values = np.full((9, 9, 9), np.nan)
    for combo, value in zip(combos, np.asarray(f(points), dtype=float)):
        values[_FD_INDEX[combo[0]], _FD_INDEX[combo[1]], _FD_INDEX[combo[2]]] \
            = value
    return {
        alpha: richardson(
            *[lattice_derivative(values, alpha, m, h0) for m in (1, 2, 4)]
        )
        for alpha in alphas
    }
