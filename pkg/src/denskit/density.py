"""One-electron density, its derivatives, and related marginals.

The density is rho(x) = integral of |psi(x, x2, ..., xN)|^2 over the other
electrons.  Differentiating under the integral sign fails beyond low order
(the pair-coalescence kinks make the naive integrand non-integrable), so
derivatives are computed by a transfer recursion instead:

  * insert a partition of unity built from pair cutoffs, one product term
    per subset of pairs; each term pins down which electrons travel with
    electron 1 (its cluster);
  * convert one spatial derivative of a term into the matching cluster
    derivative inside the integral (the off-cluster translations integrate
    to zero); this scales the term by sqrt(cluster size);
  * the cluster derivative also hits cutoff factors on pairs that cross the
    cluster boundary, spawning one child term per cut pair with the factor
    replaced by the cutoff gradient component; the child's cluster strictly
    grows, so the recursion terminates.

Every resulting term integrates a bounded function on the support of its
cutoff product, which is what makes the quadrature and sampling below
well-conditioned at any derivative order the radial tables support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clusters import (
    ClusterSet,
    CutoffPair,
    CutoffProduct,
    chi_product_family,
)
from .multiindex import MultiIndex, order
from .quadrature import gauss_panels, sobol_cloud, spherical_grid, stretched_tail
from .radial import MAX_ORDER, UnsupportedOrderError
from .wavefunctions import (
    UserWavefunction,
    Wavefunction,
    _proposal_rates,
    cluster_derivative_density,
)

TINY_RADIUS = 1e-12


# ---------------------------------------------------------------------------
# derivative-transfer expansion


@dataclass(frozen=True)
class IntegralTerm:
    """One term of the transferred-derivative representation.

    Integrand: multiplicity * (product of cluster derivatives of |psi|^2,
    given by `inner`) * (cutoff product `phi`), integrated over electrons
    2..N at fixed electron-1 position.
    """

    n_electrons: int
    inner: tuple  # ((ClusterSet, MultiIndex), ...)
    phi: CutoffProduct
    multiplicity: float

    def inner_order(self) -> int:
        return sum(order(a) for _, a in self.inner)

    def to_dict(self) -> dict:
        return {
            "multiplicity": self.multiplicity,
            "inner": [
                {"cluster": sorted(c.members), "orders": list(a.entries)}
                for c, a in self.inner
            ],
            "phi": self.phi.to_dict(),
        }


def _canonical_inner(items) -> tuple:
    return tuple(
        sorted(items, key=lambda ca: (ca[0].size, tuple(sorted(ca[0].members))))
    )


def term_key(term: IntegralTerm):
    return (term.inner, term.phi.factors)


def term_label(term: IntegralTerm) -> str:
    inner = ";".join(
        "{}:{}".format(
            ",".join(str(j) for j in sorted(c.members)),
            "".join(str(e) for e in a.entries),
        )
        for c, a in term.inner
    )
    phi = ";".join(f"{j}-{k}:{kind}" for (j, k), kind in term.phi.factors)
    return f"[{inner}|{phi}]"


def expand_step(term: IntegralTerm, axis: int):
    """All children of one elementary derivative along `axis` (0..2).

    Returns (child, event) pairs; events describe the rule applied and are
    used for traces.
    """
    cluster = term.phi.cluster()
    scale = math.sqrt(cluster.size)
    bumped = []
    hit = False
    for c, a in term.inner:
        if c == cluster:
            bumped.append((c, a + MultiIndex.unit(3, axis)))
            hit = True
        else:
            bumped.append((c, a))
    if not hit:
        bumped.append((cluster, MultiIndex.unit(3, axis)))
    transfer = IntegralTerm(
        term.n_electrons,
        _canonical_inner(bumped),
        term.phi,
        term.multiplicity * scale,
    )
    out = [
        (
            transfer,
            {
                "axis": axis,
                "rule": "transfer",
                "cluster": sorted(cluster.members),
                "scale": scale,
                "parent": term_label(term),
                "child": term_label(transfer),
            },
        )
    ]
    for (j, k), kind in term.phi.factors:
        if kind != "chi2":
            continue
        j_in = j in cluster.members
        if j_in == (k in cluster.members):
            continue
        sign = 1.0 if j_in else -1.0
        child = IntegralTerm(
            term.n_electrons,
            term.inner,
            term.phi.replace_factor((j, k), f"dchi2_{axis + 1}"),
            term.multiplicity * sign,
        )
        out.append(
            (
                child,
                {
                    "axis": axis,
                    "rule": "cutoff",
                    "pair": [j, k],
                    "sign": sign,
                    "parent": term_label(term),
                    "child": term_label(child),
                },
            )
        )
    return out


@dataclass
class ExpansionTrace:
    n_electrons: int
    alpha: tuple
    steps: list
    terms: list

    def to_dict(self) -> dict:
        return {
            "n_electrons": self.n_electrons,
            "alpha": list(self.alpha),
            "steps": self.steps,
            "terms": self.terms,
        }


_expansion_memo: dict = {}


def expand_fully(n_electrons: int, alpha, trace: bool = False):
    """Full term list for the derivative multi-index `alpha` of rho.

    Elementary steps are applied axis by axis in a fixed order and children
    with identical structure are merged, so the output is canonical.  With
    trace=True also returns an ExpansionTrace of every rule application.
    """
    alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
    if alpha.dimension != 3:
        raise ValueError("alpha must be a 3-component multi-index")
    if order(alpha) > MAX_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {order(alpha)} exceeds supported table"
        )
    memo_key = (n_electrons, alpha)
    if not trace and memo_key in _expansion_memo:
        return _expansion_memo[memo_key]
    terms: dict = {}
    for phi in chi_product_family(n_electrons):
        seed = IntegralTerm(n_electrons, (), phi, 1.0)
        terms[term_key(seed)] = seed
    steps = []
    for axis in range(3):
        for _ in range(alpha[axis]):
            new: dict = {}
            events = []
            for term in terms.values():
                for child, event in expand_step(term, axis):
                    key = term_key(child)
                    if key in new:
                        old = new[key]
                        new[key] = IntegralTerm(
                            old.n_electrons,
                            old.inner,
                            old.phi,
                            old.multiplicity + child.multiplicity,
                        )
                    else:
                        new[key] = child
                    events.append(event)
            terms = {k: t for k, t in new.items() if t.multiplicity != 0.0}
            steps.append(events)
    result = tuple(
        sorted(terms.values(), key=lambda t: (t.phi.factors, t.inner and tuple(
            (tuple(sorted(c.members)), a.entries) for c, a in t.inner
        )))
    )
    if trace:
        return result, ExpansionTrace(
            n_electrons,
            alpha.entries,
            steps,
            [dict(id=f"t{i}", label=term_label(t), **t.to_dict())
             for i, t in enumerate(result)],
        )
    _expansion_memo[memo_key] = result
    return result


# ---------------------------------------------------------------------------
# quadrature grids (two electrons)

# per level: nodes per radial panel, per cos(theta) panel, phi count, tail
_LEVELS = {
    1: (12, 11, 24, 12),
    2: (16, 14, 24, 16),
    3: (20, 18, 24, 20),
}


def _decay_rates(model) -> np.ndarray:
    return np.asarray(_proposal_rates(model), dtype=float) / 2.0


def _cusp_grid(x, r_knots, level: int):
    """Grid in x2 centered at the electron-1 position."""
    n_r, n_c, n_phi, _ = _LEVELS[level]
    r_nodes, r_w = gauss_panels(r_knots, n_r)
    return spherical_grid(x, np.asarray(x), r_nodes, r_w, [-1.0, 1.0], n_c, n_phi)


def _origin_grid(x, cut: CutoffPair, model, level: int):
    """Grid in x2 centered at the nucleus, polar axis toward electron 1.

    Radial panels isolate the shells where the pair cutoff varies; the polar
    panels isolate the cone that sees those shells.  The exponential tail is
    integrated under the u = r/(1+r) stretch.
    """
    n_r, n_c, n_phi, n_tail = _LEVELS[level]
    r = float(np.linalg.norm(x))
    r1, r2 = cut.plateau_radius, cut.support_radius
    a_min = float(np.min(_decay_rates(model)))
    knots = np.unique(np.clip([0.0, r - r2, r - r1, r, r + r1, r + r2], 0.0, None))
    nodes, weights = gauss_panels(knots, n_r)
    tail_knots = [r + r2, r + r2 + 2.0 / a_min, r + r2 + 8.0 / a_min,
                  r + r2 + 20.0 / a_min]
    for t0, t1 in zip(tail_knots[:-1], tail_knots[1:]):
        tn, tw = stretched_tail(t0, t1, n_tail)
        nodes = np.concatenate([nodes, tn])
        weights = np.concatenate([weights, tw])
    ratio2 = min(r2 / r, 1.0)
    ratio1 = min(r1 / r, 1.0)
    c2 = math.sqrt(max(1.0 - ratio2**2, 0.0))
    c1 = math.sqrt(max(1.0 - ratio1**2, 0.0))
    cos_knots = np.unique(np.clip([-1.0, 2.0 * c2 - 1.0, c2, c1, 1.0], -1.0, 1.0))
    return spherical_grid(
        np.zeros(3), np.asarray(x), nodes, weights, cos_knots, n_c, n_phi
    )


def _term_grid(term: IntegralTerm, x, cut: CutoffPair, model, level: int):
    kind = dict(term.phi.factors)[(1, 2)]
    if kind == "chi1":
        return _cusp_grid(x, [0.0, cut.plateau_radius, cut.support_radius], level)
    if kind == "chi2":
        return _origin_grid(x, cut, model, level)
    return _cusp_grid(x, [cut.plateau_radius, cut.support_radius], level)


_CHUNK = 200_000


def _term_integral_pair(model, term: IntegralTerm, x, cut: CutoffPair,
                        level: int) -> float:
    """Deterministic quadrature of one term for a two-electron model."""
    points, weights = _term_grid(term, x, cut, model, level)
    clusters = [c for c, _ in term.inner]
    alphas = [a for _, a in term.inner]
    total = 0.0
    for start in range(0, len(points), _CHUNK):
        pts = points[start: start + _CHUNK]
        w = weights[start: start + _CHUNK]
        pos = np.empty((len(pts), 2, 3))
        pos[:, 0] = x
        pos[:, 1] = pts
        phi = term.phi.value(pos, cut)
        mask = phi != 0.0
        if not mask.any():
            continue
        dens = cluster_derivative_density(model, clusters, alphas, pos[mask])
        total += float(np.sum(w[mask] * phi[mask] * dens))
    return term.multiplicity * total


def _term_integral_qmc(model, terms, x, cut: CutoffPair, n_points: int,
                       seed: int):
    """Sampled evaluation of a term list for three or more electrons.

    Three independent scramblings give the value and an error bar.
    """
    n = model.n_electrons
    rates = _proposal_rates(model)[1:]
    estimates = []
    for rep in range(3):
        pos_rest, log_q = sobol_cloud(rates, n_points, seed + 7919 * rep)
        m = pos_rest.shape[0]
        pos = np.empty((m, n, 3))
        pos[:, 0] = x
        pos[:, 1:] = pos_rest.reshape(m, n - 1, 3)
        inv_q = np.exp(-log_q)
        total = 0.0
        for term in terms:
            phi = term.phi.value(pos, cut)
            mask = phi != 0.0
            if not mask.any():
                continue
            clusters = [c for c, _ in term.inner]
            alphas = [a for _, a in term.inner]
            dens = cluster_derivative_density(
                model, clusters, alphas, pos[mask]
            )
            total += term.multiplicity * float(
                np.sum(phi[mask] * dens * inv_q[mask])
            ) / m
        estimates.append(total)
    value = float(np.mean(estimates))
    err = float(np.std(estimates) / math.sqrt(len(estimates)))
    return value, err


# ---------------------------------------------------------------------------
# public density API


def default_epsilon(x) -> float:
    return 0.5 * float(np.linalg.norm(x))


def _check_eps(x, eps) -> float:
    r = float(np.linalg.norm(x))
    if eps is None:
        eps = 0.5 * r
    if not 0.0 < eps < r:
        raise ValueError(
            f"eps must lie strictly between 0 and |x| = {r:.6g}, got {eps!r}"
        )
    return float(eps)


def rho(model: Wavefunction, x, eps: float | None = None, level: int = 2,
        n_points: int = 2**14, seed: int = 0) -> float:
    """One-electron density at x (electron-1 marginal of |psi|^2).

    The value does not depend on eps (the cutoffs sum to one); eps only
    steers the domain split.  Points closer to the nucleus than
    TINY_RADIUS switch to a single direct grid.
    """
    x = np.asarray(x, dtype=float)
    if model.n_electrons == 1:
        return float(model.value(x[None, :]) ** 2)
    if float(np.linalg.norm(x)) < TINY_RADIUS:
        return rho_direct(model, x, level=level, n_points=n_points, seed=seed)
    return rho_deriv(model, (0, 0, 0), x, eps=eps, level=level,
                     n_points=n_points, seed=seed)


def rho_deriv(model: Wavefunction, alpha, x, eps: float | None = None,
              level: int = 2, n_points: int = 2**14, seed: int = 0) -> float:
    """Derivative of rho at x via the transferred-cluster expansion."""
    x = np.asarray(x, dtype=float)
    alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
    if model.n_electrons == 1:
        return float(
            cluster_derivative_density(
                model, [ClusterSet.of({1}, 1)], [alpha], x[None, :]
            )
        )
    eps = _check_eps(x, eps)
    cut = CutoffPair(eps, model.n_electrons)
    terms = expand_fully(model.n_electrons, alpha)
    if model.n_electrons == 2:
        return sum(
            _term_integral_pair(model, t, x, cut, level) for t in terms
        )
    value, _ = _term_integral_qmc(model, terms, x, cut, n_points, seed)
    return value


def rho_with_error(model: Wavefunction, x, eps: float | None = None,
                   level: int = 2, n_points: int = 2**14, seed: int = 0):
    return rho_deriv_with_error(model, (0, 0, 0), x, eps=eps, level=level,
                                n_points=n_points, seed=seed)


def rho_deriv_with_error(model: Wavefunction, alpha, x,
                         eps: float | None = None, level: int = 2,
                         n_points: int = 2**14, seed: int = 0):
    """(value, error estimate): two quadrature levels, or sampling spread."""
    x = np.asarray(x, dtype=float)
    if model.n_electrons == 1:
        return rho_deriv(model, alpha, x), 0.0
    if model.n_electrons == 2:
        fine = rho_deriv(model, alpha, x, eps=eps, level=level)
        coarse = rho_deriv(model, alpha, x, eps=eps, level=level - 1)
        return fine, abs(fine - coarse)
    alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
    eps = _check_eps(x, eps)
    cut = CutoffPair(eps, model.n_electrons)
    terms = expand_fully(model.n_electrons, alpha)
    return _term_integral_qmc(model, terms, x, cut, n_points, seed)


def rho_direct(model: Wavefunction, x, level: int = 2, n_points: int = 2**14,
               seed: int = 0) -> float:
    """rho without the cutoff split: one grid centered at electron 1.

    Valid at any x including the nucleus; the pair kink sits at the radial
    origin of the grid and the nuclear kink at a panel corner, so the
    product rule keeps its accuracy.  Serves as an independent route for
    cross-checks.
    """
    x = np.asarray(x, dtype=float)
    if model.n_electrons == 1:
        return float(model.value(x[None, :]) ** 2)
    if model.n_electrons > 2:
        pos_rest, log_q = sobol_cloud(
            _proposal_rates(model)[1:], n_points, seed
        )
        m = pos_rest.shape[0]
        pos = np.empty((m, model.n_electrons, 3))
        pos[:, 0] = x
        pos[:, 1:] = pos_rest.reshape(m, model.n_electrons - 1, 3)
        vals = model.value(pos) ** 2 * np.exp(-log_q)
        return float(np.mean(vals))
    n_r, n_c, n_phi, n_tail = _LEVELS[level]
    r = float(np.linalg.norm(x))
    a_min = float(np.min(_decay_rates(model)))
    knots = np.unique([0.0, r, r + 0.5 / a_min])
    nodes, weights = gauss_panels(knots, n_r)
    t0 = knots[-1]
    for t1 in (t0 + 2.0 / a_min, t0 + 8.0 / a_min, t0 + 20.0 / a_min):
        tn, tw = stretched_tail(t0, t1, n_tail)
        nodes = np.concatenate([nodes, tn])
        weights = np.concatenate([weights, tw])
        t0 = t1
    axis = -x if r > 0 else np.array([0.0, 0.0, 1.0])
    points, w = spherical_grid(x, axis, nodes, weights, [-1.0, 1.0], n_c, n_phi)
    total = 0.0
    for start in range(0, len(points), _CHUNK):
        pos = np.empty((len(points[start: start + _CHUNK]), 2, 3))
        pos[:, 0] = x
        pos[:, 1] = points[start: start + _CHUNK]
        total += float(
            np.sum(w[start: start + _CHUNK] * model.value(pos) ** 2)
        )
    return total


# ---------------------------------------------------------------------------
# marginals and kernels


def _swap_slots(model: Wavefunction, j: int) -> Wavefunction:
    """Model with electron slots 1 and j exchanged."""
    if j == 1:
        return model
    from .wavefunctions import CorrelatedPair, HydrogenicProduct

    if isinstance(model, HydrogenicProduct):
        rates = list(model.rates)
        rates[0], rates[j - 1] = rates[j - 1], rates[0]
        return HydrogenicProduct(tuple(rates))
    if isinstance(model, CorrelatedPair):
        return model  # symmetric in its two slots
    perm = list(range(model.n_electrons))
    perm[0], perm[j - 1] = perm[j - 1], perm[0]
    return UserWavefunction(
        lambda pos, _m=model, _p=tuple(perm): _m.value(pos[..., _p, :]),
        model.n_electrons,
        energy=model.energy,
    )


def rho_symmetrized(model: Wavefunction, x, eps: float | None = None,
                    level: int = 2, n_points: int = 2**14,
                    seed: int = 0) -> float:
    """Sum of all slot marginals; equals N * rho for symmetric models."""
    return sum(
        rho(_swap_slots(model, j), x, eps=eps, level=level,
            n_points=n_points, seed=seed)
        for j in range(1, model.n_electrons + 1)
    )


def gamma1(model: Wavefunction, x, xp, eps: float | None = None,
           level: int = 2, n_points: int = 2**14, seed: int = 0) -> float:
    """Slot-1 density-matrix kernel integral psi(x, .) psi(xp, .).

    gamma1(x, x) recovers rho(x).  The integrand is split by cutoffs around
    both arguments; each piece gets a grid centered where its cutoffs
    localize it.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    n = model.n_electrons
    if n == 1:
        return float(model.value(x[None, :]) * model.value(xp[None, :]))
    if n > 2:
        pos_rest, log_q = sobol_cloud(_proposal_rates(model)[1:], n_points, seed)
        m = pos_rest.shape[0]
        pos_a = np.empty((m, n, 3))
        pos_a[:, 0] = x
        pos_a[:, 1:] = pos_rest.reshape(m, n - 1, 3)
        pos_b = pos_a.copy()
        pos_b[:, 0] = xp
        return float(np.mean(model.value(pos_a) * model.value(pos_b)
                             * np.exp(-log_q)))
    rx, rxp = float(np.linalg.norm(x)), float(np.linalg.norm(xp))
    if eps is None:
        eps = 0.5 * min(rx, rxp) if min(rx, rxp) > TINY_RADIUS else 0.25
    cut = CutoffPair(eps, 2)
    r1, r2 = cut.plateau_radius, cut.support_radius
    d = float(np.linalg.norm(xp - x))
    a_min = float(np.min(_decay_rates(model)))

    def chi(which, center, pts):
        t = pts - center
        return cut.chi1(t) if which == 1 else cut.chi2(t)

    total = 0.0
    for wx, wxp in ((1, 1), (1, 2), (2, 1), (2, 2)):
        if wx == 1 and wxp == 1 and d > 2.0 * r2:
            continue
        if wx == 2 and wxp == 2:
            knots = np.unique(np.clip(
                [0.0, rx - r2, rx - r1, rx, rx + r1, rx + r2,
                 rxp - r2, rxp - r1, rxp, rxp + r1, rxp + r2], 0.0, None))
            nodes, weights = gauss_panels(knots, _LEVELS[level][0])
            t0 = float(knots[-1])
            for t1 in (t0 + 2.0 / a_min, t0 + 8.0 / a_min, t0 + 20.0 / a_min):
                tn, tw = stretched_tail(t0, t1, _LEVELS[level][3])
                nodes = np.concatenate([nodes, tn])
                weights = np.concatenate([weights, tw])
                t0 = t1
            center = np.zeros(3)
            axis = x if rx > TINY_RADIUS else np.array([0.0, 0.0, 1.0])
        else:
            center = x if wx == 1 else xp
            axis = (xp - x) if d > TINY_RADIUS else np.array([0.0, 0.0, 1.0])
            knots = np.unique(np.clip(
                [0.0, r1, r2, d - r2, d - r1, d, d + r1, d + r2], 0.0, r2))
            nodes, weights = gauss_panels(knots, _LEVELS[level][0])
        points, w = spherical_grid(center, axis, nodes, weights, [-1.0, 1.0],
                                   _LEVELS[level][1], _LEVELS[level][2])
        factor = chi(wx, x, points) * chi(wxp, xp, points)
        mask = factor != 0.0
        if not mask.any():
            continue
        pos_a = np.empty((int(mask.sum()), 2, 3))
        pos_a[:, 0] = x
        pos_a[:, 1] = points[mask]
        pos_b = pos_a.copy()
        pos_b[:, 0] = xp
        total += float(np.sum(
            w[mask] * factor[mask] * model.value(pos_a) * model.value(pos_b)
        ))
    return total


def rho2(model: Wavefunction, x, xp, n_points: int = 2**14,
         seed: int = 0) -> float:
    """Pair density: sum over ordered slot pairs pinned to (x, xp)."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    n = model.n_electrons
    if n < 2:
        raise ValueError("pair density needs at least two electrons")
    if n == 2:
        pos = np.stack([np.stack([x, xp]), np.stack([xp, x])])
        vals = model.value(pos) ** 2
        return float(vals.sum())
    rates = _proposal_rates(model)
    total = 0.0
    for j in range(1, n + 1):
        for k in range(1, n + 1):
            if j == k:
                continue
            rest = [i for i in range(1, n + 1) if i not in (j, k)]
            pos_rest, log_q = sobol_cloud(
                np.asarray([rates[i - 1] for i in rest]), n_points,
                seed + 31 * j + k,
            )
            m = pos_rest.shape[0]
            pos = np.empty((m, n, 3))
            pos[:, j - 1] = x
            pos[:, k - 1] = xp
            for col, i in enumerate(rest):
                pos[:, i - 1] = pos_rest[:, col]
            total += float(np.mean(model.value(pos) ** 2 * np.exp(-log_q)))
    return total


# ---------------------------------------------------------------------------
# cusp behavior at the nucleus


def rho_tilde(model: Wavefunction, r: float, level: int = 2,
              n_dirs: int = 6, **kw) -> float:
    """Spherical average of rho at radius r."""
    if r < TINY_RADIUS:
        return rho(model, np.zeros(3), level=level, **kw)
    dirs = [np.eye(3)[i] * s for i in range(3) for s in (1.0, -1.0)]
    if n_dirs > 6:
        diag = np.array([[sx, sy, sz] for sx in (1, -1) for sy in (1, -1)
                         for sz in (1, -1)], dtype=float) / math.sqrt(3.0)
        dirs.extend(diag)
    dirs = dirs[:n_dirs]
    return float(np.mean([rho(model, r * d, level=level, **kw) for d in dirs]))


@dataclass(frozen=True)
class CuspDerivatives:
    value0: float
    d1: float
    d1_steps: tuple
    d2: float
    d2_steps: tuple
    h: float

    @property
    def d1_consistency(self) -> float:
        a, b = self.d1_steps
        return abs(a - b) / max(abs(self.d1), TINY_RADIUS)

    @property
    def d2_consistency(self) -> float:
        a, b = self.d2_steps
        return abs(a - b) / max(abs(self.d2), TINY_RADIUS)


def radial_derivs_at_zero(model: Wavefunction, h: float | None = None,
                          level: int = 2, **kw) -> CuspDerivatives:
    """One-sided radial derivatives of the spherical average at 0.

    Second-order stencils at steps h and h/2, then one Richardson stage.
    The per-step values are kept so callers can judge convergence.
    """
    if h is None:
        h = 1e-3 if model.n_electrons == 1 else 0.02
    values = {}

    def f(r):
        if r not in values:
            values[r] = rho_tilde(model, r, level=level, **kw)
        return values[r]

    def d1(step):
        return (-3.0 * f(0.0) + 4.0 * f(step) - f(2 * step)) / (2.0 * step)

    def d2(step):
        return (2.0 * f(0.0) - 5.0 * f(step) + 4.0 * f(2 * step)
                - f(3 * step)) / step**2

    d1h, d1h2 = d1(h), d1(h / 2)
    d2h, d2h2 = d2(h), d2(h / 2)
    return CuspDerivatives(
        value0=f(0.0),
        d1=(4.0 * d1h2 - d1h) / 3.0,
        d1_steps=(d1h, d1h2),
        d2=(4.0 * d2h2 - d2h) / 3.0,
        d2_steps=(d2h, d2h2),
        h=h,
    )


def cusp_ratio(model: Wavefunction, h: float | None = None, level: int = 2,
               **kw) -> float:
    """rho_tilde'(0+) / rho_tilde(0); equals -Z for a one-electron atom."""
    d = radial_derivs_at_zero(model, h=h, level=level, **kw)
    return d.d1 / d.value0


# ---------------------------------------------------------------------------
# the naive alternative, kept for contrast


def naive_mc_derivative(model: Wavefunction, alpha, x, n_samples: int = 2**14,
                        seed: int = 0):
    """Differentiate under the integral sign, then sample.

    Returns (estimate, stderr).  Works at low order; at order 4 the
    integrand is no longer absolutely integrable near pair coalescences and
    the estimator variance diverges.  rho_deriv exists to avoid this.
    """
    x = np.asarray(x, dtype=float)
    alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
    n = model.n_electrons
    if n == 1:
        return rho_deriv(model, alpha, x), 0.0
    cluster = ClusterSet.of({1}, n)
    rng = np.random.default_rng(seed)
    n_batches = 8
    per = max(n_samples // n_batches, 1)
    rates = _proposal_rates(model)[1:]
    means = []
    for _ in range(n_batches):
        r = rng.gamma(3.0, 1.0, size=(per, n - 1)) / rates
        v = rng.normal(size=(per, n - 1, 3))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        pos = np.empty((per, n, 3))
        pos[:, 0] = x
        pos[:, 1:] = r[..., None] * v
        log_q = np.sum(3.0 * np.log(rates) - rates * r, axis=-1) \
            - (n - 1) * math.log(8.0 * math.pi)
        vals = cluster_derivative_density(model, [cluster], [alpha], pos) \
            * np.exp(-log_q)
        means.append(float(np.mean(vals)))
    return (
        float(np.mean(means)),
        float(np.std(means) / math.sqrt(n_batches)),
    )
