"""Quantitative analyticity diagnostics for the density.

A function real analytic near x satisfies bounds of the form

    |d^alpha f(x)| <= C * (L * (|alpha| + 1))^|alpha|,

and the smallest workable L is read off a finite table of derivative
magnitudes.  This module fits (C, L) from such tables, estimates Taylor
convergence radii from one-dimensional slices, and compares the growth of
cluster-derivative norms of psi with those of |psi|^2 (the squared table
must stay within a Leibniz factor of the squared fit).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterSet
from .density import rho_deriv_with_error
from .multiindex import MultiIndex, indices_up_to, order
from .quadrature import orthonormal_frame
from .wavefunctions import (
    cluster_derivative_density,
    cluster_l1_density_norm,
    cluster_l2_norm,
)


@dataclass(frozen=True)
class GrowthFit:
    """Fitted derivative-growth envelope: magnitude <= C (L (k+1))^k."""

    constant: float
    rate: float
    alpha_max: int
    entries: tuple  # ((alpha entries, magnitude, sigma), ...)

    def bound(self, k: int) -> float:
        return self.constant * (self.rate * (k + 1)) ** k


def fit_growth(entries, alpha_max: int | None = None) -> GrowthFit:
    """Fit (C, L) from a table {alpha: (value, sigma)}.

    C is the zero-order magnitude; L is the largest per-entry rate needed to
    cover value + 2 sigma.  Restricting alpha_max refits on a subtable.
    """
    rows = []
    for alpha, payload in entries.items():
        alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(alpha)
        value, sigma = payload if isinstance(payload, tuple) else (payload, 0.0)
        if alpha_max is not None and order(alpha) > alpha_max:
            continue
        rows.append((alpha, abs(float(value)), float(sigma)))
    rows.sort(key=lambda r: (order(r[0]), r[0].entries))
    zero = [r for r in rows if order(r[0]) == 0]
    if not zero:
        raise ValueError("growth table needs the zero-order entry")
    constant = zero[0][1] + 2.0 * zero[0][2]
    if constant <= 0.0:
        raise ValueError("zero-order magnitude must be positive")
    rate = 0.0
    for alpha, mag, sigma in rows:
        k = order(alpha)
        if k == 0:
            continue
        padded = mag + 2.0 * sigma
        if padded == 0.0:
            continue
        rate = max(rate, (padded / constant) ** (1.0 / k) / (k + 1))
    return GrowthFit(
        constant=constant,
        rate=rate,
        alpha_max=max(order(r[0]) for r in rows),
        entries=tuple((r[0].entries, r[1], r[2]) for r in rows),
    )


def density_growth_table(model, x, alpha_max: int = 8,
                         eps: float | None = None, level: int = 2,
                         n_points: int = 2**14, seed: int = 0) -> dict:
    """Derivative magnitudes of rho at x for all |alpha| <= alpha_max."""
    x = np.asarray(x, dtype=float)
    table = {}
    zero = MultiIndex.zero(3)
    for alpha in [zero] + list(indices_up_to(3, alpha_max)):
        if alpha in table:
            continue
        value, err = rho_deriv_with_error(
            model, alpha, x, eps=eps, level=level, n_points=n_points,
            seed=seed,
        )
        table[alpha] = (value, err)
    return table


def taylor_coefficients(model, x, direction, k_max: int = 12,
                        eps: float | None = None, level: int = 2,
                        n_points: int = 2**14, seed: int = 0) -> np.ndarray:
    """Coefficients of t -> rho(x + t u) around t = 0, orders 0..k_max.

    Axis-aligned directions use single multi-indices.  General directions
    need the full multinomial sum over derivatives, which is kept to
    one-electron models where each entry is exact and cheap.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    axis = None
    for i in range(3):
        if abs(abs(u[i]) - 1.0) < 1e-14:
            axis = i
    coeffs = np.zeros(k_max + 1)
    if axis is not None:
        sign = 1.0 if u[axis] > 0 else -1.0
        for k in range(k_max + 1):
            alpha = MultiIndex([k if i == axis else 0 for i in range(3)])
            value, _ = rho_deriv_with_error(
                model, alpha, x, eps=eps, level=level, n_points=n_points,
                seed=seed,
            )
            coeffs[k] = sign**k * value / math.factorial(k)
        return coeffs
    if model.n_electrons != 1:
        raise ValueError(
            "off-axis slices need a one-electron model; pass an axis direction"
        )
    cluster = ClusterSet.of({1}, 1)
    for alpha in [MultiIndex.zero(3)] + list(indices_up_to(3, k_max)):
        k = order(alpha)
        d = float(cluster_derivative_density(model, [cluster], [alpha],
                                             x[None, :]))
        mono = math.prod(u[i] ** alpha[i] for i in range(3))
        denom = math.prod(math.factorial(alpha[i]) for i in range(3))
        coeffs[k] += mono * d / denom
    return coeffs


def taylor_radius(coeffs) -> float:
    """Convergence-radius estimate from a finite coefficient table.

    Combines a weighted tail fit of log|c_k| (robust to alternating or
    even-only series) with the last-pair root ratio (sharp for entire
    series, where the fit saturates).  The larger of the two is reported;
    both converge to the true radius as the table grows.
    """
    c = np.abs(np.asarray(coeffs, dtype=float))
    k = np.arange(len(c))
    keep = c > 1e-300
    if keep.sum() < 4:
        raise ValueError("need at least four nonzero coefficients")
    kk, cc = k[keep], c[keep]
    k1, k2 = kk[-2], kk[-1]
    pair = (cc[-2] / cc[-1]) ** (1.0 / (k2 - k1))
    tail = kk >= max(2, kk[-1] // 2)
    w = kk[tail].astype(float)
    slope = np.polyfit(kk[tail], np.log(cc[tail]), 1, w=w)[0]
    fit = math.exp(-slope)
    return float(max(pair, fit))


@dataclass(frozen=True)
class RadiusCheck:
    direction: tuple
    radius: float
    reference: float
    lower_only: bool = False

    @property
    def ratio(self) -> float:
        return self.radius / self.reference

    def within(self, band, lower_bound: float) -> bool:
        if self.lower_only:
            return self.ratio >= lower_bound
        lo, hi = band
        return lo <= self.ratio <= hi


@dataclass(frozen=True)
class DensityGrowthReport:
    fit_full: GrowthFit
    fit_reduced: GrowthFit
    rate_stability: float
    radius_checks: tuple
    stability_tol: float
    radius_band: tuple
    radius_lower_bound: float = 0.5

    @property
    def passed(self) -> bool:
        if self.rate_stability > self.stability_tol:
            return False
        return all(
            c.within(self.radius_band, self.radius_lower_bound)
            for c in self.radius_checks
        )


def verify_density_growth(model, x, alpha_max: int = 8, reduced_max: int = 6,
                          radius_k: int | None = 12,
                          eps: float | None = None,
                          level: int = 2, n_points: int = 2**14,
                          seed: int = 0, stability_tol: float = 0.25,
                          radius_band: tuple = (0.8, 1.2),
                          n_random_lines: int = 3) -> DensityGrowthReport:
    """Growth fit of the derivative table plus slice-radius checks.

    The transverse slice through x should converge exactly out to the
    nucleus distance; seeded random lines (exact models only) must reach at
    least half of it.  radius_k=None skips the slice checks (they need
    high-order tables, which only cheap models afford).
    """
    x = np.asarray(x, dtype=float)
    table = density_growth_table(
        model, x, alpha_max=alpha_max, eps=eps, level=level,
        n_points=n_points, seed=seed,
    )
    fit_full = fit_growth(table)
    fit_reduced = fit_growth(table, alpha_max=reduced_max)
    stability = abs(fit_full.rate - fit_reduced.rate) / fit_reduced.rate
    dist = float(np.linalg.norm(x))
    transverse = orthonormal_frame(x)[0]
    checks = []
    if radius_k is not None:
        checks.append(RadiusCheck(
            tuple(np.round(transverse, 12)),
            taylor_radius(taylor_coefficients(
                model, x, transverse, k_max=radius_k, eps=eps, level=level,
                n_points=n_points, seed=seed,
            )),
            dist,
        ))
    if model.n_electrons == 1 and n_random_lines > 0 and radius_k is not None:
        rng = np.random.default_rng(seed + 1)
        for _ in range(n_random_lines):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            radius = taylor_radius(taylor_coefficients(
                model, x, u, k_max=radius_k,
            ))
            # a random line exits the ball of analyticity obliquely, so only
            # a lower bound at half the nucleus distance is asserted
            checks.append(RadiusCheck(tuple(np.round(u, 12)), radius, dist,
                                      lower_only=True))
    return DensityGrowthReport(
        fit_full=fit_full,
        fit_reduced=fit_reduced,
        rate_stability=stability,
        radius_checks=tuple(checks),
        stability_tol=stability_tol,
        radius_band=radius_band,
    )


@dataclass(frozen=True)
class ClusterGrowthReport:
    psi_fit: GrowthFit
    density_fit: GrowthFit
    constant_slack: float
    rate_slack: float

    @property
    def constant_ratio(self) -> float:
        return self.density_fit.constant / self.psi_fit.constant**2

    @property
    def rate_ratio(self) -> float:
        if self.psi_fit.rate == 0.0:
            return math.inf if self.density_fit.rate > 0 else 0.0
        return self.density_fit.rate / self.psi_fit.rate

    @property
    def passed(self) -> bool:
        return (self.constant_ratio <= self.constant_slack
                and self.rate_ratio <= self.rate_slack)


def cluster_growth_report(model, cluster: ClusterSet, eps: float,
                          alpha_max: int = 6, n_samples: int = 60000,
                          seed: int = 0, constant_slack: float = 1.1,
                          rate_slack: float = 2.2) -> ClusterGrowthReport:
    """Compare growth of cluster-derivative norms of psi and of |psi|^2.

    The L1 table of |psi|^2 derivatives over a separation region is
    controlled by the squared L2 table of psi there: the constants match at
    order zero (same integral) and the rate at most doubles through the
    binomial sum.  Sampling noise is absorbed by the slack factors.
    """
    psi_table, sq_table = {}, {}
    zero = MultiIndex.zero(3)
    for alpha in [zero] + list(indices_up_to(3, alpha_max)):
        est = cluster_l2_norm(model, [cluster], [alpha], eps,
                              n_samples=n_samples, seed=seed)
        psi_table[alpha] = (est.value, est.stderr)
        est = cluster_l1_density_norm(model, [cluster], [alpha], eps,
                                      n_samples=n_samples, seed=seed + 1)
        sq_table[alpha] = (est.value, est.stderr)
    return ClusterGrowthReport(
        psi_fit=fit_growth(psi_table),
        density_fit=fit_growth(sq_table),
        constant_slack=constant_slack,
        rate_slack=rate_slack,
    )
