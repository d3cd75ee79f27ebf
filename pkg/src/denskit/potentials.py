"""Coulomb/Yukawa many-body potentials and their cluster derivatives.

The potential is a finite sum of radial kernels of single differences
(electron-nucleus and electron-electron), so a cluster derivative acts
termwise and either vanishes identically or reduces to a scaled spatial
derivative tensor of the kernel:

* an electron-nucleus term survives only if the electron belongs to every
  differentiating cluster;
* an electron-electron term survives only if each differentiating cluster
  contains exactly one of the two electrons (both endpoints moving together
  cancel exactly);
* each cluster of size |P| contributes |P|^(-|alpha|/2), and a pair term
  picks up (-1)^|alpha| when the moving endpoint is the second one.

These case rules are what `cluster_derivative_of_V` implements; everything
else here is measurement on top of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .clusters import ClusterSet, in_cluster_region
from .multiindex import MultiIndex, indices_up_to, order
from .radial import evaluate_terms

KERNEL_KINDS = ("coulomb", "yukawa")


class SingularityError(ValueError):
    """Evaluation requested at a coalescence point of a singular kernel."""


@dataclass(frozen=True)
class PotentialSpec:
    """Charges and kernel choices for an atomic or molecular system.

    nuclei: tuple of ((x, y, z), charge).  Kernels: "coulomb" is 1/r,
    "yukawa" is exp(-screening*r)/r; the electron-electron kind may also be
    "none" to study models without repulsion.  The nucleus-nucleus constant
    always uses 1/r.
    """

    nuclei: tuple
    n_electrons: int
    en_kind: str = "coulomb"
    ee_kind: str = "coulomb"
    screening: float = 0.0

    def __post_init__(self):
        if self.n_electrons < 1:
            raise ValueError("n_electrons must be >= 1")
        if self.en_kind not in KERNEL_KINDS:
            raise ValueError(f"unknown electron-nucleus kernel {self.en_kind!r}")
        if self.ee_kind not in KERNEL_KINDS + ("none",):
            raise ValueError(f"unknown electron-electron kernel {self.ee_kind!r}")
        if not self.nuclei:
            raise ValueError("at least one nucleus required")
        nuc = tuple(
            (tuple(float(c) for c in pos), float(z)) for pos, z in self.nuclei
        )
        if any(len(pos) != 3 for pos, _ in nuc):
            raise ValueError("nucleus positions must be 3-vectors")
        object.__setattr__(self, "nuclei", nuc)

    @staticmethod
    def atom(charge: float, n_electrons: int, en_kind: str = "coulomb",
             ee_kind: str = "coulomb", screening: float = 0.0) -> "PotentialSpec":
        return PotentialSpec(
            nuclei=(((0.0, 0.0, 0.0), charge),),
            n_electrons=n_electrons,
            en_kind=en_kind,
            ee_kind=ee_kind,
            screening=screening,
        )

    def nuclear_repulsion(self) -> float:
        total = 0.0
        for i in range(len(self.nuclei)):
            for j in range(i + 1, len(self.nuclei)):
                pi, zi = self.nuclei[i]
                pj, zj = self.nuclei[j]
                d = math.dist(pi, pj)
                if d == 0.0:
                    raise SingularityError("coincident nuclei")
                total += zi * zj / d
        return total


def kernel_value(kind: str, r: np.ndarray, screening: float = 0.0) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r == 0.0):
        raise SingularityError("kernel evaluated at zero separation")
    if kind == "coulomb":
        return 1.0 / r
    if kind == "yukawa":
        return np.exp(-screening * r) / r
    raise ValueError(f"unknown kernel kind {kind!r}")


def _kernel_radial_kind(kind: str) -> str:
    return {"coulomb": "inverse_r", "yukawa": "yukawa"}[kind]


def radial_derivative_tensor(kind: str, alpha: MultiIndex, t: np.ndarray,
                             screening: float = 0.0) -> np.ndarray:
    """Exact partial derivative d^alpha of the kernel at offsets t (..., 3)."""
    t = np.asarray(t, dtype=float)
    r = np.linalg.norm(t, axis=-1)
    if np.any(r == 0.0):
        raise SingularityError("derivative tensor evaluated at zero separation")
    return evaluate_terms(_kernel_radial_kind(kind), alpha, t, a=screening)


def _term_survival(clusters, alphas, members_checks):
    """Scale factor and spatial multi-index if the term survives, else None.

    members_checks(cluster) must return (keeps_term, sign_for_this_cluster).
    """
    total = MultiIndex.zero(3)
    scale = 1.0
    for cluster, alpha in zip(clusters, alphas):
        k = order(alpha)
        if k == 0:
            continue
        verdict = members_checks(cluster)
        if verdict is None:
            return None
        sign = verdict
        scale *= sign ** k * cluster.size ** (-0.5 * k)
        total = total + alpha
    return scale, total


def electron_nucleus_derivative(spec: PotentialSpec, clusters, alphas,
                                electron: int, nucleus: int,
                                positions: np.ndarray) -> np.ndarray:
    """Cluster derivative of the single term -Z * k(|x_j - R_l|)."""
    positions = np.asarray(positions, dtype=float)

    def check(cluster):
        return 1.0 if electron in cluster.members else None

    surv = _term_survival(clusters, alphas, check)
    shape = positions.shape[:-2]
    if surv is None:
        return np.zeros(shape)
    scale, total = surv
    pos_l, charge = spec.nuclei[nucleus]
    t = positions[..., electron - 1, :] - np.asarray(pos_l)
    if order(total) == 0:
        return -charge * kernel_value(spec.en_kind, np.linalg.norm(t, axis=-1),
                                      spec.screening)
    return -charge * scale * radial_derivative_tensor(
        spec.en_kind, total, t, spec.screening
    )


def electron_pair_derivative(spec: PotentialSpec, clusters, alphas,
                             j: int, k: int, positions: np.ndarray) -> np.ndarray:
    """Cluster derivative of the single repulsion term k(|x_j - x_k|), j < k."""
    if spec.ee_kind == "none":
        return np.zeros(np.asarray(positions).shape[:-2])
    positions = np.asarray(positions, dtype=float)

    def check(cluster):
        j_in = j in cluster.members
        k_in = k in cluster.members
        if j_in == k_in:
            # both endpoints move together or neither moves: exact zero
            return None
        return 1.0 if j_in else -1.0

    surv = _term_survival(clusters, alphas, check)
    shape = positions.shape[:-2]
    if surv is None:
        return np.zeros(shape)
    scale, total = surv
    t = positions[..., j - 1, :] - positions[..., k - 1, :]
    if order(total) == 0:
        return kernel_value(spec.ee_kind, np.linalg.norm(t, axis=-1),
                            spec.screening)
    return scale * radial_derivative_tensor(spec.ee_kind, total, t,
                                            spec.screening)


def potential_value(spec: PotentialSpec, positions: np.ndarray) -> np.ndarray:
    """Total potential at configurations (..., N, 3)."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape[-2] != spec.n_electrons:
        raise ValueError("configuration has wrong electron count")
    out = np.full(positions.shape[:-2], spec.nuclear_repulsion())
    for l in range(len(spec.nuclei)):
        pos_l, charge = spec.nuclei[l]
        for j in range(1, spec.n_electrons + 1):
            t = positions[..., j - 1, :] - np.asarray(pos_l)
            out = out - charge * kernel_value(
                spec.en_kind, np.linalg.norm(t, axis=-1), spec.screening
            )
    if spec.ee_kind != "none":
        for j in range(1, spec.n_electrons + 1):
            for k in range(j + 1, spec.n_electrons + 1):
                d = np.linalg.norm(
                    positions[..., j - 1, :] - positions[..., k - 1, :], axis=-1
                )
                out = out + kernel_value(spec.ee_kind, d, spec.screening)
    return out


def cluster_derivative_of_V(spec: PotentialSpec, clusters, alphas,
                            positions: np.ndarray) -> np.ndarray:
    """Iterated cluster derivative of the potential, assembled termwise.

    clusters: list of ClusterSet; alphas: matching list of 3-dim MultiIndex.
    With every alpha zero this is just the potential value (the constant
    nucleus-nucleus part only contributes there).
    """
    if len(clusters) != len(alphas):
        raise ValueError("clusters and alphas must align")
    positions = np.asarray(positions, dtype=float)
    if positions.shape[-2] != spec.n_electrons:
        raise ValueError("configuration has wrong electron count")
    for c in clusters:
        if c.n_electrons != spec.n_electrons:
            raise ValueError("cluster electron count mismatch")
    if all(order(a) == 0 for a in alphas):
        return potential_value(spec, positions)
    out = np.zeros(positions.shape[:-2])
    for l in range(len(spec.nuclei)):
        for j in range(1, spec.n_electrons + 1):
            out = out + electron_nucleus_derivative(
                spec, clusters, alphas, j, l, positions
            )
    if spec.ee_kind != "none":
        for j in range(1, spec.n_electrons + 1):
            for k in range(j + 1, spec.n_electrons + 1):
                out = out + electron_pair_derivative(
                    spec, clusters, alphas, j, k, positions
                )
    return out


@dataclass(frozen=True)
class PotentialGrowthResult:
    """Sampled sup of |cluster derivatives of V| and the fitted rate L_V.

    sups maps flattened multi-index entries to the sampled supremum over the
    separation region; the fitted L_V is the smallest rate with
    sup <= L_V^(|alpha|+1) * |alpha|! across the table.
    """

    sups: dict
    fitted_rate: float
    n_region: int
    boundary_fraction: float

    def bound_holds(self, slack: float = 1.0) -> bool:
        for key, sup in self.sups.items():
            k = sum(sum(a) for a in key)
            if sup > slack * self.fitted_rate ** (k + 1) * math.factorial(k):
                return False
        return True


def _region_samples(spec, clusters, eps_half, n_samples, seed):
    """Quasi-random configurations inside every cluster separation region.

    Cluster electrons sit on radius-biased shells just outside eps_half;
    everything else fills a bounded ball.  Samples failing the separation
    test are discarded.
    """
    from scipy.stats import qmc

    n = spec.n_electrons
    in_any = set()
    for c in clusters:
        in_any |= c.members
    sob = qmc.Sobol(3 * n, scramble=True, seed=seed)
    kept = []
    total = 0
    attempts = 0
    while total < n_samples and attempts < 12:
        attempts += 1
        u = sob.random(2 ** int(np.ceil(np.log2(max(n_samples, 256)))))
        u = u.reshape(-1, n, 3)
        pos = np.empty_like(u)
        for j in range(n):
            z = 2.0 * u[:, j, 1] - 1.0
            phi = 2.0 * np.pi * u[:, j, 2]
            s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
            direction = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
            if (j + 1) in in_any:
                radius = eps_half * (1.0 + 2.0 * u[:, j, 0] ** 2)
            else:
                radius = 2.5 * eps_half * u[:, j, 0] ** (1.0 / 3.0) + 1e-12
            pos[:, j, :] = radius[:, None] * direction
        ok = np.ones(pos.shape[0], dtype=bool)
        for c in clusters:
            ok &= in_cluster_region(pos, c, eps_half)
        kept.append(pos[ok])
        total += int(ok.sum())
    if total == 0:
        raise RuntimeError("no samples landed in the separation region")
    return np.concatenate(kept, axis=0)[:n_samples]


def potential_growth_check(spec: PotentialSpec, clusters, eps: float,
                           alpha_max: int, n_samples: int,
                           seed: int = 0) -> PotentialGrowthResult:
    """Fit the factorial growth rate of cluster derivatives of V over the
    separation region at scale eps/2."""
    if isinstance(clusters, ClusterSet):
        clusters = [clusters]
    eps_half = eps / 2.0
    pos = _region_samples(spec, clusters, eps_half, n_samples, seed)
    margins = _region_margin(pos, clusters, eps_half)
    m = len(clusters)
    sups: dict = {}
    rate = 0.0
    boundary_hits = 0
    n_alphas = 0
    for flat in indices_up_to(3 * m, alpha_max):
        k = order(flat)
        if k == 0:
            continue
        alphas = [
            MultiIndex(flat.entries[3 * i: 3 * i + 3]) for i in range(m)
        ]
        vals = np.abs(cluster_derivative_of_V(spec, clusters, alphas, pos))
        i_max = int(np.argmax(vals))
        sup = float(vals[i_max])
        key = tuple(a.entries for a in alphas)
        sups[key] = sup
        rate = max(rate, (sup / math.factorial(k)) ** (1.0 / (k + 1)))
        n_alphas += 1
        if margins[i_max] < 0.15:
            boundary_hits += 1
    return PotentialGrowthResult(
        sups=sups,
        fitted_rate=rate,
        n_region=pos.shape[0],
        boundary_fraction=boundary_hits / max(n_alphas, 1),
    )


def _region_margin(pos, clusters, eps_half):
    """Relative distance of each sample above the separation threshold."""
    margin = np.full(pos.shape[0], np.inf)
    for c in clusters:
        idx = c.indices()
        margin = np.minimum(
            margin,
            np.linalg.norm(pos[:, idx, :], axis=-1).min(axis=-1) / eps_half - 1.0,
        )
        comp = sorted(j - 1 for j in c.complement)
        if comp:
            diff = pos[:, idx, None, :] - pos[:, None, comp, :]
            margin = np.minimum(
                margin,
                np.linalg.norm(diff, axis=-1).min(axis=(-1, -2)) / eps_half - 1.0,
            )
    return margin


# ---------------------------------------------------------------------------
# relative-boundedness diagnostics


class GaussianProduct:
    """Product of per-electron Gaussians exp(-c_j |x_j - mu_j|^2)."""

    def __init__(self, centers: np.ndarray, widths: np.ndarray):
        self.centers = np.asarray(centers, dtype=float)
        self.widths = np.asarray(widths, dtype=float)
        if np.any(self.widths <= 0):
            raise ValueError("widths must be positive")

    def scaled(self, lam: float) -> "GaussianProduct":
        # u_lam(x) = u(lam x): centers shrink, widths pick up lam^2
        return GaussianProduct(self.centers / lam, self.widths * lam**2)

    def value(self, positions: np.ndarray) -> np.ndarray:
        d2 = np.sum((positions - self.centers) ** 2, axis=-1)
        return np.exp(-np.sum(self.widths * d2, axis=-1))

    def gradient(self, positions: np.ndarray) -> np.ndarray:
        v = self.value(positions)
        return (-2.0 * self.widths[:, None] * (positions - self.centers)
                * v[..., None, None])


class ExponentialProduct:
    """Product of per-electron exponentials exp(-c_j |x_j - mu_j|)."""

    def __init__(self, centers: np.ndarray, widths: np.ndarray):
        self.centers = np.asarray(centers, dtype=float)
        self.widths = np.asarray(widths, dtype=float)
        if np.any(self.widths <= 0):
            raise ValueError("widths must be positive")

    def scaled(self, lam: float) -> "ExponentialProduct":
        return ExponentialProduct(self.centers / lam, self.widths * lam)

    def value(self, positions: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(positions - self.centers, axis=-1)
        return np.exp(-np.sum(self.widths * d, axis=-1))

    def gradient(self, positions: np.ndarray) -> np.ndarray:
        diff = positions - self.centers
        d = np.linalg.norm(diff, axis=-1)
        safe = np.where(d > 0, d, 1.0)
        v = self.value(positions)
        return -self.widths[:, None] * diff / safe[..., None] * v[..., None, None]


class Superposition:
    def __init__(self, parts, weights):
        self.parts = list(parts)
        self.weights = list(weights)

    def scaled(self, lam: float) -> "Superposition":
        return Superposition([p.scaled(lam) for p in self.parts], self.weights)

    def value(self, positions: np.ndarray) -> np.ndarray:
        return sum(w * p.value(positions)
                   for w, p in zip(self.weights, self.parts))

    def gradient(self, positions: np.ndarray) -> np.ndarray:
        return sum(w * p.gradient(positions)
                   for w, p in zip(self.weights, self.parts))


def default_test_family(n_electrons: int, seed: int = 7, size: int = 6) -> list:
    """Smooth localized test functions with evaluable gradients."""
    rng = np.random.default_rng(seed)
    family: list = []
    for _ in range(size):
        centers = rng.normal(scale=0.7, size=(n_electrons, 3))
        widths = rng.uniform(0.5, 2.0, size=n_electrons)
        family.append(GaussianProduct(centers, widths))
        family.append(ExponentialProduct(-centers, widths))
    family.append(Superposition(family[:2], [0.7, 0.3]))
    family.append(Superposition(family[2:4], [0.5, -0.5]))
    return family


@dataclass(frozen=True)
class HardyCheckResult:
    ratios: tuple
    finite: bool


def hardy_check(spec: PotentialSpec, family=None, n_samples: int = 200_000,
                seed: int = 3, energy: float = 0.0) -> HardyCheckResult:
    """Monte Carlo estimates of ||(V - E) u|| / ||u||_W12 over a test family.

    The W12 norm is sqrt(||u||^2 + ||grad u||^2).  Samples come from a fixed
    per-electron Gaussian proposal; the singular kernels are square-integrable
    near coalescence in 3D, so the ratios are finite.
    """
    if family is None:
        family = default_test_family(spec.n_electrons)
    rng = np.random.default_rng(seed)
    n = spec.n_electrons
    sigma = 1.2
    pos = rng.normal(scale=sigma, size=(n_samples, n, 3))
    log_q = -np.sum(pos**2, axis=(-1, -2)) / (2 * sigma**2)
    log_q -= 1.5 * n * np.log(2 * np.pi * sigma**2)
    inv_q = np.exp(-log_q)
    v = potential_value(spec, pos)
    ratios = []
    finite = True
    for u in family:
        uv = u.value(pos)
        gv = u.gradient(pos)
        num = np.mean((v - energy) ** 2 * uv**2 * inv_q)
        den = np.mean((uv**2 + np.sum(gv**2, axis=(-1, -2))) * inv_q)
        ratio = math.sqrt(num / den)
        if not math.isfinite(ratio):
            finite = False
        ratios.append(ratio)
    return HardyCheckResult(tuple(ratios), finite)


def hardy_kernel_ratio(width: float, center: np.ndarray) -> float:
    """(integral of u^2/|x|^2) / (4 integral of |grad u|^2) for one Gaussian.

    u = exp(-width |x - center|^2) on R^3.  The classical Hardy inequality
    makes this at most 1.  The numerator reduces to a 1-D integral of
    s*exp(-2c s^2)*log((m+s)/|m-s|) after averaging 1/|x|^2 over spheres
    centered at the Gaussian's peak.
    """
    c = float(width)
    m = float(np.linalg.norm(center))
    grad_sq = 3.0 * c * (np.pi / (2.0 * c)) ** 1.5
    if m < 1e-12:
        num = 4.0 * np.pi * math.sqrt(np.pi / (8.0 * c))
    else:
        def f(s):
            return s * np.exp(-2.0 * c * s * s) * np.log((m + s) / abs(m - s))

        val, _ = integrate.quad(f, 0.0, np.inf, points=[m], limit=200)
        num = 2.0 * np.pi / m * val
    return num / (4.0 * grad_sq)
