"""Explicit few-electron wavefunction models with exact cluster derivatives.

The built-in models are products of radial factors of linear arguments
(per-electron exponentials, optionally one pair-distance correlation factor).
A cluster derivative is a directional derivative along a vector that moves
every cluster member together, so it acts on each factor argument with a
constant velocity:

    argument x_j:        velocity 1/sqrt(|P|) if j is in P, else 0
    argument x_j - x_k:  velocity ([j in P] - [k in P]) / sqrt(|P|)

Iterating the product rule turns an iterated cluster derivative into a sum
over assignments of elementary derivatives to factors.  The assignment table
("plan") is built once per (model, clusters, orders) and memoized; factor
derivatives come from exact radial term tables.  A factor whose argument is
not moved by any requested cluster is never differentiated, which is what
makes full-cluster derivatives of pair factors vanish identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_laguerre

from .clusters import ClusterSet, in_cluster_region
from .multiindex import MultiIndex, leibniz_expansion, order
from .potentials import PotentialSpec, SingularityError, potential_value
from .radial import MAX_ORDER, UnsupportedOrderError, evaluate_terms


@dataclass(frozen=True)
class _Factor:
    arg: tuple  # ("electron", j) or ("pair", j, k), labels 1-based
    kind: str  # "exponential" or "correlation"
    rate: float


def _factor_values(factor: _Factor, gamma: MultiIndex, t: np.ndarray,
                   mask: np.ndarray | None = None) -> np.ndarray:
    if factor.kind == "exponential":
        return evaluate_terms("exponential", gamma, t, a=factor.rate, mask=mask)
    if factor.kind == "correlation":
        # 1 + (lam/2) r; derivatives hit only the linear radius part
        if order(gamma) == 0:
            r = np.linalg.norm(np.asarray(t, dtype=float), axis=-1)
            return 1.0 + 0.5 * factor.rate * r
        return 0.5 * factor.rate * evaluate_terms("radius", gamma, t, mask=mask)
    raise ValueError(f"unknown factor kind {factor.kind!r}")


class Wavefunction:
    """Base class; subclasses provide factors or raw callables."""

    n_electrons: int
    energy: float
    norm_const: float

    def factors(self) -> tuple:
        raise NotImplementedError

    @property
    def exact_derivatives(self) -> bool:
        return True

    def value(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        out = np.full(positions.shape[:-2], self.norm_const)
        zero = MultiIndex.zero(3)
        for f in self.factors():
            out = out * _factor_values(f, zero, _argument(f, positions))
        return out


def _argument(factor: _Factor, positions: np.ndarray) -> np.ndarray:
    if factor.arg[0] == "electron":
        return positions[..., factor.arg[1] - 1, :]
    j, k = factor.arg[1], factor.arg[2]
    return positions[..., j - 1, :] - positions[..., k - 1, :]


def _velocity(factor: _Factor, cluster: ClusterSet) -> float:
    root = math.sqrt(cluster.size)
    if factor.arg[0] == "electron":
        return 1.0 / root if factor.arg[1] in cluster.members else 0.0
    j, k = factor.arg[1], factor.arg[2]
    return ((j in cluster.members) - (k in cluster.members)) / root


@dataclass(frozen=True)
class HydrogenicProduct(Wavefunction):
    """Normalized product of exponentials exp(-a_j |x_j|).

    Eigenfunction of the repulsion-free atomic Hamiltonian with per-electron
    charges 2*a_j and energy -sum(a_j^2).
    """

    rates: tuple

    def __post_init__(self):
        rates = tuple(float(a) for a in self.rates)
        if not rates or any(a <= 0 for a in rates):
            raise ValueError("rates must be positive")
        object.__setattr__(self, "rates", rates)

    @property
    def n_electrons(self) -> int:
        return len(self.rates)

    @property
    def energy(self) -> float:
        return -sum(a * a for a in self.rates)

    @property
    def norm_const(self) -> float:
        return math.prod(math.sqrt(a**3 / math.pi) for a in self.rates)

    def factors(self) -> tuple:
        return tuple(
            _Factor(("electron", j + 1), "exponential", a)
            for j, a in enumerate(self.rates)
        )


def hydrogen(charge: float = 1.0) -> HydrogenicProduct:
    """Ground state of -Laplacian - Z/|x|: rate Z/2, energy -Z^2/4."""
    return HydrogenicProduct((charge / 2.0,))


def _correlated_norm_sq(a: float, lam: float) -> float:
    """Exact squared norm of exp(-a(r1+r2)) * (1 + lam*r12/2).

    Reduces to a polynomial times exp over the wedge r1 > r2 and is
    integrated exactly by Gauss-Laguerre.
    """
    nodes, weights = roots_laguerre(40)
    # r2 = u, r1 = u + v with p = 4 a u, q = 2 a v
    u = nodes[:, None] / (4.0 * a)
    v = nodes[None, :] / (2.0 * a)
    r1, r2 = u + v, u
    s, d = r1 + r2, v
    g = (s**2 - d**2) / 2.0 + lam * (s**3 - d**3) / 3.0 \
        + lam**2 * (s**4 - d**4) / 16.0
    integrand = 2.0 * r1 * r2 * g
    ww = weights[:, None] * weights[None, :]
    return 8.0 * math.pi**2 * float(np.sum(ww * integrand)) / (8.0 * a**2)


@dataclass(frozen=True)
class CorrelatedPair(Wavefunction):
    """Two electrons: exp(-a(r1+r2)) * (1 + lam*|x1-x2|/2), normalized.

    lam = 1/2 gives the pair-coalescence slope of the unit-repulsion
    Hamiltonian without the one-half kinetic convention (the relative
    Laplacian carries a factor 2, so matching exp(-a r)(1 + r12/4) locally
    means lam/2 = 1/4).  The nominal energy defaults to the repulsion-free
    value -2a^2 and can be overridden.
    """

    rate: float = 0.5
    lam: float = 0.5
    nominal_energy: float | None = None

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    @property
    def n_electrons(self) -> int:
        return 2

    @property
    def energy(self) -> float:
        if self.nominal_energy is not None:
            return self.nominal_energy
        return -2.0 * self.rate**2

    @property
    def norm_const(self) -> float:
        return 1.0 / math.sqrt(_correlated_norm_sq(self.rate, self.lam))

    def factors(self) -> tuple:
        return (
            _Factor(("electron", 1), "exponential", self.rate),
            _Factor(("electron", 2), "exponential", self.rate),
            _Factor(("pair", 1, 2), "correlation", self.lam),
        )


class UserWavefunction(Wavefunction):
    """Arbitrary callable psi(positions); derivatives by nested differences."""

    def __init__(self, fn, n_electrons: int, energy: float = 0.0,
                 fd_step: float = 1e-2):
        self.fn = fn
        self.n_electrons = int(n_electrons)
        self.energy = float(energy)
        self.norm_const = 1.0
        self.fd_step = float(fd_step)

    @property
    def exact_derivatives(self) -> bool:
        return False

    def value(self, positions: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(positions, dtype=float)))


def psi_value(model: Wavefunction, positions: np.ndarray) -> np.ndarray:
    return model.value(positions)


_plan_memo: dict = {}


def _derivative_plan(model, clusters: tuple, alphas: tuple) -> list:
    """Assignment table: list of (coefficient, per-factor multi-indices).

    Built by applying one elementary derivative at a time and merging equal
    assignments, which accumulates the multinomial coefficients exactly.
    """
    key = (model, clusters, alphas)
    if key in _plan_memo:
        return _plan_memo[key]
    factors = model.factors()
    vel = [
        [_velocity(f, cluster) for cluster in clusters] for f in factors
    ]
    zero = MultiIndex.zero(3)
    plan: dict = {(zero,) * len(factors): 1.0}
    for t, alpha in enumerate(alphas):
        for s in range(3):
            for _ in range(alpha[s]):
                new: dict = {}
                for gammas, coeff in plan.items():
                    for i in range(len(factors)):
                        v = vel[i][t]
                        if v == 0.0:
                            continue
                        bumped = list(gammas)
                        bumped[i] = bumped[i] + MultiIndex.unit(3, s)
                        tup = tuple(bumped)
                        new[tup] = new.get(tup, 0.0) + coeff * v
                plan = new
                if not plan:
                    break
    result = [(coeff, gammas) for gammas, coeff in sorted(
        plan.items(), key=lambda kv: tuple(g.entries for g in kv[0])
    )]
    _plan_memo[key] = result
    return result


def _normalize_cluster_args(model, clusters, alphas):
    if isinstance(clusters, ClusterSet):
        clusters = [clusters]
    alphas = [a if isinstance(a, MultiIndex) else MultiIndex(a) for a in alphas]
    if len(clusters) != len(alphas):
        raise ValueError("clusters and alphas must align")
    for c in clusters:
        if c.n_electrons != model.n_electrons:
            raise ValueError("cluster electron count mismatch")
    for a in alphas:
        if a.dimension != 3:
            raise ValueError("each cluster takes a 3-dimensional multi-index")
        if order(a) > MAX_ORDER:
            raise UnsupportedOrderError(
                f"derivative order {order(a)} exceeds supported table"
            )
    return tuple(clusters), tuple(alphas)


def cluster_derivative_psi(model: Wavefunction, clusters, alphas,
                           positions: np.ndarray) -> np.ndarray:
    """Iterated cluster derivative of psi at configurations (..., N, 3)."""
    clusters, alphas = _normalize_cluster_args(model, clusters, alphas)
    positions = np.asarray(positions, dtype=float)
    if positions.shape[-2] != model.n_electrons:
        raise ValueError("configuration has wrong electron count")
    if not model.exact_derivatives:
        return _fd_cluster_derivative(model, clusters, alphas, positions)
    plan = _derivative_plan(model, clusters, alphas)
    factors = model.factors()
    shape = positions.shape[:-2]
    out = np.zeros(shape)
    if not plan:
        return out
    args = [_argument(f, positions) for f in factors]
    differentiated = [
        any(order(gammas[i]) > 0 for _, gammas in plan)
        for i in range(len(factors))
    ]
    for i, hit in enumerate(differentiated):
        if hit and np.any(np.linalg.norm(args[i], axis=-1) == 0.0):
            raise SingularityError(
                "cluster derivative evaluated on a coalescence point"
            )
    for coeff, gammas in plan:
        term = np.full(shape, coeff * model.norm_const)
        for i, f in enumerate(factors):
            term = term * _factor_values(f, gammas[i], args[i])
        out += term
    return out


def _fd_cluster_derivative(model, clusters, alphas, positions):
    total = sum(order(a) for a in alphas)
    if total == 0:
        return model.value(positions)
    if total > 4:
        raise UnsupportedOrderError(
            "nested finite differences support order <= 4"
        )
    h = model.fd_step if hasattr(model, "fd_step") else 1e-2

    def recurse(alist, pos):
        for t, a in enumerate(alist):
            for s in range(3):
                if a[s] > 0:
                    reduced = list(alist)
                    reduced[t] = a - MultiIndex.unit(3, s)
                    v = np.zeros((model.n_electrons, 3))
                    v[clusters[t].indices(), s] = 1.0 / math.sqrt(
                        clusters[t].size
                    )
                    return (
                        recurse(reduced, pos + h * v) - recurse(reduced, pos - h * v)
                    ) / (2.0 * h)
        return model.value(pos)

    return recurse(list(alphas), positions)


def cluster_derivative_density(model: Wavefunction, clusters, alphas,
                               positions: np.ndarray) -> np.ndarray:
    """Cluster derivative of |psi|^2 via the product rule over two factors.

    Models are real-valued, so the split is sum over beta <= alpha of
    binom(alpha, beta) * (d^beta psi) * (d^(alpha-beta) psi).
    """
    clusters, alphas = _normalize_cluster_args(model, clusters, alphas)
    flat = MultiIndex([e for a in alphas for e in a.entries])
    out = 0.0
    for beta, rest, coeff in leibniz_expansion(flat):
        betas = _unflatten(beta, len(clusters))
        rests = _unflatten(rest, len(clusters))
        out = out + coeff * cluster_derivative_psi(
            model, clusters, betas, positions
        ) * cluster_derivative_psi(model, clusters, rests, positions)
    return out


def _unflatten(flat: MultiIndex, m: int) -> list:
    return [MultiIndex(flat.entries[3 * i: 3 * i + 3]) for i in range(m)]


@dataclass(frozen=True)
class ResidualResult:
    ratio: float
    n_samples: int


def eigen_residual(model: Wavefunction, spec: PotentialSpec,
                   box_radius: float = 4.0, margin: float = 0.15,
                   n_samples: int = 20000, seed: int = 11,
                   energy: float | None = None) -> ResidualResult:
    """Monte Carlo L2 ratio ||(H - E) psi|| / ||psi|| over a safe box.

    H = -Laplacian + V.  Samples are uniform over the box with all
    singular sets (nucleus hits, electron coalescences) avoided by `margin`.
    """
    if spec.n_electrons != model.n_electrons:
        raise ValueError("potential and model electron counts differ")
    e_val = model.energy if energy is None else energy
    rng = np.random.default_rng(seed)
    n = model.n_electrons
    kept = []
    total = 0
    while total < n_samples:
        pos = rng.uniform(-box_radius, box_radius, size=(2 * n_samples, n, 3))
        ok = np.ones(pos.shape[0], dtype=bool)
        for nuc_pos, _ in spec.nuclei:
            ok &= (
                np.linalg.norm(pos - np.asarray(nuc_pos), axis=-1) > margin
            ).all(axis=-1)
        for j in range(n):
            for k in range(j + 1, n):
                ok &= np.linalg.norm(pos[:, j] - pos[:, k], axis=-1) > margin
        kept.append(pos[ok])
        total += int(ok.sum())
    pos = np.concatenate(kept, axis=0)[:n_samples]
    lap = np.zeros(pos.shape[0])
    for j in range(1, n + 1):
        cl = ClusterSet.of({j}, n)
        for s in range(3):
            lap += cluster_derivative_psi(
                model, [cl], [MultiIndex.unit(3, s) + MultiIndex.unit(3, s)], pos
            )
    h_psi = -lap + potential_value(spec, pos) * model.value(pos)
    resid = h_psi - e_val * model.value(pos)
    denom = float(np.mean(model.value(pos) ** 2))
    return ResidualResult(
        ratio=math.sqrt(float(np.mean(resid**2)) / denom),
        n_samples=n_samples,
    )


@dataclass(frozen=True)
class NormEstimate:
    value: float
    stderr: float
    n_samples: int


def _proposal_rates(model) -> np.ndarray:
    if isinstance(model, HydrogenicProduct):
        return 2.0 * np.asarray(model.rates)
    if isinstance(model, CorrelatedPair):
        return 2.0 * np.asarray([model.rate, model.rate])
    return np.ones(model.n_electrons)


def _sample_exponential_cloud(rng, rates, count):
    """Positions with per-electron density rate^3 exp(-rate r)/(8 pi)."""
    n = len(rates)
    r = rng.gamma(3.0, 1.0, size=(count, n)) / rates
    v = rng.normal(size=(count, n, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    pos = r[..., None] * v
    log_q = np.sum(
        3.0 * np.log(rates) - rates * r, axis=-1
    ) - n * math.log(8.0 * math.pi)
    return pos, log_q


def _region_indicator(pos, clusters, eps):
    ok = np.ones(pos.shape[0], dtype=bool)
    for c in clusters:
        ok &= in_cluster_region(pos, c, eps)
    return ok


def _importance_norm(model, clusters, alphas, eps, n_samples, seed, power,
                     integrand):
    clusters_t, alphas_t = _normalize_cluster_args(model, clusters, alphas)
    rng = np.random.default_rng(seed)
    rates = _proposal_rates(model)
    n_batches = 8
    per = int(np.ceil(n_samples / n_batches))
    batch_means = []
    for _ in range(n_batches):
        pos, log_q = _sample_exponential_cloud(rng, rates, per)
        ok = _region_indicator(pos, list(clusters_t), eps)
        vals = np.zeros(per)
        if ok.any():
            f = integrand(model, clusters_t, alphas_t, pos[ok])
            vals[ok] = np.abs(f) ** power * np.exp(-log_q[ok])
        batch_means.append(float(np.mean(vals)))
    mean = float(np.mean(batch_means))
    spread = float(np.std(batch_means) / math.sqrt(n_batches))
    return mean, spread, n_batches * per


def cluster_l2_norm(model: Wavefunction, clusters, alphas, eps: float,
                    n_samples: int = 60000, seed: int = 5) -> NormEstimate:
    """L2 norm of the cluster derivative of psi over the separation region."""
    mean, spread, count = _importance_norm(
        model, clusters, alphas, eps, n_samples, seed, 2.0,
        cluster_derivative_psi,
    )
    value = math.sqrt(max(mean, 0.0))
    stderr = spread / (2.0 * value) if value > 0 else spread
    return NormEstimate(value, stderr, count)


def cluster_l1_density_norm(model: Wavefunction, clusters, alphas, eps: float,
                            n_samples: int = 60000, seed: int = 6) -> NormEstimate:
    """L1 norm of the cluster derivative of |psi|^2 over the separation region."""
    mean, spread, count = _importance_norm(
        model, clusters, alphas, eps, n_samples, seed, 1.0,
        cluster_derivative_density,
    )
    return NormEstimate(mean, spread, count)


def model_from_config(cfg: dict) -> Wavefunction:
    """Build a built-in model from a JSON-style mapping."""
    if "kind" not in cfg:
        raise KeyError("model.kind")
    kind = cfg["kind"]
    if kind == "hydrogenic_product":
        if "rates" not in cfg:
            raise KeyError("model.rates")
        return HydrogenicProduct(tuple(cfg["rates"]))
    if kind == "correlated_pair":
        return CorrelatedPair(
            rate=float(cfg.get("a", 0.5)),
            lam=float(cfg.get("lambda", 0.5)),
            nominal_energy=cfg.get("E"),
        )
    raise ValueError(f"model.kind: unknown kind {kind!r}")
