"""Cluster geometry and the pairwise smooth partition of unity.

Electrons are labeled 1..N.  A cluster is a non-empty subset of labels; the
cluster containing electron 1 controls which derivatives can be moved under
the density integral.  The partition of unity is a product over unordered
electron pairs of a near/far cutoff pair (chi1, chi2): chi1 is 1 inside
epsilon/(4N), vanishes outside epsilon/(2N), and chi1 + chi2 = 1.

Expanding the product over all pairs gives 2^(N(N-1)/2) terms.  Each term's
near-factor pairs generate a graph; the connected component of electron 1 is
the term's cluster, and on {|x_1| > epsilon} the support of the term lies in
the region where that whole cluster stays epsilon/(4N)-separated from the
nucleus and from the remaining electrons.  `support_condition_check` verifies
that statement by biased rejection sampling.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

FACTOR_KINDS = ("chi1", "chi2", "dchi2_1", "dchi2_2", "dchi2_3")


def all_pairs(n_electrons: int) -> list[tuple[int, int]]:
    """Unordered electron pairs (j, k), j < k, labels 1-based."""
    return list(itertools.combinations(range(1, n_electrons + 1), 2))


@dataclass(frozen=True)
class ClusterSet:
    """A non-empty set of electron labels inside a system of n_electrons."""

    members: frozenset
    n_electrons: int

    def __post_init__(self):
        if not self.members:
            raise ValueError("cluster must be non-empty")
        if not all(1 <= j <= self.n_electrons for j in self.members):
            raise ValueError(
                f"cluster members {sorted(self.members)} outside 1..{self.n_electrons}"
            )
        object.__setattr__(self, "members", frozenset(self.members))

    @staticmethod
    def of(members, n_electrons: int) -> "ClusterSet":
        return ClusterSet(frozenset(members), n_electrons)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def complement(self) -> frozenset:
        return frozenset(range(1, self.n_electrons + 1)) - self.members

    def indices(self) -> np.ndarray:
        """0-based position-array indices, sorted."""
        return np.array(sorted(j - 1 for j in self.members), dtype=int)

    def cut_pairs(self) -> list[tuple[int, int]]:
        """Pairs (j, k), j < k, with exactly one endpoint in the cluster."""
        return [
            (j, k)
            for j, k in all_pairs(self.n_electrons)
            if (j in self.members) != (k in self.members)
        ]

    def to_dict(self) -> dict:
        return {"members": sorted(self.members), "n_electrons": self.n_electrons}

    @staticmethod
    def from_dict(d: dict) -> "ClusterSet":
        return ClusterSet.of(d["members"], d["n_electrons"])


def cluster_coordinate(positions: np.ndarray, cluster: ClusterSet) -> np.ndarray:
    """Normalized center coordinate: |P|^(-1/2) * sum of member positions."""
    positions = np.asarray(positions, dtype=float)
    idx = cluster.indices()
    return positions[..., idx, :].sum(axis=-2) / np.sqrt(cluster.size)


def cluster_direction(cluster: ClusterSet, axis: int) -> np.ndarray:
    """Unit vector in R^(3N) moving every cluster member along one axis.

    Component (j, s) is delta(s, axis)/sqrt(|P|) for members j, else 0; the
    directional derivative along this vector is the cluster derivative.
    """
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    v = np.zeros((cluster.n_electrons, 3))
    v[cluster.indices(), axis] = 1.0 / np.sqrt(cluster.size)
    return v.reshape(-1)


def in_cluster_region(positions: np.ndarray, cluster: ClusterSet,
                      eps: float) -> np.ndarray | bool:
    """Whether every cluster electron keeps distance > eps from the nucleus
    at the origin and from every electron outside the cluster.

    Accepts a single configuration (N, 3) or a batch (..., N, 3).
    """
    positions = np.asarray(positions, dtype=float)
    single = positions.ndim == 2
    if single:
        positions = positions[None]
    idx = cluster.indices()
    ok = (np.linalg.norm(positions[..., idx, :], axis=-1) > eps).all(axis=-1)
    comp = sorted(j - 1 for j in cluster.complement)
    if comp:
        diff = positions[..., idx, None, :] - positions[..., None, comp, :]
        ok &= (np.linalg.norm(diff, axis=-1) > eps).all(axis=(-1, -2))
    return bool(ok[0]) if single else ok


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for u <= 0, 0 for u >= 1, strictly between elsewhere."""
    u = np.asarray(u, dtype=float)
    fu = np.zeros_like(u)
    fv = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    with np.errstate(over="ignore"):
        fu[inside] = np.exp(-1.0 / u[inside])
        fv[inside] = np.exp(-1.0 / (1.0 - u[inside]))
    out = np.where(u <= 0.0, 1.0, 0.0)
    out[inside] = fv[inside] / (fu[inside] + fv[inside])
    return out


def _smooth_step_deriv(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    ui = u[inside]
    fu = np.exp(-1.0 / ui)
    fv = np.exp(-1.0 / (1.0 - ui))
    dfu = fu / ui**2
    dfv = fv / (1.0 - ui) ** 2
    # d/du [fv / (fu + fv)]; note fv' here means d/du f(1-u) = -dfv
    g = fu + fv
    out[inside] = (-dfv * g - fv * (dfu - dfv)) / g**2
    return out


@dataclass(frozen=True)
class CutoffPair:
    """The near/far cutoff functions chi1 + chi2 = 1 at scale epsilon.

    chi1 is radial: identically 1 for r <= epsilon/(4N) and 0 for
    r >= epsilon/(2N), interpolated by a smooth step in between.
    """

    epsilon: float
    n_electrons: int

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.n_electrons < 1:
            raise ValueError("n_electrons must be >= 1")

    @property
    def plateau_radius(self) -> float:
        return self.epsilon / (4 * self.n_electrons)

    @property
    def support_radius(self) -> float:
        return self.epsilon / (2 * self.n_electrons)

    def chi1_radial(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return _smooth_step((r - self.plateau_radius) / self.plateau_radius)

    def dchi1_radial(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        u = (r - self.plateau_radius) / self.plateau_radius
        return _smooth_step_deriv(u) / self.plateau_radius

    def chi1(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.chi1_radial(np.linalg.norm(t, axis=-1))

    def chi2(self, t: np.ndarray) -> np.ndarray:
        return 1.0 - self.chi1(t)

    def dchi2(self, t: np.ndarray, axis: int) -> np.ndarray:
        """Exact partial derivative of chi2 along one axis; 0 at t = 0."""
        if axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        t = np.asarray(t, dtype=float)
        r = np.linalg.norm(t, axis=-1)
        safe = np.where(r > 0.0, r, 1.0)
        return -self.dchi1_radial(r) * t[..., axis] / safe

    def factor(self, kind: str, t: np.ndarray) -> np.ndarray:
        """Evaluate one named pair factor on difference vectors t."""
        if kind == "chi1":
            return self.chi1(t)
        if kind == "chi2":
            return self.chi2(t)
        if kind.startswith("dchi2_"):
            return self.dchi2(t, int(kind[-1]) - 1)
        raise ValueError(f"unknown factor kind {kind!r}")


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]  # path compression
            a = self.parent[a]
        return a

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


def cluster_of_electron_one(pairs, n_electrons: int) -> ClusterSet:
    """Connected component of electron 1 in the graph with the given edges."""
    uf = _UnionFind(n_electrons + 1)
    for j, k in pairs:
        uf.union(j, k)
    root = uf.find(1)
    members = {j for j in range(1, n_electrons + 1) if uf.find(j) == root}
    return ClusterSet.of(members, n_electrons)


@dataclass(frozen=True)
class CutoffProduct:
    """One term of the expanded pair partition of unity.

    `factors` assigns each unordered pair (j, k), j < k, one factor kind.
    The factor argument is always the stored orientation x_j - x_k; the
    derivative factors dchi2_s are odd, so orientation matters and sign
    conventions live with whoever builds the term.
    """

    n_electrons: int
    factors: tuple  # ((j, k), kind) sorted by pair

    def __post_init__(self):
        fac = dict(self.factors)
        expected = all_pairs(self.n_electrons)
        if sorted(fac) != expected:
            raise ValueError("factors must cover every pair exactly once")
        for kind in fac.values():
            if kind not in FACTOR_KINDS:
                raise ValueError(f"unknown factor kind {kind!r}")
        object.__setattr__(
            self, "factors", tuple(sorted(fac.items()))
        )

    @staticmethod
    def from_mapping(factors: dict, n_electrons: int) -> "CutoffProduct":
        return CutoffProduct(n_electrons, tuple(sorted(factors.items())))

    def factor_map(self) -> dict:
        return dict(self.factors)

    def pair_index_set(self) -> frozenset:
        """Pairs whose factor is anything other than plain chi2."""
        return frozenset(p for p, kind in self.factors if kind != "chi2")

    def cluster(self) -> ClusterSet:
        return cluster_of_electron_one(self.pair_index_set(), self.n_electrons)

    def replace_factor(self, pair, kind: str) -> "CutoffProduct":
        fac = self.factor_map()
        if pair not in fac:
            raise KeyError(f"no such pair {pair}")
        fac[pair] = kind
        return CutoffProduct.from_mapping(fac, self.n_electrons)

    def value(self, positions: np.ndarray, cut: CutoffPair) -> np.ndarray:
        """Product of all pair factors at configurations (..., N, 3)."""
        positions = np.asarray(positions, dtype=float)
        out = np.ones(positions.shape[:-2])
        for (j, k), kind in self.factors:
            t = positions[..., j - 1, :] - positions[..., k - 1, :]
            out = out * cut.factor(kind, t)
        return out

    def to_dict(self) -> dict:
        return {
            "n_electrons": self.n_electrons,
            "factors": {f"{j},{k}": kind for (j, k), kind in self.factors},
        }

    @staticmethod
    def from_dict(d: dict) -> "CutoffProduct":
        fac = {}
        for key, kind in d["factors"].items():
            j, k = (int(s) for s in key.split(","))
            fac[(j, k)] = kind
        return CutoffProduct.from_mapping(fac, d["n_electrons"])


def chi_product_family(n_electrons: int) -> list[CutoffProduct]:
    """All 2^(#pairs) chi1/chi2 assignments, in binary order over pairs."""
    pairs = all_pairs(n_electrons)
    family = []
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        fac = {p: ("chi1" if b else "chi2") for p, b in zip(pairs, bits)}
        family.append(CutoffProduct.from_mapping(fac, n_electrons))
    return family


def partition_of_unity_sum(positions: np.ndarray, cut: CutoffPair) -> np.ndarray:
    """Sum of every term in chi_product_family; identically 1 up to rounding."""
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[-2]
    pairs = all_pairs(n)
    chi1 = [
        cut.chi1(positions[..., j - 1, :] - positions[..., k - 1, :])
        for j, k in pairs
    ]
    chi2 = [1.0 - c for c in chi1]
    total = np.zeros(positions.shape[:-2])
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        term = np.ones(positions.shape[:-2])
        for b, c1, c2 in zip(bits, chi1, chi2):
            term = term * (c1 if b else c2)
        total += term
    return total


@dataclass(frozen=True)
class SupportCheckResult:
    n_accepted: int
    n_violations: int
    example: np.ndarray | None

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def _spanning_forest(term: CutoffProduct) -> tuple[list, list]:
    """BFS forest over the non-chi2 pair graph, roots first.

    Returns (roots, edges) where edges are (parent, child, kind) in placement
    order and electron 1 is always the first root.
    """
    n = term.n_electrons
    adj: dict[int, list] = {j: [] for j in range(1, n + 1)}
    for (j, k), kind in term.factors:
        if kind != "chi2":
            adj[j].append((k, kind))
            adj[k].append((j, kind))
    seen = set()
    roots, edges = [], []
    for start in range(1, n + 1):
        if start in seen:
            continue
        roots.append(start)
        seen.add(start)
        queue = [start]
        while queue:
            cur = queue.pop(0)
            for nxt, kind in adj[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    edges.append((cur, nxt, kind))
                    queue.append(nxt)
    return roots, edges


def support_condition_check(term: CutoffProduct, cut: CutoffPair,
                            n_samples: int, seed: int,
                            cluster: ClusterSet | None = None,
                            max_factor: int = 200) -> SupportCheckResult:
    """Sample the support of `term` intersected with {|x_1| > epsilon} and
    count configurations outside the separation region of its cluster.

    Proposals are biased toward the support boundary: distances for near
    factors concentrate around the plateau and support radii.  Acceptance
    requires the term value to be exactly non-zero.  Passing an explicit
    `cluster` overrides the term's own (for negative controls).
    """
    if cluster is None:
        cluster = term.cluster()
    rng = np.random.default_rng(seed)
    n = term.n_electrons
    eps = cut.epsilon
    r_in, r_out = cut.plateau_radius, cut.support_radius
    roots, edges = _spanning_forest(term)
    accepted = 0
    violations = 0
    example = None
    proposed = 0
    batch = max(2048, min(40000, 2 * n_samples))
    while accepted < n_samples:
        if proposed > max_factor * n_samples + batch:
            raise RuntimeError("support sampler acceptance rate too low")
        proposed += batch
        pos = np.zeros((batch, n, 3))
        # electron 1: radius biased toward the |x_1| = epsilon boundary
        u = rng.exponential(0.35, size=batch)
        rad1 = eps * (1.0 + np.minimum(u, 1.0))
        pos[:, 0, :] = rad1[:, None] * _random_directions(rng, batch)
        for root in roots:
            if root == 1:
                continue
            pos[:, root - 1, :] = rng.uniform(-2 * eps, 2 * eps, size=(batch, 3))
        for parent, child, kind in edges:
            d = _edge_distances(rng, kind, r_in, r_out, batch)
            pos[:, child - 1, :] = (
                pos[:, parent - 1, :] + d[:, None] * _random_directions(rng, batch)
            )
        values = term.value(pos, cut)
        ok = values != 0.0
        if not ok.any():
            continue
        pos_ok = pos[ok]
        take = min(n_samples - accepted, pos_ok.shape[0])
        pos_ok = pos_ok[:take]
        accepted += take
        inside = in_cluster_region(pos_ok, cluster, cut.plateau_radius)
        bad = ~inside
        if bad.any():
            violations += int(bad.sum())
            if example is None:
                example = pos_ok[np.argmax(bad)].copy()
    return SupportCheckResult(accepted, violations, example)


def _random_directions(rng, count: int) -> np.ndarray:
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _edge_distances(rng, kind: str, r_in: float, r_out: float,
                    count: int) -> np.ndarray:
    if kind == "chi1":
        # mix deep-plateau, transition, and near-boundary distances
        choice = rng.random(count)
        d = np.empty(count)
        deep = choice < 0.35
        trans = (choice >= 0.35) & (choice < 0.75)
        d[deep] = r_in * rng.random(deep.sum())
        d[trans] = r_in + (r_out - r_in) * rng.random(trans.sum())
        edge = ~(deep | trans)
        d[edge] = r_out * (1.0 - 0.05 * rng.random(edge.sum()))
        return d
    # a differentiated far factor lives on the transition shell
    return r_in + (r_out - r_in) * rng.random(count)
