"""Named check suites: each turns one facet of the machinery into rows.

A row is a plain dict (suite, check, status, value, target, detail) so the
report writer can serialize it without knowing what was checked.  Suites
prefer references that do not share code with the quantity under test: the
closed marginal of an exponential product, the direct single-grid route,
finite differences on a shared lattice, or structural facts that hold
exactly.
"""
from __future__ import annotations

import math

import numpy as np

from .analyticity import cluster_growth_report, verify_density_growth
from .clusters import (
    ClusterSet,
    CutoffPair,
    chi_product_family,
    partition_of_unity_sum,
    support_condition_check,
)
from .density import (
    expand_fully,
    gamma1,
    radial_derivs_at_zero,
    rho,
    rho_deriv_with_error,
    rho_direct,
    rho_symmetrized,
    rho_tilde,
)
from .multiindex import MultiIndex, indices_up_to, order
from .potentials import PotentialSpec, hardy_check, potential_growth_check
from .quadrature import fd_reference_table
from .wavefunctions import (
    CorrelatedPair,
    HydrogenicProduct,
    UserWavefunction,
    cluster_derivative_psi,
    model_from_config,
)

SUITES = ("density", "derivs", "clusters", "potential-bounds", "growth",
          "cusp", "support")


def _row(suite, check, passed, value=None, target="", detail=""):
    return {
        "suite": suite,
        "check": check,
        "status": "pass" if passed else "fail",
        "value": None if value is None else float(value),
        "target": target,
        "detail": detail,
    }


def build_potential(cfg: dict, n_electrons: int) -> PotentialSpec:
    pot = cfg.get("potential") or {"kind": "atom", "charge": 1.0}
    return PotentialSpec.atom(
        float(pot.get("charge", 1.0)),
        n_electrons,
        en_kind=pot.get("en_kind", "coulomb"),
        ee_kind=pot.get("ee_kind", "coulomb"),
        screening=float(pot.get("screening", 0.0)),
    )


def _points(cfg):
    return [np.asarray(p, dtype=float) for p in cfg["points"]]


def _closed_marginal(model: HydrogenicProduct, x, slot: int = 1) -> float:
    a = model.rates[slot - 1]
    return a**3 / math.pi * math.exp(-2.0 * a * float(np.linalg.norm(x)))


# ---------------------------------------------------------------------------


def _density_suite(model, cfg, rows, plots):
    level, eps, seed = cfg["level"], cfg["eps"], cfg["seed"]
    n = model.n_electrons
    for i, x in enumerate(_points(cfg)):
        v = rho(model, x, eps=eps, level=level, seed=seed)
        if isinstance(model, HydrogenicProduct):
            ref, src = _closed_marginal(model, x), "closed marginal"
            tol = 1e-12 if n == 1 else 1e-6
        else:
            ref, src = rho_direct(model, x, level=level, seed=seed), \
                "direct grid"
            tol = 1e-5
        rel = abs(v - ref) / abs(ref)
        rows.append(_row("density", f"rho at point {i} vs {src}", rel <= tol,
                         rel, f"rel <= {tol:g}", detail=f"rho = {v:.9e}"))
    if n >= 2:
        rng = np.random.default_rng(seed)
        cut = CutoffPair(1.0, n)
        pos = rng.normal(scale=1.5, size=(300, n, 3))
        dev = float(np.max(np.abs(partition_of_unity_sum(pos, cut) - 1.0)))
        rows.append(_row("density", "cutoff products sum to one", dev <= 1e-12,
                         dev, "<= 1e-12"))
    x0 = _points(cfg)[0]
    v_hat = rho_symmetrized(model, x0, eps=eps, level=level, seed=seed)
    if isinstance(model, HydrogenicProduct):
        ref = sum(_closed_marginal(model, x0, slot=j + 1)
                  for j in range(n))
        tol = 1e-12 if n == 1 else 1e-6
    else:
        ref = n * rho(model, x0, eps=eps, level=level, seed=seed)
        tol = 1e-12  # symmetric slots reduce to the same marginal
    rel = abs(v_hat - ref) / abs(ref)
    rows.append(_row("density", "symmetrized marginal", rel <= tol, rel,
                     f"rel <= {tol:g}"))
    if n == 2:
        g = gamma1(model, x0, x0, eps=eps, level=level, seed=seed)
        r0 = rho(model, x0, eps=eps, level=level, seed=seed)
        rel = abs(g - r0) / abs(r0)
        rows.append(_row("density", "gamma1 diagonal recovers rho",
                         rel <= 2e-5, rel, "rel <= 2e-05"))

    direction = x0 / np.linalg.norm(x0)
    radii = np.linspace(0.4, 2.4, 9)
    vals = [rho(model, r * direction, eps=eps, level=level, seed=seed)
            for r in radii]
    if isinstance(model, HydrogenicProduct):
        refs = [_closed_marginal(model, r * direction) for r in radii]
    else:
        refs = [rho_direct(model, r * direction, level=level, seed=seed)
                for r in radii]

    def _job(path, radii=radii, vals=vals, refs=refs):
        from .plots import save_ray_plot

        save_ray_plot(radii, vals, refs, path)

    plots.append(("density_ray.svg", _job))


def _derivs_suite(model, cfg, rows):
    n = model.n_electrons
    if n > 2:
        rows.append(_row(
            "derivs", "finite-difference cross-check", True, None, "n/a",
            detail="needs the deterministic quadrature route; marginals of "
                   "three or more electrons are sampled",
        ))
        return
    x = _points(cfg)[0]
    level, seed = cfg["level"], cfg["seed"]
    eps0 = cfg["eps"] if cfg["eps"] else 0.5 * float(np.linalg.norm(x))
    amax = min(cfg["alpha_max"], 3 if n == 1 else 2)
    alphas = [a.entries for a in indices_up_to(3, amax)]
    if n == 1:
        def field(pts):
            return np.asarray(model.value(pts[:, None, :])) ** 2
    else:
        def field(pts):
            return np.array([
                rho(model, p, eps=eps0, level=1, seed=seed) for p in pts
            ])
    reference = fd_reference_table(field, x, alphas)
    for alpha in alphas:
        v, e_q = rho_deriv_with_error(model, MultiIndex(alpha), x, eps=eps0,
                                      level=level, seed=seed)
        ref, e_fd = reference[alpha]
        tol = 3.0 * math.sqrt(e_fd**2 + e_q**2) + 1e-12
        rows.append(_row(
            "derivs", f"rho_deriv{alpha} vs Richardson differences",
            abs(v - ref) <= tol, abs(v - ref), f"<= {tol:.3e}",
            detail=f"value = {v:.6e}, reference = {ref:.6e}",
        ))


def _clusters_suite(model, cfg, rows):
    n = model.n_electrons
    seed = cfg["seed"]
    if n == 1:
        rows.append(_row("clusters", "expansion structure", True, None, "n/a",
                         detail="one electron: no pairs, no cutoff terms"))
        return
    nested = True
    for alpha in indices_up_to(3, min(cfg["alpha_max"], 3)):
        for t in expand_fully(n, alpha):
            comp = t.phi.cluster().members
            if not all(c.members <= comp for c, _ in t.inner):
                nested = False
            for (j, k), kind in t.phi.factors:
                if kind.startswith("dchi2") and not {j, k} <= comp:
                    nested = False
    rows.append(_row("clusters", "derivative clusters nest in the cutoff "
                     "component", nested, None, "structural"))

    full = ClusterSet.of(set(range(1, n + 1)), n)
    rng = np.random.default_rng(seed)
    pos = rng.normal(scale=1.2, size=(40, n, 3))
    pos[:, 1] += 2.0  # keep pair separations away from zero
    pair_only = UserWavefunction(
        lambda p: 1.0 + 0.5 * np.linalg.norm(p[..., 0, :] - p[..., 1, :],
                                             axis=-1),
        n,
    )
    worst = 0.0
    for alpha in ((1, 0, 0), (0, 2, 0), (1, 1, 0), (0, 0, 4)):
        d = cluster_derivative_psi(pair_only, [full], [MultiIndex(alpha)], pos)
        worst = max(worst, float(np.max(np.abs(d))))
    rows.append(_row("clusters", "full-cluster derivative of a pair factor "
                     "vanishes", worst <= 1e-6, worst, "<= 1e-06"))

    if n == 2:
        corr = CorrelatedPair(rate=0.5, lam=0.5)
        prod = HydrogenicProduct((0.5, 0.5))
        alpha = MultiIndex((2, 1, 0))
        d_corr = cluster_derivative_psi(corr, [full], [alpha], pos)
        d_prod = cluster_derivative_psi(prod, [full], [alpha], pos)
        r12 = np.linalg.norm(pos[:, 0] - pos[:, 1], axis=-1)
        ref = d_prod * (1.0 + 0.25 * r12) * corr.norm_const / prod.norm_const
        rel = float(np.max(np.abs(d_corr - ref) / np.abs(ref)))
        rows.append(_row("clusters", "pair factor rides along "
                         "undifferentiated", rel <= 1e-12, rel,
                         "rel <= 1e-12"))

    cut = CutoffPair(1.0, n)
    for i, phi in enumerate(chi_product_family(n)):
        res = support_condition_check(phi, cut, n_samples=2000, seed=seed + i)
        rows.append(_row(
            "clusters", f"support spot check, family {i}",
            res.n_violations == 0, float(res.n_violations), "== 0",
            detail=f"{res.n_accepted} in-support samples",
        ))


def _potential_suite(model, cfg, rows):
    spec = build_potential(cfg, model.n_electrons)
    n = spec.n_electrons
    seed = cfg["seed"]
    n_samples = cfg["samples"]["potential"]
    amax = min(cfg["alpha_max"], 6)
    clusters = [ClusterSet.of({1}, n)]
    if n >= 2:
        clusters.append(ClusterSet.of(set(range(1, n + 1)), n))
    for cl in clusters:
        name = "{" + ",".join(str(j) for j in sorted(cl.members)) + "}"
        res = potential_growth_check(spec, [cl], eps=1.0, alpha_max=amax,
                                     n_samples=n_samples, seed=seed)
        res2 = potential_growth_check(spec, [cl], eps=1.0, alpha_max=amax,
                                      n_samples=2 * n_samples, seed=seed + 1)
        rows.append(_row(
            "potential-bounds", f"factorial envelope holds on cluster {name}",
            res2.bound_holds(1.05), res2.fitted_rate, "slack 1.05",
            detail=f"{res2.n_region} region samples",
        ))
        stab = abs(res2.fitted_rate - res.fitted_rate) / res.fitted_rate
        rows.append(_row(
            "potential-bounds", f"rate stable under doubling, cluster {name}",
            stab <= 0.10, stab, "<= 0.1",
        ))
    hardy = hardy_check(spec, n_samples=50_000, seed=seed + 2,
                        energy=model.energy)
    rows.append(_row(
        "potential-bounds", "relative-bound ratios stay finite", hardy.finite,
        max(hardy.ratios) if hardy.ratios else None, "finite",
    ))


def _growth_suite(model, cfg, rows, plots):
    n = model.n_electrons
    x = _points(cfg)[0]
    level, seed = cfg["level"], cfg["seed"]
    rep = None
    if n == 1:
        rep = verify_density_growth(model, x, alpha_max=max(cfg["alpha_max"],
                                                            8),
                                    reduced_max=6, radius_k=12, level=level,
                                    seed=seed)
    elif n == 2:
        rep = verify_density_growth(model, x,
                                    alpha_max=min(cfg["alpha_max"], 3),
                                    reduced_max=2, radius_k=None, level=level,
                                    seed=seed)
    if rep is not None:
        rows.append(_row(
            "growth", "fitted rate stable as the table grows",
            rep.rate_stability <= rep.stability_tol, rep.rate_stability,
            f"<= {rep.stability_tol}",
            detail=f"L = {rep.fit_full.rate:.4f}, C = "
                   f"{rep.fit_full.constant:.4e}",
        ))
        for c in rep.radius_checks:
            kind = "lower bound" if c.lower_only else "band"
            rows.append(_row(
                "growth", f"Taylor radius along {np.round(c.direction, 3)}",
                c.within(rep.radius_band, rep.radius_lower_bound), c.ratio,
                f"{kind} {rep.radius_band if not c.lower_only else rep.radius_lower_bound}",
            ))

        def _job(path, fit=rep.fit_full):
            from .plots import save_growth_plot

            save_growth_plot(fit, path)

        plots.append(("growth.svg", _job))

    cl = ClusterSet.of({1}, n)
    crep = cluster_growth_report(
        model, cl, eps=1.0,
        alpha_max=min(cfg["alpha_max"], 6 if n == 1 else 4),
        n_samples=cfg["samples"]["norms"], seed=seed,
    )
    rows.append(_row(
        "growth", "squared-table constant within Leibniz slack",
        crep.constant_ratio <= crep.constant_slack, crep.constant_ratio,
        f"<= {crep.constant_slack}",
    ))
    rows.append(_row(
        "growth", "squared-table rate within doubling slack",
        crep.rate_ratio <= crep.rate_slack, crep.rate_ratio,
        f"<= {crep.rate_slack}",
    ))


def _cusp_suite(model, cfg, rows, plots):
    n = model.n_electrons
    level, seed = cfg["level"], cfg["seed"]
    cusp = radial_derivs_at_zero(model, level=level, seed=seed)
    ratio = cusp.d1 / cusp.value0
    if isinstance(model, HydrogenicProduct):
        z = 2.0 * model.rates[0]
        rel = abs(ratio + z) / z
        tol = 1e-4 if n == 1 else 2e-3
        rows.append(_row(
            "cusp", "log-derivative at the nucleus", rel <= tol, rel,
            f"rel <= {tol:g}", detail=f"ratio = {ratio:.6f}, expected {-z}",
        ))
    rows.append(_row(
        "cusp", "second radial derivative consistent under step halving",
        cusp.d2_consistency <= 0.05, cusp.d2_consistency, "<= 0.05",
        detail=f"d2 = {cusp.d2:.6e}",
    ))
    radii = np.linspace(0.0, 1.2, 9)
    vals = [rho_tilde(model, float(r), level=level, seed=seed) for r in radii]

    def _job(path, radii=radii, vals=vals):
        from .plots import save_cusp_plot

        save_cusp_plot(radii, vals, path)

    plots.append(("cusp_profile.svg", _job))


def _phi_families(n: int, cap: int = 12):
    families = {phi.factors: phi for phi in chi_product_family(n)}
    for alpha in ((1, 0, 0), (1, 1, 0)):
        for t in expand_fully(n, alpha):
            families.setdefault(t.phi.factors, t.phi)
    return [families[k] for k in sorted(families)][:cap]


def _support_suite(model, cfg, rows):
    n = model.n_electrons
    seed = cfg["seed"]
    if n == 1:
        rows.append(_row("support", "separation condition", True, None, "n/a",
                         detail="one electron: every cutoff product is 1"))
        return
    cut = CutoffPair(1.0, n)
    n_samples = cfg["samples"]["support"]
    for i, phi in enumerate(_phi_families(n)):
        res = support_condition_check(phi, cut, n_samples=n_samples,
                                      seed=seed + 13 * i)
        rows.append(_row(
            "support", f"family {i} stays inside its separation region",
            res.n_violations == 0, float(res.n_violations), "== 0",
            detail=f"{res.n_accepted} in-support samples",
        ))
    # negative control: claim a too-small cluster for the all-pairs product
    glued = chi_product_family(n)[-1]
    res = support_condition_check(glued, cut, n_samples=n_samples,
                                  seed=seed + 999,
                                  cluster=ClusterSet.of({1}, n))
    rows.append(_row(
        "support", "negative control rejects a wrong cluster",
        res.n_violations >= 1, float(res.n_violations), ">= 1",
    ))


# ---------------------------------------------------------------------------


def run_report(cfg: dict, suite_names, trace_terms: bool = False):
    """Run the requested suites; returns (report, plot_jobs, traces)."""
    model = model_from_config(cfg["model"])
    rows: list = []
    plots: list = []
    for name in suite_names:
        if name == "density":
            _density_suite(model, cfg, rows, plots)
        elif name == "derivs":
            _derivs_suite(model, cfg, rows)
        elif name == "clusters":
            _clusters_suite(model, cfg, rows)
        elif name == "potential-bounds":
            _potential_suite(model, cfg, rows)
        elif name == "growth":
            _growth_suite(model, cfg, rows, plots)
        elif name == "cusp":
            _cusp_suite(model, cfg, rows, plots)
        elif name == "support":
            _support_suite(model, cfg, rows)
        else:
            raise ValueError(f"unknown suite {name!r}")
    traces = None
    if trace_terms and model.n_electrons >= 2:
        traces = []
        for alpha in indices_up_to(3, min(cfg["alpha_max"], 2)):
            _, trace = expand_fully(model.n_electrons, alpha, trace=True)
            traces.append(trace)
    report = {
        "package": "denskit",
        "config": cfg,
        "suites": list(suite_names),
        "rows": rows,
        "all_passed": all(r["status"] == "pass" for r in rows),
    }
    return report, plots, traces
