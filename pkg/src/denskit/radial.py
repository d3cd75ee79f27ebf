"""Exact partial derivatives of radial functions of a 3-vector argument.

Every supported function is built from powers of r = |t|, monomials in the
components of t, and an optional factor exp(-a*r).  Differentiating such a
term stays inside that family:

    d/dt_s [ t^beta r^-m e^(-a r) ]
        = beta_s t^(beta - e_s) r^-m e^(-a r)
          - m t^(beta + e_s) r^(-m-2) e^(-a r)
          - a t^(beta + e_s) r^(-m-1) e^(-a r)

so a derivative of any order is a finite table of terms with exact integer
coefficients.  Tables are built once per (kind, multi-index) and memoized.
The `a` parameter enters only at evaluation time, through the recorded
power p of each term.
"""
from __future__ import annotations

import numpy as np

from .multiindex import MultiIndex, order

# function kinds: starting term (beta, m, p) -> coeff, and whether exp(-a r)
# is attached.  "one" is the constant 1 (all derivatives vanish).
_BASE = {
    "inverse_r": ({((0, 0, 0), 1, 0): 1}, False),
    "yukawa": ({((0, 0, 0), 1, 0): 1}, True),
    "exponential": ({((0, 0, 0), 0, 0): 1}, True),
    "radius": ({((0, 0, 0), -1, 0): 1}, False),
    "one": ({((0, 0, 0), 0, 0): 1}, False),
}

MAX_ORDER = 12


class UnsupportedOrderError(ValueError):
    """Derivative order beyond the memoized table range."""


_memo: dict[tuple[str, tuple[int, int, int]], dict] = {}


def has_exponential(kind: str) -> bool:
    if kind not in _BASE:
        raise ValueError(f"unknown radial kind {kind!r}")
    return _BASE[kind][1]


def derivative_terms(kind: str, gamma: MultiIndex) -> dict:
    """Term table for the gamma-derivative of the given radial kind.

    Keys are (beta, m, p): the term coeff * a^p * t^beta * r^-m, times
    exp(-a r) when the kind carries the exponential factor.
    """
    if kind not in _BASE:
        raise ValueError(f"unknown radial kind {kind!r}")
    if gamma.dimension != 3:
        raise ValueError("radial derivatives take 3-dimensional multi-indices")
    if order(gamma) > MAX_ORDER:
        raise UnsupportedOrderError(
            f"derivative order {order(gamma)} exceeds supported table"
            f" (max {MAX_ORDER})"
        )
    key = (kind, gamma.entries)
    if key in _memo:
        return _memo[key]
    base, with_exp = _BASE[kind]
    if kind == "one" and order(gamma) > 0:
        _memo[key] = {}
        return {}
    if order(gamma) == 0:
        _memo[key] = dict(base)
        return _memo[key]
    axis = next(s for s in range(3) if gamma[s] > 0)
    parent = derivative_terms(kind, gamma - MultiIndex.unit(3, axis))
    out: dict = {}

    def _add(k, c):
        out[k] = out.get(k, 0) + c
        if out[k] == 0:
            del out[k]

    for (beta, m, p), c in parent.items():
        if beta[axis] > 0:
            b = list(beta)
            b[axis] -= 1
            _add((tuple(b), m, p), c * beta[axis])
        if m != 0:
            b = list(beta)
            b[axis] += 1
            _add((tuple(b), m + 2, p), -c * m)
        if with_exp:
            b = list(beta)
            b[axis] += 1
            _add((tuple(b), m + 1, p + 1), -c)
    _memo[key] = out
    return out


def evaluate_terms(kind: str, gamma: MultiIndex, t: np.ndarray, a: float = 0.0,
                   mask: np.ndarray | None = None) -> np.ndarray:
    """Evaluate the gamma-derivative of the radial kind at points t (..., 3).

    Negative powers of r blow up at t = 0; pass a boolean `mask` to restrict
    evaluation (masked-out points return 0 and never touch r = 0).
    """
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != 3:
        raise ValueError("t must have trailing dimension 3")
    terms = derivative_terms(kind, gamma)
    shape = t.shape[:-1]
    out = np.zeros(shape)
    if not terms:
        return out
    if mask is None:
        mask = np.ones(shape, dtype=bool)
    tm = t[mask]
    r = np.sqrt(np.sum(tm * tm, axis=-1))
    comp_pows: dict[tuple[int, int], np.ndarray] = {}
    r_pows: dict[int, np.ndarray] = {}

    def _cpow(axis: int, k: int) -> np.ndarray:
        if k == 0:
            return 1.0
        key = (axis, k)
        if key not in comp_pows:
            comp_pows[key] = tm[..., axis] ** k
        return comp_pows[key]

    def _rpow(m: int) -> np.ndarray:
        if m == 0:
            return 1.0
        if m not in r_pows:
            r_pows[m] = r ** float(-m)
        return r_pows[m]

    acc = np.zeros(r.shape)
    for (beta, m, p), c in terms.items():
        coeff = float(c) * (a ** p if p else 1.0)
        if coeff == 0.0:
            continue
        term = coeff * _rpow(m)
        for axis in range(3):
            if beta[axis]:
                term = term * _cpow(axis, beta[axis])
        acc += term
    if has_exponential(kind):
        acc *= np.exp(-a * r)
    out[mask] = acc
    return out
