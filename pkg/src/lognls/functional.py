"""Energy functional, its gradient, the F1/F2 splitting and Nehari scaling.

For p > 1 the energy of a field u is

    J(u) = 1/p sum(|grad u|_p^p + (V + 1)|u|^p) - 1/p sum |u|^p log |u|^p

with 0 log 0 := 0. On a finite graph J is C^1 and its gradient is the
pointwise equation residual -Delta_p u + V|u|^{p-2}u - |u|^{p-2}u log|u|^p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import (GraphTopology, apply_laplacian, apply_p_laplacian, as_field,
                    gradient_p_density, signed_power)


def _values(pot) -> np.ndarray:
    return np.asarray(getattr(pot, "values", pot), dtype=float)


def _check_p(p):
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")


def xlogx_power(u: np.ndarray, p: float) -> np.ndarray:
    """|u|^p log |u|^p entrywise, 0 where u = 0."""
    a = np.abs(u) ** p
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = a[nz] * np.log(a[nz])
    return out


def _use_square(p, general):
    return p == 2 and not general


def energy(g: GraphTopology, pot, u, p: float = 2.0, general: bool = False) -> float:
    """J(u). ``general=True`` forces the p-power code path even at p = 2."""
    _check_p(p)
    u = as_field(g, u)
    V = _values(pot)
    if _use_square(p, general):
        kinetic = -float(np.dot(apply_laplacian(g, u), u))
        mass = u * u
        return 0.5 * (kinetic + float(np.sum((V + 1.0) * mass))) \
            - 0.5 * float(np.sum(xlogx_power(u, 2.0)))
    kinetic = float(np.sum(gradient_p_density(g, u, p)))
    mass = np.abs(u) ** p
    return (kinetic + float(np.sum((V + 1.0) * mass))
            - float(np.sum(xlogx_power(u, p)))) / p


def energy_gradient(g: GraphTopology, pot, u, p: float = 2.0) -> np.ndarray:
    """Gradient of J, assembled term by term from the energy.

    The edge term 1/p |u(b) - u(a)|^p is differentiated edge by edge; each
    exterior edge of a Dirichlet box contributes 1/p |u(x)|^p.
    """
    _check_p(p)
    u = as_field(g, u)
    V = _values(pot)
    a, b = g.edges[:, 0], g.edges[:, 1]
    flux = signed_power(u[a] - u[b], p - 1)
    grad = np.zeros(g.vertex_count)
    np.add.at(grad, a, flux)
    np.add.at(grad, b, -flux)
    up = signed_power(u, p - 1)
    grad += g.exterior_degree * up
    grad += (V + 1.0) * up
    # d/ds [1/p |s|^p log|s|^p] = |s|^{p-2}s (log|s|^p + 1), zero at s = 0
    logs = np.zeros_like(u)
    nz = u != 0
    logs[nz] = p * np.log(np.abs(u[nz]))
    grad -= up * (logs + 1.0)
    return grad


def residual(g: GraphTopology, pot, u, p: float = 2.0, general: bool = False) -> np.ndarray:
    """Pointwise residual -Delta_p u + V|u|^{p-2}u - |u|^{p-2}u log|u|^p."""
    _check_p(p)
    u = as_field(g, u)
    V = _values(pot)
    if _use_square(p, general):
        lap = apply_laplacian(g, u)
        return -lap + V * u - u * np.where(u != 0, np.log(np.where(u != 0, u * u, 1.0)), 0.0)
    lap = apply_p_laplacian(g, u, p)
    up = signed_power(u, p - 1)
    absu = np.abs(u)
    logp = np.where(absu > 0, np.log(np.where(absu > 0, absu ** p, 1.0)), 0.0)
    return -lap + V * up - up * logp


def lp_mass(u: np.ndarray, p: float) -> float:
    """sum |u|^p."""
    return float(np.sum(np.abs(u) ** p))


# -- F1 / F2 splitting ----------------------------------------------------

def max_split_threshold(p: float = 2.0) -> float:
    """Largest delta keeping F1 convex: exp(-(2p-1)/(p(p-1))), e^{-3/2} at p=2."""
    _check_p(p)
    return math.exp(-(2 * p - 1) / (p * (p - 1)))


DEFAULT_DELTA = max_split_threshold(2.0)


def _inner(s, p):
    # -1/p |s|^p log|s|^p and its first two derivatives in |s| (s > 0)
    f = -(s ** p) * math.log(s)
    df = -(s ** (p - 1)) * (p * math.log(s) + 1.0)
    d2f = -(s ** (p - 2)) * ((p - 1) * (p * math.log(s) + 1.0) + p)
    return f, df, d2f


def f_split(s, delta: float = DEFAULT_DELTA, p: float = 2.0):
    """Return (F1, F2, F1', F2') at ``s`` (scalar or array).

    F1 equals -1/p |s|^p log|s|^p for 0 < |s| < delta and continues as its
    second-order Taylor polynomial in |s| beyond delta; F2 = F1 + 1/p |s|^p log|s|^p.
    At p = 2 this is -1/2 s^2 (log delta^2 + 3) + 2 delta |s| - 1/2 delta^2.
    """
    _check_p(p)
    if not 0 < delta <= max_split_threshold(p) * (1 + 1e-15):
        raise ValueError(
            f"delta must lie in (0, {max_split_threshold(p):.17g}], got {delta}"
        )
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    sign = np.sign(s)
    f0, f1, f2 = _inner(delta, p)
    F1 = np.zeros_like(a)
    dF1 = np.zeros_like(a)
    mid = (a > 0) & (a < delta)
    out = a >= delta
    am = a[mid]
    F1[mid] = -(am ** p) * np.log(am)
    dF1[mid] = -(am ** (p - 1)) * (p * np.log(am) + 1.0)
    h = a[out] - delta
    F1[out] = f0 + f1 * h + 0.5 * f2 * h * h
    dF1[out] = f1 + f2 * h
    dF1 = sign * dF1
    plog = xlogx_power(s.ravel(), p).reshape(s.shape) / p
    with np.errstate(divide="ignore", invalid="ignore"):
        dplog = np.where(a > 0, sign * a ** (p - 1) * (p * np.log(np.where(a > 0, a, 1.0)) + 1.0), 0.0)
    F2 = plog + F1
    dF2 = dplog + dF1
    if s.ndim == 0:
        return float(F1), float(F2), float(dF1), float(dF2)
    return F1, F2, dF1, dF2


def f2_growth_constant(q: float, delta: float = DEFAULT_DELTA, p: float = 2.0,
                       s_max: float = 50.0, samples: int = 100_001) -> float:
    """sup |F2'(s)| / |s|^{q-1} over a grid on [-s_max, s_max], for q > 2."""
    if not q > 2:
        raise ValueError("growth exponent must exceed 2")
    s = np.linspace(-s_max, s_max, samples)
    s = s[s != 0]
    _, _, _, dF2 = f_split(s, delta, p)
    return float(np.max(np.abs(dF2) / np.abs(s) ** (q - 1)))


@dataclass
class EnergySplit:
    phi: float
    psi: float
    total: float
    delta: float


def energy_split(g: GraphTopology, pot, u, delta: float = DEFAULT_DELTA,
                 p: float = 2.0) -> EnergySplit:
    """J = Phi + Psi with Psi = sum F1(u) convex and nonnegative."""
    u = as_field(g, u)
    V = _values(pot)
    F1, F2, _, _ = f_split(u, delta, p)
    quad = (float(np.sum(gradient_p_density(g, u, p)))
            + float(np.sum((V + 1.0) * np.abs(u) ** p))) / p
    phi = quad - float(np.sum(F2))
    psi = float(np.sum(F1))
    return EnergySplit(phi=phi, psi=psi, total=phi + psi, delta=delta)


def inner_product(g: GraphTopology, pot, u, v) -> float:
    """<u, v>_X = sum Gamma(u, v) + (V + 1) u v (Hilbert case, p = 2)."""
    u = as_field(g, u)
    v = as_field(g, v)
    V = _values(pot)
    return float(-np.dot(apply_laplacian(g, u), v) + np.sum((V + 1.0) * u * v))


# -- Nehari manifold ------------------------------------------------------

@dataclass
class NehariReport:
    t: float
    residual_before: float
    residual_after: float
    energy_after: float


def nehari_residual(g: GraphTopology, pot, u, p: float = 2.0) -> float:
    """<J'(u), u>."""
    u = as_field(g, u)
    return float(np.dot(energy_gradient(g, pot, u, p), u))


def nehari_scale(g: GraphTopology, pot, u, p: float = 2.0, general: bool = False) -> float:
    """Scale t > 0 with t*u on the Nehari manifold.

    s -> J(s u) = s^p J(u) - s^p log(s) |u|_p^p peaks where
    log t = J(u) / |u|_p^p - 1/p.
    """
    u = as_field(g, u)
    mass = lp_mass(u, p)
    if mass == 0:
        raise ValueError("the zero field has no Nehari projection")
    return math.exp(energy(g, pot, u, p, general) / mass - 1.0 / p)


def nehari_project(g: GraphTopology, pot, u, p: float = 2.0,
                   general: bool = False) -> tuple[np.ndarray, NehariReport]:
    before = nehari_residual(g, pot, u, p)
    t = nehari_scale(g, pot, u, p, general)
    v = t * np.asarray(u, dtype=float)
    report = NehariReport(t=t, residual_before=before,
                          residual_after=nehari_residual(g, pot, v, p),
                          energy_after=energy(g, pot, v, p, general))
    return v, report
