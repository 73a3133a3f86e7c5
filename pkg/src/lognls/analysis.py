"""Numerical checks of the identities and inequalities behind the theory.

Each check returns a :class:`CheckReport` with both sides of the relation so a
failure can be inspected rather than just flagged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .functional import (energy, energy_gradient, lp_mass, nehari_residual, residual,
                         xlogx_power)
from .graph import GraphTopology, as_field, norm
from .potentials import shift_potential
from .reports import CheckReport


class CheckError(ValueError):
    """A check was called outside its domain."""


def check_log_sobolev(u, p: float = 2.0, tol: float = 1e-12) -> CheckReport:
    """sum |u|^p log|u|^p <= |u|_p^p log |u|_p^p.

    Holds because |u(x)| <= |u|_p pointwise under the counting measure.
    """
    u = np.asarray(u, dtype=float)
    mass = lp_mass(u, p)
    if mass == 0:
        raise CheckError("log-Sobolev check needs a nonzero field")
    lhs = float(np.sum(xlogx_power(u, p)))
    rhs = mass * math.log(mass)
    return CheckReport("log_sobolev", lhs, rhs, lhs <= rhs + tol, tol,
                       {"p": p, "mass": mass})


def check_norm_equivalence(g: GraphTopology, u, tol: float = 1e-12) -> CheckReport:
    """|u|_2 <= ||u||_{H^1} <= sqrt(2C + 1) |u|_2 with C the degree bound."""
    u = as_field(g, u)
    l2 = norm(g, u, "lp", 2.0)
    h1 = norm(g, u, "sobolev", 2.0)
    C = g.max_degree
    upper = math.sqrt(2 * C + 1) * l2
    lower_ok = l2 <= h1 * (1 + tol)
    upper_ok = h1 <= upper * (1 + tol)
    return CheckReport("norm_equivalence", h1, upper, bool(lower_ok and upper_ok), tol,
                       {"l2": l2, "h1": h1, "C": C, "lower_ok": bool(lower_ok),
                        "upper_ok": bool(upper_ok)})


def check_lambda_shift(g: GraphTopology, pot, u, lam: float, p: float = 2.0) -> CheckReport:
    """Residual transport under u = lam * v: R_{V - log lam^2}(u / lam) = R_V(u) / lam."""
    if p != 2:
        raise CheckError("the lambda-shift covariance is checked for p = 2")
    if not lam > 0:
        raise CheckError("lambda must be positive")
    u = as_field(g, u)
    details = {"lambda": lam}
    try:
        shifted = shift_potential(pot, lam)
    except ValueError:
        shifted = shift_potential(pot, lam, check=False)
        details["shifted_inadmissible"] = True
    base = residual(g, pot, u, 2.0)
    moved = residual(g, shifted, u / lam, 2.0)
    lhs = float(np.max(np.abs(moved - base / lam)))
    rhs = 1e-10 * (1.0 + float(np.max(np.abs(base))))
    details["transported_residual_sup"] = float(np.max(np.abs(moved)))
    return CheckReport("lambda_shift", lhs, rhs, lhs <= rhs, rhs, details)


def check_sign_inequality(g: GraphTopology, pot, u) -> CheckReport:
    """J(u+) + J(u-) <= J(u) with u+ = max(u, 0), u- = min(u, 0)  (p = 2)."""
    u = as_field(g, u)
    plus = np.maximum(u, 0.0)
    minus = np.minimum(u, 0.0)
    lhs = energy(g, pot, plus) + energy(g, pot, minus)
    rhs = energy(g, pot, u)
    tol = 1e-10 * (1.0 + abs(rhs))
    return CheckReport("sign_inequality", lhs, rhs, lhs <= rhs + tol, tol,
                       {"gap": rhs - lhs})


SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


def check_scaling_identity(g: GraphTopology, pot, u, p: float = 2.0,
                           scales=SCALES, tol: float = 1e-9) -> CheckReport:
    """J(s u) = s^p J(u) - s^p log(s) |u|_p^p over the sampled scales."""
    u = as_field(g, u)
    if not np.any(u):
        raise CheckError("scaling identity needs a nonzero field")
    J = energy(g, pot, u, p)
    mass = lp_mass(u, p)
    worst = 0.0
    defects = {}
    for s in scales:
        direct = energy(g, pot, s * u, p)
        predicted = s ** p * J - s ** p * math.log(s) * mass
        defect = abs(direct - predicted) / (1.0 + abs(direct))
        defects[str(s)] = defect
        worst = max(worst, defect)
    return CheckReport("scaling_identity", worst, tol, worst <= tol, tol,
                       {"p": p, "defects": defects})


def check_max_at_one(g: GraphTopology, pot, u, p: float = 2.0,
                     points: int = 200) -> CheckReport:
    """On the Nehari manifold, s -> J(s u) over [0.1, 10] peaks at the grid point nearest 1."""
    u = as_field(g, u)
    mass = lp_mass(u, p)
    nr = nehari_residual(g, pot, u, p)
    if abs(nr) > 1e-8 * (1.0 + mass):
        raise CheckError(
            f"field is off the Nehari manifold (<J'(u), u> = {nr:.3e}); "
            "project it with nehari_project first"
        )
    grid = np.logspace(-1.0, 1.0, points)
    values = np.array([energy(g, pot, s * u, p) for s in grid])
    peak = int(np.argmax(values))
    nearest = int(np.argmin(np.abs(grid - 1.0)))
    J = energy(g, pot, u, p)
    ok = peak == nearest and values[0] < J and values[-1] < J
    return CheckReport("max_at_one", float(grid[peak]), float(grid[nearest]), bool(ok), 0.0,
                       {"energy": J, "endpoint_values": [float(values[0]), float(values[-1])]})


def grad_check(g: GraphTopology, pot, u, p: float = 2.0, tol: float = 1e-6) -> CheckReport:
    """energy_gradient against central differences of the energy."""
    u = as_field(g, u)
    zeros = np.flatnonzero(u == 0)
    if len(zeros):
        raise CheckError(f"finite differences need nonzero entries; zero at {zeros.tolist()}")
    h = 1e-6 * (1.0 + float(np.max(np.abs(u))))
    analytic = energy_gradient(g, pot, u, p)
    numeric = np.empty_like(u)
    for i in range(len(u)):
        e = np.zeros_like(u)
        e[i] = h
        numeric[i] = (energy(g, pot, u + e, p) - energy(g, pot, u - e, p)) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(analytic))))
    err = float(np.max(np.abs(analytic - numeric))) / scale
    return CheckReport("grad_check", err, tol, err < tol, tol, {"p": p, "step": h})


# -- the divergent log series ---------------------------------------------

@dataclass
class SeriesReport:
    p: float
    n_max: int
    mass_partial: float
    log_partial: float
    checkpoints: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def decade_increments(self):
        """(n_from, n_to, mass increment, |log| increment) between checkpoints."""
        out = []
        for (a, ma, la), (b, mb, lb) in zip(self.checkpoints, self.checkpoints[1:]):
            out.append((a, b, mb - ma, abs(lb) - abs(la)))
        return out


def appendix_series(p: float = 2.0, n_max: int = 10 ** 6,
                    chunk: int = 1 << 20) -> SeriesReport:
    """Partial sums for u(n e) = n^{-1/p} (log n)^{-2/p}, n >= 3.

    |u|^p = 1 / (n log^2 n) is summable while |u|^p log|u|^p =
    -(1/(n log n) + 2 log log n / (n log^2 n)) is not. Checkpoints are taken
    at every power of ten up to ``n_max`` and at ``n_max`` itself.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if n_max < 10:
        raise ValueError("n_max must be at least 10")
    marks = [10 ** k for k in range(1, 20) if 10 ** k <= n_max]
    if marks[-1] != n_max:
        marks.append(n_max)
    mass = 0.0
    logsum = 0.0
    checkpoints = []
    start = 3
    for mark in marks:
        while start <= mark:
            stop = min(mark, start + chunk - 1)
            n = np.arange(start, stop + 1, dtype=float)
            L = np.log(n)
            mass += float(np.sum(1.0 / (n * L * L)))
            logsum -= float(np.sum(1.0 / (n * L) + 2.0 * np.log(L) / (n * L * L)))
            start = stop + 1
        checkpoints.append((mark, mass, logsum))
    return SeriesReport(p=p, n_max=n_max, mass_partial=mass, log_partial=logsum,
                        checkpoints=checkpoints)
