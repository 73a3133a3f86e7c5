"""Potential classes V for the logarithmic Schroedinger problem.

Every potential must satisfy ``inf V > -1``. The lambda-shift ``V - log lambda^2``
is exposed explicitly through :func:`shift_potential` rather than applied
silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .graph import GraphError, GraphTopology
from .reports import CheckReport


class AdmissibilityError(ValueError):
    """The potential violates ``inf V > -1`` or a class constraint."""

    def __init__(self, message, infimum=None):
        super().__init__(message)
        self.infimum = infimum


# -- specs ------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicSpec:
    """V(x) = tile[x mod T]. ``tile`` holds T**N values (row-major) or an N-d array."""

    tile: Sequence[float]
    period: int = 1


@dataclass(frozen=True)
class CoerciveSpec:
    """V(x) = scale * d(x, center)**exponent + offset with BFS distance d."""

    center: Union[int, Sequence[int]] = 0
    exponent: float = 2.0
    scale: float = 1.0
    offset: float = 0.0


@dataclass(frozen=True)
class WellSpec:
    """V(x) = v_inf - depth * exp(-d(x, center)**2 / width**2)."""

    center: Union[int, Sequence[int]] = 0
    v_inf: float = 0.5
    depth: float = 1.0
    width: float = 2.0


@dataclass(frozen=True)
class AsymptoticallyPeriodicSpec:
    """V = V_p - decay, with V_p periodic and decay >= 0 vertex-wise."""

    base: PeriodicSpec
    decay: Sequence[float]


@dataclass(frozen=True)
class ExplicitSpec:
    values: Sequence[float]


PotentialSpec = Union[PeriodicSpec, CoerciveSpec, WellSpec,
                      AsymptoticallyPeriodicSpec, ExplicitSpec]


@dataclass(frozen=True, eq=False)
class Potential:
    values: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    base_values: Optional[np.ndarray] = None  # V_p for the asymptotically periodic class

    @property
    def infimum(self) -> float:
        return float(np.min(self.values))


# -- construction -----------------------------------------------------------

def _center_index(g: GraphTopology, center) -> int:
    if np.ndim(center) == 0:
        idx = int(center)
    else:
        idx = g.index_of(center)
    if not 0 <= idx < g.vertex_count:
        raise GraphError(f"center {center!r} is not a vertex")
    return idx


def _periodic_values(g: GraphTopology, spec: PeriodicSpec) -> np.ndarray:
    if g.lattice is None:
        raise GraphError("periodic potentials need a lattice graph")
    T = int(spec.period)
    N = g.lattice.dimension
    if T < 1:
        raise GraphError(f"period must be positive, got {T}")
    tile = np.asarray(spec.tile, dtype=float)
    if tile.size != T ** N:
        raise GraphError(f"tile needs {T}**{N} = {T ** N} values, got {tile.size}")
    tile = tile.reshape((T,) * N)
    if g.kind == "lattice_torus":
        for axis, side in enumerate(g.lattice.sides):
            if side % T:
                raise GraphError(
                    f"axis {axis}: torus side {side} is not divisible by period {T}"
                )
    coords = g.coordinates() % T
    return tile[tuple(coords.T)]


def make_potential(g: GraphTopology, spec: PotentialSpec) -> Potential:
    """Fill vertex values for ``spec`` and check admissibility."""
    base = None
    if isinstance(spec, PeriodicSpec):
        values = _periodic_values(g, spec)
        kind = "periodic"
        params = {"period": int(spec.period), "tile": list(map(float, np.ravel(spec.tile)))}
    elif isinstance(spec, CoerciveSpec):
        if spec.scale <= 0 or spec.exponent <= 0:
            raise GraphError("coercive potentials need scale > 0 and exponent > 0")
        x0 = _center_index(g, spec.center)
        d = g.distances_from(x0).astype(float)
        values = spec.scale * d ** spec.exponent + spec.offset
        kind = "coercive"
        params = {"center": x0, "exponent": spec.exponent,
                  "scale": spec.scale, "offset": spec.offset}
    elif isinstance(spec, WellSpec):
        if spec.depth < 0 or spec.width <= 0:
            raise GraphError("well potentials need depth >= 0 and width > 0")
        x0 = _center_index(g, spec.center)
        d = g.distances_from(x0).astype(float)
        values = spec.v_inf - spec.depth * np.exp(-d ** 2 / spec.width ** 2)
        kind = "well"
        params = {"center": x0, "v_inf": spec.v_inf,
                  "depth": spec.depth, "width": spec.width}
    elif isinstance(spec, AsymptoticallyPeriodicSpec):
        base = _periodic_values(g, spec.base)
        decay = np.asarray(spec.decay, dtype=float)
        if decay.shape != (g.vertex_count,):
            raise GraphError("decay field must have one value per vertex")
        if (decay < 0).any():
            bad = np.flatnonzero(decay < 0)
            raise AdmissibilityError(f"decay field has negative entries at {bad[:10].tolist()}")
        values = base - decay
        kind = "asymptotically_periodic"
        params = {"period": int(spec.base.period),
                  "tile": list(map(float, np.ravel(spec.base.tile)))}
    elif isinstance(spec, ExplicitSpec):
        values = np.asarray(spec.values, dtype=float)
        if values.shape != (g.vertex_count,):
            raise GraphError("explicit potential must have one value per vertex")
        kind = "explicit"
        params = {}
    else:
        raise TypeError(f"unsupported potential spec {type(spec).__name__}")

    if not np.all(np.isfinite(values)):
        raise AdmissibilityError("potential has non-finite values")
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    pot = Potential(values=values, kind=kind, params=params, base_values=base)
    _require_admissible(pot)
    return pot


def _require_admissible(pot: Potential):
    if not pot.infimum > -1:
        raise AdmissibilityError(
            f"inf V = {pot.infimum:.17g} must be > -1", infimum=pot.infimum
        )


def shift_potential(pot: Potential, lam: float, check: bool = True) -> Potential:
    """Potential V - log(lam^2) obtained from the substitution u = lam * v."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    values = pot.values - np.log(lam ** 2)
    values.setflags(write=False)
    shifted = Potential(values=values, kind="explicit",
                        params={"shifted_from": pot.kind, "lambda": float(lam)})
    if check:
        _require_admissible(shifted)
    return shifted


def check_admissible(pot: Potential, g: Optional[GraphTopology] = None) -> CheckReport:
    """Report ``inf V > -1`` plus the class-specific residuals.

    Periodicity needs ``g`` (a torus) to apply the translations.
    """
    inf = pot.infimum
    details: dict = {"infimum": inf, "kind": pot.kind}
    ok = inf > -1
    if pot.kind == "periodic" and g is not None and g.kind == "lattice_torus":
        T = pot.params["period"]
        res = 0.0
        for axis in range(g.lattice.dimension):
            perm = g.translation(axis, T)
            res = max(res, float(np.max(np.abs(pot.values[perm] - pot.values))))
        details["periodicity_residual"] = res
        ok = ok and res == 0.0
    if pot.kind == "asymptotically_periodic":
        excess = pot.values - pot.base_values
        details["domination_residual"] = float(np.max(np.clip(excess, 0, None)))
        ok = ok and details["domination_residual"] == 0.0
        if g is not None:
            shell = _outer_shell(g, pot)
            details["shell_max_deviation"] = float(np.max(np.abs(excess[shell])))
    if pot.kind == "well":
        excess = pot.values - pot.params["v_inf"]
        details["well_bound_residual"] = float(np.max(np.clip(excess, 0, None)))
        ok = ok and details["well_bound_residual"] == 0.0
    return CheckReport(name="admissible", lhs=inf, rhs=-1.0, satisfied=bool(ok),
                       tolerance=0.0, details=details)


def _outer_shell(g: GraphTopology, pot: Potential) -> np.ndarray:
    # finite proxy for |x| -> infinity: box boundary, or on a torus the
    # vertices farthest from where V deviates most from V_p
    if g.kind == "lattice_dirichlet":
        return g.boundary_vertices()
    dev = np.abs(pot.values - pot.base_values)
    d = g.distances_from(int(np.argmax(dev)))
    return np.flatnonzero(d == d.max())
