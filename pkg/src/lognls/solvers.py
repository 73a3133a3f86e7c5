"""Ground-state and multi-solution solvers.

``minimize_on_nehari`` runs projected gradient descent on J restricted to the
Nehari manifold; the projection along rays is exact and closed-form.
``newton_refine`` solves the pointwise equation (p = 2) with damped Newton, and
``find_multiple`` combines structured starts, Newton and deflation to collect
distinct critical points.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import MatrixRankWarning, eigsh, spsolve

from .functional import (_values, energy, energy_gradient, lp_mass, nehari_residual,
                         nehari_scale, residual)
from .graph import GraphTopology, as_field

log = logging.getLogger(__name__)

INIT_KINDS = ("random_positive", "random", "delta_at", "laplacian_eigenvector", "explicit")


class SolverError(RuntimeError):
    """A solve could not be started or its result is unusable."""


@dataclass
class SolverConfig:
    max_iterations: int = 100_000
    grad_tol: float = 1e-10
    c1: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    damping: float = 1.0
    eps_floor: float = 1e-8
    seed: int = 0
    init: str = "random_positive"
    init_vertex: int = 0
    init_mode: int = 0
    init_field: Optional[np.ndarray] = None
    sign_reflection: bool = True
    general: bool = False   # force the p-power code path even at p = 2

    def __post_init__(self):
        if self.grad_tol <= 0 or self.eps_floor <= 0 or self.initial_step <= 0:
            raise ValueError("tolerances and step sizes must be positive")
        if not 0 < self.c1 < 1:
            raise ValueError(f"Armijo constant must lie in (0, 1), got {self.c1}")
        if not 0 < self.backtrack < 1:
            raise ValueError(f"backtrack factor must lie in (0, 1), got {self.backtrack}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"Newton damping must lie in (0, 1], got {self.damping}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.init not in INIT_KINDS:
            raise ValueError(f"unknown init {self.init!r}; choose from {INIT_KINDS}")

    def replace(self, **changes) -> "SolverConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SolverConfig(**values)


@dataclass
class SolveResult:
    u: np.ndarray
    energy: float
    residual_sup: float
    residual_l2: float
    nehari_residual: float
    iterations: int
    converged: bool
    sign_class: str
    tolerance: float
    method: str = ""
    trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_field: bool = True) -> dict:
        out = {
            "method": self.method,
            "energy": self.energy,
            "residual_sup": self.residual_sup,
            "residual_l2": self.residual_l2,
            "nehari_residual": self.nehari_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "sign_class": self.sign_class,
            "tolerance": self.tolerance,
            "trace": [list(t) for t in self.trace],
            "diagnostics": self.diagnostics,
        }
        if include_field:
            out["u"] = [float(x) for x in self.u]
        return out


@dataclass
class LevelComparison:
    level_a: float
    level_b: float
    gap: float
    strict: bool

    def to_dict(self) -> dict:
        return {"level_a": self.level_a, "level_b": self.level_b,
                "gap": self.gap, "strict": self.strict}


def classify_sign(u) -> str:
    u = np.asarray(u, dtype=float)
    if np.all(u == 0):
        return "zero"
    if np.all(u > 0):
        return "positive"
    if np.all(u < 0):
        return "negative"
    return "sign_changing"


# -- initial fields -------------------------------------------------------

def schrodinger_modes(g: GraphTopology, pot, count: int) -> np.ndarray:
    """Lowest ``count`` eigenvectors of -Delta + V as columns, signs canonicalised."""
    V = _values(pot)
    n = g.vertex_count
    count = min(count, n)
    H = sparse.diags(g.ambient_degree + V) - g.matrix
    if n <= 2000 or count >= n - 1:
        _, vecs = eigh(H.toarray(), subset_by_index=(0, count - 1))
    else:
        _, vecs = eigsh(H.tocsc(), k=count, sigma=float(V.min()) - 1.0, which="LM")
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j]) > 1e-8 * np.abs(vecs[:, j]).max()))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def initial_field(g: GraphTopology, pot, config: SolverConfig) -> np.ndarray:
    n = g.vertex_count
    rng = np.random.default_rng(config.seed)
    if config.init == "random_positive":
        return rng.uniform(0.1, 1.1, n)
    if config.init == "random":
        return rng.standard_normal(n)
    if config.init == "delta_at":
        u = np.zeros(n)
        u[config.init_vertex] = 1.0
        return u
    if config.init == "laplacian_eigenvector":
        return schrodinger_modes(g, pot, config.init_mode + 1)[:, config.init_mode].copy()
    if config.init_field is None:
        raise SolverError("init 'explicit' needs init_field")
    return as_field(g, config.init_field).copy()


def _finish(g, pot, p, u, iterations, converged, tolerance, method, trace,
            general=False, **diagnostics) -> SolveResult:
    r = residual(g, pot, u, p, general=general)
    return SolveResult(
        u=u, energy=energy(g, pot, u, p, general),
        residual_sup=float(np.max(np.abs(r))),
        residual_l2=float(np.linalg.norm(r)),
        nehari_residual=nehari_residual(g, pot, u, p),
        iterations=iterations, converged=converged,
        sign_class=classify_sign(u), tolerance=tolerance,
        method=method, trace=trace, diagnostics=diagnostics,
    )


# -- Nehari-constrained descent ------------------------------------------

def minimize_on_nehari(g: GraphTopology, pot, p: float = 2.0,
                       config: Optional[SolverConfig] = None,
                       u0=None) -> SolveResult:
    """Minimise J over the Nehari manifold by projected gradient descent.

    Each step is u <- t(v) v with v = u - eta * grad J(u) and t the closed-form
    Nehari scale. eta starts from a Barzilai-Borwein estimate and is backtracked
    until the Armijo condition holds. Once the predicted decrease drops below
    floating-point resolution of J, a step is accepted if J does not grow beyond
    that resolution.

    With ``sign_reflection`` a one-signed iterate stays one-signed: the trial
    point is replaced by sign * |v|, which never raises J along the ray.
    """
    config = config or SolverConfig()
    general = config.general
    u = initial_field(g, pot, config) if u0 is None else as_field(g, u0).copy()
    if not np.any(u):
        raise SolverError("the zero field is not on the Nehari manifold")

    def project(v):
        mass = lp_mass(v, p)
        if mass == 0:
            return None, math.inf
        expo = energy(g, pot, v, p, general) / mass - 1.0 / p
        if expo > 700:
            return None, math.inf
        w = math.exp(expo) * v
        return w, energy(g, pot, w, p, general)

    u, J = project(u)
    if u is None:
        raise SolverError("initial field cannot be projected onto the Nehari manifold")
    grad = energy_gradient(g, pot, u, p)
    trace = []
    prev = None
    c1, beta = config.c1, config.backtrack
    noise = 64 * np.finfo(float).eps
    converged = False
    it = 0
    for it in range(config.max_iterations + 1):
        gnorm = float(np.linalg.norm(grad))
        trace.append((it, J, gnorm))
        if gnorm <= config.grad_tol * max(1.0, float(np.linalg.norm(u))):
            converged = True
            break
        if it == config.max_iterations:
            break
        eta = config.initial_step
        if prev is not None:
            s = u - prev[0]
            y = grad - prev[1]
            sy = float(s @ y)
            if sy > 0:
                eta = float(s @ s) / sy
            eta = min(max(eta, 1e-12), 1e6)
        sign = 0.0
        if config.sign_reflection:
            cls = classify_sign(u)
            sign = 1.0 if cls == "positive" else -1.0 if cls == "negative" else 0.0
        accepted = False
        for _ in range(200):
            v = u - eta * grad
            if sign:
                v = sign * np.abs(v)
            w, Jw = project(v)
            decrease = c1 * eta * gnorm ** 2
            if w is not None and (Jw <= J - decrease
                                  or (decrease < noise * abs(J) and Jw <= J + noise * abs(J))):
                accepted = True
                break
            eta *= beta
        if not accepted:
            log.debug("line search failed at iteration %d (|grad| = %.3e)", it, gnorm)
            break
        prev = (u, grad)
        u, J = w, Jw
        grad = energy_gradient(g, pot, u, p)
    tol = config.grad_tol * max(1.0, float(np.linalg.norm(u)))
    return _finish(g, pot, p, u, it, converged, tol, "nehari_descent", trace, general,
                   seed=config.seed, init=config.init)


# -- Newton on the pointwise equation -------------------------------------

def _jacobian(g, V, u, eps_floor):
    # d/du [-Delta u + V u - u log u^2] with |u| floored inside the log
    logu2 = np.log(np.maximum(u * u, eps_floor ** 2))
    diag = g.ambient_degree + V - logu2 - 2.0
    return (sparse.diags(diag) - g.matrix).tocsc()


def polish_tails(g: GraphTopology, pot, u, threshold: float = 1e-6,
                 sweeps: int = 100) -> np.ndarray:
    """Nonlinear Gauss-Seidel on the entries below ``threshold * max|u|`` (p = 2).

    Each such entry is set to the small root of u (a - log u^2) = c, where
    a = ambient_degree + V and c is the sum of its neighbours. Residual
    tolerances cannot resolve super-exponentially decaying tails; this fixes
    their values (and signs) without touching the bulk of the field.
    """
    V = _values(pot)
    u = np.array(u, dtype=float)
    big = float(np.max(np.abs(u)))
    if big == 0:
        return u
    sites = np.flatnonzero(np.abs(u) < threshold * big)
    if not len(sites):
        return u
    # inner sites first: tails are driven from the bulk outwards
    sites = sites[np.argsort(-np.abs(u[sites]), kind="stable")]
    a = g.ambient_degree + V
    for _ in range(sweeps):
        change = 0.0
        for x in sites:
            c = float(sum(u[y] for y in g.adjacency[x]))
            if c == 0.0:
                new = 0.0
            else:
                w = abs(c) / max(a[x], 1.0)
                for _ in range(60):
                    denom = a[x] - 2.0 * math.log(w)
                    if denom <= 2.0:
                        break
                    w_next = abs(c) / denom
                    if abs(w_next - w) <= 1e-15 * w:
                        w = w_next
                        break
                    w = w_next
                new = math.copysign(w, c)
            old = u[x]
            u[x] = new
            scale = max(abs(old), abs(new))
            if scale > 0:
                change = max(change, abs(new - old) / scale)
        if change <= 1e-13:
            break
    return u


class _Deflation:
    """Multiplicative deflation of known roots and their negatives."""

    def __init__(self, roots, power=2, shift=1.0):
        self.roots = [np.asarray(r, dtype=float) for r in roots]
        self.power = power
        self.shift = shift

    def _pairs(self):
        for r in self.roots:
            yield r
            yield -r

    def factor(self, u):
        m = 1.0
        for r in self._pairs():
            m *= np.dot(u - r, u - r) ** (-self.power / 2) + self.shift
        return m

    def grad_log(self, u):
        out = np.zeros_like(u)
        for r in self._pairs():
            d = u - r
            nn = float(np.dot(d, d))
            base = nn ** (-self.power / 2)
            out += (-self.power * nn ** (-self.power / 2 - 1) * d) / (base + self.shift)
        return out


def newton_refine(g: GraphTopology, pot, p: float = 2.0, u0=None,
                  config: Optional[SolverConfig] = None,
                  deflate: Sequence[np.ndarray] = ()) -> SolveResult:
    """Damped Newton on residual(u) = 0 for p = 2.

    Entries with |u| below ``eps_floor`` are held fixed for one step and take
    part again in the following one; in the Jacobian |u| is floored at
    ``eps_floor`` inside the logarithm. Step length is halved until the residual
    norm drops (the deflated residual norm when ``deflate`` is non-empty).
    """
    if p != 2:
        raise SolverError("Newton refinement is implemented for p = 2 only")
    config = config or SolverConfig()
    V = _values(pot)
    u = as_field(g, u0 if u0 is not None else initial_field(g, pot, config)).copy()
    defl = _Deflation(deflate) if len(deflate) else None

    def merit(v, r):
        n = float(np.linalg.norm(r))
        return n * defl.factor(v) if defl else n

    r = residual(g, pot, u, 2.0)
    fnorm = merit(u, r)
    trace = [(0, energy(g, pot, u, 2.0), float(np.linalg.norm(r)))]
    frozen_last = np.zeros(g.vertex_count, dtype=bool)
    growth = 0
    converged = False
    diagnostics = {}
    it = 0
    stalled = False
    for it in range(1, config.max_iterations + 1):
        scale = 1.0 + float(np.max(np.abs(u)))
        rsup = float(np.max(np.abs(r)))
        # past the tolerance, keep stepping while Newton still gains
        if rsup <= 1e-10 * scale and (stalled or rsup <= 1e-15 * scale):
            converged = True
            it -= 1
            break
        frozen = (np.abs(u) < config.eps_floor) & ~frozen_last
        free = np.flatnonzero(~frozen)
        jac = _jacobian(g, V, u, config.eps_floor)[free][:, free]
        step = np.zeros_like(u)
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                step[free] = spsolve(jac, -r[free])
            except (MatrixRankWarning, RuntimeError) as exc:
                diagnostics = {"failure": "singular Jacobian", "detail": str(exc),
                               "iteration": it}
                break
        if not np.all(np.isfinite(step)):
            diagnostics = {"failure": "singular Jacobian", "iteration": it}
            break
        if defl:
            slope = float(defl.grad_log(u) @ step)
            if abs(1.0 - slope) > 1e-12:
                step = step / (1.0 - slope)
        alpha = config.damping
        for _ in range(40):
            trial = u + alpha * step
            r_trial = residual(g, pot, trial, 2.0)
            f_trial = merit(trial, r_trial)
            if f_trial < fnorm:
                break
            alpha *= 0.5
        growth = growth + 1 if f_trial >= fnorm else 0
        stalled = float(np.max(np.abs(r_trial))) > 0.5 * rsup
        u, r, fnorm = trial, r_trial, f_trial
        frozen_last = frozen
        trace.append((it, energy(g, pot, u, 2.0), float(np.linalg.norm(r))))
        if growth >= 5:
            diagnostics = {"failure": "residual grew for 5 consecutive damped steps",
                           "iteration": it}
            break
    tol = 1e-10 * (1.0 + float(np.max(np.abs(u))))
    if not converged:
        converged = float(np.max(np.abs(r))) <= tol
    if converged:
        polished = polish_tails(g, pot, u)
        r_pol = residual(g, pot, polished, 2.0)
        if float(np.max(np.abs(r_pol))) <= max(tol, float(np.max(np.abs(r)))):
            u = polished
    return _finish(g, pot, 2.0, u, it, converged, tol, "newton", trace, **diagnostics)


# -- multiplicity ---------------------------------------------------------

def _distinct(u, found, rel=1e-4):
    for v in found:
        scale = rel * (np.linalg.norm(u) + np.linalg.norm(v))
        if min(np.linalg.norm(u - v), np.linalg.norm(u + v)) <= scale:
            return False
    return True


def _same_level(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def _canonical_sign(u):
    nz = np.flatnonzero(u)
    if len(nz) and u[nz[0]] < 0:
        return -u
    return u


def find_multiple(g: GraphTopology, pot, p: float = 2.0,
                  config: Optional[SolverConfig] = None, K: int = 5,
                  max_starts: Optional[int] = None) -> list[SolveResult]:
    """Collect up to K distinct critical points (one per +/- pair), lowest energy first.

    The first start is the Nehari-descent minimiser; then come the low
    eigenvectors of -Delta + V and seeded random fields, each scaled onto the
    Nehari manifold. A start that lands on a known
    solution is retried with deflation of everything found so far.
    """
    if p != 2:
        raise SolverError("find_multiple is implemented for p = 2 only")
    config = config or SolverConfig()
    newton_cfg = config.replace(max_iterations=min(config.max_iterations, 200))
    n = g.vertex_count
    max_starts = max_starts or max(4 * K, 12)
    modes = schrodinger_modes(g, pot, min(max_starts - 1, n))
    rng = np.random.default_rng(config.seed)
    found: list[SolveResult] = []
    attempts = 0

    def starts():
        descent = minimize_on_nehari(g, pot, 2.0, config)
        if np.any(descent.u):
            yield descent.u
        for k in range(modes.shape[1]):
            yield modes[:, k]
        while True:
            yield rng.standard_normal(n)

    for start in starts():
        if attempts >= max_starts:
            break
        attempts += 1
        u0 = nehari_scale(g, pot, start, 2.0) * start
        res = newton_refine(g, pot, 2.0, u0, newton_cfg)
        if not (res.converged and np.any(res.u)) or not _distinct(res.u, [f.u for f in found]):
            res = newton_refine(g, pot, 2.0, u0, newton_cfg,
                                deflate=[f.u for f in found])
        if res.converged and np.any(res.u) and _distinct(res.u, [f.u for f in found]):
            res.u = _canonical_sign(res.u)
            res.diagnostics["start"] = attempts - 1
            found.append(res)
    found.sort(key=lambda r: (r.energy, float(np.linalg.norm(r.u))))
    # equal energies on distinct fields are symmetry images (e.g. lattice
    # translates); keep one representative per level
    levels: list[SolveResult] = []
    for r in found:
        if levels and _same_level(levels[-1].energy, r.energy):
            levels[-1].diagnostics["symmetry_copies"] = \
                levels[-1].diagnostics.get("symmetry_copies", 0) + 1
            continue
        levels.append(r)
    out = levels[:K]
    for r in out:
        r.diagnostics["attempts"] = attempts
    if len(out) < K:
        log.warning("found %d of %d requested solutions after %d starts", len(out), K, attempts)
    return out


# -- level comparison -----------------------------------------------------

def ground_level(g: GraphTopology, pot, p: float = 2.0,
                 config: Optional[SolverConfig] = None, starts: int = 4) -> SolveResult:
    """Best converged ``minimize_on_nehari`` result over several starts."""
    config = config or SolverConfig()
    V = _values(pot)
    configs = [config.replace(seed=config.seed + k) for k in range(starts)]
    configs.append(config.replace(init="delta_at", init_vertex=int(np.argmin(V))))
    best = None
    failures = []
    for cfg in configs:
        res = minimize_on_nehari(g, pot, p, cfg)
        if not res.converged:
            failures.append(res)
            continue
        if best is None or res.energy < best.energy:
            best = res
    if best is None:
        err = SolverError("no start converged")
        err.traces = [f.trace for f in failures]
        raise err
    return best


def compare_ground_levels(g: GraphTopology, pot_a, pot_b, p: float = 2.0,
                          config: Optional[SolverConfig] = None,
                          starts: int = 4) -> LevelComparison:
    """Ground levels of two potentials; strict when level_a < level_b - 1e-8."""
    a = ground_level(g, pot_a, p, config, starts).energy
    b = ground_level(g, pot_b, p, config, starts).energy
    return LevelComparison(level_a=a, level_b=b, gap=b - a, strict=bool(a < b - 1e-8))
