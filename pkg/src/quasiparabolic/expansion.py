"""Composition operators as Toeplitz-times-multiplier series.

For ``phi(z) = p z + psi(z)`` with ``Im psi > eps > 0`` the composition
operator is

    C_phi = V_p  sum_n  T_{tau^n} D_{theta_n},   tau(x) = i alpha - psi(x/p),

where ``theta_n(t) = (-it)^n e^{-alpha t} / n!`` and ``alpha`` is chosen so
that the disc of radius ``delta * alpha`` around ``i alpha`` (``delta < 1``)
contains the range of ``psi``.

Since ``sup_t t^n e^{-alpha t} / n! <= alpha^{-n}``, the n-th term has norm at
most ``(|tau|_inf / alpha)^n``; the dropped tail after ``M`` terms is then
bounded by ``delta_hat^M / (1 - delta_hat)``, which is what the planner
certifies.

An independent route, ``oracle_composition_operator``, evaluates the Cauchy
integral ``(1/2 pi i) int f(xi) dxi / (xi - phi(x))`` by the trapezoid rule.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ExpansionInfeasible, HypothesisViolation, ToleranceUnreachable
from .halfline import (
    DiscreteOperator,
    assemble_dense,
    dilation,
    fourier_multiplier,
    project_hardy,
    theta_n,
    toeplitz,
)
from .symbols import PointCloud, SampleSpec, dedup_points, verify_hypothesis

log = logging.getLogger(__name__)

M_MAX = 200
ALPHA_SEARCH_ITERS = 200


@dataclass(frozen=True)
class AlphaSelection:
    alpha: float
    delta: float
    range_cloud: PointCloud = field(repr=False)


def _delta_of(alpha, pts):
    return np.abs(1j * alpha - pts).max() / alpha


def _hull_points(pts):
    # |i alpha - z| is convex in z, so its max over the cloud sits on the hull
    if pts.size <= 64:
        return pts
    from scipy.spatial import ConvexHull, QhullError

    try:
        return pts[ConvexHull(np.column_stack([pts.real, pts.imag])).vertices]
    except (QhullError, ValueError):
        return pts


def select_alpha(range_cloud):
    """Pick ``alpha`` minimising ``delta(alpha) = max_z |i alpha - z| / alpha``.

    Ternary search on ``log alpha`` (``delta`` is quasi-convex there), with a
    dense log-grid scan as fallback. The returned ``delta`` is the smallest
    float with ``max_z |i alpha - z| < delta * alpha`` (``0`` when the cloud
    is the single point ``i alpha``).
    """
    cloud = range_cloud if isinstance(range_cloud, PointCloud) else PointCloud(range_cloud)
    pts = cloud.points
    if pts.size == 0:
        raise ValueError("select_alpha: empty cloud")
    eps = float(pts.imag.min())
    if not eps > 0:
        raise HypothesisViolation(f"select_alpha: cloud touches Im z <= 0 (min Im = {eps})")
    sup = float(np.abs(pts).max())
    hull = _hull_points(pts)

    lo, hi = math.log(eps / 10), math.log(1e3 * (eps + sup))
    for _ in range(ALPHA_SEARCH_ITERS):
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if _delta_of(math.exp(m1), hull) <= _delta_of(math.exp(m2), hull):
            hi = m2
        else:
            lo = m1
    alpha = math.exp(0.5 * (lo + hi))
    if _delta_of(alpha, hull) >= 1:
        grid = np.exp(np.linspace(math.log(eps / 10), math.log(1e3 * (eps + sup)), 20001))
        deltas = np.array([_delta_of(a, hull) for a in grid])
        alpha = float(grid[np.argmin(deltas)])

    m = float(np.abs(1j * alpha - pts).max())
    delta = m / alpha
    if m > 0:
        while not m < delta * alpha:
            delta = float(np.nextafter(delta, np.inf))
    if not delta < 1:
        raise HypothesisViolation(
            f"select_alpha: no alpha with delta < 1 (best alpha={alpha:.6g}, delta={delta:.6g})",
            best=(alpha, delta),
        )
    return AlphaSelection(alpha, delta, cloud)


@dataclass(frozen=True)
class ExpansionPlan:
    alpha_sel: AlphaSelection
    trunc_order: int
    tail_bound: float
    tau_samples: np.ndarray = field(repr=False)
    delta_hat: float
    tol: float
    p: float = 1.0
    grid_meta: dict = field(default_factory=dict)
    warnings: tuple = ()

    @property
    def alpha(self):
        return self.alpha_sel.alpha

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "delta": self.alpha_sel.delta,
            "delta_hat": self.delta_hat,
            "M": self.trunc_order,
            "tail_bound": self.tail_bound,
            "tol": self.tol,
            "p": self.p,
            "grid": self.grid_meta,
            "range_cloud_size": len(self.alpha_sel.range_cloud),
            "warnings": list(self.warnings),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def sample_range(symbol, grid, sample_spec=None):
    """Closure-of-range surrogate: interior samples plus boundary grid values."""
    spec = sample_spec or SampleSpec()
    interior = symbol(spec.points())
    boundary = symbol.boundary_values(grid.x)
    return dedup_points(np.concatenate([interior, boundary]), 1e-6, metadata={"kind": "range"})


def truncation_order(delta_hat, tol, m_max=M_MAX):
    """Smallest ``M`` with ``delta_hat^M / (1 - delta_hat) <= tol``; returns ``(M, tail)``."""
    if delta_hat == 0:
        return 1, 0.0
    M = max(1, math.ceil(math.log(tol * (1 - delta_hat)) / math.log(delta_hat)))
    while delta_hat**M / (1 - delta_hat) > tol:
        M += 1
    if M > m_max:
        achievable = delta_hat**m_max / (1 - delta_hat)
        raise ToleranceUnreachable(
            f"tol={tol:g} needs M={M} > M_max={m_max}; achievable tail bound {achievable:.3g}",
            achievable_tail=achievable,
        )
    return M, delta_hat**M / (1 - delta_hat)


def plan_expansion(symbol, grid, tol, p=1.0, m_max=M_MAX, sample_spec=None):
    """Choose ``alpha`` and the truncation order ``M`` certifying ``tail <= tol``."""
    if not tol > 0:
        raise ValueError("tol must be > 0")
    report = verify_hypothesis(symbol, sample_spec)
    if not report.ok:
        raise HypothesisViolation(
            f"Im psi >= {symbol.eps_lower} fails on samples (min Im = {report.min_im:.6g})"
        )
    cloud = sample_range(symbol, grid, sample_spec)
    sel = select_alpha(cloud)
    tau = 1j * sel.alpha - symbol.boundary_values(grid.x / p)
    delta_grid = float(np.abs(tau).max() / sel.alpha)
    delta_hat = max(delta_grid, sel.delta)
    warnings = []
    if sel.delta > 0 and abs(delta_grid - sel.delta) > 0.1 * sel.delta:
        msg = f"grid delta {delta_grid:.4g} and range delta {sel.delta:.4g} differ by >10%: range may be under-sampled"
        log.warning(msg)
        warnings.append(msg)
    if not delta_hat < 1:
        raise ExpansionInfeasible(f"delta_hat = {delta_hat:.6g} >= 1", best=(sel.alpha, delta_hat))
    M, tail = truncation_order(delta_hat, tol, m_max)
    return ExpansionPlan(sel, M, tail, tau, delta_hat, tol, p, grid.metadata(), tuple(warnings))


def _theta_table(plan, grid):
    table = np.zeros((plan.trunc_order, grid.n_points), dtype=complex)
    for n in range(plan.trunc_order):
        table[n, : grid.n_plus] = theta_n(n, plan.alpha)(grid.t_plus)
    return table


def series_terms(plan, grid):
    """The individual operators ``T_{tau^n} D_{theta_n}``, n < M."""
    terms = []
    tau_pow = np.ones_like(plan.tau_samples)
    for n in range(plan.trunc_order):
        terms.append(toeplitz(tau_pow, grid) @ fourier_multiplier(theta_n(n, plan.alpha), grid))
        tau_pow = tau_pow * plan.tau_samples
    return terms


def build_composition_operator(plan, grid):
    """``V_p sum_{n<M} T_{tau^n} D_{theta_n}`` as a matrix-free operator.

    The sum is fused: ``P F [sum_n tau^n F^-1(theta_n f)]``, accumulated in
    increasing ``n`` so results are reproducible bit for bit.
    """
    thetas = _theta_table(plan, grid)
    tau = plan.tau_samples
    M = plan.trunc_order

    def _col(v, f):
        return v.reshape((-1,) + (1,) * (f.ndim - 1))

    def apply(f):
        acc = np.zeros(f.shape, dtype=complex)
        tau_pow = np.ones_like(tau)
        for n in range(M):
            acc += _col(tau_pow, f) * grid.to_space(_col(thetas[n], f) * f)
            tau_pow = tau_pow * tau
        return project_hardy(grid.to_frequency(acc))

    def adjoint(f):
        v = grid.to_space(f)
        out = np.zeros(f.shape, dtype=complex)
        tau_pow = np.ones_like(tau)
        for n in range(M):
            out += _col(thetas[n].conj(), f) * grid.to_frequency(_col(tau_pow.conj(), f) * v)
            tau_pow = tau_pow * tau
        return out

    series = DiscreteOperator(grid, apply, adjoint, "composite", metadata=plan.to_dict())
    if plan.p == 1:
        return series
    op = dilation(plan.p, grid) @ series
    op.metadata = {**plan.to_dict(), **dilation(plan.p, grid).metadata}
    return op


def finite_section(symbol, grid, tol, p=1.0):
    """Plan the expansion and assemble its dense ``N+ x N+`` matrix; returns ``(plan, A)``."""
    plan = plan_expansion(symbol, grid, tol, p=p)
    return plan, assemble_dense(build_composition_operator(plan, grid), grid)


def oracle_composition_operator(symbol, grid, p=1.0, check=True):
    """Cauchy-integral route: ``(Cf)(x) = (dx / 2 pi i) sum_k f(xi_k) / (xi_k - phi(x))``.

    Trapezoid rule on the spatial grid, then transform and Hardy projection.
    Independent of the series machinery.
    """
    if check:
        report = verify_hypothesis(symbol)
        if not report.ok:
            raise HypothesisViolation(
                f"Im psi >= {symbol.eps_lower} fails on samples (min Im = {report.min_im:.6g})"
            )
    x = grid.x
    w = p * x + symbol.boundary_values(x)
    K = grid.dx / (2j * np.pi * (x[None, :] - w[:, None]))
    KH = K.conj().T

    def apply(f):
        return project_hardy(grid.to_frequency(K @ grid.to_space(f)))

    def adjoint(f):
        return project_hardy(grid.to_frequency(KH @ grid.to_space(f)))

    op = DiscreteOperator(grid, apply, adjoint, "dense")
    op.metadata = {"min_im_phi": float(w.imag.min()), "quadrature": "trapezoid"}
    return op


def random_hardy_vectors(grid, n, seed=42, terms=3):
    """Seeded smooth Hardy test vectors, tapered and normalised.

    Each is a sum of ``c / (x - x0 + i beta)^k`` (k in 3..5, beta in [1, 3],
    |x0| <= L/4); these extend analytically to the upper half-plane.
    """
    rng = np.random.default_rng(seed)
    L = grid.spatial_halfwidth
    x = grid.x
    taper = grid.taper()
    out = np.empty((grid.n_points, n), dtype=complex)
    for j in range(n):
        f = np.zeros_like(x, dtype=complex)
        for _ in range(terms):
            c = rng.standard_normal() + 1j * rng.standard_normal()
            x0 = rng.uniform(-L / 4, L / 4)
            beta = rng.uniform(1.0, 3.0)
            k = rng.integers(3, 6)
            f += c * beta**k / (x - x0 + 1j * beta) ** k
        c = project_hardy(grid.to_frequency(taper * f))
        out[:, j] = c / np.linalg.norm(c)
    return out


@dataclass(frozen=True)
class OracleReport:
    max_rel_err: float
    rel_errs: tuple
    max_abs_err: float
    tail_bound: float
    quadrature_bound: float
    grid_eps: float
    passed: bool

    @property
    def combined_tolerance(self):
        return self.tail_bound + self.quadrature_bound + self.grid_eps

    def to_dict(self):
        return {
            "max_rel_err": self.max_rel_err,
            "rel_errs": list(self.rel_errs),
            "max_abs_err": self.max_abs_err,
            "tail_bound": self.tail_bound,
            "quadrature_bound": self.quadrature_bound,
            "grid_eps": self.grid_eps,
            "combined_tolerance": self.combined_tolerance,
            "passed": self.passed,
        }


def _quadrature_bound(grid, vectors, min_im_phi):
    # discretisation: trapezoid error for a pole at distance d ~ exp(-2 pi d / dx),
    # with d limited by the kernel (Im phi) and the test vectors' poles (Im >= 1)
    d = min(min_im_phi, 1.0)
    disc = math.exp(-2 * math.pi * d / grid.dx)
    # truncation: relative amplitude of the inputs on the outer fifth of [-L, L)
    sp = grid.to_space(vectors)
    outer = np.abs(grid.x) > 0.8 * grid.spatial_halfwidth
    amp = np.sqrt(np.sum(np.abs(sp[outer]) ** 2, axis=0) / np.sum(np.abs(sp) ** 2, axis=0))
    return disc + 10.0 * float(amp.max())


def oracle_vs_series_report(symbol, grid, tol, n_test_vectors=16, seed=42, p=1.0):
    """Apply the series and the Cauchy oracle to seeded test vectors and compare.

    ``max_rel_err`` is relative to the oracle output. The certified bounds are
    absolute (operator norm on unit inputs), so ``passed`` compares the
    absolute error of the unit-norm test vectors against their sum.
    """
    plan = plan_expansion(symbol, grid, tol, p=p)
    series = build_composition_operator(plan, grid)
    oracle = oracle_composition_operator(symbol, grid, p=p, check=False)
    V = random_hardy_vectors(grid, n_test_vectors, seed)
    a = series(V)
    b = oracle(V)
    num = np.linalg.norm(a - b, axis=0)
    den = np.linalg.norm(b, axis=0)
    rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
    max_rel = float(rel.max()) if rel.size else 0.0
    max_abs = float(num.max()) if num.size else 0.0
    quad = _quadrature_bound(grid, V, oracle.metadata["min_im_phi"]) if n_test_vectors else 0.0
    grid_eps = 1e-10
    passed = max_abs <= plan.tail_bound + quad + grid_eps
    return OracleReport(
        max_rel, tuple(float(r) for r in rel), max_abs, plan.tail_bound, quad, grid_eps, passed
    )
