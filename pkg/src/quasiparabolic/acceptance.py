"""Built-in acceptance suite.

Each ``criterion_k`` runs one numerical experiment and returns a
:class:`CriterionResult` with the measured quantities, the threshold it was
held to and a pass flag. ``run_all`` executes them in order and shares
expensive finite sections through an :class:`AcceptanceContext`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .expansion import (
    build_composition_operator,
    finite_section,
    oracle_vs_series_report,
    plan_expansion,
    select_alpha,
    series_terms,
)
from .halfline import (
    HardyGrid,
    assemble_dense,
    fourier_multiplier,
    operator_norm_estimate,
    project_hardy,
)
from .spectra import (
    compare,
    eigenvalues,
    essential_normality_diagnostic,
    hausdorff,
    predict_essential_spectrum,
)
from .symbols import (
    PointCloud,
    estimate_cluster_set_at_infinity,
    estimate_essential_range_at_infinity,
    symbol_from_params,
)

DEFAULT_N = 2048
DEFAULT_L = 200.0
SPECTRAL_TOL = 1e-6


def builtin_symbols():
    """One representative per builtin family (all satisfy the hypothesis)."""
    return {
        "constant": symbol_from_params("constant", {"value": 1 + 1j}, 0.5),
        "moebius_decay": symbol_from_params("moebius_decay", {"center": 2j, "pole": -2j}, 1.0),
        "log_oscillation": symbol_from_params("log_oscillation", {"center": 3j, "amplitude": 0.2}, 0.5),
        "disc_transfer": symbol_from_params("disc_transfer", {"coeffs": [2j, 1.0]}, 1.0),
        "sum": symbol_from_params(
            "sum",
            {"terms": [("constant", {"value": 1 + 1j}, 1.0),
                       ("log_oscillation", {"center": 2j, "amplitude": 0.1}, 0.5)]},
            1.5,
        ),
    }


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    threshold: str
    measured: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"criterion {self.number} [{flag}] {self.title}: {vals} (need {self.threshold}; {self.runtime:.1f} s)"

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "threshold": self.threshold, "measured": self.measured, "runtime": self.runtime}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


class AcceptanceContext:
    """Cache of finite sections and their eigenvalues, keyed by symbol and grid."""

    def __init__(self):
        self._sections = {}

    def section(self, name, symbol, n_points=DEFAULT_N, halfwidth=DEFAULT_L, tol=SPECTRAL_TOL):
        key = (name, n_points, halfwidth, tol)
        if key not in self._sections:
            grid = HardyGrid(n_points, halfwidth)
            t0 = time.perf_counter()
            plan, A = finite_section(symbol, grid, tol)
            self._sections[key] = {"grid": grid, "plan": plan, "A": A,
                                   "assembly_time": time.perf_counter() - t0}
        return self._sections[key]

    def eigs(self, name, symbol, **kw):
        sec = self.section(name, symbol, **kw)
        if "eigs" not in sec:
            t0 = time.perf_counter()
            sec["eigs"] = eigenvalues(sec["A"])
            sec["eig_time"] = time.perf_counter() - t0
        return sec["eigs"]


def _timed(fn):
    def wrapper(ctx=None):
        ctx = ctx or AcceptanceContext()
        t0 = time.perf_counter()
        res = fn(ctx)
        res.runtime = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


MOEBIUS = symbol_from_params("moebius_decay", {"center": 2j, "pole": -2j}, 1.0)
UNIT_I = symbol_from_params("constant", {"value": 1j}, 0.5)
LOG_OSC = symbol_from_params("log_oscillation", {"center": 3j, "amplitude": 0.2}, 0.5)


@_timed
def criterion_1(ctx):
    """psi = i: equality-mode Hausdorff distance to [0, 1] within 0.05, under 2 minutes."""
    t0 = time.perf_counter()
    ev = ctx.eigs("i", UNIT_I)
    pred = predict_essential_spectrum(estimate_cluster_set_at_infinity(UNIT_I), UNIT_I.eps_lower)
    hd = compare(pred, ctx.section("i", UNIT_I)["A"], "equality", eigs=ev).hausdorff
    elapsed = time.perf_counter() - t0
    return CriterionResult(1, "translation by i, equality mode", hd <= 0.05 and elapsed <= 120,
                           "hausdorff <= 0.05, runtime <= 120 s",
                           {"hausdorff": hd, "pipeline_s": elapsed})


@_timed
def criterion_2(ctx):
    """Constant symbols: ||A_M - D_{exp(i psi0 t)}|| <= tail + 1e-6 with tail <= 1e-6."""
    grid = HardyGrid(DEFAULT_N, DEFAULT_L)
    measured, ok = {}, True
    for label, value in (("2i", 2j), ("1+i", 1 + 1j)):
        t0 = time.perf_counter()
        sym = symbol_from_params("constant", {"value": value}, 0.5)
        plan = plan_expansion(sym, grid, 1e-6)
        A = assemble_dense(build_composition_operator(plan, grid), grid)
        D = np.exp(1j * value * grid.t_plus)
        err = float(np.linalg.norm(A - np.diag(D), 2))
        elapsed = time.perf_counter() - t0
        ok &= err <= plan.tail_bound + 1e-6 and plan.tail_bound <= 1e-6 and elapsed <= 60
        measured[f"err[{label}]"] = err
        measured[f"tail[{label}]"] = plan.tail_bound
        measured[f"M[{label}]"] = plan.trunc_order
        measured[f"time[{label}]"] = elapsed
    return CriterionResult(2, "constant-symbol collapse to a multiplier", bool(ok),
                           "err <= tail + 1e-6, tail <= 1e-6, runtime <= 60 s each", measured)


@_timed
def criterion_3(ctx):
    """Series against the Cauchy-integral oracle on 16 seeded vectors."""
    grid = HardyGrid(DEFAULT_N, DEFAULT_L)
    t0 = time.perf_counter()
    rep = oracle_vs_series_report(MOEBIUS, grid, 1e-3, n_test_vectors=16, seed=42)
    elapsed = time.perf_counter() - t0
    return CriterionResult(3, "series vs Cauchy oracle (moebius_decay)",
                           rep.max_rel_err <= 5e-3 and elapsed <= 180,
                           "max_rel_err <= 5e-3, runtime <= 180 s",
                           {"max_rel_err": rep.max_rel_err, "max_abs_err": rep.max_abs_err,
                            "certified_bound": rep.combined_tolerance, "pipeline_s": elapsed})


@_timed
def criterion_4(ctx):
    """Moebius decay to 2i: containment margin over [0, 1] within 0.05."""
    sec = ctx.section("moebius", MOEBIUS)
    cloud = estimate_cluster_set_at_infinity(MOEBIUS)
    pred = predict_essential_spectrum(cloud, MOEBIUS.eps_lower)
    rep = compare(pred, sec["A"], "containment", eigs=ctx.eigs("moebius", MOEBIUS))
    return CriterionResult(4, "moebius_decay limit case, containment", rep.containment_margin <= 0.05,
                           "margin <= 0.05",
                           {"margin": rep.containment_margin, "hausdorff": rep.hausdorff})


@_timed
def criterion_5(ctx):
    """Oscillatory symbol: margin <= 0.1 at N = 2048, not growing (beyond 0.01) at N = 4096."""
    cloud = estimate_essential_range_at_infinity(LOG_OSC)
    pred = predict_essential_spectrum(cloud, LOG_OSC.eps_lower)
    margins = {}
    for n in (DEFAULT_N, 2 * DEFAULT_N):
        sec = ctx.section("log", LOG_OSC, n_points=n)
        rep = compare(pred, sec["A"], "containment", eigs=ctx.eigs("log", LOG_OSC, n_points=n))
        margins[n] = rep.containment_margin
        margins[f"argmax[{n}]"] = rep.metadata["argmax_lambda"]
    m1, m2 = margins[DEFAULT_N], margins[2 * DEFAULT_N]
    ok = m1 <= 0.1 and (m2 <= m1 or abs(m2 - m1) <= 0.01)
    return CriterionResult(5, "log_oscillation containment", ok,
                           "margin(2048) <= 0.1 and margin(4096) <= margin(2048) (+0.01)",
                           {"margin_2048": m1, "margin_4096": m2,
                            "argmax_2048": margins[f"argmax[{DEFAULT_N}]"],
                            "n_generators": len(pred.generators)})


@_timed
def criterion_6(ctx):
    """select_alpha on 100 seeded random clouds and on {i, 1+i}."""
    rng = np.random.default_rng(42)
    worst, exact = 0.0, True
    for _ in range(100):
        k = int(rng.integers(1, 40))
        z = rng.uniform(-5, 5, k) + 1j * rng.uniform(0.5, 5, k)
        sel = select_alpha(PointCloud(z))
        worst = max(worst, sel.delta)
        exact &= bool(np.max(np.abs(1j * sel.alpha - z)) < sel.delta * sel.alpha)
    sel = select_alpha(PointCloud([1j, 1 + 1j]))
    ok = (worst < 1 and exact and abs(sel.alpha - 2) <= 1e-4
          and abs(sel.delta - math.sqrt(2) / 2) <= 1e-6)
    return CriterionResult(6, "alpha selection", bool(ok),
                           "delta < 1 with strict postcondition; K={i,1+i}: alpha=2+-1e-4, delta=sqrt(2)/2+-1e-6",
                           {"max_delta": worst, "postcondition_exact": exact,
                            "alpha_K": sel.alpha, "delta_K": sel.delta})


@_timed
def criterion_7(ctx):
    """Measured ||T_{tau^n} D_{theta_n}|| <= delta_hat^n (1 + 1e-6) for every family."""
    grid = HardyGrid(DEFAULT_N, DEFAULT_L)
    worst_ratio, ok, counts = 0.0, True, {}
    for name, sym in builtin_symbols().items():
        plan = plan_expansion(sym, grid, 1e-6)
        counts[name] = plan.trunc_order
        for n, term in enumerate(series_terms(plan, grid)):
            # 0**0 == 1, so the bound is positive for every retained term
            bound = plan.delta_hat**n
            norm = operator_norm_estimate(term, seed=42)
            worst_ratio = max(worst_ratio, norm / bound)
            ok &= norm <= bound * (1 + 1e-6)
    return CriterionResult(7, "per-term norms within the certified ratio", bool(ok),
                           "||term_n|| <= delta_hat^n (1 + 1e-6)",
                           {"max_norm_over_bound": worst_ratio, "terms": counts})


@_timed
def criterion_8(ctx):
    """Tail-restricted commutator norms strictly decrease along T/8, T/4, T/2."""
    measured, ok = {}, True
    for name, sym in (("i", UNIT_I), ("moebius", MOEBIUS)):
        sec = ctx.section(name, sym)
        g = sec["grid"]
        cuts = [g.t_max / 8, g.t_max / 4, g.t_max / 2]
        rep = essential_normality_diagnostic(sec["A"], g.t_plus, cuts)
        tails = rep["tail_comm_norms"]
        ok &= all(b < a for a, b in zip(tails, tails[1:]))
        measured[f"tails[{name}]"] = tails
    return CriterionResult(8, "essential normality diagnostic", bool(ok),
                           "strictly decreasing tail commutator norms", measured)


@_timed
def criterion_9(ctx):
    """Seeded invariant checks (the property suites run the same checks under hypothesis)."""
    rng = np.random.default_rng(42)
    grid = HardyGrid(256, 20.0)
    fails = []

    f = rng.standard_normal((grid.n_points, 4)) + 1j * rng.standard_normal((grid.n_points, 4))
    p1 = project_hardy(f)
    if not np.array_equal(project_hardy(p1), p1):
        fails.append("projection idempotence")

    for _ in range(20):
        a, b = rng.uniform(0.1, 3, 2)
        w1, w2 = rng.uniform(-2, 2, 2)
        th1 = lambda t: np.exp((-a + 1j * w1) * t)
        th2 = lambda t: np.exp((-b + 1j * w2) * t)
        D12 = fourier_multiplier(th1, grid) @ fourier_multiplier(th2, grid)
        D = fourier_multiplier(lambda t: th1(t) * th2(t), grid)
        v = grid.embed(rng.standard_normal(grid.n_plus) + 1j * rng.standard_normal(grid.n_plus))
        if np.linalg.norm(D12(v) - D(v)) > 1e-6 * np.linalg.norm(v):
            fails.append("multiplier homomorphism")
        nrm = operator_norm_estimate(fourier_multiplier(th1, grid), seed=42)
        if abs(nrm - np.abs(th1(grid.t_plus)).max()) > 1e-6:
            fails.append("multiplier norm identity")

    for _ in range(20):
        A, B, C = (rng.standard_normal((k, 2)) @ [1, 1j] for k in rng.integers(1, 30, 3))
        if abs(hausdorff(A, B) - hausdorff(B, A)) > 0:
            fails.append("hausdorff symmetry")
        if hausdorff(A, C) > hausdorff(A, B) + hausdorff(B, C) + 1e-12:
            fails.append("hausdorff triangle inequality")
        if hausdorff(A, A) != 0:
            fails.append("hausdorff identity")

    for _ in range(10):
        z = rng.uniform(-3, 3, 3) + 1j * rng.uniform(0.2, 3, 3)
        s = predict_essential_spectrum(PointCloud(z), 0.2)
        if not (np.any(s.points == 0) and np.any(s.points == 1) and np.all(np.abs(s.points) <= 1)):
            fails.append("spiral membership")

    fails = sorted(set(fails))
    return CriterionResult(9, "invariant suites", not fails, "no violated invariant",
                           {"violations": fails or "none"})


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 10)}


def run_all(numbers=None, ctx=None, echo=None):
    """Run the requested criteria (all by default); ``echo`` receives each result line."""
    ctx = ctx or AcceptanceContext()
    out = []
    for k in numbers or sorted(CRITERIA):
        res = CRITERIA[k](ctx)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
