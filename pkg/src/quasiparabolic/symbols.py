"""Analytic symbols on the upper half-plane and the unit disc.

A symbol ``psi`` is a bounded analytic function on the upper half-plane with
``Im psi >= eps_lower > 0``. The composition map is ``phi(z) = z + psi(z)``,
which is never stored explicitly.

Builtin families
----------------
``constant``
    ``psi(z) = value``.
``moebius_decay``
    ``psi(z) = center + residue / (z - pole)`` with ``Im pole < 0``.
``log_oscillation``
    ``psi(z) = center + amplitude * sin(frequency * log z)`` (principal
    branch, ``arg z in [0, pi]``); singular at ``z = 0``.
``disc_transfer``
    ``psi = eta o cayley`` for a polynomial disc symbol ``eta``.
``sum``
    pointwise sum of other symbols.

All evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .errors import DomainError

BOUNDARY_OFFSET = 1e-6
DEDUP_TOL = 1e-3


def cayley(z):
    """Map the closed upper half-plane to the closed unit disc, ``(z-i)/(z+i)``."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag < 0):
        raise ValueError("cayley: points must satisfy Im z >= 0")
    w = (z - 1j) / (z + 1j)
    return w[()] if w.ndim == 0 else w


def inverse_cayley(w):
    """Inverse map ``i(1+w)/(1-w)``; ``w = 1`` is the point at infinity."""
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w) > 1 + 1e-12):
        raise ValueError("inverse_cayley: |w| must be <= 1")
    if np.any(w == 1):
        raise DomainError("inverse_cayley: w = 1 maps to infinity")
    z = 1j * (1 + w) / (1 - w)
    return z[()] if z.ndim == 0 else z


def _principal_log(z):
    # arg in [0, pi] on the closed upper half-plane, including x < 0 with a -0.0 imag part
    y = np.maximum(z.imag, 0.0) + 0.0
    return np.log(np.abs(z)) + 1j * np.arctan2(y, z.real)


@dataclass(frozen=True)
class PointCloud:
    """Finite sample of a subset of the complex plane.

    ``weights`` (optional) carries Lebesgue mass per point; ``metadata``
    records how the cloud was sampled so under-coverage is diagnosable.
    """

    points: np.ndarray
    weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex)).ravel()
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.atleast_1d(np.asarray(self.weights, dtype=float)).ravel()
            if w.shape != pts.shape:
                raise ValueError("weights must match points in length")
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.points.size

    def dedup(self, tol=DEDUP_TOL):
        return dedup_points(self.points, tol, self.weights, self.metadata)

    def diameter(self):
        return point_set_diameter(self.points)


def dedup_points(points, tol=DEDUP_TOL, weights=None, metadata=None):
    """Snap points to a ``tol`` lattice and keep the first point per cell.

    Weights of merged points are summed onto the survivor.
    """
    points = np.asarray(points, dtype=complex).ravel()
    keys = np.stack([np.round(points.real / tol), np.round(points.imag / tol)], axis=1)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    kept = points[first[order]]
    new_w = None
    if weights is not None:
        sums = np.zeros(first.size)
        np.add.at(sums, inverse.ravel(), np.asarray(weights, dtype=float))
        new_w = sums[order]
    meta = dict(metadata or {})
    meta["dedup_tol"] = tol
    return PointCloud(kept, new_w, meta)


def point_set_diameter(points):
    """Largest pairwise distance of a finite complex point set."""
    pts = np.asarray(points, dtype=complex).ravel()
    if pts.size < 2:
        return 0.0
    cand = pts
    if pts.size > 3:
        from scipy.spatial import ConvexHull, QhullError

        xy = np.column_stack([pts.real, pts.imag])
        try:
            cand = pts[ConvexHull(xy).vertices]
        except (QhullError, ValueError):
            # collinear: the diameter is realised by the extremes along the line
            c = pts - pts.mean()
            direction = c[np.argmax(np.abs(c))]
            if direction == 0:
                return 0.0
            s = (c * np.conj(direction)).real / abs(direction)
            return float(s.max() - s.min())
    diff = np.abs(cand[:, None] - cand[None, :])
    return float(diff.max())


class AnalyticSymbol:
    """Base class for bounded analytic symbols on the upper half-plane.

    Subclasses implement ``_formula`` (vectorized, interior or regular
    boundary points) and may override ``_singular`` to flag points where the
    formula breaks down.
    """

    family: ClassVar[str] = ""
    eps_lower: float
    sup_norm_hint: float | None

    def _check_eps(self):
        if not (np.isfinite(self.eps_lower) and self.eps_lower > 0):
            raise ValueError(f"{self.family}: eps_lower must be > 0, got {self.eps_lower}")

    def _formula(self, z):
        raise NotImplementedError

    def _singular(self, z):
        return np.zeros(z.shape, dtype=bool)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(z.imag < 0):
            raise ValueError("symbols are evaluated on the closed upper half-plane only")
        if np.any(self._singular(z)):
            raise DomainError(f"{self.family} symbol is singular at the requested point")
        val = self._formula(z)
        return val[()] if val.ndim == 0 else val

    def boundary_values(self, x, offset=BOUNDARY_OFFSET):
        """Boundary trace on real ``x``; singular points are evaluated at ``x + i*offset``."""
        z = np.asarray(x, dtype=float).astype(complex)
        sing = self._singular(z)
        if np.any(sing):
            z = np.where(sing, z + 1j * offset, z)
        return self._formula(z)

    def describe(self):
        """Flat parameter dictionary (used by the CLI config writer)."""
        raise NotImplementedError


def evaluate(symbol, z):
    """Evaluate ``symbol`` at ``z`` (alias of ``symbol(z)``)."""
    return symbol(z)


@dataclass(frozen=True)
class Constant(AnalyticSymbol):
    value: complex
    eps_lower: float
    sup_norm_hint: float | None = None
    family: ClassVar[str] = "constant"

    def __post_init__(self):
        object.__setattr__(self, "value", complex(self.value))
        self._check_eps()

    def _formula(self, z):
        return np.full(z.shape, self.value, dtype=complex)

    def describe(self):
        return {"value": self.value}


@dataclass(frozen=True)
class MoebiusDecay(AnalyticSymbol):
    """``center + residue / (z - pole)``; decays to ``center`` at infinity."""

    center: complex
    pole: complex
    eps_lower: float
    residue: complex = 1.0
    sup_norm_hint: float | None = None
    family: ClassVar[str] = "moebius_decay"

    def __post_init__(self):
        for name in ("center", "pole", "residue"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if not self.pole.imag < 0:
            raise ValueError("moebius_decay: pole must lie in the lower half-plane")
        self._check_eps()

    def _formula(self, z):
        return self.center + self.residue / (z - self.pole)

    def describe(self):
        return {"center": self.center, "pole": self.pole, "residue": self.residue}


@dataclass(frozen=True)
class LogOscillation(AnalyticSymbol):
    """``center + amplitude * sin(frequency * log z)``.

    Bounded on the half-plane because ``Im log z`` stays in ``[0, pi]``; it has
    no limit at infinity, so its cluster set there is two-dimensional.
    """

    center: complex
    amplitude: complex
    eps_lower: float
    frequency: float = 1.0
    sup_norm_hint: float | None = None
    family: ClassVar[str] = "log_oscillation"

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "frequency", float(self.frequency))
        if not self.frequency > 0:
            raise ValueError("log_oscillation: frequency must be > 0")
        self._check_eps()

    def _singular(self, z):
        return z == 0

    def _formula(self, z):
        return self.center + self.amplitude * np.sin(self.frequency * _principal_log(z))

    def describe(self):
        return {"center": self.center, "amplitude": self.amplitude, "frequency": self.frequency}


@dataclass(frozen=True)
class DiscPolynomial:
    """Polynomial symbol on the unit disc, ``eta(w) = sum_k coeffs[k] w**k``."""

    coeffs: tuple
    eps_lower: float

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in np.atleast_1d(self.coeffs))
        if not coeffs:
            raise ValueError("DiscPolynomial needs at least one coefficient")
        object.__setattr__(self, "coeffs", coeffs)
        if not self.eps_lower > 0:
            raise ValueError("eps_lower must be > 0")

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        val = np.polynomial.polynomial.polyval(w, np.asarray(self.coeffs))
        return val[()] if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class DiscTransfer(AnalyticSymbol):
    """Half-plane symbol ``eta o cayley`` obtained from a disc symbol."""

    eta: DiscPolynomial
    eps_lower: float
    sup_norm_hint: float | None = None
    family: ClassVar[str] = "disc_transfer"

    def __post_init__(self):
        self._check_eps()

    def _formula(self, z):
        return np.asarray(self.eta((z - 1j) / (z + 1j)), dtype=complex)

    def describe(self):
        return {"coeffs": self.eta.coeffs}


@dataclass(frozen=True)
class SymbolSum(AnalyticSymbol):
    terms: tuple
    eps_lower: float
    sup_norm_hint: float | None = None
    family: ClassVar[str] = "sum"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("sum: needs at least one term")
        self._check_eps()

    def _singular(self, z):
        mask = np.zeros(z.shape, dtype=bool)
        for t in self.terms:
            mask |= t._singular(z)
        return mask

    def _formula(self, z):
        return sum(t._formula(z) for t in self.terms)

    def describe(self):
        return {"terms": [(t.family, t.describe(), t.eps_lower) for t in self.terms]}


def transfer_disc_symbol(eta):
    """Move a disc symbol to the half-plane: ``psi = eta o cayley``.

    The disc composition map ``(2iz + eta(z)(1-z)) / (2i + eta(z)(1-z))`` is
    conjugate to ``z + psi(z)``, so its spectra are the ones computed for ``psi``.
    """
    return DiscTransfer(eta=eta, eps_lower=eta.eps_lower)


# -- sampling -----------------------------------------------------------------


@dataclass(frozen=True)
class SampleSpec:
    """Interior sample set: ``n_angles`` rays crossed with log-spaced radii."""

    r_min: float = 1e-3
    r_max: float = 1e6
    n_radii: int = 91
    n_angles: int = 64

    def points(self):
        r = np.geomspace(self.r_min, self.r_max, self.n_radii)
        theta = np.pi * (np.arange(self.n_angles) + 0.5) / self.n_angles
        return (r[:, None] * np.exp(1j * theta[None, :])).ravel()


@dataclass(frozen=True)
class HypothesisReport:
    min_im: float
    sup_abs: float
    ok: bool
    n_samples: int


def verify_hypothesis(symbol, sample_spec=None):
    """Check ``Im psi >= eps_lower`` on interior samples and estimate ``sup |psi|``."""
    spec = sample_spec or SampleSpec()
    z = spec.points()
    vals = symbol(z)
    min_im = float(vals.imag.min())
    sup_abs = float(np.abs(vals).max())
    return HypothesisReport(min_im, sup_abs, bool(min_im >= symbol.eps_lower), z.size)


@dataclass(frozen=True)
class AnnuliSpec:
    """Annuli ``[radii[k], radii[k+1]]``; the outermost ``n_outer`` are sampled."""

    radii: tuple = tuple(10.0 ** np.arange(1, 7))
    n_angles: int = 256
    n_radial: int = 64
    n_outer: int = 3
    dedup_tol: float = DEDUP_TOL

    def points(self):
        radii = np.asarray(self.radii, dtype=float)
        if radii.size < 2 or np.any(np.diff(radii) <= 0):
            raise ValueError("radii must be increasing with at least two entries")
        lo = radii[max(0, radii.size - 1 - self.n_outer)]
        r = np.geomspace(lo, radii[-1], self.n_radial * min(self.n_outer, radii.size - 1))
        theta = np.pi * (np.arange(self.n_angles) + 0.5) / self.n_angles
        return (r[:, None] * np.exp(1j * theta[None, :])).ravel(), lo


def estimate_cluster_set_at_infinity(symbol, annuli_spec=None):
    """Values of ``psi`` on far-out interior annuli (finite cluster-set surrogate)."""
    spec = annuli_spec or AnnuliSpec()
    z, r_inner = spec.points()
    vals = symbol(z)
    meta = {
        "kind": "cluster_set",
        "r_inner": float(r_inner),
        "r_outer": float(spec.radii[-1]),
        "n_angles": spec.n_angles,
        "n_samples": int(z.size),
    }
    return dedup_points(vals, spec.dedup_tol, metadata=meta)


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary sampling for the essential-range estimate.

    Samples cover ``n_0 <= |x| <= x_max`` on both signs, ``per_block``
    points per dyadic block. ``cutoffs`` are the levels ``n_k``.
    """

    cutoffs: tuple = tuple(10.0 ** np.arange(0, 5))
    extra_decades: float = 3.0
    per_block: int = 256
    ball_radius: float = 1e-4
    dedup_tol: float = DEDUP_TOL
    signs: tuple = (1, -1)

    def samples(self):
        cut = np.asarray(self.cutoffs, dtype=float)
        if cut.size < 1 or np.any(np.diff(cut) <= 0) or cut[0] <= 0:
            raise ValueError("cutoffs must be positive and increasing")
        x_max = cut[-1] * 10.0 ** self.extra_decades
        n_blocks = int(np.ceil(np.log2(x_max / cut[0])))
        edges = cut[0] * 2.0 ** np.arange(n_blocks + 1)
        xs, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            h = (b - a) / self.per_block
            xs.append(a + h * (np.arange(self.per_block) + 0.5))
            ws.append(np.full(self.per_block, h))
        x = np.concatenate(xs)
        w = np.concatenate(ws)
        x_all = np.concatenate([s * x for s in self.signs])
        w_all = np.tile(w, len(self.signs))
        return x_all, w_all


def estimate_essential_range_at_infinity(symbol, boundary_spec=None):
    """Boundary values near infinity that recur on sets of positive measure.

    A sampled value ``v`` is kept when the ball ``B(v, ball_radius)`` collects
    positive sample weight beyond every cutoff ``n_k``; since the weight beyond
    the largest cutoff bounds the others, that level decides.
    """
    spec = boundary_spec or BoundarySpec()
    x, w = spec.samples()
    vals = symbol.boundary_values(x)
    n_max = float(spec.cutoffs[-1])
    tail = np.abs(x) > n_max

    from scipy.spatial import cKDTree

    tail_xy = np.column_stack([vals[tail].real, vals[tail].imag])
    tree = cKDTree(tail_xy)
    dist, _ = tree.query(np.column_stack([vals.real, vals.imag]), k=1)
    keep = (dist < spec.ball_radius) & (np.abs(x) > float(spec.cutoffs[0]))
    meta = {
        "kind": "essential_range",
        "cutoffs": [float(c) for c in spec.cutoffs],
        "x_max": float(np.abs(x).max()),
        "ball_radius": spec.ball_radius,
        "boundary_offset": BOUNDARY_OFFSET,
        "n_samples": int(x.size),
    }
    return dedup_points(vals[keep], spec.dedup_tol, w[keep], meta)


def symbol_from_params(family, params, eps_lower, sup_norm_hint=None):
    """Build a builtin symbol from a family name and a parameter mapping."""
    p = dict(params)
    try:
        if family == "constant":
            return Constant(p["value"], eps_lower, sup_norm_hint)
        if family == "moebius_decay":
            return MoebiusDecay(p["center"], p["pole"], eps_lower, p.get("residue", 1.0), sup_norm_hint)
        if family == "log_oscillation":
            return LogOscillation(p["center"], p["amplitude"], eps_lower, p.get("frequency", 1.0), sup_norm_hint)
        if family == "disc_transfer":
            return transfer_disc_symbol(DiscPolynomial(tuple(p["coeffs"]), eps_lower))
        if family == "sum":
            terms = tuple(symbol_from_params(f, tp, te) for f, tp, te in p["terms"])
            return SymbolSum(terms, eps_lower, sup_norm_hint)
    except KeyError as exc:
        raise ValueError(f"{family}: missing parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown symbol family {family!r}")
