"""Predicted essential spectra versus finite-section spectra.

The prediction for ``phi(z) = z + psi(z)`` is the union of spirals
``{exp(i z t) : t >= 0}`` over generators ``z`` taken from the cluster set
(or local essential range) of ``psi`` at infinity, together with ``0``.

Finite sections are non-normal, so two comparison modes exist:

``equality``
    Hausdorff distance between the predicted set and the eigenvalues. Only
    meaningful when the operator is close to normal.
``containment``
    ``max_lambda sigma_min(A - lambda I)`` over predicted points. A small
    value means every predicted point lies in a small pseudospectrum, which is
    the direction of containment that a finite section can witness.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import ztrtrs
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh
from scipy.spatial import cKDTree

from .errors import EigensolverError
from .symbols import PointCloud, dedup_points

DEFAULT_RESOLUTION = 0.01


@dataclass(frozen=True)
class SpiralSet:
    generators: PointCloud
    t_grid: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    resolution: float = DEFAULT_RESOLUTION

    def __len__(self):
        return self.points.size


def predict_essential_spectrum(cloud, eps_lower, resolution=DEFAULT_RESOLUTION):
    """Sample ``{exp(izt): z in cloud, t in [0, T]} U {0}`` to ``resolution``.

    ``T = -log(resolution) / eps_lower``; past it every spiral point is within
    ``resolution`` of 0. Generators closer than ``resolution * e * eps_lower``
    are merged, since ``|d/dz exp(izt)| = t exp(-t Im z) <= 1 / (e Im z)``.
    The emitted points are thinned to a ``resolution / 4`` lattice.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    if len(cloud) == 0:
        raise ValueError("predict_essential_spectrum: empty generator cloud")
    if not eps_lower > 0:
        raise ValueError("eps_lower must be > 0")
    if np.any(cloud.points.imag < eps_lower):
        bad = float(cloud.points.imag.min())
        raise ValueError(f"generator with Im z = {bad:.6g} < eps_lower = {eps_lower}")
    if not 0 < resolution < 1:
        raise ValueError("resolution must lie in (0, 1)")

    gens = dedup_points(cloud.points, resolution * math.e * eps_lower).points
    t_end = -math.log(resolution) / eps_lower
    dt = resolution / max(1.0, float(np.abs(gens).max()))
    t_grid = np.arange(0.0, t_end + dt, dt)

    cell = resolution / 4
    keys = set()
    chunk = max(1, 2_000_000 // t_grid.size)
    for i in range(0, gens.size, chunk):
        pts = np.exp(1j * np.outer(gens[i : i + chunk], t_grid)).ravel()
        k = np.stack([np.round(pts.real / cell), np.round(pts.imag / cell)], axis=1).astype(np.int64)
        keys.update(map(tuple, np.unique(k, axis=0)))
    lattice = np.array(sorted(keys), dtype=float)
    pts = (lattice[:, 0] + 1j * lattice[:, 1]) * cell
    # exact anchors: 0 and the t = 0 point 1
    pts = np.concatenate([[0.0 + 0j, 1.0 + 0j], pts[(pts != 0) & (pts != 1)]])
    pts = pts[np.abs(pts) <= 1.0]
    meta = dict(cloud.metadata)
    meta["n_generators_used"] = int(gens.size)
    return SpiralSet(PointCloud(gens, metadata=meta), t_grid, pts, resolution)


def eigenvalues(matrix):
    """All eigenvalues of a dense complex matrix (LAPACK ``geev``)."""
    A = np.asarray(matrix, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("eigenvalues: square matrix required")
    try:
        w = sla.eigvals(A, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"eigensolver failed on {A.shape[0]}x{A.shape[0]} matrix: {exc}") from exc
    return PointCloud(w, metadata={"kind": "eigenvalues", "n": int(A.shape[0])})


def pseudospectrum_indicator(matrix, lam):
    """``sigma_min(A - lam I)`` by a dense SVD."""
    A = np.asarray(matrix, dtype=complex)
    return float(sla.svdvals(A - lam * np.eye(A.shape[0]), check_finite=False).min())


class PseudospectrumEvaluator:
    """Repeated ``sigma_min(A - lam I)`` evaluations from one Schur form.

    With ``A = Q T Q*`` the singular values of ``A - lam I`` equal those of the
    triangular ``T - lam I``. The smallest one is found by Lanczos on
    ``(T - lam)^{-1} (T - lam)^{-*}``, two triangular solves per step.
    """

    def __init__(self, matrix, dense_below=64, tol=1e-8):
        A = np.asarray(matrix, dtype=complex)
        self.n = A.shape[0]
        self.tol = tol
        self.dense = self.n < dense_below
        if self.dense:
            self.A = A
        else:
            self.T = sla.schur(A, output="complex")[0]
            self._diag = np.diag(self.T).copy()
            # Fortran order lets LAPACK solve in place without copying T per call
            self._work = np.asfortranarray(self.T)
        self.evaluations = 0

    def __call__(self, lam):
        self.evaluations += 1
        if self.dense:
            return pseudospectrum_indicator(self.A, lam)
        W = self._work
        idx = np.diag_indices(self.n)
        W[idx] = self._diag - lam
        if np.any(W[idx] == 0):
            return 0.0

        def inv_gram(v):
            y, info = ztrtrs(W, v.ravel(), lower=0, trans=2)
            x, info2 = ztrtrs(W, y, lower=0, trans=0)
            if info or info2:
                raise np.linalg.LinAlgError("singular triangular factor")
            return x

        op = LinearOperator((self.n, self.n), matvec=inv_gram, dtype=complex)
        v0 = np.ones(self.n, dtype=complex)
        try:
            mu = eigsh(op, k=1, which="LA", v0=v0, tol=self.tol, maxiter=2000, return_eigenvectors=False)[0]
        except np.linalg.LinAlgError:
            return 0.0
        except (ArpackNoConvergence, ArpackError):
            return pseudospectrum_indicator(self.T, lam)
        if not np.isfinite(mu) or mu.real <= 0:
            return 0.0
        return float(1.0 / math.sqrt(mu.real))


def max_pseudospectrum_indicator(matrix, lambdas, eigs=None, evaluator=None, rtol=1e-6):
    """``max_k sigma_min(A - lambdas[k] I)`` without evaluating every point.

    ``sigma_min(A - lam)`` is 1-Lipschitz in ``lam`` and bounded above by the
    distance from ``lam`` to the spectrum. Points are visited in decreasing
    order of their upper bound; bounds of the remaining points tighten after
    each exact evaluation, and the search stops once no bound exceeds the best
    value found. Returns ``(max_value, argmax_lambda, n_evaluations)``.
    """
    lam = np.asarray(lambdas, dtype=complex).ravel()
    if lam.size == 0:
        raise ValueError("no evaluation points")
    ev = evaluator or PseudospectrumEvaluator(matrix)
    if eigs is None:
        eigs = eigenvalues(matrix).points
    eig_tree = cKDTree(np.column_stack([eigs.real, eigs.imag]))
    ub, _ = eig_tree.query(np.column_stack([lam.real, lam.imag]), k=1)
    ub = ub.astype(float)

    best, arg, count = 0.0, lam[0], 0
    heap = [(-u, i) for i, u in enumerate(ub)]
    heapq.heapify(heap)
    done = np.zeros(lam.size, dtype=bool)
    while heap:
        neg, i = heapq.heappop(heap)
        if done[i] or -neg != ub[i]:
            continue
        if ub[i] <= best * (1 + rtol):
            break
        s = ev(lam[i])
        count += 1
        done[i] = True
        if s > best:
            best, arg = s, lam[i]
        new = s + np.abs(lam - lam[i])
        tighter = (new < ub) & ~done
        ub[tighter] = new[tighter]
        for j in np.flatnonzero(tighter):
            heapq.heappush(heap, (-ub[j], j))
    return best, complex(arg), count


def hausdorff(a, b):
    """Symmetric Hausdorff distance between two finite point sets."""
    pa = a.points if isinstance(a, (PointCloud, SpiralSet)) else np.asarray(a, dtype=complex).ravel()
    pb = b.points if isinstance(b, (PointCloud, SpiralSet)) else np.asarray(b, dtype=complex).ravel()
    if pa.size == 0 or pb.size == 0:
        raise ValueError("hausdorff: both point sets must be nonempty")
    xa = np.column_stack([pa.real, pa.imag])
    xb = np.column_stack([pb.real, pb.imag])
    d_ab = cKDTree(xb).query(xa, k=1)[0].max()
    d_ba = cKDTree(xa).query(xb, k=1)[0].max()
    return float(max(d_ab, d_ba))


@dataclass
class SpectrumReport:
    predicted: SpiralSet
    eigenvalues: PointCloud
    hausdorff: float
    containment_margin: float | None
    mode: str
    status: str = "unchecked"
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mode": self.mode,
            "status": self.status,
            "hausdorff": self.hausdorff,
            "containment_margin": self.containment_margin,
            "n_predicted": int(len(self.predicted)),
            "n_generators": int(len(self.predicted.generators)),
            "n_eigenvalues": int(len(self.eigenvalues)),
            "resolution": self.predicted.resolution,
            "metadata": self.metadata,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str)


def compare(predicted, matrix, mode="equality", tolerance=None, qc_certified=True,
            eigs=None, containment_spacing=None):
    """Compare a predicted spiral set with a finite section.

    ``tolerance`` (optional) sets ``status``; an equality failure with
    ``qc_certified=False`` is reported as ``inconclusive`` rather than
    ``fail``. ``containment_spacing`` thins the predicted points before the
    margin search; the true maximum over all points then exceeds the reported
    one by at most that spacing.
    """
    if mode not in ("equality", "containment"):
        raise ValueError(f"unknown comparison mode {mode!r}")
    ev = eigs if eigs is not None else eigenvalues(matrix)
    hd = hausdorff(predicted.points, ev.points)
    meta = {"mode": mode}
    margin = None
    if mode == "containment":
        lam = predicted.points
        if containment_spacing:
            lam = dedup_points(lam, containment_spacing).points
            meta["containment_spacing"] = containment_spacing
        margin, where, count = max_pseudospectrum_indicator(matrix, lam, eigs=ev.points)
        meta.update({"argmax_lambda": [where.real, where.imag], "n_sigma_min_evaluations": count,
                     "n_candidate_points": int(lam.size)})
    status = "unchecked"
    if tolerance is not None:
        value = hd if mode == "equality" else margin
        if value <= tolerance:
            status = "pass"
        elif mode == "equality" and not qc_certified:
            status = "inconclusive (QC hypothesis unverified)"
        else:
            status = "fail"
    return SpectrumReport(predicted, ev, hd, margin, mode, status, meta)


def _cut_mask(n, t, t_cut):
    if t is None:
        return np.arange(n) >= t_cut
    return np.asarray(t)[:n] >= t_cut


def essential_normality_diagnostic(matrix, t=None, t_cuts=None):
    """Norm of ``A*A - AA*`` and of its restriction to frequency tails ``t >= t_cut``.

    ``t`` gives the frequency of each basis index (defaults to the index
    itself); ``t_cuts`` defaults to ``T/8, T/4, T/2`` with ``T`` the largest
    frequency plus one grid step.
    """
    A = np.asarray(matrix, dtype=complex)
    n = A.shape[0]
    C = A.conj().T @ A - A @ A.conj().T
    comm = float(np.abs(sla.eigvalsh(C, check_finite=False)).max()) if n else 0.0
    if t_cuts is None:
        tv = np.arange(n, dtype=float) if t is None else np.asarray(t, dtype=float)[:n]
        top = tv[-1] + (tv[1] - tv[0] if n > 1 else 1.0)
        t_cuts = (top / 8, top / 4, top / 2)
    tails = []
    for tc in t_cuts:
        mask = _cut_mask(n, t, tc)
        tails.append(float(np.linalg.norm(C[:, mask], 2)) if mask.any() else 0.0)
    return {"comm_norm": comm, "tail_comm_norms": tails, "t_cuts": [float(x) for x in t_cuts]}


def write_points_csv(path, predicted=None, eigs=None):
    """``re,im,kind`` rows with kind in {predicted, eigen}."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("re,im,kind\n")
        for kind, pts in (("predicted", predicted), ("eigen", eigs)):
            if pts is None:
                continue
            arr = pts.points if hasattr(pts, "points") else np.asarray(pts)
            for z in np.asarray(arr, dtype=complex).ravel():
                fh.write(f"{float(z.real)!r},{float(z.imag)!r},{kind}\n")


def read_points_csv(path):
    out = {"predicted": [], "eigen": []}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            re_, im_, kind = line.strip().split(",")
            out.setdefault(kind, []).append(complex(float(re_), float(im_)))
    return {k: np.asarray(v, dtype=complex) for k, v in out.items()}
