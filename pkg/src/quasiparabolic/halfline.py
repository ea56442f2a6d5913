"""Discrete Paley-Wiener model of the Hardy space of the upper half-plane.

The spatial grid ``x_k = -L + k*dx`` on ``[-L, L)`` is paired with the
frequency grid ``t_j = j*dt`` (FFT order, ``dt = pi/L``). Coefficient vectors
live on the full frequency grid; the Hardy subspace is the set of vectors
supported on ``t_j >= 0``, which in FFT order are the first ``N/2`` entries.

The transform is unitary and phase-corrected so that the coefficient vector
``e_j`` corresponds to the spatial samples of ``exp(i t_j x) / sqrt(N)``.

Every operator here has the form ``P X P`` with ``P`` the Hardy projection,
so adjoints are exact and Hardy vectors map to Hardy vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
import math
from math import lgamma

import numpy as np
import scipy.sparse as sps
from scipy.fft import fft, ifft
from scipy.ndimage import maximum_filter1d
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .errors import ConvergenceError, ResourceError

DEFAULT_MEMORY_CAP = 2**31


@dataclass(frozen=True)
class HardyGrid:
    n_points: int = 2048
    spatial_halfwidth: float = 200.0
    hardy_tol: float = 1e-9

    def __post_init__(self):
        n = int(self.n_points)
        if n < 4 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 4, got {self.n_points}")
        if not self.spatial_halfwidth > 0:
            raise ValueError("spatial_halfwidth must be > 0")
        object.__setattr__(self, "n_points", n)
        object.__setattr__(self, "spatial_halfwidth", float(self.spatial_halfwidth))

    @property
    def dx(self):
        return 2 * self.spatial_halfwidth / self.n_points

    @property
    def dt(self):
        return np.pi / self.spatial_halfwidth

    @property
    def t_max(self):
        return np.pi * self.n_points / (2 * self.spatial_halfwidth)

    @property
    def n_plus(self):
        return self.n_points // 2

    @cached_property
    def x(self):
        return -self.spatial_halfwidth + self.dx * np.arange(self.n_points)

    @cached_property
    def t(self):
        j = np.arange(self.n_points)
        return self.dt * np.where(j < self.n_plus, j, j - self.n_points)

    @cached_property
    def t_plus(self):
        return self.t[: self.n_plus]

    @cached_property
    def _phase(self):
        return np.where(np.arange(self.n_points) % 2 == 0, 1.0, -1.0)

    def _bcast(self, f):
        return self._phase.reshape((-1,) + (1,) * (np.ndim(f) - 1))

    def to_frequency(self, f):
        """Spatial samples (axis 0) to coefficients."""
        f = np.asarray(f, dtype=complex)
        return fft(f, axis=0, norm="ortho") * self._bcast(f)

    def to_space(self, c):
        """Coefficients (axis 0) to spatial samples."""
        c = np.asarray(c, dtype=complex)
        return ifft(c * self._bcast(c), axis=0, norm="ortho")

    def embed(self, c_plus):
        """Pad a nonnegative-frequency vector to the full grid."""
        c_plus = np.asarray(c_plus, dtype=complex)
        out = np.zeros((self.n_points,) + c_plus.shape[1:], dtype=complex)
        out[: self.n_plus] = c_plus
        return out

    def negative_energy_fraction(self, c):
        c = np.asarray(c)
        total = np.sum(np.abs(c) ** 2)
        return float(np.sum(np.abs(c[self.n_plus:]) ** 2) / total) if total > 0 else 0.0

    def is_hardy(self, c):
        return self.negative_energy_fraction(c) <= self.hardy_tol

    def taper(self, fraction=0.1):
        """Raised-cosine window equal to one except on the outer ``fraction`` of ``[-L, L)``."""
        L = self.spatial_halfwidth
        edge = (1 - fraction) * L
        s = np.clip((np.abs(self.x) - edge) / (fraction * L), 0.0, 1.0)
        return 0.5 * (1 + np.cos(np.pi * s))

    def metadata(self):
        return {
            "n_points": self.n_points,
            "spatial_halfwidth": self.spatial_halfwidth,
            "dx": self.dx,
            "dt": self.dt,
            "t_max": self.t_max,
            "n_plus": self.n_plus,
        }


def project_hardy(f, grid=None):
    """Zero all strictly negative frequencies (axis 0, FFT order)."""
    f = np.array(f, dtype=complex, copy=True)
    f[f.shape[0] // 2:] = 0
    return f


class DiscreteOperator:
    """Linear operator on full-grid coefficient vectors.

    ``apply`` and ``adjoint_apply`` act along axis 0 and accept batches of
    column vectors. Inputs are Hardy-projected before use.
    """

    def __init__(self, grid, apply, adjoint_apply, kind="composite", matrix=None, metadata=None):
        self.grid = grid
        self._apply = apply
        self._adjoint = adjoint_apply
        self.kind = kind
        self.matrix = matrix
        self.metadata = dict(metadata or {})

    def apply(self, f):
        return self._apply(project_hardy(f))

    __call__ = apply

    def adjoint_apply(self, f):
        return self._adjoint(project_hardy(f))

    @property
    def H(self):
        m = None if self.matrix is None else self.matrix.conj().T
        return DiscreteOperator(self.grid, self._adjoint, self._apply, self.kind, m, self.metadata)

    def __matmul__(self, other):
        if not isinstance(other, DiscreteOperator):
            return NotImplemented
        return DiscreteOperator(
            self.grid,
            lambda f: self._apply(other._apply(f)),
            lambda f: other._adjoint(self._adjoint(f)),
            "composite",
        )

    def __add__(self, other):
        if not isinstance(other, DiscreteOperator):
            return NotImplemented
        return DiscreteOperator(
            self.grid,
            lambda f: self._apply(f) + other._apply(f),
            lambda f: self._adjoint(f) + other._adjoint(f),
            "composite",
        )

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, c):
        c = complex(c)
        return DiscreteOperator(
            self.grid,
            lambda f: c * self._apply(f),
            lambda f: np.conj(c) * self._adjoint(f),
            self.kind,
            None if self.matrix is None else c * self.matrix,
        )

    __rmul__ = __mul__

    @classmethod
    def from_matrix(cls, grid, matrix):
        """Wrap an ``N+ x N+`` matrix acting on the nonnegative frequencies."""
        A = np.asarray(matrix, dtype=complex)
        n = grid.n_plus
        if A.shape != (n, n):
            raise ValueError(f"matrix must be {n}x{n}")

        def apply(f):
            return grid.embed(A @ f[:n])

        def adjoint(f):
            return grid.embed(A.conj().T @ f[:n])

        return cls(grid, apply, adjoint, "dense", A)


def identity(grid):
    return DiscreteOperator(grid, lambda f: f, lambda f: f, "diagonal")


def fourier_multiplier(theta, grid):
    """Diagonal operator ``c_j -> theta(t_j) c_j`` on ``t_j >= 0``.

    ``theta`` is a vectorized callable on nonnegative frequencies, or an array
    of its values on ``grid.t_plus``.
    """
    if callable(theta):
        vals = np.asarray(theta(grid.t_plus), dtype=complex)
    else:
        vals = np.asarray(theta, dtype=complex)
    vals = np.broadcast_to(vals, grid.t_plus.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("fourier_multiplier: theta is not finite on the grid")
    diag = grid.embed(vals)

    def apply(f):
        return diag.reshape((-1,) + (1,) * (f.ndim - 1)) * f

    def adjoint(f):
        return diag.conj().reshape((-1,) + (1,) * (f.ndim - 1)) * f

    op = DiscreteOperator(grid, apply, adjoint, "diagonal")
    op.diagonal = vals.copy()
    return op


def theta_n(n, alpha):
    """Multiplier ``t -> (-i t)**n exp(-alpha t) / n!`` of the n-th convolution kernel."""
    if n < 0 or int(n) != n:
        raise ValueError("n must be a nonnegative integer")
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    n = int(n)
    phase = (-1j) ** n

    def theta(t):
        t = np.asarray(t, dtype=float)
        if n == 0:
            return np.exp(-alpha * t).astype(complex)
        with np.errstate(divide="ignore"):
            logmag = n * np.log(t) - alpha * t - lgamma(n + 1)
        return phase * np.exp(logmag)

    return theta


def theta_n_sup(n, alpha):
    """``sup_t |theta_n(t)| = (n/(e alpha))**n / n!`` (1 for n = 0)."""
    if n == 0:
        return 1.0
    return float(np.exp(n * np.log(n / (np.e * alpha)) - lgamma(n + 1)))


def toeplitz(a_samples, grid):
    """Toeplitz operator ``f -> P F (a * F^-1 f)`` for spatial symbol samples ``a``."""
    a = np.asarray(a_samples, dtype=complex)
    if a.shape != (grid.n_points,):
        raise ValueError("symbol samples must live on the spatial grid")
    if not np.all(np.isfinite(a)):
        raise ValueError("toeplitz: symbol samples must be finite")
    ac = a.conj()

    def _mult(vals, f):
        return project_hardy(grid.to_frequency(vals.reshape((-1,) + (1,) * (f.ndim - 1)) * grid.to_space(f)))

    op = DiscreteOperator(grid, lambda f: _mult(a, f), lambda f: _mult(ac, f), "composite")
    op.symbol_sup = float(np.abs(a).max())
    return op


def dilation(p, grid):
    """``V_p f(z) = f(pz)``, i.e. ``c(t) -> c(t/p) / p`` by linear interpolation.

    ``metadata['truncated']`` flags that part of the dilated spectrum falls
    beyond the grid: for ``p > 1`` input mass on ``[T_max/p, T_max)`` would
    land past ``T_max`` and is dropped. For ``p < 1`` the output beyond
    ``p T_max`` would need input past ``T_max`` and is zero-padded.
    """
    if not p > 0:
        raise ValueError("p must be > 0")
    n = grid.n_plus
    pos = np.arange(n) / p  # fractional source index of t_i / p
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    rows, cols, vals = [], [], []
    for shift, wt in ((0, 1 - frac), (1, frac)):
        idx = lo + shift
        ok = (idx < n) & (wt != 0)
        rows.append(np.arange(n)[ok])
        cols.append(idx[ok])
        vals.append(wt[ok] / p)
    W = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).astype(complex)
    WH = W.conj().T.tocsr()

    def apply(f):
        return grid.embed(W @ f[:n])

    def adjoint(f):
        return grid.embed(WH @ f[:n])

    # p > 1 pushes the input band [T_max/p, T_max) past the grid edge
    truncated = bool(p > 1)
    return DiscreteOperator(
        grid, apply, adjoint, "composite",
        metadata={"p": p, "truncated": truncated, "interpolation": "linear"},
    )


def dilation_roundtrip_bound(f, p, grid):
    """Interpolation error bound for ``||V_p V_{1/p} f - f||``, ``p >= 1``.

    Linear interpolation at spacing ``h`` errs by at most ``h**2/8 max|c''|``
    per point. Both stages are bounded this way with ``c''`` replaced by
    second differences of the grid data over the enclosing cell, so the bound
    is an estimate at the resolution of the grid itself.
    """
    if not p >= 1:
        raise ValueError("dilation_roundtrip_bound expects p >= 1 (swap the order otherwise)")
    c = np.asarray(f)[: grid.n_plus]
    d2 = np.zeros(c.shape)
    d2[1:-1] = np.abs(c[2:] - 2 * c[1:-1] + c[:-2])
    d2[0], d2[-1] = d2[1], d2[-2]
    w = int(math.ceil(p)) + 1
    local = maximum_filter1d(d2, size=2 * w + 1, axis=0, mode="nearest")
    per_point = (p**2 + 1) / 8 * local
    return np.sqrt(np.sum(per_point**2, axis=0))


def assemble_dense(op, grid=None, memory_cap=DEFAULT_MEMORY_CAP, chunk=256):
    """Dense ``N+ x N+`` matrix whose column j is ``op(e_j)`` on ``t >= 0``.

    Columns are computed independently in chunks, so the result does not
    depend on the evaluation order.
    """
    grid = grid or op.grid
    if op.matrix is not None:
        return np.array(op.matrix, copy=True)
    n = grid.n_plus
    need = 16 * n * n + 16 * grid.n_points * min(chunk, n) * 3
    if need > memory_cap:
        raise ResourceError(f"dense assembly needs ~{need} bytes, cap is {memory_cap}")
    A = np.empty((n, n), dtype=complex)
    for j0 in range(0, n, chunk):
        j1 = min(n, j0 + chunk)
        E = np.zeros((grid.n_points, j1 - j0), dtype=complex)
        E[np.arange(j0, j1), np.arange(j1 - j0)] = 1.0
        A[:, j0:j1] = op.apply(E)[:n]
    return A


def operator_norm_estimate(op, seed=42, tol=1e-12, maxiter=5000):
    """Largest singular value of ``op`` (a DiscreteOperator or a square matrix).

    Lanczos iteration (ARPACK) on the normal operator ``op* op`` with a seeded
    start vector. Problems of size <= 16 use a dense SVD.
    """
    if isinstance(op, DiscreteOperator):
        grid = op.grid
        n = grid.n_plus

        def normal(v):
            return op.adjoint_apply(op.apply(grid.embed(v.ravel())))[:n]

        small = None if n > 16 else (lambda: assemble_dense(op))
    else:
        A = np.asarray(op, dtype=complex)
        n = A.shape[0]

        def normal(v):
            return A.conj().T @ (A @ v.ravel())

        small = None if n > 16 else (lambda: A)
    if small is not None:
        return float(np.linalg.norm(small(), 2))

    lin = LinearOperator((n, n), matvec=normal, dtype=complex)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    try:
        w = eigsh(lin, k=1, which="LA", v0=v0, tol=tol, maxiter=maxiter, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise ConvergenceError("operator norm estimate did not converge", last=exc.eigenvalues) from None
    return float(np.sqrt(max(w[0].real, 0.0)))


# -- dense matrix file formats ------------------------------------------------


def write_matrix_csv(path, A):
    """Write ``row,col,re,im`` lines (header included); floats use ``repr``."""
    A = np.asarray(A, dtype=complex)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("row,col,re,im\n")
        for (i, j), v in np.ndenumerate(A):
            fh.write(f"{i},{j},{float(v.real)!r},{float(v.imag)!r}\n")


def read_matrix_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = int(data[:, 0].max()) + 1 if data.size else 0
    A = np.zeros((n, int(data[:, 1].max()) + 1 if data.size else 0), dtype=complex)
    A[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return A


def write_matrix_binary(path, A):
    """Header: ``N+`` as little-endian uint64; body: row-major interleaved float64 re/im."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("binary layout stores square matrices only")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", A.shape[0]))
        fh.write(np.ascontiguousarray(A).astype("<c16").tobytes())


def read_matrix_binary(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        body = np.frombuffer(fh.read(), dtype="<c16")
    if body.size != n * n:
        raise ValueError(f"{path}: expected {n * n} entries, found {body.size}")
    return body.reshape(n, n).astype(complex)
