"""Embedded ensemble propagation: lane-array sparse systems and a grouped PCG.

An ensemble replaces every scalar in a sparse solve by an array of S "lanes",
one per sample.  All lanes share one CSR sparsity graph; values, vectors and
reduction results carry a leading lane axis.  Norms and inner products are
taken per lane (never summed across lanes), so the arithmetic seen by lane i
is exactly the arithmetic of a scalar solve of lane i's system: iteration
counts and iterates match a sequential solve bit for bit.

The conjugate-gradient loop keeps iterating until every lane has either
converged or been frozen, recording for each lane the first iteration at
which its relative residual dropped below the tolerance.  Lanes whose
A-conjugate norm p'Ap underflows to zero (which happens after a lane has
converged far beyond machine precision) are frozen: their update coefficients
are forced to zero so their solutions never change while the remaining lanes
continue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "EnsembleError",
    "NumericalBreakdownError",
    "EnsembleCsrMatrix",
    "lane_norms",
    "lane_dot",
    "JacobiPreconditioner",
    "IdentityPreconditioner",
    "jacobi_precond",
    "LaneSolveResult",
    "ensemble_pcg",
]

# Smallest positive normal double; p'Ap at or below this freezes a lane.
_FREEZE_THRESHOLD = np.finfo(np.float64).tiny


class EnsembleError(ValueError):
    """Structural problems: shape mismatches, invalid graphs, bad diagonals."""


class NumericalBreakdownError(RuntimeError):
    """Non-finite values appeared in an active lane during iteration."""


@dataclass
class EnsembleCsrMatrix:
    """CSR matrix whose nonzero values carry a lane axis: values[s, nz].

    The graph (row_offsets, col_indices) is shared by all lanes.  Lane s is
    exactly the scalar CSR matrix (values[s], col_indices, row_offsets).
    """

    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _lanes: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int32)
        self.col_indices = np.ascontiguousarray(self.col_indices, dtype=np.int32)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.row_offsets.ndim != 1 or self.row_offsets[0] != 0:
            raise EnsembleError("row_offsets must be 1-D and start at 0")
        if self.values.ndim != 2:
            raise EnsembleError("values must have shape (lanes, nnz)")
        nnz = self.col_indices.shape[0]
        if self.row_offsets[-1] != nnz or self.values.shape[1] != nnz:
            raise EnsembleError("row_offsets, col_indices and values disagree on nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise EnsembleError("row_offsets must be non-decreasing")
        n = self.n_rows
        if nnz and (self.col_indices.min() < 0 or self.col_indices.max() >= n):
            raise EnsembleError("column index out of range")

    @property
    def n_rows(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def width(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_scipy_lanes(cls, mats: Sequence[sp.spmatrix]) -> "EnsembleCsrMatrix":
        """Stack scalar CSR matrices with identical graphs into an ensemble."""
        csr = [sp.csr_matrix(m) for m in mats]
        for m in csr:
            m.sort_indices()
        first = csr[0]
        for m in csr[1:]:
            if m.shape != first.shape or not (
                np.array_equal(m.indptr, first.indptr)
                and np.array_equal(m.indices, first.indices)
            ):
                raise EnsembleError("lane matrices must share one sparsity graph")
        values = np.vstack([m.data for m in csr])
        return cls(first.indptr, first.indices, values)

    def lane(self, s: int) -> sp.csr_matrix:
        """Scalar CSR view of lane s (shares the value buffer)."""
        n = self.n_rows
        return sp.csr_matrix((self.values[s], self.col_indices, self.row_offsets), shape=(n, n))

    def _lane_list(self) -> list:
        if self._lanes is None:
            self._lanes = [self.lane(s) for s in range(self.width)]
        return self._lanes

    def spmv(self, x: np.ndarray) -> np.ndarray:
        """Lane-wise matrix-vector product: (S, n) -> (S, n).

        Each lane is an independent scalar CSR SpMV; no information crosses
        lanes, so lane s of the result is bitwise the scalar product.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.width, self.n_rows):
            raise EnsembleError(f"vector has shape {x.shape}, expected {(self.width, self.n_rows)}")
        out = np.empty_like(x)
        for s, mat in enumerate(self._lane_list()):
            out[s] = mat.dot(x[s])
        return out

    def diagonal(self) -> np.ndarray:
        """Per-lane main diagonal, shape (S, n); absent entries read as zero."""
        n = self.n_rows
        diag = np.zeros((self.width, n))
        rows = np.repeat(np.arange(n), np.diff(self.row_offsets))
        hit = self.col_indices == rows
        diag[:, rows[hit]] = self.values[:, hit]
        return diag


def _check_vector(mat_width: int, n: int, x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mat_width, n):
        raise EnsembleError(f"{name} has shape {x.shape}, expected {(mat_width, n)}")
    return x


def lane_norms(x: np.ndarray) -> np.ndarray:
    """Per-lane Euclidean norms of an (S, n) ensemble vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise EnsembleError("ensemble vectors must be 2-D (lanes, entries)")
    return np.sqrt(lane_dot(x, x))


def lane_dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-lane inner products; lane s uses only lane-s data."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise EnsembleError(f"mismatched ensemble vectors: {x.shape} vs {y.shape}")
    return np.array([np.dot(x[s], y[s]) for s in range(x.shape[0])])


class IdentityPreconditioner:
    def apply(self, r: np.ndarray) -> np.ndarray:
        return r.copy()


class JacobiPreconditioner:
    """Lane-wise diagonal scaling z = D^{-1} r."""

    def __init__(self, inv_diag: np.ndarray):
        self.inv_diag = inv_diag

    def apply(self, r: np.ndarray) -> np.ndarray:
        return r * self.inv_diag


def jacobi_precond(mat: EnsembleCsrMatrix) -> JacobiPreconditioner:
    diag = mat.diagonal()
    if np.any(diag <= 0):
        raise EnsembleError("Jacobi preconditioner needs strictly positive lane diagonals")
    return JacobiPreconditioner(1.0 / diag)


@dataclass
class LaneSolveResult:
    """Outcome of one ensemble solve.

    iterations_per_lane[s] is the first iteration at which lane s satisfied
    ||r|| <= tol * ||b||, or the number of iterations actually run if it never
    did.  ensemble_iterations is the total the ensemble ran, i.e. the max over
    lanes.  residual_history (optional) holds one (S,) array of lane residual
    norms per iteration, starting at iteration 0.
    """

    solution: np.ndarray
    iterations_per_lane: np.ndarray
    ensemble_iterations: int
    converged_per_lane: np.ndarray
    frozen_lanes: np.ndarray
    residual_history: list[np.ndarray] | None = None


def ensemble_pcg(
    mat: EnsembleCsrMatrix,
    rhs: np.ndarray,
    precond=None,
    tol: float = 1e-7,
    maxit: int = 1000,
    record_history: bool = False,
) -> LaneSolveResult:
    """Preconditioned CG on all lanes at once, run until every lane converges.

    Convergence is per lane, relative to that lane's right-hand side.  A lane
    that converges keeps iterating with the rest (its arithmetic is still
    lane-local), so recorded counts equal independent scalar PCG counts
    exactly.  Lanes whose p'Ap underflows below the smallest positive normal
    are frozen: alpha and beta are zeroed for them only, their solution stops
    changing, and they no longer block termination.
    """
    if tol <= 0 or not np.isfinite(tol):
        raise EnsembleError(f"tol must be positive and finite, got {tol}")
    if maxit < 0:
        raise EnsembleError(f"maxit must be >= 0, got {maxit}")
    S, n = mat.width, mat.n_rows
    b = _check_vector(S, n, rhs, "rhs")
    if precond is None:
        precond = jacobi_precond(mat)

    x = np.zeros_like(b)
    r = b.copy()
    b_norm = lane_norms(b)
    r_norm = b_norm.copy()
    threshold = tol * b_norm

    iterations = np.zeros(S, dtype=int)
    converged = r_norm <= threshold  # zero right-hand sides converge at iteration 0
    frozen = np.zeros(S, dtype=bool)
    history: list[np.ndarray] | None = [r_norm.copy()] if record_history else None

    z = precond.apply(r)
    p = z.copy()
    rz = lane_dot(r, z)
    it = 0
    while it < maxit and not np.all(converged | frozen):
        it += 1
        Ap = mat.spmv(p)
        pAp = lane_dot(p, Ap)
        frozen |= pAp <= _FREEZE_THRESHOLD
        active = ~frozen
        alpha = np.zeros(S)
        alpha[active] = rz[active] / pAp[active]
        x += alpha[:, None] * p
        r -= alpha[:, None] * Ap
        r_norm = lane_norms(r)
        if history is not None:
            history.append(r_norm.copy())
        if not np.all(np.isfinite(r_norm[active])):
            raise NumericalBreakdownError(f"non-finite residual in active lane at iteration {it}")
        newly = active & ~converged & (r_norm <= threshold)
        iterations[newly] = it
        converged |= newly
        if np.all(converged | frozen):
            break
        z = precond.apply(r)
        rz_new = lane_dot(r, z)
        beta = np.zeros(S)
        safe = active & (rz > 0)
        beta[safe] = rz_new[safe] / rz[safe]
        p = z + beta[:, None] * p
        rz = rz_new
    iterations[~converged] = it
    return LaneSolveResult(
        solution=x,
        iterations_per_lane=iterations,
        ensemble_iterations=int(iterations.max(initial=0)),
        converged_per_lane=converged,
        frozen_lanes=frozen,
        residual_history=history,
    )
