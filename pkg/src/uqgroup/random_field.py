"""Truncated Karhunen-Loeve diffusion coefficients on the unit cube.

The covariance exp(-||x - x'||_1 / delta) on [0, 1]^3 is separable, so its
eigenpairs are products of eigenpairs of the 1D kernel exp(-|x - x'|/delta) on
[0, 1].  The 1D problems are solved numerically with a Nystrom discretisation
(uniform grid, trapezoid weights, symmetrised eigenproblem); eigenfunctions
are tabulated and evaluated by linear interpolation.

A field instance evaluates the diffusion coefficient in the first spatial
direction as

    a(x, y) = a_min + a_hat(y) * exp(sum_n sqrt(lambda_n) b_n(x) y_n)

(log expansion) or with the exponential replaced by 1 + sum(...) (linear
expansion), with constant cross-direction coefficients a_y, a_z.  The overall
variance factor sigma0 can scale either the 3D eigenvalues by sigma0^2
("stddev" convention, amplitudes proportional to sigma0) or by sigma0
("kernel" convention, sigma0 multiplying the covariance itself).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "FieldError",
    "Eigenpair1D",
    "eigenpairs_1d",
    "KLDiffusionField",
    "build_field",
    "anisotropy_indicator",
]


class FieldError(ValueError):
    """Invalid field configuration or evaluation input."""


@dataclass(frozen=True)
class Eigenpair1D:
    """One eigenpair of the 1D exponential kernel, tabulated on a uniform grid.

    The eigenfunction has unit L2 norm on [0, 1] and positive value at x = 0.
    """

    eigenvalue: float
    grid: np.ndarray
    values: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.values)


def eigenpairs_1d(delta: float, count: int, grid_points: int = 513) -> list[Eigenpair1D]:
    """Leading Nystrom eigenpairs of exp(-|x - x'|/delta) on [0, 1].

    Discretises the integral operator on a uniform grid with trapezoid
    weights, symmetrises with W^(1/2), and solves the dense symmetric
    eigenproblem.  Eigenvalues come back in descending order; eigenfunctions
    are unit-L2 under the same quadrature.
    """
    if delta <= 0:
        raise FieldError(f"correlation length delta must be positive, got {delta}")
    if grid_points < 64:
        raise FieldError(f"grid_points must be >= 64, got {grid_points}")
    if not 1 <= count <= grid_points:
        raise FieldError(f"count must be in [1, {grid_points}], got {count}")
    x = np.linspace(0.0, 1.0, grid_points)
    h = x[1] - x[0]
    w = np.full(grid_points, h)
    w[0] = w[-1] = h / 2.0
    kernel = np.exp(-np.abs(x[:, None] - x[None, :]) / delta)
    sqrt_w = np.sqrt(w)
    sym = sqrt_w[:, None] * kernel * sqrt_w[None, :]
    try:
        eigvals, eigvecs = scipy.linalg.eigh(sym)
    except scipy.linalg.LinAlgError as err:  # pragma: no cover - LAPACK failure
        raise FieldError(f"eigensolver failed: {err}") from err
    order = np.argsort(eigvals)[::-1][:count]
    out = []
    for k in order:
        func = eigvecs[:, k] / sqrt_w
        anchor = func[0] if func[0] != 0 else func[np.argmax(np.abs(func))]
        if anchor < 0:
            func = -func
        out.append(Eigenpair1D(float(eigvals[k]), x, np.ascontiguousarray(func)))
    return out


@dataclass(frozen=True)
class KLDiffusionField:
    """Truncated 3D KL expansion driving an anisotropic diffusion tensor.

    modes[n] = (p, q, r) selects the 1D factors of the n-th 3D eigenfunction
    b_n(x) = e_p(x0) e_q(x1) e_r(x2); eigenvalues already carry the sigma0
    scaling.  a_y and a_z are the constant coefficients of the second and
    third spatial directions.
    """

    delta: float
    sigma0: float
    a_min: float
    a_hat_mode: str  # "constant" | "test2"
    a_hat_value: float
    a_y: float
    a_z: float
    expansion: str  # "log" | "linear"
    eigenvalues: np.ndarray  # (N,)
    modes: tuple[tuple[int, int, int], ...]
    factors: tuple[Eigenpair1D, ...]

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def a_hat(self, y: np.ndarray) -> np.ndarray:
        """Sample-dependent amplitude; rows of y are samples."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.a_hat_mode == "constant":
            return np.full(len(y), self.a_hat_value)
        if self.a_hat_mode == "test2":
            # Piecewise amplitude over the sample-space radius: small core,
            # large middle shell, intermediate outside.
            d = math.sqrt(3.0)
            r = np.sqrt((y**2).sum(axis=1))
            out = np.where(r < d / 4.0, 1.0, np.where(r < d / 2.0, 100.0, 10.0))
            return self.a_hat_value * out
        raise FieldError(f"unknown a_hat mode {self.a_hat_mode!r}")

    def mode_values(self, points: np.ndarray) -> np.ndarray:
        """3D eigenfunctions at spatial points: (P, 3) -> (N, P)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise FieldError(f"points must have shape (P, 3), got {points.shape}")
        out = np.empty((self.n_modes, len(points)))
        for n, (p, q, r) in enumerate(self.modes):
            out[n] = self.factors[p](points[:, 0]) * self.factors[q](points[:, 1]) * self.factors[r](points[:, 2])
        return out

    def eval_a_batch(
        self, points: np.ndarray, samples: np.ndarray, mode_vals: np.ndarray | None = None
    ) -> np.ndarray:
        """Coefficient a(x, y) on a grid of points for many samples: (S, P).

        `mode_vals` may pass precomputed `mode_values(points)` to amortise the
        eigenfunction interpolation across calls with the same points.
        """
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.n_modes:
            raise FieldError(f"samples must have {self.n_modes} columns, got {samples.shape[1]}")
        if mode_vals is None:
            mode_vals = self.mode_values(points)
        amplitudes = np.sqrt(self.eigenvalues)
        fluct = (samples * amplitudes) @ mode_vals  # (S, P)
        if self.expansion == "log":
            fluct = np.exp(fluct)
        elif self.expansion == "linear":
            fluct = 1.0 + fluct
        else:
            raise FieldError(f"unknown expansion {self.expansion!r}")
        return self.a_min + self.a_hat(samples)[:, None] * fluct

    def eval_a(self, x: Sequence[float], y: Sequence[float]) -> float:
        """Pointwise coefficient for a single spatial point and sample."""
        pts = np.asarray(x, dtype=float)[None, :]
        return float(self.eval_a_batch(pts, np.asarray(y, dtype=float)[None, :])[0, 0])


def build_field(
    delta: float,
    sigma0: float,
    n_modes: int,
    a_min: float,
    a_hat_mode: str = "constant",
    a_hat_value: float = 1.0,
    a_y: float = 1.0,
    a_z: float = 1.0,
    nystrom_points: int = 513,
    sigma0_convention: str = "stddev",
    expansion: str = "log",
) -> KLDiffusionField:
    """Assemble the leading `n_modes` 3D KL modes from 1D Nystrom factors.

    Candidate 3D eigenvalues are scale * (lambda_p lambda_q lambda_r) with
    scale = sigma0^2 ("stddev") or sigma0 ("kernel"); ties in the descending
    eigenvalue sort break lexicographically on (p, q, r).  Enough 1D modes are
    computed that no excluded product could outrank a kept one.
    """
    if n_modes < 1:
        raise FieldError(f"n_modes must be >= 1, got {n_modes}")
    if sigma0 < 0:
        raise FieldError(f"sigma0 must be >= 0, got {sigma0}")
    if a_min < 0:
        raise FieldError(f"a_min must be >= 0, got {a_min}")
    if sigma0_convention == "stddev":
        scale = sigma0**2
    elif sigma0_convention == "kernel":
        scale = sigma0
    else:
        raise FieldError(f"unknown sigma0 convention {sigma0_convention!r}")
    if a_hat_mode not in ("constant", "test2"):
        raise FieldError(f"unknown a_hat mode {a_hat_mode!r}")
    if expansion not in ("log", "linear"):
        raise FieldError(f"unknown expansion {expansion!r}")

    n1 = min(max(2, n_modes), nystrom_points)
    while True:
        factors = eigenpairs_1d(delta, n1, nystrom_points)
        lams = np.array([f.eigenvalue for f in factors])
        triples = [
            (lams[p] * lams[q] * lams[r], (p, q, r))
            for p in range(n1)
            for q in range(n1)
            for r in range(n1)
        ]
        triples.sort(key=lambda t: (-t[0], t[1]))
        if len(triples) < n_modes:
            if n1 == nystrom_points:
                raise FieldError(
                    f"cannot form {n_modes} 3D modes from {n1} 1D modes "
                    f"on a {nystrom_points}-point grid"
                )
            n1 = min(n1 * 2, nystrom_points)
            continue
        kept = triples[:n_modes]
        # Any excluded product with an index >= n1 is at most lams[n1-1]*lams[0]^2.
        best_excluded_bound = lams[n1 - 1] * lams[0] ** 2
        if kept[-1][0] >= best_excluded_bound or n1 == nystrom_points:
            break
        n1 = min(n1 * 2, nystrom_points)

    eigenvalues = np.array([scale * prod for prod, _ in kept])
    modes = tuple(m for _, m in kept)
    return KLDiffusionField(
        delta=delta,
        sigma0=sigma0,
        a_min=a_min,
        a_hat_mode=a_hat_mode,
        a_hat_value=a_hat_value,
        a_y=a_y,
        a_z=a_z,
        expansion=expansion,
        eigenvalues=eigenvalues,
        modes=modes,
        factors=tuple(factors),
    )


def anisotropy_indicator(
    field: KLDiffusionField,
    y: np.ndarray,
    probe_points: np.ndarray,
    mode_vals: np.ndarray | None = None,
) -> float:
    """Worst local anisotropy ratio of diag(a, a_y, a_z) over the probe points.

    Computable straight from the sample value, with no solve and no surrogate,
    which is what makes it usable as a grouping key from the first level on.
    """
    a_vals = field.eval_a_batch(probe_points, np.asarray(y, dtype=float)[None, :], mode_vals)[0]
    hi = np.maximum(a_vals, max(field.a_y, field.a_z))
    lo = np.minimum(a_vals, min(field.a_y, field.a_z))
    if np.any(lo <= 0):
        raise FieldError("anisotropy indicator needs strictly positive coefficients")
    return float(np.max(hi / lo))
