"""Trilinear finite elements for anisotropic diffusion on the unit cube.

-div(A grad u) = f on [0, 1]^3 with homogeneous Dirichlet boundary and
A = diag(a(x, y), a_y, a_z).  The mesh is a uniform hexahedral grid with m
cells per direction; boundary nodes are eliminated, leaving (m-1)^3 unknowns.
Element integrals use 2x2x2 Gauss quadrature, which is exact for the
trilinear products involved, and the first diffusion coefficient is sampled
at the quadrature points, so lane matrices differ only through a(x, y).

Assembly is ensemble-first: one shared 27-point CSR graph is built per mesh
and reused; per-lane values are accumulated into it, so two identical samples
produce bit-identical lane matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleCsrMatrix
from .random_field import KLDiffusionField

__all__ = ["FemError", "StructuredMesh", "AssembledEnsembleSystem", "assemble", "qoi"]

_GAUSS = 1.0 / np.sqrt(3.0)


class FemError(ValueError):
    """Invalid mesh or assembly input."""


def _shape_data() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trilinear shape values and reference gradients at the 8 Gauss points.

    Corner a and quadrature point q are both ordered by bits (x, y, z), z
    fastest; returns (phi (8q, 8a), dphi (3, 8q, 8a), ref coords (8q, 3)).
    """
    corners = np.array([[dx, dy, dz] for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)])
    signs = 2.0 * corners - 1.0  # corner position in reference coords {-1, +1}
    qpts = signs * _GAUSS  # 2x2x2 Gauss points, same bit order
    phi = np.empty((8, 8))
    dphi = np.empty((3, 8, 8))
    for q in range(8):
        xi = qpts[q]
        one = 1.0 + signs * xi  # (8 corners, 3 dims)
        phi[q] = one.prod(axis=1) / 8.0
        for d in range(3):
            rest = one[:, [i for i in range(3) if i != d]].prod(axis=1)
            dphi[d, q] = signs[:, d] * rest / 8.0
    return phi, dphi, qpts


_PHI, _DPHI, _QREF = _shape_data()


@dataclass
class StructuredMesh:
    """Uniform hex mesh of the unit cube with interior-node numbering.

    Degrees of freedom are the interior nodes numbered lexicographically with
    z fastest; all per-mesh geometry (element connectivity, the shared CSR
    graph, scatter slots and quadrature coordinates) is precomputed once.
    """

    cells: int
    quadrature: str = "gauss2"

    def __post_init__(self) -> None:
        if self.cells < 2:
            raise FemError(f"need at least 2 cells per direction, got {self.cells}")
        if self.quadrature != "gauss2":
            raise FemError(f"unsupported quadrature {self.quadrature!r}")
        m = self.cells
        self.h = 1.0 / m
        self.n_dofs = (m - 1) ** 3

        # Node ids (z fastest) and the interior-dof map.
        node_ids = np.arange((m + 1) ** 3).reshape(m + 1, m + 1, m + 1)
        dof = -np.ones((m + 1) ** 3, dtype=np.int64)
        interior = node_ids[1:m, 1:m, 1:m].ravel()
        dof[interior] = np.arange(self.n_dofs)

        # Element -> corner-node connectivity, corners bit-ordered like _PHI.
        ex, ey, ez = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
        elems = np.stack([ex.ravel(), ey.ravel(), ez.ravel()], axis=1)  # (E, 3)
        corners = np.array([[dx, dy, dz] for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)])
        conn = np.empty((len(elems), 8), dtype=np.int64)
        for a, c in enumerate(corners):
            conn[:, a] = node_ids[elems[:, 0] + c[0], elems[:, 1] + c[1], elems[:, 2] + c[2]]
        self.element_dofs = dof[conn]  # (E, 8), -1 on the boundary

        # Physical quadrature coordinates, flattened (E*8, 3), q fastest per element.
        centers = (elems + 0.5) * self.h  # (E, 3)
        self.quad_points = (centers[:, None, :] + _QREF[None, :, :] * (self.h / 2.0)).reshape(-1, 3)

        # Shared CSR graph over interior-interior corner pairs.
        rows = np.repeat(self.element_dofs, 8, axis=1).ravel()  # pair (a, b), a-major
        cols = np.tile(self.element_dofs, (1, 8)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        keys = rows[keep] * self.n_dofs + cols[keep]
        unique_keys, slots = np.unique(keys, return_inverse=True)
        self._keep = keep
        self._slots = slots
        self.nnz = len(unique_keys)
        self.col_indices = (unique_keys % self.n_dofs).astype(np.int32)
        counts = np.bincount(unique_keys // self.n_dofs, minlength=self.n_dofs)
        self.row_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

        # Reference element matrices per quadrature point and direction:
        # grad phi_a . e_d  grad phi_b . e_d  scaled by (2/h)^2 det(J) w_q = h/2.
        self._elem_mats = _DPHI[:, :, :, None] * _DPHI[:, :, None, :] * (self.h / 2.0)  # (3,8q,8a,8b)
        # Unit load vector contribution per corner: int phi_a over the element.
        self._load = np.full(8, self.h**3 / 8.0)

    def interior_node_coords(self) -> np.ndarray:
        """Coordinates of the dofs in dof order, shape (n_dofs, 3)."""
        m = self.cells
        axis = np.arange(1, m) * self.h
        gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def center_dof(self) -> int:
        """Dof index of the node nearest the cube centre (exact for even m)."""
        coords = self.interior_node_coords()
        return int(np.argmin(((coords - 0.5) ** 2).sum(axis=1)))


@dataclass
class AssembledEnsembleSystem:
    """Shared-graph ensemble stiffness matrix plus per-lane right-hand sides."""

    matrix: EnsembleCsrMatrix
    rhs: np.ndarray  # (S, n_dofs)
    samples: np.ndarray  # (S, N) lane sample values, replicas included


def assemble(
    mesh: StructuredMesh,
    field: KLDiffusionField,
    samples: np.ndarray,
    mode_vals: np.ndarray | None = None,
) -> AssembledEnsembleSystem:
    """Assemble the width-S ensemble system for the given sample rows.

    `mode_vals` may carry `field.mode_values(mesh.quad_points)` precomputed
    once per (field, mesh) pair; lane matrices depend on their own sample
    only, so duplicated samples yield bit-identical lanes.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    S = len(samples)
    a_vals = field.eval_a_batch(mesh.quad_points, samples, mode_vals)  # (S, E*8)
    if np.any(a_vals <= 0) or field.a_y <= 0 or field.a_z <= 0:
        raise FemError("non-positive diffusion coefficient at a quadrature point")
    n_elem = len(mesh.element_dofs)
    a_vals = a_vals.reshape(S, n_elem, 8)

    # K_e(lane) = sum_q a(x_q) Dx_q + a_y * sum_q Dy_q + a_z * sum_q Dz_q
    k_x = np.einsum("seq,qab->seab", a_vals, mesh._elem_mats[0])
    k_yz = field.a_y * mesh._elem_mats[1].sum(axis=0) + field.a_z * mesh._elem_mats[2].sum(axis=0)
    k_all = (k_x + k_yz).reshape(S, -1)  # (S, E*64), pair order matches mesh slots

    values = np.empty((S, mesh.nnz))
    for s in range(S):
        values[s] = np.bincount(mesh._slots, weights=k_all[s][mesh._keep], minlength=mesh.nnz)
    matrix = EnsembleCsrMatrix(mesh.row_offsets, mesh.col_indices, values)

    nodes = mesh.element_dofs.ravel()
    keep = nodes >= 0
    load = np.bincount(
        nodes[keep], weights=np.broadcast_to(mesh._load, (n_elem, 8)).ravel()[keep],
        minlength=mesh.n_dofs,
    )
    rhs = np.tile(load, (S, 1))
    return AssembledEnsembleSystem(matrix=matrix, rhs=rhs, samples=samples.copy())


def qoi(u: np.ndarray) -> float:
    """Quantity of interest of one lane solution: squared l2 norm of the dofs."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise FemError(f"qoi expects a single lane vector, got shape {u.shape}")
    return float(np.dot(u, u))
