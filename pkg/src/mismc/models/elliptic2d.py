"""2D elliptic inverse problem with a two-parameter random diffusion field.

-div(a(x) grad u) = 100 on the unit square, zero Dirichlet boundary,
a(x)(z) = 3 + x1 cos(3 z1) sin(3 z2) + x2 cos(z1) sin(z2), prior U[-1,1]^2.
Bilinear elements on a 2^r1 x 2^r2 tensor grid (index offset +2 per axis so
the coarsest mesh resolves the observation points).  Since a is affine in
x, the stiffness matrix is a fixed combination of three precomputed
matrices; solves use batched dense LU on coarse meshes and the CG kernel on
fine ones.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from mismc._kernels import csr_cg
from mismc.models.base import Model, ModelError, gaussian_log_likelihood
from mismc.multiindex import MultiIndex

OBS_POINTS = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
NOISE_SD = 0.5
TRUTH = np.array([-0.4836, -0.5806])
FORCING = 100.0

_G1 = lambda z1, z2: np.cos(3.0 * z1) * np.sin(3.0 * z2)  # noqa: E731
_G2 = lambda z1, z2: np.cos(z1) * np.sin(z2)  # noqa: E731

# batched dense solves are faster than per-particle CG below this system size
DENSE_LIMIT = 64


def _gauss_points(order: int = 3):
    pts, wts = np.polynomial.legendre.leggauss(order)
    return 0.5 * (pts + 1.0), 0.5 * wts  # mapped to [0, 1]


def _reference_gradients(h1: float, h2: float, order: int = 3):
    """Per-quadrature-point 4x4 grad-grad matrices for a bilinear cell.

    Local node order: (0,0), (1,0), (0,1), (1,1) in (z1, z2).
    Returns (quad coords in the unit cell, weights, stacked matrices).
    """
    p, w = _gauss_points(order)
    qs, gmats, wts = [], [], []
    for i, (u, wu) in enumerate(zip(p, w)):
        for j, (v, wv) in enumerate(zip(p, w)):
            # gradients of the four bilinear shape functions at (u, v)
            dphi = np.array(
                [
                    [-(1 - v) / h1, -(1 - u) / h2],
                    [(1 - v) / h1, -u / h2],
                    [-v / h1, (1 - u) / h2],
                    [v / h1, u / h2],
                ]
            )
            gmats.append((dphi @ dphi.T) * (wu * wv * h1 * h2))
            qs.append((u, v))
            wts.append(wu * wv)
    return np.array(qs), np.array(wts), np.stack(gmats)


def _shape_values(u: float, v: float) -> np.ndarray:
    return np.array([(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v])


class _Discretization:
    """Cached matrices and vectors for one resolution pair."""

    def __init__(self, r1: int, r2: int, quad_order: int = 3):
        n1, n2 = 2**r1, 2**r2
        h1, h2 = 1.0 / n1, 1.0 / n2
        self.r = (r1, r2)
        self.shape_interior = (n1 - 1, n2 - 1)
        self.n_dof = (n1 - 1) * (n2 - 1)

        qs, qw, gmats = _reference_gradients(h1, h2, quad_order)
        # physical quadrature coordinates for every cell and quad point
        c1, c2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
        cell_z1 = (c1.reshape(-1, 1) + qs[:, 0]) * h1  # (ncell, nq)
        cell_z2 = (c2.reshape(-1, 1) + qs[:, 1]) * h2

        def interior_id(i, j):
            # global interior numbering; -1 marks boundary nodes
            inside = (i >= 1) & (i <= n1 - 1) & (j >= 1) & (j <= n2 - 1)
            return np.where(inside, (i - 1) * (n2 - 1) + (j - 1), -1)

        li = c1.reshape(-1)
        lj = c2.reshape(-1)
        local_nodes = np.stack(
            [
                interior_id(li, lj),
                interior_id(li + 1, lj),
                interior_id(li, lj + 1),
                interior_id(li + 1, lj + 1),
            ],
            axis=1,
        )  # (ncell, 4)

        rows = np.repeat(local_nodes, 4, axis=1)          # (ncell, 16)
        cols = np.tile(local_nodes, (1, 4))

        def assemble(weight_fn):
            wvals = weight_fn(cell_z1, cell_z2) if weight_fn else np.ones_like(cell_z1)
            emats = np.einsum("cq,qij->cij", wvals, gmats).reshape(-1, 16)
            keep = (rows >= 0) & (cols >= 0)
            mat = sp.coo_matrix(
                (emats[keep], (rows[keep], cols[keep])),
                shape=(self.n_dof, self.n_dof),
            ).tocsr()
            mat.sum_duplicates()
            return mat

        self.K_const = assemble(None)
        self.K_g1 = assemble(_G1)
        self.K_g2 = assemble(_G2)
        if not (
            np.array_equal(self.K_const.indptr, self.K_g1.indptr)
            and np.array_equal(self.K_const.indices, self.K_g1.indices)
            and np.array_equal(self.K_const.indptr, self.K_g2.indptr)
            and np.array_equal(self.K_const.indices, self.K_g2.indices)
        ):
            raise ModelError("stiffness matrices lost their shared sparsity")

        # load vector: forcing times shape functions, same quadrature
        load = np.zeros(self.n_dof)
        svals = np.stack([_shape_values(u, v) for (u, v) in qs])  # (nq, 4)
        contrib = FORCING * h1 * h2 * (qw @ svals)  # (4,) identical cells
        for loc in range(4):
            ids = local_nodes[:, loc]
            np.add.at(load, ids[ids >= 0], contrib[loc])
        self.load = load

        self.dense = None
        if self.n_dof <= DENSE_LIMIT:
            self.dense = (
                self.K_const.toarray(),
                self.K_g1.toarray(),
                self.K_g2.toarray(),
            )

        # bilinear interpolation of interior nodal values at the obs points
        self._obs_idx, self._obs_wts = self._interp_operator(OBS_POINTS)

    def _interp_operator(self, points: np.ndarray):
        n1, n2 = self.shape_interior[0] + 1, self.shape_interior[1] + 1
        h1, h2 = 1.0 / n1, 1.0 / n2
        idx_rows, wt_rows = [], []
        for z1, z2 in points:
            i = min(int(z1 / h1), n1 - 1)
            j = min(int(z2 / h2), n2 - 1)
            u = z1 / h1 - i
            v = z2 / h2 - j
            ids, wts = [], []
            for di, dj, w in (
                (0, 0, (1 - u) * (1 - v)),
                (1, 0, u * (1 - v)),
                (0, 1, (1 - u) * v),
                (1, 1, u * v),
            ):
                gi, gj = i + di, j + dj
                if 1 <= gi <= n1 - 1 and 1 <= gj <= n2 - 1:
                    ids.append((gi - 1) * (n2 - 1) + (gj - 1))
                    wts.append(w)
                # boundary nodes carry value zero: drop the term
            idx_rows.append(np.array(ids, dtype=np.intp))
            wt_rows.append(np.array(wts))
        return idx_rows, wt_rows

    def observe(self, solutions: np.ndarray) -> np.ndarray:
        """(n, n_dof) solutions -> (n, n_obs) observation values."""
        out = np.empty((solutions.shape[0], len(self._obs_idx)))
        for m, (ids, wts) in enumerate(zip(self._obs_idx, self._obs_wts)):
            out[:, m] = solutions[:, ids] @ wts
        return out


def fem2d_assemble(x: np.ndarray, r: tuple[int, int], quad_order: int = 3):
    """Assembled SPD system (CSR matrix, load vector) at resolution exponents r."""
    disc = _Discretization(r[0], r[1], quad_order)
    mat = disc.K_const.copy()
    mat.data = 3.0 * disc.K_const.data + x[0] * disc.K_g1.data + x[1] * disc.K_g2.data
    return mat, disc.load


def fem2d_solve(matrix: sp.csr_matrix, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Conjugate-gradient solve of an assembled system."""
    maxiter = 10 * matrix.shape[0]
    x, _, converged = csr_cg(
        matrix.indptr.astype(np.int32),
        matrix.indices.astype(np.int32),
        matrix.data.astype(np.float64),
        np.asarray(rhs, dtype=np.float64),
        rtol,
        maxiter,
    )
    if not converged:
        raise ModelError(f"CG failed to converge within {maxiter} iterations")
    return x


class Elliptic2DModel(Model):
    """Two-parameter diffusion-coefficient inverse problem."""

    dim_D = 2
    base_offset = (2, 2)
    mutation_kind = "rwmh"

    def __init__(self, y: np.ndarray | None = None, noise_sd: float = NOISE_SD):
        self.y = np.asarray(y, dtype=float) if y is not None else generate_observations()
        if self.y.shape != (len(OBS_POINTS),):
            raise ValueError("expected one observation per observation point")
        self.noise_sd = float(noise_sd)
        self._disc: dict[tuple[int, int], _Discretization] = {}

    def discretization(self, r: tuple[int, int]) -> _Discretization:
        if r not in self._disc:
            self._disc[r] = _Discretization(*r)
        return self._disc[r]

    def solve_batch(self, r: tuple[int, int], X: np.ndarray) -> np.ndarray:
        """PDE solutions for every parameter row of X, shape (n, n_dof)."""
        disc = self.discretization(r)
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        if disc.dense is not None:
            K0, K1, K2 = disc.dense
            out = np.empty((n, disc.n_dof))
            chunk = max(1, int(2**24 // max(disc.n_dof**2, 1)))
            for lo in range(0, n, chunk):
                hi = min(n, lo + chunk)
                A = (
                    3.0 * K0[None]
                    + X[lo:hi, 0, None, None] * K1[None]
                    + X[lo:hi, 1, None, None] * K2[None]
                )
                rhs = np.broadcast_to(disc.load[:, None], (hi - lo, disc.n_dof, 1))
                out[lo:hi] = np.linalg.solve(A, rhs)[..., 0]
            return out
        indptr = disc.K_const.indptr.astype(np.int32)
        indices = disc.K_const.indices.astype(np.int32)
        out = np.empty((n, disc.n_dof))
        maxiter = 10 * disc.n_dof
        for i in range(n):
            data = 3.0 * disc.K_const.data + X[i, 0] * disc.K_g1.data + X[i, 1] * disc.K_g2.data
            sol, _, converged = csr_cg(indptr, indices, data, disc.load, 1e-10, maxiter)
            if not converged:
                raise ModelError(f"CG failed to converge at resolution {r}")
            out[i] = sol
        return out

    def predicted(self, alpha: MultiIndex, X: np.ndarray) -> np.ndarray:
        r = self.resolution(alpha)
        disc = self.discretization(r)
        return disc.observe(self.solve_batch(r, np.atleast_2d(X)))

    # -- Model interface ---------------------------------------------------
    def prior_sample(self, alpha, rng, n):
        return rng.uniform(-1.0, 1.0, size=(n, 2))

    def prior_log_density(self, alpha, X):
        X = np.atleast_2d(X)
        inside = np.all(np.abs(X) <= 1.0, axis=1)
        return np.where(inside, 0.0, -np.inf)

    def log_likelihood(self, alpha, X):
        return gaussian_log_likelihood(self.predicted(alpha, X), self.y, self.noise_sd)

    def qoi(self, alpha, X):
        X = np.atleast_2d(X)
        return X[:, 0] ** 2 + X[:, 1] ** 2

    def cost(self, alpha):
        r = self.resolution(alpha)
        return float(2.0 ** (r[0] + r[1]))


_DEFAULT_OBS_CACHE: dict[tuple, np.ndarray] = {}


def generate_observations(
    truth: np.ndarray = TRUTH,
    noise_sd: float = NOISE_SD,
    resolution: tuple[int, int] = (8, 8),
    seed: int = 2002,
) -> np.ndarray:
    """Synthetic observations from a fine-mesh solve plus seeded noise."""
    key = (tuple(np.asarray(truth).tolist()), noise_sd, resolution, seed)
    if key in _DEFAULT_OBS_CACHE:
        return _DEFAULT_OBS_CACHE[key].copy()
    rng = np.random.default_rng(seed)
    disc = _Discretization(*resolution)
    mat = disc.K_const.copy()
    mat.data = 3.0 * disc.K_const.data + truth[0] * disc.K_g1.data + truth[1] * disc.K_g2.data
    sol = sp.linalg.spsolve(mat.tocsc(), disc.load)
    clean = disc.observe(sol[None, :])[0]
    y = clean + noise_sd * rng.standard_normal(clean.shape)
    _DEFAULT_OBS_CACHE[key] = y
    return y.copy()
