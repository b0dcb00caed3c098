"""Log-Gaussian process / log-Gaussian Cox models on the unit square.

The latent field is a periodic Gaussian process on [0,2]^2 specified by a
truncated Fourier (KL) expansion with a product-form spectrum; only the
[0,1]^2 sub-domain enters the likelihood.  The parameter state is the
table of standardized complex coefficients, so the prior is i.i.d.
standard complex normal and pCN proposals leave it invariant.  Coarser
corners re-use the nested coefficient subset of the same draw.
"""
from __future__ import annotations

import numpy as np

from mismc.models.base import Model, ModelError

BETA_SMOOTH = 1.6
THETA_LGC = (0.0, 1.0, 110.339)
THETA_LGP = (0.0, 1.0, 27.585)
N_POINTS = 126

# particles-times-gridpoints budget for one FFT batch
_FFT_CHUNK_ELEMS = 2**20


class _ModeSet:
    """Fourier mode bookkeeping for one resolution pair.

    Modes live on the half-plane {k2 >= 1} union {k2 = 0, k1 >= 1} with
    |k_i| <= 2^{r_i} - 1, strictly inside the Nyquist band of the synthesis
    lattice so every (+k, -k) pair lands in a distinct FFT bin.
    """

    def __init__(self, r: tuple[int, int], theta, beta: float):
        K1 = 2 ** r[0] - 1
        K2 = 2 ** r[1] - 1
        k1_list, k2_list = [], []
        for k2 in range(0, K2 + 1):
            lo = 1 if k2 == 0 else -K1
            for k1 in range(lo, K1 + 1):
                k1_list.append(k1)
                k2_list.append(k2)
        self.r = r
        self.k1 = np.array(k1_list, dtype=np.int64)
        self.k2 = np.array(k2_list, dtype=np.int64)
        self.size = self.k1.shape[0]
        self.zeta = spectrum_amplitude(self.k1, self.k2, theta, beta)

        M1, M2 = 2 ** (r[0] + 1), 2 ** (r[1] + 1)
        self.lattice = (M1, M2)
        self.bins_plus = (self.k1 % M1) * M2 + (self.k2 % M2)
        self.bins_minus = ((-self.k1) % M1) * M2 + ((-self.k2) % M2)
        # half-spectrum layout for the real-output FFT: all modes have
        # k2 >= 0, so they map into the rfft bins directly; the k2 = 0
        # column needs its conjugate partners set explicitly because the
        # Hermitian completion only reconstructs columns k2 > 0
        self.half_bins = (self.k1 % M1) * (M2 // 2 + 1) + self.k2
        edge = self.k2 == 0
        self.half_bins_edge_conj = ((-self.k1[edge]) % M1) * (M2 // 2 + 1)
        self._edge = edge

    def subset_mask(self, r_sub: tuple[int, int]) -> np.ndarray:
        K1 = 2 ** r_sub[0] - 1
        K2 = 2 ** r_sub[1] - 1
        return (np.abs(self.k1) <= K1) & (self.k2 <= K2)


def spectrum_amplitude(k1, k2, theta, beta: float) -> np.ndarray:
    """Square root of the product-form spectral density."""
    t1, t2, t3 = theta[0], theta[1], theta[2]
    del t1
    return np.sqrt(t2) * ((t3 + k1.astype(float) ** 2) * (t3 + k2.astype(float) ** 2)) ** (
        -(beta + 1.0) / 4.0
    )


def kl_synthesize(xi: np.ndarray, modes: _ModeSet, theta) -> np.ndarray:
    """Field values on the [0,1]^2 grid including the z=1 edges.

    xi is a batch of standardized coefficients, shape (n, modes.size);
    returns (n, 2^{r1}+1, 2^{r2}+1) real values via inverse FFT on the
    period-[0,2]^2 lattice.
    """
    xi = np.atleast_2d(xi)
    n = xi.shape[0]
    M1, M2 = modes.lattice
    coeff = modes.zeta * xi
    # all modes sit in the k2 >= 0 half-spectrum, so the real-output inverse
    # FFT reconstructs the conjugate half implicitly; only the self-mapped
    # k2 = 0 column needs its conjugates written explicitly
    H = np.zeros((n, M1 * (M2 // 2 + 1)), dtype=complex)
    H[:, modes.half_bins] = coeff
    H[:, modes.half_bins_edge_conj] = np.conj(coeff[:, modes._edge])
    full = np.fft.irfft2(H.reshape(n, M1, M2 // 2 + 1), s=(M1, M2))
    g1, g2 = 2 ** modes.r[0], 2 ** modes.r[1]
    field = theta[0] + 0.5 * M1 * M2 * full[:, : g1 + 1, : g2 + 1]
    return field


def kl_synthesize_direct(xi: np.ndarray, modes: _ModeSet, theta) -> np.ndarray:
    """Brute-force evaluation of the truncated expansion (test oracle)."""
    xi = np.atleast_2d(xi)
    g1, g2 = 2 ** modes.r[0], 2 ** modes.r[1]
    z1 = np.arange(g1 + 1) / g1
    z2 = np.arange(g2 + 1) / g2
    Z1, Z2 = np.meshgrid(z1, z2, indexing="ij")
    out = np.full((xi.shape[0], g1 + 1, g2 + 1), float(theta[0]))
    for m in range(modes.size):
        phase = np.exp(1j * np.pi * (modes.k1[m] * Z1 + modes.k2[m] * Z2))
        basis = 0.5 * phase
        for i in range(xi.shape[0]):
            c = modes.zeta[m] * xi[i, m]
            out[i] += (c * basis + np.conj(c) * np.conj(basis)).real
    return out


def trapezoid_quadrature(field: np.ndarray) -> np.ndarray:
    """Trapezoidal integral of exp(field) over [0,1]^2.

    `field` includes the z=1 edges; boundary weights are 1/2 on edges and
    1/4 at corners.
    """
    field = np.asarray(field, dtype=float)
    if np.max(field) > 700.0:
        raise ModelError("field blow-up: exp overflow in quadrature")
    g1 = field.shape[-2] - 1
    g2 = field.shape[-1] - 1
    w1 = np.full(g1 + 1, 1.0 / g1)
    w1[[0, -1]] *= 0.5
    w2 = np.full(g2 + 1, 1.0 / g2)
    w2[[0, -1]] *= 0.5
    return np.einsum("...ij,i,j->...", np.exp(field), w1, w2)


class _Interpolator:
    """Bilinear interpolation from the inclusive [0,1]^2 grid at fixed points."""

    def __init__(self, r: tuple[int, int], points: np.ndarray):
        g1, g2 = 2 ** r[0], 2 ** r[1]
        i = np.minimum((points[:, 0] * g1).astype(int), g1 - 1)
        j = np.minimum((points[:, 1] * g2).astype(int), g2 - 1)
        u = points[:, 0] * g1 - i
        v = points[:, 1] * g2 - j
        ncol = g2 + 1
        self.flat_idx = np.stack(
            [
                i * ncol + j,
                (i + 1) * ncol + j,
                i * ncol + (j + 1),
                (i + 1) * ncol + (j + 1),
            ],
            axis=1,
        )
        self.weights = np.stack([(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v], axis=1)

    def __call__(self, field: np.ndarray) -> np.ndarray:
        flat = field.reshape(field.shape[0], -1)
        return np.einsum("npc,pc->np", flat[:, self.flat_idx], self.weights)


class LogGaussianModel(Model):
    """LGC/LGP point-pattern inverse problem with a KL-expansion prior."""

    dim_D = 2
    base_offset = (5, 5)
    mutation_kind = "pcn"

    def __init__(
        self,
        variant: str = "lgc",
        points: np.ndarray | None = None,
        theta=None,
        beta: float = BETA_SMOOTH,
    ):
        if variant not in ("lgc", "lgp"):
            raise ValueError(f"unknown variant: {variant}")
        self.variant = variant
        self.theta = tuple(theta) if theta is not None else (
            THETA_LGC if variant == "lgc" else THETA_LGP
        )
        self.beta = float(beta)
        self.points = (
            np.asarray(points, dtype=float) if points is not None else generate_points()
        )
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("point pattern must be (n, 2)")
        if np.any(self.points < 0) or np.any(self.points > 1):
            raise ValueError("data points must lie in the unit square")
        self.n_data = self.points.shape[0]
        self._modes: dict[tuple[int, int], _ModeSet] = {}
        self._interp: dict[tuple[int, int], _Interpolator] = {}

    def modes(self, r: tuple[int, int]) -> _ModeSet:
        if r not in self._modes:
            self._modes[r] = _ModeSet(r, self.theta, self.beta)
        return self._modes[r]

    def _interpolator(self, r: tuple[int, int]) -> _Interpolator:
        if r not in self._interp:
            self._interp[r] = _Interpolator(r, self.points)
        return self._interp[r]

    def _evaluate(self, r: tuple[int, int], xi: np.ndarray):
        """(sum of interpolated field at data points, quadrature of exp)."""
        modes = self.modes(r)
        interp = self._interpolator(r)
        xi = np.atleast_2d(xi)
        n = xi.shape[0]
        grid_elems = (2 ** r[0] + 1) * (2 ** r[1] + 1)
        chunk = max(1, _FFT_CHUNK_ELEMS // max(grid_elems, 1))
        sums = np.empty(n)
        quads = np.empty(n)
        for lo in range(0, n, chunk):
            hi = min(n, lo + chunk)
            field = kl_synthesize(xi[lo:hi], modes, self.theta)
            sums[lo:hi] = interp(field).sum(axis=1)
            quads[lo:hi] = trapezoid_quadrature(field)
        return sums, quads

    # -- Model interface ---------------------------------------------------
    def prior_sample(self, alpha, rng, n):
        # complex64 state: the fine-index coefficient tables are large and a
        # float32 perturbation of a prior draw is still a valid prior draw
        m = self.modes(self.resolution(alpha)).size
        re = rng.standard_normal((n, m), dtype=np.float32)
        im = rng.standard_normal((n, m), dtype=np.float32)
        return np.float32(np.sqrt(0.5)) * (re + 1j * im)

    def suggested_batch(self, alpha):
        m = self.modes(self.resolution(alpha)).size
        return max(1, 2**22 // m)

    def prior_log_density(self, alpha, X):
        X = np.atleast_2d(X)
        return -np.sum(np.abs(X) ** 2, axis=1)

    def restrict_state(self, alpha, corner, X):
        if corner == alpha:
            return X
        mask = self.modes(self.resolution(alpha)).subset_mask(self.resolution(corner))
        return np.atleast_2d(X)[:, mask]

    def log_likelihood(self, alpha, X):
        r = self.resolution(alpha)
        sums, quads = self._evaluate(r, X)
        if self.variant == "lgc":
            return sums - quads
        return sums - self.n_data * np.log(quads)

    def qoi(self, alpha, X):
        _, quads = self._evaluate(self.resolution(alpha), X)
        return quads

    def cost(self, alpha):
        r = self.resolution(alpha)
        return float((r[0] + r[1]) * 2.0 ** (r[0] + r[1]))


_DEFAULT_POINTS_CACHE: dict[tuple, np.ndarray] = {}


def generate_points(
    n: int = N_POINTS,
    resolution: tuple[int, int] = (8, 8),
    theta=THETA_LGC,
    beta: float = BETA_SMOOTH,
    seed: int = 3003,
) -> np.ndarray:
    """Synthetic point pattern from a fixed-seed prior intensity draw.

    A latent field is drawn from the prior on a fine grid and n locations
    are sampled with probability proportional to exp(field), uniformly
    jittered within their grid cell.
    """
    key = (n, resolution, tuple(theta), beta, seed)
    if key in _DEFAULT_POINTS_CACHE:
        return _DEFAULT_POINTS_CACHE[key].copy()
    rng = np.random.default_rng(seed)
    modes = _ModeSet(resolution, theta, beta)
    xi = np.sqrt(0.5) * (
        rng.standard_normal((1, modes.size)) + 1j * rng.standard_normal((1, modes.size))
    )
    field = kl_synthesize(xi, modes, theta)[0]
    g1, g2 = 2 ** resolution[0], 2 ** resolution[1]
    cell_rates = np.exp(field[:g1, :g2]).reshape(-1)
    probs = cell_rates / cell_rates.sum()
    cells = rng.choice(probs.shape[0], size=n, p=probs)
    ci, cj = np.divmod(cells, g2)
    pts = np.stack(
        [(ci + rng.random(n)) / g1, (cj + rng.random(n)) / g2],
        axis=1,
    )
    _DEFAULT_POINTS_CACHE[key] = pts
    return pts.copy()
