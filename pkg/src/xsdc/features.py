"""Learnable Nystrom feature map with a Gaussian kernel.

A layer is a set of landmark points (stored as the columns of a d x p
matrix), a bandwidth, and the whitening parameters.  The forward pass maps a
batch X to

    phi_raw = k(X, V) (k(V, V) + epsilon I)^{-1/2}

with the inverse square root computed by the fixed-length coupled Newton
iteration, followed by per-batch centering and scaling so the rows have unit
mean squared norm.  The backward pass is the exact reverse-mode sweep of that
composition; only the landmarks are treated as parameters.
"""

import hashlib

import numpy as np
from dataclasses import dataclass, field
from scipy.spatial.distance import pdist

from .errors import StaleCacheError
from .linalg import newton_inv_sqrt_cached, newton_inv_sqrt_vjp


def rbf_kernel(A, B, sigma):
    """Gaussian kernel matrix between the rows of A and the rows of B.

    K[i, j] = exp(-||A_i - B_j||^2 / (2 sigma^2))
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("rbf_kernel expects 2-d arrays")
    if A.shape[1] != B.shape[1]:
        raise ValueError(
            f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns"
        )
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_bandwidth(X, max_points=1000):
    """Median pairwise Euclidean distance over the first max_points rows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 rows to estimate a bandwidth")
    sigma = float(np.median(pdist(X[: int(max_points)])))
    if sigma <= 0:
        raise ValueError("median pairwise distance is zero (identical rows)")
    return sigma


@dataclass
class NystromLayer:
    """Parameters of the feature map.

    Attributes
    ----------
    landmarks : (d, p) array, one landmark per column
    sigma : kernel bandwidth
    epsilon : diagonal shift of the landmark Gram matrix
    newton_iters : iteration count of the inverse square root
    """

    landmarks: np.ndarray
    sigma: float
    epsilon: float = 1e-3
    newton_iters: int = 20

    def __post_init__(self):
        self.landmarks = np.asarray(self.landmarks, dtype=np.float64)
        if self.landmarks.ndim != 2 or self.landmarks.size == 0:
            raise ValueError("landmarks must be a non-empty d x p array")
        if not float(self.sigma) > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if float(self.epsilon) < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if int(self.newton_iters) < 1:
            raise ValueError("newton_iters must be at least 1")

    @property
    def dim(self):
        return self.landmarks.shape[0]

    @property
    def num_landmarks(self):
        return self.landmarks.shape[1]

    def with_landmarks(self, V):
        return NystromLayer(
            landmarks=V,
            sigma=self.sigma,
            epsilon=self.epsilon,
            newton_iters=self.newton_iters,
        )


def init_landmarks(X, num_landmarks, seed=0):
    """Draw landmarks uniformly from the rows of X and set the bandwidth.

    Sampling is without replacement by row index; rows with duplicate values
    are fine.  The bandwidth comes from ``median_bandwidth``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    n = X.shape[0]
    num_landmarks = int(num_landmarks)
    if not 1 <= num_landmarks <= n:
        raise ValueError(
            f"num_landmarks must be in [1, {n}], got {num_landmarks}"
        )
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=num_landmarks, replace=False)
    return NystromLayer(landmarks=X[idx].T.copy(), sigma=median_bandwidth(X))


def _digest(arr):
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(np.ascontiguousarray(arr).tobytes())
    return h.digest()


@dataclass
class FeatureBatch:
    """Output of a forward pass plus everything backward needs.

    The cached intermediates refer to the exact inputs seen at forward time;
    mutating the batch data or the layer landmarks afterwards makes the cache
    stale, which backward detects and rejects.
    """

    phi: np.ndarray
    normalized: bool
    scale: float
    _layer: NystromLayer = field(repr=False)
    _X: np.ndarray = field(repr=False)
    _fingerprints: tuple = field(repr=False)
    _cache: tuple = field(repr=False)


def forward(layer, X, normalize=True):
    """Map a batch of rows through the layer.

    Parameters
    ----------
    layer : NystromLayer
    X : (n, d) array
    normalize : center the columns and rescale so the mean squared row norm
        is exactly 1.  Requires n >= 2.

    Returns
    -------
    FeatureBatch with phi of shape (n, p).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    if X.shape[1] != layer.dim:
        raise ValueError(
            f"X has {X.shape[1]} columns but landmarks have {layer.dim} rows"
        )
    n = X.shape[0]
    if n == 0:
        raise ValueError("batch is empty")
    if normalize and n < 2:
        raise ValueError("normalization needs at least 2 rows")
    Vr = layer.landmarks.T
    Kx = rbf_kernel(X, Vr, layer.sigma)
    Kvv = rbf_kernel(Vr, Vr, layer.sigma)
    S, ns_cache = newton_inv_sqrt_cached(
        Kvv, layer.epsilon, layer.newton_iters, validate=False
    )
    phi_raw = Kx @ S
    if normalize:
        phi_cent = phi_raw - phi_raw.mean(axis=0)
        msq = float(np.sum(phi_cent * phi_cent)) / n
        # roundoff can leave ~1e-32 of spurious variance on a degenerate batch
        raw_msq = float(np.sum(phi_raw * phi_raw)) / n
        if msq <= 1e-24 * max(raw_msq, 1e-300):
            raise ValueError(
                "normalization scale undefined: centered features are zero"
            )
        scale = 1.0 / np.sqrt(msq)
        phi = scale * phi_cent
    else:
        phi_cent = None
        msq = None
        scale = 1.0
        phi = phi_raw
    return FeatureBatch(
        phi=phi,
        normalized=normalize,
        scale=scale,
        _layer=layer,
        _X=X,
        _fingerprints=(_digest(X), _digest(layer.landmarks)),
        _cache=(Kx, Kvv, S, ns_cache, phi_cent, msq),
    )


def backward(batch, d_phi):
    """Cotangent of the landmarks for a given cotangent of the features.

    Runs the exact reverse-mode sweep through normalization, centering, the
    unrolled Newton iteration, and both kernel blocks.  Returns a d x p
    array matching ``layer.landmarks``.
    """
    d_phi = np.asarray(d_phi, dtype=np.float64)
    if d_phi.shape != batch.phi.shape:
        raise ValueError(
            f"cotangent shape {d_phi.shape} does not match features "
            f"{batch.phi.shape}"
        )
    layer = batch._layer
    X = batch._X
    if (_digest(X), _digest(layer.landmarks)) != batch._fingerprints:
        raise StaleCacheError(
            "forward inputs were mutated after the pass; rerun forward"
        )
    Kx, Kvv, S, ns_cache, phi_cent, msq = batch._cache
    n = X.shape[0]
    if batch.normalized:
        s = batch.scale
        inner = float(np.sum(d_phi * phi_cent))
        d_cent = s * d_phi - (s**3 / n) * inner * phi_cent
        d_raw = d_cent - d_cent.mean(axis=0)
    else:
        d_raw = d_phi
    dKx = d_raw @ S.T
    dS = Kx.T @ d_raw
    dKvv = newton_inv_sqrt_vjp(ns_cache, dS)
    Vr = layer.landmarks.T
    inv_sq = 1.0 / (layer.sigma * layer.sigma)
    E1 = dKx * Kx
    dVr = inv_sq * (E1.T @ X - E1.sum(axis=0)[:, None] * Vr)
    E2 = dKvv * Kvv
    dVr += inv_sq * (E2 @ Vr - E2.sum(axis=1)[:, None] * Vr)
    dVr += inv_sq * (E2.T @ Vr - E2.sum(axis=0)[:, None] * Vr)
    return dVr.T
