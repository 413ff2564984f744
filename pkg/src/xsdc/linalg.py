"""Dense linear algebra kernels shared by the rest of the package.

Everything operates on float64 numpy arrays with observations in rows.  The
row-centering projector is never materialized; ``center_rows`` realizes its
action by broadcast subtraction, which keeps every consumer O(n d) instead of
O(n^2).
"""

import numpy as np
from dataclasses import dataclass
from scipy.linalg import cho_factor, cho_solve


def _as_matrix(X, name):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={X.ndim}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {X.shape}")
    return X


def center_rows(X):
    """Subtract the per-column mean from every row.

    Applying the operation twice gives the same result as applying it once;
    the column means of the output are zero to machine precision.
    """
    X = _as_matrix(X, "X")
    return X - X.mean(axis=0)


@dataclass
class RidgeSolution:
    """Closed-form multi-output ridge fit.

    Attributes
    ----------
    weights : (D, k) array
    intercept : (k,) array
    objective_value : float
        Attained minimum of the centered ridge objective.
    lam : float
        Regularization strength the fit was computed with.
    """

    weights: np.ndarray
    intercept: np.ndarray
    objective_value: float
    lam: float

    def predict(self, phi):
        """Affine scores phi @ weights + intercept for feature rows phi."""
        phi = _as_matrix(phi, "phi")
        if phi.shape[1] != self.weights.shape[0]:
            raise ValueError(
                f"feature dimension {phi.shape[1]} does not match "
                f"weights {self.weights.shape[0]}"
            )
        return phi @ self.weights + self.intercept


def _check_lam(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"lam must be positive and finite, got {lam}")
    return lam


def ridge_solve(phi, Y, lam):
    """Solve the bias-included multi-output ridge problem in closed form.

    Minimizes (1/n) ||Y - phi W - 1 b^T||_F^2 + lam ||W||_F^2 over W and b.
    Eliminating b centers both phi and Y, so

        W = (phi_c^T phi_c + n lam I)^{-1} phi_c^T Y_c,
        b = mean(Y) - W^T mean(phi).

    Parameters
    ----------
    phi : (n, D) array of feature rows
    Y : (n, k) array of targets
    lam : positive ridge strength

    Returns
    -------
    RidgeSolution
    """
    phi = _as_matrix(phi, "phi")
    Y = _as_matrix(Y, "Y")
    lam = _check_lam(lam)
    n, D = phi.shape
    if Y.shape[0] != n:
        raise ValueError(f"phi has {n} rows but Y has {Y.shape[0]}")
    phi_c = phi - phi.mean(axis=0)
    Y_c = Y - Y.mean(axis=0)
    C = phi_c.T @ phi_c + n * lam * np.eye(D)
    W = cho_solve(cho_factor(C), phi_c.T @ Y_c)
    b = Y.mean(axis=0) - W.T @ phi.mean(axis=0)
    resid = Y_c - phi_c @ W
    objective = float(np.sum(resid * resid) / n + lam * np.sum(W * W))
    return RidgeSolution(weights=W, intercept=b, objective_value=objective, lam=lam)


def ridge_kernel(phi, lam):
    """Kernel-like coupling matrix of the bias-eliminated ridge problem.

    Returns A = P (P phi phi^T P + n lam I)^{-1} P where P is the
    row-centering projector.  Pairing A with a label-agreement matrix M gives
    the attained ridge objective: lam * tr(M A) equals the minimum of the
    ridge problem with targets whose Gram matrix is M.

    The solve is done by Cholesky factorization against the centered identity
    columns; the result is symmetrized to remove factorization roundoff.
    A is positive semidefinite with spectral norm at most 1 / (n lam).
    """
    phi = _as_matrix(phi, "phi")
    lam = _check_lam(lam)
    n = phi.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 rows to center, got {n}")
    phi_c = phi - phi.mean(axis=0)
    C = phi_c @ phi_c.T + n * lam * np.eye(n)
    proj = center_rows(np.eye(n))
    A = center_rows(cho_solve(cho_factor(C), proj))
    return 0.5 * (A + A.T)


def _check_square_symmetric(K, tol=1e-10):
    K = _as_matrix(K, "K")
    if K.shape[0] != K.shape[1]:
        raise ValueError(f"matrix must be square, got shape {K.shape}")
    asym = float(np.max(np.abs(K - K.T))) if K.size else 0.0
    if asym > tol:
        raise ValueError(f"matrix asymmetry {asym:.3e} exceeds {tol:.0e}")
    return K


def newton_inv_sqrt(K, epsilon=1e-3, iters=20):
    """Inverse square root of K + epsilon I by coupled Newton iterations.

    The input is shifted, symmetrized, and scaled by its trace so the
    iteration contracts; the fixed iteration count makes the map a fixed
    composition of matrix products, which is what the feature-map backward
    pass differentiates through.

    Parameters
    ----------
    K : (p, p) symmetric positive semidefinite array
    epsilon : nonnegative diagonal shift (with PSD K it keeps the shifted
        matrix positive definite)
    iters : number of coupled iterations

    Returns
    -------
    (p, p) array S with S (K + epsilon I) S close to the identity.
    """
    S, _ = newton_inv_sqrt_cached(K, epsilon, iters, validate=True)
    return S


def newton_inv_sqrt_cached(K, epsilon=1e-3, iters=20, validate=True):
    """Like newton_inv_sqrt but also returns the per-iteration states.

    The cache is consumed by ``newton_inv_sqrt_vjp`` to run the exact
    reverse-mode sweep of the unrolled iteration.
    """
    if validate:
        K = _check_square_symmetric(K)
    else:
        K = np.asarray(K, dtype=np.float64)
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    iters = int(iters)
    if iters < 1:
        raise ValueError(f"iters must be at least 1, got {iters}")
    p = K.shape[0]
    T = 0.5 * (K + K.T) + epsilon * np.eye(p)
    if validate:
        min_eig = float(np.linalg.eigvalsh(T).min())
        if min_eig < -1e-10:
            raise ValueError(
                f"matrix must be positive semidefinite, min eigenvalue {min_eig:.3e}"
            )
    nu = float(np.trace(T))
    if nu <= 0:
        raise ValueError(f"trace of shifted matrix must be positive, got {nu}")
    Y = T / nu
    Z = np.eye(p)
    Ys, Zs, Ws = [], [], []
    for _ in range(iters):
        W = 0.5 * (Z @ Y)
        Ys.append(Y)
        Zs.append(Z)
        Ws.append(W)
        Y = 1.5 * Y - Y @ W
        Z = 1.5 * Z - W @ Z
    S = Z / np.sqrt(nu)
    cache = (T, nu, Ys, Zs, Ws, Z)
    return S, cache


def newton_inv_sqrt_vjp(cache, dS):
    """Reverse-mode sweep of the unrolled coupled Newton iteration.

    Given the cotangent dS of the output, returns the cotangent of the input
    matrix K (the epsilon shift and the trace normalization are part of the
    differentiated graph).
    """
    T, nu, Ys, Zs, Ws, Z_final = cache
    dS = np.asarray(dS, dtype=np.float64)
    sqrt_nu = np.sqrt(nu)
    dZ = dS / sqrt_nu
    dnu = -0.5 * float(np.sum(dS * Z_final)) / (nu * sqrt_nu)
    dY = np.zeros_like(dZ)
    for Y0, Z0, W in zip(reversed(Ys), reversed(Zs), reversed(Ws)):
        dY0 = 1.5 * dY - dY @ W.T
        dW = -(Y0.T @ dY) - dZ @ Z0.T
        dZ0 = 1.5 * dZ - W.T @ dZ
        dZ0 += 0.5 * dW @ Y0.T
        dY0 += 0.5 * Z0.T @ dW
        dY, dZ = dY0, dZ0
    dT = dY / nu
    dnu += -float(np.sum(dY * T)) / (nu * nu)
    dT = dT + dnu * np.eye(T.shape[0])
    return 0.5 * (dT + dT.T)
