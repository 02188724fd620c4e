import numpy as np
from scipy import linalg

from .exceptions import SingularDesign

SINGULAR_RTOL = 1e-8


def gram(A):
    n = A.shape[0]
    return A.T @ A / n


def solve_normal_equations(A, b, rtol=SINGULAR_RTOL):
    """Least squares via the normal equations E_n[A A'] c = E_n[A b].

    The Gram matrix is eigendecomposed first so that a rank-deficient design
    is reported (``SingularDesign``) rather than silently regularised.

    Returns
    -------
    coef : ndarray
    min_eigenvalue : float
        Smallest eigenvalue of ``E_n[A A']``.
    """
    n = A.shape[0]
    if n == 0:
        raise SingularDesign(0.0, 0.0, rtol)
    G = gram(A)
    rhs = A.T @ b / n
    evals, evecs = linalg.eigh(G)
    trace = float(np.trace(G))
    lam_min = float(evals[0])
    if not lam_min >= rtol * trace or trace <= 0:
        raise SingularDesign(lam_min, trace, rtol)
    coef = evecs @ ((evecs.T @ rhs) / evals)
    # one step of iterative refinement keeps the score residual near eps
    coef = coef + evecs @ ((evecs.T @ (rhs - G @ coef)) / evals)
    return coef, lam_min


def normal_equation_residual(A, b, coef):
    """Norm of E_n[A (b - A coef)]."""
    if A.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(A.T @ (b - A @ coef) / A.shape[0]))
