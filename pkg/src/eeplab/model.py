"""Market model: validated parameters and exact lognormal stepping.

Assets follow correlated geometric Brownian motion under the risk-neutral
measure, with constant rate ``r``, per-asset dividend yields ``d`` and
covariance matrix ``a``. The volatility matrix is normalized to the
symmetric square root of ``a`` (distributions depend on ``a`` only, so this
is a convention, not a modeling choice).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefiniteError, ValidationError

_SQRT_RTOL = 1e-10
_EIG_TOL_FACTOR = 1e-12


def symmetric_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric positive definite matrix.

    Spectral decomposition with square-rooted eigenvalues; the result ``m``
    is symmetric and satisfies ``m @ m == a`` to relative Frobenius error
    below 1e-10.

    Raises
    ------
    ValidationError
        If ``a`` is not symmetric.
    NotPositiveDefiniteError
        If any eigenvalue is below ``1e-12 * trace(a)``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValidationError("matrix is not symmetric")
    evals, evecs = np.linalg.eigh(a)
    tol = _EIG_TOL_FACTOR * float(np.trace(a))
    if np.any(evals <= tol):
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: min eigenvalue {evals.min():.3e} "
            f"<= tolerance {tol:.3e}"
        )
    m = (evecs * np.sqrt(evals)) @ evecs.T
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class ModelParams:
    """Immutable market parameters for ``n`` dividend-paying assets.

    Attributes
    ----------
    r : float
        Risk-free rate (1/year, >= 0).
    d : ndarray, shape (n,)
        Dividend yields (1/year, each >= 0).
    a : ndarray, shape (n, n)
        Covariance matrix of log-returns (1/year); symmetric positive definite.
    T : float
        Maturity in years (> 0).
    sigma : ndarray, shape (n, n)
        Symmetric square root of ``a`` (computed unless supplied).
    """

    r: float
    d: np.ndarray
    a: np.ndarray
    T: float
    sigma: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        r = float(self.r)
        T = float(self.T)
        d = np.atleast_1d(np.asarray(self.d, dtype=np.float64)).copy()
        a = np.asarray(self.a, dtype=np.float64).copy()
        if r < 0.0:
            raise ValidationError(f"r must be >= 0, got {r}")
        if T <= 0.0:
            raise ValidationError(f"T must be > 0, got {T}")
        if np.any(d < 0.0):
            raise ValidationError(f"dividend yields must be >= 0, got {d}")
        n = d.shape[0]
        if a.shape != (n, n):
            raise ValidationError(f"covariance shape {a.shape} does not match n={n}")
        if self.sigma is None:
            sigma = symmetric_sqrt(a)
        else:
            sigma = np.asarray(self.sigma, dtype=np.float64).copy()
            if sigma.shape != (n, n):
                raise ValidationError(f"sigma shape {sigma.shape} does not match n={n}")
            if not np.allclose(sigma, sigma.T, atol=1e-12):
                raise ValidationError("sigma must be symmetric")
            err = np.linalg.norm(sigma @ sigma - a) / max(np.linalg.norm(a), 1e-300)
            if err > _SQRT_RTOL:
                raise ValidationError(
                    f"sigma @ sigma differs from a (relative Frobenius error {err:.2e})"
                )
            symmetric_sqrt(a)  # re-run the SPD validation
        for arr in (d, a, sigma):
            arr.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def log_drift(self) -> np.ndarray:
        """Drift of log-prices: r - d_i - a_ii / 2."""
        return self.r - self.d - 0.5 * np.diag(self.a)


@dataclass(frozen=True)
class SpotPoint:
    """Valuation time ``s`` in [0, T) and strictly positive spot vector ``x``."""

    s: float
    x: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64)).copy()
        if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
            raise ValidationError(f"spot vector must be strictly positive, got {x}")
        if self.s < 0.0:
            raise ValidationError(f"valuation time must be >= 0, got {self.s}")
        x.setflags(write=False)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def require_before(self, T: float) -> None:
        if self.s >= T:
            raise ValidationError(f"valuation time {self.s} must be < T={T}")


def exact_step(params: ModelParams, x: np.ndarray, dt: float, z: np.ndarray) -> np.ndarray:
    """One exact lognormal step: x_i * exp((r - d_i - a_ii/2) dt + sqrt(dt) (sigma z)_i).

    ``x`` and ``z`` may carry leading batch dimensions; the last axis is the
    asset axis. Pure function, exact in distribution for any ``dt >= 0``.
    """
    if dt < 0.0:
        raise ValidationError(f"dt must be >= 0, got {dt}")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[-1] != params.n or z.shape[-1] != params.n:
        raise ValidationError(
            f"x and z must have trailing dimension {params.n}, got {x.shape} and {z.shape}"
        )
    if np.any(x <= 0.0):
        raise ValidationError("spot values must be strictly positive")
    growth = params.log_drift * dt + np.sqrt(dt) * (z @ params.sigma.T)
    return x * np.exp(growth)
