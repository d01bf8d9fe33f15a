"""Independent pricing benchmarks used for cross-checks.

These deliberately share no code with the PDE and Monte Carlo engines:

* ``bs_price`` -- closed-form European call/put on a single asset,
* ``crr_binomial`` -- Cox-Ross-Rubinstein lattice for American/European
  options on a single asset, with optional exercise-boundary extraction,
* ``european_quadrature`` -- tensor Gauss-Hermite quadrature of the
  discounted terminal payoff for any catalog family in any dimension.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from .errors import ValidationError
from .model import ModelParams
from .payoff import PayoffSpec, evaluate


def bs_price(kind: str, x: float, K: float, r: float, d: float,
             var: float, tau: float) -> float:
    """Black-Scholes European price with continuous dividend yield.

    ``var`` is the annualized variance of log-returns (sigma^2).
    """
    if tau <= 0.0:
        intrinsic = x - K if kind == "call" else K - x
        return max(intrinsic, 0.0)
    sig = np.sqrt(var)
    srt = sig * np.sqrt(tau)
    d1 = (np.log(x / K) + (r - d + 0.5 * var) * tau) / srt
    d2 = d1 - srt
    if kind == "call":
        return x * np.exp(-d * tau) * norm.cdf(d1) - K * np.exp(-r * tau) * norm.cdf(d2)
    if kind == "put":
        return K * np.exp(-r * tau) * norm.cdf(-d2) - x * np.exp(-d * tau) * norm.cdf(-d1)
    raise ValidationError(f"kind must be 'call' or 'put', got {kind!r}")


def crr_binomial(kind: str, x: float, K: float, r: float, d: float, var: float,
                 T: float, steps: int, american: bool = True,
                 return_boundary: bool = False):
    """Cox-Ross-Rubinstein binomial price on a single asset.

    With ``return_boundary=True`` also returns ``(times, boundary)`` where
    ``boundary[m]`` is the exercise frontier at time ``times[m]``: the largest
    lattice price at which exercise is optimal for a put, the smallest for a
    call (NaN where no lattice node exercises).
    """
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    dt = T / steps
    u = np.exp(np.sqrt(var * dt))
    dn = 1.0 / u
    disc = np.exp(-r * dt)
    p = (np.exp((r - d) * dt) - dn) / (u - dn)
    if not 0.0 < p < 1.0:
        raise ValidationError(f"risk-neutral probability {p:.4f} outside (0,1); refine steps")

    j = np.arange(steps + 1)
    prices = x * u ** (2.0 * j - steps)  # level `steps`
    if kind == "call":
        payoff = lambda s: np.maximum(s - K, 0.0)
    elif kind == "put":
        payoff = lambda s: np.maximum(K - s, 0.0)
    else:
        raise ValidationError(f"kind must be 'call' or 'put', got {kind!r}")

    values = payoff(prices)
    boundary = np.full(steps + 1, np.nan)
    if return_boundary:
        ex = payoff(prices) > 0
        if ex.any():
            boundary[steps] = prices[ex].max() if kind == "put" else prices[ex].min()

    for m in range(steps - 1, -1, -1):
        j = np.arange(m + 1)
        prices = x * u ** (2.0 * j - m)
        cont = disc * (p * values[1 : m + 2] + (1.0 - p) * values[: m + 1])
        if american:
            intrinsic = payoff(prices)
            values = np.maximum(cont, intrinsic)
            if return_boundary:
                ex = intrinsic > cont + 1e-14
                if ex.any():
                    boundary[m] = prices[ex].max() if kind == "put" else prices[ex].min()
        else:
            values = cont

    price = float(values[0])
    if return_boundary:
        return price, np.linspace(0.0, T, steps + 1), boundary
    return price


def european_quadrature(params: ModelParams, spec: PayoffSpec, x: np.ndarray,
                        tau: float, nodes: int = 301) -> float:
    """Discounted expectation of the terminal payoff by Gauss-Hermite tensor quadrature.

    Exact lognormal terminal law: X_T = x * exp((r - d - diag(a)/2) tau
    + sqrt(tau) sigma z) with z standard normal, integrated on a tensor grid
    of ``nodes`` points per dimension.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    n = params.n
    if tau < 0.0:
        raise ValidationError("tau must be >= 0")
    if tau == 0.0:
        return float(evaluate(spec, x))
    t_nodes, t_weights = np.polynomial.hermite.hermgauss(nodes)
    z1 = np.sqrt(2.0) * t_nodes
    w1 = t_weights / np.sqrt(np.pi)
    grids = np.meshgrid(*([z1] * n), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.ones(z.shape[0])
    for g in np.meshgrid(*([w1] * n), indexing="ij"):
        w = w * g.ravel()
    drift = (params.r - params.d - 0.5 * np.diag(params.a)) * tau
    xt = x * np.exp(drift + np.sqrt(tau) * (z @ params.sigma.T))
    vals = evaluate(spec, xt)
    return float(np.exp(-params.r * tau) * np.sum(w * vals))
