"""Conditional outcome samplers: quantile tables and inverse-CDF draws.

A sampler describes the law of ``Y | X = x`` for one treatment arm. Draws are
produced by evaluating the quantile function on a grid and interpolating
uniforms against the sorted ``(q, value)`` table, with flat extrapolation
beyond the grid endpoints.
"""

import numpy as np


class NonMonotoneError(ValueError):
    """A quantile table decreases in q."""


def check_monotone(table, atol=1e-9):
    steps = np.diff(table, axis=-1)
    if steps.size and steps.min() < -atol:
        raise NonMonotoneError(f"quantile table decreases by {-steps.min():.3g} along the grid")


def interp_rows(grid, table, u):
    """Row-wise piecewise-linear interpolation of ``table`` at uniforms ``u``.

    Args:
        grid: sorted quantile levels, shape ``(g,)``.
        table: quantile values, shape ``(m, g)``.
        u: uniforms, shape ``(m, s)``.

    Returns:
        Array of shape ``(m, s)``; values outside the grid range are clamped.
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) == 1:
        return np.repeat(table[:, :1], u.shape[1], axis=1)
    u = np.clip(u, grid[0], grid[-1])
    hi = np.clip(np.searchsorted(grid, u, side="right"), 1, len(grid) - 1)
    lo = hi - 1
    g_lo, g_hi = grid[lo], grid[hi]
    span = g_hi - g_lo
    frac = np.divide(u - g_lo, span, out=np.zeros_like(u), where=span > 0)
    v_lo = np.take_along_axis(table, lo, axis=1)
    v_hi = np.take_along_axis(table, hi, axis=1)
    return v_lo + frac * (v_hi - v_lo)


class ConditionalSampler:
    """Base class for a scalar conditional quantile model of one arm."""

    n_uniforms = 1
    d = 1

    def quantile(self, x, q):
        """Quantiles at levels ``q`` for each row of ``x``; shape ``(m, len(q))``."""
        raise NotImplementedError

    def draw(self, x, grid, u):
        """Inverse-CDF draws.

        Args:
            x: query covariates ``(m, p)``.
            grid: sorted quantile levels used to build the interpolation table.
            u: uniforms of shape ``(m, s, n_uniforms)``.

        Returns:
            Draws of shape ``(m, s)``.
        """
        table = np.asarray(self.quantile(x, grid), dtype=float)
        check_monotone(table)
        return interp_rows(grid, table, u[..., 0])

    def sample(self, x, rng, size=1, grid_size=256):
        grid = np.sort(rng.random(grid_size))
        x = np.atleast_2d(x)
        u = rng.random((len(x), size, self.n_uniforms))
        return self.draw(x, grid, u)

    def summary(self):
        return {"model": type(self).__name__}


class ConstantSampler(ConditionalSampler):
    """Point mass at ``value`` for every x."""

    def __init__(self, value):
        self.value = value

    def quantile(self, x, q):
        return np.full((len(np.atleast_2d(x)), len(np.atleast_1d(q))), float(self.value))


class FunctionSampler(ConditionalSampler):
    """Wraps a vectorised inverse CDF ``ppf(q)`` that does not depend on x."""

    def __init__(self, ppf):
        self.ppf = ppf

    def quantile(self, x, q):
        row = np.asarray(self.ppf(np.asarray(q, dtype=float)), dtype=float)
        return np.tile(row, (len(np.atleast_2d(x)), 1))


class BernoulliModel:
    """Conditional success probability of a binary outcome."""

    def predict_proba(self, x):
        raise NotImplementedError


class FactorizedSampler(ConditionalSampler):
    """Two-coordinate outcome: binary primary and continuous secondary.

    The primary is drawn by Bernoulli inverse CDF (``1`` when ``u > 1 - p``),
    the secondary from its own quantile model with an independent uniform.
    """

    n_uniforms = 2
    d = 2

    def __init__(self, primary, secondary):
        self.primary = primary
        self.secondary = secondary

    def quantile(self, x, q):
        # per-component quantiles; the primary is returned as its step inverse CDF
        x = np.atleast_2d(x)
        q = np.asarray(q, dtype=float)
        p = self.primary.predict_proba(x)[:, None]
        prim = (q[None, :] > 1.0 - p).astype(float)
        return np.stack([prim, self.secondary.quantile(x, q)], axis=-1)

    def draw(self, x, grid, u):
        x = np.atleast_2d(x)
        p = self.primary.predict_proba(x)[:, None]
        prim = (u[..., 0] > 1.0 - p).astype(float)
        sec = self.secondary.draw(x, grid, u[..., 1:2])
        return np.stack([prim, sec], axis=-1)

    def summary(self):
        return {"model": "factorized", "primary": type(self.primary).__name__,
                "secondary": self.secondary.summary()}
