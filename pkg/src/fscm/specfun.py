"""Legendre functions of non-integer degree and the conical exponent.

P_nu(x) is evaluated from the hypergeometric series

    P_nu(x) = 2F1(-nu, nu + 1; 1; (1 - x) / 2),

which converges for x in (-1, 1] and is fast as long as x stays away from -1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate


class SeriesError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LegendreParams:
    series_tol: float = 1e-14
    max_terms: int = 20000

    def __post_init__(self):
        if not 0.0 < self.series_tol <= 1e-6:
            raise ValueError("series_tol must lie in (0, 1e-6]")


DEFAULT = LegendreParams()


def _hyp2f1_unit(a: float, b: float, c: float, t, params: LegendreParams):
    """Sum 2F1(a, b; c; t) for 0 <= t < 1, vectorized over t.

    Each point stops on its own, so a few points close to t = 1 do not make
    the whole array pay for their long tail.
    """
    t = np.asarray(t, dtype=float)
    shape = t.shape
    t = t.ravel()
    total = np.ones_like(t)
    if t.size == 0:
        return total.reshape(shape)
    idx = np.arange(t.size)
    tt = t
    term = np.ones_like(t)
    scale = np.ones_like(t)
    tail = np.where(t < 1.0, t / np.maximum(1.0 - t, 1e-300), np.inf)
    warm = abs(a) + abs(b) + 2
    for n in range(params.max_terms):
        term = term * ((a + n) * (b + n) / ((c + n) * (n + 1.0))) * tt
        total[idx] += term
        scale = np.maximum(scale, np.abs(total[idx]))
        if n > warm:
            # beyond n ~ |a b| the ratio of consecutive terms tends to t from below
            live = np.abs(term) * (1.0 + tail) > params.series_tol * scale
            live &= term != 0.0
            if not live.all():
                idx, tt, term, scale, tail = idx[live], tt[live], term[live], scale[live], tail[live]
                if idx.size == 0:
                    return total.reshape(shape)
    raise SeriesError(
        f"2F1({a}, {b}; {c}; t) did not converge in {params.max_terms} terms; "
        f"last partial sum {total[idx]!r}, last term {term!r}"
    )


def legendre_p(nu: float, x, params: LegendreParams = DEFAULT):
    """Legendre function P_nu(x) of the first kind for x in (-1, 1]."""
    if nu < 0:
        raise ValueError("nu must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any(x <= -1.0) or np.any(x > 1.0):
        raise ValueError("x must lie in (-1, 1]")
    out = _hyp2f1_unit(-nu, nu + 1.0, 1.0, 0.5 * (1.0 - x), params)
    return out if out.ndim else float(out)


def _legendre_dx_series(nu: float, x, params: LegendreParams):
    # d/dx 2F1(a, b; 1; (1-x)/2) = -(a b / 2) 2F1(a+1, b+1; 2; (1-x)/2)
    a, b = -nu, nu + 1.0
    return -0.5 * a * b * _hyp2f1_unit(a + 1.0, b + 1.0, 2.0, 0.5 * (1.0 - x), params)


def legendre_p_dx(nu: float, x, params: LegendreParams = DEFAULT):
    """Derivative dP_nu/dx.

    Uses (1 - x^2) P_nu' = nu (P_{nu-1} - x P_nu), with P_{nu-1} = 2F1(1-nu, nu; 1; t).
    Close to x = 1 the identity loses all accuracy, so the termwise derivative of
    the series is used there instead.
    """
    if nu < 0:
        raise ValueError("nu must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any(x <= -1.0) or np.any(x > 1.0):
        raise ValueError("x must lie in (-1, 1]")
    t = 0.5 * (1.0 - x)
    near = (1.0 - x * x) < 1e-2
    out = np.empty_like(x)
    if np.any(near):
        out[near] = _legendre_dx_series(nu, x[near], params)
    far = ~near
    if np.any(far):
        xf = x[far]
        p = _hyp2f1_unit(-nu, nu + 1.0, 1.0, t[far], params)
        pm1 = _hyp2f1_unit(1.0 - nu, nu, 1.0, t[far], params)
        out[far] = nu * (pm1 - xf * p) / (1.0 - xf * xf)
    return out if out.ndim else float(out)


def find_root_nu(aperture: float, nu_cap: float = 20.0, step: float = 0.05,
                 tol: float = 1e-10, params: LegendreParams = DEFAULT) -> float:
    """Smallest nu > 0 with P_nu(cos(aperture)) = 0."""
    if not 0.0 < aperture < math.pi:
        raise ValueError("aperture must lie in (0, pi)")
    x = math.cos(aperture)
    lo, f_lo = 0.0, 1.0
    nu = step
    while nu <= nu_cap + 1e-12:
        f = legendre_p(nu, x, params)
        if f == 0.0:
            return nu
        if f * f_lo < 0.0:
            hi = nu
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                f_mid = legendre_p(mid, x, params)
                if f_mid == 0.0:
                    return mid
                if f_mid * f_lo < 0.0:
                    hi = mid
                else:
                    lo, f_lo = mid, f_mid
            return 0.5 * (lo + hi)
        lo, f_lo = nu, f
        nu += step
    raise ValueError(f"no root of P_nu(cos {aperture}) for nu in (0, {nu_cap}]")


def delta0c_normalizer(nu: float, aperture: float, params: LegendreParams = DEFAULT) -> float:
    """(1 + 2 nu) times the integral of P_nu(cos phi)^2 sin(phi) over [0, aperture]."""
    def integrand(phi):
        return legendre_p(nu, math.cos(phi), params) ** 2 * math.sin(phi)

    val, err = integrate.quad(integrand, 0.0, aperture, epsabs=0.0, epsrel=1e-12, limit=200)
    if not err <= 1e-10 * abs(val):
        raise ArithmeticError(f"quadrature did not converge (estimate {val}, error {err})")
    return (1.0 + 2.0 * nu) * val
