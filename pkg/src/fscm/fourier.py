"""Fourier analysis in theta, orchestration of the mode solves and 3D synthesis.

A field on the 3D domain is written

    f(r, theta, z) = (1 / sqrt(2 pi)) sum_k f^k(r, z) exp(i k theta),

with the same factor on the analysis side, so that Parseval reads
||f||^2_{L^2(Omega)} = sum_k ||f^k||^2_{0,1}.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .modesolver import Discretization, ModeSolution, solve_mode
from .quadrature import QuadratureSet

SQRT_2PI = math.sqrt(2.0 * math.pi)


class _Sampler:
    """Samples f on M angles and returns all DFT coefficients, caching the last call."""

    def __init__(self, f: Callable, M: int):
        self.f = f
        self.M = M
        self._key = None
        self._coef = None

    def __call__(self, r, z) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        if self._key is not None and self._key[0] is r and self._key[1] is z:
            return self._coef
        theta = 2.0 * np.pi * np.arange(self.M) / self.M
        shape = (self.M,) + np.broadcast(r, z).shape
        samples = np.empty(shape, dtype=complex)
        for m, th in enumerate(theta):
            samples[m] = self.f(r, th, z)
        self._coef = SQRT_2PI / self.M * np.fft.fft(samples, axis=0)
        self._key = (r, z)
        return self._coef


@dataclass
class FourierData:
    """Mode fields f^k for |k| <= N, each a callable (r, z) -> complex array."""

    modes: dict
    N: int
    real: bool = False

    def mode(self, k: int) -> Callable:
        if abs(k) > self.N:
            raise KeyError(f"mode {k} is beyond the truncation order {self.N}")
        return self.modes[k]

    def __call__(self, r, theta, z):
        """Truncated synthesis at points (r, theta, z)."""
        r, theta, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, theta, z)))
        out = np.zeros(r.shape, dtype=complex)
        for k, fk in self.modes.items():
            out += np.asarray(fk(r, z)) * np.exp(1j * k * theta)
        return out / SQRT_2PI

    @classmethod
    def from_modes(cls, modes: Callable, N: int, real: bool = False) -> "FourierData":
        """Build from a closed form ``modes(k) -> callable``."""
        return cls({k: modes(k) for k in range(-N, N + 1)}, N, real)


def analyze(f: Callable, N: int, M: int | None = None, real: bool = True) -> FourierData:
    """DFT of f(r, theta, z) on M uniform angles.

    Exact for fields band-limited to |k| <= M - N - 1.  ``real`` declares f
    real-valued, which lets the solver use the conjugate symmetry of modes.
    """
    if N < 0:
        raise ValueError("N must be non-negative")
    M = 4 * N + 4 if M is None else M
    if M < 2 * N + 2:
        raise ValueError(f"M = {M} angles cannot resolve modes up to N = {N} (need M >= 2N + 2)")
    sampler = _Sampler(f, M)

    def make(k):
        idx = k % M
        if real and k == 0:
            return lambda r, z: sampler(r, z)[idx].real
        return lambda r, z: sampler(r, z)[idx]

    return FourierData({k: make(k) for k in range(-N, N + 1)}, N, real)


@dataclass
class FSCMSolution:
    """Per-mode solutions for |k| <= N and the 3D evaluator."""

    modes: dict                      # k -> ModeSolution
    N: int
    real: bool = False
    disc: Discretization | None = field(default=None, repr=False)

    @property
    def mode_solutions(self) -> list:
        return [self.modes[k] for k in sorted(self.modes)]

    def truncated(self, N: int) -> "FSCMSolution":
        if N > self.N:
            raise ValueError("cannot extend a solution beyond its truncation order")
        return FSCMSolution({k: s for k, s in self.modes.items() if abs(k) <= N}, N, self.real, self.disc)

    def __call__(self, r, theta, z):
        r, theta, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, theta, z)))
        out = np.zeros(r.shape, dtype=complex)
        flat_r, flat_z = r.ravel(), z.ravel()
        for k, sol in self.modes.items():
            out += (sol.evaluator(flat_r, flat_z).reshape(r.shape)) * np.exp(1j * k * theta)
        return out / SQRT_2PI


def solve_fscm(data: FourierData, disc: Discretization, workers: int = 1) -> FSCMSolution:
    """Solve every mode |k| <= N with the singular complement method.

    For real data only k >= 0 is solved and u^-k is the conjugate of u^k.
    Modes are independent, so they may run on a thread pool.
    """
    N = data.N
    ks = list(range(0, N + 1)) if data.real else list(range(-N, N + 1))
    qs = disc.qs
    # sample every mode once at the shared quadrature points
    fvals = {k: np.asarray(data.mode(k)(qs.r, qs.z)) for k in ks}

    def run(k):
        sol = solve_mode(k, fvals[k], disc)
        if abs(k) > 2 and (data.real or k < 0):
            # factorizations of the pair modes 0, 1, 2 stay cached, the others are freed
            disc.asm.release(k)
        return sol

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sols = list(pool.map(run, ks))
    else:
        sols = [run(k) for k in ks]
    modes = dict(zip(ks, sols))
    if data.real:
        for k in range(1, N + 1):
            modes[-k] = modes[k].conj()
    return FSCMSolution(modes, N, data.real, disc)


def _composite(v):
    return v.evaluator if isinstance(v, ModeSolution) else v


def mode_norms(fields: dict, qs: QuadratureSet, ks) -> dict:
    """Norms of the per-mode fields (Composite or ModeSolution) for the given k."""
    return {k: _composite(fields[k]).norms(qs, k) for k in ks}


def difference_norms(sol: FSCMSolution, reference: dict, qs: QuadratureSet, ks) -> dict:
    """Norms of u^k_ref - u^k_h for the given k."""
    return {k: (_composite(reference[k]) - sol.modes[k].evaluator).norms(qs, k) for k in ks}


def aggregate_errors(diff: dict, ref: dict, N: int, n_ref: int, symmetric: bool) -> tuple[float, float]:
    """Combine per-mode norms into (H^1, L^2) errors of a solution truncated at N.

    ``diff[k]`` holds the norms of the error of mode k (|k| <= N), ``ref[k]`` the
    norms of the reference mode k (N < |k| <= n_ref).  With ``symmetric`` only
    k >= 0 is stored and k > 0 counts twice.
    """
    h1 = l2 = 0.0
    ks = range(0, n_ref + 1) if symmetric else range(-n_ref, n_ref + 1)
    for k in ks:
        n = diff[k] if abs(k) <= N else ref[k]
        weight = 2.0 if symmetric and k > 0 else 1.0
        h1 += weight * n.norm_k**2
        l2 += weight * n.norm_0_1**2
    return math.sqrt(h1), math.sqrt(l2)


def global_errors(sol: FSCMSolution, reference: dict, qs_fine: QuadratureSet,
                  symmetric: bool | None = None) -> tuple[float, float]:
    """(H^1, L^2) errors against per-mode reference evaluators.

    ``reference`` maps k to a Composite (or ModeSolution) for |k| <= N_ref.
    With conjugate-symmetric solution and reference only k >= 0 is computed.
    """
    n_ref = max(abs(k) for k in reference)
    if n_ref < sol.N:
        raise ValueError("the reference must contain at least the modes of the solution")
    if symmetric is None:
        symmetric = sol.real
    lo = 0 if symmetric else -n_ref
    inside = [k for k in range(lo, n_ref + 1) if abs(k) <= sol.N]
    outside = [k for k in range(lo, n_ref + 1) if abs(k) > sol.N]
    diff = difference_norms(sol, reference, qs_fine, inside)
    ref = mode_norms(reference, qs_fine, outside)
    return aggregate_errors(diff, ref, sol.N, n_ref, symmetric)


def global_h1_error(sol: FSCMSolution, reference: dict, qs_fine: QuadratureSet,
                    symmetric: bool | None = None) -> float:
    """sqrt( sum_{|k|<=N} ||u^k_ref - u^k_h||^2_(k) + sum_{N<|k|<=N_ref} ||u^k_ref||^2_(k) )."""
    return global_errors(sol, reference, qs_fine, symmetric)[0]


def l2_norm_sq_3d(f: Callable, qs: QuadratureSet, M: int) -> float:
    """||f||^2_{L^2(Omega)} by the meridian quadrature times a uniform theta rule."""
    total = 0.0
    for m in range(M):
        th = 2.0 * np.pi * m / M
        total += np.sum(qs.w * qs.r * np.abs(f(qs.r, th, qs.z)) ** 2)
    return float(total * 2.0 * np.pi / M)


def parseval_sum(data: FourierData, qs: QuadratureSet) -> float:
    """sum_k ||f^k||^2_{0,1}."""
    return float(sum(np.sum(qs.w * qs.r * np.abs(fk(qs.r, qs.z)) ** 2) for fk in data.modes.values()))
