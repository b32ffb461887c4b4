"""Sliding-mode nonlinearity, comparison ODE and gain-design formulas.

The control term is rho * sign_eps(u), where sign_eps is the Yosida
approximation of the sign graph (a clamped linear ramp).  The scalar
comparison problem

    tau * w' + rho * sign_eps(w) = M,   w(0) = w0

dominates the sup-distance to the target; its limit solution is the affine
decay (w0 - (rho - M) t / tau)^+ which vanishes after
T* = tau * w0 / (rho - M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParamError, VolumeError


@dataclass(frozen=True)
class SmcParams:
    """Control gain and regularization level of the sign nonlinearity."""

    rho: float
    eps: float

    def __post_init__(self):
        if self.rho < 0.0:
            raise ParamError("rho must be nonnegative")
        if not self.eps > 0.0:
            raise ParamError("eps must be positive")


def sign_eps(eps: float, r):
    """Yosida approximation of sign: clamp(r/eps, -1, 1)."""
    if not eps > 0.0:
        raise ParamError("eps must be positive")
    arr = np.asarray(r, dtype=float)
    out = np.clip(arr / eps, -1.0, 1.0)
    return float(out) if arr.ndim == 0 else out


def hat_s_eps(eps: float, rho: float, r):
    """Antiderivative of rho*sign_eps: rho*r^2/(2 eps) inside the ramp,
    rho*(|r| - eps/2) on the saturated branches."""
    if not eps > 0.0 or not rho > 0.0:
        raise ParamError("eps and rho must be positive")
    arr = np.abs(np.asarray(r, dtype=float))
    out = rho * np.where(arr <= eps, arr**2 / (2.0 * eps), arr - eps / 2.0)
    return float(out) if np.asarray(r).ndim == 0 else out


def apply_S_eps(params: SmcParams, chi: np.ndarray) -> np.ndarray:
    """Pointwise control field rho * sign_eps(chi); sup-norm at most rho."""
    return params.rho * sign_eps(params.eps, chi)


def _check_drift(M: float, rho: float):
    if M < 0.0:
        raise ParamError("M must be nonnegative")
    if not rho > M:
        raise ParamError(f"need rho > M (got rho={rho}, M={M})")


def ode_w_closed_form(w0: float, M: float, rho: float, tau: float, t):
    """Limit comparison solution (w0 - (rho-M) t / tau)^+."""
    _check_drift(M, rho)
    if w0 < 0.0 or not tau > 0.0:
        raise ParamError("need w0 >= 0 and tau > 0")
    tt = np.asarray(t, dtype=float)
    out = np.maximum(w0 - (rho - M) / tau * tt, 0.0)
    return float(out) if tt.ndim == 0 else out


def ode_weps_closed_form_zero(eps: float, M: float, rho: float,
                              tau: float, t):
    """Regularized comparison solution for w0 = 0:
    (eps*M/rho) * (1 - exp(-rho t / (eps tau)))."""
    _check_drift(M, rho)
    if not eps > 0.0 or not tau > 0.0:
        raise ParamError("need eps > 0 and tau > 0")
    tt = np.asarray(t, dtype=float)
    out = (eps * M / rho) * (1.0 - np.exp(-rho * tt / (eps * tau)))
    return float(out) if tt.ndim == 0 else out


def ode_weps_integrate(eps: float, M: float, rho: float, tau: float,
                       w0: float, dt: float, T: float):
    """Integrate tau*w' + rho*sign_eps(w) = M with RK4.

    Returns (times, values) sampled every ``dt``.  Internal substeps are
    chosen so that rho*h/(eps*tau) <= 0.5, which resolves the boundary
    layer of width eps near w = 0; on the saturated affine branch RK4 is
    exact.
    """
    _check_drift(M, rho)
    if not eps > 0.0 or not tau > 0.0 or not dt > 0.0:
        raise ParamError("need eps, tau, dt > 0")
    if w0 < 0.0:
        raise ParamError("w0 must be nonnegative")
    if w0 > 0.0 and eps >= w0:
        raise ParamError("need eps in (0, w0) when w0 > 0")
    nout = int(round(T / dt))
    times = dt * np.arange(nout + 1)
    nsub = max(1, int(math.ceil(dt * rho / (0.5 * eps * tau))))
    h = dt / nsub

    def f(w):
        return (M - rho * min(max(w / eps, -1.0), 1.0)) / tau

    values = np.empty(nout + 1)
    values[0] = w0
    w = w0
    for n in range(nout):
        for _ in range(nsub):
            k1 = f(w)
            k2 = f(w + 0.5 * h * k1)
            k3 = f(w + 0.5 * h * k2)
            k4 = f(w + h * k3)
            w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        values[n + 1] = w
    return times, values


def sliding_time(w0: float, M: float, rho: float, tau: float) -> float:
    """Bound T* = tau*w0/(rho - M) on the reaching time."""
    _check_drift(M, rho)
    if w0 < 0.0 or not tau > 0.0:
        raise ParamError("need w0 >= 0 and tau > 0")
    return tau * w0 / (rho - M)


def reaching_before_horizon(w0: float, M: float, rho: float, tau: float,
                            T: float) -> bool:
    """Whether rho > M + tau*w0/T, i.e. T* lies strictly before T."""
    return rho > M + tau * w0 / T


@dataclass
class SlidingDesign:
    """Parameter ledger of the gain-design procedure.

    ``M`` depends on the eventually chosen gain; call :meth:`choose_rho`
    to fill in ``rho``, ``M`` and ``Tstar``.
    """

    Chat: float
    Cstr: float
    betastar: float
    tau: float
    w0: float
    T: float
    vol: float
    deltastar: float
    rhostar: float
    shape_factor: float  # Cstr * vol^{2/3} * (vol^{2/3} + 1)
    rho: Optional[float] = None
    M: Optional[float] = None
    Tstar: Optional[float] = None

    def M_of(self, rho: float) -> float:
        """Comparison drift for gain rho."""
        return self.shape_factor * rho + self.Chat + self.betastar

    def choose_rho(self, rho: float) -> "SlidingDesign":
        """Fix the gain; requires rho > rhostar so that T* < T."""
        if not rho > self.rhostar:
            raise ParamError(f"need rho > rhostar = {self.rhostar}")
        M = self.M_of(rho)
        self.rho = rho
        self.M = M
        self.Tstar = sliding_time(self.w0, M, rho, self.tau)
        return self


def design_parameters(Chat: float, Cstr: float, betastar: float, tau: float,
                      w0: float, T: float, vol: float) -> SlidingDesign:
    """Volume threshold, minimal gain and drift law for the sliding design.

    deltastar = |(sqrt(1 + 4/Cstr) - 1)/2|^{3/2} is the largest admissible
    volume; below it the denominator 1 - Cstr*vol^{2/3}(vol^{2/3}+1) is
    positive and rhostar = (Chat + betastar + tau*w0/T) / denominator.
    Any rho > rhostar then satisfies rho > M(rho) + tau*w0/T.
    """
    if not Cstr > 0.0 or not tau > 0.0 or not T > 0.0:
        raise ParamError("need Cstr, tau, T > 0")
    if min(Chat, betastar, w0) < 0.0 or not vol > 0.0:
        raise ParamError("need Chat, betastar, w0 >= 0 and vol > 0")
    deltastar = abs((math.sqrt(1.0 + 4.0 / Cstr) - 1.0) / 2.0) ** 1.5
    if vol >= deltastar:
        raise VolumeError(
            f"volume {vol} >= deltastar {deltastar}: gain design undefined")
    shape_factor = Cstr * vol ** (2.0 / 3.0) * (vol ** (2.0 / 3.0) + 1.0)
    rhostar = (Chat + betastar + tau * w0 / T) / (1.0 - shape_factor)
    return SlidingDesign(Chat=Chat, Cstr=Cstr, betastar=betastar, tau=tau,
                         w0=w0, T=T, vol=vol, deltastar=deltastar,
                         rhostar=rhostar, shape_factor=shape_factor)
