"""Scalar nonlinearities of the phase-change problem.

Everything here is a pure function of one real variable: the smoothed step
graph obtained by mollifying a unit jump, the bi-Lipschitz temperature map
beta, and the enthalpy built from the two.  The smoothed step is evaluated
from a precomputed high-resolution table with monotone cubic interpolation
(the time stepper calls it millions of times); adaptive quadrature of the
mollifier is kept for the test oracles only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.interpolate import PchipInterpolator

# Resolution of the precomputed step/primitive tables on [-1, 1].
_TABLE_POINTS = 4097
_GAUSS_ORDER = 12


def bump_shape(t):
    """Unnormalized mollifier profile exp(-1/(1-t^2)) on (-1, 1), 0 outside."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti * ti))
    return out if out.ndim else float(out)


def _build_step_tables():
    """Cumulative integral of the bump on a fine grid, symmetrized.

    Returns the sample grid, the normalized cumulative values (a smooth CDF
    rising from 0 to 1), and the total bump mass.
    """
    ts = np.linspace(-1.0, 1.0, _TABLE_POINTS)
    xg, wg = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    mids = 0.5 * (ts[:-1] + ts[1:])
    half = 0.5 * (ts[1:] - ts[:-1])
    samples = bump_shape(mids[:, None] + half[:, None] * xg[None, :])
    pieces = (samples * wg[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    mass = cum[-1]
    cdf = cum / mass
    # The profile is even, so the CDF must satisfy cdf(t) + cdf(-t) = 1;
    # enforce it exactly so symmetry tests hold to machine precision.
    cdf = 0.5 * (cdf + 1.0 - cdf[::-1])
    cdf[0] = 0.0
    cdf[-1] = 1.0
    return ts, cdf, float(mass)


_TS, _CDF, _BUMP_MASS = _build_step_tables()
_CDF_SPLINE = PchipInterpolator(_TS, _CDF, extrapolate=False)
# Antiderivative of the CDF interpolant, anchored to 0 at t = -1.
_CDF_PRIMITIVE = _CDF_SPLINE.antiderivative()
_CDF_PRIMITIVE_AT_ONE = float(_CDF_PRIMITIVE(1.0))


def mollifier_density(t):
    """Normalized mollifier value at t (unit width, unit mass)."""
    return bump_shape(t) / _BUMP_MASS


def _step_cdf(t):
    """Smoothed unit step at normalized coordinate t = (s - jump)/eps."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > -1.0) & (t < 1.0)
    if np.any(inside):
        out = np.array(out, dtype=float)
        out[inside] = _CDF_SPLINE(t[inside])
    return out if out.ndim else float(out)


def _step_cdf_primitive(t):
    """Antiderivative of the smoothed step in normalized coordinates.

    Equals 0 for t <= -1 and grows with unit slope for t >= 1.
    """
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, -1.0, 1.0)
    out = np.asarray(_CDF_PRIMITIVE(tc), dtype=float)
    above = t > 1.0
    if np.any(above):
        out[above] = _CDF_PRIMITIVE_AT_ONE + (t[above] - 1.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Bi-Lipschitz temperature maps
# ---------------------------------------------------------------------------

BetaKind = Literal["identity", "piecewise", "tanh"]


@dataclass(frozen=True)
class BetaMap:
    """Monotone bi-Lipschitz map with beta(0) = 0 and certified constant.

    A closed family so the two-sided Lipschitz constant can be certified at
    construction: the identity, a piecewise-linear table through the origin
    (extended with its end slopes), or a tanh-perturbed identity
    u + mu * tau * tanh(u / tau).
    """

    kind: BetaKind = "identity"
    knots: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    mu: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if self.kind == "piecewise":
            xs, ys = np.asarray(self.knots), np.asarray(self.values)
            if xs.size < 2 or xs.size != ys.size:
                raise ValueError("piecewise beta needs matching knots/values, >= 2 points")
            if not (np.all(np.diff(xs) > 0) and np.all(np.diff(ys) > 0)):
                raise ValueError("piecewise beta table must be strictly increasing")
            if 0.0 not in xs or ys[list(xs).index(0.0)] != 0.0:
                raise ValueError("piecewise beta table must contain the origin (0, 0)")
        elif self.kind == "tanh":
            if self.tau <= 0.0:
                raise ValueError("tanh beta needs tau > 0")
            if self.mu <= -0.9:
                raise ValueError("tanh beta needs mu > -0.9 to stay bi-Lipschitz")
        elif self.kind != "identity":
            raise ValueError(f"unknown beta kind {self.kind!r}")

    # -- evaluation ---------------------------------------------------------

    def _segments(self):
        xs = np.asarray(self.knots, dtype=float)
        ys = np.asarray(self.values, dtype=float)
        slopes = np.diff(ys) / np.diff(xs)
        return xs, ys, slopes

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            out = u.copy()
        elif self.kind == "tanh":
            out = u + self.mu * self.tau * np.tanh(u / self.tau)
        else:
            xs, ys, slopes = self._segments()
            idx = np.clip(np.searchsorted(xs, u, side="right") - 1, 0, xs.size - 2)
            out = ys[idx] + slopes[idx] * (u - xs[idx])
        return out if out.ndim else float(out)

    def prime(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            out = np.ones_like(u)
        elif self.kind == "tanh":
            out = 1.0 + self.mu * (1.0 - np.tanh(u / self.tau) ** 2)
        else:
            xs, _, slopes = self._segments()
            idx = np.clip(np.searchsorted(xs, u, side="right") - 1, 0, xs.size - 2)
            out = slopes[idx]
        return out if out.ndim else float(out)

    def inverse(self, w):
        w = np.asarray(w, dtype=float)
        if self.kind == "identity":
            out = w.copy()
        elif self.kind == "piecewise":
            xs, ys, slopes = self._segments()
            idx = np.clip(np.searchsorted(ys, w, side="right") - 1, 0, ys.size - 2)
            out = xs[idx] + (w - ys[idx]) / slopes[idx]
        else:
            # Damped Newton; beta is smooth, increasing, with slope in
            # [1 + min(mu, 0), 1 + max(mu, 0)], so this converges fast.
            out = np.array(w / (1.0 + 0.5 * self.mu), dtype=float, ndmin=1)
            target = np.atleast_1d(w)
            for _ in range(80):
                r = self.apply(out) - target
                if np.max(np.abs(r)) <= 1e-15 * (1.0 + np.max(np.abs(target))):
                    break
                out = out - r / self.prime(out)
            out = out.reshape(np.shape(w))
        return out if np.ndim(out) else float(out)

    def primitive(self, u):
        """Integral of beta from 0 to u (closed form per family)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "identity":
            out = 0.5 * u * u
        elif self.kind == "tanh":
            out = 0.5 * u * u + self.mu * self.tau**2 * np.log(np.cosh(u / self.tau))
        else:
            xs, ys, slopes = self._segments()
            knot_int = np.concatenate(
                [[0.0], np.cumsum(0.5 * (ys[:-1] + ys[1:]) * np.diff(xs))]
            )
            anchor_idx = int(np.clip(np.searchsorted(xs, 0.0, side="right") - 1, 0, xs.size - 2))
            anchor = knot_int[anchor_idx]  # knot at the origin, primitive there is exact
            idx = np.clip(np.searchsorted(xs, u, side="right") - 1, 0, xs.size - 2)
            d = u - xs[idx]
            out = knot_int[idx] + ys[idx] * d + 0.5 * slopes[idx] * d * d - anchor
        return out if out.ndim else float(out)

    @property
    def lipschitz(self) -> float:
        """Certified two-sided constant: 1/L <= slope <= L everywhere."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "tanh":
            hi = 1.0 + max(self.mu, 0.0)
            lo = 1.0 + min(self.mu, 0.0)
            return max(hi, 1.0 / lo)
        _, _, slopes = self._segments()
        return float(max(np.max(slopes), 1.0 / np.min(slopes)))

    def rescaled(self, lam: float) -> "BetaMap":
        """The map z -> beta(lam * z) / lam, same Lipschitz constant."""
        if self.kind == "identity":
            return self
        if self.kind == "tanh":
            return BetaMap(kind="tanh", mu=self.mu, tau=self.tau / lam)
        return BetaMap(
            kind="piecewise",
            knots=tuple(x / lam for x in self.knots),
            values=tuple(y / lam for y in self.values),
        )


# ---------------------------------------------------------------------------
# Regularized graph and enthalpy
# ---------------------------------------------------------------------------

@dataclass
class RegularizedGraph:
    """Smoothed jump nonlinearity: location a, latent heat in (0, 1],
    mollification half-width eps, and a bi-Lipschitz temperature map.

    Precomputes the primitive of step(beta(.)) across the transition band so
    the convex step energy has closed-form values everywhere.
    """

    a: float
    latent_heat: float
    eps: float
    beta: BetaMap = field(default_factory=BetaMap)

    def __post_init__(self):
        if not (0.0 < self.latent_heat <= 1.0):
            raise ValueError("latent_heat must lie in (0, 1]")
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        s_lo = float(self.beta.inverse(self.a - self.eps))
        s_hi = float(self.beta.inverse(self.a + self.eps))
        ss = np.linspace(s_lo, s_hi, 2049)
        data = _step_cdf((self.beta.apply(ss) - self.a) / self.eps)
        spline = PchipInterpolator(ss, data, extrapolate=False)
        self._band = (s_lo, s_hi)
        self._band_spline = spline
        self._band_primitive = spline.antiderivative()
        self._band_primitive_hi = float(self._band_primitive(s_hi))

    # -- smoothed step in the transformed variable --------------------------

    def step(self, s):
        """Smoothed unit step centred at a with half-width eps."""
        return _step_cdf((np.asarray(s, dtype=float) - self.a) / self.eps)

    def step_prime(self, s):
        """Derivative of the smoothed step: the mollifier at s - a."""
        return mollifier_density((np.asarray(s, dtype=float) - self.a) / self.eps) / self.eps

    # -- enthalpy as a function of temperature -------------------------------

    def enthalpy_of_temperature(self, u):
        w = self.beta.apply(u)
        return w + self.latent_heat * self.step(w)

    def enthalpy_prime_of_temperature(self, u):
        w = self.beta.apply(u)
        return self.beta.prime(u) * (1.0 + self.latent_heat * self.step_prime(w))

    def _step_of_temperature_primitive(self, u):
        """Integral of step(beta(s)) ds from the lower band edge to u."""
        u = np.asarray(u, dtype=float)
        s_lo, s_hi = self._band
        uc = np.clip(u, s_lo, s_hi)
        out = np.asarray(self._band_primitive(uc), dtype=float)
        above = u > s_hi
        if np.any(above):
            out[above] = self._band_primitive_hi + (u[above] - s_hi)
        return out if out.ndim else float(out)

    def enthalpy_primitive_of_temperature(self, u):
        """Strictly convex primitive E with E' = enthalpy_of_temperature, E(0) = 0."""
        k0 = self._step_of_temperature_primitive(0.0)
        return (
            self.beta.primitive(u)
            + self.latent_heat * (self._step_of_temperature_primitive(u) - k0)
        )

    def rescaled(self, lam: float) -> "RegularizedGraph":
        """Graph of the solution scaled down by lam >= 1: jump, width and
        latent heat all divide by lam."""
        if lam < 1.0:
            raise ValueError("rescaling factor must be >= 1")
        return RegularizedGraph(
            a=self.a / lam,
            latent_heat=self.latent_heat / lam,
            eps=self.eps / lam,
            beta=self.beta.rescaled(lam),
        )

    def params_dict(self) -> dict:
        d = {"a": self.a, "latent_heat": self.latent_heat, "eps": self.eps,
             "beta_kind": self.beta.kind}
        if self.beta.kind == "piecewise":
            d["beta_knots"] = list(self.beta.knots)
            d["beta_values"] = list(self.beta.values)
        elif self.beta.kind == "tanh":
            d["beta_mu"] = self.beta.mu
            d["beta_tau"] = self.beta.tau
        return d


# ---------------------------------------------------------------------------
# Free-function operations
# ---------------------------------------------------------------------------

def mollified_heaviside(g: RegularizedGraph, s):
    """Smoothed step of the graph at s; lies in [0, 1], equals 1/2 at the jump."""
    return g.step(s)


def mollified_heaviside_prime(g: RegularizedGraph, s):
    return g.step_prime(s)


def enthalpy(g: RegularizedGraph, lh_eff: float, b: float, s):
    """s + lh_eff * (smoothed step at jump b, width g.eps); strictly increasing."""
    if not (0.0 <= lh_eff <= 1.0):
        raise ValueError("effective latent heat must lie in [0, 1]")
    s = np.asarray(s, dtype=float)
    return s + lh_eff * _step_cdf((s - b) / g.eps)


def enthalpy_jump_primitive(g: RegularizedGraph, b: float, k, v, lh_eff: float = 1.0):
    """Integral over (k, v) of step'(xi) * (xi - k)_+, nonnegative.

    Computed in closed form from the step and its primitive (integration by
    parts); zero whenever v <= k or the band (b-eps, b+eps) misses (k, v).
    The bare primitive is returned scaled by lh_eff (default 1).
    """
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    tv = (v - b) / g.eps
    tk = (k - b) / g.eps
    step_v = _step_cdf(tv)
    integral = g.eps * (_step_cdf_primitive(tv) - _step_cdf_primitive(tk))
    out = np.where(v > k, step_v * (v - k) - integral, 0.0)
    out = np.maximum(out, 0.0)
    out = lh_eff * out
    return out if out.ndim else float(out)


def beta_apply(g: RegularizedGraph, u):
    return g.beta.apply(u)


def beta_inverse(g: RegularizedGraph, w):
    return g.beta.inverse(w)
