"""Fluid-model stability analysis for reverse-path marking.

A single AIMD source shares a bottleneck of capacity ``c`` (packets/s).
Unmarked ACKs return after the full round trip ``d``; marks set on the
reverse path return after the short loop ``d_s`` between sender and
bottleneck.  Linearising the rate dynamics gives the quasi-polynomial

    f(s) = s^2 + (2 - e^{-sd} + e^{-s d_s}) gamma s + alpha e^{-sd} + omega e^{-s d_s}

with gamma = abc / (a + b c^2 d^2), alpha = eta a / d^2 and omega = b c^2 eta.
``eta_for`` solves f(s) = 0 for eta at a chosen real ``s`` and ``s_star``
gives the bound below which that choice is meant to be made.

Scalar functions accept floats, complex numbers or ``gmpy2`` multiprecision
values; the exponential is dispatched on the argument type so that the
identity between ``eta_for`` and ``char_residual`` can be checked at
whatever precision the magnitudes demand.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import asdict, dataclass, field

import gmpy2
import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "StabilityError",
    "FluidParams",
    "DerivedCoeffs",
    "FluidTrajectory",
    "Region",
    "RootScan",
    "StabilityReport",
    "REPORT_COLUMNS",
    "gamma",
    "eta_for",
    "s_star",
    "char_residual",
    "char_derivative",
    "eta_identity_residual",
    "default_region",
    "find_dominant_roots",
    "integrate_fluid",
    "stability_report",
    "stability_sweep",
]


class StabilityError(ValueError):
    """Invalid or numerically unusable model parameters."""


_MP_TYPES = (type(gmpy2.mpfr(0)), type(gmpy2.mpc(0)))


def _exp(z):
    if isinstance(z, _MP_TYPES):
        return gmpy2.exp(z)
    if isinstance(z, complex):
        return cmath.exp(z)
    return math.exp(z)


@dataclass(frozen=True)
class FluidParams:
    """All symbols of the single-bottleneck fluid model.

    Times are in seconds, ``c`` in packets per second, ``x_star`` in packets.
    ``tau_r`` is the loop delay after the switch (bottleneck -> receiver ->
    sender), ``tau_rs`` the delay of a mark set on the reverse path.
    """

    c: float
    tau_f: float
    tau_r: float
    tau_rs: float
    tau_q: float = 0.0
    x_star: float = 0.0
    eta: float = 0.0
    a: float = 1.0
    b: float = 0.5

    def __post_init__(self):
        if not self.c > 0:
            raise StabilityError(f"capacity must be positive, got {self.c}")
        if not self.a > 0:
            raise StabilityError(f"additive increase must be positive, got {self.a}")
        if not 0 < self.b < 1:
            raise StabilityError(f"decrease factor must lie in (0, 1), got {self.b}")
        if min(self.tau_f, self.tau_r, self.tau_rs, self.tau_q) < 0:
            raise StabilityError("delays must be non-negative")
        if not self.d_s > 0:
            raise StabilityError("short loop delay d_s must be positive")
        if not self.d > self.d_s:
            raise StabilityError(f"need d > d_s, got d={self.d}, d_s={self.d_s}")
        if self.x_star < 0:
            raise StabilityError("x_star must be non-negative")

    @classmethod
    def from_loop(cls, c, d, d_s, **kw):
        """Split (d, d_s) into per-segment delays: tau_f = tau_rs = d_s/2, no queueing delay."""
        if not d_s > 0:
            raise StabilityError("d_s must be positive")
        half = d_s / 2.0
        return cls(c=c, tau_f=half, tau_r=d - half, tau_rs=half, **kw)

    @property
    def tau(self):
        return self.tau_f + self.tau_r

    @property
    def d(self):
        return self.tau + self.tau_q

    @property
    def tau_s(self):
        return self.tau_f + self.tau_rs

    @property
    def d_s(self):
        return self.tau_s

    @property
    def gamma(self):
        return gamma(self.a, self.b, self.c, self.d)

    def coeffs(self):
        return DerivedCoeffs.of(self)


@dataclass(frozen=True)
class DerivedCoeffs:
    gamma: float
    alpha: float
    omega: float

    @classmethod
    def of(cls, p: FluidParams, eta=None):
        eta = p.eta if eta is None else eta
        return cls(
            gamma=gamma(p.a, p.b, p.c, p.d),
            alpha=eta * p.a / p.d**2,
            omega=p.b * p.c**2 * eta,
        )


def gamma(a, b, c, d):
    """Feedback gain abc / (a + b c^2 d^2) of the linearised loop."""
    if a <= 0 or c <= 0 or d <= 0 or b < 0:
        raise StabilityError(f"gamma needs a, c, d > 0 and b >= 0 (a={a}, b={b}, c={c}, d={d})")
    return a * b * c / (a + b * c * c * d * d)


def eta_for(s, d, d_s, c, gamma, a=1.0, b=0.5):
    """Marking gain that places a root of the characteristic equation at ``s``.

    For a = 1, b = 1/2 this is

        ((e^{-sd} - e^{-s d_s} - 2) s gamma - s^2) / (e^{-sd}/d^2 + c^2 e^{-s d_s}/2)

    Float and complex inputs are evaluated with a common exponential factor
    pulled out of numerator and denominator, so large ``|s d|`` does not
    overflow.  Multiprecision inputs use the formula as written.
    """
    if isinstance(s, _MP_TYPES):
        d, d_s, c, gamma, a, b = (gmpy2.mpfr(v) for v in (d, d_s, c, gamma, a, b))
        e1 = _exp(-s * d)
        e2 = _exp(-s * d_s)
        num = (e1 - e2 - 2) * s * gamma - s * s
        return num / (a * e1 / (d * d) + b * c * c * e2)
    z = complex(s)
    shift = max(0.0, -z.real * d, -z.real * d_s)
    e1 = cmath.exp(-z * d - shift)
    e2 = cmath.exp(-z * d_s - shift)
    k = math.exp(-shift)
    num = (e1 - e2 - 2 * k) * z * gamma - z * z * k
    den = a * e1 / (d * d) + b * c * c * e2
    out = num / den
    if isinstance(s, complex):
        return out
    return out.real


def _discriminant(gamma, d, d_s):
    # 5d^2g^2 - 2dg^2d_s + 2dg - 3g^2d_s^2 - 2gd_s + 1 regrouped as a sum of
    # squares-like positive terms to avoid cancellation
    return (gamma * (d - d_s) + 1.0) ** 2 + 4.0 * gamma * gamma * (d - d_s) * (d + d_s)


def s_star(gamma, d, d_s):
    """Negative real bound on ``s`` for the marking-gain recipe.

    (-sqrt(D) - d gamma + gamma d_s - 1) / (gamma (d^2 - d_s^2)) with D the
    discriminant 5d^2g^2 - 2dg^2d_s + 2dg - 3g^2d_s^2 - 2gd_s + 1.
    """
    if d == d_s:
        raise StabilityError("s_star is singular for d == d_s")
    if not gamma > 0:
        raise StabilityError(f"s_star is singular for gamma <= 0 (gamma={gamma})")
    disc = _discriminant(gamma, d, d_s)
    if disc < 0:
        raise StabilityError(f"negative discriminant {disc}")
    value = (-math.sqrt(disc) - d * gamma + gamma * d_s - 1.0) / (gamma * (d - d_s) * (d + d_s))
    if not value < 0:
        raise StabilityError(f"s_star = {value} is not negative (d={d}, d_s={d_s})")
    return value


def _loop(params, like=None):
    if isinstance(params, FluidParams):
        params = params.a, params.b, params.c, params.d, params.d_s
    if isinstance(like, _MP_TYPES):
        params = tuple(gmpy2.mpfr(v) for v in params)
    return params


def char_residual(s, eta, params):
    """Evaluate the characteristic quasi-polynomial at ``s``.

    ``params`` is a :class:`FluidParams` or a tuple ``(a, b, c, d, d_s)``.
    """
    a, b, c, d, d_s = _loop(params, like=s)
    g = a * b * c / (a + b * c * c * d * d)
    alpha = eta * a / (d * d)
    omega = b * c * c * eta
    try:
        e1 = _exp(-s * d)
        e2 = _exp(-s * d_s)
    except OverflowError as exc:
        raise StabilityError(f"exp overflow at s={s}; evaluate with extended precision") from exc
    return s * s + (2 - e1 + e2) * g * s + alpha * e1 + omega * e2


def char_derivative(s, eta, params):
    a, b, c, d, d_s = _loop(params, like=s)
    g = a * b * c / (a + b * c * c * d * d)
    alpha = eta * a / (d * d)
    omega = b * c * c * eta
    e1 = _exp(-s * d)
    e2 = _exp(-s * d_s)
    return (
        2 * s
        + (2 - e1 + e2) * g
        + g * s * (d * e1 - d_s * e2)
        - alpha * d * e1
        - omega * d_s * e2
    )


def eta_identity_residual(c, d, d_s, s_factor=1.05, a=1.0, b=0.5, extra_bits=96):
    """|f(s, eta_for(s))| at s = s_factor * s_star, evaluated in multiprecision.

    The working precision grows with the size of e^{-sd} so the absolute
    residual reflects the algebra rather than rounding.  Returns
    ``(abs_residual, s, eta, bits)``.
    """
    g = gamma(a, b, c, d)
    s0 = s_factor * s_star(g, d, d_s)
    mag = max(0.0, -s0 * d, -s0 * d_s) / math.log(2.0)
    mag += math.log2(1.0 + abs(s0)) * 2 + math.log2(1.0 + g + c * c)
    bits = int(mag) + extra_bits
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        s = gmpy2.mpfr(s0)
        am, bm, cm, dm = (gmpy2.mpfr(v) for v in (a, b, c, d))
        gm = am * bm * cm / (am + bm * cm * cm * dm * dm)
        eta = eta_for(s, d, d_s, c, gm, a=a, b=b)
        res = char_residual(s, eta, (a, b, c, d, d_s))
        return float(abs(res)), s0, float(eta), bits


@dataclass(frozen=True)
class Region:
    """Rectangle Re in [re_min, re_max], Im in [0, im_max] of the s-plane."""

    re_min: float
    re_max: float
    im_max: float

    def contains(self, z, tol=0.0):
        return (
            self.re_min - tol <= z.real <= self.re_max + tol
            and -tol <= z.imag <= self.im_max + tol
        )


def default_region(d):
    return Region(re_min=-5.0 / d, re_max=0.5 / d, im_max=20.0 / d)


@dataclass
class RootScan:
    roots: list = field(default_factory=list)
    unconverged: int = 0
    seeds: int = 0

    @property
    def max_real(self):
        if not self.roots:
            return float("nan")
        return max(r.real for r in self.roots)

    def __len__(self):
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)


def _f_and_df(z, g, alpha, omega, d, d_s):
    e1 = np.exp(-z * d)
    e2 = np.exp(-z * d_s)
    f = z * z + (2 - e1 + e2) * g * z + alpha * e1 + omega * e2
    df = 2 * z + (2 - e1 + e2) * g + g * z * (d * e1 - d_s * e2) - alpha * d * e1 - omega * d_s * e2
    return f, df


def find_dominant_roots(eta, params, region=None, n_re=48, n_im=96, max_iter=80, tol=1e-8):
    """Roots of the characteristic equation inside ``region`` (upper half plane).

    Seeds a regular grid, runs damped Newton from every seed, keeps
    converged points inside the region and merges those closer than
    ``tol`` (relative to ``max(1, |s|)``).  Conjugates are implied.
    """
    a, b, c, d, d_s = _loop(params)
    region = region or default_region(d)
    g = gamma(a, b, c, d)
    alpha = eta * a / d**2
    omega = b * c * c * eta

    re = np.linspace(region.re_min, region.re_max, n_re)
    im = np.linspace(0.0, region.im_max, n_im)
    z = (re[:, None] + 1j * im[None, :]).ravel()
    f, df = _f_and_df(z, g, alpha, omega, d, d_s)
    done = np.zeros(z.shape, dtype=bool)
    alive = np.ones(z.shape, dtype=bool)
    span = max(region.re_max - region.re_min, region.im_max, 1e-300)

    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            act = alive & ~done
            if not act.any():
                break
            step = np.where(act, f / df, 0)
            lam = np.ones(z.shape)
            absf = np.abs(f)
            znew, fnew, dfnew = z, f, df
            for _ in range(12):
                trial = z - lam * step
                ft, dft = _f_and_df(trial, g, alpha, omega, d, d_s)
                better = np.abs(ft) <= absf
                accept = act & better & np.isfinite(ft)
                znew = np.where(accept, trial, znew)
                fnew = np.where(accept, ft, fnew)
                dfnew = np.where(accept, dft, dfnew)
                pending = act & ~better
                if not pending.any():
                    break
                lam = np.where(pending, lam * 0.5, lam)
                act = pending
            moved = np.abs(znew - z)
            z, f, df = znew, fnew, dfnew
            scale = np.maximum(1.0, np.abs(z))
            done |= alive & (moved <= 1e-13 * scale) & np.isfinite(z)
            # seeds that wander far outside the region are abandoned
            far = (z.real < region.re_min - span) | (z.real > region.re_max + span) | (
                np.abs(z.imag) > region.im_max + span
            )
            alive &= ~far & np.isfinite(z)

    fscale = np.abs(z) ** 2 + g * np.abs(z) * 4 + abs(alpha) * np.abs(np.exp(-z * d)) + abs(omega) * np.abs(
        np.exp(-z * d_s)
    )
    ok = done & (np.abs(f) <= 1e-9 * np.maximum(fscale, 1.0))
    roots = []
    for r in z[ok]:
        r = complex(r.real, abs(r.imag))
        if abs(r.imag) <= 1e-10 * max(1.0, abs(r)):
            r = complex(r.real, 0.0)
        if not region.contains(r, tol=1e-9 * span):
            continue
        if any(abs(r - q) <= tol * max(1.0, abs(r)) for q in roots):
            continue
        roots.append(r)
    failed = int((~ok & ~alive).sum() + (~done & alive).sum())
    if failed:
        log.debug("root scan: %d of %d seeds did not converge", failed, z.size)
    roots.sort(key=lambda r: (-r.real, r.imag))
    return RootScan(roots=roots, unconverged=failed, seeds=int(z.size))


@dataclass
class FluidTrajectory:
    t: np.ndarray
    w: np.ndarray
    r: np.ndarray
    x: np.ndarray
    step: float

    def final(self):
        return self.w[-1], self.x[-1]


def integrate_fluid(params: FluidParams, horizon, step, w0=1.0, x0=0.0, w_min=1.0):
    """RK4 integration of the window equation coupled with the bottleneck queue.

    dw/dt = a/w r(t-d) (1 - eta [x(t - tau_r - tau_q) - x*]^+)
            - b w r(t - tau_s) eta [x(t - tau_rs) - x*]^+
    dx/dt = r(t - tau_f) - c   while x > 0 or the inflow exceeds c
    r(t)  = w(t) / d

    Delayed terms are linearly interpolated on the step grid; the history on
    [-d, 0] is constant at (w0, x0).
    """
    p = params
    d, d_s = p.d, p.d_s
    if step <= 0 or horizon <= 0:
        raise StabilityError("step and horizon must be positive")
    if step > min(d_s, d) / 50.0:
        raise StabilityError(f"step {step} exceeds min(d, d_s)/50 = {min(d_s, d) / 50.0}")
    n = int(math.ceil(horizon / step))
    w = np.empty(n + 1)
    x = np.empty(n + 1)
    w[0], x[0] = w0, x0
    a, b, c, eta, xs = p.a, p.b, p.c, p.eta, p.x_star
    lag_ack = p.tau + p.tau_q
    lag_unmarked_q = p.tau_r + p.tau_q
    lag_mark = p.tau_s
    lag_mark_q = p.tau_rs
    lag_in = p.tau_f

    def past(arr, k, off):
        # value of arr at time k*step - off, k may be fractional
        pos = k - off / step
        if pos <= 0:
            return arr[0]
        if pos >= k_known:
            return arr[k_known]
        i = int(pos)
        frac = pos - i
        return arr[i] + (arr[i + 1] - arr[i]) * frac

    def rhs(k, wi, xi):
        wi = max(wi, w_min)
        r_ack = past(w, k, lag_ack) / d
        xa = past(x, k, lag_unmarked_q) - xs
        r_mark = past(w, k, lag_mark) / d
        xb = past(x, k, lag_mark_q) - xs
        dw = a / wi * r_ack * (1.0 - eta * (xa if xa > 0 else 0.0))
        dw -= b * wi * r_mark * eta * (xb if xb > 0 else 0.0)
        inflow = past(w, k, lag_in) / d
        dx = inflow - c if (xi > 0 or inflow > c) else 0.0
        return dw, dx

    h = step
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            k_known = k
            wk, xk = w[k], x[k]
            k1w, k1x = rhs(k, wk, xk)
            k2w, k2x = rhs(k + 0.5, wk + 0.5 * h * k1w, max(xk + 0.5 * h * k1x, 0.0))
            k3w, k3x = rhs(k + 0.5, wk + 0.5 * h * k2w, max(xk + 0.5 * h * k2x, 0.0))
            k4w, k4x = rhs(k + 1, wk + h * k3w, max(xk + h * k3x, 0.0))
            wn = wk + h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
            xn = xk + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            if not (math.isfinite(wn) and math.isfinite(xn)):
                raise StabilityError(
                    f"non-finite state at t={(k + 1) * h:.6g}s: w={wn}, x={xn} (last w={wk}, x={xk})"
                )
            w[k + 1] = max(wn, w_min)
            x[k + 1] = max(xn, 0.0)
    t = np.arange(n + 1) * h
    return FluidTrajectory(t=t, w=w, r=w / d, x=x, step=h)


REPORT_COLUMNS = (
    "a", "b", "c", "d", "d_s", "s", "gamma", "eta", "alpha", "omega", "s_star", "max_root_re", "verdict",
)


@dataclass
class StabilityReport:
    a: float
    b: float
    c: float
    d: float
    d_s: float
    s: float = float("nan")
    gamma: float = float("nan")
    eta: float = float("nan")
    alpha: float = float("nan")
    omega: float = float("nan")
    s_star: float = float("nan")
    max_root_re: float = float("nan")
    verdict: str = "error"
    roots: list = field(default_factory=list, repr=False)
    error: str = ""

    def row(self):
        out = asdict(self)
        out.pop("roots")
        err = out.pop("error")
        if err:
            out["verdict"] = f"error: {err}"
        return {k: out[k] for k in REPORT_COLUMNS}


def stability_report(c, d, d_s, a=1.0, b=0.5, s_factor=1.05, eta_scale=1.0, region=None):
    """Run the marking-gain recipe for one (c, d, d_s) and classify the result.

    The verdict is ``unstable`` when a root with positive real part is found
    in the region, or when alpha + omega < 0: then f(0) < 0 while
    f(s) -> +inf along the positive real axis, so a positive real root exists
    even if it lies outside the searched rectangle.  A root on the imaginary
    axis (eta = 0 puts one at the origin) gives ``marginal``.
    """
    rep = StabilityReport(a=a, b=b, c=c, d=d, d_s=d_s)
    try:
        g = gamma(a, b, c, d)
        rep.gamma = g
        rep.s_star = s_star(g, d, d_s)
        rep.s = s_factor * rep.s_star
        rep.eta = eta_for(rep.s, d, d_s, c, g, a=a, b=b) * eta_scale
        rep.alpha = rep.eta * a / d**2
        rep.omega = b * c * c * rep.eta
        scan = find_dominant_roots(rep.eta, (a, b, c, d, d_s), region or default_region(d))
    except StabilityError as exc:
        rep.error = str(exc)
        return rep
    rep.roots = scan.roots
    rep.max_root_re = scan.max_real
    # roots this close to the imaginary axis count as on it
    tol = 1e-9 / d
    if rep.alpha + rep.omega < 0 or (scan.roots and rep.max_root_re > tol):
        rep.verdict = "unstable"
    elif rep.alpha + rep.omega == 0 or (scan.roots and rep.max_root_re >= -tol):
        rep.verdict = "marginal"
    else:
        rep.verdict = "stable"
    return rep


def stability_sweep(c, d, ds_values, **kw):
    return [stability_report(c, d, ds, **kw) for ds in ds_values]
