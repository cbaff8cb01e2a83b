"""Paris-law crack growth: integration, parameter fitting, growth-path scatter.

Crack length ``a`` is used exactly as it enters the Paris law and the
centre-crack geometry factor; ``b`` is the equivalent half-width fitted to
data, so any half/total length convention is absorbed into ``b``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize, minimize_scalar

from .errors import NumericalError, ValidationError
from .loading import LoadBlock, LoadingSpec

log = logging.getLogger(__name__)

A_MIN = 0.1  # mm; the cycle integral is singular at a = 0
TRUNCATION_FRACTION = 0.99
A_LIMIT = 1e6  # mm; hard stop for infinite-width geometry
DEFAULT_STEP = 25.0  # cycles per RK4 step
K_MAX = 200.0
Z90 = 1.6448536269514722  # standard normal 95th percentile


@dataclass(frozen=True)
class GeometrySpec:
    half_width_b_mm: float = math.inf

    def __post_init__(self):
        if not self.half_width_b_mm > 0:
            raise ValidationError("half width b must be positive")

    @property
    def cap(self) -> float:
        """Largest crack length the integrator will carry."""
        return _cap(self.half_width_b_mm)


def _cap(b: float) -> float:
    return min(TRUNCATION_FRACTION * b, A_LIMIT)


INFINITE_WIDTH = GeometrySpec()


@dataclass(frozen=True)
class ParisParams:
    C: float
    m: float

    def __post_init__(self):
        if not (math.isfinite(self.C) and math.isfinite(self.m)) or self.C < 0 or self.m < 0:
            raise ValidationError(f"invalid Paris parameters C={self.C}, m={self.m}")


@dataclass(frozen=True, eq=False)
class CrackGrowthCurve:
    cycles: np.ndarray
    crack_mm: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        n = np.asarray(self.cycles, dtype=float)
        a = np.asarray(self.crack_mm, dtype=float)
        if n.shape != a.shape or n.ndim != 1:
            raise ValidationError("cycles and crack lengths must be equal-length 1-D")
        if n.size > 1 and np.any(np.diff(n) <= 0):
            raise ValidationError("cycles must be strictly increasing")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValidationError("crack lengths must be finite and non-negative")
        object.__setattr__(self, "cycles", n)
        object.__setattr__(self, "crack_mm", a)

    def __len__(self):
        return self.cycles.size


def _as_loading(loading) -> LoadingSpec:
    if isinstance(loading, LoadingSpec):
        return loading
    ds = float(loading)
    return LoadingSpec((LoadBlock(ds, 0.0, None),))


# ---------------------------------------------------------------- physics

def geometry_factor(a_mm: float, geom: GeometrySpec = INFINITE_WIDTH) -> float:
    """sqrt(sec(pi a / 2b)) for a centre-cracked plate of half-width b."""
    b = geom.half_width_b_mm
    if a_mm < 0:
        raise ValidationError("crack length must be non-negative")
    if a_mm >= b:
        raise ValidationError("crack exceeds geometry validity")
    if math.isinf(b):
        return 1.0
    return math.sqrt(1.0 / math.cos(math.pi * a_mm / (2.0 * b)))


def delta_k(a_mm: float, delta_sigma: float, geom: GeometrySpec = INFINITE_WIDTH) -> float:
    """Stress intensity factor range in MPa sqrt(mm)."""
    return geometry_factor(a_mm, geom) * delta_sigma * math.sqrt(math.pi * a_mm)


def growth_rate(a_mm: float, params: ParisParams, delta_sigma: float,
                geom: GeometrySpec = INFINITE_WIDTH) -> float:
    """da/dN = C (dK)^m in mm/cycle."""
    if params.C == 0.0:
        return 0.0
    return params.C * delta_k(a_mm, delta_sigma, geom) ** params.m


def _rate(a: float, C: float, m: float, ds: float, b: float, cap: float) -> float:
    # fast scalar path of growth_rate; clamps RK stages into the valid range
    if a > cap:
        a = cap
    elif a < 1e-12:
        a = 1e-12
    k = ds * math.sqrt(math.pi * a)
    if b != math.inf:
        k /= math.sqrt(math.cos(math.pi * a / (2.0 * b)))
    return C * k**m


def _march(a: float, C: float, m: float, b: float, loading: LoadingSpec,
           n_from: float, n_to: float, max_step: float) -> tuple[float, bool]:
    """RK4 from n_from to n_to (either direction). Returns (a, hit_limit)."""
    cap = _cap(b)
    for s0, s1, ds in loading.segments(n_from, n_to):
        span = s1 - s0
        nsub = max(1, math.ceil(abs(span) / max_step - 1e-9))
        h = span / nsub
        for _ in range(nsub):
            k1 = _rate(a, C, m, ds, b, cap)
            k2 = _rate(a + 0.5 * h * k1, C, m, ds, b, cap)
            k3 = _rate(a + 0.5 * h * k2, C, m, ds, b, cap)
            k4 = _rate(a + h * k3, C, m, ds, b, cap)
            a = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if a >= cap:
                return cap, True
            if a < A_MIN and h < 0:
                return A_MIN, True
    return a, False


def _rate_vec(a: np.ndarray, C: float, m: float, ds: float, b: float, cap: float) -> np.ndarray:
    a = np.clip(a, 1e-12, cap)
    k = ds * np.sqrt(np.pi * a)
    if b != math.inf:
        k = k / np.sqrt(np.cos(np.pi * a / (2.0 * b)))
    return C * k**m


def advance_many(a: np.ndarray, params: ParisParams, loading, geom: GeometrySpec,
                 n_from: float, n_to: float, step: float = DEFAULT_STEP,
                 retardation: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised forward RK4 of many crack lengths under one parameter set.

    Returns the new lengths and a mask of those clamped at the validity cap.
    Uses the same step subdivision as :func:`integrate_growth`.
    """
    loading = _as_loading(loading)
    b = geom.half_width_b_mm
    cap = _cap(b)
    C = params.C * (retardation if not loading.is_constant_amplitude else 1.0)
    m = params.m
    a = np.array(a, dtype=float)
    hit = a >= cap
    for s0, s1, ds in loading.segments(n_from, n_to):
        span = s1 - s0
        nsub = max(1, math.ceil(abs(span) / step - 1e-9))
        h = span / nsub
        for _ in range(nsub):
            k1 = _rate_vec(a, C, m, ds, b, cap)
            k2 = _rate_vec(a + 0.5 * h * k1, C, m, ds, b, cap)
            k3 = _rate_vec(a + 0.5 * h * k2, C, m, ds, b, cap)
            k4 = _rate_vec(a + h * k3, C, m, ds, b, cap)
            a_new = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            newly = (a_new >= cap) | hit
            a = np.where(newly, cap, a_new)
            hit = newly
    return a, hit


def crack_at_cycles(a0: float, params: ParisParams, loading, geom: GeometrySpec,
                    n_start: float, cycles, step: float = DEFAULT_STEP,
                    retardation: float = 1.0) -> tuple[np.ndarray, bool]:
    """Crack length at arbitrary ``cycles`` from the anchor ``(n_start, a0)``.

    Cycles before the anchor are reached by integrating backwards (clamped at
    ``A_MIN``); cycles after the validity cap report the cap. Returns the
    values in input order and whether any limit was hit.
    """
    loading = _as_loading(loading)
    b = geom.half_width_b_mm
    if a0 >= _cap(b):
        raise ValidationError("initial crack exceeds geometry validity")
    C = params.C * (retardation if not loading.is_constant_amplitude else 1.0)
    cyc = np.asarray(cycles, dtype=float)
    out = np.empty_like(cyc)
    limited = False
    order = np.argsort(cyc, kind="stable")
    fwd = [i for i in order if cyc[i] >= n_start]
    bwd = [i for i in order[::-1] if cyc[i] < n_start]
    for idx_list in (fwd, bwd):
        a, n = a0, n_start
        stopped = False
        for i in idx_list:
            if not stopped:
                a, stopped = _march(a, C, params.m, b, loading, n, cyc[i], step)
                n = cyc[i]
                limited |= stopped
            out[i] = a
    return out, limited


def integrate_growth(a0_mm: float, params: ParisParams, loading, geom: GeometrySpec,
                     n_cycles: float, step: float = DEFAULT_STEP, start_cycle: float = 0.0,
                     retardation: float = 1.0) -> CrackGrowthCurve:
    """RK4 crack growth from ``a0_mm`` over ``n_cycles`` cycles.

    Each loading block is integrated with its own stress range. Output points
    sit every ``step`` cycles; the curve stops early (``truncated=True``)
    once the crack reaches 0.99 b. ``retardation`` scales C under
    variable-amplitude loading only.
    """
    if a0_mm <= 0:
        raise ValidationError("initial crack must be positive")
    if step < 1:
        raise ValidationError("step must be >= 1 cycle")
    if a0_mm >= geom.half_width_b_mm:
        raise ValidationError("initial crack exceeds geometry validity")
    loading = _as_loading(loading)
    b = geom.half_width_b_mm
    C = params.C * (retardation if not loading.is_constant_amplitude else 1.0)
    nsteps = max(1, math.ceil(n_cycles / step - 1e-9))
    grid = start_cycle + np.minimum(np.arange(nsteps + 1) * step, n_cycles)
    ns, as_ = [grid[0]], [a0_mm]
    a, truncated = a0_mm, False
    for n0, n1 in zip(grid[:-1], grid[1:]):
        a, truncated = _march(a, C, params.m, b, loading, n0, n1, step)
        ns.append(n1)
        as_.append(a)
        if truncated:
            break
    return CrackGrowthCurve(np.array(ns), np.array(as_), truncated)


# ------------------------------------------------------------- quadrature

def _adaptive_simpson(f, lo: float, hi: float, rtol: float, max_depth: int = 50) -> float:
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    fa, fb = f(lo), f(hi)
    fm = f(0.5 * (lo + hi))
    whole = simpson(fa, fm, fb, lo, hi)
    # coarse estimate sets the absolute tolerance
    coarse = abs(whole) if whole != 0 else 1.0
    return recurse(lo, hi, fa, fm, fb, whole, rtol * coarse, max_depth)


def cycles_between(a1_mm: float, a2_mm: float, params: ParisParams, delta_sigma: float,
                   geom: GeometrySpec = INFINITE_WIDTH, rtol: float = 1e-8) -> float:
    """Cycles to grow from a1 to a2 under constant ``delta_sigma``."""
    if a1_mm == a2_mm:
        return 0.0
    if not (0 < a1_mm < a2_mm < geom.half_width_b_mm):
        raise ValidationError("need 0 < a1 < a2 < b")
    if params.C == 0:
        return math.inf

    def inv_rate(a):
        return 1.0 / growth_rate(a, params, delta_sigma, geom)

    # integrate in log a: the integrand is much smoother there
    def g(u):
        a = math.exp(u)
        return a * inv_rate(a)

    return _adaptive_simpson(g, math.log(a1_mm), math.log(a2_mm), rtol * 1e-2)


# ---------------------------------------------------------------- fitting

def _initial_guess(n: np.ndarray, a: np.ndarray, loading: LoadingSpec,
                   geom: GeometrySpec) -> tuple[float, float]:
    """(log C, m) from a log-log regression of finite-difference rates on dK."""
    dn = np.diff(n)
    da = np.diff(a)
    amid = 0.5 * (a[1:] + a[:-1])
    ok = (da > 0) & (amid > 0) & (amid < geom.cap)
    ds = loading.blocks[0].delta_sigma if loading.is_constant_amplitude else float(
        np.mean([b.delta_sigma for b in loading.blocks]))
    if ok.sum() >= 2:
        logk = np.log([delta_k(x, ds, geom) for x in amid[ok]])
        logr = np.log(da[ok] / dn[ok])
        if np.ptp(logk) > 1e-9:
            m, logC = np.polyfit(logk, logr, 1)
            if 0.5 <= m <= 10:
                return float(logC), float(m)
    m = 3.0
    rate = max((a[-1] - a[0]) / (n[-1] - n[0]), 1e-12)
    k = delta_k(float(np.mean(a)), ds, geom)
    return float(math.log(rate) - m * math.log(k)), m


def _predict(logC, m, b, a0, n0, cycles, loading, step) -> np.ndarray:
    geom = GeometrySpec(b)
    vals, _ = crack_at_cycles(a0, ParisParams(math.exp(logC), m), loading, geom, n0,
                              cycles, step=step)
    return vals


def _fit_step(curve: CrackGrowthCurve, loading: LoadingSpec) -> float:
    span = curve.cycles[-1] - curve.cycles[0]
    return max(1.0, min(DEFAULT_STEP * 4, span / 400.0))


def fit_paris(curve: CrackGrowthCurve, loading, geom: GeometrySpec = INFINITE_WIDTH,
              max_evals: int = 2000, initial: ParisParams | None = None,
              fixed_m: float | None = None, anchor: str = "first") -> ParisParams:
    """Least-squares (C, m) for a measured crack-growth curve.

    Minimises the squared crack-length error of the RK4 prediction anchored at
    the first point, using Nelder-Mead. Internally ``log C`` is replaced by the
    log growth rate at a reference dK (same minimiser, better conditioned).
    With ``fixed_m`` only ``C`` is fitted (Brent on the log rate).
    ``anchor="last"`` pins the prediction to the final point instead and
    integrates backwards to the earlier ones.
    """
    if len(curve) < 3:
        raise ValidationError("insufficient points")
    loading = _as_loading(loading)
    n, a = curve.cycles, np.maximum(curve.crack_mm, A_MIN)
    if a.max() >= geom.cap:
        raise ValidationError("crack exceeds geometry validity")
    if anchor not in ("first", "last"):
        raise ValidationError(f"unknown anchor {anchor!r}")
    k = 0 if anchor == "first" else -1
    a0, n0 = float(a[k]), float(n[k])
    tn, ta = np.delete(n, k), np.delete(a, k)
    step = _fit_step(curve, loading)
    if initial is not None and initial.C > 0:
        logC0, m0 = math.log(initial.C), initial.m
    else:
        logC0, m0 = _initial_guess(n, a, loading, geom)
    ds_ref = loading.blocks[-1].delta_sigma
    logk_ref = math.log(delta_k(float(np.exp(np.mean(np.log(a)))), ds_ref, geom))
    scale = float(np.dot(ta, ta)) or 1.0
    b = geom.half_width_b_mm

    def objective(theta):
        logr, m = theta
        if not (0.0 < m < 20.0):
            return 1e30
        logC = logr - m * logk_ref
        pred = _predict(logC, m, b, a0, n0, tn, loading, step)
        r = pred - ta
        return float(np.dot(r, r)) / scale

    if fixed_m is not None:
        if not 0.0 < fixed_m < 20.0:
            raise ValidationError("fixed_m must lie in (0, 20)")
        rate = max((a[-1] - a[0]) / (n[-1] - n[0]), 1e-12)
        k_mid = delta_k(float(np.mean(a)), ds_ref, geom)
        r0 = math.log(rate) - fixed_m * (math.log(k_mid) - logk_ref)
        res = minimize_scalar(lambda r: objective((r, fixed_m)), bracket=(r0 - 1.0, r0 + 1.0),
                              method="brent", options=dict(xtol=1e-10, maxiter=max_evals))
        if not res.success:
            raise NumericalError(f"Paris fit did not converge: {res.message}")
        return ParisParams(math.exp(float(res.x) - fixed_m * logk_ref), float(fixed_m))

    x0 = np.array([logC0 + m0 * logk_ref, m0])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options=dict(maxfev=max_evals, xatol=1e-9, fatol=1e-16,
                                initial_simplex=np.array([x0, x0 + [0.3, 0.0], x0 + [0.0, 0.3]])))
    if not res.success:
        raise NumericalError(f"Paris fit did not converge: {res.message}")
    logr, m = res.x
    return ParisParams(math.exp(logr - m * logk_ref), float(m))


@dataclass(frozen=True)
class WidthFit:
    geometry: GeometrySpec
    b_std_mm: float
    per_curve_b_mm: tuple[float, ...]
    per_curve_params: tuple[ParisParams, ...]
    weakly_identified: tuple[bool, ...]

    @property
    def any_weak(self) -> bool:
        return any(self.weakly_identified)


def _fit_width_one(curve: CrackGrowthCurve, loading: LoadingSpec, max_evals: int,
                   flat_tol: float = 0.01) -> tuple[float, ParisParams, bool]:
    n, a = curve.cycles, np.maximum(curve.crack_mm, A_MIN)
    a0, n0 = float(a[0]), float(n[0])
    tn, ta = n[1:], a[1:]
    step = _fit_step(curve, loading)
    b_floor = float(a.max()) / TRUNCATION_FRACTION
    scale = float(np.dot(ta, ta)) or 1.0
    ds_ref = loading.blocks[-1].delta_sigma

    def unpack(theta):
        logr, m, u = theta
        b = b_floor + math.exp(u)
        logk_ref = math.log(ds_ref * math.sqrt(math.pi * float(np.exp(np.mean(np.log(a))))))
        return logr - m * logk_ref, m, b, logk_ref

    def objective_at(logC, m, b):
        pred = _predict(logC, m, b, a0, n0, tn, loading, step)
        r = pred - ta
        return float(np.dot(r, r)) / scale

    def objective(theta):
        logC, m, b, _ = unpack(theta)
        if not (0.0 < m < 20.0):
            return 1e30
        return objective_at(logC, m, b)

    # seed b from a coarse profile over a few widths
    best = None
    for mult in (1.2, 1.5, 2.0, 3.0, 6.0):
        b_try = b_floor * mult
        p = fit_paris(curve, loading, GeometrySpec(b_try), max_evals=max_evals)
        val = objective_at(math.log(p.C), p.m, b_try)
        if best is None or val < best[0]:
            best = (val, b_try, p)
    _, b0, p0 = best
    logk_ref = math.log(ds_ref * math.sqrt(math.pi * float(np.exp(np.mean(np.log(a))))))
    x0 = np.array([math.log(p0.C) + p0.m * logk_ref, p0.m, math.log(b0 - b_floor)])
    simplex = np.array([x0, x0 + [0.2, 0, 0], x0 + [0, 0.2, 0], x0 + [0, 0, 0.5]])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options=dict(maxfev=max_evals, xatol=1e-8, fatol=1e-16,
                                initial_simplex=simplex))
    if not res.success:
        raise NumericalError(f"width fit did not converge: {res.message}")
    logC, m, b, _ = unpack(res.x)
    jstar = objective_at(logC, m, b)
    floor = 1e-12
    probes = []
    for fac in (0.5, 2.0):
        bp = max(b * fac, b_floor * 1.0001)
        probes.append(objective_at(logC, m, bp))
    weak = all(p <= jstar * (1 + flat_tol) + floor for p in probes)
    return float(b), ParisParams(math.exp(logC), float(m)), weak


def fit_width(curves: Sequence[CrackGrowthCurve], loading, max_evals: int = 2000) -> WidthFit:
    """Joint (C, m, b) fit per curve; b is averaged across curves.

    A curve whose objective changes by less than 1% when b is halved or
    doubled is flagged as weakly identifying b.
    """
    if not curves:
        raise ValidationError("fit_width needs at least one curve")
    loading = _as_loading(loading)
    bs, ps, weak = [], [], []
    for c in curves:
        if len(c) < 3:
            raise ValidationError("insufficient points")
        b, p, w = _fit_width_one(c, loading, max_evals)
        bs.append(b)
        ps.append(p)
        weak.append(w)
    arr = np.array(bs)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return WidthFit(GeometrySpec(float(arr.mean())), std, tuple(bs), tuple(ps), tuple(weak))


# ---------------------------------------------------------------- Weibull

def weibull_mle(x, k_max: float = K_MAX, tol: float = 1e-10) -> tuple[float, float]:
    """Two-parameter Weibull MLE ``(shape k, scale lambda)``.

    Newton iterations on the profile shape equation, safeguarded by a
    bracket, started from the method-of-moments shape. The shape is capped at
    ``k_max`` (zero or near-zero scatter).
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValidationError("Weibull fit needs >= 2 positive finite samples")
    y = np.log(x / x.max())
    ybar = y.mean()

    def g_and_dg(k):
        w = np.exp(k * y)
        s0 = w.sum()
        s1 = np.dot(w, y)
        s2 = np.dot(w, y * y)
        mu = s1 / s0
        g = mu - 1.0 / k - ybar
        dg = s2 / s0 - mu * mu + 1.0 / k**2
        return g, dg

    def scale(k):
        return float(x.max() * np.mean(np.exp(k * y)) ** (1.0 / k))

    if np.ptp(y) < 1e-14 or g_and_dg(k_max)[0] < 0:
        return float(k_max), scale(k_max)

    cv = x.std() / x.mean()
    k = float(np.clip(cv ** -1.086, 0.05, k_max)) if cv > 0 else k_max
    lo, hi = 1e-6, float(k_max)
    for _ in range(200):
        g, dg = g_and_dg(k)
        if g > 0:
            hi = k
        else:
            lo = k
        k_new = k - g / dg
        if not (lo < k_new < hi):
            k_new = 0.5 * (lo + hi)
        if abs(k_new - k) <= tol * max(1.0, k):
            k = k_new
            break
        k = k_new
    else:
        raise NumericalError("Weibull shape iteration did not converge")
    return float(k), scale(k)


def weibull_quantile(k: float, lam: float, q) -> np.ndarray:
    return lam * (-np.log1p(-np.asarray(q, dtype=float))) ** (1.0 / k)


QUANTILES = {"lower5": 0.05, "mean": 0.50, "upper95": 0.95}


@dataclass(frozen=True, eq=False)
class GrowthPathDistribution:
    """Growth-path scatter: Weibull fits of cycles at each grid crack length.

    ``lower5`` is the early/fast curve (5% quantile of cycles), ``upper95``
    the late/slow one; ``mean`` is the 50% quantile. Each curve carries Paris
    parameters refitted to its quantile points and is anchored at the first
    grid crack length.
    """

    crack_grid: np.ndarray
    shapes: np.ndarray
    scales: np.ndarray
    quantile_cycles: dict
    mean_params: ParisParams
    lower5_params: ParisParams
    upper95_params: ParisParams
    loading: LoadingSpec
    geometry: GeometrySpec
    step: float = DEFAULT_STEP
    per_curve_params: tuple = field(default_factory=tuple)

    def params(self, which: str) -> ParisParams:
        return {"mean": self.mean_params, "lower5": self.lower5_params,
                "upper95": self.upper95_params}[which]

    def anchor(self, which: str) -> tuple[float, float]:
        return float(self.quantile_cycles[which][0]), float(self.crack_grid[0])

    def crack_at(self, which: str, cycles) -> np.ndarray:
        """Crack length on one quantile curve at the given cycles."""
        cyc = np.asarray(cycles, dtype=float)
        if np.any(cyc < 0):
            raise ValidationError("cycles must be non-negative")
        n0, a0 = self.anchor(which)
        vals, _ = crack_at_cycles(a0, self.params(which), self.loading, self.geometry, n0,
                                  cyc, step=self.step)
        return vals


def default_crack_grid(curves: Sequence[CrackGrowthCurve], n_points: int = 20) -> np.ndarray:
    """Grid spanning the crack range shared by every curve, strictly inside it."""
    lo = max(float(c.crack_mm[0]) for c in curves)
    hi = min(float(c.crack_mm[-1]) for c in curves)
    if hi <= lo:
        raise ValidationError("curves share no crack-length range")
    pad = 0.02 * (hi - lo)
    return np.linspace(lo + pad, hi - pad, n_points)


def fit_growth_distribution(curves: Sequence[CrackGrowthCurve], loading,
                            geom: GeometrySpec, crack_grid=None,
                            k_max: float = K_MAX) -> GrowthPathDistribution:
    """Weibull scatter of cycles-to-reach each grid crack length, plus quantile fits."""
    if len(curves) < 3:
        raise ValidationError("need at least 3 curves for a growth-path distribution")
    loading = _as_loading(loading)
    grid = default_crack_grid(curves) if crack_grid is None else np.asarray(crack_grid, float)
    if grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise ValidationError("crack grid must be strictly increasing with >= 3 points")
    cyc = np.empty((len(curves), grid.size))
    for i, c in enumerate(curves):
        a = c.crack_mm
        if np.any(np.diff(a) <= 0):
            raise ValidationError(f"curve {i} is not strictly increasing in crack length")
        if grid[0] < a[0] or grid[-1] > a[-1]:
            raise ValidationError(f"grid point outside the range of curve {i}")
        # N(a) is concave; shape-preserving cubic in log a tracks it far better than chords
        cyc[i] = PchipInterpolator(np.log(a), c.cycles)(np.log(grid))
    shapes = np.empty(grid.size)
    scales = np.empty(grid.size)
    for j in range(grid.size):
        shapes[j], scales[j] = weibull_mle(cyc[:, j], k_max=k_max)
    qcyc = {name: weibull_quantile(shapes, scales, q) for name, q in QUANTILES.items()}
    fitted = {}
    for name, nq in qcyc.items():
        if np.any(np.diff(nq) <= 0):
            raise NumericalError(f"{name} quantile curve is not increasing in cycles")
        fitted[name] = fit_paris(CrackGrowthCurve(nq, grid), loading, geom)
    return GrowthPathDistribution(
        crack_grid=grid, shapes=shapes, scales=scales, quantile_cycles=qcyc,
        mean_params=fitted["mean"], lower5_params=fitted["lower5"],
        upper95_params=fitted["upper95"], loading=loading, geometry=geom,
    )


@dataclass(frozen=True)
class CurveSelection:
    name: str
    params: ParisParams
    mean_abs_residual: dict
    mean_signed_residual: dict


def select_growth_curve(dist: GrowthPathDistribution, nn_estimates,
                        a_min: float = A_MIN) -> CurveSelection:
    """Quantile curve closest (mean |residual| in crack length) to the estimates.

    Ties within 1e-9 go to the mean curve.
    """
    est = list(nn_estimates)
    if not est:
        raise ValidationError("need at least one estimate")
    n = np.array([e[0] for e in est], dtype=float)
    a = np.maximum(np.array([e[1] for e in est], dtype=float), a_min)
    mae, signed = {}, {}
    for name in ("mean", "lower5", "upper95"):
        r = a - dist.crack_at(name, n)
        mae[name] = float(np.mean(np.abs(r)))
        signed[name] = float(np.mean(r))
    best = "mean"
    for name in ("lower5", "upper95"):
        if mae[name] < mae[best] - 1e-9:
            best = name
    return CurveSelection(best, dist.params(best), mae, signed)
