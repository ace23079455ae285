"""Admissibility checks for absorbed diffusions and their growth forms.

The laboratory needs five structural properties of a drift field before the
spectral machinery applies, plus one growth-side property:

* h1: absorption is reachable and certain (infinite scale integral at
  infinity, finite exit integral at the origin),
* h2: the transformed generator confines (q^2 - q' bounded below, growing
  at infinity), so the spectrum is discrete,
* h3: the speed measure weighted by the confinement denominator is finite
  near the origin,
* h4: the speed measure has a finite tail and a finite square-root moment
  at the origin,
* h5: the return-time integral is finite (two equivalent double-integral
  forms; both are computed and must agree),
* hh: on the population scale, growth is eventually strongly negative
  (h(x)/sqrt(x) -> -inf) with vanishing relative curvature (x h'/h^2 -> 0).

All exp(Q) arithmetic is shift-stabilized: double integrals are evaluated
as integrals of exp(Q(y) - Q(z)), never as products of huge and tiny
factors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate as _si

from .errors import PreconditionError
from .model import DriftField, GrowthModel, Model
from .quadrature import IntegralVerdict, QuadratureSpec, integrate, positive_integrand

_H2_PROBE_DECADES = range(0, 7)
_HH_PROBE_DECADES = range(2, 9)
_H2_THRESHOLD = 100.0


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    verdict: str            # holds | fails | inconclusive
    key_quantity: str
    detail: str
    trail: object           # json-serializable probe or partial-integral trail


@dataclass(frozen=True)
class HypothesisReport:
    label: str
    checks: dict

    @property
    def verdicts(self):
        return {k: v.verdict for k, v in self.checks.items()}

    def all_hold(self, names=("h1", "h2", "h3", "h4", "h5")):
        return all(self.checks[n].verdict == "holds" for n in names)


# ---------------------------------------------------------------------------
# shift-stabilized inner integrals

def _decay_length(d: DriftField, y: float) -> float:
    qy = float(d.q(y))
    if np.isfinite(qy) and qy > 0.5 / (1.0 + y):
        return 1.0 / (2.0 * qy)
    return 1.0 + y


_GL2_A = 0.5 - 0.5 / np.sqrt(3.0)
_GL2_B = 0.5 + 0.5 / np.sqrt(3.0)


def _potential_step(d: DriftField, y: float, delta, sign: int):
    """Q(y + sign*delta) - Q(y) without cancellation.

    Short steps integrate 2q locally by two-point Gauss (exact through
    cubic drifts); long steps fall back to the potential difference.
    """
    delta = np.asarray(delta, dtype=float)
    out = np.empty_like(delta)
    # step must stay well inside the drift's own scale: q may be singular
    # like 1/(2y) at the origin, so the panel width is tied to y itself
    small = delta <= 0.05 * abs(y)
    if np.any(small):
        ds = delta[small]
        z1 = y + sign * _GL2_A * ds
        z2 = y + sign * _GL2_B * ds
        with np.errstate(all="ignore"):
            out[small] = sign * ds * (np.asarray(d.q(z1), dtype=float)
                                      + np.asarray(d.q(z2), dtype=float))
    if np.any(~small):
        db = delta[~small]
        Qy = float(d.Q(y))
        with np.errstate(all="ignore"):
            out[~small] = np.asarray(d.Q(y + sign * db), dtype=float) - Qy
    return out


def inner_tail(d: DriftField, y: float, hi: float = np.inf,
               spec: Optional[QuadratureSpec] = None) -> float:
    """int_y^hi exp(Q(y) - Q(z)) dz, evaluated in the decay-length coordinate."""
    spec = spec or QuadratureSpec()
    L = _decay_length(d, y)
    smax = np.inf if np.isinf(hi) else max((hi - y) / L, 0.0)
    if smax == 0.0:
        return 0.0

    def g(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            out = np.exp(-_potential_step(d, y, L * s, +1)) * L
        return np.where(np.isnan(out), np.inf, out)

    return _inner_value(g, smax, spec)


def inner_head(d: DriftField, y: float, lo: float = 1.0,
               spec: Optional[QuadratureSpec] = None) -> float:
    """int_lo^y exp(Q(z) - Q(y)) dz, evaluated in the decay-length coordinate."""
    spec = spec or QuadratureSpec()
    if y <= lo:
        return 0.0
    L = _decay_length(d, y)
    smax = (y - lo) / L

    def g(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            out = np.exp(_potential_step(d, y, L * s, -1)) * L
        return np.where(np.isnan(out), np.inf, out)

    return _inner_value(g, smax, spec)


def _inner_value(g, smax, spec):
    with np.errstate(all="ignore"):
        try:
            res = _si.tanhsinh(g, 0.0, smax, rtol=min(1e-11, spec.rel_tol),
                               atol=spec.abs_tol * 1e-3, maxlevel=13)
        except Exception:
            return np.inf
    val = float(res.integral)
    if not np.isfinite(val):
        return np.inf
    if res.success:
        return val
    # unconverged: decide between a heavy tail and a quadrature hiccup
    probe_s = min(smax, 1e6) if np.isfinite(smax) else 1e6
    tail_sample = float(np.asarray(g(np.array([probe_s])), dtype=float)[0])
    if tail_sample * probe_s > max(spec.abs_tol, 1e-6 * abs(val)):
        return np.inf
    return val


# ---------------------------------------------------------------------------
# individual checks

def check_h1(d: DriftField, spec: Optional[QuadratureSpec] = None) -> HypothesisCheck:
    """Certain absorption: scale integral diverges, origin exit integral finite."""
    spec = spec or QuadratureSpec()

    def eQ(y):
        with np.errstate(all="ignore"):
            out = np.exp(np.asarray(d.Q(y), dtype=float))
        return np.where(np.isnan(out), np.inf, out)

    scale = integrate(eQ, 1.0, np.inf, spec)

    def origin_f(ys):
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        return np.array([inner_tail(d, y, hi=1.0, spec=spec) for y in ys])

    origin = integrate(positive_integrand(origin_f), 0.0, 1.0, spec)

    if scale.status == "diverges" and origin.status == "converges":
        verdict = "holds"
    elif scale.status == "converges" or origin.status == "diverges":
        verdict = "fails"
    else:
        verdict = "inconclusive"
    detail = (f"scale@inf: {scale.status}({scale.growth_model}); "
              f"exit@0: {origin.status}"
              + (f", value={origin.value:.6g}" if origin.status == "converges" else
                 f"({origin.growth_model})"))
    return HypothesisCheck("h1", verdict, "scale integral / origin exit integral",
                           detail, {"scale": list(scale.trail),
                                    "origin": list(origin.trail)})


def check_h2(d: DriftField) -> HypothesisCheck:
    """Discrete spectrum: q^2 - q' bounded below and growing along probes."""
    xs = np.array([10.0 ** k for k in _H2_PROBE_DECADES])
    with np.errstate(all="ignore"):
        vals = np.asarray(d.q(xs), dtype=float) ** 2 - np.asarray(d.q_prime(xs), dtype=float)
    trail = list(zip(xs.tolist(), [float(v) for v in vals]))
    if not np.all(np.isfinite(vals)):
        # overflow upward is growth, not failure
        if np.any(np.isnan(vals)):
            return HypothesisCheck("h2", "inconclusive", "q^2 - q' probes",
                                   "non-finite probe values", trail)
        vals = np.where(np.isinf(vals), np.finfo(float).max, vals)
    tail_start = 0
    for i in range(len(vals) - 1):
        if vals[i + 1] <= vals[i]:
            tail_start = i + 1
    tail = vals[tail_start:]
    increasing_tail = len(tail) >= 3
    unbounded = increasing_tail and tail[-1] > _H2_THRESHOLD and tail[-1] > 1.2 * tail[0]
    verdict = "holds" if (increasing_tail and unbounded and np.isfinite(d.C)) else "fails"
    detail = (f"C={d.C:.6g}; probes rise from 10^{tail_start} on, "
              f"last={vals[-1]:.6g}" if verdict == "holds" else
              f"C={d.C:.6g}; probe trend not increasing to infinity "
              f"(last={vals[-1]:.6g})")
    return HypothesisCheck("h2", verdict, "q^2 - q' probes", detail, trail)


def check_h3(d: DriftField, spec: Optional[QuadratureSpec] = None) -> HypothesisCheck:
    """Weighted speed measure finite near the origin."""
    spec = spec or QuadratureSpec()
    C = d.C

    def f(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            den = np.asarray(d.q(y), dtype=float) ** 2 - np.asarray(d.q_prime(y), dtype=float) + C + 2.0
            out = np.exp(-np.asarray(d.Q(y), dtype=float)) / den
        return np.where(np.isnan(out), np.inf, out)

    v = integrate(f, 0.0, 1.0, spec)
    verdict = {"converges": "holds", "diverges": "fails"}.get(v.status, "inconclusive")
    detail = (f"value={v.value:.6g}" if v.status == "converges"
              else f"{v.status}({v.growth_model})")
    return HypothesisCheck("h3", verdict, "weighted speed measure at origin",
                           detail, list(v.trail))


def check_h4(d: DriftField, spec: Optional[QuadratureSpec] = None) -> HypothesisCheck:
    """Finite speed tail and finite root-moment at the origin."""
    spec = spec or QuadratureSpec()

    def emQ(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            out = np.exp(-np.asarray(d.Q(y), dtype=float))
        return np.where(np.isnan(out), np.inf, out)

    def root_moment(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            out = y * np.exp(-0.5 * np.asarray(d.Q(y), dtype=float))
        return np.where(np.isnan(out), np.inf, out)

    tail = integrate(emQ, 1.0, np.inf, spec)
    origin = integrate(root_moment, 0.0, 1.0, spec)
    if tail.status == "converges" and origin.status == "converges":
        verdict = "holds"
    elif tail.status == "diverges" or origin.status == "diverges":
        verdict = "fails"
    else:
        verdict = "inconclusive"
    detail = (f"speed tail: {tail.status}; root moment at 0: {origin.status}")
    return HypothesisCheck("h4", verdict, "speed tail / origin root moment", detail,
                           {"tail": list(tail.trail), "origin": list(origin.trail)})


def check_h5(d: DriftField, spec: Optional[QuadratureSpec] = None) -> HypothesisCheck:
    """Finite return-time integral, in both equivalent double-integral forms."""
    spec = spec or QuadratureSpec()

    def form_a(ys):
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        return np.array([inner_tail(d, y, spec=spec) for y in ys])

    def form_b(ys):
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        return np.array([inner_head(d, y, lo=1.0, spec=spec) for y in ys])

    va = integrate(positive_integrand(form_a), 1.0, np.inf, spec)
    vb = integrate(positive_integrand(form_b), 1.0, np.inf, spec)
    agree = va.status == vb.status
    if va.status == "converges" and vb.status == "converges":
        verdict = "holds"
    elif va.status == "diverges" and vb.status == "diverges":
        verdict = "fails"
    elif "diverges" in (va.status, vb.status) and "converges" in (va.status, vb.status):
        verdict = "inconclusive"  # the two forms must agree; disagreement is numerical
    else:
        verdict = "inconclusive"
    detail = (f"tail form: {va.status}({va.growth_model}); "
              f"entrance form: {vb.status}({vb.growth_model}); "
              f"agreement={'yes' if agree else 'NO'}")
    return HypothesisCheck("h5", verdict, "return-time integral (two forms)", detail,
                           {"tail_form": list(va.trail), "entrance_form": list(vb.trail)})


def check_hh(g: GrowthModel) -> HypothesisCheck:
    """Strong eventual decline of growth on the population scale."""
    xs = np.array([10.0 ** k for k in _HH_PROBE_DECADES])
    with np.errstate(all="ignore"):
        h = np.asarray(g.h(xs), dtype=float)
        hp = np.asarray(g.h_prime(xs), dtype=float)
        v1 = h / np.sqrt(xs)
        v2 = xs * hp / (h * h)
    trail = {"decline": list(zip(xs.tolist(), [float(v) for v in v1])),
             "curvature": list(zip(xs.tolist(), [float(v) for v in v2]))}
    tail1 = v1[-4:]
    cond1 = (np.all(np.isfinite(tail1)) and np.all(tail1 < 0)
             and np.all(np.diff(tail1) < 0) and tail1[-1] < -_H2_THRESHOLD)
    tail2 = v2[-4:]
    cond2 = (np.all(np.isfinite(tail2))
             and np.all(np.diff(np.abs(tail2)) <= 0) and abs(tail2[-1]) < 1e-2)
    verdict = "holds" if (cond1 and cond2) else "fails"
    detail = (f"decline last={v1[-1]:.6g} (want -> -inf); "
              f"relative curvature last={v2[-1]:.6g} (want -> 0)")
    return HypothesisCheck("hh", verdict, "growth decline / curvature probes",
                           detail, trail)


# ---------------------------------------------------------------------------
# extra diagnostics

@dataclass(frozen=True)
class InvQReport:
    x0: Optional[float]
    verdict: IntegralVerdict
    eventually_monotone: bool
    first_violation: Optional[float]


def inv_q_criterion(d: DriftField, spec: Optional[QuadratureSpec] = None,
                    window: int = 64) -> InvQReport:
    """For eventually positive drifts: finiteness of int dx / q.

    x0 is the first probe node from which q stays positive on `window`
    consecutive log-spaced nodes; the integral verdict then matches the
    return-time check for eventually monotone drifts.
    """
    spec = spec or QuadratureSpec()
    nodes = np.geomspace(1.0, 1e8, 513)
    with np.errstate(all="ignore"):
        qv = np.asarray(d.q(nodes), dtype=float)
    pos = qv > 0
    x0 = None
    start = None
    run = 0
    for i, p in enumerate(pos):
        run = run + 1 if p else 0
        if run >= window:
            start = i - window + 1
            break
    if start is None:
        raise PreconditionError("q has no positivity window on the probe grid")
    x0 = float(nodes[start])
    tail_q = qv[start:]
    viol = np.nonzero(np.diff(tail_q) < -1e-12 * np.abs(tail_q[:-1]))[0]
    monotone = viol.size == 0
    first_violation = float(nodes[start + 1 + viol[0]]) if viol.size else None

    def inv_q(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = 1.0 / np.asarray(d.q(x), dtype=float)
        return np.where(np.isnan(out), np.inf, out)

    v = integrate(inv_q, x0, np.inf, spec)
    return InvQReport(x0=x0, verdict=v, eventually_monotone=bool(monotone),
                      first_violation=first_violation)


def descent_functional(d: DriftField, x_a: float, x: float,
                       spec: Optional[QuadratureSpec] = None) -> float:
    """J(x) = int_{x_a}^x of the return-time integrand, anchored J(x_a) = 0.

    J solves J'' = 2 q J' - 1 with J'(y) the shift-stabilized tail integral;
    it is nonnegative and increasing on [x_a, inf).
    """
    spec = spec or QuadratureSpec()
    if x < x_a:
        raise PreconditionError("descent functional needs x >= x_a")
    probe = inner_tail(d, x_a, spec=spec)
    if not np.isfinite(probe):
        raise PreconditionError("return-time integrand infinite at x_a; "
                                "the descent functional is undefined")
    if x == x_a:
        return 0.0

    def f(ys):
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        return np.array([inner_tail(d, y, spec=spec) for y in ys])

    v = integrate(positive_integrand(f), x_a, x, spec)
    return float(v.value)


@dataclass(frozen=True)
class DescentReport:
    rate: float
    x_a: float
    y_a: float
    J_y_a: float
    moment_bound: float


def descent_report(d: DriftField, rate: float,
                   spec: Optional[QuadratureSpec] = None) -> DescentReport:
    """Exponential-moment certificate for downcrossing times.

    Picks x_a so the return-time tail mass beyond x_a is at most 1/(2 rate),
    sets y_a = x_a + 1, and reports the bound 1/(2 rate J(y_a)) on the
    exponential moment of the time to reach y_a from above.
    """
    spec = spec or QuadratureSpec()
    if rate <= 0:
        raise PreconditionError("rate must be positive")

    def f(ys):
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        return np.array([inner_tail(d, y, spec=spec) for y in ys])

    total = integrate(positive_integrand(f), 1.0, np.inf, spec)
    if total.status != "converges":
        raise PreconditionError("return-time integral does not converge; "
                                "no exponential-moment certificate")
    budget = 1.0 / (2.0 * rate)
    x_a = 1.0
    if total.value > budget:
        lo, hi = 1.0, 10.0
        while total.value - descent_functional(d, 1.0, hi, spec) > budget:
            lo, hi = hi, hi * 4.0
            if hi > 1e12:
                raise PreconditionError("tail mass does not drop below the budget")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if total.value - descent_functional(d, 1.0, mid, spec) > budget:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-9 * hi:
                break
        x_a = hi
    y_a = x_a + 1.0
    J_ya = descent_functional(d, x_a, y_a, spec)
    return DescentReport(rate=rate, x_a=x_a, y_a=y_a, J_y_a=J_ya,
                         moment_bound=1.0 / (2.0 * rate * J_ya))


# ---------------------------------------------------------------------------
# assembly

def check_all(model, spec: Optional[QuadratureSpec] = None) -> HypothesisReport:
    """Run every check on a Model (or bare DriftField)."""
    spec = spec or QuadratureSpec()
    if isinstance(model, Model):
        d = model.drift
        g = model.growth
        label = model.label
    elif isinstance(model, DriftField):
        d, g, label = model, None, model.name
    else:
        raise TypeError("expected a Model or DriftField")
    checks = {
        "h1": check_h1(d, spec),
        "h2": check_h2(d),
        "h3": check_h3(d, spec),
        "h4": check_h4(d, spec),
        "h5": check_h5(d, spec),
    }
    if g is not None:
        checks["hh"] = check_hh(g)
    else:
        checks["hh"] = HypothesisCheck(
            "hh", "inconclusive", "growth probes",
            "no growth form attached to this model", [])
    return HypothesisReport(label=label, checks=checks)


def report_to_rows(rep: HypothesisReport):
    """Rows for the hypotheses CSV: name, status, quantity, detail, trail json."""
    rows = []
    for name in ("h1", "h2", "h3", "h4", "h5", "hh"):
        c = rep.checks[name]
        rows.append((c.name, c.verdict, c.key_quantity, c.detail,
                     json.dumps(c.trail)))
    return rows
