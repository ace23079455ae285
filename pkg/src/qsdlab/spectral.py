"""Spectral decomposition of the absorbed generator on a truncated domain.

The generator (1/2) d^2/dx^2 - q d/dx with absorption at 0 is unitarily
equivalent, through multiplication by exp(-Q/2), to a Schrodinger operator
-(1/2) d^2/dx^2 + w with w = (q^2 - q')/2.  That operator is discretized
by a finite-volume scheme on a graded grid with Dirichlet walls at both
truncation points, symmetrized by the cell-length weights, and solved with
the tridiagonal bisection + inverse-iteration eigensolver.

Discrete structure everything downstream relies on: with cell lengths d_i,
the returned psi vectors satisfy sum_i psi_k(i) psi_l(i) d_i = delta_kl to
machine precision, so the eta vectors (eta = exp(Q/2) psi) are orthonormal
in the discrete absorption measure mu_i = d_i exp(-Q(x_i)).  Semigroup
identities (survival started from the quasi-stationary profile, kernel
composition, conditioned-process row sums) then hold exactly on the grid,
and their checks probe floating-point noise only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import (IntegrabilityError, PreconditionError,
                     SurvivalUnderflowError, TailDominatedError,
                     TruncationError)
from .model import DriftField, potential
from .quadrature import classify_growth

_PSI_FLOOR = 1e-200          # below this, a mode amplitude is numerical dust
_TAIL_RATIO = 1e10           # kernel refuses t where the dropped tail could
                             # still be within this factor of the lead mode


@dataclass(frozen=True)
class TruncationDomain:
    """Dirichlet box (x_min, x_max) with n interior nodes.

    grid_kind "sqrt" compresses nodes toward the origin (mode amplitudes
    of population-style drifts vanish like a fractional power there);
    "uniform" spaces them evenly.  The sqrt compression bottoms out at the
    scale of x_min itself: clustering finer than the wall position buys no
    resolution (nothing varies below that scale) and inflates the matrix
    norm until eigenvalues drown in roundoff.
    """
    x_min: float
    x_max: float
    n: int = 2048
    grid_kind: str = "sqrt"

    def validate(self):
        problems = []
        if not (0.0 < self.x_min < 1.0):
            problems.append(f"x_min must sit in (0, 1), got {self.x_min!r}")
        if not (self.x_max > 1.0):
            problems.append(f"x_max must exceed 1, got {self.x_max!r}")
        if self.n < 64:
            problems.append(f"need at least 64 interior nodes, got {self.n}")
        if self.grid_kind not in ("uniform", "sqrt"):
            problems.append(f"unknown grid_kind {self.grid_kind!r}")
        if problems:
            raise PreconditionError("; ".join(problems))

    def full_grid(self):
        """All n+2 nodes including the two Dirichlet walls."""
        self.validate()
        u = np.linspace(0.0, 1.0, self.n + 2)
        if self.grid_kind == "sqrt":
            L = self.x_max - self.x_min
            s = self.x_min
            v = np.sqrt(s) + u * (np.sqrt(L + s) - np.sqrt(s))
            return self.x_min + (v * v - s)
        return self.x_min + (self.x_max - self.x_min) * u


def default_domain(d: DriftField, n: int = 2048, x_min: float = 1e-3) -> TruncationDomain:
    """Pick a box large enough that the confinement wall dwarfs the low modes."""
    w = potential(d)
    x_max = 4.0
    while x_max < 512.0:
        wv = float(w(x_max))
        if np.isfinite(wv) and wv > 200.0:
            break
        x_max *= 1.5
    kind = "sqrt" if d.origin_exponent > 0 else "uniform"
    return TruncationDomain(x_min=x_min, x_max=x_max, n=n, grid_kind=kind)


@dataclass(frozen=True)
class SpectralDecomposition:
    domain: TruncationDomain
    drift: DriftField
    K: int
    grid: np.ndarray          # (n,) interior nodes
    cell: np.ndarray          # (n,) finite-volume cell lengths d_i
    lambdas: np.ndarray       # (K,) increasing positive levels
    psis: np.ndarray          # (n, K), sum_i psi_k psi_l d_i = delta_kl
    etas: np.ndarray          # (n, K), eta = exp(Q/2) psi
    Qgrid: np.ndarray         # (n,) potential on the grid
    mu_weights: np.ndarray    # (n,) d_i exp(-Q_i)
    eta_masses: np.ndarray    # (K,) <eta_k, 1> in the absorption measure
    diag: np.ndarray = field(repr=False, default=None)
    off: np.ndarray = field(repr=False, default=None)

    @property
    def lambda1(self):
        return float(self.lambdas[0])

    @property
    def eta1_mass(self):
        return float(self.eta_masses[0])

    def node_index(self, x):
        """Nearest interior node to x (vectorized over x)."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.grid, xs)
        idx = np.clip(idx, 1, len(self.grid) - 1)
        left = self.grid[idx - 1]
        right = self.grid[idx]
        out = np.where(xs - left <= right - xs, idx - 1, idx)
        return out if np.ndim(x) else int(out[0])

    def t_min(self, K: Optional[int] = None) -> float:
        """Shortest time the K-mode kernel can honestly represent."""
        k = self.K if K is None else K
        if k < 2:
            return np.inf
        gap = float(self.lambdas[k - 1] - self.lambdas[0])
        if gap <= 0:
            return np.inf
        return float(np.log(_TAIL_RATIO) / gap)


def build_and_solve(d: DriftField, domain: Optional[TruncationDomain] = None,
                    K: int = 16) -> SpectralDecomposition:
    """Assemble the symmetrized operator and extract the lowest K modes."""
    if domain is None:
        domain = default_domain(d)
    domain.validate()
    if K < 1:
        raise PreconditionError(f"need K >= 1 modes, got {K}")
    if K > domain.n // 4:
        raise PreconditionError(
            f"K={K} modes from n={domain.n} nodes: discrete levels above "
            f"n/4 carry no continuum meaning; enlarge n or reduce K")

    xf = domain.full_grid()
    x = xf[1:-1]
    h = np.diff(xf)                      # n+1 spacings
    dcell = 0.5 * (h[:-1] + h[1:])       # n cell lengths

    with np.errstate(all="ignore"):
        w = np.asarray(potential(d)(x), dtype=float)
    if not np.all(np.isfinite(w)):
        raise TruncationError("confinement term not finite on the grid; "
                              "shrink the box or inspect the drift")

    diag = (1.0 / h[:-1] + 1.0 / h[1:]) / (2.0 * dcell) + w
    off = -1.0 / (2.0 * h[1:-1] * np.sqrt(dcell[:-1] * dcell[1:]))

    lam, phi = eigh_tridiagonal(diag, off, select="i",
                                select_range=(0, K - 1))
    lam = np.asarray(lam, dtype=float)
    phi = np.asarray(phi, dtype=float)

    if lam[0] <= 0:
        raise TruncationError(
            f"ground level {lam[0]:.6g} is not positive: the truncated box "
            f"does not see the absorbing decay (box too small or drift "
            f"not admissible)")
    gaps = np.diff(lam)
    tol = 1e-10 * np.maximum(1.0, np.abs(lam[:-1]))
    if np.any(gaps < tol):
        k = int(np.argmax(gaps < tol))
        raise TruncationError(
            f"levels {k + 1} and {k + 2} cluster within 1e-10 "
            f"({lam[k]:.12g} vs {lam[k + 1]:.12g}); enlarge the box or n")

    # cell weights turn the l2-orthonormal columns into discretely
    # measure-orthonormal mode profiles
    psi = phi / np.sqrt(dcell)[:, None]

    # deterministic sign: the largest-amplitude component points up
    for k in range(K):
        i_star = int(np.argmax(np.abs(psi[:, k])))
        if psi[i_star, k] < 0:
            psi[:, k] = -psi[:, k]

    Qg = np.asarray(d.Q(x), dtype=float)
    amp = np.abs(psi)
    tiny = amp < _PSI_FLOOR
    with np.errstate(divide="ignore", over="ignore"):
        eta = np.sign(psi) * np.exp(0.5 * Qg[:, None] + np.log(amp))
    eta[tiny] = 0.0
    if not np.all(np.isfinite(eta)):
        raise TruncationError("mode profile overflowed while unweighting; "
                              "the box extends past representable range")

    mu_w = dcell * np.exp(-Qg)
    # <eta_k, 1>_mu computed in the half-weighted form (never huge x tiny)
    masses = (psi * (np.exp(-0.5 * Qg) * dcell)[:, None]).sum(axis=0)

    return SpectralDecomposition(
        domain=domain, drift=d, K=K, grid=x, cell=dcell,
        lambdas=lam, psis=psi, etas=eta, Qgrid=Qg, mu_weights=mu_w,
        eta_masses=masses, diag=diag, off=off)


# ---------------------------------------------------------------------------
# quasi-stationary profile

@dataclass(frozen=True)
class YaglomMeasure:
    grid: np.ndarray
    density: np.ndarray       # nonnegative, integrates to 1 against cell
    cdf: np.ndarray
    cell: np.ndarray
    mass_norm: float          # <eta_1, 1>_mu before normalization
    lambda1: float            # decay rate the profile belongs to

    @property
    def density_vs_lebesgue(self):
        return self.density

    def mean(self):
        return float(np.sum(self.grid * self.density * self.cell))

    def quantile(self, p):
        ps = np.atleast_1d(np.asarray(p, dtype=float))
        idx = np.searchsorted(self.cdf, ps)
        idx = np.clip(idx, 0, len(self.grid) - 1)
        out = self.grid[idx]
        return out if np.ndim(p) else float(out[0])


def eta1_mass_trail(sd: SpectralDecomposition):
    """Partial masses of the ground profile on geometric prefixes."""
    half = sd.psis[:, 0] * np.exp(-0.5 * sd.Qgrid) * sd.cell
    cum = np.cumsum(half)
    cuts = []
    partials = []
    for c in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0):
        if c <= sd.grid[0]:
            continue
        if c >= sd.grid[-1]:
            cuts.append(float(sd.grid[-1]))
            partials.append(float(cum[-1]))
            break
        i = int(np.searchsorted(sd.grid, c))
        cuts.append(c)
        partials.append(float(cum[i - 1] if i > 0 else 0.0))
    return cuts, partials


def yaglom_measure(sd: SpectralDecomposition) -> YaglomMeasure:
    """Normalized ground-mode profile in the absorption measure."""
    cuts, partials = eta1_mass_trail(sd)
    status, growth = classify_growth(cuts, partials,
                                     rel_tol=1e-6, abs_tol=1e-12)
    if status == "diverges":
        raise IntegrabilityError(
            f"ground-profile mass keeps growing across the box "
            f"(growth model: {growth}); the quasi-stationary profile is "
            f"not normalizable for this drift")
    dens = sd.psis[:, 0] * np.exp(-0.5 * sd.Qgrid)
    mass = float(np.sum(dens * sd.cell))
    if not (mass > 0 and np.isfinite(mass)):
        raise IntegrabilityError("ground-profile mass is not a positive "
                                 "finite number")
    dens = np.maximum(dens, 0.0) / mass
    cdf = np.cumsum(dens * sd.cell)
    cdf /= cdf[-1]
    return YaglomMeasure(grid=sd.grid, density=dens, cdf=cdf,
                         cell=sd.cell, mass_norm=mass, lambda1=sd.lambda1)


def yaglom_to_z(ym: YaglomMeasure, gamma: float) -> YaglomMeasure:
    """Push the profile to the population coordinate z = gamma x^2 / 4."""
    if gamma <= 0:
        raise PreconditionError(f"gamma must be positive, got {gamma!r}")
    zg = gamma * ym.grid * ym.grid / 4.0
    dens = ym.density * 2.0 / (gamma * ym.grid)
    zcell = np.gradient(zg)
    return YaglomMeasure(grid=zg, density=dens, cdf=ym.cdf.copy(),
                         cell=zcell, mass_norm=ym.mass_norm,
                         lambda1=ym.lambda1)


# ---------------------------------------------------------------------------
# kernels and semigroup identities

def kernel_r(sd: SpectralDecomposition, t: float, xs, ys,
             K: Optional[int] = None) -> np.ndarray:
    """Mode-sum transition kernel density against mu, at nearest grid nodes.

    Refuses times shorter than t_min(K): there the dropped modes are not
    provably negligible and the truncated sum would silently misrepresent
    the kernel.
    """
    k = sd.K if K is None else int(K)
    if not 1 <= k <= sd.K:
        raise PreconditionError(f"K={k} not in 1..{sd.K}")
    tm = sd.t_min(k)
    if t < tm:
        raise TailDominatedError(t, tm, k)
    ix = sd.node_index(np.atleast_1d(xs))
    iy = sd.node_index(np.atleast_1d(ys))
    decay = np.exp(-sd.lambdas[:k] * t)
    ex = sd.etas[ix][:, :k]
    ey = sd.etas[iy][:, :k]
    out = (ex * decay) @ ey.T
    if ix.shape == iy.shape and np.array_equal(ix, iy):
        # a diagonal query is symmetric by construction; the matrix
        # product rounds the two triangles independently, so enforce it
        out = 0.5 * (out + out.T)
    return out


def kernel_tail_bound(sd: SpectralDecomposition, t: float, x, y,
                      K: Optional[int] = None) -> float:
    """Crude bound on the mode-sum remainder past K at time t.

    Split each decay factor in half, pull exp(-lam_K t / 2) out of the
    tail, and Cauchy-Schwarz what remains against the on-diagonal square
    sum envelope (2 pi s)^(-1/2) exp(C s) exp(Q) at s = t/4.
    """
    k = sd.K if K is None else int(K)
    lamK = float(sd.lambdas[min(k, sd.K) - 1])
    C = max(sd.drift.C, 0.0)
    s = t / 4.0
    logB = -0.5 * np.log(2.0 * np.pi * s) + C * s
    Qx = float(sd.drift.Q(x))
    Qy = float(sd.drift.Q(y))
    return float(np.exp(-0.5 * lamK * t + 0.5 * (logB + Qx) + 0.5 * (logB + Qy)))


def survival(sd: SpectralDecomposition, t, init) -> np.ndarray:
    """Survival probability at times t for an initial condition.

    init is ("point", x0), ("yaglom", YaglomMeasure), or ("density", values)
    with values a nonnegative density on the grid (normalized internally).

    Point and density starts are refused below t_min (the dropped modes
    could still matter there); a quasi-stationary start is exact at every
    t >= 0 because only the ground mode survives the projection.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise PreconditionError("survival needs t >= 0")
    if init[0] != "yaglom":
        tm = sd.t_min()
        if np.any(ts < tm):
            raise TailDominatedError(float(np.min(ts)), tm, sd.K)
    coeffs = _mode_coefficients(sd, init)
    out = np.exp(-np.outer(ts, sd.lambdas)) @ (coeffs * sd.eta_masses)
    return out if np.ndim(t) else float(out[0])


def _mode_coefficients(sd: SpectralDecomposition, init) -> np.ndarray:
    kind = init[0]
    if kind == "point":
        i = sd.node_index(float(init[1]))
        return sd.etas[i, :]
    if kind == "yaglom":
        ym: YaglomMeasure = init[1]
        if ym.grid.shape != sd.grid.shape or not np.allclose(ym.grid, sd.grid):
            raise PreconditionError("profile grid does not match the "
                                    "decomposition grid")
        return _density_coefficients(sd, ym.density)
    if kind == "density":
        vals = np.asarray(init[1], dtype=float)
        if vals.shape != sd.grid.shape:
            raise PreconditionError("density values must live on the grid")
        if np.any(vals < 0):
            raise PreconditionError("density values must be nonnegative")
        mass = float(np.sum(vals * sd.cell))
        if mass <= 0:
            raise PreconditionError("density has no mass on the grid")
        return _density_coefficients(sd, vals / mass)
    raise PreconditionError(f"unknown initial condition kind {kind!r}")


def _density_coefficients(sd, dens):
    # integral of eta_k against the density, in the half-weighted form
    return (sd.psis * (dens * np.exp(0.5 * sd.Qgrid) * sd.cell)[:, None]).sum(axis=0)


@dataclass(frozen=True)
class ConditionalDensity:
    t: float
    grid: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    cell: np.ndarray
    survival: float


def conditional_density(sd: SpectralDecomposition, t: float, x0: float,
                        K: Optional[int] = None) -> ConditionalDensity:
    """Full grid density of the process at time t given it still lives."""
    k = sd.K if K is None else int(K)
    tm = sd.t_min(k)
    if t < tm:
        raise TailDominatedError(t, tm, k)
    i0 = sd.node_index(float(x0))
    decay = np.exp(-sd.lambdas[:k] * t)
    # r(t, x0, y) exp(-Q(y)) = sum_k decay_k eta_k(x0) psi_k(y) exp(-Q(y)/2)
    coef = decay * sd.etas[i0, :k]
    vals = (sd.psis[:, :k] @ coef) * np.exp(-0.5 * sd.Qgrid)
    surv = float(np.sum(vals * sd.cell))
    if not np.isfinite(surv) or surv < 1e-300:
        raise SurvivalUnderflowError(
            f"survival from x0={x0:g} at t={t:g} underflowed "
            f"({surv!r}); condition on a shorter horizon")
    dens = np.maximum(vals, 0.0)
    mass = float(np.sum(dens * sd.cell))
    dens = dens / mass
    cdf = np.cumsum(dens * sd.cell)
    cdf /= cdf[-1]
    return ConditionalDensity(t=t, grid=sd.grid, density=dens, cdf=cdf,
                              cell=sd.cell, survival=surv)


def _interval_indicator(sd: SpectralDecomposition, interval) -> np.ndarray:
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        raise PreconditionError(f"interval needs b > a, got ({a!r}, {b!r})")
    return ((sd.grid > a) & (sd.grid <= b)).astype(float)


def conditional_law(sd: SpectralDecomposition, init, t: float,
                    interval) -> float:
    """Probability the surviving process sits in the interval at time t.

    Ratio of the interval-restricted to the full survival sum; the initial
    condition union matches survival().
    """
    ts = float(t)
    if init[0] != "yaglom":
        tm = sd.t_min()
        if ts < tm:
            raise TailDominatedError(ts, tm, sd.K)
    coeffs = _mode_coefficients(sd, init)
    ind = _interval_indicator(sd, interval)
    mA = (sd.psis * (ind * np.exp(-0.5 * sd.Qgrid) * sd.cell)[:, None]).sum(axis=0)
    decay = np.exp(-sd.lambdas * ts)
    den = float(np.sum(decay * coeffs * sd.eta_masses))
    if not np.isfinite(den) or den < 1e-300:
        raise SurvivalUnderflowError(
            f"survival at t={ts:g} underflowed ({den!r}); "
            f"condition on a shorter horizon")
    num = float(np.sum(decay * coeffs * mA))
    return min(max(num / den, 0.0), 1.0)


# ---------------------------------------------------------------------------
# convergence-rate forecast

@dataclass(frozen=True)
class RateReport:
    gap: float                # spectral gap between the two lowest levels
    coefficient: float        # leading-order prefactor for the interval
    ts: np.ndarray
    diffs: np.ndarray         # conditional probability minus limit value
    slope: float
    intercept: float
    limit_value: float


def rate_report(sd: SpectralDecomposition, x0: float, interval,
                ts: Optional[np.ndarray] = None) -> RateReport:
    """Exponential approach of the conditioned interval mass to its limit.

    The conditioned probability of the interval approaches the limit like
    coefficient * exp(-gap * t) with the two-mode prefactor
    (eta_2(x)/eta_1(x)) (<1,eta_1><1_A,eta_2> - <1,eta_2><1_A,eta_1>) / <1,eta_1>^2;
    the report also carries the exact spectral differences and the
    straight-line fit of their logs.
    """
    if sd.K < 3:
        raise PreconditionError("need at least three modes for a rate")
    ind = _interval_indicator(sd, interval)
    if ts is None:
        ts = np.linspace(1.0, 4.0, 25)
    ts = np.asarray(ts, dtype=float)

    i0 = sd.node_index(float(x0))
    m = sd.eta_masses
    # <eta_k, 1_A>_mu in the half-weighted form
    mA = (sd.psis * (ind * np.exp(-0.5 * sd.Qgrid) * sd.cell)[:, None]).sum(axis=0)
    limit = mA[0] / m[0]
    eta_x = sd.etas[i0, :]
    gap = float(sd.lambdas[1] - sd.lambdas[0])
    coef = (eta_x[1] / eta_x[0]) * (mA[1] * m[0] - mA[0] * m[1]) / (m[0] ** 2)

    rel = np.exp(-np.outer(ts, sd.lambdas - sd.lambdas[0]))
    num = rel @ (eta_x * mA)
    den = rel @ (eta_x * m)
    diffs = num / den - limit

    good = np.abs(diffs) > 0
    if np.count_nonzero(good) < 3:
        raise PreconditionError("interval does not separate the modes; "
                                "pick a different one")
    slope, intercept = np.polyfit(ts[good], np.log(np.abs(diffs[good])), 1)
    return RateReport(gap=gap, coefficient=float(coef), ts=ts, diffs=diffs,
                      slope=float(slope), intercept=float(intercept),
                      limit_value=float(limit))


# ---------------------------------------------------------------------------
# probability-flux audit

@dataclass(frozen=True)
class FluxReport:
    F0: float                 # flux at the left edge of the measure bulk
    Finf: float               # flux at the right edge of the measure bulk
    lhs: float                # <eta_1, 1> in the absorption measure
    rhs: float                # (F0 - Finf) / (2 lambda_1)
    rel_discrepancy: float
    flux_decreasing: bool
    eta1_nondecreasing: bool
    bulk: tuple               # (left index, right index) of the trimmed bulk


def flux_check(sd: SpectralDecomposition, tail_mass: float = 1e-9) -> FluxReport:
    """Audit the ground mode through its probability flux.

    The flux F = eta_1' exp(-Q) is computed in the stable half-weighted
    form (psi' + q psi) exp(-Q/2); integrating the eigenvalue equation
    turns the total mass of the ground profile into a boundary-flux
    difference.  Both the identity and the monotonicity statements are
    checked on the measure-bulk of the grid: the Dirichlet collars force
    the computed mode to bend toward the walls, a truncation artifact with
    measure below tail_mass on each side.
    """
    ym = yaglom_measure(sd)
    lo = int(np.searchsorted(ym.cdf, tail_mass))
    hi = int(np.searchsorted(ym.cdf, 1.0 - tail_mass))
    hi = min(max(hi, lo + 8), len(sd.grid) - 1)

    psi1 = sd.psis[:, 0]
    dpsi = np.gradient(psi1, sd.grid)
    qg = np.asarray(sd.drift.q(sd.grid), dtype=float)
    F = (dpsi + qg * psi1) * np.exp(-0.5 * sd.Qgrid)

    F0 = float(F[lo])
    Finf = float(F[hi])
    rhs = (F0 - Finf) / (2.0 * sd.lambda1)
    lhs = sd.eta1_mass
    rel = abs(rhs - lhs) / abs(lhs)

    Fb = F[lo:hi + 1]
    # the gradient is second-order accurate; near-flat stretches of F show
    # truncation wiggles around 1e-8 of the flux scale, so the monotonicity
    # slack must sit above that noise floor
    slack = 1e-6 * max(1.0, float(np.max(np.abs(Fb))))
    flux_dec = bool(np.all(np.diff(Fb) <= slack))

    eta1b = sd.etas[lo:hi + 1, 0]
    slack_e = 1e-9 * max(1.0, float(np.max(np.abs(eta1b))))
    eta_inc = bool(np.all(np.diff(eta1b) >= -slack_e))

    return FluxReport(F0=F0, Finf=Finf, lhs=float(lhs), rhs=float(rhs),
                      rel_discrepancy=float(rel), flux_decreasing=flux_dec,
                      eta1_nondecreasing=eta_inc, bulk=(lo, hi))


# ---------------------------------------------------------------------------
# conditioned process (never absorbed)

def qprocess_row(sd: SpectralDecomposition, t: float, x0: float,
                 K: Optional[int] = None):
    """One transition row of the never-absorbed process on the grid.

    Returns (probabilities, row_sum): probabilities against the grid cells.
    The row sum is exactly 1 up to rounding because the mode profiles are
    discretely orthonormal.
    """
    k = sd.K if K is None else int(K)
    tm = sd.t_min(k)
    if t < tm:
        raise TailDominatedError(t, tm, k)
    i0 = sd.node_index(float(x0))
    u = np.exp(-(sd.lambdas[:k] - sd.lambdas[0]) * t)
    eta_x = sd.etas[i0, :k]
    if eta_x[0] == 0.0:
        raise PreconditionError(f"ground profile vanishes at x0={x0:g}; "
                                f"start the conditioned process in the bulk")
    c = u * eta_x / eta_x[0]
    probs = sd.psis[:, 0] * (sd.psis[:, :k] @ c) * sd.cell
    return probs, float(np.sum(probs))


def qprocess_kernel(sd: SpectralDecomposition, t: float, x0s,
                    K: Optional[int] = None) -> np.ndarray:
    """Stack of conditioned-process rows for several starting points."""
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    rows = [qprocess_row(sd, t, float(x), K=K)[0] for x in x0s]
    return np.vstack(rows)


def qprocess_stationary(sd: SpectralDecomposition):
    """Stationary density of the conditioned process: the squared ground mode."""
    dens = sd.psis[:, 0] ** 2
    mass = float(np.sum(dens * sd.cell))
    return dens / mass


# ---------------------------------------------------------------------------
# kernel bounds

@dataclass(frozen=True)
class BoundPair:
    lhs: float
    rhs: float
    satisfied: bool


@dataclass(frozen=True)
class BoundReport:
    name: str
    max_ratio: float          # largest value / bound over the probes
    n_violations: int
    detail: str


def appendix_bound_check(sd: SpectralDecomposition, x: float, y: float,
                         t: float = 1.0) -> BoundPair:
    """Weighted-mode kernel against the reflected Gaussian comparison.

    lhs is the symmetrized kernel r(t,x,y) exp(-(Q(x)+Q(y))/2) (equal to
    the plain mode sum over psi); rhs is exp(C t / 2) times the half-line
    heat kernel with an absorbing wall at 0.
    """
    tm = sd.t_min()
    if t < tm:
        raise TailDominatedError(t, tm, sd.K)
    ix = sd.node_index(float(x))
    iy = sd.node_index(float(y))
    xn, yn = float(sd.grid[ix]), float(sd.grid[iy])
    lhs = float(np.sum(np.exp(-sd.lambdas * t) * sd.psis[ix, :] * sd.psis[iy, :]))
    heat = (np.exp(-(xn - yn) ** 2 / (2.0 * t))
            - np.exp(-(xn + yn) ** 2 / (2.0 * t))) / np.sqrt(2.0 * np.pi * t)
    C = max(sd.drift.C, 0.0)
    rhs = float(np.exp(0.5 * C * t) * heat)
    return BoundPair(lhs=lhs, rhs=rhs, satisfied=bool(lhs <= rhs * (1.0 + 1e-6)))


def appendix_bound_sweep(sd: SpectralDecomposition, xs=None,
                         t: float = 1.0) -> BoundReport:
    """appendix_bound_check vectorized over a probe grid of (x, y) pairs."""
    tm = sd.t_min()
    if t < tm:
        raise TailDominatedError(t, tm, sd.K)
    if xs is None:
        xs = np.linspace(0.1, 5.0, 50)
    xs = np.asarray(xs, dtype=float)
    idx = sd.node_index(xs)
    xn = sd.grid[idx]
    decay = np.exp(-sd.lambdas * t)
    P = sd.psis[idx, :]
    val = (P * decay) @ P.T

    Xm, Ym = np.meshgrid(xn, xn, indexing="ij")
    heat = (np.exp(-(Xm - Ym) ** 2 / (2.0 * t))
            - np.exp(-(Xm + Ym) ** 2 / (2.0 * t))) / np.sqrt(2.0 * np.pi * t)
    C = max(sd.drift.C, 0.0)
    bound = np.exp(0.5 * C * t) * heat

    ok = bound > 1e-300
    ratio = np.where(ok, val / np.where(ok, bound, 1.0), 0.0)
    max_ratio = float(np.max(ratio))
    viol = int(np.count_nonzero(ratio > 1.0 + 1e-6))
    return BoundReport(
        name="image-kernel comparison",
        max_ratio=max_ratio, n_violations=viol,
        detail=f"{len(xs)}x{len(xs)} probes at t={t:g}, C={C:.6g}")


def l2_bound_check(sd: SpectralDecomposition, xs=(0.5, 1.0, 2.0),
                   ts=(0.5, 1.0)) -> BoundReport:
    """On-diagonal square sum against its closed-form envelope."""
    worst = 0.0
    viol = 0
    lines = []
    for t in ts:
        for x in xs:
            i = sd.node_index(float(x))
            val = float(np.sum(np.exp(-2.0 * sd.lambdas * t)
                               * sd.etas[i, :] ** 2))
            C = max(sd.drift.C, 0.0)
            bound = float(np.exp(C * t + float(sd.Qgrid[i]))
                          / np.sqrt(2.0 * np.pi * t))
            ratio = val / bound
            worst = max(worst, ratio)
            viol += int(ratio > 1.0 + 1e-9)
            lines.append(f"(x={x:g}, t={t:g}): {ratio:.3e}")
    return BoundReport(name="square-sum envelope", max_ratio=worst,
                       n_violations=viol, detail="; ".join(lines))
