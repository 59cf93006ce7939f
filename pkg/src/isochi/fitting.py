"""Data reduction: peaks, hyperfine constant, gap-mixture weights, Curie law, populations.

Every solver here is deterministic: linear problems are solved in closed
form or by exhaustive active-set enumeration, and the one nonlinear fit
(effective temperature) scans a fixed grid before a bounded refinement.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import optimize, signal

from isochi.errors import FitError
from isochi.material import (
    CURIE_GEOMETRY_111,
    DeltaDistribution,
    Material,
    total_spectrum,
)
from isochi.response import ResponseCurve
from isochi.units import MU_B_OVER_K_B

__all__ = [
    "Peak",
    "PeakSet",
    "FitResult",
    "PopulationInference",
    "detect_peaks",
    "fit_hyperfine_A",
    "fit_weights",
    "fit_curie",
    "infer_populations",
    "simplex_lsq",
]


class Peak(tuple):
    """``(field, height, width_estimate)``; field and width in tesla."""

    __slots__ = ()

    def __new__(cls, field_: float, height: float, width: float):
        return super().__new__(cls, (float(field_), float(height), float(width)))

    field = property(lambda self: self[0])
    height = property(lambda self: self[1])
    width = property(lambda self: self[2])

    def __repr__(self):
        return f"Peak(field={self[0]!r}, height={self[1]!r}, width={self[2]!r})"


@dataclass(frozen=True)
class PeakSet:
    peaks: tuple[Peak, ...]

    def __post_init__(self):
        peaks = tuple(sorted((Peak(*p) for p in self.peaks), key=lambda p: p.field))
        if any(p.height <= 0 for p in peaks):
            raise ValueError("peak heights must be positive")
        object.__setattr__(self, "peaks", peaks)

    def __len__(self):
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)

    @property
    def fields(self) -> np.ndarray:
        return np.array([p.field for p in self.peaks])

    @property
    def heights(self) -> np.ndarray:
        return np.array([p.height for p in self.peaks])


@dataclass
class FitResult:
    parameters: dict[str, float]
    standard_errors: dict[str, float]
    residual_norm: float
    model_description: str
    scale: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.residual_norm < 0:
            raise ValueError("residual norm must be non-negative")
        if any(v < 0 for v in self.standard_errors.values() if not math.isnan(v)):
            raise ValueError("standard errors must be non-negative")


# --------------------------------------------------------------------------- peaks


def _vertex(x, y):
    """Vertex of the parabola through three points (non-uniform spacing allowed)."""
    (x0, x1, x2), (y0, y1, y2) = x, y
    d01 = (y1 - y0) / (x1 - x0)
    a = ((y2 - y1) / (x2 - x1) - d01) / (x2 - x0)
    if a >= 0:
        return x1, y1
    xv = min(max(0.5 * (x0 + x1) - d01 / (2 * a), x0), x2)
    return xv, y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1)


def detect_peaks(curve: ResponseCurve, min_prominence: float = 0.05) -> PeakSet:
    """Local maxima with prominence above ``min_prominence * max(values)``.

    Positions and heights are refined by the parabola through each maximum
    and its two neighbours; widths are full widths at half prominence.
    """
    if not 0 < min_prominence < 1:
        raise ValueError("min_prominence must lie in (0, 1)")
    x, y = curve.fields, curve.values
    if x.size < 5:
        raise ValueError("need at least 5 grid points")
    top = np.max(y)
    if not top > 0:
        raise FitError("no peaks: curve has no positive values")
    idx, _ = signal.find_peaks(y, prominence=min_prominence * top)
    if idx.size == 0:
        raise FitError("no peaks above the requested prominence")
    widths, _, left, right = signal.peak_widths(y, idx, rel_height=0.5)
    grid = np.arange(x.size)
    peaks = []
    for i, lo, hi in zip(idx, left, right):
        xv, yv = _vertex(x[i - 1:i + 2], y[i - 1:i + 2])
        w = np.interp(hi, grid, x) - np.interp(lo, grid, x)
        peaks.append(Peak(xv, yv, w))
    return PeakSet(tuple(peaks))


# --------------------------------------------------------------------------- hyperfine


def fit_hyperfine_A(peaks: PeakSet, mu: float, projection: float = 1.0, nuclear_I: float = 3.5) -> FitResult:
    """Least-squares hyperfine constant from avoided-crossing peak fields.

    Peaks, ordered by ``|B|``, are assigned to ``|m_I| = 1/2, 3/2, ...`` and
    ``|B_n| = A |m_I| / (mu_p mu_B/k_B)`` is fitted through the origin.
    """
    n = len(peaks)
    n_max = int(round(2 * nuclear_I)) + 1
    if n < 2:
        raise FitError("need at least 2 peaks to fit and check an assignment")
    if n > (n_max + 1) // 2:
        raise FitError(f"{n} peaks but only {(n_max + 1) // 2} crossings on one field side for I={nuclear_I}")
    f = peaks.fields
    if np.any(f > 0) and np.any(f < 0):
        raise FitError("peaks on both field signs; fit one side at a time")
    y = np.sort(np.abs(f))
    m = 0.5 + np.arange(n) if (2 * nuclear_I) % 2 == 1 else 1.0 + np.arange(n)
    k = projection * mu * MU_B_OVER_K_B
    x = m / k
    A = float(x @ y / (x @ x))
    resid = y - A * x
    dof = n - 1
    se = float(np.sqrt(resid @ resid / dof / (x @ x))) if dof > 0 else float("nan")
    spacing = A / k
    if np.any(np.abs(resid) > 0.5 * spacing):
        raise FitError("peak assignment inconsistent: residual exceeds half the crossing spacing")
    return FitResult(
        {"A_K": A},
        {"A_K": se},
        float(np.linalg.norm(resid)),
        f"|B_n| = A m_n / (mu_p mu_B/k_B), mu={mu}, projection={projection}",
        extra={"assignment": [(float(b), float(mm)) for b, mm in zip(y, m)]},
    )


# --------------------------------------------------------------------------- weights


def simplex_lsq(X: np.ndarray, y: np.ndarray, total_cap: float | None = 1.0):
    """Minimise ``|X f - y|`` subject to ``f >= 0`` and ``sum(f) <= total_cap``.

    Enumerates every active set (each constraint held as an equality or
    dropped) and keeps the best feasible stationary point. Exact for the
    convex problem; intended for a handful of columns. ``total_cap=None``
    gives plain non-negative least squares.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    k = X.shape[1]
    tol = 1e-12
    best, best_r = None, np.inf
    caps = (False, True) if total_cap is not None else (False,)
    for n_zero in range(k + 1):
        for zeros in itertools.combinations(range(k), n_zero):
            free = [i for i in range(k) if i not in zeros]
            for cap in caps:
                f = np.zeros(k)
                if free:
                    Xf = X[:, free]
                    if cap:
                        # KKT system with sum(f_free) = total_cap
                        G = Xf.T @ Xf
                        ones = np.ones(len(free))
                        kkt = np.block([[G, ones[:, None]], [ones[None, :], np.zeros((1, 1))]])
                        rhs = np.concatenate([Xf.T @ y, [total_cap]])
                        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
                        f[free] = sol[:-1]
                    else:
                        f[free] = np.linalg.lstsq(Xf, y, rcond=None)[0]
                elif cap:
                    continue
                if np.any(f < -tol):
                    continue
                if total_cap is not None and f.sum() > total_cap + 1e-12:
                    continue
                f = np.clip(f, 0.0, None)
                r = float(np.linalg.norm(X @ f - y))
                if r < best_r - 1e-15 * max(1.0, r):
                    best, best_r = f, r
    if best is None:
        raise FitError("active-set search found no feasible solution")
    return best, best_r


def _regression_se(X, resid, n_params):
    dof = X.shape[0] - n_params
    if dof <= 0:
        return np.full(X.shape[1], np.nan)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(X.T @ X)
    return np.sqrt(np.clip(np.diag(cov), 0, None))


def fit_weights(
    data: ResponseCurve,
    material: Material,
    T: float,
    probe_amplitude: float = 0.0,
    fit_scale: bool = False,
    deltas: Sequence[float] | None = None,
    imag: np.ndarray | None = None,
) -> FitResult:
    """Fit the gap-mixture weights to a measured isolated spectrum.

    The model is linear in the weights: each basis curve is the total
    isolated spectrum of ``material`` with every ion at one gap value
    (``deltas``, default the material's own gap values), evaluated on the
    data fields. Weights are constrained to ``f_k >= 0``, ``sum f_k <= 1``.

    With ``fit_scale`` the data are in arbitrary units: non-negative
    amplitudes are fitted freely, ``scale`` is their sum and the reported
    weights are normalised to sum to 1 (the zero-gap fraction is then not
    identifiable and is reported as NaN).

    ``imag``, if given, is compared with the real part only as a diagnostic.
    """
    if data.units != "per_ion" and not fit_scale:
        raise FitError("absolute weights need per-ion data; use fit_scale for other units")
    y = np.asarray(data.values, dtype=float)
    if y.size < 3:
        raise FitError("need at least 3 data points")
    if not np.any(y != 0):
        raise FitError("data are identically zero; weights undetermined")
    deltas = tuple(deltas) if deltas is not None else material.delta_distribution.deltas
    names = [f"f{i + 1}" for i in range(len(deltas))]
    X = np.column_stack([
        total_spectrum(
            material.with_distribution(DeltaDistribution.single(d)), data.fields, T, "isolated",
            probe_amplitude=probe_amplitude,
        ).values
        for d in deltas
    ])
    if not np.all(np.isfinite(X)):
        raise FitError("basis curves are not finite on the data grid")

    coef, rnorm = simplex_lsq(X, y, None if fit_scale else 1.0)
    resid = y - X @ coef
    se = _regression_se(X, resid, len(deltas))
    extra: dict[str, Any] = {"deltas_K": deltas, "fitted": X @ coef, "basis": X}
    if imag is not None:
        extra["imag_to_real_norm"] = float(np.linalg.norm(imag) / np.linalg.norm(y))

    if fit_scale:
        scale = float(coef.sum())
        if scale <= 0:
            raise FitError("fitted amplitude is zero")
        w = coef / scale
        # delta-method errors of a_k / sum(a)
        J = (np.eye(len(coef)) - w[:, None]) / scale
        cov_a = np.diag(se**2)
        w_se = np.sqrt(np.clip(np.diag(J @ cov_a @ J.T), 0, None))
        params = dict(zip(names, map(float, w)))
        params["f0"] = float("nan")
        errs = dict(zip(names, map(float, w_se)))
        errs["f0"] = float("nan")
        desc = "scaled mixture: data = scale * sum_k f_k basis_k, sum f_k = 1"
    else:
        scale = None
        params = dict(zip(names, map(float, coef)))
        params["f0"] = float(1.0 - coef.sum())
        errs = dict(zip(names, map(float, se)))
        errs["f0"] = float(np.sqrt(np.sum(np.linalg.pinv(X.T @ X)) * (resid @ resid) / max(y.size - len(deltas), 1)))
        desc = "absolute mixture: data = sum_k f_k basis_k, f_k >= 0, sum f_k <= 1"
    desc += f"; gaps {', '.join(f'{d:g} K' for d in deltas)}; T={T} K; probe={probe_amplitude * 1e3:g} mT"
    desc += "; errors from linear-regression covariance"
    return FitResult(params, errs, float(rnorm), desc, scale, extra)


# --------------------------------------------------------------------------- Curie


def fit_curie(
    temperatures,
    chi,
    x: float = 0.0025,
    geometry: float = CURIE_GEOMETRY_111,
) -> FitResult:
    """Fit ``chi = C / T + chi0`` and derive ``g_parallel`` from ``C``.

    ``chi`` is per formula unit in mu_B/T; ``C = x * geometry * (g/2)^2 * mu_B/k_B``.
    """
    T = np.asarray(temperatures, dtype=float)
    y = np.asarray(chi, dtype=float)
    if T.size != y.size:
        raise ValueError("temperature and susceptibility arrays differ in length")
    if T.size < 3:
        raise FitError("need at least 3 points")
    if np.any(T <= 0):
        raise FitError("temperatures must be > 0")
    X = np.column_stack([1.0 / T, np.ones_like(T)])
    if np.linalg.matrix_rank(X) < 2:
        raise FitError("rank-deficient design: all temperatures equal")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    C, chi0 = map(float, coef)
    resid = y - X @ coef
    se_C, se_chi0 = map(float, _regression_se(X, resid, 2))
    unit = x * geometry * MU_B_OVER_K_B
    desc = f"chi = C/T + chi0 per formula unit; C = x*{geometry:g}*(g/2)^2*mu_B/k_B with x={x:g}"
    if C > 0:
        g = 2.0 * math.sqrt(C / unit)
        se_g = g * se_C / (2 * C)
    else:
        g = se_g = float("nan")
        desc += "; UNPHYSICAL: fitted Curie constant is not positive"
    return FitResult(
        {"C": C, "chi0": chi0, "g_parallel": g},
        {"C": se_C, "chi0": se_chi0, "g_parallel": se_g},
        float(np.linalg.norm(resid)),
        desc,
        extra={"unphysical": not C > 0},
    )


# --------------------------------------------------------------------------- populations


@dataclass
class PopulationInference:
    """Per-channel population differences and a single effective temperature.

    ``population_differences[n]`` is ``p(m_I, lower) - p(m_I, upper)`` for the
    apical channel ``m_I = channels[n]``, assuming it does not depend on the
    gap (exact for populations frozen far from the crossing).
    ``relative_intensities`` are heights over the uniform-population model
    shape, normalised to the innermost peak. ``effective_temperature`` is ``inf``
    when the best fit is the uniform-population limit.
    """

    channels: list[float]
    fields: list[float]
    heights: list[float]
    population_differences: list[float]
    relative_intensities: list[float]
    effective_temperature: float
    temperature_se: float
    uniform_limit: bool
    ordering_violation: bool
    rms_log_residual: float
    ignored_peaks: list[float] = field(default_factory=list)


UNIFORM_T = 1e6


def _model_heights(material, fields, T):
    order = np.argsort(fields)
    vals = np.empty(len(fields))
    vals[order] = total_spectrum(material, np.asarray(fields)[order], T, "isolated").values
    return vals


def _apical(material):
    return max(material.species_groups, key=lambda s: s.projection)


def infer_populations(
    peaks: PeakSet,
    material: Material,
    T_bounds: tuple[float, float] = (0.01, 1000.0),
    ordering_tol: float = 0.01,
) -> PopulationInference:
    """Invert isolated-susceptibility peak heights for channel populations and a temperature.

    Heights must be per Ho ion, as produced by :func:`total_spectrum`.
    Peak heights are modelled as linear in the population differences
    ``d_m = p(m, lower) - p(m, upper)`` of the observed channels, with every
    site and gap component contributing its full slope at every peak field
    (so overlapping tails and coincident basal crossings are solved jointly). The effective temperature
    minimises the scatter of ``log(observed / equilibrium model)`` heights,
    i.e. squared log-height-ratio residuals with the amplitude profiled out.
    """
    ap = _apical(material)
    others = [s for s in material.species_groups if s is not ap]
    dist = material.delta_distribution
    if not sum(dist.weights) > 0:
        raise FitError("gap distribution has no responding ions")
    if len(peaks) < 2:
        raise FitError("need at least 2 peaks")

    k_ap = ap.zeeman_K_per_T
    ms = ap.m_values()
    chans, used, ignored = [], [], []
    for p in peaks:
        m = -p.field * k_ap / ap.hyperfine_A
        near = ms[np.argmin(np.abs(ms - m))]
        if abs(near - m) < 0.25:
            chans.append(float(near))
            used.append(p)
            continue
        basal_hit = any(
            np.min(np.abs(o.hyperfine_A * o.m_values() + o.zeeman_K_per_T * p.field)) < 0.25 * o.hyperfine_A
            for o in others
        )
        if basal_hit:
            ignored.append(p.field)
            continue
        raise FitError(f"peak at {p.field * 1e3:.3f} mT matches no avoided crossing")
    if len(set(chans)) != len(chans):
        raise FitError("two peaks assigned to the same channel")
    if len(used) < 2:
        raise FitError("need at least 2 assignable peaks")

    # heights = G d: G[n, j] is the response at peak n of unit population
    # difference in channel j, summed over sites and gaps (basal channel m
    # shares the apical channel's population difference)
    n = len(used)
    G = np.zeros((n, n))
    peak_fields = np.array([p.field for p in used])
    for frac, sp in zip(material.site_fractions, material.species_groups):
        for delta, w in dist.components:
            h = sp.hyperfine_A * np.array(chans)[None, :] + sp.zeeman_K_per_T * peak_fields[:, None]
            G += frac * w * sp.mu_proj * sp.zeeman_K_per_T * delta**2 / np.hypot(h, delta) ** 3
    heights = np.array([p.height for p in used])
    d = np.linalg.solve(G, heights)

    # intensities relative to the uniform-population shape decline with |B|
    # at any equilibrium temperature
    fields = np.array([p.field for p in used])
    order = np.argsort(np.abs(fields))
    ref = _model_heights(material, fields, UNIFORM_T)
    rel = (heights / ref)[order]
    rel = rel / rel[0]
    violation = bool(np.any(rel[1:] > rel[:-1] * (1 + ordering_tol)))

    log_obs = np.log(heights)

    def scatter(logT):
        r = log_obs - np.log(_model_heights(material, fields, math.exp(logT)))
        return r - r.mean()

    lo, hi = map(math.log, T_bounds)
    grid = np.linspace(lo, hi, 241)
    costs = np.array([scatter(g) @ scatter(g) for g in grid])
    ib = int(np.argmin(costs))
    if ib == grid.size - 1 or costs[-1] <= costs[ib] * (1 + 1e-9):
        T_eff, T_se, uniform = math.inf, math.nan, True
        r = scatter(hi)
    else:
        a, b = grid[max(ib - 1, 0)], grid[min(ib + 1, grid.size - 1)]
        res = optimize.minimize_scalar(lambda g: scatter(g) @ scatter(g), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-10})
        logT = float(res.x)
        T_eff, uniform = math.exp(logT), False
        r = scatter(logT)
        h = 1e-5
        J = (scatter(logT + h) - scatter(logT - h)) / (2 * h)
        dof = n - 2
        if dof > 0 and J @ J > 0:
            T_se = T_eff * math.sqrt((r @ r) / dof / (J @ J))
        else:
            T_se = math.nan
    return PopulationInference(
        channels=chans,
        fields=[float(f) for f in fields],
        heights=[float(h) for h in heights],
        population_differences=[float(v) for v in d],
        relative_intensities=[float(v) for v in rel[np.argsort(order)]],
        effective_temperature=T_eff,
        temperature_se=T_se,
        uniform_limit=uniform,
        ordering_violation=violation,
        rms_log_residual=float(np.sqrt(np.mean(r**2))),
        ignored_peaks=ignored,
    )
