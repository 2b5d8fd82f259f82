"""Nonlinear least squares: strain fits, Rabi-trace fits and trace scaling.

The core is a Levenberg-Marquardt loop with central-difference Jacobians.
Trace models are

    damped_sin            y = c + A exp(-t/tau) cos(2 pi f t + phi)
    damped_sin_plus_ramp  y = damped_sin + B (1 - exp(-t/tau_r))

with ``tau``, ``tau_r`` and ``f`` fitted on a log scale so they stay
positive. Times are in us and frequencies in MHz.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import t as student_t
from sklearn.base import BaseEstimator, RegressorMixin

from .linalg import EigenSystem
from .model import electronic_transition_frequencies, excited_electronic_terms, label_electronic
from .params import MU_B, TWO_PI, ConfigError, ModelParams


class FitError(ValueError):
    """Invalid fit input (too few samples, ambiguous labels, flat trace)."""


class DegenerateFitWarning(UserWarning):
    """A fitted parameter is not identifiable from the data."""


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares fit.

    ``covariance`` is the Gauss-Newton approximation s^2 (J^T J)^-1 with
    s^2 the residual variance. ``history`` holds the residual norm after each
    accepted step.
    """

    names: tuple
    params: np.ndarray
    residual_norm: float
    covariance: np.ndarray
    converged: bool
    iterations: int
    history: tuple = ()
    message: str = ""
    residuals: Optional[np.ndarray] = None
    model: str = ""
    degenerate: tuple = ()

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def as_dict(self) -> dict:
        return dict(zip(self.names, (float(x) for x in self.params)))

    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


# --- Levenberg-Marquardt ---------------------------------------------------------


def numeric_jacobian(fun: Callable, x: np.ndarray, rel_step: float = 1e-6,
                     f0: np.ndarray | None = None) -> np.ndarray:
    """Central-difference Jacobian, step ``rel_step * max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2 * h))
    return np.column_stack(cols)


def least_squares(residual: Callable, theta0, names: Sequence[str] | None = None,
                  max_iter: int = 500, xtol: float = 1e-10, gtol: float = 1e-10,
                  rel_step: float = 1e-6, lam0: float = 1e-3,
                  jacobian: Callable | None = None) -> FitResult:
    """Minimise ``sum(residual(theta)**2)`` by Levenberg-Marquardt.

    Converges when the step norm (relative to ``|theta| + xtol``) or the
    gradient norm drops below its tolerance. A rank-deficient Jacobian at the
    solution yields ``converged=False``.
    """
    x = np.array(theta0, dtype=float)
    if x.ndim != 1:
        raise FitError("theta0 must be one-dimensional")
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(x.size))
    if len(names) != x.size:
        raise FitError("names and theta0 differ in length")
    jac = jacobian or (lambda z, r: numeric_jacobian(residual, z, rel_step, r))
    r = np.asarray(residual(x), dtype=float)
    if r.size < x.size:
        raise FitError(f"{r.size} residuals for {x.size} parameters")
    if not np.all(np.isfinite(r)):
        raise FitError("residual is not finite at the starting point")
    cost = float(r @ r)
    history = [math.sqrt(cost)]
    lam = lam0
    converged = False
    message = "maximum iterations reached"
    it = 0
    j = jac(x, r)
    for it in range(1, max_iter + 1):
        g = j.T @ r
        if np.linalg.norm(g, np.inf) < gtol:
            converged, message = True, "gradient norm below tolerance"
            break
        a = j.T @ j
        d = np.diag(a).copy()
        d[d <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(a + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            xn = x + step
            rn = np.asarray(residual(xn), dtype=float)
            cn = float(rn @ rn) if np.all(np.isfinite(rn)) else np.inf
            if cn <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged, message = True, "no decrease possible"
            break
        x, r, cost = xn, rn, cn
        history.append(math.sqrt(cost))
        lam = max(lam / 10, 1e-12)
        if np.linalg.norm(step) < xtol * (np.linalg.norm(x) + xtol):
            converged, message = True, "step norm below tolerance"
            break
        j = jac(x, r)
    j = jac(x, r)
    sv = np.linalg.svd(j, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-10)) if sv.size and sv[0] > 0 else 0
    dof = max(r.size - x.size, 1)
    if rank < x.size:
        converged = False
        message = f"rank-deficient Jacobian (rank {rank} of {x.size})"
        cov = np.full((x.size, x.size), np.nan)
    else:
        cov = np.linalg.pinv(j.T @ j) * cost / dof
        cov = 0.5 * (cov + cov.T)
    return FitResult(names, x, math.sqrt(cost), cov, converged, it, tuple(history),
                     message, r)


# --- strain fit ---------------------------------------------------------------


@dataclass(frozen=True)
class Line:
    """Measured optical line: ground m_S, excited state name, frequency (MHz)."""

    ground_label: int
    excited_label: str
    freq: float


def _ground_ms(label) -> int:
    s = str(label).strip().replace("m_S=", "").replace("ms=", "")
    try:
        v = int(s)
    except ValueError:
        raise FitError(f"cannot parse ground label {label!r}") from None
    if v not in (-1, 0, 1):
        raise FitError(f"ground m_S must be -1, 0 or +1, got {v}")
    return v


def normalise_lines(lines) -> list:
    out = []
    for ln in lines:
        if isinstance(ln, Line):
            out.append(Line(_ground_ms(ln.ground_label), ln.excited_label, float(ln.freq)))
        else:
            g, e, f = ln
            out.append(Line(_ground_ms(g), str(e).strip(), float(f)))
    return out


def _check_labels(lines, keys):
    seen = {}
    for ln in lines:
        key = (ln.ground_label, ln.excited_label)
        if key not in keys:
            cands = sorted(k for k in keys if k[0] == ln.ground_label)
            raise FitError(f"unknown line label {key}; candidates: {cands}")
        seen.setdefault(key, []).append(ln.freq)
    dup = {k: v for k, v in seen.items() if len(v) > 1}
    if dup:
        raise FitError(f"ambiguous assignment, labels used more than once: {dup}")


class StrainModel:
    """Line positions as a function of strain with all other terms cached.

    Eigenvalue problems are memoised on the strain value, so offset-only
    changes cost nothing.
    """

    def __init__(self, p: ModelParams):
        terms = excited_electronic_terms(p.replace(strain_delta=1.0))
        self.p = p
        self.unit = terms.pop("strain")
        self.base = sum(terms.values())
        self._cache = {}

    def frequencies(self, delta: float) -> dict:
        key = abs(float(delta))
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            h = TWO_PI * (self.base + key * self.unit)
            vals, vecs = np.linalg.eigh(h)
            eig = EigenSystem(vals, vecs)
            e = vals / TWO_PI
            names = label_electronic(eig)
            mean = e.mean()
            out = {}
            for ms in (1, 0, -1):
                eg = self.p.D_gs * ms * ms + self.p.g_par_gs * MU_B * self.p.B_z * ms
                for j, name in enumerate(names):
                    out[(ms, name)] = e[j] - mean - eg
            self._cache[key] = out
        return self._cache[key]

    def __call__(self, lines, delta: float, offset: float = 0.0) -> np.ndarray:
        f = self.frequencies(delta)
        return np.array([f[(ln.ground_label, ln.excited_label)] for ln in lines]) + offset


def strain_model(p: ModelParams, lines, delta: float, offset: float) -> np.ndarray:
    """Calculated line positions (MHz) at strain ``delta`` plus ``offset``."""
    return StrainModel(p)(normalise_lines(lines), delta, offset)


def fit_strain(lines, p: ModelParams, floor: float = 1e-6, max_irls: int = 20,
               grid=None, inner_iter: int = 1) -> FitResult:
    """Fit strain splitting and a global offset by least absolute deviations.

    ``lines`` are ``(ground m_S, excited name, frequency MHz)`` triples. The
    L1 objective is minimised by iteratively reweighted least squares with
    weights ``1 / max(|r|, floor)``, starting from the best point of a coarse
    strain grid.
    """
    lines = normalise_lines(lines)
    if len(lines) < 3:
        raise FitError("at least 3 labelled lines are required")
    keys = set(electronic_transition_frequencies(p))
    _check_labels(lines, keys)
    meas = np.array([ln.freq for ln in lines])
    model = StrainModel(p)
    grid = np.arange(0.0, 20001.0, 500.0) if grid is None else np.asarray(grid, float)

    def l1_at(delta):
        r = meas - model(lines, delta)
        off = float(np.median(r))
        return float(np.sum(np.abs(r - off))), off

    costs = [l1_at(d) for d in grid]
    k = int(np.argmin([c[0] for c in costs]))
    x = np.array([grid[k], costs[k][1]])
    w = np.ones(len(lines))
    res = None
    converged = False
    history = []
    n_irls = 0
    for n_irls in range(1, max_irls + 1):
        sw = np.sqrt(w)
        res = least_squares(lambda th: sw * (model(lines, th[0], th[1]) - meas),
                            x, names=("strain_delta", "freq_offset"), max_iter=inner_iter)
        dx = np.abs(res.params - x)
        x = res.params
        r = model(lines, x[0], x[1]) - meas
        w = 1.0 / np.maximum(np.abs(r), floor)
        history.append(float(np.sum(np.abs(r))))
        if np.all(dx < 1e-9 * (np.abs(x) + 1.0)):
            converged = True
            break
    x = _profile_refine(model, lines, meas, np.array([abs(x[0]), x[1]]))
    for _ in range(5):
        xn = _vertex_polish(model, lines, meas, x)
        if np.array_equal(xn, x):
            break
        x = xn
    r = model(lines, x[0], x[1]) - meas
    if not converged and _is_l1_minimum(model, lines, meas, x):
        converged = True
    msg = "IRLS converged" if converged else "IRLS iteration limit reached"
    return FitResult(res.names, x, float(np.sum(np.abs(r))), res.covariance, converged,
                     n_irls, tuple(history), msg + " (L1 norm)", r, "strain")


def _profile_cost(model, lines, meas, d):
    r = meas - model(lines, d)
    off = float(np.median(r))
    return float(np.sum(np.abs(r - off))), off


def _profile_refine(model, lines, meas, x, half_width: float = 250.0):
    """Minimise the L1 cost with the offset profiled out (it is a median)."""
    lo = max(0.0, x[0] - half_width)
    opt = minimize_scalar(lambda d: _profile_cost(model, lines, meas, d)[0],
                          bounds=(lo, x[0] + half_width), method="bounded",
                          options={"xatol": 1e-6})
    c_opt, off = _profile_cost(model, lines, meas, opt.x)
    c_now = float(np.sum(np.abs(model(lines, x[0], x[1]) - meas)))
    return np.array([float(opt.x), off]) if c_opt < c_now else x


def _is_l1_minimum(model, lines, meas, x, h: float = 1e-3) -> bool:
    """Local optimality: no strain step of size ``h`` lowers the L1 cost."""
    def best_cost(d):
        r = meas - model(lines, d)
        return float(np.sum(np.abs(r - np.median(r))))

    c0 = float(np.sum(np.abs(model(lines, x[0], x[1]) - meas)))
    return c0 <= best_cost(x[0] + h) + 1e-9 and c0 <= best_cost(x[0] - h) + 1e-9


def _vertex_polish(model, lines, meas, x, n_active: int = 4):
    """Move to the nearest L1 vertex where two residuals vanish exactly.

    IRLS approaches the L1 optimum only linearly; the optimum of this
    two-parameter problem lies where two lines are fitted exactly.
    """
    def cost(z):
        return float(np.sum(np.abs(model(lines, z[0], z[1]) - meas)))

    best, best_cost = x, cost(x)
    r = model(lines, x[0], x[1]) - meas
    active = np.argsort(np.abs(r))[:n_active]
    for a in range(len(active)):
        for b in range(a + 1, len(active)):
            i, j = active[a], active[b]
            target = meas[i] - meas[j]

            def g(d):
                f = model([lines[i], lines[j]], d)
                return f[0] - f[1] - target

            d0, d1 = x[0], x[0] + 1.0
            g0, g1 = g(d0), g(d1)
            for _ in range(30):
                if g1 == g0:
                    break
                d0, d1 = d1, d1 - g1 * (d1 - d0) / (g1 - g0)
                g0, g1 = g1, g(d1)
                if abs(d1 - d0) < 1e-9 * (abs(d1) + 1.0):
                    break
            if not np.isfinite(d1) or abs(g1) > 1e-6:
                continue
            z = np.array([abs(d1), meas[i] - model([lines[i]], d1)[0]])
            c = cost(z)
            if c < best_cost:
                best, best_cost = z, c
    return best


def synthetic_lines(p: ModelParams, noise: float = 0.0, seed: int | None = None,
                    offset: float = 0.0, keys=None) -> list:
    """Line list generated from the electronic model with Gaussian noise."""
    f = electronic_transition_frequencies(p)
    keys = sorted(f) if keys is None else list(keys)
    rng = np.random.default_rng(seed)
    noise_v = rng.normal(0.0, noise, len(keys)) if noise > 0 else np.zeros(len(keys))
    return [Line(k[0], k[1], float(f[k] + offset + n)) for k, n in zip(keys, noise_v)]


# --- trace models -------------------------------------------------------------

TRACE_MODELS = {
    "damped_sin": ("c", "A", "tau", "f", "phi"),
    "damped_sin_plus_ramp": ("c", "A", "tau", "f", "phi", "B", "tau_r"),
}
_LOG_PARAMS = ("tau", "f", "tau_r")
_LOG_CLAMP = 300.0


def damped_sin(t, c, A, tau, f, phi):
    t = np.asarray(t, dtype=float)
    return c + A * np.exp(-t / tau) * np.cos(2 * np.pi * f * t + phi)


def ramp(t, B, tau_r):
    return B * (1.0 - np.exp(-np.asarray(t, dtype=float) / tau_r))


def evaluate_trace_model(model: str, t, params) -> np.ndarray:
    """Evaluate ``model`` with natural-unit parameters (dict or sequence)."""
    names = _model_names(model)
    if isinstance(params, dict):
        params = [params[n] for n in names]
    v = dict(zip(names, params))
    y = damped_sin(t, v["c"], v["A"], v["tau"], v["f"], v["phi"])
    if model == "damped_sin_plus_ramp":
        y = y + ramp(t, v["B"], v["tau_r"])
    return y


def _model_names(model: str):
    try:
        return TRACE_MODELS[model]
    except KeyError:
        raise FitError(f"unknown trace model {model!r}") from None


def _to_internal(names, values):
    return np.array([math.log(v) if n in _LOG_PARAMS else v for n, v in zip(names, values)])


def _to_natural(names, x):
    # clamp so trial steps cannot underflow a time constant to zero
    return np.array([math.exp(min(max(v, -_LOG_CLAMP), _LOG_CLAMP)) if n in _LOG_PARAMS else v
                     for n, v in zip(names, x)])


def _fft_frequency(t, y, derivative: bool = False):
    """Dominant frequency of a detrended trace (or of its first difference,
    which suppresses slow ramps)."""
    dt = float(np.median(np.diff(t)))
    if derivative:
        yc = np.diff(y)
    else:
        yc = y - np.linspace(y[0], y[-1], y.size)
    spec = np.abs(np.fft.rfft(yc - yc.mean()))
    freqs = np.fft.rfftfreq(yc.size, dt)
    if spec.size < 2:
        return 1.0 / (t[-1] - t[0])
    k = int(np.argmax(spec[1:])) + 1
    return float(freqs[k])


def _starts(model, t, y):
    span = float(t[-1] - t[0])
    amp = 0.5 * float(np.ptp(y)) or 1e-3
    c_end = float(np.mean(y[-max(3, y.size // 10):]))
    freqs = []
    for deriv in (False, True):
        f0 = max(_fft_frequency(t, y, deriv), 0.5 / span)
        if all(abs(f0 - g) > 0.5 / span for g in freqs):
            freqs.append(f0)
    if len(freqs) == 1:
        freqs.append(freqs[0] * (0.5 if freqs[0] > 1.0 / span else 2.0))
    starts = []
    # 8 deterministic starts: 2 frequencies x 4 phases
    for f0 in freqs:
        for phi in (0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi):
            if model == "damped_sin":
                v = (c_end, amp, span / 2, f0, phi)
            else:
                c0 = float(y[0]) - amp * math.cos(phi)
                v = (c0, amp, span / 2, f0, phi, c_end - c0, span / 3)
            starts.append(v)
    return starts


def _wrap_phase(A, phi):
    if A < 0:
        A, phi = -A, phi + np.pi
    phi = (phi + np.pi) % (2 * np.pi) - np.pi
    return A, phi


def fit_trace(t, y, model: str = "damped_sin", max_iter: int = 500,
              starts: Sequence | None = None) -> FitResult:
    """Fit a Rabi trace with ``damped_sin`` or ``damped_sin_plus_ramp``.

    The best of several deterministic starts (FFT frequency, trace extrema
    and endpoint levels) is returned. A flat trace gives ``A = 0`` and is
    flagged through ``degenerate`` together with a warning.
    """
    names = _model_names(model)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("t and y must be 1-D arrays of equal length")
    if t.size < max(8, len(names) + 1):
        raise FitError(f"need at least {max(8, len(names) + 1)} samples")
    if np.any(np.diff(t) <= 0):
        raise FitError("t must be strictly increasing")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        warnings.warn("flat trace: amplitude zero, frequency and decay unidentifiable",
                      DegenerateFitWarning, stacklevel=2)
        x = [float(np.mean(y)), 0.0, 1.0, 1.0, 0.0] + ([0.0, 1.0] if len(names) == 7 else [])
        return FitResult(names, np.array(x), 0.0, np.full((len(names),) * 2, np.nan), True, 0,
                         (0.0,), "flat trace", np.zeros_like(y), model,
                         tuple(n for n in names if n != "c"))

    def make_residual():
        def res(x):
            v = _to_natural(names, x)
            return evaluate_trace_model(model, t, v) - y
        return res

    res_fn = make_residual()
    best = None
    for s in (starts if starts is not None else _starts(model, t, y)):
        try:
            r = least_squares(res_fn, _to_internal(names, s), names=names, max_iter=max_iter)
        except (FitError, OverflowError, ValueError):
            continue
        if best is None or r.residual_norm < best.residual_norm:
            best = r
    if best is None:
        raise FitError("no start produced a finite fit")
    nat = _to_natural(names, best.params)
    jac = np.diag([nat[i] if n in _LOG_PARAMS else 1.0 for i, n in enumerate(names)])
    cov = jac @ best.covariance @ jac.T
    iA, iphi = names.index("A"), names.index("phi")
    A, phi = _wrap_phase(nat[iA], nat[iphi])
    if A != nat[iA]:
        cov[iA, :] *= -1
        cov[:, iA] *= -1
    nat[iA], nat[iphi] = A, phi
    return FitResult(names, nat, best.residual_norm, cov, best.converged, best.iterations,
                     best.history, best.message, best.residuals, model)


def subtract_background(t, y, result: FitResult) -> np.ndarray:
    """Remove the constant and ramp terms, leaving the damped oscillation."""
    if result.model != "damped_sin_plus_ramp":
        raise FitError("subtract_background needs a damped_sin_plus_ramp fit")
    v = result.as_dict()
    return np.asarray(y, dtype=float) - v["c"] - ramp(t, v["B"], v["tau_r"])


def oscillatory_component(t, result: FitResult) -> np.ndarray:
    v = result.as_dict()
    return damped_sin(t, 0.0, v["A"], v["tau"], v["f"], v["phi"])


def prediction_band(t, result: FitResult, level: float = 0.95):
    """Gauss-Newton band for the fitted mean curve of a trace fit.

    Returns ``(fit, lower, upper)`` with half-width
    t_{n-p} sqrt(diag(J C J^T)), J the model Jacobian in natural parameters
    and C the fit covariance. This is the linearised confidence band of the
    mean response, not an exact interval.
    """
    if not 0 < level < 1:
        raise FitError("level must lie in (0, 1)")
    if result.residuals is None or not result.model:
        raise FitError("prediction_band needs a trace fit with residuals")
    t = np.asarray(t, dtype=float)
    theta = np.asarray(result.params, dtype=float)
    fit = evaluate_trace_model(result.model, t, theta)
    jac = numeric_jacobian(lambda v: evaluate_trace_model(result.model, t, v), theta)
    var = np.einsum("ij,jk,ik->i", jac, result.covariance, jac)
    dof = result.residuals.size - theta.size
    if dof <= 0 or not np.all(np.isfinite(var)):
        half = np.full(t.shape, np.nan)
    else:
        half = student_t.ppf(0.5 + level / 2, dof) * np.sqrt(np.clip(var, 0, None))
    return fit, fit - half, fit + half


@dataclass(frozen=True)
class ScaledTrace:
    values: np.ndarray
    offset: float
    scale: float


def scale_to_reference(sim_trace, anchor_start: float, anchor_end: float) -> ScaledTrace:
    """Affine map sending the first/last samples to the two anchors."""
    y = np.asarray(sim_trace, dtype=float)
    if y.size < 2:
        raise FitError("trace needs at least two samples")
    span = y[-1] - y[0]
    if abs(span) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise FitError("degenerate scaling: trace endpoints are equal")
    scale = (anchor_end - anchor_start) / span
    offset = anchor_start - scale * y[0]
    return ScaledTrace(offset + scale * y, float(offset), float(scale))


# --- nuclear populations from spectra -------------------------------------------


def lorentzian(x, amp, x0, width):
    return amp * (width / 2) ** 2 / ((np.asarray(x) - x0) ** 2 + (width / 2) ** 2)


def nuclear_populations_from_peaks(freq, signal, centers, width: float = 0.5) -> FitResult:
    """Relative amplitudes of the three nuclear-spin-conserving peaks.

    Fits three Lorentzians with a common width and a flat background; the
    returned parameters ``pop_p1, pop_0, pop_m1`` are the normalised peak
    amplitudes at ``centers`` (MHz, ordered m_I = +1, 0, -1).
    """
    freq = np.asarray(freq, dtype=float)
    signal = np.asarray(signal, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if centers.shape != (3,):
        raise FitError("three peak centres are required")
    amp0 = [float(np.interp(c, freq, signal)) for c in centers]

    def model(x):
        a, c0, w, bg = x[:3], x[3:6], math.exp(x[6]), x[7]
        return bg + sum(lorentzian(freq, a[i], c0[i], w) for i in range(3))

    x0 = np.r_[amp0, centers, math.log(width), float(np.min(signal))]
    res = least_squares(lambda x: model(x) - signal, x0)
    a = res.params[:3]
    if np.sum(a) <= 0:
        raise FitError("peak amplitudes are not positive")
    pops = a / np.sum(a)
    return FitResult(("pop_p1", "pop_0", "pop_m1"), pops, res.residual_norm,
                     res.covariance[:3, :3] / np.sum(a) ** 2, res.converged,
                     res.iterations, res.history, res.message, res.residuals, "peaks")


# --- estimators -----------------------------------------------------------------


def _time_column(X) -> np.ndarray:
    t = np.asarray(X, dtype=float)
    return t[:, 0] if t.ndim > 1 else t


class DampedSineRegressor(BaseEstimator, RegressorMixin):
    """Estimator wrapper around :func:`fit_trace`.

    ``X`` is a column of times (us) and ``y`` the trace. After ``fit`` the
    natural parameters are in ``params_`` and the full result in ``result_``.
    """

    def __init__(self, model: str = "damped_sin", max_iter: int = 500):
        self.model = model
        self.max_iter = max_iter

    def fit(self, X, y):
        t = _time_column(X)
        self.result_ = fit_trace(t, y, self.model, self.max_iter)
        self.params_ = self.result_.as_dict()
        return self

    def predict(self, X):
        return evaluate_trace_model(self.model, _time_column(X), self.params_)


class StrainEstimator(BaseEstimator):
    """Estimator wrapper around :func:`fit_strain`.

    ``fit`` takes a list of ``(ground m_S, excited name, freq)`` lines.
    """

    def __init__(self, params: ModelParams | None = None, floor: float = 1e-6):
        self.params = params
        self.floor = floor

    def fit(self, lines, y=None):
        p = self.params if self.params is not None else ModelParams()
        self.result_ = fit_strain(lines, p, floor=self.floor)
        self.strain_delta_ = self.result_["strain_delta"]
        self.freq_offset_ = self.result_["freq_offset"]
        return self

    def predict(self, lines):
        p = self.params if self.params is not None else ModelParams()
        return strain_model(p, normalise_lines([(g, e, 0.0) for g, e, *_ in lines]),
                            self.strain_delta_, self.freq_offset_)


# --- I/O ---------------------------------------------------------------------


def fitresult_text(result: FitResult) -> str:
    """``key = value`` text; parameter errors as ``<name>_stderr``."""
    lines = [f"model = {result.model or 'custom'}",
             f"converged = {str(result.converged).lower()}",
             f"iterations = {result.iterations}",
             f"residual_norm = {result.residual_norm!r}"]
    err = result.stderr()
    for n, v, e in zip(result.names, result.params, err):
        lines.append(f"{n} = {float(v)!r}")
        lines.append(f"{n}_stderr = {float(e)!r}")
    lines.append(f"message = {result.message}")
    if result.degenerate:
        lines.append(f"degenerate = {','.join(result.degenerate)}")
    return "\n".join(lines) + "\n"


def parse_fitresult_text(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def residuals_csv(x, residuals, xname: str = "t_us") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((xname, "residual"))
    for a, r in zip(x, residuals):
        w.writerow((a if isinstance(a, str) else repr(float(a)), repr(float(r))))
    return buf.getvalue()


LINE_HEADER = ("ground_label", "excited_label", "freq_MHz")


def line_list_csv(lines) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LINE_HEADER)
    for ln in normalise_lines(lines):
        w.writerow((f"{ln.ground_label:+d}" if ln.ground_label else "0", ln.excited_label,
                    repr(ln.freq)))
    return buf.getvalue()


def read_line_list_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(LINE_HEADER) - set(rows[0]):
        raise ConfigError(f"line list needs columns {LINE_HEADER}")
    try:
        return normalise_lines((r["ground_label"], r["excited_label"], r["freq_MHz"])
                               for r in rows)
    except (FitError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
