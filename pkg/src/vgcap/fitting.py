"""Bounded nonlinear least squares with confidence intervals, plus the
concrete fit drivers: complex reflection traces, power sweeps, decay
curves, and the gap-sweep loss-tangent / coherent-TLS extractions.

The core minimizer is a trust-region least-squares solve (scipy's trf)
over numerically differentiated Jacobians; complex data is fitted on
both quadratures jointly by stacking real and imaginary residuals.
Confidence intervals are linearized: 1.96 times the square root of the
covariance diagonal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import pi
from scipy.optimize import least_squares

from .errors import (
    DegenerateFit,
    Infeasible,
    InvalidSpec,
    NoConvergence,
    NoResonanceFound,
    SingularJacobian,
)
from .fieldsolver import ThinLayerSpec
from .lossmodels import (
    DEFAULT_TEMPERATURE,
    CoherentTlsModel,
    DoubleExpModel,
    TlsPowerModel,
    decay_population,
    q_coherent_tls,
    q_total,
)

_MAX_ITER = 500
_STEP_TOL = 1.0e-10


@dataclass
class Dataset:
    """Fit input: abscissae, real or complex ordinates, optional sigmas."""

    x: np.ndarray
    y: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y)
        if self.x.shape != self.y.shape:
            raise InvalidSpec(f"x and y must match, got {self.x.shape} vs {self.y.shape}")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.x.shape:
                raise InvalidSpec("sigma must match x")
            if np.any(self.sigma <= 0):
                raise InvalidSpec("sigma must be strictly positive")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.y)


@dataclass
class FitResult:
    """Best-fit parameters with covariance and residual diagnostics."""

    param_names: list
    params: Dict[str, float]
    covariance: np.ndarray
    ci95: Dict[str, float]
    residual_norm: float
    converged: bool
    n_iterations: int
    extras: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def within_ci(self, name: str, true_value: float) -> bool:
        return abs(self.params[name] - true_value) <= self.ci95[name]

    def to_json_dict(self) -> dict:
        return {
            "params": self.params,
            "ci95": self.ci95,
            "covariance": self.covariance.tolist(),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "extras": self.extras,
        }

    def summary(self) -> str:
        lines = []
        for name in self.param_names:
            lines.append(f"  {name} = {self.params[name]:.6g} +- {self.ci95[name]:.2g}")
        lines.append(f"  residual norm {self.residual_norm:.3e}, {self.n_iterations} evaluations")
        return "\n".join(lines)


@dataclass
class ResonanceTrace:
    """Single-port reflection trace in linear units."""

    freq: np.ndarray
    s11: np.ndarray

    def __post_init__(self):
        self.freq = np.asarray(self.freq, dtype=float)
        self.s11 = np.asarray(self.s11, dtype=complex)
        if self.freq.shape != self.s11.shape:
            raise InvalidSpec("freq and s11 must have the same length")
        if np.any(np.diff(self.freq) <= 0):
            raise InvalidSpec("freq must be strictly increasing")
        if np.max(np.abs(self.s11)) > 1.5:
            raise InvalidSpec("|s11| exceeds 1.5; trace looks un-deembedded")


def fit_nls(
    model: Callable[[np.ndarray, np.ndarray], np.ndarray],
    init: Dict[str, float],
    bounds: Dict[str, Tuple[float, float]],
    data: Dataset,
) -> FitResult:
    """Minimize sum of ((y - model) / sigma)^2 within per-parameter bounds.

    model(x, theta) takes the parameter vector in the order of init's
    keys and may return complex values; complex residuals are split into
    stacked real and imaginary components. Without sigmas the covariance
    is scaled by the reduced chi-square; with sigmas it is absolute.

    Raises NoConvergence at the iteration cap and SingularJacobian when
    the Jacobian at the solution has no usable inverse.
    """
    names = list(init.keys())
    p0 = np.array([init[n] for n in names], dtype=float)
    lo = np.array([bounds.get(n, (-np.inf, np.inf))[0] for n in names], dtype=float)
    hi = np.array([bounds.get(n, (-np.inf, np.inf))[1] for n in names], dtype=float)
    if np.any(p0 < lo) or np.any(p0 > hi):
        bad = [n for n, p, a, b in zip(names, p0, lo, hi) if not (a <= p <= b)]
        raise InvalidSpec(f"initial guess outside bounds for {bad}")
    n_free = len(names)
    m_data = data.x.size * (2 if data.is_complex else 1)
    if m_data < n_free + 1:
        raise InvalidSpec(f"{m_data} residuals cannot constrain {n_free} parameters")

    sigma = data.sigma

    def residuals(theta):
        r = model(data.x, theta) - data.y
        if sigma is not None:
            r = r / sigma
        if np.iscomplexobj(r):
            r = np.concatenate([r.real, r.imag])
        return r

    res = least_squares(
        residuals,
        p0,
        bounds=(lo, hi),
        method="trf",
        jac="2-point",
        xtol=_STEP_TOL,
        ftol=_STEP_TOL,
        gtol=None,
        x_scale="jac",
        max_nfev=_MAX_ITER * (n_free + 1),
    )
    if res.status == 0:
        raise NoConvergence(
            f"fit stopped at the iteration cap with residual norm {np.linalg.norm(res.fun):.3e}"
        )

    jac = res.jac
    # equilibrate columns so the singularity test is parameter-scale invariant
    col_norms = np.linalg.norm(jac, axis=0)
    if np.any(col_norms == 0):
        dead = [n for n, c in zip(names, col_norms) if c == 0]
        raise SingularJacobian(f"parameters {dead} have no effect on the residuals", condition=np.inf)
    _, sv, vt = np.linalg.svd(jac / col_norms, full_matrices=False)
    cond = np.inf if sv[-1] == 0 else sv[0] / sv[-1]
    if cond > 1.0 / (1e3 * np.finfo(float).eps):
        raise SingularJacobian(
            f"Jacobian at the solution is singular (condition ~ {cond:.2e})", condition=cond
        )
    cov = (vt.T / sv**2) @ vt
    cov = cov / np.outer(col_norms, col_norms)
    dof = max(m_data - n_free, 1)
    chi2 = 2.0 * res.cost
    if sigma is None:
        cov = cov * (chi2 / dof)
    ci = 1.96 * np.sqrt(np.diag(cov))

    return FitResult(
        param_names=names,
        params={n: float(v) for n, v in zip(names, res.x)},
        covariance=cov,
        ci95={n: float(c) for n, c in zip(names, ci)},
        residual_norm=float(np.linalg.norm(res.fun)),
        converged=True,
        n_iterations=int(res.nfev),
        extras={"status": int(res.status), "weighted": sigma is not None},
    )


# ---------------------------------------------------------------------------
# Reflection trace


def s11_model(freq, f0, k_int, k_ext, amplitude, phase, delay, f_ref=0.0):
    """Single-port reflection with amplitude/phase/delay baseline.

    Linewidth parameters k_int and k_ext are kappa/2pi contributions in
    Hz. The delay phase is referenced to f_ref to keep phase and delay
    numerically separable over narrow spans.
    """
    k_tot = k_int + k_ext
    resonator = 1.0 - (2.0 * k_ext / k_tot) / (1.0 + 2.0j * (freq - f0) / k_tot)
    baseline = amplitude * np.exp(1j * phase) * np.exp(-2j * pi * (freq - f_ref) * delay)
    return baseline * resonator


def _s11_guesses(trace: ResonanceTrace) -> dict:
    freq, s11 = trace.freq, trace.s11
    n = len(freq)
    edge = max(3, n // 10)
    mag = np.abs(s11)
    a0 = float(np.median(np.concatenate([mag[:edge], mag[-edge:]])))
    i_dip = int(np.argmin(mag))
    f0 = float(freq[i_dip])
    depth = a0 - mag[i_dip]
    # FWHM of the dip in magnitude
    half = a0 - depth / 2.0
    below = np.where(mag < half)[0]
    if len(below) >= 2:
        k_tot = float(freq[below[-1]] - freq[below[0]])
    else:
        k_tot = float((freq[-1] - freq[0]) / 10.0)
    k_tot = max(k_tot, float(np.min(np.diff(freq))))
    # undercoupled branch for the depth ratio
    k_ext = 0.5 * k_tot * min(depth / a0, 1.0)
    k_ext = min(max(k_ext, 1e-3 * k_tot), k_tot * (1 - 1e-3))
    # delay from the per-edge phase slopes; the segments sit away from the
    # dip so the resonance winding cannot leak into the estimate
    phase = np.unwrap(np.angle(s11))
    slope_l = np.polyfit(freq[:edge], phase[:edge], 1)[0]
    slope_r = np.polyfit(freq[-edge:], phase[-edge:], 1)[0]
    delay = float(-(slope_l + slope_r) / 2.0 / (2.0 * pi))
    f_ref = float(freq.mean())
    resid_phase = phase + 2.0 * pi * (freq - f_ref) * delay
    phi = float(np.median(np.concatenate([resid_phase[:edge], resid_phase[-edge:]])))
    phi = float(np.angle(np.exp(1j * phi)))
    return {
        "f0": f0,
        "k_int": max(k_tot - k_ext, 1e-3 * k_tot),
        "k_ext": k_ext,
        "amplitude": a0,
        "phase": phi,
        "delay": delay,
        "f_ref": f_ref,
        "noise": float(np.std(np.concatenate([mag[:edge], mag[-edge:]]))),
        "depth": depth,
    }


def fit_s11(trace: ResonanceTrace, guesses: Optional[dict] = None) -> FitResult:
    """Fit both quadratures of a reflection trace.

    Returns f0, the internal and external linewidths (kappa/2pi in Hz),
    baseline amplitude, phase offset, and electrical delay; q_int and
    q_ext with propagated confidence intervals ride along in extras.
    Raises NoResonanceFound when the dip does not rise 3x above the
    edge noise floor.
    """
    auto = _s11_guesses(trace)
    if auto["noise"] > 0 and auto["depth"] < 3.0 * auto["noise"]:
        raise NoResonanceFound(
            f"dip depth {auto['depth']:.3g} below 3x noise floor {auto['noise']:.3g}"
        )
    if guesses:
        auto.update(guesses)
    f_ref = auto["f_ref"]

    span = trace.freq[-1] - trace.freq[0]
    init = {k: auto[k] for k in ("f0", "k_int", "k_ext", "amplitude", "phase", "delay")}
    bounds = {
        "f0": (trace.freq[0], trace.freq[-1]),
        "k_int": (0.0, 10.0 * span),
        "k_ext": (1e-12 * span, 10.0 * span),
        "amplitude": (0.0, 2.0),
        "phase": (-2.0 * pi, 2.0 * pi),
        "delay": (-np.inf, np.inf),
    }

    def model(freq, theta):
        return s11_model(freq, *theta, f_ref=f_ref)

    data = Dataset(trace.freq, trace.s11)
    # The magnitude response cannot tell under- from over-coupling, an
    # overcoupled trace winds its phase by 2 pi (biasing the baseline
    # phase/delay estimates), and delay trades against the resonance
    # skirt. Multi-start over those ambiguities and keep the best
    # joint-quadrature fit.
    k_tot = init["k_int"] + init["k_ext"]
    candidates = []
    for swap in (False, True):
        for delay0 in (init["delay"], 0.0):
            for dphi in (0.0, pi):
                guess = dict(init)
                if swap:
                    guess["k_int"], guess["k_ext"] = init["k_ext"], init["k_int"]
                guess["k_int"] = min(max(guess["k_int"], 1e-6 * k_tot), bounds["k_int"][1])
                guess["k_ext"] = min(max(guess["k_ext"], 1e-6 * k_tot), bounds["k_ext"][1])
                guess["delay"] = delay0
                guess["phase"] = float(np.angle(np.exp(1j * (init["phase"] + dphi))))
                try:
                    candidates.append(fit_nls(model, guess, bounds, data))
                except (NoConvergence, SingularJacobian):
                    continue
    if not candidates:
        raise NoConvergence("no baseline/coupling start converged")
    result = min(candidates, key=lambda r: r.residual_norm)

    # propagate Q_int = f0 / k_int and Q_ext = f0 / k_ext
    p = result.params
    cov = result.covariance
    for which in ("int", "ext"):
        k = p[f"k_{which}"]
        q = p["f0"] / k
        grad = np.zeros(len(result.param_names))
        grad[result.param_names.index("f0")] = 1.0 / k
        grad[result.param_names.index(f"k_{which}")] = -p["f0"] / k**2
        var = float(grad @ cov @ grad)
        result.extras[f"q_{which}"] = q
        result.extras[f"q_{which}_ci95"] = 1.96 * np.sqrt(max(var, 0.0))
    result.extras["f_ref"] = f_ref
    result.extras["model"] = "s11_single_port_reflection"
    return result


# ---------------------------------------------------------------------------
# Power sweep


def fit_power_sweep(
    n_photons: Sequence[float],
    q_r: Sequence[float],
    frequency: float,
    temperature: float = DEFAULT_TEMPERATURE,
    sigma_q: Optional[Sequence[float]] = None,
    log_residuals: Optional[bool] = None,
) -> FitResult:
    """Fit the saturable-TLS power dependence of the internal Q.

    Parameters are q_low, q_high, n_c, and beta (bounded to [0.1, 1]).
    Because Q spans decades, unweighted fits default to log-Q residuals;
    the choice is recorded in extras. Supplied sigmas switch to weighted
    linear residuals.
    """
    n = np.asarray(n_photons, dtype=float)
    q = np.asarray(q_r, dtype=float)
    if n.size < 6:
        raise InvalidSpec(f"need at least 6 sweep points, got {n.size}")
    span_decades = np.log10(n.max() / max(n.min(), 1e-30)) if n.min() > 0 else np.inf
    if span_decades < 2:
        warnings.warn(
            f"sweep spans {span_decades:.2f} decades (< 2); the fit may be ill-posed",
            stacklevel=2,
        )
    if log_residuals is None:
        log_residuals = sigma_q is None

    order = np.argsort(n)
    n, q = n[order], q[order]
    sig = None
    if sigma_q is not None:
        sig = np.asarray(sigma_q, dtype=float)[order]

    init = {
        "q_low": float(q[0]),
        "q_high": float(q[-1] * 1.05),
        "n_c": float(np.sqrt(n.max() * max(n.min(), 1e-3))),
        "beta": 0.5,
    }
    bounds = {
        "q_low": (1.0, np.inf),
        "q_high": (1.0, np.inf),
        "n_c": (1e-6, np.inf),
        "beta": (0.1, 1.0),
    }

    def forward(nn, theta):
        model = TlsPowerModel(
            q_low=theta[0], q_high=theta[1], n_c=theta[2], beta=theta[3],
            frequency=frequency, temperature=temperature,
        )
        return q_total(nn, model)

    if log_residuals:
        data = Dataset(n, np.log(q))

        def model_fn(nn, theta):
            return np.log(forward(nn, theta))

    else:
        data = Dataset(n, q, sigma=sig)
        model_fn = forward

    result = fit_nls(model_fn, init, bounds, data)
    result.extras["log_residuals"] = log_residuals
    result.extras["frequency_hz"] = frequency
    result.extras["temperature_k"] = temperature
    result.extras["model"] = "tls_power"
    return result


# ---------------------------------------------------------------------------
# Decay curves


@dataclass
class DecayFit:
    """Double-exponential fit with its single-exponential fallback.

    residual_ratio below 1 favors the double-exponential model;
    degenerate marks time constants within 10% of each other, where the
    selected model collapses to the single exponential.
    """

    double: FitResult
    single: FitResult
    residual_ratio: float
    degenerate: bool

    @property
    def selected(self) -> FitResult:
        return self.single if self.degenerate else self.double


def fit_decay(
    times: Sequence[float],
    populations: Sequence[float],
    log_residuals: bool = True,
) -> DecayFit:
    """Fit qubit population decay with the double-exponential model.

    Populations must be normalized so P(0) is about 1 (readout
    calibration happens upstream). Initial guesses come from the
    log-linear tail (residual time and concentration) and the early-time
    slope (initial time). Fitting runs on log populations by default,
    where the multiplicative noise of averaged readout is uniform; pass
    log_residuals=False for linear residuals (forced automatically when
    any population is non-positive).
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(populations, dtype=float)
    if t.size < 10:
        raise InvalidSpec(f"need at least 10 decay points, got {t.size}")
    if np.any(p <= 0):
        log_residuals = False
        if np.all(p <= 0):
            raise InvalidSpec("populations are all non-positive")
    if abs(p[np.argmin(t)] - 1.0) > 0.3:
        warnings.warn("P(0) deviates from 1 by more than 30%; check normalization", stacklevel=2)

    order = np.argsort(t)
    t, p = t[order], p[order]
    logp = np.log(np.clip(p, 1e-300, None))

    # tail line: log P ~ -n_in - t / t1_res
    n_tail = max(3, t.size // 3)
    slope_res, intercept = np.polyfit(t[-n_tail:], logp[-n_tail:], 1)
    t1_res0 = -1.0 / slope_res if slope_res < 0 else float(t[-1])
    n_in0 = min(max(-intercept, 1e-3), 20.0)
    # early slope: d log P / dt at 0 = -n_in / t1_in - 1 / t1_res
    n_head = max(3, t.size // 5)
    slope_in = np.polyfit(t[:n_head], logp[:n_head], 1)[0]
    denom = -slope_in - 1.0 / t1_res0
    t1_in0 = n_in0 / denom if denom > 0 else t1_res0 / 3.0
    t1_in0 = min(max(t1_in0, t[1] / 10.0), 10.0 * t1_res0)

    span = float(t[-1])
    y = logp if log_residuals else p

    def model_double(tt, theta):
        model = DoubleExpModel(n_in=theta[0], t1_in=theta[1], t1_res=theta[2])
        out = decay_population(tt, model)
        return np.log(out) if log_residuals else out

    double = fit_nls(
        model_double,
        {"n_in": n_in0, "t1_in": t1_in0, "t1_res": t1_res0},
        {"n_in": (0.0, 50.0), "t1_in": (t[1] / 100.0, 100.0 * span), "t1_res": (t[1] / 100.0, 100.0 * span)},
        Dataset(t, y),
    )

    def model_single(tt, theta):
        return -tt / theta[0] if log_residuals else np.exp(-tt / theta[0])

    single = fit_nls(
        model_single,
        {"t1": t1_res0},
        {"t1": (t[1] / 100.0, 100.0 * span)},
        Dataset(t, y),
    )

    ratio = double.residual_norm / single.residual_norm if single.residual_norm > 0 else 0.0
    t_in, t_res = double.params["t1_in"], double.params["t1_res"]
    degenerate = abs(t_in - t_res) <= 0.10 * max(t_in, t_res)
    double.extras["model"] = "double_exponential"
    double.extras["log_residuals"] = log_residuals
    single.extras["model"] = "single_exponential"
    single.extras["log_residuals"] = log_residuals
    return DecayFit(double=double, single=single, residual_ratio=ratio, degenerate=degenerate)


# ---------------------------------------------------------------------------
# Loss tangent over a gap sweep


def fit_loss_tangent(
    gap_points: Sequence[Tuple[float, float]],
    sensitivities: Sequence[float],
    layer: ThinLayerSpec = ThinLayerSpec(),
    sigma_q: Optional[Sequence[float]] = None,
) -> FitResult:
    """Single-parameter fit of 1/Q = s_MA * eps * t * tan_delta.

    gap_points pairs (gap, q_low) with one simulated s_MA per gap, taken
    at matching grid settings. Residuals are weighted in inverse-Q space.
    """
    pts = list(gap_points)
    if len(pts) < 2:
        raise InvalidSpec(f"need at least 2 gap points, got {len(pts)}")
    if len(sensitivities) != len(pts):
        raise InvalidSpec("one sensitivity per gap point required")
    gaps = np.array([g for g, _ in pts], dtype=float)
    q = np.array([qq for _, qq in pts], dtype=float)
    s = np.asarray(sensitivities, dtype=float)
    if np.any(q <= 0) or np.any(s <= 0):
        raise InvalidSpec("q_low and sensitivities must be positive")

    inv_q = 1.0 / q
    weight = layer.eps_layer * layer.thickness * s
    sig = None
    if sigma_q is not None:
        sig = np.asarray(sigma_q, dtype=float) / q**2  # propagate to 1/Q

    def model(_x, theta):
        return weight * theta[0]

    init = {"tan_delta": float(np.mean(inv_q / weight))}
    result = fit_nls(model, init, {"tan_delta": (0.0, 1.0)}, Dataset(gaps, inv_q, sigma=sig))
    result.extras["model"] = "loss_tangent_budget"
    result.extras["layer"] = {"thickness_m": layer.thickness, "eps_layer": layer.eps_layer}
    return result


# ---------------------------------------------------------------------------
# Coherent-TLS field dependence


def fit_coherent_tls(
    points: Sequence[Tuple[float, float]],
    temperature: float = DEFAULT_TEMPERATURE,
) -> FitResult:
    """Two-parameter fit of Q(E) = q0 sqrt(1 + xi E^2 / T)."""
    pts = list(points)
    if len(pts) < 3:
        raise InvalidSpec(f"need at least 3 points, got {len(pts)}")
    e = np.array([x for x, _ in pts], dtype=float)
    q = np.array([y for _, y in pts], dtype=float)
    if np.any(e <= 0) or np.any(q <= 0):
        raise InvalidSpec("fields and Q values must be positive")

    q0_init = float(q.min())
    e_max = float(e.max())
    q_at_emax = float(q[np.argmax(e)])
    xi_init = max(temperature * ((q_at_emax / q0_init) ** 2 - 1.0) / e_max**2, 1e-12)

    def model(ee, theta):
        return q_coherent_tls(ee, CoherentTlsModel(q0=theta[0], xi=theta[1], temperature=temperature))

    result = fit_nls(
        model,
        {"q0": q0_init, "xi": xi_init},
        {"q0": (1.0, np.inf), "xi": (0.0, np.inf)},
        Dataset(e, q),
    )
    result.extras["temperature_k"] = temperature
    result.extras["model"] = "coherent_tls"
    return result
