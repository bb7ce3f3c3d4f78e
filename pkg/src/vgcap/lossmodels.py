"""Forward-evaluable loss and decay models for resonators and qubits.

Four model families: the saturable-TLS power dependence of a resonator's
internal quality factor, the participation-weighted loss-tangent budget,
the double-exponential qubit population decay, and the coherent-TLS
field dependence of the saturated Q. All functions are pure and accept
scalar or array arguments where that is meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.constants import hbar, k as k_b, pi

from .errors import Infeasible, InvalidSpec

DEFAULT_TEMPERATURE = 0.010  # K, mixing-chamber operating point


@dataclass(frozen=True)
class TlsPowerModel:
    """Power-dependent internal Q: low/high-power limits, critical photon
    number, saturation exponent, and the thermal tanh factor."""

    q_low: float
    q_high: float
    n_c: float
    beta: float
    frequency: float
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        for name in ("q_low", "q_high", "n_c", "frequency", "temperature"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be > 0, got {getattr(self, name)}")
        if not (0.0 < self.beta <= 1.0):
            raise InvalidSpec(f"beta must lie in (0, 1], got {self.beta}")

    def thermal_factor(self) -> float:
        return float(np.tanh(hbar * 2 * pi * self.frequency / (2 * k_b * self.temperature)))


def q_total(n, model: TlsPowerModel):
    """Internal Q at intra-cavity photon number n.

    1/Q = (1/q_low) * tanh(hbar w / 2 k T) / (1 + n/n_c)^beta + 1/q_high
    """
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise InvalidSpec("photon number must be >= 0")
    inv_q = (1.0 / model.q_low) * model.thermal_factor() / (1.0 + n / model.n_c) ** model.beta
    inv_q = inv_q + 1.0 / model.q_high
    out = 1.0 / inv_q
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LossChannel:
    """One loss channel: participation times loss tangent adds to 1/Q.

    tan_delta=None marks the channel as unknown (to be solved for)."""

    label: str
    participation: float
    tan_delta: Optional[float]

    def __post_init__(self):
        if not (0.0 <= self.participation <= 1.0):
            raise InvalidSpec(f"participation must lie in [0, 1], got {self.participation}")
        if self.tan_delta is not None and self.tan_delta < 0:
            raise InvalidSpec(f"tan_delta must be >= 0, got {self.tan_delta}")


@dataclass(frozen=True)
class LossBudget:
    channels: Sequence[LossChannel]

    def __post_init__(self):
        if len(self.channels) == 0:
            raise InvalidSpec("a loss budget needs at least one channel")

    def known_loss(self) -> float:
        return sum(c.participation * c.tan_delta for c in self.channels if c.tan_delta is not None)

    def unknown_channels(self) -> list:
        return [c for c in self.channels if c.tan_delta is None]


def q_tls_budget(budget: LossBudget) -> Optional[float]:
    """Quality factor from the participation-weighted loss-tangent sum.

    Returns None for a lossless budget (all products zero): the Q is
    unbounded and no finite sentinel is reported.
    """
    if budget.unknown_channels():
        raise InvalidSpec("budget contains unknown channels; solve them first")
    inv_q = budget.known_loss()
    if inv_q == 0.0:
        return None
    return 1.0 / inv_q


def solve_unknown_tan_delta(measured_q: float, budget: LossBudget) -> float:
    """Back out the loss tangent of the single unknown channel.

    tan_delta = (1/Q - sum of known p_i tan_i) / p_unknown. Raises
    Infeasible when the known channels already exceed the measured loss.
    """
    if not measured_q > 0:
        raise InvalidSpec(f"measured_q must be > 0, got {measured_q}")
    unknown = budget.unknown_channels()
    if len(unknown) != 1:
        raise InvalidSpec(f"exactly one unknown channel required, found {len(unknown)}")
    target = unknown[0]
    if not target.participation > 0:
        raise InvalidSpec("unknown channel must have participation > 0")
    residual = 1.0 / measured_q - budget.known_loss()
    if residual < 0:
        raise Infeasible(
            f"known channels already dissipate more than 1/Q = {1.0 / measured_q:.3e}"
        )
    return residual / target.participation


@dataclass(frozen=True)
class DoubleExpModel:
    """Double-exponential relaxation: a fast initial decay scaled by the
    participating-system concentration n_in, times a residual exponential."""

    n_in: float
    t1_in: float
    t1_res: float

    def __post_init__(self):
        if self.n_in < 0:
            raise InvalidSpec(f"n_in must be >= 0, got {self.n_in}")
        if not self.t1_in > 0 or not self.t1_res > 0:
            raise InvalidSpec("t1_in and t1_res must be > 0")


def decay_population(t, model: DoubleExpModel):
    """Excited-state population P(t) = exp(n_in (e^{-t/t1_in} - 1)) e^{-t/t1_res}.

    P(0) = 1 and P is monotone non-increasing.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidSpec("time must be >= 0")
    p = np.exp(model.n_in * (np.exp(-t / model.t1_in) - 1.0)) * np.exp(-t / model.t1_res)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class CoherentTlsModel:
    """Field dependence of the TLS-saturated Q in the low-temperature limit."""

    q0: float
    xi: float  # K m^2 / V^2
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if not self.q0 > 0:
            raise InvalidSpec(f"q0 must be > 0, got {self.q0}")
        if self.xi < 0:
            raise InvalidSpec(f"xi must be >= 0, got {self.xi}")
        if not self.temperature > 0:
            raise InvalidSpec(f"temperature must be > 0, got {self.temperature}")


def q_coherent_tls(e_field, model: CoherentTlsModel):
    """Q(E) = q0 * sqrt(1 + (xi / T) |E|^2); linear in E at large fields."""
    e = np.asarray(e_field, dtype=float)
    if np.any(e < 0):
        raise InvalidSpec("field magnitude must be >= 0")
    q = model.q0 * np.sqrt(1.0 + model.xi / model.temperature * e**2)
    return float(q) if q.ndim == 0 else q


# ---------------------------------------------------------------------------
# JSON round-trips. Field names carry SI-unit suffixes.

_MODEL_SCHEMAS = {
    "tls_power": (
        TlsPowerModel,
        {
            "q_low": "q_low",
            "q_high": "q_high",
            "n_c_photons": "n_c",
            "beta": "beta",
            "frequency_hz": "frequency",
            "temperature_k": "temperature",
        },
    ),
    "double_exp": (
        DoubleExpModel,
        {"n_in": "n_in", "t1_in_s": "t1_in", "t1_res_s": "t1_res"},
    ),
    "coherent_tls": (
        CoherentTlsModel,
        {"q0": "q0", "xi_k_m2_per_v2": "xi", "temperature_k": "temperature"},
    ),
}


def model_to_json(model) -> str:
    for kind, (cls, fields_map) in _MODEL_SCHEMAS.items():
        if isinstance(model, cls):
            doc = {"model": kind}
            doc.update({key: getattr(model, attr) for key, attr in fields_map.items()})
            return json.dumps(doc, sort_keys=True)
    if isinstance(model, LossBudget):
        doc = {
            "model": "loss_budget",
            "channels": [
                {"label": c.label, "participation": c.participation, "tan_delta": c.tan_delta}
                for c in model.channels
            ],
        }
        return json.dumps(doc, sort_keys=True)
    raise InvalidSpec(f"unknown model type {type(model).__name__}")


def model_from_json(text: str):
    doc = json.loads(text)
    kind = doc.get("model")
    if kind == "loss_budget":
        return LossBudget(
            tuple(
                LossChannel(c["label"], c["participation"], c["tan_delta"])
                for c in doc["channels"]
            )
        )
    if kind not in _MODEL_SCHEMAS:
        raise InvalidSpec(f"unknown model kind {kind!r}")
    cls, fields_map = _MODEL_SCHEMAS[kind]
    return cls(**{attr: doc[key] for key, attr in fields_map.items()})
