"""Energy traces, the rate / decoding-cost function family and policies.

Rates are in bits per channel use: ``g(p) = 0.5 * log2(1 + p)``.  The
receiver's decoding cost belongs to the family ``phi(r) = beta * (2**(2r) - 1)``
so that ``phi^{-1}(x) = g(x / beta)``; with ``beta = 1`` the decoding cost is
the inverse of the rate function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_LN2 = math.log(2.0)


class TraceError(ValueError):
    """Raised when a solver receives a trace that fails validation."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EnergyTrace:
    """Per-slot harvested energies of transmitter, receiver and helper."""

    n_slots: int
    tx_energy: np.ndarray
    rx_energy: np.ndarray
    helper_energy: np.ndarray
    alpha: float

    def __post_init__(self):
        for name in ("tx_energy", "rx_energy", "helper_energy"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def from_lists(cls, tx_energy, rx_energy, helper_energy, alpha, n_slots=None):
        n = len(rx_energy) if n_slots is None else n_slots
        return cls(n, tx_energy, rx_energy, helper_energy, alpha)

    @property
    def virtual_rx_energy(self) -> np.ndarray:
        """Receiver budget when the helper forwards everything at once."""
        return self.rx_energy + self.alpha * self.helper_energy


def validate_trace(trace: EnergyTrace) -> list[str]:
    """Return every violated trace invariant; an empty list means valid."""
    errors = []
    n = trace.n_slots
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        errors.append(f"n_slots: must be a positive integer, got {n!r}")
    for name in ("tx_energy", "rx_energy", "helper_energy"):
        values = getattr(trace, name)
        if isinstance(n, (int, np.integer)) and len(values) != n:
            errors.append(f"{name}: length mismatch ({len(values)} != n_slots={n})")
        for i, v in enumerate(values.tolist()):
            if not math.isfinite(v):
                errors.append(f"{name}[{i}]: must be finite, got {v!r}")
            elif v < 0:
                errors.append(f"{name}[{i}]: must be >= 0, got {v!r}")
    if not (math.isfinite(trace.alpha) and 0.0 <= trace.alpha <= 1.0):
        errors.append(f"alpha: alpha out of range [0, 1], got {trace.alpha!r}")
    return errors


def require_valid(trace: EnergyTrace) -> None:
    errors = validate_trace(trace)
    if errors:
        raise TraceError(errors)


@dataclass(frozen=True)
class CostModel:
    """Rate function ``g``, decoding cost ``phi`` and their inverses.

    All four callables accept scalars or numpy arrays.
    """

    kind: str
    beta: float
    rate_fn: Callable = field(repr=False)
    rate_inv: Callable = field(repr=False)
    decode_cost: Callable = field(repr=False)
    decode_inv: Callable = field(repr=False)

    def to_dict(self) -> dict:
        if self.kind == "rate_half_log2":
            return {"kind": self.kind}
        return {"kind": self.kind, "beta": self.beta}


def _rate(p):
    return np.log1p(p) / (2.0 * _LN2)


def _rate_inv(r):
    return np.expm1(2.0 * _LN2 * np.asarray(r, dtype=float))


def builtin_cost_model(kind: str = "scaled_inverse_rate", beta: float = 1.0) -> CostModel:
    """Build one of the validated cost models.

    ``rate_half_log2`` uses ``phi = g^{-1}`` (the ``beta = 1`` member).
    ``scaled_inverse_rate`` uses ``phi(r) = beta * (2**(2r) - 1)``.
    """
    if kind == "rate_half_log2":
        beta = 1.0
    elif kind != "scaled_inverse_rate":
        raise ValueError(f"unknown cost model kind {kind!r}")
    beta = float(beta)
    if not (math.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be a positive finite real, got {beta!r}")

    def decode_cost(r):
        return beta * _rate_inv(r)

    def decode_inv(x):
        return _rate(np.asarray(x, dtype=float) / beta)

    return CostModel(kind, beta, _rate, _rate_inv, decode_cost, decode_inv)


@dataclass(frozen=True)
class Policy:
    """Per-slot transmit power, rate, receiver consumption and helper transfer."""

    tx_power: np.ndarray
    rate: np.ndarray
    rx_consumption: np.ndarray
    helper_transfer: np.ndarray

    def __post_init__(self):
        for name in ("tx_power", "rate", "rx_consumption", "helper_transfer"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @property
    def n_slots(self) -> int:
        return len(self.rate)

    def is_finite_nonnegative(self, tol: float = 0.0) -> bool:
        arrays = (self.tx_power, self.rate, self.rx_consumption, self.helper_transfer)
        return all(np.all(np.isfinite(a)) and np.all(a >= -tol) for a in arrays)
