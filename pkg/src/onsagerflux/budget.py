"""Energy-budget auditing: the (in)equality between kinetic-energy drop and
cumulative viscous dissipation, the anomalous-dissipation residual, and the
vanishing-initial-time limit."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import GridField, energy, grad_norm_sq
from .solver import Trajectory

#: default relative tolerance for declaring the budget an equality
EQUALITY_RTOL = 1e-6


@dataclass
class EnergyBudget:
    """Cumulative budget along a trajectory.

    residual(t) = kinetic(0) - kinetic(t) - nu * int_0^t ||grad v||^2: the
    cumulative anomalous dissipation; non-negative (up to tolerance) for a
    valid Leray-Hopf analogue, zero when dissipation is purely viscous.
    """

    times: np.ndarray
    kinetic: np.ndarray
    dissip_cum: np.ndarray
    residual: np.ndarray
    relative_residual: np.ndarray
    verdict: str
    tol_rel: float
    nu: float

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,kinetic,dissip_cum,residual_D\n")
            for row in zip(self.times, self.kinetic, self.dissip_cum, self.residual):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def as_dict(self) -> dict:
        rr = self.relative_residual
        return {
            "verdict": self.verdict,
            "nu": self.nu,
            "tolerance_rel": self.tol_rel,
            "max_relative_residual": float(np.abs(rr).max()),
            "final_relative_residual": float(rr[-1]),
            "kinetic_initial": float(self.kinetic[0]),
            "kinetic_final": float(self.kinetic[-1]),
            "dissip_total": float(self.dissip_cum[-1]),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _series_from(traj) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """(times, kinetic, grad_sq, nu) from a Trajectory or (t, field) list.

    The solver's dense per-step log is preferred over snapshots whenever
    present: it carries the full time resolution of the run.
    """
    if isinstance(traj, Trajectory):
        return traj.times, traj.kinetic, traj.grad_sq, traj.config.nu
    raise TypeError("expected a Trajectory; use audit_snapshots for raw snapshot lists")


def audit(traj: Trajectory, tol_rel: float = EQUALITY_RTOL) -> EnergyBudget:
    times, kinetic, grad_sq, nu = _series_from(traj)
    if np.any(np.diff(times) <= 0):
        raise ValueError("non-monotone snapshot times")
    return _assemble(times, kinetic, grad_sq, nu, tol_rel)


def audit_snapshots(snapshots, nu: float, tol_rel: float = EQUALITY_RTOL) -> EnergyBudget:
    """Budget from bare (t, GridField) pairs (snapshot-rate time resolution)."""
    snaps = list(snapshots)
    if len(snaps) < 2:
        raise ValueError("need at least two snapshots")
    times = np.array([t for t, _ in snaps], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("non-monotone snapshot times")
    kinetic = np.array([energy(f) for _, f in snaps])
    grad_sq = np.array([grad_norm_sq(f) for _, f in snaps])
    return _assemble(times, kinetic, grad_sq, nu, tol_rel)


def _assemble(times, kinetic, grad_sq, nu, tol_rel) -> EnergyBudget:
    dissip = nu * _cumtrapz(grad_sq, times)
    residual = kinetic[0] - kinetic - dissip
    scale = kinetic[0] if kinetic[0] > 0 else 1.0
    relative = residual / scale
    worst = relative[np.argmax(np.abs(relative))]
    if abs(worst) <= tol_rel:
        verdict = "energy-equality"
    elif worst > 0:
        verdict = "anomalous-dissipation"
    else:
        verdict = "under-resolved"
    return EnergyBudget(times, kinetic, dissip, residual, relative, verdict, tol_rel, nu)


@dataclass
class InitialTimeTable:
    """Residuals over [s, T] for a sequence s -> 0, against the [0, T] value."""

    s_values: np.ndarray
    residuals: np.ndarray
    full_residual: float
    deltas: np.ndarray

    def as_dict(self) -> dict:
        return {
            "s": self.s_values.tolist(),
            "residual": self.residuals.tolist(),
            "full_residual": self.full_residual,
            "delta_to_full": self.deltas.tolist(),
        }


def initial_time_limit(traj: Trajectory, s_list) -> InitialTimeTable:
    """Budget residual over [s, t_end] for each s; must converge to the full
    interval's value as s -> 0 (strong attainment of the initial state)."""
    times, kinetic, grad_sq, nu = _series_from(traj)
    s_arr = np.asarray(sorted(float(s) for s in s_list)[::-1])
    if s_arr.size == 0:
        raise ValueError("empty s list")
    if s_arr.min() < times[0] - 1e-12 or s_arr.max() >= times[-1]:
        raise ValueError("s values must lie inside the trajectory's time range")
    dissip = nu * _cumtrapz(grad_sq, times)
    kin_at = lambda s: float(np.interp(s, times, kinetic))
    dis_at = lambda s: float(np.interp(s, times, dissip))
    full = kinetic[0] - kinetic[-1] - dissip[-1]
    residuals = np.array([kin_at(s) - kinetic[-1] - (dissip[-1] - dis_at(s)) for s in s_arr])
    return InitialTimeTable(s_arr, residuals, float(full), np.abs(residuals - full))
