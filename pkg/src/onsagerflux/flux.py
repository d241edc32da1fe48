"""Scale sweeps of the commutator flux, decay-rate regression against the
predicted exponent gamma = alpha*eta + alpha - 1, and the scaling identity of
the viscous threshold class.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .commutator import BallRule, FluxTerms, flux_terms
from .fields import GridField
from .holder import Modulus, admissible_eta, gamma_exponent
from .mollify import MollifierKernel

logger = logging.getLogger(__name__)

#: log-fit clamp: values at round-off level carry no slope information
FIT_CLAMP = 1e-13


def fit_decay_slope(eps, values, n_fit: int | None = None, clamp: float = FIT_CLAMP) -> float:
    """Weighted log-log slope over the asymptotic sub-range.

    Uses the smallest max(4, n//2) epsilons (all of them if n_fit is given)
    with weights 1/eps, so the eps -> 0 end dominates; values below the clamp
    are dropped as round-off noise.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    order = np.argsort(eps)
    if n_fit is None:
        n_fit = max(4, len(eps) // 2)
    eps, values = eps[order][:n_fit], values[order][:n_fit]
    keep = values > clamp
    eps, values = eps[keep], values[keep]
    if len(eps) < 2:
        return float("nan")
    w = 1.0 / eps
    a = np.vstack([np.log(eps), np.ones_like(eps)]).T
    sol, *_ = np.linalg.lstsq(a * w[:, None], np.log(values) * w, rcond=None)
    return float(sol[0])


@dataclass
class FluxSweepReport:
    """Per-epsilon flux terms plus fitted decay slopes and a verdict."""

    alpha: float
    eta: float
    gamma_theory: float
    rows: list[dict]
    fitted_slopes: dict
    verdict: str
    thresholds: dict
    geometry: str = "periodic3"
    omega_name: str | None = None
    ratio_series: list[float] | None = None
    time_integrated: bool = False

    def to_csv(self, path) -> None:
        cols = ["eps", "pi_total", "pi_smooth", "pi_remainder", "pi_rough"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                fh.write(",".join(f"{row[c]:.17g}" for c in cols) + "\n")

    def as_dict(self) -> dict:
        out = {
            "alpha": self.alpha,
            "eta": self.eta,
            "gamma_theory": self.gamma_theory,
            "fitted_slopes": self.fitted_slopes,
            "verdict": self.verdict,
            "thresholds": self.thresholds,
            "geometry": self.geometry,
            "rows": self.rows,
            "time_integrated": self.time_integrated,
        }
        if self.omega_name is not None:
            out["omega"] = self.omega_name
            out["ratio_series"] = self.ratio_series
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _terms_over_input(v, eps_list, rule) -> list[dict]:
    """Rows of flux terms; a time series is integrated with the trapezoid rule."""
    eps_sorted = sorted(float(e) for e in eps_list)[::-1]
    if isinstance(v, GridField):
        return [flux_terms(v, MollifierKernel(e), rule).as_dict() for e in eps_sorted]
    snapshots = list(v.snapshots) if hasattr(v, "snapshots") else list(v)
    if len(snapshots) < 2:
        raise ValueError("time-series sweep needs at least two snapshots")
    times = np.array([t for t, _ in snapshots])
    rows = []
    for e in eps_sorted:
        kernel = MollifierKernel(e)
        per_t = [flux_terms(f, kernel, rule) for _, f in snapshots]
        row = {"eps": e}
        for key in ("pi_total", "pi_smooth", "pi_remainder", "pi_rough"):
            row[key] = float(np.trapezoid(np.abs([getattr(ft, key) for ft in per_t]), times))
        rows.append(row)
    return rows


def sweep(
    v,
    alpha: float,
    eps_list,
    eta: float,
    *,
    rule: BallRule | None = None,
    slope_floor: float = 0.0,
    total_floor: float = 1e-6,
) -> FluxSweepReport:
    """Flux terms across a decreasing epsilon ladder with decay-slope fits.

    ``v`` is a single field or a time series (an object with ``snapshots`` or
    an iterable of (t, field) pairs); series rows hold time-integrated
    absolute values, matching the integral form of the decay statement.
    """
    eps_arr = sorted(float(e) for e in eps_list)
    if len(eps_arr) < 4:
        raise ValueError("sweep needs at least 4 epsilon values")
    interval = admissible_eta(alpha)
    if interval.empty:
        warnings.warn(
            f"alpha={alpha} admits no splitting exponent (threshold 1/3); forcing eta={eta}, expect non-decay",
            RuntimeWarning,
        )
    elif not interval.contains(eta):
        raise ValueError(f"eta={eta} outside the admissible interval ({interval.lower:.4g}, {interval.upper}]")
    gamma = gamma_exponent(alpha, eta)
    rows = _terms_over_input(v, eps_arr, rule)
    slopes = {
        key: fit_decay_slope([r["eps"] for r in rows], [r[key] for r in rows])
        for key in ("pi_total", "pi_remainder", "pi_rough")
    }
    terminal = abs(rows[-1]["pi_total"])
    slope = slopes["pi_total"]
    conserving = (np.isnan(slope) and terminal <= total_floor) or (slope > slope_floor and terminal <= total_floor)
    verdict = "conserving" if conserving else "non-conserving-trend"
    thresholds = {"slope_floor": slope_floor, "total_floor": total_floor, "fit_clamp": FIT_CLAMP}
    return FluxSweepReport(
        alpha=alpha,
        eta=eta,
        gamma_theory=gamma,
        rows=rows,
        fitted_slopes=slopes,
        verdict=verdict,
        thresholds=thresholds,
        time_integrated=not isinstance(v, GridField),
    )


def sweep_omega(
    v,
    alpha: float,
    omega: Modulus,
    eps_list,
    *,
    rule: BallRule | None = None,
    slope_floor: float = 0.0,
    total_floor: float = 1e-6,
) -> FluxSweepReport:
    """Refined sweep with eta = (1-alpha)/alpha fixed by the modulus argument.

    At alpha = 1/3 the algebraic decay vanishes (gamma = 0) and the report's
    ratio series |pi_total| / (omega(eps)^(1+eta) eps^gamma) must stay bounded.
    """
    if not (1.0 / 3.0 - 1e-12 <= alpha <= 1.0):
        raise ValueError("sweep_omega needs alpha in [1/3, 1]")
    eta = min((1.0 - alpha) / alpha, 2.0)
    gamma = gamma_exponent(alpha, eta)
    eps_arr = sorted(float(e) for e in eps_list)
    if len(eps_arr) < 4:
        raise ValueError("sweep needs at least 4 epsilon values")
    rows = _terms_over_input(v, eps_arr, rule)
    ratios = [
        abs(r["pi_total"]) / (float(omega(r["eps"])) ** (1.0 + eta) * r["eps"] ** gamma)
        for r in rows
    ]
    slopes = {
        key: fit_decay_slope([r["eps"] for r in rows], [r[key] for r in rows])
        for key in ("pi_total", "pi_remainder", "pi_rough")
    }
    terminal = abs(rows[-1]["pi_total"])
    slope = slopes["pi_total"]
    conserving = (np.isnan(slope) and terminal <= total_floor) or (slope > slope_floor and terminal <= total_floor)
    return FluxSweepReport(
        alpha=alpha,
        eta=eta,
        gamma_theory=gamma,
        rows=rows,
        fitted_slopes=slopes,
        verdict="conserving" if conserving else "non-conserving-trend",
        thresholds={"slope_floor": slope_floor, "total_floor": total_floor, "fit_clamp": FIT_CLAMP},
        omega_name=omega.name,
        ratio_series=ratios,
        time_integrated=not isinstance(v, GridField),
    )


@dataclass(frozen=True)
class ScalingCheck:
    """The exponent pair (2/(1+a), 3/(1-a)) and its scaling-invariance sum."""

    alpha: float
    lhs: float
    error: float
    time_exponent: float
    space_exponent: float

    @property
    def sobolev_proxy(self) -> str:
        return f"W^(1,{self.space_exponent:.6g})"


def scaling_check(alpha: float) -> ScalingCheck:
    """Confirms 2/(2/(1+a)) + 3/(3/(1-a)) = 2 as written, to round-off."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    time_exp = 2.0 / (1.0 + alpha)
    space_exp = 3.0 / (1.0 - alpha)
    lhs = 2.0 / time_exp + 3.0 / space_exp
    return ScalingCheck(alpha, lhs, abs(lhs - 2.0), time_exp, space_exp)
