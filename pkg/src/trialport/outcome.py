"""Per-arm linear outcome regression among trial participants.

Fits E[Y | X, S=1, A=a] by ordinary least squares on each arm's trial rows,
via QR decomposition. Non-randomized rows never enter the fit. Basis
expansion (interactions, splines) is the caller's responsibility.

Extension point: a binary-outcome variant would swap the per-arm OLS solve
for a logistic fit behind the same OutcomeModel/predict surface; nothing
downstream depends on the mean model being linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .domain import ObservedDataset
from .errors import InsufficientData, RankDeficient


@dataclass(frozen=True)
class OutcomeModel:
    """Per-arm coefficients (intercept, slopes) of the trial outcome regression."""

    coef_a0: np.ndarray
    coef_a1: np.ndarray
    residual_variance: tuple[float, float]
    n_per_arm: tuple[int, int]

    def __post_init__(self):
        for name in ("coef_a0", "coef_a1"):
            coef = np.asarray(getattr(self, name), dtype=float)
            if coef.ndim != 1 or not np.all(np.isfinite(coef)):
                raise ValueError(f"{name} must be a finite 1-D vector")
            object.__setattr__(self, name, coef)
            coef.flags.writeable = False

    def coef(self, arm: int) -> np.ndarray:
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm}")
        return self.coef_a1 if arm == 1 else self.coef_a0

    def to_dict(self) -> dict:
        return {
            "coef_a0": [float(v) for v in self.coef_a0],
            "coef_a1": [float(v) for v in self.coef_a1],
            "residual_variance": list(self.residual_variance),
            "n_per_arm": list(self.n_per_arm),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeModel":
        return cls(
            coef_a0=np.asarray(d["coef_a0"], dtype=float),
            coef_a1=np.asarray(d["coef_a1"], dtype=float),
            residual_variance=tuple(d["residual_variance"]),
            n_per_arm=tuple(d["n_per_arm"]),
        )


def _ols_qr(xmat: np.ndarray, y: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(xmat)
    diag = np.abs(np.diag(r))
    if diag.min() <= xmat.shape[0] * np.finfo(float).eps * max(diag.max(), 1.0):
        raise RankDeficient("outcome design matrix is rank deficient")
    return solve_triangular(r, q.T @ y)


def fit_outcome(data: ObservedDataset) -> OutcomeModel:
    """OLS fit of the outcome on covariates within each treatment arm's trial rows."""
    trial = data.trial_mask
    coefs, variances, sizes = [], [], []
    for arm in (0, 1):
        rows = trial & (data.a == arm)
        n_arm = int(rows.sum())
        if n_arm < data.p + 2:
            raise InsufficientData(
                f"arm {arm} has {n_arm} trial rows; need at least p+2 = {data.p + 2}"
            )
        xmat = np.column_stack([np.ones(n_arm), data.x[rows]])
        y = data.y[rows]
        coef = _ols_qr(xmat, y)
        resid = y - xmat @ coef
        dof = n_arm - (data.p + 1)
        variances.append(float(resid @ resid / dof) if dof > 0 else 0.0)
        coefs.append(coef)
        sizes.append(n_arm)
    return OutcomeModel(
        coef_a0=coefs[0],
        coef_a1=coefs[1],
        residual_variance=(variances[0], variances[1]),
        n_per_arm=(sizes[0], sizes[1]),
    )


def predict(model: OutcomeModel, arm: int, x) -> float | np.ndarray:
    """Predicted outcome mean under ``arm`` at covariates ``x``.

    Accepts a single row (returns a float) or an (n, p) matrix (returns an
    array).
    """
    coef = model.coef(arm)
    x = np.asarray(getattr(x, "values", x), dtype=float)
    if x.ndim <= 1:
        return float(coef[0] + x @ coef[1:])
    return coef[0] + x @ coef[1:]
