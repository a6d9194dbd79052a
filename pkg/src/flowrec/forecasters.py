"""Per-component base forecasters.

These produce the raw, usually incoherent, forecasts that the reconcilers
adjust.  Every method treats the n components as independent univariate
series; no cross-component information is used at this stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadParameter, EmptySeries
from .series import ForecastVector, HierarchicalSeries

FORECAST_KINDS = ("naive", "ses", "drift")


@dataclass(frozen=True)
class ForecastSpec:
    """Which base method to run and with what parameters.

    kind:
        ``naive``  repeat the last observation.
        ``ses``    simple exponential smoothing; flat continuation of the
                   smoothed level, ``params["alpha"]`` in (0, 1].
        ``drift``  last observation plus k times the mean first difference
                   for the k-step-ahead value.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FORECAST_KINDS:
            raise BadParameter(f"forecast kind {self.kind!r} not in {FORECAST_KINDS}")
        if self.kind == "ses":
            alpha = self.params.get("alpha")
            if alpha is None or not 0.0 < float(alpha) <= 1.0:
                raise BadParameter(f"ses needs alpha in (0, 1], got {alpha!r}")


def _ses_level(values: np.ndarray, alpha: float) -> np.ndarray:
    level = values[0].copy()
    for t in range(1, values.shape[0]):
        level = alpha * values[t] + (1.0 - alpha) * level
    return level


def forecast(
    series: HierarchicalSeries, spec: ForecastSpec, horizon: int
) -> list[ForecastVector]:
    """Forecast every component ``horizon`` steps ahead.

    Args:
        series: observed history, shape (T, n).
        spec: method selection, see :class:`ForecastSpec`.
        horizon: number of steps, must be >= 1.

    Returns:
        One ForecastVector per step k = 1..horizon, each with ``origin`` set
        to the last observed index.  ``naive`` and ``ses`` are flat in k;
        ``drift`` extrapolates linearly.
    """
    if horizon < 1:
        raise BadParameter(f"horizon must be >= 1, got {horizon}")
    values = series.values
    last_index = len(series) - 1

    if spec.kind == "naive":
        base = values[-1]
        steps = [base.copy() for _ in range(horizon)]
    elif spec.kind == "ses":
        level = _ses_level(values, float(spec.params["alpha"]))
        steps = [level.copy() for _ in range(horizon)]
    else:  # drift
        if len(series) < 2:
            raise EmptySeries("drift needs at least two observations")
        slope = (values[-1] - values[0]) / (len(series) - 1)
        steps = [values[-1] + k * slope for k in range(1, horizon + 1)]

    return [
        ForecastVector(step, horizon=k, origin=last_index)
        for k, step in enumerate(steps, start=1)
    ]
