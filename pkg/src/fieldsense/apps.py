"""Application-driven sensor selection.

Downstream consumers of the reconstructed field are modeled as linear
functionals (a weight vector per application) plus one nonlinear special
case, the field maximum.  Each application can nominate the upload that most
reduces its own output error; several applications together yield a
candidate set of up to Q sensors for a contention round.
"""

from dataclasses import dataclass

import numpy as np

from .das import DasState, FieldEstimate, _remaining_variances, quantize
from .fields import SensorField
from .gp import KernelParams, posterior

_MSE_CLAMP = -1e-10


@dataclass
class LinearApplication:
    """An application whose output is weights . estimate."""

    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite entries")


def uniform_mean_application(n_sensors: int) -> LinearApplication:
    """The field-average application: every sensor weighted 1/L."""
    return LinearApplication(np.full(n_sensors, 1.0 / n_sensors), "mean")


def estimate_covariance(field: SensorField, state: DasState, params: KernelParams) -> np.ndarray:
    """Error covariance of the full-field estimate, in block form.

    Uploaded rows and columns are exactly zero (those entries are reported
    measurements); the remaining block is the GP posterior covariance.
    """
    state.check_against(field)
    n = field.n_sensors
    cov = np.zeros((n, n))
    if state.remaining:
        rem = list(state.remaining)
        post = posterior(
            field.locations[list(state.uploaded)],
            np.asarray(state.uploaded_values),
            field.locations[rem],
            params,
            field.noise_variance,
        )
        cov[np.ix_(rem, rem)] = post.covariance
    return cov


def application_output(app: LinearApplication, est: FieldEstimate) -> float:
    """The application's value on the current estimate: weights . values."""
    if app.weights.shape[0] != est.values.shape[0]:
        raise ValueError(
            f"{app.weights.shape[0]} weights but {est.values.shape[0]} estimate entries"
        )
    return float(app.weights @ est.values)


def application_mse(app: LinearApplication, cov: np.ndarray) -> float:
    """Output error variance w' Sigma w for the given estimate covariance."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (app.weights.shape[0],) * 2:
        raise ValueError(
            f"covariance shape {cov.shape} does not match {app.weights.shape[0]} weights"
        )
    value = float(app.weights @ cov @ app.weights)
    if value < _MSE_CLAMP:
        raise ValueError(f"application MSE {value:g} below round-off tolerance")
    return max(value, 0.0)


def _hypothetical_mses(
    apps, field: SensorField, state: DasState, params: KernelParams
) -> np.ndarray:
    """MSE of each application after each candidate's hypothetical upload.

    Returns an array of shape (n_remaining, n_apps), rows ordered like
    ``state.remaining``.  The hypothetical covariance conditions on the
    candidate's location only; no measurement value is needed.
    """
    obs = field.locations[list(state.uploaded)]
    out = np.empty((len(state.remaining), len(apps)))
    for j, cand in enumerate(state.remaining):
        rest = [i for i in state.remaining if i != cand]
        if not rest:
            out[j] = 0.0
            continue
        locs = np.vstack([obs, field.locations[cand : cand + 1]])
        post = posterior(
            locs, np.zeros(locs.shape[0]), field.locations[rest], params,
            field.noise_variance,
        )
        for q, app in enumerate(apps):
            w = app.weights[rest]
            out[j, q] = w @ post.covariance @ w
    return out


def select_for_application(
    app: LinearApplication, field: SensorField, state: DasState, params: KernelParams
) -> int:
    """Candidate whose upload minimizes this application's next-round MSE."""
    state.check_against(field)
    if not state.remaining:
        raise ValueError("no sensors remaining")
    mses = _hypothetical_mses([app], field, state, params)[:, 0]
    return int(state.remaining[int(np.argmin(quantize(mses)))])


def select_weighted_sum(
    apps, betas, field: SensorField, state: DasState, params: KernelParams
) -> int:
    """Candidate minimizing the beta-weighted sum of application MSEs."""
    state.check_against(field)
    betas = np.asarray(betas, dtype=float).ravel()
    if len(apps) != betas.shape[0]:
        raise ValueError(f"{len(apps)} applications but {betas.shape[0]} betas")
    if not np.all(betas > 0):
        raise ValueError("betas must be positive")
    if not state.remaining:
        raise ValueError("no sensors remaining")
    totals = _hypothetical_mses(apps, field, state, params) @ betas
    return int(state.remaining[int(np.argmin(quantize(totals)))])


def select_max_value_app(
    field: SensorField, state: DasState, est: FieldEstimate
) -> int | None:
    """For a max-of-field application: the sensor holding the largest estimate.

    Returns its index when that entry is still a prediction (worth
    verifying), or None when the maximum is already a reported measurement.
    """
    state.check_against(field)
    if est.values.shape[0] != field.n_sensors:
        raise ValueError("estimate does not match the field")
    idx = int(np.argmax(est.values))
    return idx if idx in set(state.remaining) else None


def build_candidate_set(
    selections, field: SensorField, state: DasState, params: KernelParams,
    Q: int, rng: np.random.Generator | None = None,
) -> list[int]:
    """Merge per-application picks into an ordered candidate set of size Q.

    Deduplicates the picks (None entries contribute nothing), then pads with
    not-yet-chosen sensors in descending posterior-variance order; any slots
    somehow still open are filled uniformly at random.  The result is capped
    at min(Q, #remaining) and is always a duplicate-free subset of the
    remaining sensors.
    """
    if Q < 1:
        raise ValueError(f"Q must be at least 1, got {Q}")
    state.check_against(field)
    remaining = set(state.remaining)
    chosen: list[int] = []
    for sel in selections:
        if sel is None:
            continue
        sel = int(sel)
        if sel not in remaining:
            raise ValueError(f"selection {sel} is not a remaining sensor")
        if sel not in chosen:
            chosen.append(sel)
    limit = min(Q, len(remaining))
    if len(chosen) < limit:
        var = _remaining_variance_order(field, state, params)
        for cand in var:
            if len(chosen) >= limit:
                break
            if cand not in chosen:
                chosen.append(cand)
    if len(chosen) < limit:  # unreachable with the variance ranking, kept as a guard
        pool = sorted(remaining - set(chosen))
        picks = (rng or np.random.default_rng()).permutation(len(pool))
        chosen.extend(pool[i] for i in picks[: limit - len(chosen)])
    return chosen[:limit]


def _remaining_variance_order(field, state, params) -> list[int]:
    var = quantize(_remaining_variances(field, state, params))
    order = sorted(range(len(var)), key=lambda j: (-var[j], state.remaining[j]))
    return [int(state.remaining[j]) for j in order]
