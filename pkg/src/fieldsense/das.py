"""Round-by-round data-aided sensing: one sensor uploads per round, chosen so
the reconstruction of the whole field improves as fast as possible.

The round state tracks which sensors have uploaded.  The field estimate
copies uploaded measurements verbatim and fills the rest with GP posterior
means; its MSE is the sum of the posterior variances of the sensors still
missing.  Selection policies score candidates by those variances (the
max-variance pick provably minimizes next-round MSE), by uniform chance, or
by the variance they would remove at a set of virtual target locations.
"""

from dataclasses import dataclass

import numpy as np

from .fields import SensorField
from .gp import (
    IncrementalConditioner,
    KernelParams,
    as_points,
    posterior_mean_and_variance,
)

# Variance scores are snapped to this grid before argmax/argmin so that
# selection traces do not flip on platform-dependent last-bit noise.
_QUANTUM = 1e-12

POLICIES = ("max-variance", "random", "virtual")


def quantize(values):
    """Snap scores to the comparison grid used by all selection rules."""
    return np.round(np.asarray(values, dtype=float) / _QUANTUM) * _QUANTUM


@dataclass(frozen=True)
class DasState:
    """Upload bookkeeping: which sensors have reported, in what order."""

    uploaded: tuple[int, ...]
    remaining: tuple[int, ...]  # sorted ascending
    uploaded_values: tuple[float, ...]
    round: int = 0

    @classmethod
    def fresh(cls, n_sensors: int) -> "DasState":
        if n_sensors < 1:
            raise ValueError("need at least one sensor")
        return cls((), tuple(range(n_sensors)), (), 0)

    @property
    def n_sensors(self) -> int:
        return len(self.uploaded) + len(self.remaining)

    def with_uploads(self, indices, values) -> "DasState":
        """New state after the given sensors upload; advances the round counter."""
        indices = [int(i) for i in indices]
        values = [float(v) for v in values]
        if len(indices) != len(values):
            raise ValueError("indices and values disagree in length")
        if len(set(indices)) != len(indices):
            raise ValueError(f"duplicate upload indices: {indices}")
        rem = set(self.remaining)
        for i in indices:
            if i not in rem:
                raise ValueError(f"sensor {i} is not awaiting upload")
            rem.remove(i)
        return DasState(
            self.uploaded + tuple(indices),
            tuple(sorted(rem)),
            self.uploaded_values + tuple(values),
            self.round + 1,
        )

    def check_against(self, field: SensorField):
        if self.n_sensors != field.n_sensors:
            raise ValueError(
                f"state tracks {self.n_sensors} sensors, field has {field.n_sensors}"
            )


@dataclass
class FieldEstimate:
    """Full-field reconstruction at some round.

    Uploaded entries are the raw measurements (zero variance); the rest are
    posterior means with their marginal variances.  ``mse`` is the sum of
    ``per_sensor_variance``.
    """

    values: np.ndarray
    per_sensor_variance: np.ndarray
    mse: float


def _uploaded_locs(field: SensorField, state: DasState) -> np.ndarray:
    return field.locations[list(state.uploaded)]


def estimate(field: SensorField, state: DasState, params: KernelParams) -> FieldEstimate:
    """Reconstruct the full field from the uploads recorded in ``state``."""
    state.check_against(field)
    values = field.measurements.copy()
    variance = np.zeros(field.n_sensors)
    if state.remaining:
        rem = list(state.remaining)
        mean, var = posterior_mean_and_variance(
            _uploaded_locs(field, state),
            np.asarray(state.uploaded_values),
            field.locations[rem],
            params,
            field.noise_variance,
        )
        values[rem] = mean
        variance[rem] = var
    return FieldEstimate(values, variance, float(np.sum(variance)))


def _remaining_variances(field, state, params) -> np.ndarray:
    _, var = posterior_mean_and_variance(
        _uploaded_locs(field, state),
        np.asarray(state.uploaded_values),
        field.locations[list(state.remaining)],
        params,
        field.noise_variance,
    )
    return var


def select_max_variance(field: SensorField, state: DasState, params: KernelParams) -> int:
    """Sensor with the largest posterior variance among those not yet uploaded.

    This choice minimizes the next-round MSE; it depends only on locations,
    never on measured values.  Ties break toward the lowest sensor index.
    """
    state.check_against(field)
    if not state.remaining:
        raise ValueError("no sensors remaining")
    var = quantize(_remaining_variances(field, state, params))
    return int(state.remaining[int(np.argmax(var))])


def select_random(state: DasState, rng: np.random.Generator) -> int:
    """Uniform pick among the sensors that have not uploaded yet."""
    if not state.remaining:
        raise ValueError("no sensors remaining")
    return int(state.remaining[int(rng.integers(len(state.remaining)))])


def select_virtual_target(
    field: SensorField,
    state: DasState,
    virtual_locs,
    params: KernelParams,
) -> int:
    """Candidate whose upload would most shrink uncertainty at virtual locations.

    Scores each remaining sensor by the trace of the posterior covariance
    over ``virtual_locs`` after hypothetically adding that sensor; the
    covariance of a Gaussian is measurement-free, so no value is needed.
    """
    state.check_against(field)
    if not state.remaining:
        raise ValueError("no sensors remaining")
    virtual = as_points(virtual_locs, dim=field.dim)
    if virtual.shape[0] == 0:
        raise ValueError("virtual location set is empty")
    obs = _uploaded_locs(field, state)
    traces = np.empty(len(state.remaining))
    for j, cand in enumerate(state.remaining):
        locs = np.vstack([obs, field.locations[cand : cand + 1]])
        _, var = posterior_mean_and_variance(
            locs, np.zeros(locs.shape[0]), virtual, params, field.noise_variance
        )
        traces[j] = var.sum()
    return int(state.remaining[int(np.argmin(quantize(traces)))])


@dataclass
class DasRound:
    """One round of the collection loop: what was picked and what it bought."""

    round: int
    selected: int
    mse: float
    estimate: FieldEstimate | None = None


def _estimate_from_conditioner(field, state, cond, n) -> FieldEstimate:
    values = field.measurements.copy()
    variance = np.zeros(n)
    rem = list(state.remaining)
    values[rem] = cond.mean[rem]
    variance[rem] = cond.variance[rem]
    return FieldEstimate(values, variance, float(np.sum(variance)))


def run_das(
    field: SensorField,
    policy,
    rounds: int,
    params: KernelParams,
    rng: np.random.Generator | None = None,
    virtual_locs=None,
    log_estimates: bool = False,
    incremental: bool = True,
) -> list[DasRound]:
    """Run the collection loop for ``rounds`` rounds and log each round.

    ``policy`` is one of ``POLICIES`` or a callable
    ``(field, state, params, rng) -> sensor index``.  The default fast path
    conditions incrementally; ``incremental=False`` recomputes the posterior
    from scratch every round (the reference behavior, equal to within
    round-off).
    """
    n = field.n_sensors
    if not 1 <= rounds <= n:
        raise ValueError(f"rounds must be in [1, {n}], got {rounds}")
    if isinstance(policy, str) and policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if policy == "random" and rng is None:
        rng = np.random.default_rng()
    virtual = None
    if policy == "virtual":
        if virtual_locs is None:
            raise ValueError("virtual policy needs virtual_locs")
        virtual = as_points(virtual_locs, dim=field.dim)
        if virtual.shape[0] == 0:
            raise ValueError("virtual location set is empty")

    cond = None
    virtual_cols = None
    if incremental:
        target_locs = field.locations
        if virtual is not None:
            target_locs = np.vstack([field.locations, virtual])
            virtual_cols = np.arange(n, n + virtual.shape[0])
        cond = IncrementalConditioner(target_locs, params, field.noise_variance)

    state = DasState.fresh(n)
    logs: list[DasRound] = []
    for _ in range(rounds):
        rem = np.asarray(state.remaining)
        if callable(policy):
            idx = int(policy(field, state, params, rng))
        elif policy == "random":
            idx = select_random(state, rng)
        elif policy == "max-variance":
            if cond is not None:
                idx = int(rem[int(np.argmax(quantize(cond.variance[rem])))])
            else:
                idx = select_max_variance(field, state, params)
        elif policy == "virtual":
            if cond is not None:
                total = cond.variance[virtual_cols].sum()
                scores = np.empty(len(rem))
                for j, cand in enumerate(rem):
                    scores[j] = total - cond.hypothetical_reduction(int(cand), virtual_cols).sum()
                idx = int(rem[int(np.argmin(quantize(scores)))])
            else:
                idx = select_virtual_target(field, state, virtual, params)
        value = float(field.measurements[idx])
        state = state.with_uploads([idx], [value])
        if cond is not None:
            cond.observe(idx, value)
            rem_after = list(state.remaining)
            mse = float(np.sum(cond.variance[rem_after]))
            est = _estimate_from_conditioner(field, state, cond, n) if log_estimates else None
        else:
            est_full = estimate(field, state, params)
            mse = est_full.mse
            est = est_full if log_estimates else None
        logs.append(DasRound(state.round, idx, mse, est))
    return logs
