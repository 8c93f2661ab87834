"""Experiment orchestration: configs, seed batches, and result files.

A run configuration names an experiment family (1-D / 2-D / CSV field
collection, virtual-target collection, or ALOHA uploading), the field and
kernel parameters, one or more selection policies or contention modes, and a
seed batch.  Running it produces per-seed per-round records plus per-round
aggregates (mean and population standard deviation), either as CSV or JSON.
Outputs are canonicalized so identical configs yield identical bytes.

Config files are flat ``key = value`` text; the shipped presets use the same
key set and can be overridden by a file or command-line flags.
"""

import csv
import json
from dataclasses import dataclass, field as dc_field
from datetime import datetime, timezone

import numpy as np

from . import aloha as aloha_mod
from . import das as das_mod
from .apps import LinearApplication, select_weighted_sum, uniform_mean_application
from .fields import FieldSpec, load_csv
from .gp import KernelParams

EXPERIMENTS = ("das-1d", "das-2d", "das-csv", "das-virtual", "aloha")
DAS_POLICIES = ("max-variance", "random", "app-weighted", "virtual")

# Every figure-style experiment ships as a preset config; values use the
# same flat key=value vocabulary as config files.
PRESETS = {
    "fig2": {
        "experiment": "das-1d", "L": "100", "sigma2": "0.01",
        "rounds": "100", "policy": "max-variance,random", "seeds": "1",
    },
    "fig3": {
        "experiment": "das-2d", "L": "100", "sigma2": "0.1",
        "rounds": "20", "policy": "max-variance,random", "seeds": "1",
    },
    "fig4": {
        "experiment": "das-1d", "L": "30", "sigma2": "0.1",
        "rounds": "30", "policy": "max-variance,random", "seeds": "1..1000",
    },
    "fig6": {
        "experiment": "aloha", "L": "200", "sigma2": "0.1", "T": "10",
        "rounds": "40", "B": "3", "Q": "10", "mu": "0.5", "psi0": "0",
        "mode": "conventional,modified", "seeds": "1..1000",
    },
    "fig7": {
        "experiment": "aloha", "L": "200", "sigma2": "0.1", "T": "10",
        "rounds": "40", "B": "1,2,3,4,5", "Q": "10", "mu": "0.5", "psi0": "0",
        "mode": "conventional,modified", "seeds": "1..1000",
    },
    "fig8": {
        "experiment": "aloha", "L": "200", "sigma2": "0.1", "T": "10",
        "rounds": "40", "B": "4", "Q": "4,6,8,10,12", "mu": "0.5", "psi0": "0",
        "mode": "conventional,modified", "seeds": "1..1000",
    },
}

_DAS_KEYS = {"experiment", "policy", "rounds", "seeds", "L", "sigma2", "T",
             "csv", "length_scale", "signal_variance", "virtual", "apps",
             "betas", "out", "format"}
_ALOHA_KEYS = {"experiment", "rounds", "seeds", "L", "sigma2", "T",
               "length_scale", "signal_variance", "B", "Q", "p_sleep", "mu",
               "psi0", "mode", "out", "format"}

DEFAULT_VIRTUAL_1D = ((1.0,), (3.0,), (5.0,), (7.0,), (9.0,))


class ConfigError(ValueError):
    """Raised for any malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class AlohaSettings:
    b_values: tuple[int, ...]
    q_values: tuple[int, ...]
    p_sleep: float = 0.0
    mu: float = 0.5
    psi0: float = 0.0
    modes: tuple[str, ...] = ("conventional",)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    rounds: int
    seeds: tuple[int, ...]
    L: int = 100
    sigma_sq: float = 0.1
    T: int = 10
    policies: tuple[str, ...] = ("max-variance",)
    csv_path: str | None = None
    length_scale: float = 1.0
    signal_variance: float = 1.0
    virtual: tuple[tuple[float, ...], ...] | None = None
    app_specs: tuple[str, ...] = ("mean",)
    betas: tuple[float, ...] = (1.0,)
    aloha: AlohaSettings | None = None
    out: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be at least 1, got {self.rounds}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.fmt!r}")
        if (self.aloha is not None) != (self.experiment == "aloha"):
            raise ConfigError("aloha settings go with the aloha experiment only")
        if self.experiment == "aloha":
            return
        for p in self.policies:
            if p not in DAS_POLICIES:
                raise ConfigError(f"unknown policy {p!r}; expected one of {DAS_POLICIES}")
        if self.experiment == "das-csv" and not self.csv_path:
            raise ConfigError("das-csv needs a csv path")
        if "virtual" in self.policies and self.virtual is None:
            raise ConfigError("the virtual policy needs virtual locations")
        if len(self.app_specs) != len(self.betas):
            raise ConfigError(
                f"{len(self.app_specs)} apps but {len(self.betas)} betas"
            )

    @property
    def kernel_params(self) -> KernelParams:
        return KernelParams(self.length_scale, self.signal_variance)

    @property
    def field_spec(self) -> FieldSpec:
        kind = {"das-1d": "1d", "das-virtual": "1d", "das-2d": "2d",
                "das-csv": "csv", "aloha": "sinusoid"}[self.experiment]
        return FieldSpec(kind, self.L, self.sigma_sq, self.T, self.csv_path)


@dataclass(frozen=True)
class RunRecord:
    seed: int
    round: int
    metric: str
    value: float
    extra: str = ""


@dataclass(frozen=True)
class AggRecord:
    metric: str
    round: int
    mean: float
    std: float
    n: int


@dataclass
class RunResult:
    records: list[RunRecord]
    aggregates: list[AggRecord]
    failures: list[tuple[int, str, str]] = dc_field(default_factory=list)


# ---------------------------------------------------------------------------
# config parsing


def load_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file; '#' starts a comment line."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


def parse_seeds(spec: str) -> tuple[int, ...]:
    """Seed spec: a single integer, 'a..b' (inclusive), or a comma list."""
    spec = str(spec).strip()
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ConfigError(f"empty seed range {spec!r}")
            return tuple(range(lo, hi + 1))
        if "," in spec:
            return tuple(int(s) for s in spec.split(","))
        return (int(spec),)
    except ValueError:
        raise ConfigError(f"bad seed spec {spec!r}") from None


def _parse_points(spec: str) -> tuple[tuple[float, ...], ...]:
    points = []
    for chunk in spec.split(";"):
        chunk = chunk.strip()
        if chunk:
            points.append(tuple(float(c) for c in chunk.split(",")))
    return tuple(points)


def _split_list(spec: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in str(spec).split(",") if s.strip())


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a flat key=value mapping."""
    m = dict(mapping)
    experiment = m.get("experiment")
    if experiment is None:
        raise ConfigError("config is missing the 'experiment' key")
    allowed = _ALOHA_KEYS if experiment == "aloha" else _DAS_KEYS
    unknown = set(m) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys for {experiment}: {', '.join(sorted(unknown))}"
        )
    try:
        L = int(m.get("L", 100))
        sigma_sq = float(m.get("sigma2", 0.1))
        T = int(m.get("T", 10))
        length_scale = float(m.get("length_scale", 1.0))
        signal_variance = float(m.get("signal_variance", 1.0))
        default_rounds = 40 if experiment == "aloha" else L
        rounds = int(m.get("rounds", default_rounds))
    except ValueError as exc:
        raise ConfigError(f"bad numeric value: {exc}") from None
    seeds = parse_seeds(m.get("seeds", "1"))

    common = dict(
        experiment=experiment, rounds=rounds, seeds=seeds, L=L,
        sigma_sq=sigma_sq, T=T, length_scale=length_scale,
        signal_variance=signal_variance, out=m.get("out"),
        fmt=m.get("format", "csv"),
    )
    if experiment == "aloha":
        try:
            settings = AlohaSettings(
                b_values=tuple(int(v) for v in _split_list(m.get("B", "3"))),
                q_values=tuple(int(v) for v in _split_list(m.get("Q", "10"))),
                p_sleep=float(m.get("p_sleep", 0.0)),
                mu=float(m.get("mu", 0.5)),
                psi0=float(m.get("psi0", 0.0)),
                modes=_split_list(m.get("mode", "conventional")),
            )
        except ValueError as exc:
            raise ConfigError(f"bad aloha value: {exc}") from None
        for mode in settings.modes:
            if mode not in aloha_mod.MODES:
                raise ConfigError(f"unknown aloha mode {mode!r}")
        if not settings.b_values or not settings.q_values:
            raise ConfigError("aloha needs at least one B and one Q")
        return ExperimentConfig(aloha=settings, **common)

    policies = _split_list(m.get("policy", ""))
    if not policies:
        policies = ("virtual",) if experiment == "das-virtual" else ("max-variance",)
    virtual = None
    if "virtual" in m:
        virtual = _parse_points(m["virtual"])
    elif experiment == "das-virtual":
        virtual = DEFAULT_VIRTUAL_1D
    return ExperimentConfig(
        policies=policies,
        csv_path=m.get("csv"),
        virtual=virtual,
        app_specs=_split_list(m.get("apps", "mean")),
        betas=tuple(float(b) for b in _split_list(m.get("betas", "1"))),
        **common,
    )


# ---------------------------------------------------------------------------
# running


def _build_apps(config: ExperimentConfig, n_sensors: int) -> list[LinearApplication]:
    apps = []
    for spec in config.app_specs:
        if spec == "mean":
            apps.append(uniform_mean_application(n_sensors))
        elif spec.startswith("e:"):
            idx = int(spec[2:])
            w = np.zeros(n_sensors)
            w[idx] = 1.0
            apps.append(LinearApplication(w, spec))
        else:
            raise ConfigError(f"unknown app spec {spec!r} (use 'mean' or 'e:<index>')")
    return apps


def _run_das_records(config: ExperimentConfig) -> tuple[list[RunRecord], list]:
    records: list[RunRecord] = []
    failures = []
    params = config.kernel_params
    spec = config.field_spec
    # csv fields are the same for every seed; parse once
    csv_field = load_csv(spec.path, spec.noise_variance) if spec.kind == "csv" else None
    want_holdout = spec.kind == "csv"
    for policy in config.policies:
        for seed in config.seeds:
            try:
                rng = np.random.default_rng(seed)
                field = csv_field if csv_field is not None else spec.build(rng)
                rounds = min(config.rounds, field.n_sensors)
                run_policy = policy
                if policy == "app-weighted":
                    apps = _build_apps(config, field.n_sensors)
                    betas = config.betas

                    def run_policy(f, s, p, r, _apps=apps, _betas=betas):
                        return select_weighted_sum(_apps, _betas, f, s, p)

                logs = das_mod.run_das(
                    field, run_policy, rounds, params, rng=rng,
                    virtual_locs=config.virtual, log_estimates=want_holdout,
                )
                for log in logs:
                    records.append(RunRecord(
                        seed, log.round, f"mse.{policy}", log.mse,
                        f"selected={log.selected}",
                    ))
                    if want_holdout:
                        records.append(RunRecord(
                            seed, log.round, f"holdout-mse.{policy}",
                            _holdout_mse(field, log.estimate),
                            f"selected={log.selected}",
                        ))
            except Exception as exc:  # noqa: BLE001 - reported per seed
                failures.append((seed, policy, str(exc)))
    return records, failures


def _holdout_mse(field, est) -> float:
    held = est.per_sensor_variance > 0
    if not np.any(held):
        return 0.0
    diff = est.values[held] - field.measurements[held]
    return float(np.mean(diff**2))


def _aloha_metric(mode: str, settings: AlohaSettings, b: int, q: int) -> str:
    name = f"sse.{mode}"
    if len(settings.b_values) > 1:
        name += f".B{b}"
    if len(settings.q_values) > 1:
        name += f".Q{q}"
    return name


def _run_aloha_records(config: ExperimentConfig) -> tuple[list[RunRecord], list]:
    records: list[RunRecord] = []
    failures = []
    params = config.kernel_params
    settings = config.aloha
    for b in settings.b_values:
        for q in settings.q_values:
            bound = aloha_mod.sse_lower_bound(config.sigma_sq, q, b)
            bound_metric = _aloha_metric("lower-bound", settings, b, q)
            for mode in settings.modes:
                metric = _aloha_metric(mode, settings, b, q)
                cfg = aloha_mod.AlohaConfig(
                    channels=b, candidates=q, p_sleep=settings.p_sleep,
                    mu=settings.mu, psi0=settings.psi0, mode=mode,
                )
                for seed in config.seeds:
                    try:
                        rng = np.random.default_rng(seed)
                        field = config.field_spec.build(rng)
                        logs = aloha_mod.run_aloha(field, cfg, config.rounds, params, rng)
                        for t, log in enumerate(logs, start=1):
                            succ = "|".join(str(i) for i in log.successes)
                            extra = f"succ={succ};psi={log.psi!r};k={int(log.activity.sum())}"
                            records.append(RunRecord(seed, t, metric, log.sse, extra))
                    except Exception as exc:  # noqa: BLE001 - reported per seed
                        failures.append((seed, metric, str(exc)))
            for seed in config.seeds:
                for t in range(1, config.rounds + 1):
                    records.append(RunRecord(seed, t, bound_metric, bound, ""))
    return records, failures


def aggregate(records: list[RunRecord]) -> list[AggRecord]:
    """Per-(metric, round) mean and population standard deviation."""
    groups: dict[tuple[str, int], list[float]] = {}
    for rec in records:
        groups.setdefault((rec.metric, rec.round), []).append(rec.value)
    out = []
    for (metric, rnd) in sorted(groups):
        vals = np.asarray(groups[(metric, rnd)])
        out.append(AggRecord(metric, rnd, float(vals.mean()),
                             float(vals.std(ddof=0)), vals.size))
    return out


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Execute every (policy-or-mode, seed) run in the config.

    Deterministic given the config: each seed gets its own generator, so seed
    batches can be split and concatenated without changing any record.
    Per-seed failures are collected rather than aborting the batch.
    """
    if config.experiment == "aloha":
        records, failures = _run_aloha_records(config)
    else:
        records, failures = _run_das_records(config)
    records.sort(key=lambda r: (r.seed, r.round, r.metric))
    return RunResult(records, aggregate(records), failures)


# ---------------------------------------------------------------------------
# emitting


def emit_results(result: RunResult, fmt: str, path, timestamp: bool = False):
    """Write records to ``path`` and aggregates to ``path + '.agg'``.

    CSV columns: seed,round,metric,value,extra (aggregates:
    metric,round,mean,std,n).  JSON mirrors the same rows as object lists.
    Output bytes are deterministic unless ``timestamp`` is set.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    stamp = datetime.now(timezone.utc).isoformat() if timestamp else None
    agg_path = str(path) + ".agg"
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if stamp:
                fh.write(f"# generated {stamp}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["seed", "round", "metric", "value", "extra"])
            for r in result.records:
                writer.writerow([r.seed, r.round, r.metric, repr(r.value), r.extra])
        with open(agg_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "round", "mean", "std", "n"])
            for a in result.aggregates:
                writer.writerow([a.metric, a.round, repr(a.mean), repr(a.std), a.n])
    else:
        records = [
            {"seed": r.seed, "round": r.round, "metric": r.metric,
             "value": r.value, "extra": r.extra}
            for r in result.records
        ]
        payload = {"generated": stamp, "records": records} if stamp else records
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
        aggs = [
            {"metric": a.metric, "round": a.round, "mean": a.mean,
             "std": a.std, "n": a.n}
            for a in result.aggregates
        ]
        with open(agg_path, "w", encoding="utf-8") as fh:
            json.dump(aggs, fh, sort_keys=True, indent=1)
            fh.write("\n")


def read_records_csv(path) -> list[RunRecord]:
    """Re-parse a CSV records file (the round-trip inverse of emit_results)."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    for row in rows[1:]:
        out.append(RunRecord(int(row[0]), int(row[1]), row[2], float(row[3]), row[4]))
    return out
