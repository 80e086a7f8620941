"""Monte Carlo scenarios: trials, parameter sweeps and asymptotic validation.

Every user of every trial draws from its own counter-based stream keyed by
``(seed, trial, user)``. The key does not depend on the sweep point, so all
points of a sweep see the same user drops and ray geometries (common random
numbers), and results do not depend on trial execution order.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import asymptotics as asy
from .beamformers import (
    Architecture,
    InfeasibleError,
    SingularProjectionError,
    build_beamformers,
    build_uplink_beamformers,
)
from .channel import ChannelParams, PathLossModel, generate_channel
from .metrics import (
    NoiseModel,
    PowerModel,
    ase_downlink,
    ase_uplink_user,
    downlink_power,
    gee_downlink,
    gee_uplink_user,
)

log = logging.getLogger(__name__)

__all__ = [
    "ALL_ARCHITECTURES",
    "ScenarioConfig",
    "TrialOutcome",
    "SweepResult",
    "user_rng",
    "draw_channels",
    "run_trial",
    "sweep",
    "validate_asymptotics",
    "load_config",
    "config_to_dict",
    "write_sweep_csv",
    "write_sweep_json",
    "write_validation_csv",
    "exact_gee_program",
    "asymptotic_gee_model",
]

ALL_ARCHITECTURES = tuple(a.value for a in Architecture)
AXES = ("n_t", "n_r", "p_t")


@dataclass(frozen=True)
class ScenarioConfig:
    k_users: int = 10
    m_streams: int = 3
    n_t: int = 64
    n_r: int = 30
    cell_radius_m: float = 100.0
    min_distance_m: float = 5.0
    p_t_dbw: float = 0.0
    trials: int = 500
    seed: int = 0
    channel: ChannelParams = field(default_factory=ChannelParams)
    noise: NoiseModel = field(default_factory=NoiseModel)
    power: PowerModel = field(default_factory=PowerModel)
    architectures: tuple = ALL_ARCHITECTURES
    rf_chains_rule: str = "KM"
    uplink: bool = False
    n_q: int = 8
    min_sep_deg: float = 5.0
    cm_hy_target: str = "cm"
    sw_target: str = "cm"

    def __post_init__(self):
        for name in ("k_users", "m_streams", "n_t", "n_r", "trials", "n_q"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.min_distance_m < self.cell_radius_m:
            raise ValueError("need 0 < min_distance_m < cell_radius_m")
        if self.rf_chains_rule not in ("KM", "M"):
            raise ValueError("rf_chains_rule must be 'KM' or 'M'")
        if self.cm_hy_target not in ("cm", "pzf") or self.sw_target not in ("cm", "pzf"):
            raise ValueError("beamformer targets must be 'cm' or 'pzf'")
        object.__setattr__(self, "architectures", tuple(Architecture.parse(a).value for a in self.architectures))

    @property
    def p_t_w(self) -> float:
        return 10.0 ** (self.p_t_dbw / 10.0)

    @property
    def rf_bs(self) -> int:
        return self.k_users * self.m_streams if self.rf_chains_rule == "KM" else self.m_streams

    @property
    def rf_terminal(self) -> int:
        return self.m_streams

    @property
    def rf_tx(self) -> int:
        return self.rf_terminal if self.uplink else self.rf_bs

    @property
    def rf_rx(self) -> int:
        return self.rf_bs if self.uplink else self.rf_terminal


# --------------------------------------------------------------------------
# config I/O
# --------------------------------------------------------------------------

_NESTED = {"channel": ChannelParams, "noise": NoiseModel, "power": PowerModel, "pathloss_model": PathLossModel}


def _from_dict(cls, data: dict):
    if not isinstance(data, dict):
        raise ValueError(f"expected an object for {cls.__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED:
            value = _from_dict(_NESTED[key], value)
        elif key == "architectures":
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: "str | Path | None" = None, **overrides) -> ScenarioConfig:
    """Read a JSON scenario file; keys mirror :class:`ScenarioConfig` fields."""
    data: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text())
    cfg = _from_dict(ScenarioConfig, data)
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides) if overrides else cfg


def config_to_dict(cfg: ScenarioConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["architectures"] = list(cfg.architectures)
    return d


def config_hash(cfg: ScenarioConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# trials
# --------------------------------------------------------------------------


def user_rng(seed: int, trial: int, user: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(trial, user))
    return np.random.Generator(np.random.Philox(ss))


def draw_channels(cfg: ScenarioConfig, trial: int) -> list:
    """User drops and channels of one trial (``n_r x n_t`` each)."""
    channels = []
    r2_min, r2_max = cfg.min_distance_m**2, cfg.cell_radius_m**2
    for k in range(cfg.k_users):
        rng = user_rng(cfg.seed, trial, k)
        # uniform over the annulus
        distance = float(np.sqrt(rng.uniform(r2_min, r2_max)))
        channels.append(generate_channel(cfg.channel, cfg.n_r, cfg.n_t, distance, rng))
    return channels


@dataclass(frozen=True)
class TrialOutcome:
    ase: float
    gee: float


def _beamformers(cfg: ScenarioConfig, arch, channels):
    kwargs = dict(n_q=cfg.n_q, cm_hy_target=cfg.cm_hy_target, sw_target=cfg.sw_target, min_sep_deg=cfg.min_sep_deg)
    build = build_uplink_beamformers if cfg.uplink else build_beamformers
    return build(arch, channels, cfg.m_streams, cfg.rf_tx, cfg.rf_rx, **kwargs)


def _evaluate(cfg: ScenarioConfig, arch, channels) -> TrialOutcome:
    bf = _beamformers(cfg, arch, channels)
    p_t = cfg.p_t_w
    if not cfg.uplink:
        ase = ase_downlink(channels, bf, p_t, cfg.noise)
        gee = gee_downlink(ase, p_t, bf, cfg.n_t, cfg.n_r, cfg.power, cfg.noise)
        return TrialOutcome(ase.total, gee.total)
    powers = np.full(cfg.k_users, p_t)
    rates = [ase_uplink_user(channels, bf, k, powers, cfg.noise) for k in range(cfg.k_users)]
    gees = [
        gee_uplink_user(r, p_t, arch, cfg.n_t, cfg.rf_tx, cfg.power, cfg.noise, n_q=cfg.n_q).total for r in rates
    ]
    return TrialOutcome(float(np.mean(rates)), float(np.mean(gees)))


def run_trial(cfg: ScenarioConfig, trial_index: int, channels: list | None = None) -> dict:
    """Evaluate every configured architecture on one trial.

    Downlink entries are system ASE (bit/s/Hz) and GEE (bit/J); uplink
    entries are per-user averages. Infeasible designs map to None.
    """
    if channels is None:
        channels = draw_channels(cfg, trial_index)
    out = {}
    for arch in cfg.architectures:
        try:
            out[arch] = _evaluate(cfg, arch, channels)
        except (InfeasibleError, SingularProjectionError) as exc:
            log.debug("trial %d, %s infeasible: %s", trial_index, arch, exc)
            out[arch] = None
    return out


@dataclass
class SweepResult:
    axis_name: str
    axis_values: list
    architectures: list
    # samples[arch] has shape (len(axis_values), trials); NaN marks infeasible
    ase_samples: dict
    gee_samples: dict
    seed: int
    trials: int
    config_hash: str
    config: dict = field(default_factory=dict)

    def _stat(self, table, fn, arch):
        out = []
        for row in table[arch]:
            ok = row[np.isfinite(row)]
            out.append(float(fn(ok)) if ok.size else float("nan"))
        return np.array(out)

    def ase_mean(self, arch):
        return self._stat(self.ase_samples, np.mean, arch)

    def ase_std(self, arch):
        return self._stat(self.ase_samples, np.std, arch)

    def gee_mean(self, arch):
        return self._stat(self.gee_samples, np.mean, arch)

    def gee_std(self, arch):
        return self._stat(self.gee_samples, np.std, arch)

    def sample_counts(self, arch):
        return [int(np.sum(np.isfinite(row))) for row in self.ase_samples[arch]]


def _point_config(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "n_t":
        return replace(cfg, n_t=int(value))
    if axis == "n_r":
        return replace(cfg, n_r=int(value))
    if axis == "p_t":
        return replace(cfg, p_t_dbw=float(value))
    raise ValueError(f"axis must be one of {AXES}")


def _trial_rows(args):
    cfg, trial = args
    res = run_trial(cfg, trial)
    return [
        (np.nan, np.nan) if res[a] is None else (res[a].ase, res[a].gee) for a in cfg.architectures
    ]


def _run_trials(cfg: ScenarioConfig, workers: int) -> np.ndarray:
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial_rows, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_trial_rows(j) for j in jobs]
    # (trials, archs, 2)
    return np.array(rows, dtype=float).reshape(cfg.trials, len(cfg.architectures), 2)


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence, workers: int = 1) -> SweepResult:
    """Run ``cfg.trials`` trials at every axis value (``p_t`` values in dBW)."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    values = list(values)
    if not values:
        raise ValueError("no sweep values")
    archs = list(cfg.architectures)
    ase = {a: np.empty((len(values), cfg.trials)) for a in archs}
    gee = {a: np.empty((len(values), cfg.trials)) for a in archs}
    for i, v in enumerate(values):
        data = _run_trials(_point_config(cfg, axis, v), workers)
        for j, a in enumerate(archs):
            ase[a][i] = data[:, j, 0]
            gee[a][i] = data[:, j, 1]
        log.info("%s=%s done", axis, v)
    return SweepResult(axis, values, archs, ase, gee, cfg.seed, cfg.trials, config_hash(cfg), config_to_dict(cfg))


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


SWEEP_HEADER = ["axis", "arch", "ase_mean", "ase_std", "gee_mean", "gee_std", "trials", "seed"]


def sweep_csv_text(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for arch in result.architectures:
        am, asd = result.ase_mean(arch), result.ase_std(arch)
        gm, gsd = result.gee_mean(arch), result.gee_std(arch)
        for i, v in enumerate(result.axis_values):
            w.writerow([_fmt(v), arch, _fmt(am[i]), _fmt(asd[i]), _fmt(gm[i]), _fmt(gsd[i]), result.trials, result.seed])
    return buf.getvalue()


def write_sweep_csv(result: SweepResult, path: "str | Path") -> Path:
    path = Path(path)
    path.write_text(sweep_csv_text(result))
    return path


def write_sweep_json(result: SweepResult, path: "str | Path") -> Path:
    path = Path(path)
    doc = {
        "axis_name": result.axis_name,
        "axis_values": result.axis_values,
        "seed": result.seed,
        "trials": result.trials,
        "config_hash": result.config_hash,
        "config": result.config,
        "units": {"ase": "bit/s/Hz", "gee": "bit/J", "p_t": "dBW"},
        "sample_counts": {a: result.sample_counts(a) for a in result.architectures},
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# asymptotic validation
# --------------------------------------------------------------------------


def _asymptotic_pairs(cfg: ScenarioConfig, channels, axis: str) -> dict:
    """Exact and large-array values for one trial, keyed by formula name."""
    m, k_users = cfg.m_streams, cfg.k_users
    noise, p_t = cfg.noise, cfg.p_t_w
    out = {}
    if not cfg.uplink:
        cm = build_beamformers("CM-FD", channels, m, cfg.rf_tx, cfg.rf_rx)
        summary = asy.spectral_summary(channels, m, cm.precoders)
        out["CM-FD/DL"] = (ase_downlink(channels, cm, p_t, noise).total, asy.cmfd_dl_asymptotic(summary, p_t, noise))
        try:
            pzf = build_beamformers("PZF-FD", channels, m, cfg.rf_tx, cfg.rf_rx)
            out["PZF-FD/DL"] = (ase_downlink(channels, pzf, p_t, noise).total, asy.pzf_dl_asymptotic(summary, p_t, noise))
        except (InfeasibleError, SingularProjectionError):
            out["PZF-FD/DL"] = (np.nan, np.nan)
        an = build_beamformers("AN", channels, m, cfg.rf_tx, cfg.rf_rx, min_sep_deg=cfg.min_sep_deg)
        tables = asy.overlap_tables(channels, m, cfg.min_sep_deg)
        regime = asy.Regime.NT_INF if axis == "n_t" else asy.Regime.NR_INF
        out[f"AN/DL/{regime.value}"] = (
            ase_downlink(channels, an, p_t, noise).total,
            asy.an_dl_asymptotic(tables, regime, p_t, noise),
        )
        return out

    powers = np.full(k_users, p_t)
    users = range(k_users)
    cm = build_uplink_beamformers("CM-FD", channels, m, cfg.rf_tx, cfg.rf_rx)
    out["CM-FD/UL"] = (
        np.mean([ase_uplink_user(channels, cm, k, powers, noise) for k in users]),
        np.mean([asy.cmfd_ul_asymptotic(channels, cm.postcoders, k, powers, noise, m) for k in users]),
    )
    summary = asy.spectral_summary(channels, m)
    try:
        pzf = build_uplink_beamformers("PZF-FD", channels, m, cfg.rf_tx, cfg.rf_rx)
        out["PZF-FD/UL"] = (
            np.mean([ase_uplink_user(channels, pzf, k, powers, noise) for k in users]),
            np.mean([asy.pzf_ul_asymptotic(summary, k, p_t, noise) for k in users]),
        )
    except (InfeasibleError, SingularProjectionError):
        out["PZF-FD/UL"] = (np.nan, np.nan)
    an = build_uplink_beamformers("AN", channels, m, cfg.rf_tx, cfg.rf_rx, min_sep_deg=cfg.min_sep_deg)
    tables = asy.overlap_tables(channels, m, cfg.min_sep_deg)
    regime = asy.Regime.NT_INF if axis == "n_t" else asy.Regime.NR_INF
    out[f"AN/UL/{regime.value}"] = (
        np.mean([ase_uplink_user(channels, an, k, powers, noise) for k in users]),
        np.mean([asy.an_ul_asymptotic(tables, k, regime, powers, noise) for k in users]),
    )
    return out


def validate_asymptotics(cfg: ScenarioConfig, ladder: Sequence[int], axis: str = "n_t") -> list:
    """Exact Monte Carlo mean vs large-array formula along a dimension ladder.

    Returns rows ``dict(formula, axis, dim, exact_mean, asymptotic_mean,
    rel_error)``; the relative error is taken with respect to the exact mean.
    """
    ladder = list(ladder)
    if not ladder:
        raise ValueError("empty dimension ladder")
    if axis not in ("n_t", "n_r"):
        raise ValueError("axis must be 'n_t' or 'n_r'")
    rows = []
    for dim in ladder:
        point = _point_config(cfg, axis, dim)
        acc: dict = {}
        for t in range(point.trials):
            for name, pair in _asymptotic_pairs(point, draw_channels(point, t), axis).items():
                acc.setdefault(name, []).append(pair)
        for name, pairs in acc.items():
            arr = np.array(pairs, dtype=float)
            arr = arr[np.all(np.isfinite(arr), axis=1)]
            exact, approx = (arr.mean(axis=0) if arr.size else (np.nan, np.nan))
            rows.append(
                dict(
                    formula=name,
                    axis=axis,
                    dim=int(dim),
                    exact_mean=float(exact),
                    asymptotic_mean=float(approx),
                    rel_error=float(abs(exact - approx) / abs(exact)) if exact else float("nan"),
                    samples=int(len(arr)),
                )
            )
    rows.sort(key=lambda r: (r["formula"], ladder.index(r["dim"])))
    return rows


VALIDATION_HEADER = ["formula", "axis", "dim", "exact_mean", "asymptotic_mean", "rel_error", "trials", "seed"]


def write_validation_csv(rows: list, cfg: ScenarioConfig, path: "str | Path") -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VALIDATION_HEADER)
    for r in rows:
        w.writerow([r["formula"], r["axis"], r["dim"], _fmt(r["exact_mean"]), _fmt(r["asymptotic_mean"]), _fmt(r["rel_error"]), cfg.trials, cfg.seed])
    path.write_text(buf.getvalue())
    return path


# --------------------------------------------------------------------------
# GEE objectives for the optimizer
# --------------------------------------------------------------------------


def exact_gee_program(cfg: ScenarioConfig, arch) -> tuple:
    """Monte Carlo downlink ``(W * mean ASE, power)`` as functions of ``P_T`` (W).

    Channels and beamformers are drawn once; only the power changes.
    """
    arch = Architecture.parse(arch)
    cases = []
    for t in range(cfg.trials):
        channels = draw_channels(cfg, t)
        try:
            cases.append((channels, _beamformers(cfg, arch, channels)))
        except (InfeasibleError, SingularProjectionError):
            continue
    if not cases:
        raise InfeasibleError(f"{arch.value} is infeasible on every trial")
    k_users, m = cfg.k_users, cfg.m_streams

    def numerator(p: float) -> float:
        return cfg.noise.bandwidth_hz * float(np.mean([ase_downlink(ch, bf, p, cfg.noise).total for ch, bf in cases]))

    def denominator(p: float) -> float:
        return downlink_power(arch, p, cfg.n_t, cfg.n_r, k_users, cfg.rf_tx, cfg.rf_rx, cfg.power, cfg.n_q)

    return numerator, denominator


def asymptotic_gee_model(cfg: ScenarioConfig, arch="PZF-FD") -> tuple:
    """Large-array downlink GEE as ``(numerator(n_t, n_r, p), denominator(n_t, n_r, p))``.

    PZF-FD uses normalized singular values, AN the gains of the selected
    paths; both are sampled once at ``(cfg.n_t, cfg.n_r)`` and treated as
    independent of the array sizes.
    """
    arch = Architecture.parse(arch)
    m, k_users = cfg.m_streams, cfg.k_users
    sigma2 = cfg.noise.sigma2
    if arch is Architecture.PZF_FD:
        # per trial: |lambda~|^2 for all (k, q)
        weights = [asy.spectral_summary(draw_channels(cfg, t), m).lambdas_normalized ** 2 for t in range(cfg.trials)]
        base = np.array(weights)
        scale = lambda nt, nr: nt * nr  # noqa: E731
    elif arch is Architecture.AN:
        rows = []
        for t in range(cfg.trials):
            chans = draw_channels(cfg, t)
            tables = asy.overlap_tables(chans, m, cfg.min_sep_deg)
            rows.append([np.abs(g[:m]) ** 2 / n for g, n in zip(tables.gains, tables.n_paths)])
        base = np.array(rows)
        scale = lambda nt, nr: nt * nr  # noqa: E731
    else:
        raise ValueError("asymptotic GEE is available for PZF-FD and AN")

    def numerator(nt: int, nr: int, p: float) -> float:
        snr = scale(nt, nr) * p / (k_users * m) * base / sigma2
        per_trial = np.sum(np.log2(1.0 + snr), axis=(1, 2))
        return cfg.noise.bandwidth_hz * float(np.mean(per_trial))

    def denominator(nt: int, nr: int, p: float) -> float:
        return downlink_power(arch, p, nt, nr, k_users, cfg.rf_tx, cfg.rf_rx, cfg.power, cfg.n_q)

    return numerator, denominator
