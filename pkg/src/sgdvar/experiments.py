"""Experiment runner: replications, parallel splits, checkpoints, output files.

Every replication r and split p draws from an independent substream
derived from (seed, r, p), so runs are bit-reproducible and records do
not depend on execution order. Indices follow the estimator convention:
a checkpoint at n covers n iterates in total across splits, i.e. each of
the p substreams has reached iterate index n/p.
"""

from __future__ import annotations

import itertools
import json
import statistics
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__, analysis, estimator, problems, schedule
from .analysis import KsResult
from .schedule import StepParams

PROBLEMS = ("sphere_median", "geometric_quantile", "logistic_synthetic", "logistic_csv")
FEATURE_LAWS = ("standard_normal", "uniform_cube")

# p-value cutoff used for the KS pass fractions reported in summaries.
KS_PASS_LEVEL = 0.05


class ConfigError(ValueError):
    """The run configuration is inconsistent or incomplete."""


@dataclass
class RunConfig:
    """Everything one experiment run depends on."""

    problem: str
    dim: int | None = None
    n_total: int = 0
    params: StepParams = field(default_factory=StepParams)
    seed: int = 0
    replications: int = 1
    splits: int = 1
    checkpoints: list[int] | None = None
    points_per_decade: int = 10
    direction: np.ndarray | None = None
    theta_star: np.ndarray | None = None
    feature_law: str = "standard_normal"
    input_path: str | None = None
    label_column: int = 0
    has_header: bool = False
    remap_zero_one: bool = False
    output_path: str = "out"
    output_format: str = "jsonl"
    residuals: bool = False
    m_init: np.ndarray | None = None
    level: float = 0.95
    region: str = "ellipsoid"


@dataclass
class MetricsRecord:
    """One (checkpoint, replication) row of an experiment run."""

    n: int
    replication: int
    frob_err_sq: float | None
    param_err_sq: float | None
    ks_rm: KsResult | None
    ks_avg: KsResult | None
    coverage_hit: bool | None
    wall_time_ms: float


@dataclass
class RunResult:
    """Records plus aggregates of one run."""

    records: list[MetricsRecord]
    summary: dict
    residuals: dict[int, list[tuple[int, int, float, float]]]
    skipped_singularities: int
    total_wall_ms: float
    per_replication_ms: list[float]


def default_checkpoints(n_total: int, splits: int, points_per_decade: int) -> list[int]:
    """Geometric checkpoint grid, snapped to multiples of the split count."""
    grid = {n_total}
    i = points_per_decade  # start the grid at n = 10
    while True:
        value = round(10.0 ** (i / points_per_decade))
        if value >= n_total:
            break
        snapped = max(2 * splits, round(value / splits) * splits)
        if snapped <= n_total:
            grid.add(snapped)
        i += 1
    return sorted(grid)


def validate_config(config: RunConfig) -> RunConfig:
    """Check cross-field consistency and fill derived defaults in place."""
    if config.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {config.problem!r}; choose from {PROBLEMS}")
    schedule.validate(config.params)
    if config.n_total < 2:
        raise ConfigError(f"n_total must be at least 2, got {config.n_total}")
    if config.replications < 1:
        raise ConfigError("replications must be >= 1")
    if config.splits < 1:
        raise ConfigError("splits must be >= 1")
    if config.n_total % config.splits != 0:
        raise ConfigError(
            f"n_total={config.n_total} must be divisible by splits={config.splits}"
        )
    if config.n_total // config.splits < 2:
        raise ConfigError("each split needs at least 2 iterates")
    if not 0.0 < config.level < 1.0:
        raise ConfigError("level must lie strictly between 0 and 1")
    if config.region not in ("ellipsoid", "ball"):
        raise ConfigError(f"unknown region shape {config.region!r}")
    if config.output_format not in ("jsonl", "csv"):
        raise ConfigError(f"unknown output format {config.output_format!r}")

    if config.problem == "geometric_quantile":
        if config.direction is None:
            raise ConfigError("geometric_quantile requires a direction")
        config.direction = problems.quantile_direction(config.direction)
    elif config.direction is not None:
        raise ConfigError("direction is only valid for geometric_quantile")

    if config.problem == "logistic_csv":
        if config.input_path is None:
            raise ConfigError("logistic_csv requires input_path")
        if config.replications != 1:
            raise ConfigError("logistic_csv runs a fixed file; replications must be 1")
    elif config.input_path is not None:
        raise ConfigError("input_path is only valid for logistic_csv")

    if config.problem == "logistic_synthetic":
        if config.theta_star is None:
            raise ConfigError("logistic_synthetic requires theta_star")
        config.theta_star = np.asarray(config.theta_star, dtype=float).reshape(-1)
        if config.dim is None:
            config.dim = config.theta_star.shape[0]
        elif config.dim != config.theta_star.shape[0]:
            raise ConfigError("dim does not match the length of theta_star")
        if config.feature_law not in FEATURE_LAWS:
            raise ConfigError(f"unknown feature law {config.feature_law!r}")
    elif config.theta_star is not None:
        raise ConfigError("theta_star is only valid for logistic_synthetic")

    if config.problem in ("sphere_median", "geometric_quantile"):
        if config.dim is None or config.dim < 3:
            raise ConfigError(f"{config.problem} requires dim >= 3")
        if config.direction is not None and config.direction.shape[0] != config.dim:
            raise ConfigError("direction length does not match dim")

    if config.residuals:
        if config.problem != "sphere_median" or config.splits != 1:
            raise ConfigError("residual dumps require sphere_median with splits=1")
        p = config.params
        if abs(p.c_gamma - 1.0) > 1e-12 or abs(p.alpha - 2.0 / 3.0) > 1e-12:
            raise ConfigError("residual dumps require c_gamma=1 and alpha=2/3")

    if config.checkpoints is None:
        config.checkpoints = default_checkpoints(
            config.n_total, config.splits, config.points_per_decade
        )
    else:
        cps = sorted(set(int(c) for c in config.checkpoints))
        for cp in cps:
            if cp % config.splits != 0:
                raise ConfigError(f"checkpoint {cp} is not a multiple of splits")
            if not 2 * config.splits <= cp <= config.n_total:
                raise ConfigError(f"checkpoint {cp} outside [2*splits, n_total]")
        if not cps:
            raise ConfigError("checkpoints must not be empty")
        config.checkpoints = cps

    if config.m_init is not None and config.dim is not None:
        config.m_init = np.asarray(config.m_init, dtype=float).reshape(-1)
        if config.m_init.shape[0] != config.dim:
            raise ConfigError("m_init length does not match dim")
    return config


def _gradient_fn(config: RunConfig):
    if config.problem == "sphere_median":
        return lambda obs, h: problems.quantile_gradient(obs, h, None)
    if config.problem == "geometric_quantile":
        direction = config.direction
        return lambda obs, h: problems.quantile_gradient(obs, h, direction)
    return problems.logistic_gradient


def _make_streams(config: RunConfig, replication: int):
    if config.problem in ("sphere_median", "geometric_quantile"):
        return [
            problems.sphere_sampler(config.dim, config.seed, (replication, p))
            for p in range(config.splits)
        ]
    if config.problem == "logistic_synthetic":
        return [
            problems.logistic_sampler(
                config.theta_star, config.feature_law, config.seed, (replication, p)
            )
            for p in range(config.splits)
        ]
    raise AssertionError("csv streams are handled separately")


def run(config: RunConfig) -> RunResult:
    """Execute the configured experiment and collect records and summaries."""
    validate_config(config)
    if config.problem == "logistic_csv":
        return _run_csv(config)
    return _run_synthetic(config)


def _truths(config: RunConfig):
    """(parameter truth, covariance truth) where known, else Nones."""
    if config.problem == "sphere_median":
        refs = analysis.sphere_references(config.dim)
        return np.zeros(config.dim), refs.average_covariance
    if config.problem == "logistic_synthetic":
        return config.theta_star, None
    return None, None


def _run_synthetic(config: RunConfig) -> RunResult:
    d = config.dim
    m_init = config.m_init if config.m_init is not None else np.zeros(d)
    gradient = _gradient_fn(config)
    truth_point, truth_sigma = _truths(config)
    ks_ready = (
        config.problem == "sphere_median"
        and config.splits == 1
        and abs(config.params.c_gamma - 1.0) <= 1e-12
        and abs(config.params.alpha - 2.0 / 3.0) <= 1e-12
    )
    records = []
    residual_rows: dict[int, list] = {cp: [] for cp in config.checkpoints}
    skipped = 0
    per_rep_ms = []
    t_start = time.perf_counter()
    for rep in range(config.replications):
        rep_t0 = time.perf_counter()
        streams = _make_streams(config, rep)
        states = [estimator.init(m_init, config.params) for _ in range(config.splits)]
        seg_t0 = rep_t0
        for cp in config.checkpoints:
            target = cp // config.splits
            for state, stream in zip(states, streams):
                while state.n < target:
                    obs = next(stream)
                    try:
                        grad = gradient(obs, state.iterate)
                    except problems.Singularity:
                        skipped += 1
                        continue
                    estimator.step(state, grad)
            merged = estimator.merge(states)
            avg = np.mean([st.average for st in states], axis=0)
            frob_err_sq = None
            param_err_sq = None
            ks_rm = ks_avg = None
            coverage_hit = None
            if truth_sigma is not None:
                frob_err_sq = analysis.frobenius_error(merged, truth_sigma) ** 2
            if truth_point is not None:
                diff = avg - truth_point
                param_err_sq = float(diff @ diff)
            if ks_ready:
                solo = states[0]
                q_rm = analysis.normalize_iterate(
                    solo.iterate, truth_point, solo.n, d, config.params
                )
                q_avg = analysis.normalize_average(solo.average, truth_point, solo.n, d)
                ks_rm = analysis.ks_normal(q_rm)
                ks_avg = analysis.ks_normal(q_avg)
                if config.residuals:
                    residual_rows[cp].extend(
                        (rep, i, float(q_rm[i]), float(q_avg[i])) for i in range(d)
                    )
            if config.problem == "logistic_synthetic":
                # pooled view: the mean of split averages obeys the same
                # limit law as one full-stream average at the pooled count cp
                pooled = estimator.EstimatorState(
                    n=cp, iterate=avg, average=avg,
                    residual_acc=np.zeros(d), covariance=merged,
                    params=config.params,
                )
                ball = analysis.confidence_ball(
                    pooled, config.level, spherical=config.region == "ball"
                )
                coverage_hit = bool(ball.test(truth_point))
            now = time.perf_counter()
            records.append(MetricsRecord(
                n=cp,
                replication=rep,
                frob_err_sq=frob_err_sq,
                param_err_sq=param_err_sq,
                ks_rm=ks_rm,
                ks_avg=ks_avg,
                coverage_hit=coverage_hit,
                wall_time_ms=(now - seg_t0) * 1e3,
            ))
            seg_t0 = now
        per_rep_ms.append((time.perf_counter() - rep_t0) * 1e3)
    total_ms = (time.perf_counter() - t_start) * 1e3
    return RunResult(
        records=records,
        summary=_summarize(records, config),
        residuals=residual_rows if config.residuals else {},
        skipped_singularities=skipped,
        total_wall_ms=total_ms,
        per_replication_ms=per_rep_ms,
    )


def _run_csv(config: RunConfig) -> RunResult:
    try:
        rows = problems.csv_stream(
            config.input_path,
            label_column=config.label_column,
            has_header=config.has_header,
            remap_zero_one=config.remap_zero_one,
        )
        first = next(rows, None)
    except OSError as exc:
        raise problems.DataError(f"cannot read {config.input_path}: {exc}") from exc
    needed = config.n_total - config.splits  # observations for all splits
    if first is None:
        raise problems.DataError(
            f"input ended after 0 rows; {needed} required for n_total={config.n_total}"
        )
    d = first.features.shape[0]
    if config.dim is None:
        config.dim = d
    elif config.dim != d:
        raise problems.DataError(f"file has {d} features but config.dim={config.dim}")
    if config.m_init is not None and config.m_init.shape[0] != d:
        raise ConfigError("m_init length does not match the file dimension")
    rows = itertools.chain([first], rows)
    m_init = config.m_init if config.m_init is not None else np.zeros(d)

    records = []
    t_start = time.perf_counter()
    states = [estimator.init(m_init, config.params) for _ in range(config.splits)]
    consumed = 0
    seg_t0 = t_start
    for cp in config.checkpoints:
        target_rows = config.splits * (cp // config.splits - 1)
        while consumed < target_rows:
            try:
                obs = next(rows)
            except StopIteration:
                raise problems.DataError(
                    f"input ended after {consumed} rows; {needed} required "
                    f"for n_total={config.n_total}"
                ) from None
            state = states[consumed % config.splits]
            estimator.step(state, problems.logistic_gradient(obs, state.iterate))
            consumed += 1
        now = time.perf_counter()
        records.append(MetricsRecord(
            n=cp,
            replication=0,
            frob_err_sq=None,
            param_err_sq=None,
            ks_rm=None,
            ks_avg=None,
            coverage_hit=None,
            wall_time_ms=(now - seg_t0) * 1e3,
        ))
        seg_t0 = now
    total_ms = (time.perf_counter() - t_start) * 1e3
    summary = _summarize(records, config)
    merged = estimator.merge(states)
    summary["final_average"] = [float(v) for v in np.mean([s.average for s in states], axis=0)]
    summary["final_covariance"] = [[float(v) for v in row] for row in merged]
    return RunResult(
        records=records,
        summary=summary,
        residuals={},
        skipped_singularities=0,
        total_wall_ms=total_ms,
        per_replication_ms=[total_ms],
    )


def _summarize(records: list[MetricsRecord], config: RunConfig) -> dict:
    """Cross-replication aggregates per checkpoint, in sorted record order."""
    ordered = sorted(records, key=lambda r: (r.replication, r.n))
    by_n: dict[int, list[MetricsRecord]] = {}
    for rec in ordered:
        by_n.setdefault(rec.n, []).append(rec)
    rows = []
    for n in sorted(by_n):
        group = by_n[n]
        frob = [r.frob_err_sq for r in group if r.frob_err_sq is not None]
        param = [r.param_err_sq for r in group if r.param_err_sq is not None]
        ks_rm = [r.ks_rm.p_value for r in group if r.ks_rm is not None]
        ks_avg = [r.ks_avg.p_value for r in group if r.ks_avg is not None]
        hits = [r.coverage_hit for r in group if r.coverage_hit is not None]
        rows.append({
            "n": n,
            "replications": len(group),
            "mean_frob_err_sq": sum(frob) / len(frob) if frob else None,
            "median_frob_err_sq": statistics.median(frob) if frob else None,
            "mean_param_err_sq": sum(param) / len(param) if param else None,
            "ks_rm_pass_fraction":
                sum(p >= KS_PASS_LEVEL for p in ks_rm) / len(ks_rm) if ks_rm else None,
            "ks_avg_pass_fraction":
                sum(p >= KS_PASS_LEVEL for p in ks_avg) / len(ks_avg) if ks_avg else None,
            "coverage_rate": sum(hits) / len(hits) if hits else None,
        })
    return {"problem": config.problem, "checkpoints": rows}


def _fmt(value) -> str:
    """Fixed serialization: 17 significant digits, lossless round-trip."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _json_value(value) -> str:
    return "null" if value is None else _fmt(value)


def _record_json(rec: MetricsRecord) -> str:
    parts = [
        f'"n": {rec.n}',
        f'"replication": {rec.replication}',
        f'"frob_err_sq": {_json_value(rec.frob_err_sq)}',
        f'"param_err_sq": {_json_value(rec.param_err_sq)}',
    ]
    for name, ks in (("ks_rm", rec.ks_rm), ("ks_avg", rec.ks_avg)):
        if ks is None:
            parts.append(f'"{name}": null')
        else:
            parts.append(
                f'"{name}": {{"statistic": {_fmt(ks.statistic)}, '
                f'"p_value": {_fmt(ks.p_value)}, "sample_size": {ks.sample_size}}}'
            )
    parts.append(f'"coverage_hit": {_json_value(rec.coverage_hit)}')
    return "{" + ", ".join(parts) + "}"


_CSV_HEADER = (
    "n,replication,frob_err_sq,param_err_sq,"
    "ks_rm_statistic,ks_rm_p_value,ks_rm_sample_size,"
    "ks_avg_statistic,ks_avg_p_value,ks_avg_sample_size,coverage_hit"
)


def _record_csv(rec: MetricsRecord) -> str:
    cells = [str(rec.n), str(rec.replication), _fmt(rec.frob_err_sq), _fmt(rec.param_err_sq)]
    for ks in (rec.ks_rm, rec.ks_avg):
        if ks is None:
            cells.extend(["", "", ""])
        else:
            cells.extend([_fmt(ks.statistic), _fmt(ks.p_value), str(ks.sample_size)])
    cells.append(_fmt(rec.coverage_hit))
    return ",".join(cells)


def _config_dict(config: RunConfig) -> dict:
    raw = asdict(config)
    raw["params"] = asdict(config.params)
    for key in ("direction", "theta_star", "m_init"):
        if raw[key] is not None:
            raw[key] = [float(v) for v in raw[key]]
    return raw


def emit(result: RunResult, config: RunConfig, out_dir: str | None = None) -> list[str]:
    """Write metric, residual, and metadata files; returns the paths written.

    Metric and residual files are byte-identical across reruns of the
    same (config, seed): records are sorted by (replication, n), floats
    are printed with 17 significant digits, and timings stay out of them
    (wall-clock aggregates go to meta.json only).
    """
    out = Path(out_dir if out_dir is not None else config.output_path)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    ordered = sorted(result.records, key=lambda r: (r.replication, r.n))
    if config.output_format == "csv":
        metrics_path = out / "metrics.csv"
        lines = [_CSV_HEADER] + [_record_csv(r) for r in ordered]
    else:
        metrics_path = out / "metrics.jsonl"
        lines = [_record_json(r) for r in ordered]
    metrics_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written.append(str(metrics_path))

    for cp in sorted(result.residuals):
        rows = sorted(result.residuals[cp])
        path = out / f"residuals_n{cp}.csv"
        body = ["replication,component,normalized_iterate,normalized_average"]
        body.extend(
            f"{rep},{comp},{_fmt(q_rm)},{_fmt(q_avg)}" for rep, comp, q_rm, q_avg in rows
        )
        path.write_text("\n".join(body) + "\n", encoding="utf-8")
        written.append(str(path))

    meta = {
        "package": "sgdvar",
        "version": __version__,
        "generator": problems.GENERATOR,
        "config": _config_dict(config),
        "summary": result.summary,
        "skipped_singularities": result.skipped_singularities,
        "timing": {
            "total_ms": result.total_wall_ms,
            "per_replication_ms": result.per_replication_ms,
        },
    }
    meta_path = out / "meta.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    written.append(str(meta_path))
    return written
