"""Monte-Carlo campaign driver.

A drop draws UE positions, LoS visibility and shadowing, builds the channel
statistics once, and then runs every pilot-assignment method on those same
statistics and the same channel/noise realizations (paired comparison).
"""

from __future__ import annotations

import csv
import json
import logging
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from xlmimo.assignment import assign_pilots
from xlmimo.channel import (
    ChannelStatistics,
    QuadratureWarning,
    ShadowingWarning,
    channel_statistics,
    complex_normal,
    draw_shadow_fields,
    sample_channel,
    sample_visibility,
)
from xlmimo.config import PA_METHODS, ScenarioConfig
from xlmimo.detection import MetricsRecord, uplink_sinr
from xlmimo.estimation import (
    PilotAssignment,
    average_nmse_cost,
    error_covariance,
    mmse_estimate,
    nmse_per_ue,
    pilot_observation,
)
from xlmimo.rng import Stage, drop_stream
from xlmimo.scenario import build_topology, link_geometry
from xlmimo.selection import strongest_ue_selection

log = logging.getLogger(__name__)

CDF_SERIES = {
    "avg_nmse_per_drop": "avg_nmse",
    "max_nmse_per_drop": "max_nmse",
    "min_se_per_drop": "min_se",
    "min_nmse_per_drop": "min_nmse",
    "max_se_per_drop": "max_se",
    "nmse_per_ue": "nmse",
    "se_per_ue": "se",
    "sum_se_per_drop": "sum_se",
}


class CampaignError(RuntimeError):
    pass


def resolve_methods(selection: str | Sequence[str], cfg: ScenarioConfig) -> list[str]:
    """Expand ``"all"`` and drop the genie when it exceeds the search budget."""
    if isinstance(selection, str):
        methods = list(PA_METHODS) if selection == "all" else [selection]
        explicit = selection != "all"
    else:
        methods, explicit = list(selection), True
    for m in methods:
        if m not in PA_METHODS:
            raise ValueError(f"unknown pilot-assignment method: {m}")
    if "genie" in methods and cfg.tau_p**cfg.K > cfg.exhaustive_budget and not explicit:
        log.warning("K=%d, tau_p=%d: genie search exceeds budget, skipped", cfg.K, cfg.tau_p)
        methods.remove("genie")
    return methods


def drop_statistics(cfg: ScenarioConfig, drop_id: int) -> ChannelStatistics:
    seed, K = cfg.master_seed, cfg.K
    topo = build_topology(cfg, drop_stream(seed, K, drop_id, Stage.TOPOLOGY))
    geom = link_geometry(topo)
    alpha = sample_visibility(geom, drop_stream(seed, K, drop_id, Stage.VISIBILITY))
    shadows = draw_shadow_fields(topo, geom, cfg, drop_stream(seed, K, drop_id, Stage.SHADOWING))
    return channel_statistics(geom, alpha, shadows, cfg)


@dataclass
class DropResult:
    drop_id: int
    records: dict[str, MetricsRecord]
    assignments: dict[str, np.ndarray]
    los_fraction: float
    checksum: str
    quadrature_warnings: int = 0


def _assign(method, stats, cfg, drop_id) -> PilotAssignment:
    stage = Stage.RANDOM_PA if method == "random" else Stage.GA
    return assign_pilots(method, stats, cfg, drop_stream(cfg.master_seed, cfg.K, drop_id, stage))


def evaluate_assignment(
    assignment: PilotAssignment,
    stats: ChannelStatistics,
    cfg: ScenarioConfig,
    h: np.ndarray,
    pilot_noise: np.ndarray,
) -> MetricsRecord:
    """Selection, estimation, combining and SE for one assignment."""
    smap = strongest_ue_selection(stats, assignment)
    y = pilot_observation(h, assignment, cfg, pilot_noise)
    hhat = mmse_estimate(y, assignment, stats, cfg)
    C = error_covariance(assignment, stats, cfg)
    sinr = uplink_sinr(hhat, C, smap, cfg)
    se = cfg.prelog * np.mean(np.log2(1.0 + sinr), axis=0)
    return MetricsRecord(
        nmse=nmse_per_ue(assignment, stats, cfg),
        se=se,
        n_serving=smap.n_serving(),
        cost=average_nmse_cost(assignment, stats, cfg),
    )


def run_drop(cfg: ScenarioConfig, drop_id: int, methods: Sequence[str]) -> DropResult:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", QuadratureWarning)
        warnings.simplefilter("always", ShadowingWarning)
        stats = drop_statistics(cfg, drop_id)
    n_quad = sum(issubclass(w.category, QuadratureWarning) for w in caught)
    for w in caught:
        log.debug("drop %d: %s", drop_id, w.message)

    seed, K = cfg.master_seed, cfg.K
    n = cfg.realizations_per_drop
    h = sample_channel(stats, drop_stream(seed, K, drop_id, Stage.CHANNEL), n)
    pilot_noise = complex_normal(
        drop_stream(seed, K, drop_id, Stage.PILOT_NOISE), (n, cfg.tau_p, cfg.L, cfg.N)
    )
    records, assignments = {}, {}
    for method in methods:
        assignment = _assign(method, stats, cfg, drop_id)
        assignments[method] = assignment.pilots
        records[method] = evaluate_assignment(assignment, stats, cfg, h, pilot_noise)
    return DropResult(
        drop_id=drop_id,
        records=records,
        assignments=assignments,
        los_fraction=float(np.mean(stats.alpha)),
        checksum=stats.checksum(),
        quadrature_warnings=n_quad,
    )


def _drop_task(args):
    cfg, drop_id, methods = args
    try:
        return run_drop(cfg, drop_id, methods)
    except Exception as exc:  # one failed drop must not abort the campaign
        return (drop_id, f"{type(exc).__name__}: {exc}", traceback.format_exc())


def empirical_cdf(values: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(list(values), dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


@dataclass
class CampaignResult:
    cfg: ScenarioConfig
    methods: list[str]
    drops: list[DropResult]
    failures: list[tuple[int, str]] = field(default_factory=list)

    def per_drop(self, method: str, metric: str) -> np.ndarray:
        """One value per drop: avg/max/min NMSE, sum/min/max SE or cost."""
        recs = [d.records[method] for d in self.drops]
        table = {
            "avg_nmse": lambda r: r.avg_nmse,
            "max_nmse": lambda r: float(np.max(r.nmse)),
            "min_nmse": lambda r: float(np.min(r.nmse)),
            "sum_se": lambda r: r.sum_se,
            "min_se": lambda r: r.min_se,
            "max_se": lambda r: r.max_se,
            "mean_se": lambda r: float(np.mean(r.se)),
            "cost": lambda r: r.cost,
            "served_fraction": lambda r: float(np.mean(r.served)),
        }
        return np.array([table[metric](r) for r in recs])

    def per_ue(self, method: str, metric: str) -> np.ndarray:
        return np.concatenate([getattr(d.records[method], metric) for d in self.drops])

    def cdf_values(self, method: str, name: str) -> np.ndarray:
        if name in ("nmse", "se"):
            return self.per_ue(method, name)
        return self.per_drop(method, name)

    @property
    def los_fraction(self) -> float:
        return float(np.mean([d.los_fraction for d in self.drops]))

    def aggregates(self) -> dict:
        out = {}
        for m in self.methods:
            out[m] = {
                metric: float(np.mean(self.per_drop(m, metric)))
                for metric in (
                    "avg_nmse",
                    "max_nmse",
                    "min_nmse",
                    "sum_se",
                    "min_se",
                    "max_se",
                    "mean_se",
                    "served_fraction",
                )
            }
        return out

    def summary(self) -> dict:
        cdfs = {}
        for series, name in CDF_SERIES.items():
            cdfs[series] = {}
            for m in self.methods:
                x, y = empirical_cdf(self.cdf_values(m, name))
                cdfs[series][m] = {"x": x.tolist(), "cdf": y.tolist()}
        return {
            "config": self.cfg.to_dict(),
            "methods": list(self.methods),
            "n_drops": len(self.drops),
            "n_failed": len(self.failures),
            "failures": [{"drop_id": d, "error": e} for d, e in self.failures],
            "los_fraction": self.los_fraction,
            "quadrature_warnings": int(sum(d.quadrature_warnings for d in self.drops)),
            "statistics_checksums": [d.checksum for d in self.drops],
            "aggregates": self.aggregates(),
            "cdfs": cdfs,
        }


def run_campaign(
    cfg: ScenarioConfig,
    methods: str | Sequence[str] = "all",
    workers: int = 1,
    drop_ids: Sequence[int] | None = None,
) -> CampaignResult:
    methods = resolve_methods(methods, cfg)
    ids = list(range(cfg.mc_realizations)) if drop_ids is None else list(drop_ids)
    tasks = [(cfg, d, methods) for d in ids]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_drop_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        outcomes = []
        for i, task in enumerate(tasks):
            outcomes.append(_drop_task(task))
            if (i + 1) % max(1, len(tasks) // 10) == 0:
                log.info("K=%d: %d/%d drops", cfg.K, i + 1, len(tasks))

    drops, failures = [], []
    for outcome in outcomes:
        if isinstance(outcome, DropResult):
            drops.append(outcome)
            log.debug("drop %d statistics checksum %s", outcome.drop_id, outcome.checksum)
        else:
            drop_id, message, tb = outcome
            log.error("drop %d failed (master_seed=%d, K=%d): %s\n%s", drop_id, cfg.master_seed, cfg.K, message, tb)
            failures.append((drop_id, message))
    return CampaignResult(cfg=cfg, methods=methods, drops=drops, failures=failures)


def run_sweep(
    cfg: ScenarioConfig, ks: Sequence[int], methods: str | Sequence[str] = "all", workers: int = 1
) -> dict[int, CampaignResult]:
    """Independent campaigns for each K (UE count)."""
    out = {}
    for K in ks:
        sub = cfg.with_overrides(K=int(K))
        log.info("sweep: K=%d", K)
        out[int(K)] = run_campaign(sub, methods, workers)
    return out


def sweep_table(sweep: dict[int, CampaignResult]) -> list[dict]:
    """Average sum SE, per-user SE and minimum per-user SE versus K."""
    rows = []
    for K, res in sorted(sweep.items()):
        if not res.drops:
            continue
        for m in res.methods:
            rows.append(
                {
                    "K": K,
                    "method": m,
                    "avg_sum_se": float(np.mean(res.per_drop(m, "sum_se"))),
                    "avg_per_user_se": float(np.mean(res.per_drop(m, "mean_se"))),
                    "avg_min_se": float(np.mean(res.per_drop(m, "min_se"))),
                }
            )
    return rows


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


RESULT_COLUMNS = ("drop_id", "method", "ue", "nmse", "se", "served", "n_serving_sas")


def result_rows(result: CampaignResult):
    for d in result.drops:
        for m in result.methods:
            rec = d.records[m]
            for k in range(rec.nmse.size):
                yield (d.drop_id, m, k, rec.nmse[k], rec.se[k], bool(rec.served[k]), int(rec.n_serving[k]))


def write_results(
    result: CampaignResult | dict[int, CampaignResult],
    out_dir: str | Path,
    fmt: str = "both",
) -> list[Path]:
    """Write per-UE CSV rows, CDF files per series and a JSON summary.

    A dict of campaigns (a K sweep) gets one file set per K plus
    ``se_vs_K.csv``. Returns the written paths.
    """
    if fmt not in ("csv", "json", "both"):
        raise ValueError("format must be csv, json or both")
    campaigns = result if isinstance(result, dict) else {None: result}
    if not any(res.drops for res in campaigns.values()):
        raise CampaignError("no successful drops")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CampaignError(f"cannot create output directory {out_dir}: {exc}") from exc

    written: list[Path] = []
    summary: dict = {}
    try:
        for K, res in campaigns.items():
            suffix = "" if K is None else f"_K{K}"
            if not res.drops:
                continue
            if fmt in ("csv", "both"):
                path = out_dir / f"results{suffix}.csv"
                _write_csv(path, RESULT_COLUMNS, result_rows(res))
                written.append(path)
                cdf_dir = out_dir / "cdf"
                cdf_dir.mkdir(exist_ok=True)
                for series, name in CDF_SERIES.items():
                    for m in res.methods:
                        x, y = empirical_cdf(res.cdf_values(m, name))
                        path = cdf_dir / f"{series}{suffix}_{m}.csv"
                        _write_csv(path, (name, "cdf"), zip(x, y))
                        written.append(path)
            if K is None:
                summary = res.summary()
            else:
                summary.setdefault("sweep", {})[str(K)] = res.summary()
        if len(campaigns) > 1 or None not in campaigns:
            rows = sweep_table(campaigns)
            summary["se_vs_K"] = rows
            if fmt in ("csv", "both"):
                path = out_dir / "se_vs_K.csv"
                cols = ("K", "method", "avg_sum_se", "avg_per_user_se", "avg_min_se")
                _write_csv(path, cols, ([r[c] for c in cols] for r in rows))
                written.append(path)
        if fmt in ("json", "both"):
            path = out_dir / "summary.json"
            with open(path, "w") as fh:
                json.dump(summary, fh, indent=1, sort_keys=True)
                fh.write("\n")
            written.append(path)
    except OSError as exc:
        raise CampaignError(f"failed writing results to {out_dir}: {exc}") from exc
    return written
