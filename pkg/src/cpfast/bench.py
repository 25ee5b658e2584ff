"""Monte-Carlo benchmark runner: one record per (cell x seed x algorithm),
with deterministic seeding and CSV output suitable for machine diffing."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, fields

from .kruskal import KruskalModel
from .solver import FitConfig, fit
from .synth import CollinearSpec, add_noise, gen_collinear, medsae_pair
from .tensor import DenseTensor

CSV_COLUMNS = (
    "seed",
    "nu",
    "R",
    "snr_db",
    "algo",
    "iters",
    "accepted_iters",
    "time_ms",
    "final_relerr",
    "medsae_first_db",
    "medsae_rest_db",
    "stop_reason",
)


@dataclass
class RunRecord:
    seed: int
    nu: float
    R: int
    snr_db: float | None
    algo: str
    iters: int
    accepted_iters: int
    time_ms: float
    final_relerr: float
    medsae_first_db: float | None
    medsae_rest_db: float | None
    stop_reason: str

    def __post_init__(self):
        if not (self.iters >= self.accepted_iters >= 0):
            raise ValueError("need iters >= accepted_iters >= 0")

    def row(self) -> list:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def run_single(
    dims,
    rank: int,
    nu: float,
    snr_db: float | None,
    algo: str,
    seed: int,
    scalar_kind: str = "real",
    tau: float = 1e-3,
    tol: float = 1e-8,
    max_iters: int = 1000,
    init: str = "svd",
) -> tuple:
    """One benchmark cell instance; returns (record, truth, fitted model)."""
    spec = CollinearSpec(dims, rank, nu, snr_db, seed, scalar_kind)
    truth, tensor = gen_collinear(spec)
    tensor = add_noise(tensor, snr_db, seed)
    config = FitConfig(
        rank=rank,
        variant=algo,
        tau=tau,
        tol=tol,
        max_iters=max_iters,
        seed=seed,
        init=init,
    )
    result = fit(tensor, config)
    record = record_from_result(result, truth, seed, nu, rank, snr_db, algo)
    return record, truth, result.model


def record_from_result(
    result, truth: KruskalModel, seed, nu, rank, snr_db, algo
) -> RunRecord:
    stop = result.stop_reason if result.stop_reason in (
        "tol",
        "max_iters",
        "mu_overflow",
    ) else "error"
    scores = medsae_pair(truth, result.model) if truth is not None else None
    return RunRecord(
        seed=seed,
        nu=nu,
        R=rank,
        snr_db=snr_db,
        algo=algo,
        iters=result.iters,
        accepted_iters=result.accepted_iters,
        time_ms=result.time_ms,
        final_relerr=result.final_relerr,
        medsae_first_db=scores["first_db"] if scores else None,
        medsae_rest_db=scores["rest_db"] if scores else None,
        stop_reason=stop,
    )


def run_grid(
    dims,
    ranks,
    nus,
    snrs,
    algos,
    seeds: int,
    scalar_kind: str = "real",
    **fit_kwargs,
) -> list:
    """All (nu, R, snr) x seed x algo cells, deterministic order."""
    records = []
    for nu in nus:
        for rank in ranks:
            for snr_db in snrs:
                for seed in range(seeds):
                    for algo in algos:
                        try:
                            record, _, _ = run_single(
                                dims,
                                rank,
                                nu,
                                snr_db,
                                algo,
                                seed,
                                scalar_kind,
                                **fit_kwargs,
                            )
                        except Exception:
                            record = RunRecord(
                                seed, nu, rank, snr_db, algo, 0, 0, 0.0,
                                float("nan"), None, None, "error",
                            )
                        records.append(record)
    return records


def write_csv(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in records:
            writer.writerow(record.row())


def summarize(records) -> list:
    """Per (nu, R, snr, algo) cell: median iters / relerr / MedSAE."""
    cells = {}
    for rec in records:
        cells.setdefault((rec.nu, rec.R, rec.snr_db, rec.algo), []).append(rec)
    rows = []
    for (nu, rank, snr_db, algo), group in sorted(
        cells.items(), key=lambda kv: tuple(map(str, kv[0]))
    ):
        ok = [r for r in group if r.stop_reason != "error"]
        rows.append(
            {
                "nu": nu,
                "R": rank,
                "snr_db": snr_db,
                "algo": algo,
                "runs": len(group),
                "errors": len(group) - len(ok),
                "median_iters": statistics.median(r.iters for r in ok) if ok else "",
                "median_relerr": statistics.median(r.final_relerr for r in ok)
                if ok
                else "",
                "median_medsae_first_db": statistics.median(
                    r.medsae_first_db for r in ok if r.medsae_first_db is not None
                )
                if any(r.medsae_first_db is not None for r in ok)
                else "",
                "median_medsae_rest_db": statistics.median(
                    r.medsae_rest_db for r in ok if r.medsae_rest_db is not None
                )
                if any(r.medsae_rest_db is not None for r in ok)
                else "",
            }
        )
    return rows


def write_summary_csv(path, rows) -> None:
    columns = (
        "nu",
        "R",
        "snr_db",
        "algo",
        "runs",
        "errors",
        "median_iters",
        "median_relerr",
        "median_medsae_first_db",
        "median_medsae_rest_db",
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
