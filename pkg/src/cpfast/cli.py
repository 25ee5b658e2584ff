"""Command-line interface: benchmark generation, fitting, Monte-Carlo sweeps,
spectral feasibility reports, and the identity-verification suite."""

from __future__ import annotations

import csv
import math
import sys
from pathlib import Path

import click

from . import bench as benchmod
from . import cptn
from .hessian import OracleSizeError
from .kruskal import KruskalModel
from .solver import FitConfig, VARIANTS, fit
from .synth import CollinearSpec, add_noise, gen_collinear, spectrum
from .tensor import COMPLEX, REAL
from .verify import format_report, run_suite


def _parse_ints(text: str) -> tuple:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_floats(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(float("inf") if part.lower() in ("inf", "none") else float(part))
    return tuple(out)


def _parse_snr(value: str | None) -> float | None:
    if value is None or value.lower() in ("inf", "none"):
        return None
    return float(value)


@click.group()
def main():
    """CP decomposition benchmark toolkit."""


@main.command("gen")
@click.option("--dims", required=True, help="Comma-separated sizes, e.g. 20,20,20.")
@click.option("--rank", "-r", type=int, required=True)
@click.option("--nu", type=float, required=True, help="Collinearity parameter > 0.")
@click.option("--snr", default=None, help="SNR in dB; omit or 'inf' for noiseless.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--complex", "use_complex", is_flag=True, help="Complex scalars.")
@click.option("--out", default="collinear", show_default=True, help="Output prefix.")
def cmd_gen(dims, rank, nu, snr, seed, use_complex, out):
    """Generate a collinear benchmark tensor plus ground-truth factors."""
    snr_db = _parse_snr(snr)
    kind = COMPLEX if use_complex else REAL
    spec = CollinearSpec(_parse_ints(dims), rank, nu, snr_db, seed, kind)
    truth, tensor = gen_collinear(spec)

    prefix = Path(out)
    cptn.write_tensor(f"{prefix}.cptn", tensor)
    factor_paths = []
    for n, factor in enumerate(truth.factors, start=1):
        path = f"{prefix}_factor{n}.cptn"
        cptn.write_matrix(path, factor)
        factor_paths.append(path)
    meta = {
        "dims": ",".join(str(d) for d in spec.dims),
        "R": rank,
        "nu": nu,
        "snr_db": "inf" if snr_db is None else snr_db,
        "seed": seed,
        "scalar_kind": kind,
        "factors": ";".join(factor_paths),
        "tensor": f"{prefix}.cptn",
    }
    if snr_db is not None:
        noisy = add_noise(tensor, snr_db, seed)
        cptn.write_tensor(f"{prefix}_noisy.cptn", noisy)
        meta["noisy_tensor"] = f"{prefix}_noisy.cptn"
    cptn.write_metadata(f"{prefix}.meta", meta)
    click.echo(f"wrote {prefix}.cptn ({tensor.scalar_kind}, dims {spec.dims})")


def _load_truth(meta_path) -> KruskalModel:
    meta = cptn.read_metadata(meta_path)
    return KruskalModel(
        [cptn.read_matrix(p) for p in meta["factors"].split(";")]
    )


@main.command("fit")
@click.argument("tensor_file", type=click.Path(exists=True))
@click.option("--algo", type=click.Choice(VARIANTS), default="auto", show_default=True)
@click.option("--rank", "-r", type=int, required=True)
@click.option("--tau", type=float, default=1e-3, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--max-iters", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--init", type=click.Choice(["svd", "random"]), default="svd")
@click.option("--truth", default=None, type=click.Path(exists=True),
              help="Metadata sidecar of the generating run, for MedSAE scoring.")
@click.option("--out", default=None, help="Prefix for fitted factors + CSV record.")
def cmd_fit(tensor_file, algo, rank, tau, tol, max_iters, seed, init, truth, out):
    """Decompose a tensor file with the selected algorithm."""
    y = cptn.read_tensor(tensor_file)
    config = FitConfig(
        rank=rank, variant=algo, tau=tau, tol=tol,
        max_iters=max_iters, seed=seed, init=init,
    )
    try:
        result = fit(y, config)
    except OracleSizeError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    truth_model = _load_truth(truth) if truth else None
    record = benchmod.record_from_result(
        result, truth_model, seed, float("nan"), rank, None, algo
    )
    click.echo(
        f"algo={algo} iters={record.iters} accepted={record.accepted_iters} "
        f"relerr={record.final_relerr:.3e} stop={record.stop_reason} "
        f"time_ms={record.time_ms:.1f}"
    )
    if out:
        for n, factor in enumerate(result.model.factors, start=1):
            cptn.write_matrix(f"{out}_factor{n}.cptn", factor)
        benchmod.write_csv(f"{out}.csv", [record])
        click.echo(f"wrote {out}.csv")
    if record.stop_reason == "error":
        sys.exit(1)


@main.command("bench")
@click.option("--dims", default="20,20,20", show_default=True)
@click.option("--rank", default="3", show_default=True, help="Comma-separated ranks.")
@click.option("--nu", default="0.1,0.9", show_default=True)
@click.option("--snr", default="inf", show_default=True)
@click.option("--algos", default="als-ls,auto", show_default=True)
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--complex", "use_complex", is_flag=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--max-iters", type=int, default=1000, show_default=True)
@click.option("--out", default="bench.csv", show_default=True)
def cmd_bench(dims, rank, nu, snr, algos, seeds, use_complex, tol, max_iters, out):
    """Monte-Carlo sweep over (nu, R, SNR) x seeds x algorithms."""
    algo_list = tuple(a.strip() for a in algos.split(",") if a.strip())
    snr_list = tuple(
        None if math.isinf(s) else s for s in _parse_floats(snr)
    )
    records = benchmod.run_grid(
        _parse_ints(dims),
        _parse_ints(rank),
        _parse_floats(nu),
        snr_list,
        algo_list,
        seeds,
        COMPLEX if use_complex else REAL,
        tol=tol,
        max_iters=max_iters,
    )
    benchmod.write_csv(out, records)
    summary = benchmod.summarize(records)
    summary_path = str(Path(out).with_name(Path(out).stem + "_summary.csv"))
    benchmod.write_summary_csv(summary_path, summary)
    click.echo(f"wrote {len(records)} rows to {out}; summary in {summary_path}")
    for row in summary:
        click.echo(
            f"nu={row['nu']} R={row['R']} snr={row['snr_db']} algo={row['algo']}: "
            f"median_iters={row['median_iters']} "
            f"median_relerr={row['median_relerr']}"
        )


@main.command("spectrum")
@click.option("--size", "-i", type=int, required=True, help="Cubic dimension I.")
@click.option("--rank", "-r", type=int, required=True)
@click.option("--order", "-n", type=int, default=3, show_default=True)
@click.option("--nu", default="0.1", show_default=True)
@click.option("--snr", default="inf", show_default=True)
@click.option("--csv", "csv_path", default=None, help="Optional CSV output path.")
def cmd_spectrum(size, rank, order, nu, snr, csv_path):
    """Closed-form unfolding spectrum versus the noise floor per (nu, SNR)."""
    rows = []
    for nu_val in _parse_floats(nu):
        for snr_val in _parse_floats(snr):
            snr_db = None if math.isinf(snr_val) else snr_val
            rep = spectrum(size, rank, order, nu_val, snr_db)
            verdict = "feasible" if rep.feasible else "infeasible"
            click.echo(
                f"nu={nu_val} snr={'inf' if snr_db is None else snr_db}: "
                f"lam_max={rep.lam_max:.6g} lam_mid={rep.lam_mid:.6g} "
                f"lam_min={rep.lam_min:.6g} noise_floor={rep.noise_floor:.6g} "
                f"-> {verdict}"
            )
            rows.append((nu_val, snr_db, rep))
    if csv_path:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["nu", "snr_db", "x", "y", "lam_max", "lam_mid", "lam_min",
                 "sigma2", "noise_floor", "norm2", "feasible"]
            )
            for nu_val, snr_db, rep in rows:
                writer.writerow(
                    [nu_val, "inf" if snr_db is None else snr_db, rep.x, rep.y,
                     rep.lam_max, rep.lam_mid, rep.lam_min, rep.sigma2,
                     rep.noise_floor, rep.norm2, rep.feasible]
                )
        click.echo(f"wrote {csv_path}")


@main.command("verify")
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--perturb", is_flag=True,
              help="Inject a deliberate defect (the suite must then fail).")
def cmd_verify(seeds, perturb):
    """Run every structural-identity check against dense oracles."""
    results = run_suite(seeds=seeds, perturb=perturb)
    click.echo(format_report(results))
    if any(not r.passed for r in results):
        sys.exit(1)


if __name__ == "__main__":
    main()
