"""Experiment harness and command-line interface.

Sweeps a parameter grid with per-cell derived seeds, so results are
independent of execution order and worker count: the seed of cell c,
repetition r is ``derive_seed(master_seed, kind, c, r)`` (SplitMix64
chain, see ``_rng``).  Records are emitted as CSV or JSON with a stable
column order and 17-significant-digit floats; reruns with the same config
are byte-identical regardless of ``--threads``.

Wall-clock timings are collected but excluded from files by default
(they would break byte-identical reruns); pass ``--timings`` to include
them.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._rng import derive_seed
from .graph_models import (
    sample_correlated_er,
    sample_correlated_wigner,
    write_edge_list,
    write_matrix,
)
from .tree_likelihood import LikelihoodParams, kl_monte_carlo
from . import convex_align, local_limit, mp_align, spectral_align, tree_enum

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2 at the CLI)."""


def overlap(pi_hat, truth) -> float:
    """Fraction of indices where the estimate agrees with the truth.

    Accepts Permutations or plain index arrays; the estimate may be a
    non-bijective mapping (per-entry agreement is still well defined).
    """
    a = np.asarray(getattr(pi_hat, "mapping", pi_hat), dtype=np.int64)
    b = np.asarray(getattr(truth, "mapping", truth), dtype=np.int64)
    if a.shape != b.shape:
        raise ConfigError("size mismatch between estimate and truth")
    return float(np.mean(a == b))


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------


def _run_er_mpalign(params: dict, seed: int) -> dict:
    pair = sample_correlated_er(int(params["n"]), params["lam"], params["s"], seed)
    lp = LikelihoodParams(lam=params["lam"], s=params["s"], d=int(params["d"]))
    msgs = mp_align.compute_messages(pair.g1, pair.g2, lp)
    matches = mp_align.match_vertices(pair.g1, pair.g2, msgs, tau=params.get("tau", 1.0))
    n_correct, n_incorrect = mp_align.score_matches(matches, pair.truth)
    return {
        "n_matched": len(matches.pairs),
        "n_correct": n_correct,
        "n_incorrect": n_incorrect,
        "correct_rate": n_correct / pair.g1.n,
    }


def _run_wigner_eig1(params: dict, seed: int) -> dict:
    pair = sample_correlated_wigner(int(params["n"]), params["sigma"], seed)
    pi_hat = spectral_align.eig1_align(pair.a1, pair.a2)
    eig = spectral_align.leading_eigenvector(pair.a1)
    stats = spectral_align.perturbation_stats(
        pair.a1, pair.a2_unscrambled(), sigma=params["sigma"]
    )
    return {
        "overlap": overlap(pi_hat, pair.truth),
        "eig_gap": eig.gap,
        "s_magnitude": stats.s_magnitude,
        "alignment": stats.alignment,
    }


def _run_wigner_birkhoff(params: dict, seed: int) -> dict:
    pair = sample_correlated_wigner(int(params["n"]), params["sigma"], seed)
    report = convex_align.fw_birkhoff(
        pair.a1,
        pair.a2,
        max_iters=int(params.get("max_iters", 2000)),
        gap_tol=params.get("gap_tol"),
    )
    return {
        "objective": report.objective,
        "fw_gap": report.fw_gap,
        "iterations": report.iterations,
        "frob_gap": convex_align.frobenius_gap(report.x, pair.truth),
        "overlap_argmax": overlap(convex_align.round_argmax(report.x), pair.truth),
        "overlap_lap": overlap(convex_align.round_lap(report.x), pair.truth),
    }


def _run_tree_kl(params: dict, seed: int) -> dict:
    lp = LikelihoodParams(lam=params["lam"], s=params["s"], d=int(params["d"]))
    est = kl_monte_carlo(lp, int(params.get("n_samples", 1000)), seed)
    return {
        "kl_mean": est.mean,
        "kl_stderr": est.stderr,
        "n_samples": est.n_samples,
        "capped_fraction": est.capped_fraction,
    }


def _run_otter(params: dict, seed: int) -> dict:
    n_max = int(params.get("n_max", 40))
    return {
        "alpha_estimate": tree_enum.otter_estimate(n_max),
        "alpha_plain_ratio": tree_enum.otter_estimate(n_max, corrected=False),
    }


def _run_local_limit(params: dict, seed: int) -> dict:
    rep = local_limit.check_local_limit(
        n=int(params["n"]),
        lam=params["lam"],
        s=params["s"],
        d=int(params["d"]),
        n_tree_samples=int(params.get("n_tree_samples", 10**5)),
        seed=seed,
        max_total=int(params.get("max_total", 8)),
    )
    return {"tv_matched": rep.tv_matched, "tv_unmatched": rep.tv_unmatched}


# kind -> (runner, required params, metric column order)
KINDS = {
    "er_mpalign": (
        _run_er_mpalign,
        ("n", "lam", "s", "d"),
        ("n_matched", "n_correct", "n_incorrect", "correct_rate"),
    ),
    "wigner_eig1": (
        _run_wigner_eig1,
        ("n", "sigma"),
        ("overlap", "eig_gap", "s_magnitude", "alignment"),
    ),
    "wigner_birkhoff": (
        _run_wigner_birkhoff,
        ("n", "sigma"),
        ("objective", "fw_gap", "iterations", "frob_gap", "overlap_argmax", "overlap_lap"),
    ),
    "tree_kl": (
        _run_tree_kl,
        ("lam", "s", "d"),
        ("kl_mean", "kl_stderr", "n_samples", "capped_fraction"),
    ),
    "otter": (_run_otter, ("n_max",), ("alpha_estimate", "alpha_plain_ratio")),
    "local_limit_check": (
        _run_local_limit,
        ("n", "lam", "s", "d"),
        ("tv_matched", "tv_unmatched"),
    ),
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    grid: dict
    reps: int = 1
    seed: int = 0
    out: Optional[str] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; known: {sorted(KINDS)}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.grid:
            raise ConfigError("grid must be nonempty (use single-value lists)")
        for key, vals in self.grid.items():
            if not isinstance(vals, (list, tuple)) or not vals:
                raise ConfigError(f"grid entry {key!r} must be a nonempty list")
        _, required, _ = KINDS[self.kind]
        for name in required:
            if name not in self.grid and name not in self.params:
                raise ConfigError(f"kind {self.kind!r} needs parameter {name!r}")

    @staticmethod
    def from_json(doc: dict) -> "ExperimentConfig":
        known = {"kind", "grid", "reps", "seed", "out", "params"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return ExperimentConfig(
            kind=doc.get("kind", ""),
            grid=doc.get("grid", {}),
            reps=int(doc.get("reps", 1)),
            seed=int(doc.get("seed", 0)),
            out=doc.get("out"),
            params=doc.get("params", {}),
        )

    def cells(self) -> list:
        keys = sorted(self.grid)
        out = []
        for combo in product(*(self.grid[k] for k in keys)):
            cell = dict(self.params)
            cell.update(dict(zip(keys, combo)))
            out.append(cell)
        return out


@dataclass(frozen=True)
class ResultRecord:
    kind: str
    cell_index: int
    rep_index: int
    seed: int
    params: dict
    metrics: dict
    status: str
    runtime_ms: float
    version: str = __version__


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Execute the grid x reps product; failures become error records.

    Records come back sorted by (cell_index, rep_index) whatever the
    worker count, and every record is reproducible standalone from its
    recorded parameters and seed.
    """
    runner, _, _ = KINDS[cfg.kind]
    jobs = []
    for ci, cell in enumerate(cfg.cells()):
        for rep in range(cfg.reps):
            jobs.append((ci, rep, cell, derive_seed(cfg.seed, cfg.kind, ci, rep)))

    def run_one(job):
        ci, rep, cell, seed = job
        t0 = time.perf_counter()
        try:
            metrics = runner(cell, seed)
            status = "ok"
            for key, val in metrics.items():
                if isinstance(val, float) and not math.isfinite(val):
                    status = f"error: non-finite metric {key}"
                    metrics = {}
                    break
        except Exception as exc:  # noqa: BLE001 - error rows by contract
            metrics = {}
            status = f"error: {exc}"
        return ResultRecord(
            kind=cfg.kind,
            cell_index=ci,
            rep_index=rep,
            seed=seed,
            params=dict(cell),
            metrics=metrics,
            status=status,
            runtime_ms=(time.perf_counter() - t0) * 1e3,
        )

    if threads <= 1:
        records = [run_one(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run_one, jobs))
    records.sort(key=lambda r: (r.cell_index, r.rep_index))
    return records


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def result_columns(kind: str, records: Sequence[ResultRecord], timings: bool = False) -> list:
    param_cols: list = []
    for rec in records:
        for key in sorted(rec.params):
            if key not in param_cols:
                param_cols.append(key)
    if not records:
        _, required, _ = KINDS[kind]
        param_cols = list(required)
    metric_cols = list(KINDS[kind][2])
    cols = (
        ["schema_version", "kind", "cell_index", "rep_index", "seed"]
        + param_cols
        + metric_cols
        + ["status"]
    )
    if timings:
        cols.append("runtime_ms")
    return cols


def write_results(records: Sequence[ResultRecord], fmt: str, path, kind: Optional[str] = None, timings: bool = False) -> None:
    """Write records as CSV or JSON with a stable schema.

    CSV columns: schema_version, kind, cell_index, rep_index, seed, the
    sorted parameter names, the kind's metric columns, status (and
    runtime_ms when ``timings``).  JSON wraps the records in a document
    carrying the schema version.
    """
    if kind is None:
        if not records:
            raise ConfigError("cannot infer kind from zero records")
        kind = records[0].kind
    if fmt == "csv":
        cols = result_columns(kind, records, timings)
        lines = [",".join(cols)]
        for rec in records:
            row = {
                "schema_version": SCHEMA_VERSION,
                "kind": rec.kind,
                "cell_index": rec.cell_index,
                "rep_index": rec.rep_index,
                "seed": rec.seed,
                "status": rec.status,
                **rec.params,
                **rec.metrics,
            }
            if timings:
                row["runtime_ms"] = rec.runtime_ms
            lines.append(",".join(_fmt(row.get(c, "")) for c in cols))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": kind,
            "records": [
                {
                    "kind": rec.kind,
                    "cell_index": rec.cell_index,
                    "rep_index": rec.rep_index,
                    "seed": rec.seed,
                    "params": rec.params,
                    "metrics": rec.metrics,
                    "status": rec.status,
                    **({"runtime_ms": rec.runtime_ms} if timings else {}),
                    "version": rec.version,
                }
                for rec in records
            ],
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        raise ConfigError(f"unknown format {fmt!r}")
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise RuntimeError(f"cannot write results to {path}: {exc}") from exc


def read_results_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master 64-bit seed")
    parser.add_argument("--out", type=str, default=None, help="output file path")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--timings", action="store_true", help="include runtime_ms in output")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="gralign",
        description="Graph alignment workbench: message passing, spectral, and convex aligners",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a correlated pair and write interchange files")
    p.add_argument("--kind", choices=("er", "wigner"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.8)
    p.add_argument("--sigma", type=float, default=0.0)
    _common(p)

    p = sub.add_parser("mpalign", help="run MP-Align on one sampled pair")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--lam", type=float, default=3.0)
    p.add_argument("--s", type=float, default=0.95)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--tau", type=float, default=1.0)
    _common(p)

    p = sub.add_parser("eig1", help="run the spectral aligner on one Wigner pair")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--sigma", type=float, required=True)
    _common(p)

    p = sub.add_parser("birkhoff", help="run the convex relaxation on one Wigner pair")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--gap-tol", type=float, default=None)
    _common(p)

    p = sub.add_parser("treekl", help="Monte Carlo KL of the correlated tree-pair law")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--nsamples", type=int, default=1000)
    _common(p)

    p = sub.add_parser("otter", help="estimate the tree-count growth constant")
    p.add_argument("--nmax", type=int, default=40)
    _common(p)

    p = sub.add_parser("sweep", help="run a config-driven experiment grid")
    _common(p)

    p = sub.add_parser("check-local-limit", help="neighborhood-vs-tree-law TV diagnostic")
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--tree-samples", type=int, default=10**6)
    _common(p)

    return top


def _load_config(args, default_kind: Optional[str] = None, **grid_overrides) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if default_kind and "kind" not in doc:
        doc["kind"] = default_kind
    doc.setdefault("grid", {})
    for key, val in grid_overrides.items():
        doc["grid"].setdefault(key, [val])
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out and not doc.get("out"):
        doc["out"] = args.out
    return ExperimentConfig.from_json(doc)


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors
        return exc.code if isinstance(exc.code, int) else 2

    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "gen":
        import pathlib

        out = pathlib.Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        if args.kind == "er":
            pair = sample_correlated_er(args.n, args.lam, args.s, args.seed)
            write_edge_list(pair.g1, out / "g1.edges")
            write_edge_list(pair.g2, out / "g2.edges")
            np.savetxt(out / "truth.txt", pair.truth.mapping, fmt="%d")
        else:
            pair = sample_correlated_wigner(args.n, args.sigma, args.seed)
            write_matrix(pair.a1, out / "a1.mat")
            write_matrix(pair.a2, out / "a2.mat")
            np.savetxt(out / "truth.txt", pair.truth.mapping, fmt="%d")
        print(f"wrote pair to {out}")
        return 0

    if cmd == "mpalign":
        cfg = _load_config(args, "er_mpalign", n=args.n, lam=args.lam, s=args.s, d=args.d, tau=args.tau)
        records = run_experiment(cfg, threads=args.threads)
        rec = records[0]
        if rec.status != "ok":
            raise RuntimeError(rec.status)
        print(
            f"matched {rec.metrics['n_matched']} pairs: "
            f"{rec.metrics['n_correct']} correct, {rec.metrics['n_incorrect']} incorrect"
        )
        if cfg.out:
            write_results(records, "csv", cfg.out, timings=args.timings)
        return 0

    if cmd == "eig1":
        cfg = _load_config(args, "wigner_eig1", n=args.n, sigma=args.sigma)
        records = run_experiment(cfg, threads=args.threads)
        rec = records[0]
        if rec.status != "ok":
            raise RuntimeError(rec.status)
        print(f"overlap {_fmt(rec.metrics['overlap'])}")
        if cfg.out:
            write_results(records, "csv", cfg.out, timings=args.timings)
        return 0

    if cmd == "birkhoff":
        overrides = dict(n=args.n, sigma=args.sigma, max_iters=args.max_iters)
        if args.gap_tol is not None:
            overrides["gap_tol"] = args.gap_tol
        cfg = _load_config(args, "wigner_birkhoff", **overrides)
        records = run_experiment(cfg, threads=args.threads)
        rec = records[0]
        if rec.status != "ok":
            raise RuntimeError(rec.status)
        print(
            f"objective {_fmt(rec.metrics['objective'])} frob_gap {_fmt(rec.metrics['frob_gap'])} "
            f"overlap_lap {_fmt(rec.metrics['overlap_lap'])}"
        )
        if cfg.out:
            write_results(records, "csv", cfg.out, timings=args.timings)
        return 0

    if cmd == "treekl":
        cfg = _load_config(args, "tree_kl", lam=args.lam, s=args.s, d=args.d, n_samples=args.nsamples)
        records = run_experiment(cfg, threads=args.threads)
        rec = records[0]
        if rec.status != "ok":
            raise RuntimeError(rec.status)
        print(f"kl {_fmt(rec.metrics['kl_mean'])} +- {_fmt(rec.metrics['kl_stderr'])}")
        if cfg.out:
            write_results(records, "csv", cfg.out, timings=args.timings)
        return 0

    if cmd == "otter":
        estimate = tree_enum.otter_estimate(args.nmax)
        print(f"alpha estimate {estimate:.6f} (n_max={args.nmax})")
        if args.out:
            counts = tree_enum.stabilized_counts(args.nmax)
            with open(args.out, "w") as fh:
                fh.write("n,count\n")
                for n, c in enumerate(counts, start=1):
                    fh.write(f"{n},{c}\n")
        return 0

    if cmd == "sweep":
        if not args.config:
            raise ConfigError("sweep requires --config")
        cfg = _load_config(args)
        records = run_experiment(cfg, threads=args.threads)
        out = cfg.out or "results.csv"
        fmt = "json" if str(out).endswith(".json") else "csv"
        write_results(records, fmt, out, kind=cfg.kind, timings=args.timings)
        n_err = sum(1 for r in records if r.status != "ok")
        print(f"wrote {len(records)} records to {out} ({n_err} errors)")
        return 0

    if cmd == "check-local-limit":
        rep = local_limit.check_local_limit(
            n=args.n, lam=args.lam, s=args.s, d=args.d,
            n_tree_samples=args.tree_samples, seed=args.seed,
        )
        print(f"tv_matched {rep.tv_matched:.4f} tv_unmatched {rep.tv_unmatched:.4f}")
        if args.out:
            with open(args.out, "w") as fh:
                json.dump(
                    {"tv_matched": rep.tv_matched, "tv_unmatched": rep.tv_unmatched},
                    fh,
                )
        return 0

    raise ConfigError(f"unknown command {cmd}")


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
