"""Monte-Carlo SER benchmark: sweeps over (k, SNR, M/N, algorithm), CSV
output with per-point resume, cross-point extraction, and a small CLI.

Every trial draws a fresh signal, matrix, and noise realization from a seed
derived by hashing (master seed, point coordinates, trial index), so any
point can be recomputed in isolation and adding algorithms to a sweep never
perturbs existing curves.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import bp as bp_mod
from .baselines import LassoConfig, k_largest_support, lasso, omp
from .bp import BpConfig
from .density import spike_and_slab_prior
from .detector import detect_support, detect_support_k
from .model import (
    SignalSpec,
    dump_instance,
    gen_gaussian_matrix,
    gen_orthogonal_matrix,
    gen_signal,
    gen_sparse_matrix,
    measure,
    truncated_slab_second_moment,
)
from .oracle import exact_support_posterior

ALGORITHMS = ("bht-bp", "omp", "lasso")

CSV_HEADER = "algorithm,n,k,snr_db,m,mn_ratio,trials,mean_ser,std_err,mean_bp_iters,degenerate_count,seed"


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep definition; defaults match the reference experiment scale."""

    n: int = 128
    k_list: tuple = (12,)
    snr_db_list: tuple = (10.0, 20.0, 30.0, 50.0)
    mn_ratios: tuple = tuple(round(0.25 + 0.05 * i, 4) for i in range(16))
    trials: int = 300
    master_seed: int = 0
    algorithms: tuple = ALGORITHMS
    col_weight: int = 3
    slab_std: float = 10.0
    mag_lo_ratio: float = 0.2
    mag_hi_ratio: float = 3.0
    snr_ensemble: bool = False
    baseline_matrix: str = "gaussian-orth"
    detection: str = "threshold"
    bp: BpConfig = field(default_factory=BpConfig)
    lasso: LassoConfig = field(default_factory=LassoConfig)
    out: str = "ser.csv"
    jobs: int = 1
    plot_data: bool = False
    dump_failures: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for r in self.mn_ratios:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"M/N ratios must be in (0, 1], got {r}")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        if self.baseline_matrix not in ("gaussian-orth", "gaussian", "sparse"):
            raise ValueError("baseline_matrix must be 'gaussian-orth', 'gaussian', or 'sparse'")
        if self.detection not in ("threshold", "k-largest"):
            raise ValueError("detection must be 'threshold' or 'k-largest'")


@dataclass(frozen=True)
class SerCurve:
    """One algorithm's SER-vs-M/N curve at fixed (n, k, snr)."""

    algorithm: str
    n: int
    k: int
    snr_db: float
    points: tuple  # of (mn_ratio, mean_ser, trials, std_err), sorted by mn_ratio


@dataclass(frozen=True)
class PointResult:
    algorithm: str
    n: int
    k: int
    snr_db: float
    m: int
    trials: int
    mean_ser: float
    std_err: float
    mean_bp_iters: float
    degenerate_count: int
    seed: int

    @property
    def mn_ratio(self) -> float:
        return self.m / self.n

    def csv_row(self) -> str:
        return (f"{self.algorithm},{self.n},{self.k},{self.snr_db:g},{self.m},"
                f"{self.mn_ratio:.10g},{self.trials},{self.mean_ser:.10g},"
                f"{self.std_err:.10g},{self.mean_bp_iters:.10g},"
                f"{self.degenerate_count},{self.seed}")


def derive_trial_seed(master_seed: int, n: int, k: int, snr_db: float, m: int,
                      algorithm: str, trial: int) -> int:
    """Stable 64-bit seed for one trial, independent of execution order."""
    key = f"{master_seed}|{n}|{k}|{snr_db:g}|{m}|{algorithm}|{trial}"
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class _TrialTask:
    n: int
    k: int
    snr_db: float
    m: int
    col_weight: int
    algorithm: str
    trial: int
    seed: int
    slab_std: float
    mag_lo_ratio: float
    mag_hi_ratio: float
    snr_ensemble: bool
    baseline_matrix: str
    detection: str
    bp: BpConfig
    lasso: LassoConfig
    dump_dir: str | None


def _run_trial(task: _TrialTask) -> tuple[int, int, int]:
    """One Monte-Carlo trial; returns (bit errors, bp iterations, degenerate count)."""
    rng = np.random.default_rng(task.seed)
    spec = SignalSpec(task.n, task.k, task.slab_std, task.mag_lo_ratio, task.mag_hi_ratio)
    signal = gen_signal(spec, rng)
    use_sparse = task.algorithm == "bht-bp" or task.baseline_matrix == "sparse"
    if use_sparse:
        matrix = gen_sparse_matrix(task.n, task.m, task.col_weight, rng)
    elif task.baseline_matrix == "gaussian-orth":
        matrix = gen_orthogonal_matrix(task.n, task.m, task.col_weight, rng)
    else:
        matrix = gen_gaussian_matrix(task.n, task.m, task.col_weight, rng)
    energy = None
    if task.snr_ensemble:
        energy = task.col_weight * task.k * truncated_slab_second_moment(spec)
    meas = measure(matrix, signal, task.snr_db, rng, energy=energy)

    iters = 0
    degenerate = 0
    if task.algorithm == "bht-bp":
        prior = spike_and_slab_prior(task.k / task.n, task.slab_std, task.bp.grid(task.slab_std))
        posts, diags = bp_mod.run(matrix, meas, prior, task.bp)
        iters = diags.iterations
        degenerate = diags.degenerate_count
        if task.detection == "threshold":
            detected = detect_support(posts, prior).support
        else:
            detected = detect_support_k(posts, task.k)
    elif task.algorithm == "omp":
        estimate, _ = omp(matrix, meas.z, task.k)
        detected = k_largest_support(estimate, task.k)
    else:
        estimate = lasso(matrix, meas.z, task.lasso, noise_std=meas.noise_std)
        detected = k_largest_support(estimate, task.k)

    errors = int(np.count_nonzero(detected.bits != signal.support.bits))
    if errors and task.dump_dir and use_sparse:
        name = (f"{task.algorithm}_k{task.k}_snr{task.snr_db:g}_m{task.m}"
                f"_t{task.trial}.txt")
        with open(os.path.join(task.dump_dir, name), "w") as fh:
            dump_instance(fh, matrix, signal, seed=task.seed)
    return errors, iters, degenerate


def _point_tasks(config: ExperimentConfig, k: int, snr_db: float, m: int,
                 algorithm: str) -> list[_TrialTask]:
    return [
        _TrialTask(
            n=config.n, k=k, snr_db=snr_db, m=m, col_weight=config.col_weight,
            algorithm=algorithm, trial=t,
            seed=derive_trial_seed(config.master_seed, config.n, k, snr_db, m, algorithm, t),
            slab_std=config.slab_std, mag_lo_ratio=config.mag_lo_ratio,
            mag_hi_ratio=config.mag_hi_ratio, snr_ensemble=config.snr_ensemble,
            baseline_matrix=config.baseline_matrix, detection=config.detection,
            bp=config.bp, lasso=config.lasso, dump_dir=config.dump_failures,
        )
        for t in range(config.trials)
    ]


def run_point(config: ExperimentConfig, k: int, snr_db: float, m: int,
              algorithm: str, pool: ProcessPoolExecutor | None = None) -> PointResult:
    """Average SER over config.trials fresh instances of one sweep point."""
    if m > config.n:
        raise ValueError("m must not exceed n")
    if config.dump_failures:
        os.makedirs(config.dump_failures, exist_ok=True)
    tasks = _point_tasks(config, k, snr_db, m, algorithm)
    if pool is not None:
        chunk = max(1, len(tasks) // 32)
        results = list(pool.map(_run_trial, tasks, chunksize=chunk))
    else:
        results = [_run_trial(t) for t in tasks]
    errors = sum(r[0] for r in results)
    iters = sum(r[1] for r in results)
    degenerate = sum(r[2] for r in results)
    bits = config.trials * config.n
    p_hat = errors / bits
    std_err = math.sqrt(p_hat * (1.0 - p_hat) / bits)
    return PointResult(
        algorithm=algorithm, n=config.n, k=k, snr_db=snr_db, m=m,
        trials=config.trials, mean_ser=p_hat, std_err=std_err,
        mean_bp_iters=iters / config.trials, degenerate_count=degenerate,
        seed=config.master_seed,
    )


def _ratio_to_m(n: int, ratio: float) -> int:
    return max(1, round(ratio * n))


def _point_order(config: ExperimentConfig):
    """Canonical sweep order; M values deduplicated after rounding."""
    for k in config.k_list:
        for snr_db in config.snr_db_list:
            for algorithm in config.algorithms:
                seen = set()
                for ratio in config.mn_ratios:
                    m = _ratio_to_m(config.n, ratio)
                    if m in seen:
                        continue
                    seen.add(m)
                    yield k, snr_db, algorithm, m


def _read_rows(path: str) -> dict:
    """Existing CSV rows keyed by (algorithm, n, k, snr_db, m, trials, seed)."""
    rows = {}
    if not os.path.exists(path):
        return rows
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != CSV_HEADER:
            return rows
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f = line.split(",")
            key = (f[0], int(f[1]), int(f[2]), float(f[3]), int(f[4]), int(f[6]), int(f[11]))
            rows[key] = line
    return rows


def _write_rows(path: str, rows: list) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row + "\n")
    os.replace(tmp, path)


def run_sweep(config: ExperimentConfig, log=None) -> list[SerCurve]:
    """Run (or resume) the full Cartesian sweep, rewriting the CSV after each
    completed point so interrupted runs keep their finished points."""
    done = _read_rows(config.out)
    rows: list[str] = []
    parent = os.path.dirname(os.path.abspath(config.out))
    os.makedirs(parent, exist_ok=True)
    pool = None
    try:
        if config.jobs > 1:
            pool = ProcessPoolExecutor(max_workers=config.jobs)
        for k, snr_db, algorithm, m in _point_order(config):
            key = (algorithm, config.n, k, snr_db, m, config.trials, config.master_seed)
            if key in done:
                rows.append(done[key])
            else:
                result = run_point(config, k, snr_db, m, algorithm, pool=pool)
                rows.append(result.csv_row())
                if log:
                    log(rows[-1])
            _write_rows(config.out, rows)
    finally:
        if pool is not None:
            pool.shutdown()
    curves = curves_from_csv(config.out)
    if config.plot_data:
        _write_plot_data(config.out, curves)
    return curves


def _write_plot_data(csv_path: str, curves: list) -> None:
    stem, _ = os.path.splitext(csv_path)
    for curve in curves:
        name = f"{stem}_{curve.algorithm}_k{curve.k}_snr{curve.snr_db:g}.xy"
        with open(name, "w") as fh:
            for mn, ser_val, _trials, _se in curve.points:
                fh.write(f"{mn:.10g} {ser_val:.10g}\n")


def curves_from_csv(path: str) -> list[SerCurve]:
    """Group CSV rows into SER curves (one per algorithm, k, snr)."""
    groups: dict = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unrecognized CSV header in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f = line.split(",")
            key = (f[0], int(f[1]), int(f[2]), float(f[3]))
            point = (float(f[5]), float(f[7]), int(f[6]), float(f[8]))
            groups.setdefault(key, []).append(point)
    curves = []
    for (alg, n, k, snr_db), pts in groups.items():
        pts.sort(key=lambda p: p[0])
        curves.append(SerCurve(alg, n, k, snr_db, tuple(pts)))
    return curves


def cross_point(curve: SerCurve, target: float | None = None) -> float | None:
    """Smallest M/N where the curve first reaches the target SER.

    Interpolates linearly in (M/N, log SER) between the bracketing points;
    exact zeros are floored at half of one resolvable error.  Returns None
    when the curve never reaches the target.
    """
    if not curve.points:
        raise ValueError("empty curve")
    if target is None:
        target = 1.0 / curve.n
    for idx, (mn, ser_val, trials, _se) in enumerate(curve.points):
        if ser_val <= target:
            if idx == 0:
                return mn
            prev_mn, prev_ser, prev_trials, _ = curve.points[idx - 1]
            floor = 0.5 / (trials * curve.n)
            s1 = max(ser_val, floor)
            s0 = max(prev_ser, 0.5 / (prev_trials * curve.n))
            if s0 <= target:
                return prev_mn
            frac = (math.log(target) - math.log(s0)) / (math.log(s1) - math.log(s0))
            return prev_mn + (mn - prev_mn) * frac
    return None


# ---------------------------------------------------------------------------
# Config-file parsing: flat `key = value` lines, lists comma-separated.

_LIST_KEYS = {"k_list", "snr_db_list", "mn_ratios", "algorithms"}
_INT_KEYS = {"n", "trials", "master_seed", "col_weight", "jobs"}
_FLOAT_KEYS = {"slab_std", "mag_lo_ratio", "mag_hi_ratio"}
_BOOL_KEYS = {"snr_ensemble", "plot_data"}
_STR_KEYS = {"baseline_matrix", "detection", "out", "dump_failures"}
_BP_KEYS = {"bp_max_iters": int, "bp_damping": float, "bp_tol": float,
            "bp_grid_points": int, "bp_grid_sigmas": float, "bp_noise_tail_sigmas": float}
_LASSO_KEYS = {"lasso_lambda": float, "lasso_max_iters": int, "lasso_tol": float}


def _parse_scalar(text: str) -> float:
    return float("inf") if text.strip().lower() in ("inf", "infinite") else float(text)


def parse_config_text(text: str) -> ExperimentConfig:
    values: dict = {}
    bp_kwargs: dict = {}
    lasso_kwargs: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key in _LIST_KEYS:
            items = [tok.strip() for tok in val.split(",") if tok.strip()]
            if key == "algorithms":
                values[key] = tuple(items)
            elif key == "k_list":
                values[key] = tuple(int(tok) for tok in items)
            else:
                values[key] = tuple(_parse_scalar(tok) for tok in items)
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        elif key in _BOOL_KEYS:
            values[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in _STR_KEYS:
            values[key] = val
        elif key in _BP_KEYS:
            field_name = {"bp_tol": "convergence_tol"}.get(key, key[3:])
            bp_kwargs[field_name] = _BP_KEYS[key](val)
        elif key in _LASSO_KEYS:
            name = key[6:]
            if name == "lambda":
                lasso_kwargs["lam"] = None if val.lower() == "auto" else float(val)
            else:
                lasso_kwargs[name] = _LASSO_KEYS[key](val)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if bp_kwargs:
        values["bp"] = BpConfig(**bp_kwargs)
    if lasso_kwargs:
        values["lasso"] = LassoConfig(**lasso_kwargs)
    return ExperimentConfig(**values)


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------------------
# CLI

def _cmd_run(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.out is not None:
        overrides["out"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.plot_data:
        overrides["plot_data"] = True
    if overrides:
        config = replace(config, **overrides)
    run_sweep(config, log=lambda row: print(row, flush=True))
    print(f"wrote {config.out}")
    return 0


def _cmd_cross(args) -> int:
    curves = curves_from_csv(args.csv)
    for curve in sorted(curves, key=lambda c: (c.k, c.snr_db, c.algorithm)):
        cp = cross_point(curve, args.target)
        rendered = f"{cp:.4f}" if cp is not None else "-"
        print(f"{curve.algorithm}\tk={curve.k}\tsnr={curve.snr_db:g}\tcross={rendered}")
    return 0


def _cmd_oracle_check(args) -> int:
    """Debug command: compare decoder posteriors to exact enumeration on
    random small tree instances."""
    from .testing import random_tree_instance  # local import: test helper

    rng = np.random.default_rng(args.seed)
    worst_tv = 0.0
    disagreements = 0
    config = BpConfig(max_iters=30, convergence_tol=1e-9)
    for _ in range(args.instances):
        matrix, signal, meas, q, slab_std = random_tree_instance(
            rng, max_n=args.n, max_m=args.m)
        prior = spike_and_slab_prior(q, slab_std, config.grid(slab_std))
        posts, _ = bp_mod.run(matrix, meas, prior, config)
        exact = exact_support_posterior(matrix, meas.z, q, slab_std, meas.noise_std)
        spike_bp = np.array([p.spike_weight for p in posts])
        tv = np.abs(spike_bp - (1.0 - exact)).max()
        worst_tv = max(worst_tv, tv)
        detected = detect_support(posts, prior).support.bits
        map_bits = (exact > 0.5).astype(np.uint8)
        disagreements += int(np.count_nonzero(detected != map_bits))
    print(f"instances={args.instances} worst_tv={worst_tv:.3g} decision_disagreements={disagreements}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bhtbp-bench",
                                     description="Monte-Carlo SER benchmark for sparse support recovery")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep from a config file")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--seed", type=int, help="override master seed")
    p_run.add_argument("--trials", type=int, help="override trials per point")
    p_run.add_argument("--out", help="override output CSV path")
    p_run.add_argument("--jobs", type=int, help="worker processes over trials")
    p_run.add_argument("--plot-data", action="store_true", help="also write x/y files per curve")
    p_run.set_defaults(func=_cmd_run)

    p_cross = sub.add_parser("cross", help="extract cross points from a sweep CSV")
    p_cross.add_argument("--csv", required=True)
    p_cross.add_argument("--target", type=float, default=None,
                         help="target SER (default 1/n)")
    p_cross.set_defaults(func=_cmd_cross)

    p_oracle = sub.add_parser("oracle-check",
                              help="debug: decoder vs exact enumeration on small trees")
    p_oracle.add_argument("--n", type=int, default=8)
    p_oracle.add_argument("--m", type=int, default=7)
    p_oracle.add_argument("--instances", type=int, default=20)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.set_defaults(func=_cmd_oracle_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
