"""Waterfall probes with rescued BP and orthogonalized baselines (300 trials)."""
from concurrent.futures import ProcessPoolExecutor

from bhtbp.bench import ExperimentConfig, run_point

POINTS = [
    # bht-bp waterfalls (rescue active)
    ("bht-bp", 50.0, [35, 38, 42, 45, 48]),
    ("bht-bp", 30.0, [38, 42, 45, 48, 52]),
    ("bht-bp", 20.0, [61, 64, 70, 74, 77]),
    ("bht-bp", 10.0, [64, 77, 90, 102]),
    # orthogonalized baselines
    ("omp", 50.0, [38, 42, 45, 48]),
    ("omp", 30.0, [38, 42, 45, 48]),
    ("omp", 20.0, [64, 70, 74, 77, 80]),
    ("omp", 10.0, [64, 77, 90, 102]),
    ("lasso", 50.0, [38, 42, 45, 48]),
    ("lasso", 30.0, [42, 45, 48, 52]),
    ("lasso", 20.0, [64, 70, 74, 77, 80]),
    ("lasso", 10.0, [64, 77, 90, 102]),
]

def main():
    config = ExperimentConfig(trials=300, master_seed=20120801, out="/tmp/probe2.csv", jobs=2)
    with ProcessPoolExecutor(max_workers=2) as pool:
        for alg, snr, ms in POINTS:
            for m in ms:
                r = run_point(config, 12, snr, m, alg, pool=pool)
                print(f"{alg} snr={snr:g} m={m} mn={m/128:.4f} ser={r.mean_ser:.6f} "
                      f"se={r.std_err:.6f} iters={r.mean_bp_iters:.1f}", flush=True)

if __name__ == "__main__":
    main()
