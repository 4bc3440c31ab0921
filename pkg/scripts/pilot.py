"""Quick sweep probe around the expected cross points (reduced trials)."""
import sys
from concurrent.futures import ProcessPoolExecutor

from bhtbp.bench import ExperimentConfig, run_point
from bhtbp.bp import BpConfig

POINTS = {
    "bht-bp": {50.0: [42, 45, 48, 51], 30.0: [45, 48, 52, 55], 20.0: [70, 74, 77, 80], 10.0: [64, 77, 90, 102, 115, 128]},
    "omp":    {50.0: [38, 42, 45, 48], 30.0: [40, 43, 46, 49], 20.0: [67, 70, 74, 77], 10.0: [64, 77, 90, 102, 128]},
    "lasso":  {50.0: [41, 45, 48, 51], 30.0: [43, 46, 49, 52], 20.0: [67, 70, 74, 77], 10.0: [64, 77, 90, 102, 128]},
}

def main():
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    config = ExperimentConfig(trials=trials, master_seed=20120801, out="/tmp/pilot.csv", jobs=2)
    with ProcessPoolExecutor(max_workers=2) as pool:
        for alg, by_snr in POINTS.items():
            for snr, ms in by_snr.items():
                for m in ms:
                    r = run_point(config, 12, snr, m, alg, pool=pool)
                    print(f"{alg} snr={snr:g} m={m} mn={m/128:.4f} ser={r.mean_ser:.6f} "
                          f"se={r.std_err:.6f} iters={r.mean_bp_iters:.1f}", flush=True)

if __name__ == "__main__":
    main()
