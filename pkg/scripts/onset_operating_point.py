"""Hit and false-trigger rates of the CUSUM onset detector on step series.

Gaussian noise around a constant level with a step of ``--snr`` noise
standard deviations at a random week, plus an equal number of step-free
null series.  Used to choose the default drift and threshold multipliers.
"""

from __future__ import annotations

import argparse

import numpy as np

from trendfit.onset import OnsetConfig, detect_onset


def rates(cfg: OnsetConfig, snr: float, trials: int, length: int, rng) -> tuple[float, float]:
    hits = false = 0
    for _ in range(trials):
        change = int(rng.integers(cfg.baseline_window + 24, length - 80))
        z = 10.0 + rng.standard_normal(length)
        z[change:] += snr
        rep = detect_onset(z, cfg)
        hits += rep.triggered and abs(rep.onset_index - change) <= 2
        false += detect_onset(10.0 + rng.standard_normal(length), cfg).triggered
    return hits / trials, false / trials


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--length", type=int, default=483)
    ap.add_argument("--snr", type=float, default=5.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    grid = [(8, 0.5, 5.0), (8, 2.5, 10.0), (16, 0.5, 5.0), (16, 2.5, 10.0), (16, 2.5, 8.0), (32, 2.5, 10.0)]
    print("window drift_sd thresh_sd  hit_rate  false_rate")
    for window, drift, thresh in grid:
        cfg = OnsetConfig(baseline_window=window, drift_sigmas=drift, threshold_sigmas=thresh)
        hit, false = rates(cfg, args.snr, args.trials, args.length, np.random.default_rng(args.seed))
        print(f"{window:6d} {drift:8.1f} {thresh:9.1f}  {hit:8.3f}  {false:10.3f}")


if __name__ == "__main__":
    main()
