"""Write the bundled 12-series smoke corpus to tests/data/smoke.

Four services in three regions (WW, US, DE), drawn from all three families.
Some series end before their peak, one service launched before the window.
Values are scaled to a maximum of 100 and rounded like search-interest exports.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

from trendfit.fitting import bin_probabilities
from trendfit.models import BassParams, ShiftedGompertzParams, WeibullParams

WINDOW_START = dt.date(2008, 1, 6)
WEEKS = 420
TOTAL = 20000

# service -> region -> (params, onset week in window, weeks before window start)
CORPUS = {
    "pixelgram": {
        "WW": (BassParams(0.004, 0.06), 30, 0),
        "US": (BassParams(0.005, 0.07), 26, 0),
        "DE": (BassParams(0.003, 0.05), 70, 0),
    },
    "chatterly": {
        "WW": (ShiftedGompertzParams(0.012, 6.0), 200, 0),
        "US": (ShiftedGompertzParams(0.015, 6.0), 190, 0),
        "DE": (ShiftedGompertzParams(0.01, 4.0), 260, 0),
    },
    "loopcast": {
        "WW": (WeibullParams(2.2, 90.0), 60, 0),
        "US": (WeibullParams(2.5, 80.0), 55, 0),
        "DE": (WeibullParams(1.8, 120.0), 110, 0),
    },
    # launched 150 weeks before the window opens
    "searchly": {
        "WW": (ShiftedGompertzParams(0.008, 5.0), 0, 150),
        "US": (ShiftedGompertzParams(0.009, 5.0), 0, 150),
        "DE": (ShiftedGompertzParams(0.007, 4.0), 0, 150),
    },
}
LAUNCHES = {"searchly": WINDOW_START - dt.timedelta(weeks=150)}
REGION_MAP = [("WW", "World", "multi"), ("US", "North America", "en"), ("DE", "Europe", "de")]


def make_values(params, onset: int, before: int, rng: np.random.Generator) -> np.ndarray:
    active = WEEKS - onset
    edges = before + np.arange(active + 1, dtype=float)
    probs, mass = bin_probabilities(params, edges)
    counts = rng.multinomial(int(TOTAL * mass), probs)
    scaled = np.rint(100.0 * counts / counts.max())
    values = np.zeros(WEEKS)
    values[onset:] = scaled
    return values


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data" / "smoke"))
    ap.add_argument("--seed", type=int, default=20080106)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    rows, truth = [], []
    for service, regions in CORPUS.items():
        for region, (params, onset, before) in regions.items():
            values = make_values(params, onset, before, rng)
            for i, v in enumerate(values):
                date = WINDOW_START + dt.timedelta(weeks=i)
                rows.append([date.isoformat(), service, region, "<1" if v == 0 and i % 13 == 5 else int(v)])
            truth.append({
                "service": service, "region": region, "family": params.family.value,
                "theta": list(params.as_tuple()), "onset_week": onset, "weeks_before_window": before,
            })

    with open(out / "corpus.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "service", "region", "value"])
        w.writerows(rows)
    with open(out / "launch_dates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["service", "launch_date"])
        w.writerows([s, d.isoformat()] for s, d in LAUNCHES.items())
    with open(out / "regions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "continent", "language"])
        w.writerows(REGION_MAP)
    (out / "truth.json").write_text(json.dumps(truth, indent=1) + "\n")


if __name__ == "__main__":
    main()
