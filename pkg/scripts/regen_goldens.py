"""Run the CLI pipeline on the smoke corpus and store its outputs as golden files.

Only rerun after an intentional change to fitting or output formats, and
review the diff of tests/data/golden before committing it.
"""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

from trendfit.cli import main

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "tests" / "data" / "smoke"
GOLDEN = ROOT / "tests" / "data" / "golden"
HORIZON = 104


def run_pipeline(out: Path) -> list[int]:
    corpus = str(SMOKE / "corpus.csv")
    return [
        main(["fit", corpus, "--family", "all", "--out", str(out),
              "--launch-dates", str(SMOKE / "launch_dates.csv")]),
        main(["report", str(out), "--map", str(SMOKE / "regions.csv")]),
        main(["forecast", str(out), corpus, "--horizon-weeks", str(HORIZON), "--best-only"]),
    ]


def main_() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        codes = run_pipeline(out)
        if any(codes):
            raise SystemExit(f"pipeline exit codes {codes}")
        if GOLDEN.exists():
            shutil.rmtree(GOLDEN)
        (GOLDEN / "forecasts").mkdir(parents=True)
        shutil.copy(out / "fit_summary.csv", GOLDEN)
        for name in ("gof_table.csv", "gof_summary.csv", "embedding.csv", "adoption.csv"):
            shutil.copy(out / "report" / name, GOLDEN)
        for f in sorted((out / "forecasts").glob("*.csv")):
            shutil.copy(f, GOLDEN / "forecasts")
    print(f"golden files written to {GOLDEN}")


if __name__ == "__main__":
    main_()
