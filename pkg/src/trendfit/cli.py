"""Command-line batch pipeline: ``trendfit {onset,fit,report,forecast}``.

Exit codes: 0 success, 2 partial (unconverged fits or skipped series), 1 error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import datetime as dt
import json
import logging
import os
import re
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, analytics
from .dataset import (
    DataError,
    NoOnsetError,
    PreparedSeries,
    RawSeries,
    apply_aliases,
    load_csv,
    prepare,
)
from .fitting import FAMILIES, FitConfig, FitError, FitResult, fit, select_best
from .forecast import ForecastError, forecast, write_forecast_csv
from .models import Family
from .onset import OnsetConfig, detect_onset

log = logging.getLogger("trendfit")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2
CONFIG_ENV = "TRENDFIT_CONFIG"
MANIFEST = "manifest.json"


class CliError(Exception):
    """Hard failure reported as ``trendfit: error: ...`` with exit code 1."""


# -- small file helpers ------------------------------------------------------------


@contextlib.contextmanager
def atomic_path(path: Path):
    """Yield a temporary sibling of ``path`` that replaces it on success."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path: Path, text: str) -> None:
    with atomic_path(path) as tmp:
        Path(tmp).write_text(text, encoding="utf-8")


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with atomic_path(path) as tmp, open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.-]+", "_", text).strip("_") or "_"


def series_stem(service: str, region: str) -> str:
    return f"{slug(service)}__{slug(region)}"


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def _read_table(path, required: Sequence[str]) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in required if c not in (reader.fieldnames or [])]
            if missing:
                raise CliError(f"{path}: missing required column {missing[0]!r}")
            return list(reader)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from None


def _load_raw(path) -> list[RawSeries]:
    try:
        return load_csv(path)
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from None
    except DataError as exc:
        raise CliError(str(exc)) from None


# -- configuration and manifest ------------------------------------------------------


@dataclass
class RunConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    onset: OnsetConfig = field(default_factory=OnsetConfig)


def load_config(path: Optional[str]) -> tuple[RunConfig, dict]:
    """Parse a JSON config with optional ``fit`` and ``onset`` sections.

    Returns the config and the raw overrides (recorded in the manifest).
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return RunConfig(), {}
    doc = _read_json(path)
    unknown = set(doc) - {"fit", "onset"}
    if unknown:
        raise CliError(f"{path}: unknown config section(s) {sorted(unknown)}")
    try:
        return RunConfig(FitConfig.from_dict(doc.get("fit", {})), OnsetConfig(**doc.get("onset", {}))), doc
    except (TypeError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


@dataclass
class RunManifest:
    input: str
    families: list
    config: dict
    output_dir: str
    launch_dates: Optional[str] = None
    aliases: Optional[str] = None
    seed: int = 0
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = _read_json(path)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise CliError(f"{path}: malformed manifest ({exc})") from None


def _launch_dates(path: Optional[str]) -> dict[str, dt.date]:
    if not path:
        return {}
    out = {}
    for i, row in enumerate(_read_table(path, ("service", "launch_date")), start=2):
        try:
            out[row["service"].strip()] = dt.date.fromisoformat(row["launch_date"].strip())
        except ValueError:
            raise CliError(f"{path}:{i}: invalid launch_date {row['launch_date']!r}") from None
    return out


def _aliases(path: Optional[str]) -> dict[str, str]:
    if not path:
        return {}
    doc = _read_json(path)
    if not isinstance(doc, dict) or not all(isinstance(v, str) for v in doc.values()):
        raise CliError(f"{path}: expected an object mapping variant -> canonical name")
    return doc


@dataclass(frozen=True)
class PreparedRun:
    series: list[PreparedSeries]
    # (service, region, reason)
    skipped: list[tuple[str, str, str]]
    # (service, region) -> (onset_index, onset_date, source)
    onsets: dict


def prepare_all(manifest: RunManifest, cfg: RunConfig) -> PreparedRun:
    raw = apply_aliases(_load_raw(manifest.input), _aliases(manifest.aliases))
    launches = _launch_dates(manifest.launch_dates)
    series, skipped, onsets = [], [], {}
    for r in raw:
        try:
            s = prepare(r, cfg.onset, launches.get(r.service))
        except (NoOnsetError, ValueError) as exc:
            log.warning("skipping %s/%s: %s", r.service, r.region, exc)
            skipped.append((r.service, r.region, str(exc)))
            continue
        if s.offset > 0:
            onsets[r.key] = (s.onset_index, launches[r.service], "launch")
        else:
            onsets[r.key] = (s.onset_index, s.onset_date, "cusum")
        series.append(s)
    return PreparedRun(series, skipped, onsets)


# -- onset -------------------------------------------------------------------------


def cmd_onset(args) -> int:
    cfg, _ = load_config(args.config)
    onset_cfg = cfg.onset
    overrides = {
        k: v
        for k, v in (
            ("drift", args.drift),
            ("threshold", args.threshold),
            ("baseline_window", args.window),
        )
        if v is not None
    }
    if overrides:
        try:
            onset_cfg = OnsetConfig(**{**asdict(onset_cfg), **overrides})
        except ValueError as exc:
            raise CliError(str(exc)) from None
    rows = []
    for r in _load_raw(args.input):
        try:
            rep = detect_onset(r.values, onset_cfg)
        except ValueError as exc:
            raise CliError(f"{args.input}: {r.service}/{r.region}: {exc}") from None
        if rep.triggered:
            rows.append([r.service, r.region, rep.onset_index, r.date_at(rep.onset_index).isoformat(), "true"])
        else:
            rows.append([r.service, r.region, "", "", "false"])
    header = ["service", "region", "onset_index", "onset_date", "triggered"]
    if args.out:
        write_csv(Path(args.out), header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return EXIT_OK


# -- fit ---------------------------------------------------------------------------


def _fit_one(job: tuple[PreparedSeries, tuple[Family, ...], FitConfig]):
    series, families, config = job
    out = []
    for family in families:
        try:
            out.append((family, fit(series, family, config), None))
        except FitError as exc:
            out.append((family, None, str(exc)))
    return out


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves input order, so results match a sequential run
        return list(pool.map(fn, jobs))


def run_fit(manifest: RunManifest, jobs: int = 1) -> int:
    cfg = load_config_from_manifest(manifest)
    out = Path(manifest.output_dir)
    run = prepare_all(manifest, cfg)
    families = tuple(Family.parse(f) for f in manifest.families)

    write_text(out / MANIFEST, manifest.to_json())
    for s in run.series:
        write_text(out / "series" / f"{series_stem(*s.key)}.json", s.to_json() + "\n")

    all_results = _map(_fit_one, [(s, families, cfg.fit) for s in run.series], jobs)
    summary, partial = [], bool(run.skipped)
    for s, results in zip(run.series, all_results):
        fitted = [r for _, r, _ in results if r is not None]
        best = select_best(fitted).family if fitted else None
        for family, res, err in results:
            if res is None:
                log.warning("%s/%s %s: %s", s.service, s.region, family.value, err)
                partial = True
                continue
            partial |= not res.converged
            write_text(out / "fits" / f"{series_stem(*s.key)}__{family.value}.json", res.to_json() + "\n")
            t1, t2 = res.theta
            summary.append([
                s.service, s.region, family.value, repr(t1), repr(t2), repr(res.rss_weighted), res.dof,
                repr(res.p_value), str(res.converged).lower(), str(family is best).lower(),
            ])
    write_csv(
        out / "fit_summary.csv",
        ["service", "region", "family", "theta1", "theta2", "rss", "dof", "p_value", "converged", "best"],
        summary,
    )
    write_csv(
        out / "onsets.csv",
        ["service", "region", "onset_index", "onset_date", "source"],
        [[k[0], k[1], v[0], v[1].isoformat(), v[2]] for k, v in sorted(run.onsets.items())],
    )
    write_csv(out / "skipped.csv", ["service", "region", "reason"], sorted(run.skipped))
    return EXIT_PARTIAL if partial else EXIT_OK


def load_config_from_manifest(manifest: RunManifest) -> RunConfig:
    try:
        return RunConfig(
            FitConfig.from_dict(manifest.config.get("fit", {})), OnsetConfig(**manifest.config.get("onset", {}))
        )
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config in manifest: {exc}") from None


def cmd_fit(args) -> int:
    if args.manifest:
        manifest = RunManifest.load(args.manifest)
        if args.out:
            manifest.output_dir = args.out
    else:
        if not (args.input and args.out):
            raise CliError("fit needs INPUT and --out (or --manifest)")
        _, overrides = load_config(args.config)
        families = [f.value for f in FAMILIES] if args.family == "all" else [Family.parse(args.family).value]
        manifest = RunManifest(
            input=args.input,
            families=families,
            config=overrides,
            output_dir=args.out,
            launch_dates=args.launch_dates,
            aliases=args.aliases,
            seed=args.seed,
        )
    return run_fit(manifest, args.jobs)


# -- report ------------------------------------------------------------------------


def load_fits(fitdir: Path) -> list[FitResult]:
    paths = sorted((fitdir / "fits").glob("*.json"))
    if not paths:
        raise CliError(f"{fitdir}: no fit results found")
    out = []
    for p in paths:
        try:
            out.append(FitResult.from_dict(_read_json(p)))
        except (KeyError, ValueError) as exc:
            raise CliError(f"{p}: malformed fit result ({exc})") from None
    return out


def _read_onsets(path) -> dict[tuple[str, str], dt.date]:
    out = {}
    for i, row in enumerate(_read_table(path, ("service", "region", "onset_date")), start=2):
        if not row["onset_date"]:
            continue
        try:
            out[(row["service"], row["region"])] = dt.date.fromisoformat(row["onset_date"])
        except ValueError:
            raise CliError(f"{path}:{i}: invalid onset_date {row['onset_date']!r}") from None
    return out


# --group-by region groups by the map's continent column (or the raw region without a map)
GROUP_COLUMNS = {"region": "continent", "language": "language"}


def cmd_report(args) -> int:
    fitdir = Path(args.fitdir)
    results = load_fits(fitdir)
    out = Path(args.out) if args.out else fitdir / "report"

    grouping = None
    if args.map:
        try:
            grouping = analytics.read_group_map(args.map, GROUP_COLUMNS[args.group_by])
        except OSError as exc:
            raise CliError(f"{args.map}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise CliError(str(exc)) from None
    elif args.group_by == "language":
        raise CliError("--group-by language needs --map")

    summaries = analytics.group_gof(results, grouping)
    with atomic_path(out / "gof_summary.csv") as tmp:
        analytics.write_group_csv(summaries, tmp)
    with atomic_path(out / "gof_table.csv") as tmp:
        analytics.write_gof_table(summaries, tmp)
    with atomic_path(out / "embedding.csv") as tmp:
        analytics.write_embedding_csv(analytics.embed(results), tmp)

    onsets_path = Path(args.onsets) if args.onsets else fitdir / "onsets.csv"
    if onsets_path.exists() or args.onsets:
        onsets = _read_onsets(onsets_path)
        with atomic_path(out / "adoption.csv") as tmp:
            analytics.write_rankings_csv(analytics.adoption_stats(onsets), tmp)
    return EXIT_OK if all(r.converged for r in results) else EXIT_PARTIAL


# -- forecast ----------------------------------------------------------------------


def cmd_forecast(args) -> int:
    fitdir = Path(args.fitdir)
    results = load_fits(fitdir)
    manifest_path = fitdir / MANIFEST
    if manifest_path.exists():
        manifest = RunManifest.load(manifest_path)
        manifest.input = args.input
    else:
        manifest = RunManifest(args.input, [], {}, str(fitdir))
    run = prepare_all(manifest, load_config_from_manifest(manifest))
    series = {s.key: s for s in run.series}
    out = Path(args.out) if args.out else fitdir / "forecasts"

    by_series: dict[tuple[str, str], list[FitResult]] = {}
    for r in results:
        by_series.setdefault((r.service, r.region), []).append(r)

    partial = bool(run.skipped)
    for key, fits in sorted(by_series.items()):
        s = series.get(key)
        if s is None:
            log.warning("no input series for %s/%s; skipped", *key)
            partial = True
            continue
        if args.best_only:
            fits = [select_best(fits)]
        for r in fits:
            if not (r.converged or args.force):
                log.warning("%s/%s %s did not converge; skipped (use --force)", *key, r.family.value)
                partial = True
                continue
            try:
                fc = forecast(r, s, args.horizon_weeks, force=args.force)
            except ForecastError as exc:
                log.warning("%s", exc)
                partial = True
                continue
            with atomic_path(out / f"{series_stem(*key)}__{r.family.value}.csv") as tmp:
                write_forecast_csv(fc, tmp)
    return EXIT_PARTIAL if partial else EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendfit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("onset", help="detect activity onsets (CUSUM)")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("--window", type=int, help="baseline window length (weeks)")
    p.add_argument("--drift", type=float, help="CUSUM allowance in series units")
    p.add_argument("--threshold", type=float, help="CUSUM decision level in series units")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_onset)

    p = sub.add_parser("fit", help="fit diffusion models to every series")
    p.add_argument("input", nargs="?")
    p.add_argument("--family", default="all", choices=["bass", "sg", "weibull", "all"])
    p.add_argument("--config", help=f"JSON config (default: ${CONFIG_ENV})")
    p.add_argument("--out")
    p.add_argument("--launch-dates", help="CSV with service,launch_date")
    p.add_argument("--aliases", help="JSON object mapping spelling variant -> canonical service")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", help="replay a previous run's manifest.json")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="summary tables for a fit directory")
    p.add_argument("fitdir")
    p.add_argument("--group-by", default="region", choices=["region", "language"])
    p.add_argument("--map", help="CSV with region,continent,language")
    p.add_argument("--onsets", help="onset CSV (default: FITDIR/onsets.csv)")
    p.add_argument("--out", help="output directory (default: FITDIR/report)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("forecast", help="extrapolate fitted curves")
    p.add_argument("fitdir")
    p.add_argument("input")
    p.add_argument("--horizon-weeks", type=int, default=260)
    p.add_argument("--force", action="store_true", help="include unconverged fits")
    p.add_argument("--best-only", action="store_true")
    p.add_argument("--out", help="output directory (default: FITDIR/forecasts)")
    p.set_defaults(func=cmd_forecast)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="trendfit: %(levelname)s: %(message)s",
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    if getattr(args, "horizon_weeks", 0) < 0 or getattr(args, "jobs", 1) < 1:
        print("trendfit: error: --horizon-weeks must be >= 0 and --jobs >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except CliError as exc:
        print(f"trendfit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"trendfit: error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
