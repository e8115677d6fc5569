"""File-artifact pipeline: synth/ingest -> segment -> analyze -> report.

Each stage reads and writes artifacts under one output directory so stages
can be re-run independently:

    tape.csv, ground_truth.json        synth
    activity.json                      ingest
    segmentations.json, patches.csv    segment
    analysis/<stock>/...               analyze
    report.json, report_*.csv, plots/  report

Every stage is deterministic given the run config and seed; derived seeds
feed the generator ([seed, 0] and [seed, 1, firm]), the Monte Carlo
significance null ([seed, 2]) and the bootstrap ([seed, 3]).
"""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import allometry, lognormal, patches, segmentation, tails
from .errors import DataError, NumericalError
from .synth import GroundTruth, SynthConfig, generate
from .trades import SignedSeries, TradeTable, filter_active_firms
from .patches import DirectionalPatch, NON_DIRECTIONAL, Patch

REPORT_SCHEMA_VERSION = 1
FAILURE_MARKER = "FAILED.json"

PATCH_CSV_HEADER = (
    "firm_id",
    "stock_id",
    "start",
    "end",
    "direction",
    "T",
    "N_m",
    "V_m",
    "V_b",
    "V_s",
)

_PAIR_AXES = {
    "g1": ("log_V_m", "log_N_m"),
    "g2": ("log_V_m", "log_T"),
    "g3": ("log_T", "log_N_m"),
}


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Everything one pipeline run depends on.

    The input comes from tape (a trade-CSV path) or synth (a generator
    config), never both; stages that only read artifacts from output_dir can
    run with neither.  All estimator knobs mirror the CLI flags.
    """

    output_dir: str
    tape: str | None = None
    synth: SynthConfig | None = None
    seed: int = 2001
    threshold: float = segmentation.DEFAULT_THRESHOLD
    significance_mode: str = "closed-form"
    mc_trials: int = segmentation.DEFAULT_MC_TRIALS
    theta: float = patches.DEFAULT_THETA
    min_patch_trades: int = patches.DEFAULT_MIN_TRADES
    k_policy: str = "auto"
    bootstrap_samples: int = allometry.DEFAULT_BOOTSTRAP_SAMPLES
    min_firm_patches: int = allometry.DEFAULT_MIN_FIRM_PATCHES
    min_trades_per_year: int = 1000
    min_active_days: int = 200
    activity_mode: str = "strict"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.tape is not None and self.synth is not None:
            raise ValueError("tape and synth are mutually exclusive inputs")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.significance_mode not in ("closed-form", "monte-carlo"):
            raise ValueError(
                f"significance-mode must be closed-form or monte-carlo, got {self.significance_mode!r}"
            )
        if self.mc_trials < 100:
            raise ValueError(f"mc-trials must be >= 100, got {self.mc_trials}")
        if not 0.5 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0.5, 1], got {self.theta}")
        if self.min_patch_trades < 1:
            raise ValueError(f"min-patch-trades must be >= 1, got {self.min_patch_trades}")
        parse_k_policy(self.k_policy)
        if self.bootstrap_samples < 200:
            raise ValueError(f"bootstrap-samples must be >= 200, got {self.bootstrap_samples}")
        if self.min_firm_patches < 8:
            raise ValueError(f"min-firm-patches must be >= 8, got {self.min_firm_patches}")
        if self.min_trades_per_year < 0 or self.min_active_days < 0:
            raise ValueError("activity thresholds must be >= 0")
        if self.activity_mode not in ("strict", "prorated"):
            raise ValueError(f"activity mode must be strict or prorated, got {self.activity_mode!r}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")
        if self.tape is not None and not Path(self.tape).is_file():
            raise ValueError(f"tape path not found: {self.tape}")

    def out(self) -> Path:
        return Path(self.output_dir)


def parse_k_policy(text: str) -> tuple[str, float | int | None]:
    """Parse a tail-cutoff policy: auto, fraction:<f>, or fixed:<k>."""
    if text == "auto":
        return ("auto", None)
    if match := re.fullmatch(r"fraction:([0-9.eE+-]+)", text):
        fraction = float(match.group(1))
        if not 0.0 < fraction < 1.0:
            raise ValueError(f"k fraction must be in (0, 1), got {fraction}")
        return ("fraction", fraction)
    if match := re.fullmatch(r"fixed:(\d+)", text):
        k = int(match.group(1))
        if k < 1:
            raise ValueError(f"fixed k must be >= 1, got {k}")
        return ("fixed", k)
    raise ValueError(f"k policy must be auto, fraction:<f>, or fixed:<k>, got {text!r}")


def config_from_dict(payload: dict) -> RunConfig:
    """Build a RunConfig from a plain JSON-style dict."""
    data = dict(payload)
    synth_payload = data.pop("synth", None)
    synth_config = None
    if isinstance(synth_payload, SynthConfig):
        synth_config = synth_payload
    elif synth_payload is not None:
        if not isinstance(synth_payload, dict):
            raise ValueError("synth must be an object of generator settings")
        synth_config = SynthConfig(**synth_payload)
    known = {f.name for f in RunConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(synth=synth_config, **data)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_json(path: Path):
    if not path.is_file():
        raise DataError(f"missing artifact {path}; run the producing stage first")
    return json.loads(path.read_text(encoding="utf-8"))


def _write_csv(path: Path, header: tuple[str, ...], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _safe_name(name: str, taken: set[str]) -> str:
    base = re.sub(r"[^A-Za-z0-9._-]", "_", name) or "_"
    candidate = base
    suffix = 2
    while candidate in taken:
        candidate = f"{base}__{suffix}"
        suffix += 1
    taken.add(candidate)
    return candidate


def stock_dir_names(stock_ids: list[str]) -> dict[str, str]:
    """Deterministic filesystem-safe directory name per stock id."""
    taken: set[str] = set()
    return {stock_id: _safe_name(stock_id, taken) for stock_id in sorted(stock_ids)}


def _tape_path(config: RunConfig) -> Path:
    if config.tape is not None:
        return Path(config.tape)
    return config.out() / "tape.csv"


def run_synth(config: RunConfig) -> tuple[TradeTable, GroundTruth]:
    """Generate the synthetic tape and ground truth artifacts."""
    if config.synth is None:
        raise DataError("run config has no generator settings; provide a tape instead")
    synth_config = replace(config.synth, seed=config.seed)
    table, truth = generate(synth_config)
    out = config.out()
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "tape.csv")
    _write_json(out / "ground_truth.json", truth.to_json_dict())
    return table, truth


def _load_table(config: RunConfig) -> TradeTable:
    path = _tape_path(config)
    if not path.is_file():
        raise DataError(f"missing artifact {path}; run the synth stage or provide a tape")
    return TradeTable.from_csv(path)


def run_ingest(config: RunConfig, table: TradeTable | None = None) -> tuple[TradeTable, set[str]]:
    """Validate the tape, compute per-firm activity, select qualifying firms."""
    if table is None:
        table = _load_table(config)
    qualified = filter_active_firms(
        table,
        min_trades_per_year=config.min_trades_per_year,
        min_active_days=config.min_active_days,
        mode=config.activity_mode,
    )
    activity = table.activity()
    payload = {
        "filters": {
            "min_trades_per_year": config.min_trades_per_year,
            "min_active_days": config.min_active_days,
            "mode": config.activity_mode,
        },
        "n_trades": len(table),
        "n_firms": len(table.firms),
        "n_stocks": len(table.stocks),
        "span": list(table.span()) if len(table) else None,
        "qualified_firms": sorted(qualified),
        "firms": {
            firm_id: {
                "trades_per_year": {str(y): c for y, c in sorted(a.trades_per_year.items())},
                "active_days_per_year": {
                    str(y): c for y, c in sorted(a.active_days_per_year.items())
                },
            }
            for firm_id, a in sorted(activity.items())
        },
    }
    _write_json(config.out() / "activity.json", payload)
    return table, qualified


def _segment_one(
    series: SignedSeries, config: RunConfig, policy: segmentation.SignificancePolicy
) -> tuple[dict, list[tuple[Patch, str, int]]]:
    seg = segmentation.segment(series, config.threshold, policy=policy)
    rows = []
    for patch in patches.cut_patches(series, seg):
        direction = patches.classify(patch, config.theta)
        rows.append((patch, direction, patch.t_last - patch.t_first))
    export = {
        "firm_id": series.firm_id,
        "stock_id": series.stock_id,
        "threshold": config.threshold,
        "boundaries": list(seg.boundaries),
    }
    return export, rows


def run_segment(config: RunConfig, table: TradeTable | None = None) -> Path:
    """Segment every qualifying series and export segmentations plus patches.

    The patch CSV holds every cut segment; non-directional rows leave N_m
    and V_m empty because no side dominates.
    """
    activity = _read_json(config.out() / "activity.json")
    if table is None:
        table = _load_table(config)
    qualified = set(activity["qualified_firms"])
    policy = segmentation.SignificancePolicy(
        mode=config.significance_mode,
        mc_trials=config.mc_trials,
        seed=int(np.random.SeedSequence([config.seed, 2]).generate_state(1)[0]),
    )
    series_list = list(table.iter_series(qualified if len(qualified) < len(table.firms) else None))

    def work(series: SignedSeries):
        return _segment_one(series, config, policy)

    if config.jobs > 1 and len(series_list) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(work, series_list))
    else:
        results = [work(series) for series in series_list]

    exports = [export for export, _ in results]
    _write_json(
        config.out() / "segmentations.json",
        {
            "threshold": config.threshold,
            "significance_mode": config.significance_mode,
            "mc_trials": config.mc_trials,
            "series": exports,
        },
    )
    csv_rows = []
    for _, rows in results:
        for patch, direction, duration in rows:
            directional = direction != NON_DIRECTIONAL
            if directional:
                dp = patches.as_directional(patch, direction)
                n_m: int | str = dp.N_m
                v_m: float | str = repr(dp.V_m)
            else:
                n_m = ""
                v_m = ""
            csv_rows.append(
                (
                    patch.firm_id,
                    patch.stock_id,
                    patch.start,
                    patch.end,
                    direction,
                    duration,
                    n_m,
                    v_m,
                    repr(patch.V_b),
                    repr(patch.V_s),
                )
            )
    path = config.out() / "patches.csv"
    _write_csv(path, PATCH_CSV_HEADER, csv_rows)
    return path


@dataclass(frozen=True, slots=True)
class PatchRow:
    """One patches.csv row, as typed fields."""

    firm_id: str
    stock_id: str
    start: int
    end: int
    direction: str
    T: int
    N_m: int | None
    V_m: float | None
    V_b: float
    V_s: float

    def trades(self) -> int:
        return self.end - self.start


def read_patch_rows(path: Path) -> list[PatchRow]:
    if not path.is_file():
        raise DataError(f"missing artifact {path}; run the segment stage first")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != PATCH_CSV_HEADER:
            raise DataError(f"{path}: bad patch CSV header {header!r}")
        for line_no, fields in enumerate(reader, start=2):
            if len(fields) != len(PATCH_CSV_HEADER):
                raise DataError(f"{path}: line {line_no}: expected {len(PATCH_CSV_HEADER)} fields")
            try:
                rows.append(
                    PatchRow(
                        firm_id=fields[0],
                        stock_id=fields[1],
                        start=int(fields[2]),
                        end=int(fields[3]),
                        direction=fields[4],
                        T=int(fields[5]),
                        N_m=int(fields[6]) if fields[6] else None,
                        V_m=float(fields[7]) if fields[7] else None,
                        V_b=float(fields[8]),
                        V_s=float(fields[9]),
                    )
                )
            except ValueError:
                raise DataError(f"{path}: line {line_no}: malformed patch row") from None
    return rows


def _as_directional_patch(row: PatchRow) -> DirectionalPatch:
    # Absolute times are not part of the patch export; T alone matters downstream.
    assert row.N_m is not None and row.V_m is not None
    total = row.trades()
    n_buy = row.N_m if row.direction == patches.DIRECTION_BUY else total - row.N_m
    base = Patch(
        firm_id=row.firm_id,
        stock_id=row.stock_id,
        start=row.start,
        end=row.end,
        V_b=row.V_b,
        V_s=row.V_s,
        V=row.V_b + row.V_s,
        n_buy=n_buy,
        n_sell=total - n_buy,
        t_first=0,
        t_last=row.T,
    )
    return DirectionalPatch(patch=base, direction=row.direction, T=row.T, N_m=row.N_m, V_m=row.V_m)


def _select_directional(rows: list[PatchRow], config: RunConfig) -> list[DirectionalPatch]:
    return [
        _as_directional_patch(row)
        for row in rows
        if row.trades() >= config.min_patch_trades and row.direction != NON_DIRECTIONAL
    ]


def _tail_section(values: np.ndarray, variable: str, config: RunConfig) -> dict:
    kind, parameter = parse_k_policy(config.k_policy)
    positive = values[values > 0]
    used = config.k_policy
    try:
        if kind == "fixed":
            k = int(parameter)  # type: ignore[arg-type]
        elif kind == "fraction":
            k = tails.choose_k(positive, strategy="fraction", fraction=float(parameter))  # type: ignore[arg-type]
        else:
            try:
                k = tails.choose_k(positive)
            except NumericalError:
                # Too few points for the KS scan; fall back to the 10% rule.
                k = tails.choose_k(positive, strategy="fraction", fraction=0.1)
                used = "fraction:0.1"
        fit = tails.hill(positive, k, variable=variable)
    except NumericalError as exc:
        return {"status": "insufficient data", "reason": str(exc), "n": int(len(positive))}
    return {
        "variable": fit.variable,
        "zeta": fit.zeta,
        "ci95": list(fit.ci95),
        "k": fit.k,
        "x_k": fit.x_k,
        "n": fit.n,
        "convention": tails.TAIL_CONVENTION,
        "k_policy": used,
    }


def _allometric_payload(fit: allometry.AllometricFit) -> dict:
    return {
        "mode": fit.mode,
        "g1": fit.g1,
        "g2": fit.g2,
        "g3": fit.g3,
        "ci95s": {name: list(ci) for name, ci in fit.ci95s.items()},
        "explained_variance": fit.explained_variance,
        "n_points": fit.n_points,
        "B": fit.B,
        "seed": fit.seed,
    }


def _lognormality_sections(
    directional: list[DirectionalPatch], config: RunConfig
) -> tuple[dict, dict, list[lognormal.LognormalityResult]]:
    per_firm: dict = {}
    pooled: dict = {}
    results: list[lognormal.LognormalityResult] = []
    for variable in lognormal.VARIABLES:
        try:
            summary = lognormal.per_firm_lognormality(
                directional, variable, config.min_firm_patches
            )
            per_firm[variable] = {
                "percent": summary.percent,
                "passed": summary.passed,
                "tested": summary.tested,
            }
            results.extend(summary.results)
        except NumericalError as exc:
            per_firm[variable] = {"status": "insufficient data", "reason": str(exc)}
        try:
            stat, reject = lognormal.pooled_lognormality(directional, variable)
            pooled[variable] = {"jb_stat": stat, "reject": reject}
        except NumericalError as exc:
            pooled[variable] = {"status": "insufficient data", "reason": str(exc)}
    return per_firm, pooled, results


def _dispersion(values: list[float]) -> dict:
    if not values:
        return {"n": 0}
    array = np.asarray(values)
    return {
        "n": int(len(array)),
        "mean": float(array.mean()),
        "sd": float(array.std(ddof=1)) if len(array) > 1 else 0.0,
        "median": float(np.median(array)),
    }


def analyze_stock(rows: list[PatchRow], config: RunConfig, bootstrap_seed: int) -> dict:
    """All per-stock statistics from that stock's patch rows."""
    total = len(rows)
    big_enough = [row for row in rows if row.trades() >= config.min_patch_trades]
    below_min = total - len(big_enough)
    non_directional = sum(1 for row in big_enough if row.direction == NON_DIRECTIONAL)
    directional = _select_directional(rows, config)
    counts = {
        "patches_total": total,
        "patches_below_min_trades": below_min,
        "patches_non_directional": non_directional,
        "patches_directional": len(directional),
        "non_directional_share": (
            non_directional / len(big_enough) if big_enough else None
        ),
    }

    values = patches.variables(directional)
    tail_fits = {
        variable: _tail_section(values[variable], variable, config)
        for variable in lognormal.VARIABLES
    }

    points, skipped_log = allometry.log_points(directional)
    counts["patches_zero_duration"] = skipped_log
    allo: dict = {}
    try:
        tri = allometry.trivariate_fit(points, config.bootstrap_samples, bootstrap_seed)
        allo["trivariate"] = _allometric_payload(tri)
    except (NumericalError, ValueError) as exc:
        allo["trivariate"] = {"status": "insufficient data", "reason": str(exc)}
    try:
        bi = allometry.bivariate_fit(points, config.bootstrap_samples, bootstrap_seed)
        allo["bivariate"] = _allometric_payload(bi)
    except (NumericalError, ValueError) as exc:
        allo["bivariate"] = {"status": "insufficient data", "reason": str(exc)}

    per_firm, pooled, jb_rows = _lognormality_sections(directional, config)

    try:
        firm_fits = allometry.per_firm_exponents(directional, config.min_firm_patches)
    except ValueError:
        firm_fits = {}
    exponents = {
        "n_firms": len(firm_fits),
        "g1": _dispersion([f.g1 for f in firm_fits.values()]),
        "g2": _dispersion([f.g2 for f in firm_fits.values()]),
        "g3": _dispersion([f.g3 for f in firm_fits.values()]),
    }

    return {
        "counts": counts,
        "tails": tail_fits,
        "allometry": allo,
        "lognormality": {"per_firm": per_firm, "pooled": pooled},
        "per_firm_exponents": exponents,
        "_jb_rows": jb_rows,
        "_firm_fits": firm_fits,
    }


def run_analyze(config: RunConfig) -> dict[str, dict]:
    """Per-stock scaling statistics written under analysis/<stock>/."""
    rows = read_patch_rows(config.out() / "patches.csv")
    by_stock: dict[str, list[PatchRow]] = {}
    for row in rows:
        by_stock.setdefault(row.stock_id, []).append(row)
    bootstrap_seed = int(np.random.SeedSequence([config.seed, 3]).generate_state(1)[0])
    names = stock_dir_names(list(by_stock))
    analysis: dict[str, dict] = {}
    for stock_id in sorted(by_stock):
        result = analyze_stock(by_stock[stock_id], config, bootstrap_seed)
        stock_out = config.out() / "analysis" / names[stock_id]
        stock_out.mkdir(parents=True, exist_ok=True)
        _write_json(stock_out / "tails.json", result["tails"])
        _write_json(stock_out / "allometry.json", result["allometry"])
        _write_json(
            stock_out / "lognormality.json",
            {
                "per_firm": result["lognormality"]["per_firm"],
                "pooled": result["lognormality"]["pooled"],
            },
        )
        _write_csv(
            stock_out / "lognormality.csv",
            ("firm_id", "variable", "n", "jb_stat", "critical_value", "reject"),
            (
                (r.firm_id, r.variable, r.n, repr(r.jb_stat), repr(r.critical_value), r.reject)
                for r in sorted(result["_jb_rows"], key=lambda r: (r.firm_id, r.variable))
            ),
        )
        _write_csv(
            stock_out / "per_firm_exponents.csv",
            ("firm_id", "n_patches", "g1", "g2", "g3"),
            (
                (f.firm_id, f.n_patches, repr(f.g1), repr(f.g2), repr(f.g3))
                for f in result["_firm_fits"].values()
            ),
        )
        summary = {key: value for key, value in result.items() if not key.startswith("_")}
        _write_json(stock_out / "summary.json", summary)
        analysis[stock_id] = summary
    _write_json(config.out() / "analysis" / "stocks.json", names)
    return analysis


def _log_pair_points(directional: list[DirectionalPatch]) -> dict[str, np.ndarray]:
    points, _ = allometry.log_points(directional)
    pts = allometry.points_array(points) if points else np.empty((0, 3))
    return {
        "g1": pts[:, (2, 1)],
        "g2": pts[:, (2, 0)],
        "g3": pts[:, (0, 1)],
    }


def _axis_rows(pair_pts: np.ndarray, slope: float) -> list[tuple[str, str]]:
    centroid = pair_pts.mean(axis=0)
    lo = float(pair_pts[:, 0].min())
    hi = float(pair_pts[:, 0].max())
    cx, cy = float(centroid[0]), float(centroid[1])
    return [
        (repr(lo), repr(cy + slope * (lo - cx))),
        (repr(cx), repr(cy)),
        (repr(hi), repr(cy + slope * (hi - cx))),
    ]


def emit_plot_data(config: RunConfig) -> list[Path]:
    """CCDF, log-log scatter with fitted axis, and exponent histogram CSVs."""
    rows = read_patch_rows(config.out() / "patches.csv")
    by_stock: dict[str, list[PatchRow]] = {}
    for row in rows:
        by_stock.setdefault(row.stock_id, []).append(row)
    names = stock_dir_names(list(by_stock))
    written: list[Path] = []
    for stock_id in sorted(by_stock):
        stock_out = config.out() / "plots" / names[stock_id]
        directional = _select_directional(by_stock[stock_id], config)
        values = patches.variables(directional)
        for variable in lognormal.VARIABLES:
            positive = values[variable][values[variable] > 0]
            pairs = tails.ccdf(positive) if len(positive) else []
            path = stock_out / f"ccdf_{variable}.csv"
            _write_csv(path, ("x", "p"), ((repr(x), repr(p)) for x, p in pairs))
            written.append(path)

        allo_path = config.out() / "analysis" / names[stock_id] / "allometry.json"
        allo = _read_json(allo_path)
        slopes = allo.get("bivariate", {})
        pair_points = _log_pair_points(directional)
        for name, (x_label, y_label) in _PAIR_AXES.items():
            pair_pts = pair_points[name]
            scatter = stock_out / f"scatter_{name}_{y_label[4:]}_vs_{x_label[4:]}.csv"
            _write_csv(
                scatter,
                ("log_x", "log_y"),
                ((repr(float(x)), repr(float(y))) for x, y in pair_pts),
            )
            written.append(scatter)
            axis_path = stock_out / f"axis_{name}_{y_label[4:]}_vs_{x_label[4:]}.csv"
            if len(pair_pts) and isinstance(slopes.get(name), (int, float)):
                axis_rows = _axis_rows(pair_pts, float(slopes[name]))
            else:
                axis_rows = []
            _write_csv(axis_path, ("log_x", "log_y"), axis_rows)
            written.append(axis_path)

        exponents_path = config.out() / "analysis" / names[stock_id] / "per_firm_exponents.csv"
        if not exponents_path.is_file():
            raise DataError(f"missing artifact {exponents_path}; run the analyze stage first")
        firm_values: dict[str, list[float]] = {"g1": [], "g2": [], "g3": []}
        with open(exponents_path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            for record in reader:
                for name in firm_values:
                    firm_values[name].append(float(record[name]))
        for name, vals in firm_values.items():
            path = stock_out / f"hist_{name}.csv"
            if vals:
                counts, edges = np.histogram(vals, bins=20)
                hist_rows = [
                    (repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i]))
                    for i in range(len(counts))
                ]
            else:
                hist_rows = []
            _write_csv(path, ("bin_lo", "bin_hi", "count"), hist_rows)
            written.append(path)
    return written


def _report_tables(config: RunConfig, report: dict) -> None:
    tails_rows = []
    allo_rows = []
    logn_rows = []
    count_rows = []
    for stock_id, section in sorted(report["stocks"].items()):
        for variable in lognormal.VARIABLES:
            fit = section["tails"][variable]
            if "zeta" in fit:
                tails_rows.append(
                    (
                        stock_id,
                        variable,
                        repr(fit["zeta"]),
                        repr(fit["ci95"][0]),
                        repr(fit["ci95"][1]),
                        fit["k"],
                        repr(fit["x_k"]),
                        fit["n"],
                    )
                )
            else:
                tails_rows.append((stock_id, variable, "", "", "", "", "", fit.get("n", 0)))
        for mode in ("trivariate", "bivariate"):
            fit = section["allometry"][mode]
            if "g1" in fit:
                for name in ("g1", "g2", "g3"):
                    ci = fit["ci95s"][name]
                    allo_rows.append(
                        (stock_id, mode, name, repr(fit[name]), repr(ci[0]), repr(ci[1]), fit["n_points"])
                    )
        for variable in lognormal.VARIABLES:
            per_firm = section["lognormality"]["per_firm"][variable]
            pooled = section["lognormality"]["pooled"][variable]
            logn_rows.append(
                (
                    stock_id,
                    variable,
                    repr(per_firm["percent"]) if "percent" in per_firm else "",
                    per_firm.get("passed", ""),
                    per_firm.get("tested", ""),
                    repr(pooled["jb_stat"]) if "jb_stat" in pooled else "",
                    pooled.get("reject", ""),
                )
            )
        counts = section["counts"]
        count_rows.append(
            (
                stock_id,
                counts["series"],
                counts["patches_total"],
                counts["patches_below_min_trades"],
                counts["patches_non_directional"],
                counts["patches_directional"],
                counts["patches_zero_duration"],
            )
        )
    out = config.out()
    _write_csv(
        out / "report_tails.csv",
        ("stock_id", "variable", "zeta", "ci_lo", "ci_hi", "k", "x_k", "n"),
        tails_rows,
    )
    _write_csv(
        out / "report_allometry.csv",
        ("stock_id", "mode", "exponent", "value", "ci_lo", "ci_hi", "n_points"),
        allo_rows,
    )
    _write_csv(
        out / "report_lognormality.csv",
        ("stock_id", "variable", "percent", "passed", "tested", "pooled_jb", "pooled_reject"),
        logn_rows,
    )
    _write_csv(
        out / "report_counts.csv",
        (
            "stock_id",
            "series",
            "patches_total",
            "below_min_trades",
            "non_directional",
            "directional",
            "zero_duration",
        ),
        count_rows,
    )


def run_report(config: RunConfig) -> dict:
    """Compose report.json, its CSV tables, and the plot-data files."""
    out = config.out()
    segmentations = _read_json(out / "segmentations.json")
    series_per_stock: dict[str, int] = {}
    for entry in segmentations["series"]:
        series_per_stock[entry["stock_id"]] = series_per_stock.get(entry["stock_id"], 0) + 1

    names = _read_json(out / "analysis" / "stocks.json")
    stocks: dict[str, dict] = {}
    for stock_id in sorted(names):
        summary = _read_json(out / "analysis" / names[stock_id] / "summary.json")
        summary["counts"]["series"] = series_per_stock.get(stock_id, 0)
        stocks[stock_id] = summary

    config_echo = {
        "seed": config.seed,
        "threshold": config.threshold,
        "significance_mode": config.significance_mode,
        "mc_trials": config.mc_trials,
        "theta": config.theta,
        "min_patch_trades": config.min_patch_trades,
        "k_policy": config.k_policy,
        "bootstrap_samples": config.bootstrap_samples,
        "min_firm_patches": config.min_firm_patches,
        "min_trades_per_year": config.min_trades_per_year,
        "min_active_days": config.min_active_days,
        "source": "synth" if config.synth is not None else ("tape" if config.tape else "artifacts"),
    }
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": config_echo,
        "stocks": stocks,
        "totals": {
            "stocks": len(stocks),
            "series": sum(series_per_stock.values()),
            "patches_directional": sum(
                s["counts"]["patches_directional"] for s in stocks.values()
            ),
            "patches_total": sum(s["counts"]["patches_total"] for s in stocks.values()),
        },
    }
    _write_json(out / "report.json", report)
    _report_tables(config, report)
    emit_plot_data(config)
    return report


_STAGES = ("synth", "ingest", "segment", "analyze", "report")


def run_pipeline(config: RunConfig) -> dict:
    """Run every stage in order; on failure leave a marker naming the stage."""
    out = config.out()
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    table: TradeTable | None = None
    stage = "setup"
    try:
        if config.synth is not None:
            stage = "synth"
            table, _ = run_synth(config)
        stage = "ingest"
        table, _ = run_ingest(config, table)
        stage = "segment"
        run_segment(config, table)
        stage = "analyze"
        run_analyze(config)
        stage = "report"
        report = run_report(config)
    except Exception as exc:
        _write_json(marker, {"stage": stage, "error": f"{type(exc).__name__}: {exc}"})
        raise
    if marker.exists():
        marker.unlink()
    return report
