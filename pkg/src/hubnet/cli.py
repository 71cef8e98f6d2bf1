"""Command-line front end.

Every flag can also be set in a ``--config`` file of ``key = value`` lines or
through a ``HUBNET_<KEY>`` environment variable. Precedence, lowest first:
built-in defaults, config file, environment, command-line flags. The
effective settings are echoed as ``config.json`` into each output directory;
wall-clock timestamps go only to ``run.log``.

Exit status: 0 on success, 1 on a data or contract error (one ``code:
message`` line on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import analysis
from .errors import HubnetError
from .estimator import (
    AUTO,
    ModelFamily,
    ModelFit,
    fit_model1,
    fit_model2,
    residuals,
)
from .moments import Mode, build_m_matrix
from .montecarlo import Scenario, run as run_replications, write_summary
from .series import (
    MatrixSeries,
    YearMonth,
    export_long_csv,
    export_matrix_csvs,
    ingest_long_csv,
    mirror_impute,
    month_range,
    read_partial_long_csv,
    three_month_average,
)
from .simgen import GroundTruth, make_truth, simulate, subspace_distance
from .spectral import LoadingMatrix, eigen_ratios, r_max_rule, ratio_rank, scree_rank, sym_eigen

logger = logging.getLogger("hubnet")

ENV_PREFIX = "HUBNET_"


class ConfigError(HubnetError):
    code = "CONFIG"


# ---------------------------------------------------------------------------
# parameters


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _rank(text):
    if text is None:
        return None
    t = str(text).strip().lower()
    if t == AUTO:
        return AUTO
    v = int(t)
    if v < 1:
        raise ValueError("rank must be positive")
    return v


def _list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return list(text)
    return [s.strip() for s in str(text).split(",") if s.strip()]


def _opt_str(text):
    return None if text in (None, "") else str(text)


def _choice(*options):
    def conv(text):
        t = str(text).strip().lower()
        if t not in options:
            raise ValueError(f"{text!r} not in {options}")
        return t

    return conv


@dataclass(frozen=True)
class Param:
    default: Any
    convert: Callable
    help: str
    flag_bool: bool = False


PARAMS: dict[str, Param] = {
    "input": Param(None, _opt_str, "input long CSV (or rolling output directory)"),
    "imports": Param(None, _opt_str, "importer-reported long CSV for mirror imputation"),
    "out": Param(None, _opt_str, "output directory (replaced atomically)"),
    "rolling": Param(None, _opt_str, "output directory of a previous `rolling` run"),
    "format": Param("long", _choice("long", "matrices", "both"), "series export format"),
    "strict": Param(True, _bool, "missing off-diagonal cells are an error", True),
    "average3": Param(False, _bool, "apply the centered three-month average first", True),
    "diag_defined": Param(False, _bool, "treat diagonal cells as observed", True),
    "allow_negative": Param(False, _bool, "accept negative flows (simulated data)", True),
    "model": Param("sym", _choice("sym", "two"), "sym: shared loading; two: export/import loadings"),
    "r": Param(AUTO, _rank, "rank (Model 1 or both sides of Model 2) or 'auto'"),
    "r1": Param(None, _rank, "export-side rank for Model 2 (defaults to --r)"),
    "r2": Param(None, _rank, "import-side rank for Model 2 (defaults to --r)"),
    "h0": Param(1, int, "maximum lag of the moment accumulator"),
    "rmax_rule": Param("half", _choice("half", "third"), "r_max = ceil(n/2) or ceil(n/3)"),
    "threshold": Param(0.85, float, "scree cumulative-share threshold"),
    "center": Param(False, _bool, "demean each cell before accumulating moments", True),
    "anchors": Param([], _list, "comma-separated anchor entities, one per hub position"),
    "matcher": Param("greedy", _choice("greedy", "exhaustive"), "hub matching between windows"),
    "truth": Param(None, _opt_str, "truth JSON from `simulate` to score recovery"),
    "dump_m": Param(False, _bool, "write the moment accumulator(s) as CSV", True),
    "dump_residuals": Param(False, _bool, "write residuals as a long CSV", True),
    "window": Param(60, int, "rolling window length in months"),
    "step": Param(12, int, "rolling step in months"),
    "k": Param(4, int, "number of clusters"),
    "side": Param(None, _opt_str, "loading side: shared, export, import or joint"),
    "cluster_mode": Param("concat", _choice("concat", "per-window"), "feature rows for clustering"),
    "label": Param(None, _opt_str, "window label (per-window clustering / single network)"),
    "squared": Param(True, _bool, "run the ward recurrence on squared distances", True),
    "truncation": Param("rounded", _choice("rounded", "original"), "values kept by the 10A rule"),
    "n": Param(20, int, "number of entities"),
    "T": Param(200, int, "number of months"),
    "phi": Param(0.7, float, "AR(1) coefficient of the factors"),
    "sigma_f": Param(1.0, float, "factor innovation scale"),
    "sigma_e": Param(1.0, float, "noise scale"),
    "noise": Param("iid", _choice("iid", "correlated"), "noise structure"),
    "planted": Param(False, _bool, "near-block planted-hub loadings", True),
    "mask_diagonal": Param(True, _bool, "mark simulated diagonals undefined", True),
    "start": Param("1982-01", str, "first simulated month (YYYY-MM)"),
    "reps": Param(0, int, "Monte-Carlo replications (seeds seed..seed+reps-1)"),
    "seed": Param(0, int, "seed for all randomness"),
    "workers": Param(os.cpu_count() or 1, int, "maximum parallel workers"),
    "deterministic": Param(False, _bool, "sequential workers and fixed summation order", True),
}

COMMANDS: dict[str, tuple[str, tuple[str, ...]]] = {
    "ingest": (
        "read a long CSV (optionally mirror-imputed and averaged) and re-export it",
        ("input", "imports", "out", "format", "strict", "average3", "diag_defined", "allow_negative"),
    ),
    "estimate": (
        "fit one model to a whole series",
        (
            "input", "out", "model", "r", "r1", "r2", "h0", "rmax_rule", "threshold", "center",
            "anchors", "truth", "dump_m", "dump_residuals", "strict", "average3", "diag_defined",
            "allow_negative", "deterministic",
        ),
    ),
    "rank": (
        "print rank estimates and the eigenvalue table",
        (
            "input", "model", "h0", "rmax_rule", "threshold", "center", "strict", "average3",
            "diag_defined", "allow_negative", "deterministic",
        ),
    ),
    "rolling": (
        "fit every rolling window and align hubs across windows",
        (
            "input", "out", "model", "r", "r1", "r2", "h0", "rmax_rule", "threshold", "center",
            "anchors", "matcher", "window", "step", "k", "truncation", "strict", "average3",
            "diag_defined", "allow_negative", "workers", "deterministic",
        ),
    ),
    "simulate": (
        "draw a synthetic series with known loadings",
        (
            "out", "model", "n", "r", "r1", "r2", "T", "phi", "sigma_f", "sigma_e", "noise",
            "planted", "mask_diagonal", "start", "h0", "reps", "seed", "workers", "deterministic",
        ),
    ),
    "cluster": (
        "ward clustering of entities from a rolling run",
        ("rolling", "out", "k", "side", "cluster_mode", "label", "squared"),
    ),
    "export-network": (
        "hub-network node/edge tables from a rolling run",
        ("rolling", "out", "label", "truncation"),
    ),
}

REQUIRED = {
    "ingest": ("input", "out"),
    "estimate": ("input", "out"),
    "rank": ("input",),
    "rolling": ("input", "out"),
    "simulate": ("out",),
    "cluster": ("rolling", "out"),
    "export-network": ("rolling", "out"),
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hubnet", description="Latent hub networks from flow-matrix series.")
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--log-level", default="WARNING", help="console log level")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (desc, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=desc, description=desc)
        for key in keys:
            spec = PARAMS[key]
            text = f"{spec.help} (default: {spec.default})"
            if spec.flag_bool:
                p.add_argument(
                    _flag(key), dest=key, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS, help=text
                )
            else:
                p.add_argument(_flag(key), dest=key, default=argparse.SUPPRESS, help=text)
    return parser


def read_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in PARAMS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(command: str, flags: dict, config_path=None, environ=None) -> dict:
    """Merge defaults < config file < environment < flags for ``command``."""
    environ = os.environ if environ is None else environ
    keys = COMMANDS[command][1]
    layers = []
    if config_path:
        layers.append(("config", read_config_file(config_path)))
    env = {}
    for key in keys:
        val = environ.get(ENV_PREFIX + key.upper())
        if val is not None:
            env[key] = val
    layers.append(("environment", env))
    layers.append(("flag", flags))
    cfg = {key: PARAMS[key].default for key in keys}
    for source, layer in layers:
        for key, value in layer.items():
            if key not in keys:
                continue
            try:
                cfg[key] = PARAMS[key].convert(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{source} value for {key}: {exc}") from None
    for key in REQUIRED[command]:
        if cfg.get(key) is None:
            raise ConfigError(f"{command} needs {_flag(key)}")
    if cfg.get("deterministic") and "workers" in cfg:
        cfg["workers"] = 1
    if "workers" in cfg and cfg["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    cfg = {k: v for k, v in cfg.items() if k in keys}
    cfg["command"] = command
    return cfg


# ---------------------------------------------------------------------------
# output helpers


@contextlib.contextmanager
def staged_output(out):
    """Build a directory under a temporary name and move it into place on success."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.parent / f".{out.name}.partial-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    handler = logging.FileHandler(tmp / "run.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.INFO)
    root = logging.getLogger("hubnet")
    level = root.level
    root.setLevel(logging.INFO)
    root.addHandler(handler)
    try:
        yield tmp
    except BaseException:
        root.removeHandler(handler)
        root.setLevel(level)
        handler.close()
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    root.removeHandler(handler)
    root.setLevel(level)
    handler.close()
    if out.exists():
        old = out.parent / f".{out.name}.old-{os.getpid()}"
        out.rename(old)
        tmp.rename(out)
        shutil.rmtree(old) if old.is_dir() else old.unlink()
    else:
        tmp.rename(out)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_rows(path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return Path(path)


def write_json(path, data) -> Path:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (YearMonth,)):
        return str(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_loadings(path, q: LoadingMatrix) -> Path:
    rows = [[e] + list(q.values[i]) for i, e in enumerate(q.entities)]
    return write_rows(path, ["entity"] + list(q.hub_labels), rows)


def read_loadings(path) -> LoadingMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    hubs = rows[0][1:]
    ents = [r[0] for r in rows[1:]]
    vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return LoadingMatrix(vals, ents, hubs)


def write_factors(path, values: np.ndarray, times, hubs_left, hubs_right) -> Path:
    rows = []
    for t, ym in enumerate(times):
        for a, hl in enumerate(hubs_left):
            for b, hr in enumerate(hubs_right):
                rows.append((ym, hl, hr, values[t, a, b]))
    return write_rows(path, ("time", "hub_left", "hub_right", "value"), rows)


def read_factors(path) -> tuple[np.ndarray, list[str], list[str]]:
    rows = analysis.read_csv_rows(path)
    times, hl, hr = [], [], []
    for row in rows:
        for seq, key in ((times, "time"), (hl, "hub_left"), (hr, "hub_right")):
            if row[key] not in seq:
                seq.append(row[key])
    vals = np.empty((len(times), len(hl), len(hr)))
    ti = {t: k for k, t in enumerate(times)}
    li = {h: k for k, h in enumerate(hl)}
    ri = {h: k for k, h in enumerate(hr)}
    for row in rows:
        vals[ti[row["time"]], li[row["hub_left"]], ri[row["hub_right"]]] = float(row["value"])
    return vals, hl, hr


def write_fit_dir(d: Path, w: analysis.WindowResult, times, extra: dict | None = None) -> dict:
    """Loadings, factors, eigenvalues and a JSON report for one fitted window."""
    d.mkdir(parents=True, exist_ok=True)
    fit = w.fit
    raw = [("shared", fit.q_left)] if not w.two_sided else [("export", fit.q_left), ("import", fit.q_right)]
    for side, q in raw:
        write_loadings(d / f"loadings_{side}.csv", q)
    for side, q in w.sides():
        write_loadings(d / f"sum_one_loadings_{side}.csv", q)
    write_factors(d / "factors.csv", fit.factors.values, times, fit.factors.hub_labels_left, fit.factors.hub_labels_right)
    aligned = dict(w.sides())
    left = aligned.get("shared", aligned.get("export"))
    right = aligned.get("shared", aligned.get("import"))
    write_factors(d / "sum_one_factors.csv", w.aligned_factors, times, left.hub_labels, right.hub_labels)
    eig = [("left", fit.spectrum_left)] + ([("right", fit.spectrum_right)] if fit.spectrum_right else [])
    write_rows(
        d / "eigenvalues.csv",
        ("side", "index", "eigenvalue"),
        [(s, j + 1, lam) for s, sp in eig for j, lam in enumerate(sp.eigenvalues)],
    )
    report = fit_report(w)
    report.update(extra or {})
    write_json(d / "fit_report.json", report)
    return report


def fit_report(w: analysis.WindowResult) -> dict:
    fit = w.fit
    rep = {
        "model": fit.model.value,
        "label": w.label,
        "window": list(fit.window),
        "entities": list(fit.entities),
        "h0": fit.h0,
        "centered": fit.centered,
        "r": list(fit.r),
        "ranks_left": fit.ranks_left.as_dict(),
        "ranks_right": (fit.ranks_right or fit.ranks_left).as_dict(),
        "variance_explained": fit.variance_explained,
        "side_variance_explained": list(fit.side_variance) if fit.side_variance else None,
        "eigen_share": list(fit.eigen_share),
        "rotation_left": w.rotation_left,
        "rotation_right": w.rotation_right,
        "varimax_left": {k: w.normalized_left.info.get(k) for k in ("sweeps", "converged")},
        "truncated_mass_left": w.normalized_left.info.get("truncated_mass"),
        "alignment_left": w.alignment_left.as_dict(),
        "alignment_right": w.alignment_right.as_dict() if w.alignment_right else None,
        "meta": fit.meta,
    }
    if w.normalized_right is not None:
        rep["varimax_right"] = {k: w.normalized_right.info.get(k) for k in ("sweeps", "converged")}
        rep["truncated_mass_right"] = w.normalized_right.info.get("truncated_mass")
    return rep


# ---------------------------------------------------------------------------
# commands


def load_series(cfg: dict) -> MatrixSeries:
    s = ingest_long_csv(
        cfg["input"],
        cfg.get("strict", True),
        allow_negative=cfg.get("allow_negative", False),
        diag_defined=cfg.get("diag_defined", False),
    )
    logger.info("read %s: T=%d n=%d", cfg["input"], s.T, s.n)
    if cfg.get("average3"):
        s = three_month_average(s)
    return s


def _ranks(cfg: dict):
    r = cfg["r"]
    r1 = cfg.get("r1") or r
    r2 = cfg.get("r2") or r
    return r, r1, r2


def _fit(series: MatrixSeries, cfg: dict) -> ModelFit:
    r, r1, r2 = _ranks(cfg)
    kw = dict(
        h0=cfg["h0"],
        center=cfg["center"],
        rmax_rule=cfg["rmax_rule"],
        threshold=cfg["threshold"],
        deterministic=cfg.get("deterministic", False),
    )
    if cfg["model"] == ModelFamily.TWO_SIDED.value:
        return fit_model2(series, r1, r2, **kw)
    return fit_model1(series, r, **kw)


def cmd_ingest(cfg: dict, out: Path, stdout) -> None:
    if cfg["imports"]:
        exports = read_partial_long_csv(cfg["input"])
        imports = read_partial_long_csv(cfg["imports"])
        ents = sorted(set(exports.entities) | set(imports.entities))
        months = sorted(set(exports.times) | set(imports.times))
        times = month_range(months[0], months[-1].ordinal() - months[0].ordinal() + 1)
        s = mirror_impute(
            read_partial_long_csv(cfg["input"], ents, times),
            read_partial_long_csv(cfg["imports"], ents, times),
            cfg["strict"],
        )
        if cfg["average3"]:
            s = three_month_average(s)
    else:
        s = load_series(cfg)
    if cfg["format"] in ("long", "both"):
        export_long_csv(s, out / "series.csv")
    if cfg["format"] in ("matrices", "both"):
        export_matrix_csvs(s, out / "matrices")
    summary = {
        "T": s.T,
        "n": s.n,
        "entities": list(s.entities),
        "first": str(s.times[0]),
        "last": str(s.times[-1]),
        "missing_filled": s.meta.get("missing_filled", 0),
        "exporter_fallback": s.meta.get("exporter_fallback", 0),
    }
    write_json(out / "summary.json", summary)
    print(f"T={s.T} n={s.n} {s.times[0]}..{s.times[-1]}", file=stdout)


def cmd_estimate(cfg: dict, out: Path, stdout) -> None:
    s = load_series(cfg)
    fit = _fit(s, cfg)
    w = analysis.normalize_fit(fit, label="full", anchors=cfg["anchors"] or None)
    extra = {}
    if cfg["truth"]:
        truth = GroundTruth.load(cfg["truth"])
        extra["subspace_distance"] = {
            "left": _distance(fit.q_left.values, truth.basis_left()),
            "right": _distance(fit.right.values, truth.basis_right()),
        }
    if cfg["dump_m"]:
        modes = [Mode.BOTH] if fit.model is ModelFamily.SYMMETRIC_LOADING else [Mode.COL, Mode.ROW]
        for mode in modes:
            acc = build_m_matrix(s, cfg["h0"], mode, center=cfg["center"], deterministic=cfg["deterministic"])
            write_rows(
                out / f"m_{mode.value.lower()}.csv",
                ["entity"] + list(s.entities),
                [[e] + list(acc.m[i]) for i, e in enumerate(s.entities)],
            )
    if cfg["dump_residuals"]:
        res = residuals(s, fit)
        mask = s.defined_mask
        rows = [
            (ym, s.entities[i], s.entities[j], res[t, i, j])
            for t, ym in enumerate(s.times)
            for i in range(s.n)
            for j in range(s.n)
            if mask[i, j]
        ]
        write_rows(out / "residuals.csv", ("time", "exporter", "importer", "residual"), rows)
    report = write_fit_dir(out, w, s.times, extra)
    line = f"model={fit.model.value} r={fit.r[0]},{fit.r[1]} variance_explained={fit.variance_explained:.6f}"
    if "subspace_distance" in report:
        d = report["subspace_distance"]
        line += f" distance_left={d['left']} distance_right={d['right']}"
    print(line, file=stdout)


def _distance(q, basis):
    if q.shape != basis.shape:
        return None
    return subspace_distance(q, basis)


def cmd_rank(cfg: dict, stdout) -> None:
    s = load_series(cfg)
    if cfg["model"] == ModelFamily.TWO_SIDED.value:
        sides = [("export", Mode.COL), ("import", Mode.ROW)]
    else:
        sides = [("shared", Mode.BOTH)]
    rmax = r_max_rule(s.n, cfg["rmax_rule"])
    w = csv.writer(stdout, lineterminator="\n")
    spectra = []
    w.writerow(("side", "ratio_rank", "scree_rank", "r_max", "threshold"))
    for side, mode in sides:
        acc = build_m_matrix(s, cfg["h0"], mode, center=cfg["center"], deterministic=cfg["deterministic"])
        lam = sym_eigen(acc).eigenvalues
        spectra.append((side, lam))
        w.writerow((side, ratio_rank(lam, rmax), scree_rank(lam, cfg["threshold"]), rmax, _fmt(cfg["threshold"])))
    stdout.write("\n")
    w.writerow(("side", "index", "eigenvalue", "ratio_next", "cumulative_share"))
    for side, lam in spectra:
        ratios = eigen_ratios(lam, len(lam) - 1) if len(lam) > 1 else np.array([])
        total = lam.sum()
        cum = np.cumsum(lam) / total if total > 0 else np.zeros_like(lam)
        for j, v in enumerate(lam):
            ratio = _fmt(ratios[j]) if j < len(ratios) else ""
            w.writerow((side, j + 1, _fmt(v), ratio, _fmt(cum[j])))


def cmd_rolling(cfg: dict, out: Path, stdout) -> None:
    s = load_series(cfg)
    r, r1, r2 = _ranks(cfg)
    two = cfg["model"] == ModelFamily.TWO_SIDED.value
    res = analysis.rolling_fit(
        s,
        cfg["window"],
        cfg["step"],
        cfg["model"],
        r=r1 if two else r,
        r2=r2 if two else None,
        h0=cfg["h0"],
        anchors=cfg["anchors"] or None,
        center=cfg["center"],
        rmax_rule=cfg["rmax_rule"],
        threshold=cfg["threshold"],
        workers=cfg["workers"],
        deterministic=cfg["deterministic"],
        matcher=cfg["matcher"],
    )
    win_rows = []
    for w in res.windows:
        times = s.times[w.start_index : w.start_index + res.window_months]
        write_fit_dir(out / "windows" / str(w.label), w, times)
        win_rows.append((w.label, w.fit.window[0], w.fit.window[1], f"windows/{w.label}"))
    write_rows(out / "windows.csv", ("window_label", "start", "end", "directory"), win_rows)
    with open(out / "rank_table.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(analysis.rank_table_layout(res))
    rows = res.rank_rows()
    write_rows(out / "rank_estimates.csv", list(rows[0]), [list(r.values()) for r in rows])
    plots = out / "plots"
    for what in analysis.PlotData:
        analysis.export_plot_data(res, what, plots, k=cfg["k"], truncation=cfg["truncation"])
    print(f"{len(res)} windows {res.labels[0]}..{res.labels[-1]}", file=stdout)


@dataclass(frozen=True)
class _SavedWindow:
    label: object
    loadings: dict
    factors: np.ndarray


def read_rolling_dir(path) -> tuple[str, list[_SavedWindow]]:
    """Aligned sum-to-one loadings and factors saved by ``rolling``."""
    path = Path(path)
    cfg = json.loads((path / "config.json").read_text(encoding="utf-8"))
    sides = ("export", "import") if cfg.get("model") == "two" else ("shared",)
    windows = []
    for row in analysis.read_csv_rows(path / "windows.csv"):
        d = path / row["directory"]
        loadings = {s: read_loadings(d / f"sum_one_loadings_{s}.csv") for s in sides}
        f, _, _ = read_factors(d / "sum_one_factors.csv")
        windows.append(_SavedWindow(analysis._label(row["window_label"]), loadings, f))
    if not windows:
        raise HubnetError(f"{path} holds no windows")
    return cfg.get("model", "sym"), windows


def _select(windows, label):
    if label is None:
        return windows
    chosen = [w for w in windows if str(w.label) == str(label)]
    if not chosen:
        raise HubnetError(f"no window labelled {label!r}")
    return chosen


def cmd_cluster(cfg: dict, out: Path, stdout) -> None:
    model, windows = read_rolling_dir(cfg["rolling"])
    side = cfg["side"] or ("joint" if model == "two" else "shared")
    sides = ("export", "import") if side == "joint" else (side,)
    if cfg["cluster_mode"] == "per-window":
        if cfg["label"] is None:
            raise ConfigError("per-window clustering needs --label")
        windows = _select(windows, cfg["label"])
    blocks = []
    for w in windows:
        for s in sides:
            if s not in w.loadings:
                raise HubnetError(f"side {s!r} not available for model {model!r}")
            blocks.append(w.loadings[s].values)
    entities = windows[0].loadings[sides[0]].entities
    cr = analysis.ward_cluster(np.hstack(blocks), min(cfg["k"], len(entities)), entities, squared=cfg["squared"])
    analysis.write_cluster_result(cr, out, variant=side)
    print(f"k={cr.k} sizes={np.bincount(cr.labels).tolist()}", file=stdout)


def cmd_export_network(cfg: dict, out: Path, stdout) -> None:
    model, windows = read_rolling_dir(cfg["rolling"])
    nodes, edges, members = [], [], []
    for w in _select(windows, cfg["label"]):
        if model == "two":
            net = analysis.hub_network(w.loadings["export"], w.factors, w.loadings["import"], values=cfg["truncation"])
        else:
            net = analysis.hub_network(w.loadings["shared"], w.factors, values=cfg["truncation"])
        a, b, c = analysis.network_rows(w.label, net)
        nodes += a
        edges += b
        members += c
    write_rows(out / "network_nodes.csv", analysis.NODE_HEADER, nodes)
    write_rows(out / "network_edges.csv", analysis.EDGE_HEADER, edges)
    write_rows(out / "network_members.csv", analysis.MEMBER_HEADER, members)
    print(f"{len(nodes)} nodes {len(edges)} edges", file=stdout)


def cmd_simulate(cfg: dict, out: Path, stdout) -> None:
    two = cfg["model"] == ModelFamily.TWO_SIDED.value
    r = cfg["r"]
    if r == AUTO:
        r = 3
    r1 = cfg.get("r1") or r
    r2 = cfg.get("r2") or (r if two else r1)
    if AUTO in (r1, r2):
        raise ConfigError("simulation ranks must be integers")
    truth = make_truth(
        cfg["n"],
        r1,
        r2,
        two_sided=two,
        phi=cfg["phi"],
        sigma_f=cfg["sigma_f"],
        sigma_e=cfg["sigma_e"],
        seed=cfg["seed"],
        planted=cfg["planted"],
        noise=cfg["noise"],
        mask_diagonal=cfg["mask_diagonal"],
        start=tuple(YearMonth.parse(cfg["start"])),
    )
    series, _ = simulate(truth, cfg["T"])
    export_long_csv(series, out / "series.csv")
    truth.save(out / "truth.json")
    if cfg["reps"] > 0:
        sc = Scenario(
            n=cfg["n"], r1=r1, r2=r2, T=cfg["T"], model=cfg["model"], phi=cfg["phi"],
            sigma_f=cfg["sigma_f"], sigma_e=cfg["sigma_e"], h0=cfg["h0"],
            mask_diagonal=cfg["mask_diagonal"], noise=cfg["noise"],
        )
        seeds = range(cfg["seed"], cfg["seed"] + cfg["reps"])
        rows = run_replications(sc, seeds, workers=cfg["workers"])
        write_summary(rows, out / "replications.csv")
    print(f"simulated T={series.T} n={series.n} seed={cfg['seed']}", file=stdout)


HANDLERS = {
    "ingest": cmd_ingest,
    "estimate": cmd_estimate,
    "rolling": cmd_rolling,
    "simulate": cmd_simulate,
    "cluster": cmd_cluster,
    "export-network": cmd_export_network,
}


def run(argv=None, *, environ=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "log_level")}
    console = logging.StreamHandler(stderr)
    console.setLevel(getattr(logging, str(ns.log_level).upper(), logging.WARNING))
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(console)
    logger.propagate = False
    try:
        return _dispatch(ns, flags, environ, stdout, stderr)
    finally:
        logger.removeHandler(console)
        logger.propagate = True


def _dispatch(ns, flags, environ, stdout, stderr) -> int:
    try:
        cfg = resolve_config(ns.command, flags, ns.config, environ)
    except ConfigError as exc:
        print(f"{exc.code}: {exc}", file=stderr)
        return 2
    except OSError as exc:
        print(f"IO_ERROR: {exc}", file=stderr)
        return 2
    try:
        if ns.command == "rank":
            cmd_rank(cfg, stdout)
        else:
            with staged_output(cfg["out"]) as tmp:
                logger.info("hubnet %s", ns.command)
                write_json(tmp / "config.json", cfg)
                HANDLERS[ns.command](cfg, tmp, stdout)
    except ConfigError as exc:
        print(f"{exc.code}: {exc}", file=stderr)
        return 2
    except HubnetError as exc:
        print(f"{exc.code}: {exc}", file=stderr)
        return 1
    except (OSError, ValueError) as exc:
        code = "IO_ERROR" if isinstance(exc, OSError) else "INVALID_INPUT"
        print(f"{code}: {exc}".replace("\n", " "), file=stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
