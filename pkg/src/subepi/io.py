"""CSV ingestion and result serialization (CSV tables, SVG heatmaps, manifest)."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io as _io
import json
import math
import os
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig
from .errors import (
    DomainError, DuplicateError, GapError, IngestError, ParameterError, ValidationError,
)
from .forecast import ForecastDistribution, _key
from .harness import (
    METRICS, Failure, HarnessConfig, RunArtifact, aggregate, best_cells, skill_table,
)
from .scoring import ScoreRecord
from .timeseries import REGION_NAMES, EpiWeek, WvalSeries, canonical_region, wval_from_sd

SCHEMA_WVAL = ("week_ending", "region", "wval")
SCHEMA_SD = ("week_ending", "region", "sd_above_baseline")
REGION_ORDER = {r: i for i, r in enumerate(REGION_NAMES)}


def fmt(x) -> str:
    """Full-precision decimal text that parses back to the same float."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- ingest -------------------------------------------------------------------

def ingest(path, regions=None) -> dict[str, WvalSeries]:
    """Read a snapshot CSV into one contiguous series per region.

    The header selects the value column: ``wval`` is used as is,
    ``sd_above_baseline`` is exponentiated. Row numbers in errors count the
    header as row 1.
    """
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(_io.StringIO(text))
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise IngestError(f"{path} is empty", row=1) from None
    if header not in (SCHEMA_WVAL, SCHEMA_SD):
        raise IngestError(f"unrecognized header {','.join(header)}; expected "
                          f"{','.join(SCHEMA_WVAL)} or {','.join(SCHEMA_SD)}", row=1)
    value_col = header[2]
    wanted = None if regions is None else {canonical_region(r) for r in regions}

    rows: dict[str, dict[EpiWeek, float]] = defaultdict(dict)
    for rownum, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != 3:
            raise ValidationError(f"expected 3 fields, found {len(rec)}", row=rownum)
        raw_date, raw_region, raw_value = (c.strip() for c in rec)
        try:
            week = EpiWeek.ending(dt.date.fromisoformat(raw_date))
        except ValueError as exc:
            # DomainError is a ValueError too: not a week-ending date
            raise ValidationError(f"bad week_ending {raw_date!r}: {exc}", row=rownum, column="week_ending") from None
        try:
            region = canonical_region(raw_region)
        except ValidationError as exc:
            raise ValidationError(str(exc), row=rownum, column="region") from None
        try:
            x = float(raw_value)
        except ValueError:
            raise ValidationError(f"not a number: {raw_value!r}", row=rownum, column=value_col) from None
        if not math.isfinite(x):
            raise ValidationError(f"non-finite value {raw_value!r}", row=rownum, column=value_col)
        if value_col == "wval":
            if x < 0:
                raise ValidationError(f"negative wval {x}", row=rownum, column=value_col)
            value = x
        else:
            try:
                value = wval_from_sd(x)
            except DomainError as exc:
                raise ValidationError(str(exc), row=rownum, column=value_col) from None
            if math.isinf(value):
                raise ValidationError(f"sd value {x} overflows", row=rownum, column=value_col)
        if week in rows[region]:
            raise DuplicateError(f"duplicate entry for {region} week ending {week.end_date}", row=rownum)
        rows[region][week] = value

    if not rows:
        raise IngestError(f"{path} has no data rows")
    out = {}
    for region in sorted(rows, key=lambda r: REGION_ORDER.get(r, 99)):
        if wanted is not None and region not in wanted:
            continue
        weeks = sorted(rows[region])
        span = weeks[-1].weeks_since(weeks[0]) + 1
        if span != len(weeks):
            have = set(weeks)
            missing = [weeks[0].shift(k) for k in range(span) if weeks[0].shift(k) not in have]
            raise GapError(
                f"{region} is missing {len(missing)} week(s): " + ", ".join(str(m.end_date) for m in missing[:10])
                + (" ..." if len(missing) > 10 else ""), missing,
            )
        out[region] = WvalSeries(region, tuple(weeks), np.array([rows[region][w] for w in weeks]))
    if wanted is not None and set(out) != wanted:
        raise IngestError(f"requested regions missing from file: {', '.join(sorted(wanted - set(out)))}")
    return out


def write_series_csv(series: dict[str, WvalSeries], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEMA_WVAL)
        for region, s in series.items():
            for week, v in s.points:
                w.writerow([week.end_date.isoformat(), region, fmt(v)])
    return path


# -- report tables --------------------------------------------------------------

def _alpha_label(a: float) -> str:
    return format(a, "g")


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_forecasts(artifact: RunArtifact, path) -> Path:
    alphas = artifact.config.bootstrap.alphas
    header = ["model", "region", "origin", "horizon", "target", "median"]
    for a in alphas:
        header += [f"lower_{_alpha_label(a)}", f"upper_{_alpha_label(a)}"]
    rows = []
    for (model, region, origin), fd in sorted(artifact.forecasts.items(), key=_forecast_key(artifact)):
        for h in fd.horizons:
            m, iv = fd.at(h)
            row = [model, region, origin.end_date.isoformat(), h, fd.target(h).end_date.isoformat(), fmt(m)]
            for a in alphas:
                lo, hi = iv[_key(a)]
                row += [fmt(lo), fmt(hi)]
            rows.append(row)
    return _write_csv(Path(path), header, rows)


def _forecast_key(artifact):
    morder = {m: i for i, m in enumerate(artifact.models)}
    rorder = {r: i for i, r in enumerate(artifact.regions)}
    return lambda kv: (rorder.get(kv[0][1], 99), kv[0][2], morder.get(kv[0][0], 99))


def read_forecasts(path) -> dict[tuple[str, str, EpiWeek], ForecastDistribution]:
    """Inverse of :func:`write_forecasts` (samples are not stored)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        alphas = [float(c[len("lower_"):]) for c in reader.fieldnames if c.startswith("lower_")]
        grouped = defaultdict(list)
        for rec in reader:
            key = (rec["model"], rec["region"], EpiWeek.ending(dt.date.fromisoformat(rec["origin"])))
            grouped[key].append(rec)
    out = {}
    for key, recs in grouped.items():
        recs.sort(key=lambda r: int(r["horizon"]))
        hz = tuple(int(r["horizon"]) for r in recs)
        med = np.array([float(r["median"]) for r in recs])
        iv = {}
        for a in alphas:
            lab = _alpha_label(a)
            iv[_key(a)] = (np.array([float(r[f"lower_{lab}"]) for r in recs]),
                           np.array([float(r[f"upper_{lab}"]) for r in recs]))
        out[key] = ForecastDistribution(key[2], hz, med, iv)
    return out


def write_summary(artifact: RunArtifact, path) -> Path:
    header = ["model", "region", "horizon", "count", "mae", "mse", "wis",
              "log_mae", "log_mse", "log_wis", "coverage95"]
    rows = []
    for s in artifact.summary:
        logs = [fmt(math.log(v)) if v > 0 else "nan" for v in (s.mae, s.mse, s.wis)]
        rows.append([s.model, s.region, s.horizon, s.count, fmt(s.mae), fmt(s.mse), fmt(s.wis), *logs, fmt(s.coverage)])
    return _write_csv(Path(path), header, rows)


def write_skill(artifact: RunArtifact, region: str, path) -> Path:
    rows = [[r["model"], r["horizon"], *(fmt(r[k]) for k in METRICS)] for r in artifact.skill if r["region"] == region]
    return _write_csv(Path(path), ["model", "horizon", "mae_skill_pct", "mse_skill_pct", "wis_skill_pct"], rows)


def write_distributions(artifact: RunArtifact, path) -> Path:
    rows = []
    for (m, r, h), recs in sorted(artifact.distributions.items(), key=_cell_key(artifact)):
        for s in sorted(recs, key=lambda x: x.origin):
            rows.append([m, r, h, s.origin.end_date.isoformat(), fmt(s.mae), fmt(s.mse), fmt(s.wis), s.covered95])
    return _write_csv(Path(path), ["model", "region", "horizon", "origin", "mae", "mse", "wis", "covered95"], rows)


def _cell_key(artifact):
    morder = {m: i for i, m in enumerate(artifact.models)}
    rorder = {r: i for i, r in enumerate(artifact.regions)}
    return lambda kv: (rorder.get(kv[0][1], 99), morder.get(kv[0][0], 99), kv[0][2])


def write_failures(artifact: RunArtifact, path) -> Path:
    rows = [[f.model, f.region, f.origin.end_date.isoformat(), f.reason] for f in artifact.failures]
    return _write_csv(Path(path), ["model", "region", "origin", "reason"], rows)


# -- heatmap --------------------------------------------------------------------

def _shade(t: float) -> str:
    # white -> steel blue
    t = min(max(t, 0.0), 1.0)
    r, g, b = (int(round(255 + (c - 255) * t)) for c in (70, 130, 180))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(artifact: RunArtifact, region: str) -> str:
    """Models by (metric, horizon); ln of mean MAE/MSE/WIS and raw coverage. Best cells are black."""
    hz = artifact.config.horizons
    models = artifact.models
    cols = [(k, h) for k in METRICS + ("coverage",) for h in hz]
    cell = {(s.model, s.horizon): s for s in artifact.summary if s.region == region}
    best = best_cells([s for s in artifact.summary if s.region == region])
    cw, ch, left, top = 58, 22, 90, 48
    width, height = left + cw * len(cols) + 10, top + ch * len(models) + 10

    def value(m, k, h):
        s = cell.get((m, h))
        if s is None or s.count == 0:
            return math.nan
        v = s.coverage if k == "coverage" else s.metric(k)
        return v if k == "coverage" else (math.log(v) if v > 0 else math.nan)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
             f'<text x="{left}" y="14" font-size="13">{escape(region)}</text>']
    for j, (k, h) in enumerate(cols):
        label = ("ln " + k.upper()) if k != "coverage" else "PI95 %"
        parts.append(f'<text x="{left + j * cw + cw / 2}" y="{top - 20}" text-anchor="middle">{label}</text>')
        parts.append(f'<text x="{left + j * cw + cw / 2}" y="{top - 6}" text-anchor="middle">{h}w</text>')
    for k in METRICS + ("coverage",):
        vals = [value(m, k, h) for m in models for h in hz]
        vals = [v for v in vals if math.isfinite(v)]
        lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
        for i, m in enumerate(models):
            for h in hz:
                j = cols.index((k, h))
                v = value(m, k, h)
                x, y = left + j * cw, top + i * ch
                if m in best.get((region, h, k), set()):
                    fill, ink = "#000000", "#ffffff"
                elif math.isfinite(v):
                    fill, ink = _shade((v - lo) / (hi - lo) if hi > lo else 0.5), "#000000"
                else:
                    fill, ink = "#eeeeee", "#000000"
                text = f"{v:.2f}" if math.isfinite(v) else "NA"
                parts.append(f'<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}" stroke="#ffffff"/>')
                parts.append(f'<text x="{x + cw / 2}" y="{y + 15}" text-anchor="middle" fill="{ink}">{text}</text>')
    for i, m in enumerate(models):
        parts.append(f'<text x="{left - 6}" y="{top + i * ch + 15}" text-anchor="end">{escape(m)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- artifact persistence -----------------------------------------------------

def config_dict(cfg: HarnessConfig) -> dict:
    b = cfg.bootstrap
    return {
        "origin_start": cfg.origin_start.end_date.isoformat(), "origin_end": cfg.origin_end.end_date.isoformat(),
        "window_len": cfg.window_len, "horizons": list(cfg.horizons), "multistarts": cfg.multistarts,
        "models": list(cfg.models), "master_seed": cfg.master_seed, "steps_per_week": cfg.steps_per_week,
        "bootstrap": {"B": b.B, "refit_starts": b.refit_starts, "alphas": list(b.alphas), "max_iter": b.max_iter},
    }


def config_from_dict(d: dict) -> HarnessConfig:
    b = d["bootstrap"]
    return HarnessConfig(
        origin_start=EpiWeek.ending(dt.date.fromisoformat(d["origin_start"])),
        origin_end=EpiWeek.ending(dt.date.fromisoformat(d["origin_end"])),
        window_len=d["window_len"], horizons=tuple(d["horizons"]), multistarts=d["multistarts"],
        models=tuple(d["models"]), master_seed=d["master_seed"], steps_per_week=d["steps_per_week"],
        bootstrap=BootstrapConfig(B=b["B"], refit_starts=b["refit_starts"], alphas=tuple(b["alphas"]), max_iter=b["max_iter"]),
    )


def save_artifact(artifact: RunArtifact, path) -> Path:
    fcs = []
    for (m, r, o), fd in sorted(artifact.forecasts.items(), key=_forecast_key(artifact)):
        fcs.append({"model": m, "region": r, "origin": o.end_date.isoformat(), "horizons": list(fd.horizons),
                    "median": fd.median.tolist(),
                    "intervals": {repr(a): [lo.tolist(), hi.tolist()] for a, (lo, hi) in sorted(fd.intervals.items())}})
    doc = {
        "version": __version__, "config": config_dict(artifact.config), "regions": list(artifact.regions),
        "forecasts": fcs,
        "scores": [[s.model, s.region, s.origin.end_date.isoformat(), s.horizon, s.mae, s.mse, s.wis, s.covered95]
                   for s in artifact.scores],
        "failures": [[f.model, f.region, f.origin.end_date.isoformat(), f.reason] for f in artifact.failures],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path


def load_artifact(path) -> RunArtifact:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = config_from_dict(doc["config"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise IngestError(f"cannot load run artifact {path}: {exc}") from exc

    def week(s):
        return EpiWeek.ending(dt.date.fromisoformat(s))

    forecasts = {}
    for f in doc["forecasts"]:
        iv = {_key(float(a)): (np.array(lo), np.array(hi)) for a, (lo, hi) in f["intervals"].items()}
        forecasts[(f["model"], f["region"], week(f["origin"]))] = ForecastDistribution(
            week(f["origin"]), tuple(f["horizons"]), np.array(f["median"]), iv)
    scores = [ScoreRecord(m, r, week(o), h, mae, mse, wis, cov) for m, r, o, h, mae, mse, wis, cov in doc["scores"]]
    failures = [Failure(m, r, week(o), why) for m, r, o, why in doc["failures"]]
    regions = tuple(doc["regions"])
    summary = aggregate(scores, cfg.models, regions, cfg.horizons)
    skill = skill_table(summary) if "SLR" in cfg.models else []
    return RunArtifact(cfg, regions, forecasts, scores, failures, summary, skill)


# -- everything at once ----------------------------------------------------------

def write_manifest(artifact: RunArtifact, path, input_checksum: str | None = None, provenance: str | None = None) -> Path:
    lines = [
        f"software_version = {__version__}",
        f"created_utc = {dt.datetime.now(dt.timezone.utc).isoformat(timespec='seconds')}",
        f"input_sha256 = {input_checksum or 'unknown'}",
    ]
    if provenance:
        lines.append(f"data_provenance = {provenance}")
    lines.append(f"config = {json.dumps(config_dict(artifact.config), sort_keys=True)}")
    lines.append(f"regions = {','.join(artifact.regions)}")
    lines.append(f"failures = {len(artifact.failures)}")
    for s in artifact.summary:
        lines.append(f"count[{s.model},{s.region},h{s.horizon}] = {s.count}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def emit_reports(artifact: RunArtifact, outdir, input_checksum: str | None = None,
                 provenance: str | None = None) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if not os.access(outdir, os.W_OK):
        raise PermissionError(f"{outdir} is not writable")
    paths = [write_summary(artifact, outdir / "summary.csv")]
    if artifact.skill:
        paths += [write_skill(artifact, r, outdir / f"skill_{r}.csv") for r in artifact.regions]
    paths.append(write_distributions(artifact, outdir / "distributions.csv"))
    paths.append(write_forecasts(artifact, outdir / "forecasts.csv"))
    paths.append(write_failures(artifact, outdir / "failures.csv"))
    for r in artifact.regions:
        p = outdir / f"heatmap_{r}.svg"
        p.write_text(heatmap_svg(artifact, r), encoding="utf-8")
        paths.append(p)
    paths.append(write_manifest(artifact, outdir / "manifest.txt", input_checksum, provenance))
    return paths


def parse_week(text: str) -> EpiWeek:
    try:
        return EpiWeek.ending(dt.date.fromisoformat(text))
    except ValueError as exc:
        raise ParameterError(f"bad week-ending date {text!r}: {exc}") from None
