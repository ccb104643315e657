"""Pipeline orchestration: staged artifact tree, manifest, and determinism.

A run directory is a tree of plain-text artifacts, one subdirectory per stage,
so every stage can be rerun standalone on persisted inputs:

    index/       field and region universes, year span
    occurrence/  W_<year>.csv          weight triplets
    presence/    M_<year>.csv          presence triplets
    assist/      B_<year>.csv (+ .sidecar.csv)
    pvalues/     P_<year>.csv          null exceedance counts
    network/     C_<year>.csv          significant directed edges
    acs/         labels_<year>.csv, summary.csv
    stats/       fitness.csv, variety.csv, mixing.csv, occupancy.csv,
                 adjacency_<year>.csv (+ .sections.csv)
    manifest.json

Null replicates run on a bounded thread pool; replicate k draws from an RNG
substream keyed by (year, k) and the reduction sums integer count matrices,
so any worker count gives byte-identical artifacts. The manifest records the
effective config, versions, seed, and a checksum per artifact; it carries no
timestamps or worker counts, so identical runs produce identical manifests.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .acs import decompose, decomposition_summary_line, decomposition_to_text
from .assist import assist_from_text, assist_matrix, assist_sidecar_text, assist_to_text
from .fdr import SIGNIFICANCE_BASES, build_adjacency, network_from_text, network_to_text
from .hierarchy import CodeHierarchy, parse_hierarchy, parse_region_table
from .ingest import (
    build_occurrence_matrix,
    occurrence_from_text,
    occurrence_to_text,
    parse_events,
)
from .nullmodel import (
    exceedance_counts,
    fit_bicm,
    null_assist_replicate,
    pvalues_from_counts,
    pvalues_from_text,
    pvalues_to_text,
)
from .rca import binarize_rca, presence_from_text, presence_to_text
from .stats import (
    acs_section_counts,
    family_field_counts,
    ordered_adjacency_text,
    section_mixing,
    section_occupancy,
    subset_fitness,
    variety_llr,
)

WORKERS_ENV_VAR = "TECHNET_WORKERS"
GRANULARITIES = ("class", "subclass")


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit code 1."""


class PipelineError(RuntimeError):
    """A stage failed; carries the stage name and year. Maps to exit code 2."""

    def __init__(self, stage: str, year: int | None, cause: Exception):
        where = f"stage {stage!r}" + (f", year {year}" if year is not None else "")
        super().__init__(f"{where}: {cause}")
        self.stage = stage
        self.year = year
        self.cause = cause


@dataclass
class RunConfig:
    events_path: str = ""
    hierarchy_path: str = ""
    regions_path: str = ""
    out_dir: str = ""
    year_min: int = 1980
    year_max: int = 2011
    lag: int = 1
    granularity: str = "class"
    n_replicates: int = 1000
    fdr_q: float = 0.05
    master_seed: int = 0
    include_diagonal: bool = False
    significance_basis: str = "percentile"
    delimiter: str = ","
    dump_null_summaries: bool = False

    def validate(self, *, require_inputs: bool = True) -> None:
        if require_inputs:
            for name in ("events_path", "hierarchy_path", "out_dir"):
                if not getattr(self, name):
                    raise ConfigError(f"{name} is required")
            for name in ("events_path", "hierarchy_path"):
                if not Path(getattr(self, name)).is_file():
                    raise ConfigError(f"{name} does not exist: {getattr(self, name)}")
            if self.regions_path and not Path(self.regions_path).is_file():
                raise ConfigError(f"regions_path does not exist: {self.regions_path}")
        if self.year_max < self.year_min:
            raise ConfigError("empty year range")
        if self.lag < 1:
            raise ConfigError("lag must be >= 1")
        if self.year_max - self.year_min < self.lag:
            raise ConfigError("year range shorter than the lag: no year pairs to analyse")
        if self.n_replicates < 1:
            raise ConfigError("n_replicates must be >= 1")
        if not 0.0 < self.fdr_q < 1.0:
            raise ConfigError("fdr_q must lie strictly between 0 and 1")
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f"granularity must be one of {GRANULARITIES}")
        if self.significance_basis not in SIGNIFICANCE_BASES:
            raise ConfigError(f"significance_basis must be one of {SIGNIFICANCE_BASES}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")

    @property
    def base_years(self) -> list[int]:
        return list(range(self.year_min, self.year_max - self.lag + 1))

    @property
    def years(self) -> list[int]:
        return list(range(self.year_min, self.year_max + 1))


_CONFIG_TYPES = {
    "year_min": int,
    "year_max": int,
    "lag": int,
    "n_replicates": int,
    "master_seed": int,
    "fdr_q": float,
    "include_diagonal": lambda v: v.lower() in ("1", "true", "yes"),
    "dump_null_summaries": lambda v: v.lower() in ("1", "true", "yes"),
}


def load_run_config(path: str | Path) -> RunConfig:
    """Plain key = value configuration file; '#' starts a comment line."""
    cfg = RunConfig()
    known = set(asdict(cfg))
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line: {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        caster = _CONFIG_TYPES.get(key, str)
        try:
            setattr(cfg, key, caster(value))
        except ValueError:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
    return cfg


def resolve_workers(explicit: int | None = None) -> int:
    """Worker count: explicit argument, else the environment override, else 1."""
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get(WORKERS_ENV_VAR, "")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from None
    return 1


class RunPaths:
    """Canonical artifact locations inside a run directory."""

    def __init__(self, out_dir: str | Path):
        self.root = Path(out_dir)

    def ensure(self) -> None:
        for sub in ("index", "occurrence", "presence", "assist", "pvalues",
                    "network", "acs", "stats", "nulls"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def fields_file(self) -> Path:
        return self.root / "index" / "fields.txt"

    def regions_file(self) -> Path:
        return self.root / "index" / "regions.txt"

    def years_file(self) -> Path:
        return self.root / "index" / "years.txt"

    def occurrence(self, year: int) -> Path:
        return self.root / "occurrence" / f"W_{year}.csv"

    def presence(self, year: int) -> Path:
        return self.root / "presence" / f"M_{year}.csv"

    def assist(self, year: int) -> Path:
        return self.root / "assist" / f"B_{year}.csv"

    def assist_sidecar(self, year: int) -> Path:
        return self.root / "assist" / f"B_{year}.sidecar.csv"

    def pvalues(self, year: int) -> Path:
        return self.root / "pvalues" / f"P_{year}.csv"

    def null_summary(self, year: int) -> Path:
        return self.root / "nulls" / f"summary_{year}.csv"

    def network(self, year: int) -> Path:
        return self.root / "network" / f"C_{year}.csv"

    def labels(self, year: int) -> Path:
        return self.root / "acs" / f"labels_{year}.csv"

    def acs_summary(self) -> Path:
        return self.root / "acs" / "summary.csv"

    def stats(self, name: str) -> Path:
        return self.root / "stats" / name

    def manifest(self) -> Path:
        return self.root / "manifest.json"

    def read_fields(self) -> tuple[str, ...]:
        return tuple(self.fields_file().read_text().split())

    def read_regions(self) -> tuple[str, ...]:
        return tuple(self.regions_file().read_text().split())

    def read_years(self) -> tuple[int, int]:
        data = dict(
            line.split(",") for line in self.years_file().read_text().splitlines() if line
        )
        return int(data["year_min"]), int(data["year_max"])


def _load_hierarchy(cfg: RunConfig) -> CodeHierarchy:
    return parse_hierarchy(Path(cfg.hierarchy_path).read_text())


def _load_records(cfg: RunConfig, hierarchy: CodeHierarchy):
    text = Path(cfg.events_path).read_text()
    return parse_events(
        text.splitlines(),
        hierarchy,
        cfg.granularity,
        delimiter=cfg.delimiter,
        year_min=cfg.year_min,
        year_max=cfg.year_max,
    )


# ---------------------------------------------------------------------------
# Stages: each reads persisted artifacts and writes its own
# ---------------------------------------------------------------------------


def stage_ingest(cfg: RunConfig, paths: RunPaths) -> None:
    hierarchy = _load_hierarchy(cfg)
    parsed = _load_records(cfg, hierarchy)
    if cfg.regions_path:
        parse_region_table(Path(cfg.regions_path).read_text())  # validated, pass-through
    fields = hierarchy.codes_at(cfg.granularity)
    regions = tuple(sorted({r.region_id for r in parsed.records}))
    paths.fields_file().write_text("\n".join(fields) + "\n")
    paths.regions_file().write_text("\n".join(regions) + "\n")
    paths.years_file().write_text(
        f"year_min,{cfg.year_min}\nyear_max,{cfg.year_max}\n"
    )
    report = {
        "n_records": len(parsed.records),
        "n_rejected": parsed.n_rejected,
        "issues": [
            {"line": issue.line_no, "reason": issue.reason} for issue in parsed.issues[:200]
        ],
    }
    (paths.root / "index" / "ingest_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n"
    )
    for year in cfg.years:
        w = build_occurrence_matrix(parsed.records, year, regions=regions, fields=fields)
        paths.occurrence(year).write_text(occurrence_to_text(w))


def stage_rca(cfg: RunConfig, paths: RunPaths) -> None:
    fields = paths.read_fields()
    regions = paths.read_regions()
    for year in cfg.years:
        w = occurrence_from_text(
            paths.occurrence(year).read_text(), regions=regions, fields=fields, year=year
        )
        m = binarize_rca(w)
        paths.presence(year).write_text(presence_to_text(m))


def _read_presence(paths: RunPaths, year: int, regions, fields):
    return presence_from_text(
        paths.presence(year).read_text(), regions=regions, fields=fields, year=year
    )


def stage_assist(cfg: RunConfig, paths: RunPaths) -> None:
    fields = paths.read_fields()
    regions = paths.read_regions()
    for year in cfg.base_years:
        m_t = _read_presence(paths, year, regions, fields)
        m_lag = _read_presence(paths, year + cfg.lag, regions, fields)
        b = assist_matrix(m_t, m_lag)
        paths.assist(year).write_text(assist_to_text(b))
        paths.assist_sidecar(year).write_text(assist_sidecar_text(b))


def _pair_pvalue_matrix(cfg: RunConfig, b_emp, params_t, params_lag, workers: int):
    k = cfg.n_replicates
    if workers <= 1 or k == 1:
        counts = exceedance_counts(b_emp, params_t, params_lag, range(k), cfg.master_seed)
    else:
        chunks = [c for c in np.array_split(np.arange(k), min(workers * 4, k)) if len(c)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    exceedance_counts, b_emp, params_t, params_lag,
                    chunk.tolist(), cfg.master_seed,
                )
                for chunk in chunks
            ]
            counts = sum(f.result() for f in futures)
    return pvalues_from_counts(b_emp, counts, k)


def stage_nulls(cfg: RunConfig, paths: RunPaths, workers: int = 1) -> None:
    fields = paths.read_fields()
    regions = paths.read_regions()
    fits = {}
    for year in cfg.years:
        fits[year] = fit_bicm(_read_presence(paths, year, regions, fields))
    for year in cfg.base_years:
        b_emp = assist_from_text(
            paths.assist(year).read_text(), paths.assist_sidecar(year).read_text()
        )
        pv = _pair_pvalue_matrix(cfg, b_emp, fits[year], fits[year + cfg.lag], workers)
        paths.pvalues(year).write_text(pvalues_to_text(pv))
        if cfg.dump_null_summaries:
            lines = ["replicate,mean,max"]
            for k in range(cfg.n_replicates):
                b_null = null_assist_replicate(
                    fits[year], fits[year + cfg.lag], cfg.master_seed, k
                )
                lines.append(f"{k},{float(b_null.values.mean())!r},{float(b_null.values.max())!r}")
            paths.null_summary(year).write_text("\n".join(lines) + "\n")


def stage_filter(cfg: RunConfig, paths: RunPaths) -> None:
    for year in cfg.base_years:
        pv = pvalues_from_text(paths.pvalues(year).read_text())
        net = build_adjacency(
            pv, q=cfg.fdr_q, include_diagonal=cfg.include_diagonal,
            basis=cfg.significance_basis,
        )
        paths.network(year).write_text(network_to_text(net))


def _read_network(cfg: RunConfig, paths: RunPaths, year: int, fields):
    return network_from_text(
        paths.network(year).read_text(), fields, year=year, q=cfg.fdr_q
    )


def stage_acs(cfg: RunConfig, paths: RunPaths) -> None:
    fields = paths.read_fields()
    summary = ["year,lambda1,core_size,periphery_size,acs_size"]
    for year in cfg.base_years:
        d = decompose(_read_network(cfg, paths, year, fields))
        paths.labels(year).write_text(decomposition_to_text(d))
        summary.append(decomposition_summary_line(d))
    paths.acs_summary().write_text("\n".join(summary) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def stage_stats(cfg: RunConfig, paths: RunPaths) -> None:
    hierarchy = _load_hierarchy(cfg)
    parsed = _load_records(cfg, hierarchy)
    fields = paths.read_fields()

    fitness_lines = ["year,subset,metric,value"]
    variety_lines = ["year,metric,value"]
    mixing_lines = ["year,within,between"]
    occupancy_lines = [
        "year,section,size,n_in_acs,acs_fraction,share_of_acs,share_of_outside"
    ]
    for year in cfg.base_years:
        net = _read_network(cfg, paths, year, fields)
        d = decompose(net)
        fitness = family_field_counts(parsed.records, year)
        for row in subset_fitness(d, fitness):
            for metric in ("n_fields", "total", "average", "fitness_share", "node_share"):
                fitness_lines.append(
                    f"{year},{row.subset},{metric},{_fmt(getattr(row, metric))}"
                )
        sections, counts, sizes = acs_section_counts(d, hierarchy)
        result = variety_llr(counts, sizes, sections=sections, year=year)
        variety_lines.append(f"{year},applicable,{_fmt(result.applicable)}")
        variety_lines.append(f"{year},llr,{_fmt(result.llr)}")
        variety_lines.append(f"{year},df,{result.df}")
        variety_lines.append(f"{year},critical_value,{_fmt(result.critical_value)}")
        variety_lines.append(f"{year},significant,{_fmt(result.significant)}")
        variety_lines.append(f"{year},clamped,{_fmt(result.clamped)}")
        for section, count, omega in zip(sections, counts, result.omega):
            variety_lines.append(f"{year},count_{section},{count}")
            variety_lines.append(f"{year},omega_{section},{_fmt(omega)}")
        mix = section_mixing(net, hierarchy)
        mixing_lines.append(f"{year},{mix.within},{mix.between}")
        for occ in section_occupancy(d, hierarchy):
            occupancy_lines.append(
                f"{year},{occ.section},{occ.size},{occ.n_in_acs},"
                f"{_fmt(occ.acs_fraction)},{_fmt(occ.share_of_acs)},"
                f"{_fmt(occ.share_of_outside)}"
            )
        grid, bounds = ordered_adjacency_text(net, hierarchy)
        paths.stats(f"adjacency_{year}.csv").write_text(grid)
        paths.stats(f"adjacency_{year}.sections.csv").write_text(bounds)

    paths.stats("fitness.csv").write_text("\n".join(fitness_lines) + "\n")
    paths.stats("variety.csv").write_text("\n".join(variety_lines) + "\n")
    paths.stats("mixing.csv").write_text("\n".join(mixing_lines) + "\n")
    paths.stats("occupancy.csv").write_text("\n".join(occupancy_lines) + "\n")


STAGES = (
    ("ingest", stage_ingest),
    ("rca", stage_rca),
    ("assist", stage_assist),
    ("nulls", stage_nulls),
    ("filter", stage_filter),
    ("acs", stage_acs),
    ("stats", stage_stats),
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _collect_artifacts(paths: RunPaths) -> dict[str, str]:
    artifacts = {}
    for p in sorted(paths.root.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[str(p.relative_to(paths.root))] = _sha256(p)
    return artifacts


def _write_manifest(cfg: RunConfig, paths: RunPaths, status: str, failed: dict | None) -> dict:
    manifest = {
        "config": asdict(cfg),
        "versions": {
            "technet": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "master_seed": cfg.master_seed,
        "status": status,
        "failed": failed,
        "artifacts": _collect_artifacts(paths),
    }
    paths.manifest().write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


def run_pipeline(cfg: RunConfig, workers: int | None = None) -> dict:
    """Run every stage in order and write the manifest.

    Any stage error aborts the run: remaining artifacts are left unwritten,
    the manifest is still emitted with status 'incomplete' and the failing
    stage recorded, and a PipelineError is raised.
    """
    cfg.validate()
    n_workers = resolve_workers(workers)
    paths = RunPaths(cfg.out_dir)
    paths.ensure()
    for stage_name, stage_fn in STAGES:
        try:
            if stage_name == "nulls":
                stage_fn(cfg, paths, workers=n_workers)
            else:
                stage_fn(cfg, paths)
        except Exception as exc:  # noqa: BLE001 - every stage failure is reported
            failed = {"stage": stage_name, "error": str(exc)}
            _write_manifest(cfg, paths, "incomplete", failed)
            raise PipelineError(stage_name, None, exc) from exc
    return _write_manifest(cfg, paths, "complete", None)
