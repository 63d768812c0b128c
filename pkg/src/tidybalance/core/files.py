"""Reading and writing covariate, split, reference cache, config and result files."""

from __future__ import annotations

import json
import logging
import tomllib
import zipfile
from pathlib import Path
from typing import TextIO

import numpy as np
import pandas as pd
from pydantic import ValidationError

from tidybalance.core.approx import Table1Row
from tidybalance.core.simulation import best_design_shares, boxplot_summary, threshold_shares
from tidybalance.errors import InputParseError
from tidybalance.models.balance_models import (
    BalanceReport,
    Population,
    ReferenceProvenance,
    ReferenceSet,
    SplitSample,
)
from tidybalance.models.simulation_models import SimulationConfig, SimulationResult

logger = logging.getLogger(__name__)

ARM_LABELS = ("M", "N")


def _read_table(path: Path, min_columns: int, what: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError:
        raise InputParseError(f"{what} file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputParseError(f"Cannot parse {what} file {path}: {e}") from e
    if df.shape[1] < min_columns:
        raise InputParseError(f"{what} file {path} needs at least {min_columns} columns")
    return df


def load_covariates(path: Path) -> Population:
    """
    Read a covariate CSV: a header row, then one row per unit with the unit id first and
    one numeric column per covariate. Errors name the file line and column.
    """
    df = _read_table(path, 2, "Covariate")
    names = [str(c).strip() for c in df.columns[1:]]
    values = np.empty((len(df), len(names)))
    for ci, col in enumerate(df.columns[1:]):
        raw = df[col]
        numeric = pd.to_numeric(raw.str.strip(), errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(numeric))
        if bad.size:
            row = int(bad[0])
            raise InputParseError(
                f"Non-numeric covariate value {raw.iloc[row]!r}", line=row + 2, column=names[ci]
            )
        values[:, ci] = numeric
    ids = df.iloc[:, 0].str.strip().tolist()
    return Population(values=values, covariate_names=names, unit_ids=ids)


def save_covariates(pop: Population, path: Path) -> None:
    df = pd.DataFrame(pop.values, columns=pop.covariate_names)
    df.insert(0, "unit_id", pop.unit_ids)
    df.to_csv(path, index=False)


def _unit_positions(df: pd.DataFrame, pop: Population, what: str) -> list[int]:
    index = {uid: i for i, uid in enumerate(pop.unit_ids)}
    positions = []
    seen: set[str] = set()
    for row, uid in enumerate(df.iloc[:, 0].str.strip()):
        if uid not in index:
            raise InputParseError(f"Unknown unit id {uid!r} in {what} file", line=row + 2)
        if uid in seen:
            raise InputParseError(f"Unit id {uid!r} listed twice in {what} file", line=row + 2)
        seen.add(uid)
        positions.append(index[uid])
    return positions


def load_split(path: Path, pop: Population) -> SplitSample:
    """
    Read a split CSV with columns unit id and arm (`M` or `N`). Units not listed are
    population members outside the sample.
    """
    df = _read_table(path, 2, "Split")
    positions = _unit_positions(df, pop, "split")
    arms = {label: [] for label in ARM_LABELS}
    for row, (pos, label) in enumerate(zip(positions, df.iloc[:, 1].str.strip().str.upper(), strict=True)):
        if label not in arms:
            raise InputParseError(
                f"Arm label must be M or N, got {df.iloc[row, 1]!r}", line=row + 2, column=str(df.columns[1])
            )
        arms[label].append(pos)
    return SplitSample(m_indices=arms["M"], n_indices=arms["N"])


def load_clusters(path: Path, pop: Population) -> tuple[tuple[int, ...], ...]:
    """Read a cluster CSV with columns unit id and cluster label, in order of first appearance."""
    df = _read_table(path, 2, "Cluster")
    positions = _unit_positions(df, pop, "cluster")
    clusters: dict[str, list[int]] = {}
    for pos, label in zip(positions, df.iloc[:, 1].str.strip(), strict=True):
        clusters.setdefault(label, []).append(pos)
    return tuple(tuple(sorted(c)) for c in clusters.values())


def save_reference(ref: ReferenceSet, path: Path) -> None:
    """Write a reference cache: the SMD matrix plus JSON provenance, as `.npz`."""
    with path.open("wb") as f:
        np.savez(f, smd_rows=ref.smd_rows, provenance=np.array(ref.provenance.model_dump_json()))
    logger.info(f"Wrote reference of {ref.rows} splits to {path}")


def load_reference(path: Path) -> ReferenceSet:
    try:
        with np.load(path, allow_pickle=False) as data:
            rows = data["smd_rows"]
            provenance = ReferenceProvenance.model_validate_json(str(data["provenance"]))
    except FileNotFoundError:
        raise InputParseError(f"Reference file not found: {path}") from None
    except (OSError, KeyError, ValueError, zipfile.BadZipFile, ValidationError) as e:
        raise InputParseError(f"Cannot read reference file {path}: {e}") from e
    return ReferenceSet(smd_rows=rows, provenance=provenance)


def load_simulation_config(path: Path) -> SimulationConfig:
    """Parse a TOML simulation config. Schema violations surface as pydantic errors."""
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise InputParseError(f"Config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise InputParseError(f"Cannot parse config {path}: {e}") from e
    return SimulationConfig.model_validate(data)


def report_json(report: BalanceReport) -> str:
    return report.model_dump_json(indent=2)


def write_report_csv(report: BalanceReport, stream: TextIO) -> None:
    pd.DataFrame([report.to_row()]).to_csv(stream, index=False)


def format_report(report: BalanceReport) -> str:
    """Human-readable report: p, p* as a percentage, and the per-covariate SMD table."""
    s = report.smd_summary
    lines = [
        f"p = {report.p:.3f}",
        f"p* = {report.p_star:.1%}",
        f"argmin delta = {report.argmin_delta:.4g}",
        f"reference: {report.provenance.scheme.describe()}, {report.reference_size} splits "
        f"({report.provenance.mode.kind.value}, seed {report.provenance.seed})",
        "",
        f"{'covariate':<24} {'SMD':>8}",
    ]
    lines += [f"{name:<24} {value:>8.3f}" for name, value in zip(report.covariate_names, report.smds, strict=True)]
    lines += [
        "",
        f"{'Min':>8} {'Q1':>8} {'Median':>8} {'Q3':>8} {'Max':>8}",
        f"{s.min:>8.3f} {s.q1:>8.3f} {s.median:>8.3f} {s.q3:>8.3f} {s.max:>8.3f}",
    ]
    for a in report.adhoc:
        verdict = "balanced" if a.balanced else "not balanced"
        lines.append(
            f"ad-hoc delta={a.delta_cutoff:g}, r={a.max_imbalanced}: R={a.observed_r}, {verdict}; "
            f"reference acceptance {a.reference_accept_rate:.2%}"
        )
    return "\n".join(lines)


def write_random_p(dist: np.ndarray, path: Path) -> None:
    pd.DataFrame({"p": dist}).to_csv(path, index=False)


def table1_frame(rows: list[Table1Row]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump(by_alias=True) for row in rows])


def _shares_frame(res: SimulationResult, shares: dict) -> pd.DataFrame:
    rows = []
    for sc in res.scenarios:
        row = {"scenario": sc.name, "k": sc.k, "bias": sc.bias}
        row.update({design.label: shares[sc.name][design] for design in res.designs})
        rows.append(row)
    return pd.DataFrame(rows)


def write_simulation_outputs(res: SimulationResult, out_dir: Path) -> list[Path]:
    """
    Write the tidy results and the aggregates: best-design shares, threshold shares for
    p and p*, box-plot summaries and their outliers.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    below_p, below_p_star = threshold_shares(res)
    boxes = boxplot_summary(res)
    frames = {
        "results.csv": pd.DataFrame(
            [{**r.model_dump(), "design": r.design.label} for r in res.records.to_list()],
            columns=["scenario", "design", "iteration", "p", "p_star"],
        ),
        "best_design_shares.csv": _shares_frame(res, best_design_shares(res)),
        "threshold_p.csv": _shares_frame(res, below_p),
        "threshold_p_star.csv": _shares_frame(res, below_p_star),
        "boxplot.csv": pd.DataFrame(
            [
                {**b.model_dump(exclude={"outliers"}), "design": b.design.label, "n_outliers": len(b.outliers)}
                for b in boxes
            ]
        ),
        "outliers.csv": pd.DataFrame(
            [
                {"scenario": b.scenario, "design": b.design.label, "measure": b.measure, "value": v}
                for b in boxes
                for v in b.outliers
            ],
            columns=["scenario", "design", "measure", "value"],
        ),
    }
    written = []
    for name, frame in frames.items():
        path = out_dir / name
        frame.to_csv(path, index=False)
        written.append(path)
    (out_dir / "scenarios.json").write_text(
        json.dumps([sc.model_dump(mode="json") for sc in res.scenarios], indent=2) + "\n"
    )
    written.append(out_dir / "scenarios.json")
    logger.info(f"Wrote {len(written)} files to {out_dir}")
    return written
