"""Observational data ingestion, covariate binarization, and rule semantics.

A dataset holds units with mixed-type covariates, a binary treatment, and a
numeric outcome. Covariates are binarized into atoms (one-hot categories,
quantile buckets for numericals); a subgroup is a bit-vector over atoms whose
rule reads: atoms of the same covariate are OR-ed, distinct covariates are
AND-ed.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import BinaryIO, Optional, Union

import numpy as np
import pandas as pd


class CprismError(Exception):
    """Base class for data and modeling errors raised by this package."""


class IngestError(CprismError):
    pass


class SubgroupError(CprismError):
    pass


MISSING_TOKENS = {"", "na", "nan", "null", "none"}
MISSING_CATEGORY = "missing"

CATEGORICAL = "categorical"
NUMERICAL = "numerical"

ORIGINS = ("discovered", "user-defined", "merged", "split")
ALL_SUBGROUP_ID = "ALL"


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    kind: str  # CATEGORICAL or NUMERICAL


@dataclass
class IngestReport:
    n_rows_read: int = 0
    n_rows_dropped: int = 0
    imputed: dict[str, int] = field(default_factory=dict)
    treatment_mapping: dict[str, int] = field(default_factory=dict)


class ObservationalDataset:
    """Immutable container of units: covariates, binary treatment, outcome.

    ``unit_ids`` are the 0-based source row positions and stay stable across
    the session even when unusable rows were dropped at ingest.
    """

    def __init__(
        self,
        schema: list[CovariateSpec],
        columns: dict[str, np.ndarray],
        treatment: np.ndarray,
        outcome: np.ndarray,
        treatment_name: str,
        outcome_name: str,
        unit_ids: Optional[np.ndarray] = None,
        report: Optional[IngestReport] = None,
    ):
        self.schema = list(schema)
        self.columns = {name: np.asarray(col) for name, col in columns.items()}
        self.treatment = np.ascontiguousarray(treatment, dtype=np.uint8)
        self.outcome = np.ascontiguousarray(outcome, dtype=np.float64)
        self.treatment_name = treatment_name
        self.outcome_name = outcome_name
        n = self.treatment.shape[0]
        if unit_ids is None:
            unit_ids = np.arange(n, dtype=np.int64)
        self.unit_ids = np.ascontiguousarray(unit_ids, dtype=np.int64)
        self.report = report
        self._validate()

    def _validate(self) -> None:
        n = self.n
        if n == 0:
            raise IngestError("dataset has zero usable rows")
        for spec in self.schema:
            if spec.name not in self.columns:
                raise IngestError(f"schema covariate {spec.name!r} has no column")
            if len(self.columns[spec.name]) != n:
                raise IngestError(f"column {spec.name!r} length mismatch")
        if self.outcome.shape[0] != n or self.unit_ids.shape[0] != n:
            raise IngestError("treatment/outcome/id lengths disagree")
        if not np.isfinite(self.outcome).all():
            raise IngestError("outcome contains non-finite values")
        if not np.isin(self.treatment, (0, 1)).all():
            raise IngestError("treatment must be binary 0/1")
        if len(np.unique(self.unit_ids)) != n:
            raise IngestError("unit ids must be unique")
        n_treated = int(self.treatment.sum())
        if n_treated == 0 or n_treated == n:
            raise IngestError("dataset needs at least one treated and one control unit")

    @property
    def n(self) -> int:
        return self.treatment.shape[0]

    @property
    def covariate_names(self) -> list[str]:
        return [spec.name for spec in self.schema]

    def covariate(self, name: str) -> np.ndarray:
        return self.columns[name]

    def kind_of(self, name: str) -> str:
        for spec in self.schema:
            if spec.name == name:
                return spec.kind
        raise KeyError(name)

    def to_dataframe(self) -> pd.DataFrame:
        data = {name: self.columns[name] for name in self.covariate_names}
        data[self.treatment_name] = self.treatment.astype(int)
        data[self.outcome_name] = self.outcome
        return pd.DataFrame(data, index=pd.Index(self.unit_ids, name="unit_id"))


@dataclass
class IngestConfig:
    treatment: str
    outcome: str
    positive_value: Optional[str] = None
    buckets: int = 4
    types: dict[str, str] = field(default_factory=dict)

    @classmethod
    def coerce(cls, config: Union["IngestConfig", dict]) -> "IngestConfig":
        if isinstance(config, IngestConfig):
            return config
        known = {"treatment", "outcome", "positive_value", "buckets", "types"}
        unknown = set(config) - known
        if unknown:
            raise IngestError(f"unknown config keys: {sorted(unknown)}")
        if "treatment" not in config or "outcome" not in config:
            raise IngestError("config requires 'treatment' and 'outcome' column names")
        return cls(
            treatment=str(config["treatment"]),
            outcome=str(config["outcome"]),
            positive_value=(
                None if config.get("positive_value") is None else str(config["positive_value"])
            ),
            buckets=int(config.get("buckets", 4)),
            types={str(k): str(v) for k, v in config.get("types", {}).items()},
        )


def _is_missing(raw: str) -> bool:
    return raw.strip().lower() in MISSING_TOKENS


def _parse_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def ingest_csv(
    source: Union[bytes, str, BinaryIO], config: Union[IngestConfig, dict]
) -> ObservationalDataset:
    """Parse a header-bearing CSV byte stream into a validated dataset.

    Rows missing treatment or outcome are dropped and counted; missing
    covariate cells become the explicit ``missing`` category (categorical) or
    are median-imputed (numerical), with per-column counts in the report.
    """
    cfg = IngestConfig.coerce(config)
    if isinstance(source, bytes):
        buf: Union[BinaryIO, io.StringIO] = io.BytesIO(source)
    elif isinstance(source, str):
        buf = io.StringIO(source)
    else:
        buf = source
    try:
        df = pd.read_csv(buf, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except Exception as exc:
        raise IngestError(f"malformed CSV: {exc}") from exc
    if df.shape[1] == 0 or df.shape[0] == 0:
        raise IngestError("CSV has no data rows")
    df.columns = [str(c).strip() for c in df.columns]
    for col_name in (cfg.treatment, cfg.outcome):
        if col_name not in df.columns:
            raise IngestError(f"column {col_name!r} not found in CSV header")

    report = IngestReport(n_rows_read=len(df))

    raw_treatment = df[cfg.treatment].map(str).to_numpy()
    raw_outcome = df[cfg.outcome].map(str).to_numpy()
    treat_missing = np.array([_is_missing(v) for v in raw_treatment])
    outcome_vals = np.array([_parse_float(v) for v in raw_outcome])
    outcome_missing = np.array(
        [_is_missing(v) or math.isnan(x) for v, x in zip(raw_outcome, outcome_vals)]
    )
    non_missing_raw = [v for v in raw_outcome if not _is_missing(v)]
    if non_missing_raw and all(math.isnan(_parse_float(v)) for v in non_missing_raw):
        raise IngestError(f"outcome column {cfg.outcome!r} is not numeric")

    distinct_t = sorted({v.strip() for v in raw_treatment if not _is_missing(v)})
    if len(distinct_t) != 2:
        raise IngestError(
            f"treatment column {cfg.treatment!r} must have exactly 2 distinct values, "
            f"found {len(distinct_t)}"
        )
    if cfg.positive_value is not None:
        if cfg.positive_value not in distinct_t:
            raise IngestError(
                f"positive_value {cfg.positive_value!r} not among treatment values {distinct_t}"
            )
        positive = cfg.positive_value
    else:
        positive = distinct_t[1]
    report.treatment_mapping = {v: int(v == positive) for v in distinct_t}

    keep = ~(treat_missing | outcome_missing)
    report.n_rows_dropped = int((~keep).sum())
    if not keep.any():
        raise IngestError("zero usable rows after dropping missing treatment/outcome")

    unit_ids = np.flatnonzero(keep).astype(np.int64)
    treatment = np.array(
        [1 if v.strip() == positive else 0 for v in raw_treatment[keep]], dtype=np.uint8
    )
    outcome = outcome_vals[keep]

    schema: list[CovariateSpec] = []
    columns: dict[str, np.ndarray] = {}
    for name in df.columns:
        if name in (cfg.treatment, cfg.outcome):
            continue
        raw = df[name].map(str).to_numpy()[keep]
        missing = np.array([_is_missing(v) for v in raw])
        kind = cfg.types.get(name)
        if kind is None:
            parsed = np.array([_parse_float(v) for v in raw])
            numeric_ok = (~missing).any() and not np.isnan(parsed[~missing]).any()
            kind = NUMERICAL if numeric_ok else CATEGORICAL
        elif kind not in (CATEGORICAL, NUMERICAL):
            raise IngestError(f"unknown type override {kind!r} for column {name!r}")
        if kind == NUMERICAL:
            parsed = np.array([_parse_float(v) for v in raw])
            bad = missing | np.isnan(parsed)
            if bad.all():
                raise IngestError(f"numerical column {name!r} has no parseable values")
            if bad.any():
                parsed[bad] = float(np.median(parsed[~bad]))
                report.imputed[name] = int(bad.sum())
            columns[name] = parsed
        else:
            values = np.array([v.strip() for v in raw], dtype=object)
            if missing.any():
                values[missing] = MISSING_CATEGORY
                report.imputed[name] = int(missing.sum())
            columns[name] = values
        schema.append(CovariateSpec(name=name, kind=kind))

    return ObservationalDataset(
        schema=schema,
        columns=columns,
        treatment=treatment,
        outcome=outcome,
        treatment_name=cfg.treatment,
        outcome_name=cfg.outcome,
        unit_ids=unit_ids,
        report=report,
    )


# ---------------------------------------------------------------------------
# binarization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """Smallest binary predicate on one covariate.

    Either a value equality (categorical) or membership in the half-open
    interval (lo, hi] (numerical); unbounded ends use +-inf.
    """

    covariate: str
    value: Optional[str] = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    @property
    def op(self) -> str:
        return "eq" if self.value is not None else "in_range"

    def label(self) -> str:
        if self.value is not None:
            return f"{self.covariate}={self.value}"
        lo = "-inf" if self.lo is None or not math.isfinite(self.lo) else f"{self.lo:g}"
        hi = "+inf" if self.hi is None or not math.isfinite(self.hi) else f"{self.hi:g}"
        return f"{lo}<{self.covariate}<={hi}"


@dataclass
class AtomSchema:
    atoms: list[Atom]
    covariate_index: np.ndarray  # int64 per atom, index into covariate_names
    covariate_names: list[str]

    @property
    def d(self) -> int:
        return len(self.atoms)

    def atoms_of(self, covariate: str) -> np.ndarray:
        ci = self.covariate_names.index(covariate)
        return np.flatnonzero(self.covariate_index == ci)


@dataclass
class BinaryAtomMatrix:
    values: np.ndarray  # (n, d) uint8
    covariate_index: np.ndarray  # int64 per column
    unit_ids: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def check_partition(self) -> bool:
        for ci in np.unique(self.covariate_index):
            cols = self.values[:, self.covariate_index == ci]
            if not (cols.sum(axis=1) == 1).all():
                return False
        return True


def binarize(
    dataset: ObservationalDataset, bucket_count: int = 4
) -> tuple[AtomSchema, BinaryAtomMatrix]:
    """One-hot categoricals; split numericals into quantile buckets.

    Duplicate quantile edges are collapsed and edges bounding empty buckets
    are dropped, so a column may yield fewer than ``bucket_count`` atoms. A
    constant covariate degenerates to a single always-true atom (warned).
    """
    if bucket_count < 2:
        raise ValueError("bucket_count must be >= 2")
    atoms: list[Atom] = []
    cov_index: list[int] = []
    bit_cols: list[np.ndarray] = []
    names = dataset.covariate_names
    for ci, spec in enumerate(dataset.schema):
        col = dataset.columns[spec.name]
        if spec.kind == CATEGORICAL:
            values = sorted(set(col.tolist()))
            if len(values) == 1:
                warnings.warn(
                    f"covariate {spec.name!r} is constant; yields a single always-true atom",
                    stacklevel=2,
                )
            for v in values:
                atoms.append(Atom(covariate=spec.name, value=v))
                cov_index.append(ci)
                bit_cols.append((col == v).astype(np.uint8))
        else:
            edges = _occupied_bucket_edges(col.astype(np.float64), bucket_count)
            if len(edges) == 0:
                warnings.warn(
                    f"covariate {spec.name!r} is constant; yields a single always-true atom",
                    stacklevel=2,
                )
                atoms.append(Atom(covariate=spec.name, lo=-math.inf, hi=math.inf))
                cov_index.append(ci)
                bit_cols.append(np.ones(dataset.n, dtype=np.uint8))
                continue
            bucket = np.searchsorted(edges, col.astype(np.float64), side="left")
            bounds = [-math.inf, *edges, math.inf]
            for k in range(len(edges) + 1):
                atoms.append(Atom(covariate=spec.name, lo=bounds[k], hi=bounds[k + 1]))
                cov_index.append(ci)
                bit_cols.append((bucket == k).astype(np.uint8))
    schema = AtomSchema(
        atoms=atoms,
        covariate_index=np.asarray(cov_index, dtype=np.int64),
        covariate_names=names,
    )
    matrix = BinaryAtomMatrix(
        values=np.ascontiguousarray(np.column_stack(bit_cols), dtype=np.uint8),
        covariate_index=schema.covariate_index.copy(),
        unit_ids=dataset.unit_ids,
    )
    return schema, matrix


def _occupied_bucket_edges(col: np.ndarray, bucket_count: int) -> list[float]:
    qs = np.quantile(col, [k / bucket_count for k in range(1, bucket_count)])
    interior = np.unique(qs)
    bucket = np.searchsorted(interior, col, side="left")
    occupied = np.unique(bucket)
    if len(occupied) <= 1:
        return []
    # keep one separating edge per adjacent pair of occupied buckets
    return [float(interior[o - 1]) for o in occupied[1:]]


# ---------------------------------------------------------------------------
# subgroups
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Subgroup:
    """Atom-selection genome plus identity.

    The genome is a bool vector over the atom schema;``origin`` records how
    the subgroup came to be. Instances are immutable; edits create new ones.
    """

    genome: np.ndarray
    id: str
    origin: str = "discovered"
    label: Optional[str] = None

    def __post_init__(self):
        genome = np.ascontiguousarray(self.genome, dtype=bool)
        genome.setflags(write=False)
        object.__setattr__(self, "genome", genome)
        if self.origin not in ORIGINS:
            raise SubgroupError(f"unknown origin {self.origin!r}")

    @property
    def n_atoms(self) -> int:
        return int(self.genome.sum())

    def key(self) -> bytes:
        return self.genome.tobytes()


def all_units_subgroup(d: int) -> Subgroup:
    """The ALL pseudo-subgroup: empty genome, covers the whole population."""
    return Subgroup(genome=np.zeros(d, dtype=bool), id=ALL_SUBGROUP_ID, origin="user-defined", label="ALL")


def cover_indices(subgroup: Subgroup, matrix: BinaryAtomMatrix) -> np.ndarray:
    from . import kernels

    if subgroup.genome.shape[0] != matrix.d:
        raise SubgroupError(
            f"genome length {subgroup.genome.shape[0]} != matrix columns {matrix.d}"
        )
    mask = kernels.cover_mask(
        np.ascontiguousarray(subgroup.genome, dtype=np.uint8),
        matrix.values,
        matrix.covariate_index,
    )
    return np.flatnonzero(mask)


def cover(subgroup: Subgroup, matrix: BinaryAtomMatrix) -> np.ndarray:
    """Unit ids covered by the subgroup (OR within covariate, AND across)."""
    return matrix.unit_ids[cover_indices(subgroup, matrix)]


def cover_mask_bool(subgroup: Subgroup, matrix: BinaryAtomMatrix) -> np.ndarray:
    mask = np.zeros(matrix.n, dtype=bool)
    mask[cover_indices(subgroup, matrix)] = True
    return mask


def selected_covariates(genome: np.ndarray, covariate_index: np.ndarray) -> np.ndarray:
    g = np.asarray(genome, dtype=bool)
    return np.unique(covariate_index[g])


def antecedent_length(subgroup: Subgroup, schema: Union[AtomSchema, BinaryAtomMatrix]) -> int:
    """Number of distinct covariates with at least one selected atom."""
    return int(len(selected_covariates(subgroup.genome, schema.covariate_index)))


def merge_subgroups(
    a: Subgroup, b: Subgroup, schema: AtomSchema, new_id: Optional[str] = None
) -> Subgroup:
    """Union atom sets on shared covariates; one-sided covariates are dropped.

    Coverage of the result is a superset of cover(a) | cover(b). Merging
    antecedents with no covariate in common would produce an empty rule and
    is rejected.
    """
    if a.genome.shape[0] != schema.d or b.genome.shape[0] != schema.d:
        raise SubgroupError("subgroups do not match the atom schema")
    covs_a = set(selected_covariates(a.genome, schema.covariate_index).tolist())
    covs_b = set(selected_covariates(b.genome, schema.covariate_index).tolist())
    if not covs_a and not covs_b:
        raise SubgroupError("cannot merge two empty antecedents")
    shared = covs_a & covs_b
    if not shared:
        raise SubgroupError("antecedents share no covariate; merge would drop every condition")
    genome = np.zeros(schema.d, dtype=bool)
    for ci in shared:
        cols = schema.covariate_index == ci
        genome[cols] = a.genome[cols] | b.genome[cols]
    return Subgroup(
        genome=genome,
        id=new_id or f"{a.id}+{b.id}",
        origin="merged",
        label=None,
    )


def split_subgroup(
    s: Subgroup,
    covariate: str,
    schema: AtomSchema,
    new_ids: Optional[tuple[str, str]] = None,
) -> tuple[Subgroup, Subgroup]:
    """Partition the selected atoms of one covariate into two halves by atom order."""
    if covariate not in schema.covariate_names:
        raise SubgroupError(f"unknown covariate {covariate!r}")
    cols = schema.atoms_of(covariate)
    picked = cols[s.genome[cols]]
    if len(picked) < 2:
        raise SubgroupError(
            f"covariate {covariate!r} has {len(picked)} selected atom(s); need >= 2 to split"
        )
    half = math.ceil(len(picked) / 2)
    ids = new_ids or (f"{s.id}-a", f"{s.id}-b")
    parts = []
    for part_atoms, part_id in ((picked[:half], ids[0]), (picked[half:], ids[1])):
        genome = s.genome.copy()
        genome[cols] = False
        genome[part_atoms] = True
        parts.append(Subgroup(genome=genome, id=part_id, origin="split", label=None))
    return parts[0], parts[1]


# ---------------------------------------------------------------------------
# subgroup JSON wire format
# ---------------------------------------------------------------------------


def _bound_to_json(x: Optional[float]):
    if x is None or not math.isfinite(x):
        return None
    return x


def subgroup_to_json(subgroup: Subgroup, schema: AtomSchema) -> dict:
    entries = []
    for j in np.flatnonzero(subgroup.genome):
        atom = schema.atoms[int(j)]
        if atom.op == "eq":
            entries.append({"covariate": atom.covariate, "op": "eq", "value": atom.value})
        else:
            entries.append(
                {
                    "covariate": atom.covariate,
                    "op": "in_range",
                    "value": [_bound_to_json(atom.lo), _bound_to_json(atom.hi)],
                }
            )
    return {
        "id": subgroup.id,
        "origin": subgroup.origin,
        "label": subgroup.label,
        "atoms": entries,
    }


def subgroup_from_json(data: dict, schema: AtomSchema) -> tuple[Subgroup, list[str]]:
    """Parse the wire format; numeric ranges snap to the finest atom grid.

    Returns the subgroup and human-readable notes for every snapped range.
    """
    entries = data.get("atoms", [])
    if not entries:
        raise SubgroupError("subgroup has an empty antecedent")
    genome = np.zeros(schema.d, dtype=bool)
    notes: list[str] = []
    for entry in entries:
        covariate = entry.get("covariate")
        if covariate not in schema.covariate_names:
            raise SubgroupError(f"unknown covariate {covariate!r}")
        cols = schema.atoms_of(covariate)
        op = entry.get("op")
        if op == "eq":
            value = str(entry.get("value"))
            hit = [int(j) for j in cols if schema.atoms[int(j)].value == value]
            if not hit:
                raise SubgroupError(f"no atom {covariate}={value!r}")
            genome[hit] = True
        elif op == "in_range":
            bounds = entry.get("value")
            if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
                raise SubgroupError("in_range expects value [lo, hi]")
            lo = -math.inf if bounds[0] is None else float(bounds[0])
            hi = math.inf if bounds[1] is None else float(bounds[1])
            if not lo < hi:
                raise SubgroupError(f"empty range ({lo}, {hi}] on {covariate!r}")
            hit = []
            for j in cols:
                atom = schema.atoms[int(j)]
                if atom.op != "in_range":
                    raise SubgroupError(f"covariate {covariate!r} is categorical; use op 'eq'")
                alo = -math.inf if atom.lo is None else atom.lo
                ahi = math.inf if atom.hi is None else atom.hi
                if alo < hi and ahi > lo:
                    hit.append(int(j))
            if not hit:
                raise SubgroupError(f"range ({lo}, {hi}] selects no atoms of {covariate!r}")
            genome[hit] = True
            snapped_lo = schema.atoms[hit[0]].lo
            snapped_hi = schema.atoms[hit[-1]].hi
            if (snapped_lo, snapped_hi) != (lo, hi):
                notes.append(
                    f"{covariate}: ({lo:g}, {hi:g}] snapped to "
                    f"({snapped_lo:g}, {snapped_hi:g}]"
                )
        else:
            raise SubgroupError(f"unknown op {op!r}")
    origin = data.get("origin", "user-defined")
    return (
        Subgroup(
            genome=genome,
            id=str(data.get("id", "user")),
            origin=origin,
            label=data.get("label"),
        ),
        notes,
    )


def covariate_distribution(dataset: ObservationalDataset, name: str, bins: int = 20) -> dict:
    """Per-column chart data: value counts or a fixed-width histogram."""
    kind = dataset.kind_of(name)
    col = dataset.columns[name]
    if kind == CATEGORICAL:
        values, counts = np.unique(col, return_counts=True)
        return {
            "name": name,
            "kind": kind,
            "counts": [
                {"value": str(v), "count": int(c)} for v, c in zip(values, counts)
            ],
        }
    col = col.astype(np.float64)
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        return {"name": name, "kind": kind, "bins": [{"lo": lo, "hi": hi, "count": int(len(col))}]}
    counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
    return {
        "name": name,
        "kind": kind,
        "bins": [
            {"lo": float(edges[i]), "hi": float(edges[i + 1]), "count": int(c)}
            for i, c in enumerate(counts)
        ],
    }
