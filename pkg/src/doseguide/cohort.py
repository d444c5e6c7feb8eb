"""Cohort loading, validation, preprocessing, and fold splitting.

Data model: each patient contributes exactly three staged state vectors
(one per treatment stage), three per-fraction doses, and two binary
treatment outcomes (tumor control, grade>=2 pneumonitis).  All scaling
metadata lives here so downstream predictions can always be mapped back
to original clinical units.

Note on the variable list: the published selection names "il5" while the
accompanying variable glossary describes interleukin 15; this module keeps
the name "il5" and the discrepancy is documented in the README.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import CohortValidationError, DoseguideError

STAGE_COUNT = 3

DEFAULT_VARIABLES = (
    "il4",
    "il10",
    "il5",
    "ip10",
    "mtv",
    "GLSZM_LZLGE",
    "GLSZM_ZSV",
    "Tumor_gEUD",
    "Lung_gEUD",
    "Rs2234671",
    "Rs238406",
    "Rs1047768",
)

DEFAULT_UNITS = {
    "il4": "pg/mL",
    "il10": "pg/mL",
    "il5": "pg/mL",
    "ip10": "pg/mL",
    "mtv": "mL",
    "GLSZM_LZLGE": "a.u.",
    "GLSZM_ZSV": "a.u.",
    "Tumor_gEUD": "Gy",
    "Lung_gEUD": "Gy",
    "Rs2234671": "genotype",
    "Rs238406": "genotype",
    "Rs1047768": "genotype",
}

SNP_VARIABLES = ("Rs2234671", "Rs238406", "Rs1047768")

DOSE_COLUMN = "dose_gy_per_frac"


@dataclass(frozen=True)
class VariableSchema:
    """Ordered variable list plus preprocessing configuration."""

    names: tuple = DEFAULT_VARIABLES
    units: dict = field(default_factory=lambda: dict(DEFAULT_UNITS))
    constant_flags: tuple = tuple(v in SNP_VARIABLES for v in DEFAULT_VARIABLES)
    truncation_quantile: float = 0.7
    dose_bounds: tuple = (1.5, 5.0)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("variable names must be unique")
        if len(self.constant_flags) != len(self.names):
            raise ValueError("constant_flags must align with names")
        if not (0.0 < self.truncation_quantile <= 1.0):
            raise ValueError("truncation_quantile must lie in (0, 1]")
        lo, hi = self.dose_bounds
        if not (lo > 0 and lo < hi):
            raise ValueError("dose_bounds must satisfy 0 < min < max")

    @property
    def q(self):
        return len(self.names)

    @property
    def constant_indices(self):
        return tuple(i for i, c in enumerate(self.constant_flags) if c)

    @property
    def active_indices(self):
        return tuple(i for i, c in enumerate(self.constant_flags) if not c)

    @property
    def active_names(self):
        return tuple(self.names[i] for i in self.active_indices)

    def column_for(self, name):
        return name.lower()

    def to_dict(self):
        return {
            "names": list(self.names),
            "units": dict(self.units),
            "constant_flags": list(self.constant_flags),
            "truncation_quantile": self.truncation_quantile,
            "dose_bounds": list(self.dose_bounds),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            names=tuple(d["names"]),
            units=dict(d["units"]),
            constant_flags=tuple(bool(v) for v in d["constant_flags"]),
            truncation_quantile=float(d["truncation_quantile"]),
            dose_bounds=tuple(float(v) for v in d["dose_bounds"]),
        )


@dataclass(frozen=True)
class PatientRecord:
    """One patient: staged states, per-fraction doses, binary outcomes."""

    patient_id: str
    states: np.ndarray  # (STAGE_COUNT, q), original units
    doses: np.ndarray  # (STAGE_COUNT,), Gy/fraction
    outcomes: tuple  # (y1, y2), each 0/1


@dataclass(frozen=True)
class VariableScaling:
    """Invertible per-variable preprocessing record."""

    name: str
    constant: bool
    cap: float
    vmin: float
    vmax: float

    def scale(self, v):
        if self.constant:
            return v
        v = np.minimum(v, self.cap)
        v = np.maximum(v, self.vmin)
        return (v - self.vmin) / (self.vmax - self.vmin)

    def inverse(self, x):
        if self.constant:
            return x
        return self.vmin + x * (self.vmax - self.vmin)

    def to_dict(self):
        return {
            "name": self.name,
            "constant": self.constant,
            "cap": self.cap,
            "vmin": self.vmin,
            "vmax": self.vmax,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], bool(d["constant"]), d["cap"], d["vmin"], d["vmax"])


@dataclass(frozen=True)
class ScaledCohort:
    """Preprocessed cohort: unit-interval states plus scaling metadata.

    ``states`` has shape (STAGE_COUNT, n, q) and ``doses_scaled`` shape
    (STAGE_COUNT, n).  Non-constant variables lie in [0, 1]; constant
    (SNP) variables pass through preprocessing bit-identically and keep
    their original coding.
    """

    schema: VariableSchema
    patient_ids: tuple
    states: np.ndarray
    doses_gy: np.ndarray
    doses_scaled: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    scaling: tuple  # of VariableScaling, aligned with schema.names

    def __post_init__(self):
        for arr in (self.states, self.doses_gy, self.doses_scaled, self.y1, self.y2):
            arr.setflags(write=False)

    @property
    def n(self):
        return len(self.patient_ids)

    def scaling_for(self, name):
        for s in self.scaling:
            if s.name == name:
                return s
        raise DoseguideError(f"unknown variable {name!r}")

    def scale_dose(self, dose_gy):
        lo, hi = self.schema.dose_bounds
        return (np.asarray(dose_gy, dtype=float) - lo) / (hi - lo)

    def inverse_scale_dose(self, x):
        lo, hi = self.schema.dose_bounds
        return lo + np.asarray(x, dtype=float) * (hi - lo)

    def scale_state(self, raw):
        """Scale a raw q-vector; values beyond a variable's cap are capped."""
        raw = np.asarray(raw, dtype=float)
        if raw.shape != (self.schema.q,):
            raise DoseguideError(
                f"state vector must have {self.schema.q} entries, got {raw.shape}"
            )
        return np.array([s.scale(v) for s, v in zip(self.scaling, raw)])

    def inverse_scale_state(self, scaled):
        scaled = np.asarray(scaled, dtype=float)
        return np.array([s.inverse(v) for s, v in zip(self.scaling, scaled)])


def inverse_scale(x, variable, cohort: ScaledCohort):
    """Map one scaled value of a named variable back to original units."""
    return cohort.scaling_for(variable).inverse(x)


# ---------------------------------------------------------------------------
# Loading and validation


def _parse_float(text, row, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise CohortValidationError(
            f"non-numeric value {text!r}", row=row, column=column
        ) from None
    if not np.isfinite(value):
        raise CohortValidationError(
            f"non-finite value {text!r}", row=row, column=column
        )
    return value


def _check_header(found, expected, path_label):
    found_set = set(found)
    expected_set = set(expected)
    unknown = sorted(found_set - expected_set)
    missing = sorted(expected_set - found_set)
    if unknown:
        raise CohortValidationError(
            f"unknown column in {path_label}", column=unknown[0], row=1
        )
    if missing:
        raise CohortValidationError(
            f"missing column in {path_label}", column=missing[0], row=1
        )


def _read_rows(text, expected_columns, path_label):
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise CohortValidationError(f"{path_label} is empty", row=1)
    _check_header([c.strip() for c in reader.fieldnames], expected_columns, path_label)
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if row.get(None) is not None:
            raise CohortValidationError(
                "row has more fields than the header", row=line_no
            )
        if any(v is None for v in row.values()):
            raise CohortValidationError(
                "row has fewer fields than the header", row=line_no
            )
        rows.append((line_no, {k.strip(): v.strip() for k, v in row.items()}))
    if not rows:
        raise CohortValidationError(f"{path_label} contains no data rows", row=1)
    return rows


def load_cohort_text(states_text, outcomes_text, schema=None):
    """Parse and validate cohort data given as CSV text.

    The whole load is rejected on the first violation: every patient must
    have exactly one row per stage and one outcomes row, all values must
    parse, outcomes must be binary, doses must be positive and within the
    schema's dose bounds, and constant-flagged variables must not change
    across stages within a patient.
    """
    schema = schema or VariableSchema()
    state_columns = ["patient_id", "stage"]
    state_columns += [schema.column_for(v) for v in schema.names]
    state_columns.append(DOSE_COLUMN)
    outcome_columns = ["patient_id", "lc", "rp2"]

    state_rows = _read_rows(states_text, state_columns, "states file")
    outcome_rows = _read_rows(outcomes_text, outcome_columns, "outcomes file")

    staged = {}
    order = []
    for line_no, row in state_rows:
        pid = row["patient_id"]
        if not pid:
            raise CohortValidationError("empty patient_id", row=line_no)
        try:
            stage = int(row["stage"])
        except ValueError:
            raise CohortValidationError(
                f"stage {row['stage']!r} is not an integer",
                row=line_no,
                column="stage",
            ) from None
        if stage not in range(1, STAGE_COUNT + 1):
            raise CohortValidationError(
                f"stage must be 1..{STAGE_COUNT}, got {stage}",
                row=line_no,
                column="stage",
                patient_id=pid,
            )
        values = np.array(
            [
                _parse_float(row[schema.column_for(v)], line_no, schema.column_for(v))
                for v in schema.names
            ]
        )
        dose = _parse_float(row[DOSE_COLUMN], line_no, DOSE_COLUMN)
        if dose <= 0:
            raise CohortValidationError(
                f"dose must be positive, got {dose}",
                row=line_no,
                column=DOSE_COLUMN,
                patient_id=pid,
            )
        lo, hi = schema.dose_bounds
        if not (lo <= dose <= hi):
            raise CohortValidationError(
                f"dose {dose} outside configured bounds [{lo}, {hi}]",
                row=line_no,
                column=DOSE_COLUMN,
                patient_id=pid,
            )
        if pid not in staged:
            staged[pid] = {}
            order.append(pid)
        if stage in staged[pid]:
            raise CohortValidationError(
                f"duplicate stage {stage}", row=line_no, patient_id=pid
            )
        staged[pid][stage] = (values, dose)

    outcomes = {}
    for line_no, row in outcome_rows:
        pid = row["patient_id"]
        if pid in outcomes:
            raise CohortValidationError(
                "duplicate patient in outcomes file", row=line_no, patient_id=pid
            )
        parsed = []
        for col in ("lc", "rp2"):
            raw = row[col]
            if raw not in ("0", "1"):
                raise CohortValidationError(
                    f"non-binary outcome {raw!r}", row=line_no, column=col,
                    patient_id=pid,
                )
            parsed.append(int(raw))
        outcomes[pid] = tuple(parsed)

    records = []
    for pid in order:
        stages = staged[pid]
        if len(stages) != STAGE_COUNT:
            missing = sorted(set(range(1, STAGE_COUNT + 1)) - set(stages))
            raise CohortValidationError(
                f"expected {STAGE_COUNT} stage rows, found {len(stages)} "
                f"(missing stage {missing[0] if missing else '?'})",
                patient_id=pid,
            )
        if pid not in outcomes:
            raise CohortValidationError("no outcomes row", patient_id=pid)
        states = np.stack([stages[t][0] for t in range(1, STAGE_COUNT + 1)])
        doses = np.array([stages[t][1] for t in range(1, STAGE_COUNT + 1)])
        for idx in schema.constant_indices:
            col = states[:, idx]
            if not np.all(col == col[0]):
                raise CohortValidationError(
                    f"constant-flagged variable {schema.names[idx]!r} varies "
                    "across stages",
                    patient_id=pid,
                )
        records.append(PatientRecord(pid, states, doses, outcomes[pid]))

    extra = sorted(set(outcomes) - set(order))
    if extra:
        raise CohortValidationError(
            "outcomes row without state rows", patient_id=extra[0]
        )
    return records


def load_cohort(states_file, outcomes_file, schema=None):
    """Load and validate a cohort from a pair of CSV files."""
    with open(states_file, encoding="utf-8") as fh:
        states_text = fh.read()
    with open(outcomes_file, encoding="utf-8") as fh:
        outcomes_text = fh.read()
    return load_cohort_text(states_text, outcomes_text, schema)


# ---------------------------------------------------------------------------
# Preprocessing


def empirical_quantile(values, q):
    """Linear-interpolation empirical quantile (numpy's default convention)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise DoseguideError("cannot take a quantile of an empty vector")
    return float(np.quantile(values, q, method="linear"))


def truncate_quantile(vectors, q, caps=None):
    """Cap each variable's values at its empirical q-quantile.

    ``vectors`` maps variable name -> 1-d array.  Pass previously recorded
    ``caps`` to re-apply an existing truncation (the pipeline reuses stored
    caps, which makes repeated application a no-op).  Returns (capped, caps).
    """
    if not (0.0 < q <= 1.0):
        raise DoseguideError("truncation quantile must lie in (0, 1]")
    capped = {}
    out_caps = {}
    for name, values in vectors.items():
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise DoseguideError(f"variable {name!r} has no values")
        cap = caps[name] if caps is not None else empirical_quantile(values, q)
        capped[name] = np.minimum(values, cap)
        out_caps[name] = float(cap)
    return capped, out_caps


def scale_unit_interval(records, schema=None):
    """Truncate then affinely map every non-constant variable onto [0, 1].

    Doses are scaled by the schema's fixed dose bounds so that what-if doses
    outside the observed range remain representable.  Constant-flagged
    variables are passed through untouched.
    """
    schema = schema or VariableSchema()
    if not records:
        raise DoseguideError("empty cohort")
    raw = np.stack([r.states for r in records])  # (n, T, q)
    n = raw.shape[0]

    pooled = {
        name: raw[:, :, j].reshape(-1)
        for j, name in enumerate(schema.names)
        if not schema.constant_flags[j]
    }
    capped, caps = truncate_quantile(pooled, schema.truncation_quantile)

    scaling = []
    scaled = raw.copy()
    for j, name in enumerate(schema.names):
        if schema.constant_flags[j]:
            col = raw[:, :, j].reshape(-1)
            v0 = float(col[0]) if col.size else 0.0
            scaling.append(VariableScaling(name, True, v0, v0, v0))
            continue
        values = capped[name]
        vmin = float(values.min())
        vmax = float(values.max())
        if vmin == vmax:
            raise DoseguideError(
                f"variable {name!r} is degenerate after truncation "
                "(min == max); flag it constant if that is intended"
            )
        info = VariableScaling(name, False, caps[name], vmin, vmax)
        scaling.append(info)
        scaled[:, :, j] = info.scale(raw[:, :, j])

    doses_gy = np.stack([r.doses for r in records])  # (n, T)
    lo, hi = schema.dose_bounds
    doses_scaled = (doses_gy - lo) / (hi - lo)

    return ScaledCohort(
        schema=schema,
        patient_ids=tuple(r.patient_id for r in records),
        states=np.ascontiguousarray(scaled.transpose(1, 0, 2)),  # (T, n, q)
        doses_gy=np.ascontiguousarray(doses_gy.T),
        doses_scaled=np.ascontiguousarray(doses_scaled.T),
        y1=np.array([r.outcomes[0] for r in records], dtype=int),
        y2=np.array([r.outcomes[1] for r in records], dtype=int),
        scaling=tuple(scaling),
    )


def split_folds(cohort: ScaledCohort, k, seed):
    """Partition patient indices into k folds, stratified on (y1, y2).

    Fold sizes differ by at most one; the partition is deterministic for a
    given seed.
    """
    n = cohort.n
    if k < 2:
        raise DoseguideError("need at least 2 folds")
    if k > n:
        raise DoseguideError(f"cannot split {n} patients into {k} folds")
    rng = np.random.default_rng(seed)
    strata = {}
    for i in range(n):
        strata.setdefault((int(cohort.y1[i]), int(cohort.y2[i])), []).append(i)
    folds = [[] for _ in range(k)]
    for key in sorted(strata):
        idx = np.array(strata[key])
        rng.shuffle(idx)
        for i in idx:
            target = min(range(k), key=lambda f: (len(folds[f]), f))
            folds[target].append(int(i))
    return [np.array(sorted(f), dtype=int) for f in folds]


# ---------------------------------------------------------------------------
# Writing (used by the cohort simulator and verdict export)


def write_cohort_csv(records, states_path, outcomes_path, schema=None):
    schema = schema or VariableSchema()
    with open(states_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["patient_id", "stage"]
        header += [schema.column_for(v) for v in schema.names]
        header.append(DOSE_COLUMN)
        writer.writerow(header)
        for r in records:
            for t in range(STAGE_COUNT):
                row = [r.patient_id, t + 1]
                row += [repr(float(v)) for v in r.states[t]]
                row.append(repr(float(r.doses[t])))
                writer.writerow(row)
    with open(outcomes_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "lc", "rp2"])
        for r in records:
            writer.writerow([r.patient_id, r.outcomes[0], r.outcomes[1]])
