"""Financial-usage index evaluator.

Builds account/savings/loan penetration indicators from microdata plus an
unbanked count table, combines them into a single usage component via the
first principal component of the standardized indicators, and scores
synthetic data by the maximum absolute difference of the component across
groups. A separate view splits each indicator's banked population into
low/medium/high usage levels.

The unbanked population enters as an explicit count table (period, age
band, gender) sourced from a public registry; unbanked individuals
contribute to denominators only.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from ..binning import EncodedDataset
from ..presets import AGE_BAND_LABELS, CBP_AGE_CUTOFFS
from ..tabular import Dataset, TabularError

__all__ = [
    "UsageError",
    "UsageIndicators",
    "UsageComponent",
    "TauReport",
    "build_usage_indicators",
    "pca_usage_component",
    "tau_metric",
    "usage_levels",
    "load_unbanked_csv",
    "save_unbanked_csv",
]

INDICATOR_COLUMNS = ("nFI", "nSavings", "nLoans")
LEVEL_LABELS = ("low", "medium", "high")


class UsageError(ValueError):
    """Invalid usage-index input."""


@dataclass(frozen=True)
class UsageIndicators:
    """Penetration rates for one group (or aggregate).

    ``alpha``: share with at least one financial-institution relationship;
    ``beta``: share with at least one savings account; ``gamma``: share with
    at least one loan. The population includes the unbanked.
    """

    key: tuple
    alpha: float
    beta: float
    gamma: float
    population: int

    def __post_init__(self) -> None:
        for name, v in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if not (0.0 <= v <= 1.0):
                raise UsageError(f"{name} must lie in [0, 1], got {v}")
        if self.population <= 0:
            raise UsageError(f"group {self.key}: population must be positive")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])


@dataclass(frozen=True)
class UsageComponent:
    """PCA-weighted usage component per group."""

    weights: tuple[float, float, float]
    values: dict
    variant: str
    recon_error: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise UsageError("weights must be non-negative and sum to 1")
        for key, value in self.values.items():
            if not (-1e-9 <= value <= 1.0 + 1e-9):
                raise UsageError(f"component for {key} outside [0, 1]: {value}")


def _age_band(ages: np.ndarray, cutoffs) -> np.ndarray:
    cut = np.asarray(cutoffs)
    return np.minimum(np.searchsorted(cut, ages, side="right"), len(cut) - 1)


def build_usage_indicators(
    data: Dataset,
    unbanked: dict,
    age_cutoffs=CBP_AGE_CUTOFFS,
    granularity: str = "cell",
) -> list[UsageIndicators]:
    """Per-group penetration indicators from microdata plus unbanked counts.

    ``unbanked`` maps ``(period, age_band_label, gender)`` to counts.
    ``granularity``: "cell" keys groups by (period, age band, gender),
    "period" aggregates to (period,), "overall" to the whole population.
    Groups with zero total population are an error.
    """
    if granularity not in ("cell", "period", "overall"):
        raise UsageError(f"unknown granularity '{granularity}'")
    for name in ("Period", "Age", "Gender", *INDICATOR_COLUMNS):
        if name not in data.column_names:
            raise UsageError(f"required feature '{name}' missing from dataset")

    periods = np.asarray(data.labels("Period"), dtype=object)
    genders = np.asarray(data.labels("Gender"), dtype=object)
    bands = _age_band(data.column("Age"), age_cutoffs)
    band_labels = np.asarray(AGE_BAND_LABELS, dtype=object)[bands]
    has_fi = data.column("nFI") > 0
    has_savings = data.column("nSavings") > 0
    has_loan = data.column("nLoans") > 0

    def cell_to_group(cell_key):
        if granularity == "cell":
            return cell_key
        if granularity == "period":
            return (cell_key[0],)
        return ()

    banked: dict[tuple, np.ndarray] = {}
    cells = list(zip(periods, band_labels, genders))
    for i, cell in enumerate(cells):
        group = cell_to_group(cell)
        acc = banked.setdefault(group, np.zeros(4))
        acc += (1.0, has_fi[i], has_savings[i], has_loan[i])

    extra: dict[tuple, float] = {}
    for cell_key, count in unbanked.items():
        if count < 0:
            raise UsageError(f"unbanked count for {cell_key} is negative")
        group = cell_to_group(tuple(cell_key))
        extra[group] = extra.get(group, 0.0) + count

    out = []
    for group in sorted(set(banked) | {g for g, c in extra.items() if c > 0}):
        stats = banked.get(group, np.zeros(4))
        population = stats[0] + extra.get(group, 0.0)
        if population <= 0:
            raise UsageError(f"group {group} has zero total population")
        out.append(
            UsageIndicators(
                key=group,
                alpha=float(stats[1] / population),
                beta=float(stats[2] / population),
                gamma=float(stats[3] / population),
                population=int(population),
            )
        )
    return out


def _leading_eigenvector(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Power iteration from the uniform vector; exact on symmetric inputs."""
    m = matrix.shape[0]
    v = np.full(m, 1.0 / m)
    for _ in range(10_000):
        w = matrix @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return v, 0.0
        w = w / norm
        if float(np.max(np.abs(w - v))) < 1e-15:
            v = w
            break
        v = w
    return v, float(v @ matrix @ v)


def pca_usage_component(indicators, variant: str = "original") -> UsageComponent:
    """First-principal-component weights over standardized indicators.

    Loadings are sign-fixed so the largest-magnitude loading is positive,
    clipped to non-negative (degenerate anticorrelation warns), and
    normalized to sum to one. The component applies the weights to the raw
    indicators, so it stays inside [0, 1]. Zero-variance indicators receive
    their equal share of the weight with a warning.
    """
    indicators = list(indicators)
    if len(indicators) < 3:
        raise UsageError("need at least 3 groups for the principal component")
    X = np.vstack([ind.vector for ind in indicators])
    sd = X.std(axis=0)
    live = np.flatnonzero(sd > 0)
    dead = np.flatnonzero(sd == 0)
    if dead.size:
        warnings.warn(
            f"zero-variance indicator column(s) {dead.tolist()}; assigning equal-share weight",
            stacklevel=2,
        )

    weights = np.zeros(3)
    recon_error = 0.0
    if live.size == 0:
        weights[:] = 1.0 / 3.0
    else:
        Z = (X[:, live] - X[:, live].mean(axis=0)) / sd[live]
        corr = (Z.T @ Z) / X.shape[0]
        vec, lam = _leading_eigenvector(corr)
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        if np.any(vec < 0):
            warnings.warn(
                "mixed-sign principal loadings clipped to zero", stacklevel=2
            )
            vec = np.clip(vec, 0.0, None)
        if vec.sum() == 0:
            vec = np.full(live.size, 1.0 / live.size)
        share_dead = dead.size / 3.0
        weights[dead] = 1.0 / 3.0
        weights[live] = (vec / vec.sum()) * (1.0 - share_dead)
        recon_error = float(max(0.0, 1.0 - lam / np.trace(corr))) if live.size else 0.0

    values = {ind.key: float(weights @ ind.vector) for ind in indicators}
    return UsageComponent(
        weights=tuple(weights), values=values, variant=variant, recon_error=recon_error
    )


@dataclass(frozen=True)
class TauReport:
    """Maximum absolute component difference per group and overall."""

    per_group: dict
    overall: float


def tau_metric(component_s: UsageComponent, component_o: UsageComponent) -> TauReport:
    """Max |B_s - B_o| per (age band, gender) group, maximized over periods."""
    keys_s, keys_o = set(component_s.values), set(component_o.values)
    if keys_s != keys_o:
        missing = sorted(keys_s ^ keys_o)
        raise UsageError(f"group keys do not match, e.g. {missing[:4]}")
    per_group: dict[tuple, float] = {}
    for key in keys_s:
        group = tuple(key[1:]) if len(key) == 3 else ()
        diff = abs(component_s.values[key] - component_o.values[key])
        per_group[group] = max(per_group.get(group, 0.0), diff)
    overall = max(per_group.values()) if per_group else 0.0
    return TauReport(per_group=per_group, overall=overall)


def usage_levels(encoded: EncodedDataset, columns=INDICATOR_COLUMNS) -> dict:
    """Population share per (indicator, low/medium/high) level.

    Levels split each indicator's code domain into contiguous thirds.
    Rows carrying the reserved suppressed code are excluded from the
    shares; shares per indicator sum to one over the remaining rows.
    """
    out = {}
    for name in columns:
        codec = encoded.codebook[name]
        dom = codec.domain_size
        if dom < 3:
            raise UsageError(f"column '{name}': need at least 3 codes for levels, got {dom}")
        codes = encoded.column_codes(name)
        if codec.has_suppressed:
            codes = codes[codes != codec.suppressed_code]
        if codes.size == 0:
            raise UsageError(f"column '{name}': no rows left to level")
        levels = np.minimum((codes * 3) // dom, 2)
        out[name] = np.bincount(levels, minlength=3) / codes.size
    return out


def load_unbanked_csv(path) -> dict:
    """Read the (period, age_band, gender, count) table."""
    unbanked = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["period", "age_band", "gender", "count"]:
            raise TabularError(f"{path}: expected header period,age_band,gender,count")
        for rownum, row in enumerate(reader, start=1):
            if len(row) != 4:
                raise TabularError(f"{path}: row {rownum}: expected 4 cells")
            try:
                count = int(row[3])
            except ValueError:
                raise TabularError(
                    f"{path}: row {rownum}: unparseable count '{row[3]}'"
                ) from None
            unbanked[(row[0], row[1], row[2])] = count
    return unbanked


def save_unbanked_csv(unbanked: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "age_band", "gender", "count"])
        for key in sorted(unbanked):
            writer.writerow([key[0], key[1], key[2], int(unbanked[key])])
