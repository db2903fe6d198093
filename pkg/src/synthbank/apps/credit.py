"""Credit-card risk evaluator.

Transition matrices between two yearly states (delinquency bands or debt
bands), demographic delinquency rates, and the Frobenius norm of the
difference between synthetic and original matrices as the utility error.
Matrices are computed on codes directly; frequency-table products incur no
decode step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..binning import EncodedDataset
from ..tabular import CATEGORICAL, NUMERIC, ColumnSpec, Dataset

__all__ = [
    "CreditError",
    "TransitionMatrix",
    "FrobeniusResult",
    "Coverage",
    "transition_matrix",
    "frobenius_error",
    "delinquency_rate",
    "active_both_filter",
]


class CreditError(ValueError):
    """Invalid credit-evaluator input."""


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic transition probabilities with their source counts.

    Rows without any observation are flagged undefined: their probability
    rows are zero and they are excluded from norms rather than imputed.
    """

    states: tuple[str, ...]
    counts: np.ndarray
    probs: np.ndarray
    defined: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.counts, self.probs, self.defined):
            np.asarray(arr).setflags(write=False)
        n = len(self.states)
        if self.counts.shape != (n, n) or self.probs.shape != (n, n):
            raise CreditError("matrix shape must match the state labels")
        sums = self.probs.sum(axis=1)
        if not np.all(np.abs(sums[self.defined] - 1.0) <= 1e-12):
            raise CreditError("defined rows must sum to 1")


def transition_matrix(states_t0, states_t1, n_states: int, states=None) -> TransitionMatrix:
    """Counts and row-normalized probabilities of state transitions."""
    t0 = np.asarray(states_t0, dtype=np.int64)
    t1 = np.asarray(states_t1, dtype=np.int64)
    if t0.shape != t1.shape:
        raise CreditError(f"length mismatch: {t0.shape[0]} vs {t1.shape[0]}")
    if t0.size and (min(t0.min(), t1.min()) < 0 or max(t0.max(), t1.max()) >= n_states):
        raise CreditError(f"state code out of range (n_states={n_states})")
    counts = (
        np.bincount(t0 * n_states + t1, minlength=n_states * n_states)
        .reshape(n_states, n_states)
        .astype(np.int64)
    )
    row_totals = counts.sum(axis=1)
    defined = row_totals > 0
    probs = np.zeros((n_states, n_states))
    probs[defined] = counts[defined] / row_totals[defined, None]
    labels = tuple(states) if states else tuple(f"s{i}" for i in range(n_states))
    if len(labels) != n_states:
        raise CreditError("state label count must equal n_states")
    return TransitionMatrix(states=labels, counts=counts, probs=probs, defined=defined)


@dataclass(frozen=True)
class FrobeniusResult:
    """Frobenius norm of the difference over rows defined in both matrices."""

    value: float
    excluded_rows: int


def frobenius_error(a: TransitionMatrix, b: TransitionMatrix) -> FrobeniusResult:
    """sqrt of the summed squared entry differences, undefined rows excluded."""
    if a.states != b.states:
        raise CreditError(f"state sets differ: {a.states} vs {b.states}")
    included = a.defined & b.defined
    diff = a.probs[included] - b.probs[included]
    value = float(np.sqrt(np.sum(diff * diff)))
    return FrobeniusResult(value=value, excluded_rows=int((~included).sum()))


def delinquency_rate(
    encoded: EncodedDataset,
    delinquency_column: str = "Delinquency2020",
    age_column: str = "Age2020",
    gender_column: str = "Gender",
) -> dict:
    """Share of cards with delinquency code > 0 per (age band, gender).

    Keys are ``(age_code, gender_label)`` over the full group domain;
    groups without generated rows map to None (missing, not zero). Rows
    carrying reserved suppressed codes are left out.
    """
    del_codec = encoded.codebook[delinquency_column]
    age_codec = encoded.codebook[age_column]
    gender_codec = encoded.codebook[gender_column]
    if gender_codec.kind != "categorical":
        raise CreditError(f"column '{gender_column}' must be categorical")
    del_codes = encoded.column_codes(delinquency_column)
    age_codes = encoded.column_codes(age_column)
    gender_codes = encoded.column_codes(gender_column)

    valid = np.ones(encoded.n_records, dtype=bool)
    for codec, codes in (
        (del_codec, del_codes),
        (age_codec, age_codes),
        (gender_codec, gender_codes),
    ):
        if codec.has_suppressed:
            valid &= codes != codec.suppressed_code

    rates: dict[tuple, float | None] = {}
    for age in range(age_codec.domain_size):
        for g, gender in enumerate(gender_codec.labels):
            sel = valid & (age_codes == age) & (gender_codes == g)
            total = int(sel.sum())
            key = (age, gender)
            rates[key] = None if total == 0 else float((del_codes[sel] > 0).sum() / total)
    return rates


@dataclass(frozen=True)
class Coverage:
    """Active-in-both-years coverage of the 2020 portfolio."""

    count_fraction: float
    debt_fraction: float
    n_joined: int


def active_both_filter(
    data_2020: Dataset, data_2021: Dataset, id_column: str = "CardId"
) -> tuple[Dataset, Coverage]:
    """Inner join on card id; one record per card active in both years.

    Returns the joined microdata (Gender, Age2020, Debt2020, Debt2021,
    Delinquency2020, Delinquency2021, ordered by card id) and the count and
    debt coverage fractions relative to the 2020 portfolio. Duplicate ids
    within a year are an error.
    """
    ids_a = data_2020.column(id_column)
    ids_b = data_2021.column(id_column)
    for year, ids in (("2020", ids_a), ("2021", ids_b)):
        if np.unique(ids).size != ids.size:
            raise CreditError(f"duplicate card ids in the {year} dataset")
    common, idx_a, idx_b = np.intersect1d(ids_a, ids_b, return_indices=True)

    gender_spec = data_2020.spec("Gender")
    schema = (
        ColumnSpec("Gender", CATEGORICAL, levels=gender_spec.levels),
        ColumnSpec("Age2020", NUMERIC, units="years"),
        ColumnSpec("Debt2020", NUMERIC, units="PYG"),
        ColumnSpec("Debt2021", NUMERIC, units="PYG"),
        ColumnSpec("Delinquency2020", NUMERIC, units="days"),
        ColumnSpec("Delinquency2021", NUMERIC, units="days"),
    )
    joined = Dataset(
        schema,
        [
            data_2020.column("Gender")[idx_a],
            data_2020.column("Age2020")[idx_a],
            data_2020.column("Debt2020")[idx_a],
            data_2021.column("Debt2021")[idx_b],
            data_2020.column("Delinquency2020")[idx_a],
            data_2021.column("Delinquency2021")[idx_b],
        ],
        provenance="active-both join",
    )
    total_debt = float(data_2020.column("Debt2020").sum())
    joined_debt = float(data_2020.column("Debt2020")[idx_a].sum())
    n_2020 = data_2020.n_records
    coverage = Coverage(
        count_fraction=0.0 if n_2020 == 0 else common.size / n_2020,
        debt_fraction=0.0 if total_debt == 0 else joined_debt / total_debt,
        n_joined=int(common.size),
    )
    return joined, coverage
