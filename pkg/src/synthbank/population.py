"""Seeded ground-truth population generator.

Stands in for confidential banking microdata: every dataset is drawn from a
planted parametric model so the downstream evaluators have known answers to
recover. Desk-scale defaults (1e5 individuals, 1e4 deposits, 1e5 cards)
keep end-to-end runs at seconds-level runtimes.

Determinism: all stochastic draws go through the single generator passed
in, in the fixed order the code reads (column by column, groups in
ascending order), so fixtures are stable across releases.

Planted structure worth knowing when testing:

* Financial inclusion: banked share and product penetration depend only on
  the age band (periods and genders are exchangeable), so pairwise
  dependencies form a star around Age and a tree-structured synthesizer
  can represent the population exactly.
* Term deposits: rates follow a smooth planted term curve plus small
  currency/type/period shifts, a small capital discount, and independent
  noise, so term-bin curves are recoverable and parametric fits have a
  ground truth.
* Credit cards: 2021 delinquency bands follow a planted Markov kernel
  conditional on the 2020 band; debt follows a multiplicative walk; the
  persistence rate controls the active-in-both-years overlap. Gender scales
  2020 delinquency (Gender -> Del2020 -> Del2021 forms a chain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .presets import AGE_BAND_LABELS, DEPOSIT_INSURANCE_LIMIT
from .tabular import CATEGORICAL, NUMERIC, ColumnSpec, Dataset

__all__ = [
    "FiPopulationConfig",
    "DepositMarketConfig",
    "CreditPortfolioConfig",
    "PopulationConfig",
    "generate_fi_population",
    "generate_term_deposits",
    "generate_credit_cards",
]

AGE_BAND_RANGES = ((18, 24), (25, 34), (35, 44), (45, 54), (55, 64), (65, 74), (75, 95))
DELINQUENCY_BAND_RANGES = ((0, 60), (61, 90), (91, 150), (151, 180), (181, 270), (271, 3000))

_BANDS = len(AGE_BAND_LABELS)


def _check_probs(name: str, values, length: int | None = None) -> tuple[float, ...]:
    arr = tuple(float(v) for v in values)
    if length is not None and len(arr) != length:
        raise ValueError(f"{name} needs {length} entries, got {len(arr)}")
    if any(not (0.0 <= v <= 1.0) for v in arr):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class FiPopulationConfig:
    """Planted financial-inclusion population.

    ``n_individuals`` counts the whole population including the unbanked;
    only banked individuals become microdata rows, the rest go into the
    unbanked count table. Product penetration varies by age band only.
    """

    n_individuals: int = 100_000
    periods: tuple[str, ...] = ("2017", "2018", "2019", "2020", "2021", "2022")
    gender_split: float = 0.5
    band_shares: tuple[float, ...] = (0.16, 0.20, 0.18, 0.15, 0.12, 0.11, 0.08)
    banked_rate: tuple[float, ...] = (0.55, 0.80, 0.85, 0.80, 0.72, 0.65, 0.55)
    fi_extra_lambda: tuple[float, ...] = (0.6, 1.5, 1.8, 1.5, 1.2, 0.9, 0.7)
    savings_rate: tuple[float, ...] = (0.50, 0.68, 0.72, 0.70, 0.66, 0.62, 0.58)
    savings_extra_lambda: float = 0.8
    loan_rate: tuple[float, ...] = (0.18, 0.35, 0.42, 0.40, 0.33, 0.25, 0.15)
    loan_extra_lambda: float = 0.35
    ccards_lambda: tuple[float, ...] = (0.5, 1.2, 1.4, 1.2, 1.0, 0.7, 0.4)
    collateral_rate: tuple[float, ...] = (0.10, 0.25, 0.32, 0.30, 0.26, 0.20, 0.12)
    nzs_lambda: tuple[float, ...] = (0.6, 1.0, 1.2, 1.1, 0.9, 0.8, 0.6)

    def __post_init__(self) -> None:
        if self.n_individuals < 0:
            raise ValueError("n_individuals must be non-negative")
        if not self.periods:
            raise ValueError("need at least one period")
        _check_probs("band_shares", self.band_shares, _BANDS)
        if abs(sum(self.band_shares) - 1.0) > 1e-9:
            raise ValueError("band_shares must sum to 1")
        _check_probs("banked_rate", self.banked_rate, _BANDS)
        _check_probs("savings_rate", self.savings_rate, _BANDS)
        _check_probs("loan_rate", self.loan_rate, _BANDS)
        _check_probs("collateral_rate", self.collateral_rate, _BANDS)
        _check_probs("gender_split", (self.gender_split,))


@dataclass(frozen=True)
class DepositMarketConfig:
    """Planted term-deposit market with a smooth recoverable rate curve.

    The planted curve is the four-coefficient parametric term structure
    (level/slope/two humps with decay times ``tau1``/``tau2``); noise and
    the capital discount are kept small relative to the 0.5pp rate bins.
    """

    n_deposits: int = 10_000
    periods: tuple[str, ...] = ("2019-12", "2020-12", "2021-12", "2022-12", "2023-12")
    bank_share: float = 0.7
    pyg_share: float = 0.8
    curve_beta: tuple[float, float, float, float] = (6.0, -3.5, 1.0, 0.8)
    curve_tau: tuple[float, float] = (240.0, 960.0)
    usd_shift: float = -1.2
    nonbank_shift: float = 0.25
    period_shift_step: float = 0.05
    capital_discount: float = 0.02
    rate_noise: float = 0.25
    capital_log_mean: float = float(np.log(5e7))
    capital_log_sd: float = 1.5
    capital_range: tuple[float, float] = (1e5, 2.5e10)
    term_log_mean: float = float(np.log(180.0))
    term_log_sd: float = 1.1
    term_range: tuple[float, float] = (7.0, 7000.0)
    rate_range: tuple[float, float] = (0.05, 14.9)

    def __post_init__(self) -> None:
        if self.n_deposits < 0:
            raise ValueError("n_deposits must be non-negative")
        _check_probs("bank_share", (self.bank_share,))
        _check_probs("pyg_share", (self.pyg_share,))
        if self.curve_tau[0] <= 0 or self.curve_tau[1] <= 0:
            raise ValueError("curve decay times must be positive")


#: concentrated delinquency transition kernel (rows: 2020 band)
DEFAULT_DELINQUENCY_KERNEL = (
    (0.90, 0.10, 0.00, 0.00, 0.00, 0.00),
    (0.15, 0.75, 0.10, 0.00, 0.00, 0.00),
    (0.10, 0.10, 0.70, 0.10, 0.00, 0.00),
    (0.05, 0.05, 0.10, 0.70, 0.10, 0.00),
    (0.00, 0.05, 0.05, 0.10, 0.70, 0.10),
    (0.00, 0.00, 0.05, 0.05, 0.10, 0.80),
)


@dataclass(frozen=True)
class CreditPortfolioConfig:
    """Planted two-year credit-card portfolio."""

    n_cards: int = 100_000
    persistence: float = 0.8
    new_card_rate: float = 0.15
    gender_split: float = 0.5
    band_shares: tuple[float, ...] = (0.16, 0.20, 0.18, 0.15, 0.12, 0.11, 0.08)
    delinquency_dist_male: tuple[float, ...] = (0.70, 0.07, 0.06, 0.06, 0.055, 0.055)
    delinquency_dist_female: tuple[float, ...] = (0.85, 0.04, 0.03, 0.03, 0.025, 0.025)
    kernel: tuple[tuple[float, ...], ...] = DEFAULT_DELINQUENCY_KERNEL
    debt_log_mean: float = float(np.log(3e6))
    debt_log_sd: float = 1.1
    debt_range: tuple[float, float] = (1e4, 1.34e8)
    debt_drift: float = -0.05
    debt_vol: float = 0.35

    def __post_init__(self) -> None:
        if self.n_cards < 0:
            raise ValueError("n_cards must be non-negative")
        _check_probs("persistence", (self.persistence,))
        _check_probs("new_card_rate", (self.new_card_rate,))
        _check_probs("band_shares", self.band_shares, _BANDS)
        if abs(sum(self.band_shares) - 1.0) > 1e-9:
            raise ValueError("band_shares must sum to 1")
        for name, dist in (
            ("delinquency_dist_male", self.delinquency_dist_male),
            ("delinquency_dist_female", self.delinquency_dist_female),
        ):
            _check_probs(name, dist, 6)
            if abs(sum(dist) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1")
        if len(self.kernel) != 6:
            raise ValueError("kernel must be 6x6")
        for row in self.kernel:
            _check_probs("kernel row", row, 6)
            if abs(sum(row) - 1.0) > 1e-9:
                raise ValueError("kernel rows must sum to 1")


@dataclass(frozen=True)
class PopulationConfig:
    """Bundle of the three planted models plus the master seed."""

    fi: FiPopulationConfig = field(default_factory=FiPopulationConfig)
    deposits: DepositMarketConfig = field(default_factory=DepositMarketConfig)
    credit: CreditPortfolioConfig = field(default_factory=CreditPortfolioConfig)
    seed: int = 20170101


def _ages_for_bands(bands: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    ages = np.zeros(bands.shape[0], dtype=np.float64)
    for b, (lo, hi) in enumerate(AGE_BAND_RANGES):
        idx = np.flatnonzero(bands == b)
        if idx.size:
            ages[idx] = rng.integers(lo, hi + 1, size=idx.size)
    return ages


def generate_fi_population(
    config: FiPopulationConfig, rng: np.random.Generator
) -> tuple[Dataset, dict]:
    """Banked microdata rows plus the unbanked count table.

    Returns ``(dataset, unbanked)`` where ``unbanked`` maps
    ``(period, age_band_label, gender)`` to a count. Draw order: cell sizes,
    banked counts, then per-column draws over all banked rows.
    """
    periods = config.periods
    genders = ("M", "F")
    cell_probs = []
    cells = []
    for period in periods:
        for band in range(_BANDS):
            for g, gender in enumerate(genders):
                share = config.gender_split if gender == "M" else 1.0 - config.gender_split
                cell_probs.append(config.band_shares[band] * share / len(periods))
                cells.append((period, band, gender))
    cell_sizes = rng.multinomial(config.n_individuals, cell_probs)
    banked_sizes = rng.binomial(cell_sizes, [config.banked_rate[band] for _, band, _ in cells])

    unbanked = {}
    period_idx = []
    band_idx = []
    gender_idx = []
    for (period, band, gender), total, banked in zip(cells, cell_sizes, banked_sizes):
        unbanked[(period, AGE_BAND_LABELS[band], gender)] = int(total - banked)
        period_idx.append(np.full(banked, periods.index(period), dtype=np.int64))
        band_idx.append(np.full(banked, band, dtype=np.int64))
        gender_idx.append(np.full(banked, genders.index(gender), dtype=np.int64))
    period_col = np.concatenate(period_idx) if period_idx else np.zeros(0, dtype=np.int64)
    bands = np.concatenate(band_idx) if band_idx else np.zeros(0, dtype=np.int64)
    gender_col = np.concatenate(gender_idx) if gender_idx else np.zeros(0, dtype=np.int64)
    n = bands.shape[0]

    ages = _ages_for_bands(bands, rng)
    ccards = rng.poisson(np.asarray(config.ccards_lambda)[bands]) if n else np.zeros(0)
    collateral = (
        rng.binomial(1, np.asarray(config.collateral_rate)[bands]) if n else np.zeros(0)
    )
    has_loan = rng.binomial(1, np.asarray(config.loan_rate)[bands]) if n else np.zeros(0)
    loans = has_loan * (1 + (rng.poisson(config.loan_extra_lambda, size=n) if n else 0))
    duration = np.zeros(n, dtype=np.float64)
    loan_idx = np.flatnonzero(loans > 0)
    if loan_idx.size:
        duration[loan_idx] = np.clip(
            np.round(np.exp(rng.normal(np.log(500.0), 0.8, size=loan_idx.size))), 30, 3900
        )
    nfi = 1 + (rng.poisson(np.asarray(config.fi_extra_lambda)[bands]) if n else np.zeros(0))
    nzs = rng.poisson(np.asarray(config.nzs_lambda)[bands]) if n else np.zeros(0)
    has_savings = rng.binomial(1, np.asarray(config.savings_rate)[bands]) if n else np.zeros(0)
    savings = has_savings * (
        1 + (rng.poisson(config.savings_extra_lambda, size=n) if n else 0)
    )

    schema = (
        ColumnSpec("Period", CATEGORICAL, levels=periods),
        ColumnSpec("Age", NUMERIC, units="years"),
        ColumnSpec("Gender", CATEGORICAL, levels=genders),
        ColumnSpec("nCCards", NUMERIC),
        ColumnSpec("hasCollateral", NUMERIC),
        ColumnSpec("nLoans", NUMERIC),
        ColumnSpec("loanMaxDuration", NUMERIC, units="days"),
        ColumnSpec("nFI", NUMERIC),
        ColumnSpec("nNZS", NUMERIC),
        ColumnSpec("nSavings", NUMERIC),
    )
    dataset = Dataset(
        schema,
        [
            period_col,
            ages,
            gender_col,
            np.asarray(ccards, dtype=np.float64),
            np.asarray(collateral, dtype=np.float64),
            np.asarray(loans, dtype=np.float64),
            duration,
            np.asarray(nfi, dtype=np.float64),
            np.asarray(nzs, dtype=np.float64),
            np.asarray(savings, dtype=np.float64),
        ],
        provenance="datagen:fi",
    )
    return dataset, unbanked


def planted_rate_curve(config: DepositMarketConfig, term_days) -> np.ndarray:
    """The planted smooth rate curve evaluated at the given terms."""
    b0, b1, b2, b3 = config.curve_beta
    t1, t2 = config.curve_tau
    t = np.asarray(term_days, dtype=np.float64)
    u1 = t / t1
    u2 = t / t2
    f1 = -np.expm1(-u1) / u1
    f2 = f1 - np.exp(-u1)
    f3 = -np.expm1(-u2) / u2 - np.exp(-u2)
    return b0 + b1 * f1 + b2 * f2 + b3 * f3


def generate_term_deposits(config: DepositMarketConfig, rng: np.random.Generator) -> Dataset:
    """Term-deposit microdata from the planted term structure.

    Draw order: type, period, currency, term, capital, rate noise.
    """
    n = config.n_deposits
    type_col = (rng.random(n) >= config.bank_share).astype(np.int64)  # 0 Bank, 1 Nonbank
    period_col = rng.integers(0, len(config.periods), size=n)
    currency_col = (rng.random(n) < config.pyg_share).astype(np.int64)  # 0 USD, 1 PYG
    terms = np.clip(
        np.round(np.exp(rng.normal(config.term_log_mean, config.term_log_sd, size=n))),
        config.term_range[0],
        config.term_range[1],
    )
    capital = np.clip(
        np.exp(rng.normal(config.capital_log_mean, config.capital_log_sd, size=n)),
        config.capital_range[0],
        config.capital_range[1],
    )
    rates = planted_rate_curve(config, terms)
    rates = rates + np.where(currency_col == 0, config.usd_shift, 0.0)
    rates = rates + np.where(type_col == 1, config.nonbank_shift, 0.0)
    rates = rates + config.period_shift_step * period_col
    rates = rates - config.capital_discount * np.log2(capital / DEPOSIT_INSURANCE_LIMIT)
    if config.rate_noise > 0 and n:
        rates = rates + rng.normal(0.0, config.rate_noise, size=n)
    rates = np.clip(rates, config.rate_range[0], config.rate_range[1])

    schema = (
        ColumnSpec("typeFI", CATEGORICAL, levels=("Bank", "Nonbank")),
        ColumnSpec("Period", CATEGORICAL, levels=config.periods),
        ColumnSpec("Currency", CATEGORICAL, levels=("USD", "PYG")),
        ColumnSpec("Capital", NUMERIC, units="PYG"),
        ColumnSpec("Term", NUMERIC, units="days"),
        ColumnSpec("InterestRate", NUMERIC, units="% p.a."),
    )
    return Dataset(
        schema,
        [type_col, period_col, currency_col, capital, terms, rates],
        provenance="datagen:deposits",
    )


def _delinquency_days(bands: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Days past due per band, clumped around each band's reporting point.

    Delinquency is reported at cycle points, so days concentrate instead of
    filling the band uniformly; tight clumps also give data-driven k-means
    states a recoverable ground truth.
    """
    days = np.zeros(bands.shape[0], dtype=np.float64)
    for b, (lo, hi) in enumerate(DELINQUENCY_BAND_RANGES):
        idx = np.flatnonzero(bands == b)
        if idx.size:
            center = (lo + hi) // 2
            spread = max(1, min((hi - lo) // 4, 30))
            days[idx] = rng.integers(center - spread, center + spread + 1, size=idx.size)
    return days


def generate_credit_cards(
    config: CreditPortfolioConfig, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Two yearly card datasets linked by card id.

    2021 delinquency bands are drawn from the planted kernel conditional on
    the 2020 band (grouped by band, bands ascending); debt follows the
    multiplicative walk; a Bernoulli(persistence) mask decides which 2020
    cards stay active, and fresh cards are appended to 2021.
    """
    n = config.n_cards
    genders = ("M", "F")
    gender_col = (rng.random(n) >= config.gender_split).astype(np.int64)  # 0 M, 1 F
    bands = np.zeros(n, dtype=np.int64)
    for g, dist in ((0, config.delinquency_dist_male), (1, config.delinquency_dist_female)):
        idx = np.flatnonzero(gender_col == g)
        if idx.size:
            bands[idx] = rng.choice(6, size=idx.size, p=np.asarray(dist))
    age_bands = rng.choice(_BANDS, size=n, p=np.asarray(config.band_shares)) if n else np.zeros(0, dtype=np.int64)
    ages = _ages_for_bands(age_bands, rng)
    del_2020 = _delinquency_days(bands, rng)
    debt_2020 = np.clip(
        np.exp(rng.normal(config.debt_log_mean, config.debt_log_sd, size=n)),
        config.debt_range[0],
        config.debt_range[1],
    )

    survivors = rng.random(n) < config.persistence
    bands_2021 = np.zeros(n, dtype=np.int64)
    kernel = np.asarray(config.kernel)
    for b in range(6):
        idx = np.flatnonzero(bands == b)
        if idx.size:
            bands_2021[idx] = rng.choice(6, size=idx.size, p=kernel[b])
    del_2021 = _delinquency_days(bands_2021, rng)
    debt_2021 = np.clip(
        debt_2020 * np.exp(rng.normal(config.debt_drift, config.debt_vol, size=n)),
        config.debt_range[0],
        config.debt_range[1],
    )

    n_new = int(round(config.new_card_rate * n))
    if n_new:
        mix = (
            config.gender_split * np.asarray(config.delinquency_dist_male)
            + (1 - config.gender_split) * np.asarray(config.delinquency_dist_female)
        )
        new_bands = rng.choice(6, size=n_new, p=mix / mix.sum())
        new_del = _delinquency_days(new_bands, rng)
        new_debt = np.clip(
            np.exp(rng.normal(config.debt_log_mean, config.debt_log_sd, size=n_new)),
            config.debt_range[0],
            config.debt_range[1],
        )

    schema_2020 = (
        ColumnSpec("CardId", NUMERIC),
        ColumnSpec("Gender", CATEGORICAL, levels=genders),
        ColumnSpec("Age2020", NUMERIC, units="years"),
        ColumnSpec("Debt2020", NUMERIC, units="PYG"),
        ColumnSpec("Delinquency2020", NUMERIC, units="days"),
    )
    data_2020 = Dataset(
        schema_2020,
        [np.arange(n, dtype=np.float64), gender_col, ages, debt_2020, del_2020],
        provenance="datagen:cards2020",
    )

    keep = np.flatnonzero(survivors)
    ids_2021 = np.concatenate([keep.astype(np.float64), np.arange(n, n + n_new, dtype=np.float64)])
    debt_col = np.concatenate([debt_2021[keep], new_debt]) if n_new else debt_2021[keep]
    del_col = np.concatenate([del_2021[keep], new_del]) if n_new else del_2021[keep]
    schema_2021 = (
        ColumnSpec("CardId", NUMERIC),
        ColumnSpec("Debt2021", NUMERIC, units="PYG"),
        ColumnSpec("Delinquency2021", NUMERIC, units="days"),
    )
    data_2021 = Dataset(schema_2021, [ids_2021, debt_col, del_col], provenance="datagen:cards2021")
    return data_2020, data_2021
