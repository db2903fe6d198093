"""Numeric feature discretization and the codebook needed to decode it.

Two strategy families produce the all-categorical representation the
marginal mechanisms require: explicit domain cut-offs mirroring an
institution's reporting taxonomy, and data-driven rules (equal-frequency,
uniform width, exact 1-D k-means). Every binned column follows one interval
convention: half-open ``[a, b)`` bins with the final bin closed at its
upper edge, which keeps encode/decode bijective on bins.

All operations are pure functions over immutable inputs; per-column
encoding could run in parallel, though the implementation is
single-threaded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .tabular import Dataset, TabularError

__all__ = [
    "BinningError",
    "BinningRule",
    "ColumnCodec",
    "Codebook",
    "EncodedDataset",
    "assign_codes",
    "explicit_bins",
    "equal_frequency_bins",
    "uniform_width_bins",
    "kmeans_1d",
    "log_pretransform",
    "encode_dataset",
    "drop_suppressed_rows",
    "write_encoded_csv",
    "read_encoded_csv",
]

EXPLICIT = "explicit_cutoffs"
EQUAL_FREQUENCY = "equal_frequency"
UNIFORM_WIDTH = "uniform_width"
KMEANS = "kmeans_1d"
_METHODS = (EXPLICIT, EQUAL_FREQUENCY, UNIFORM_WIDTH, KMEANS)


class BinningError(ValueError):
    """Invalid discretization rule or value outside the declared domain."""


@dataclass(frozen=True)
class BinningRule:
    """Per-column discretization recipe.

    ``cutoffs`` drives the explicit method (strictly increasing, final value
    is the closed domain maximum); ``k`` drives the data-driven methods.
    ``floor`` is decode-time metadata for explicit bins: the left edge of
    the open-below first bin. ``log_pretransform`` bins in natural-log space
    and is only legal on strictly positive features.
    """

    method: str
    cutoffs: tuple[float, ...] | None = None
    k: int | None = None
    log_pretransform: bool = False
    floor: float = 0.0

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise BinningError(f"unknown binning method '{self.method}'")
        if self.method == EXPLICIT:
            if not self.cutoffs:
                raise BinningError("explicit_cutoffs needs a cut-off list")
            object.__setattr__(self, "cutoffs", tuple(float(c) for c in self.cutoffs))
            arr = np.asarray(self.cutoffs)
            if arr.size > 1 and not np.all(np.diff(arr) > 0):
                raise BinningError("cut-offs must be strictly increasing")
            if self.floor >= arr[0]:
                raise BinningError(
                    f"floor {self.floor} must lie below the first cut-off {arr[0]}"
                )
        else:
            if self.k is None or self.k < 1:
                raise BinningError(f"{self.method} needs k >= 1")


@dataclass(frozen=True)
class ColumnCodec:
    """Decode metadata for one encoded column.

    Binned columns carry ``edges`` (``domain_size + 1`` strictly increasing
    boundaries, in log space when ``log_flag``); categorical columns carry
    their level labels. ``has_suppressed`` marks codebooks produced by the
    aggregate-seeded synthesiser, whose outputs may additionally contain the
    reserved code ``domain_size`` for unresolvable cells.
    """

    name: str
    kind: str  # "binned" | "categorical"
    edges: tuple[float, ...] | None = None
    labels: tuple[str, ...] | None = None
    log_flag: bool = False
    method: str = ""
    has_suppressed: bool = False

    def __post_init__(self) -> None:
        if self.kind == "binned":
            if not self.edges or len(self.edges) < 2:
                raise BinningError(f"column '{self.name}': needs at least two bin edges")
            object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
            if not np.all(np.diff(np.asarray(self.edges)) > 0):
                raise BinningError(f"column '{self.name}': edges must be strictly increasing")
        elif self.kind == "categorical":
            if not self.labels:
                raise BinningError(f"column '{self.name}': categorical codec needs labels")
            object.__setattr__(self, "labels", tuple(self.labels))
        else:
            raise BinningError(f"column '{self.name}': unknown codec kind '{self.kind}'")

    @property
    def domain_size(self) -> int:
        if self.kind == "binned":
            return len(self.edges) - 1
        return len(self.labels)

    @property
    def suppressed_code(self) -> int | None:
        return self.domain_size if self.has_suppressed else None


class Codebook:
    """Ordered collection of column codecs, addressable by name or index."""

    def __init__(self, codecs):
        self.codecs = tuple(codecs)
        names = [c.name for c in self.codecs]
        if len(set(names)) != len(names):
            raise BinningError("duplicate column names in codebook")
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self) -> int:
        return len(self.codecs)

    def __iter__(self):
        return iter(self.codecs)

    def __getitem__(self, key) -> ColumnCodec:
        if isinstance(key, str):
            try:
                return self.codecs[self._index[key]]
            except KeyError:
                raise BinningError(f"no codec for column '{key}'") from None
        return self.codecs[key]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise BinningError(f"no codec for column '{name}'") from None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.codecs)

    @property
    def domain_sizes(self) -> tuple[int, ...]:
        return tuple(c.domain_size for c in self.codecs)

    def with_suppressed(self) -> "Codebook":
        """Copy whose codecs all accept the reserved suppressed code."""
        return Codebook(replace(c, has_suppressed=True) for c in self.codecs)

    def to_json(self, path) -> None:
        doc = {}
        for c in self.codecs:
            entry: dict = {"kind": c.kind, "method": c.method, "log_flag": c.log_flag}
            if c.kind == "binned":
                entry["edges"] = list(c.edges)
            else:
                entry["labels"] = list(c.labels)
            if c.has_suppressed:
                entry["has_suppressed"] = True
            doc[c.name] = entry
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"columns": list(self.names), "codecs": doc}, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "Codebook":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        codecs = []
        for name in doc["columns"]:
            entry = doc["codecs"][name]
            codecs.append(
                ColumnCodec(
                    name=name,
                    kind=entry["kind"],
                    edges=tuple(entry.get("edges", ())) or None,
                    labels=tuple(entry.get("labels", ())) or None,
                    log_flag=entry.get("log_flag", False),
                    method=entry.get("method", ""),
                    has_suppressed=entry.get("has_suppressed", False),
                )
            )
        return cls(codecs)


class EncodedDataset:
    """All-categorical code matrix plus the codebook that decodes it."""

    def __init__(self, codes, codebook: Codebook, provenance: str = ""):
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim != 2:
            codes = codes.reshape(len(codes), len(codebook)) if codes.size else codes.reshape(0, len(codebook))
        if codes.shape[1] != len(codebook):
            raise BinningError(
                f"code matrix has {codes.shape[1]} columns, codebook has {len(codebook)}"
            )
        for j, codec in enumerate(codebook):
            if codes.shape[0] == 0:
                continue
            limit = codec.domain_size + (1 if codec.has_suppressed else 0)
            col = codes[:, j]
            if col.min() < 0 or col.max() >= limit:
                raise BinningError(
                    f"column '{codec.name}': code out of range (domain size {codec.domain_size})"
                )
        codes.setflags(write=False)
        self.codes = codes
        self.codebook = codebook
        self.provenance = provenance

    @property
    def n_records(self) -> int:
        return int(self.codes.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.codes.shape[1])

    def column_codes(self, name: str) -> np.ndarray:
        return self.codes[:, self.codebook.index_of(name)]

    def __len__(self) -> int:
        return self.n_records


def assign_codes(values, edges) -> np.ndarray:
    """Bin index per value for half-open ``[a, b)`` bins, final bin closed.

    Values below the first edge fall into bin 0 (the first bin is open
    below); values above the last edge clamp to the final bin, so callers
    that must reject out-of-domain values check before assigning.
    """
    edges = np.asarray(edges, dtype=np.float64)
    idx = np.searchsorted(edges, np.asarray(values, dtype=np.float64), side="right") - 1
    return np.clip(idx, 0, len(edges) - 2).astype(np.int64)


def explicit_bins(values, cutoffs, floor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Encode against explicit cut-offs; one bin per cut-off.

    Bin ``i >= 1`` is ``[cutoffs[i-1], cutoffs[i])``; bin 0 is open below
    its upper cut-off; the final bin is closed at the stated maximum.
    Values above the final cut-off are out of domain.
    """
    cut = np.asarray(cutoffs, dtype=np.float64)
    if cut.ndim != 1 or cut.size == 0:
        raise BinningError("cut-offs must be a non-empty list")
    if cut.size > 1 and not np.all(np.diff(cut) > 0):
        raise BinningError("cut-offs must be strictly increasing")
    vals = np.asarray(values, dtype=np.float64)
    if vals.size:
        above = vals > cut[-1]
        if np.any(above):
            i = int(np.flatnonzero(above)[0])
            raise BinningError(
                f"value {vals[i]:g} (row {i + 1}) above the final cut-off {cut[-1]:g}"
            )
    lo = floor
    if vals.size:
        lo = min(lo, float(vals.min()))
    if lo >= cut[0]:
        raise BinningError(f"floor {lo:g} must lie below the first cut-off {cut[0]:g}")
    edges = np.concatenate([[lo], cut])
    return assign_codes(vals, edges), edges


def equal_frequency_bins(values, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Quantile bins holding (near-)equal record counts.

    Boundaries follow the nearest-rank definition: bin ``i`` starts at
    sorted rank ``ceil(i*n/k)``. Ties go to the lower bin, so identical
    values never straddle a boundary; with heavy ties this can leave fewer
    than ``k`` non-empty bins, which are compressed out of the returned
    domain. Edges are ``[min, boundary values..., max]``.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise BinningError("equal-frequency binning needs at least one value")
    if k < 1:
        raise BinningError("k must be >= 1")
    n_distinct = np.unique(vals).size
    if k > n_distinct:
        raise BinningError(
            f"k={k} exceeds the {n_distinct} distinct values; use a smaller k"
        )

    n = vals.size
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    prelim = (np.arange(n, dtype=np.int64) * k) // n
    # first occurrence index of each distinct value; min prelim code within a
    # tie group is the code at its first occurrence (prelim is non-decreasing)
    firsts = np.concatenate([[0], np.flatnonzero(np.diff(sv)) + 1])
    group = np.searchsorted(firsts, np.arange(n), side="right") - 1
    merged = prelim[firsts[group]]
    used = np.unique(merged)
    codes_sorted = np.searchsorted(used, merged)
    m = used.size

    starts = np.searchsorted(codes_sorted, np.arange(1, m), side="left")
    boundaries = sv[starts]
    edges = np.concatenate([[sv[0]], boundaries, [sv[-1]]])
    if m == 1:
        if edges[-1] == edges[0]:
            edges[-1] = np.nextafter(edges[0], np.inf)
    elif edges[-1] == edges[-2]:
        # single-distinct-value top bin: place the boundary midway between
        # the previous bin's largest value and the maximum
        prev_last = sv[starts[-1] - 1]
        edges[-2] = 0.5 * (prev_last + edges[-1])

    return assign_codes(vals, edges), edges


def uniform_width_bins(values, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k equal-width bins spanning [min, max]."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise BinningError("uniform-width binning needs at least one value")
    if k < 1:
        raise BinningError("k must be >= 1")
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        hi = np.nextafter(lo, np.inf)
    edges = np.linspace(lo, hi, k + 1)
    return assign_codes(vals, edges), edges


def kmeans_1d(values, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Globally optimal 1-D k-means partition.

    Optimal 1-D clusters are contiguous on the sorted axis, so the exact
    optimum is found by dynamic programming over sorted distinct values
    (divide-and-conquer over the monotone split points), avoiding the
    initialization nondeterminism of Lloyd iteration. Minimizing
    within-cluster sum of squared deviations is equivalent to minimizing
    the size-normalized pairwise squared distances, which differ by a
    constant factor of two. Edges are placed at midpoints between adjacent
    clusters.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise BinningError("k-means binning needs at least one value")
    uniq, counts = np.unique(vals, return_counts=True)
    m = uniq.size
    if k < 1:
        raise BinningError("k must be >= 1")
    if k > m:
        raise BinningError(f"k={k} exceeds the {m} distinct values")

    # centering keeps the SSE prefix arithmetic well conditioned for
    # money-scale magnitudes; the optimal partition is shift invariant
    centered = uniq - uniq.mean()
    cw = np.concatenate([[0.0], np.cumsum(counts)])
    cs = np.concatenate([[0.0], np.cumsum(counts * centered)])
    cq = np.concatenate([[0.0], np.cumsum(counts * centered * centered)])

    def seg_cost(i_arr, j):
        # weighted SSE of distinct-value block [i, j], vector over i
        w = cw[j + 1] - cw[i_arr]
        s = cs[j + 1] - cs[i_arr]
        q = cq[j + 1] - cq[i_arr]
        return q - s * s / w

    # single-cluster layer: cost of the prefix block [0, j]
    prev = cq[1:] - cs[1:] * cs[1:] / cw[1:]
    split_at = np.zeros((k, m), dtype=np.int64)

    for layer in range(1, k):
        cur = np.full(m, np.inf)
        arg = np.zeros(m, dtype=np.int64)
        # divide and conquer over j using monotonicity of the best split
        stack = [(layer, m - 1, layer, m - 1)]
        while stack:
            jlo, jhi, ilo, ihi = stack.pop()
            if jlo > jhi:
                continue
            jm = (jlo + jhi) // 2
            cand = np.arange(ilo, min(ihi, jm) + 1)
            costs = prev[cand - 1] + seg_cost(cand, jm)
            best = int(np.argmin(costs))
            cur[jm] = costs[best]
            arg[jm] = cand[best]
            stack.append((jlo, jm - 1, ilo, int(cand[best])))
            stack.append((jm + 1, jhi, int(cand[best]), ihi))
        prev = cur
        split_at[layer] = arg

    # backtrack the first distinct-value index of every cluster
    bounds = [0] * k
    j = m - 1
    for layer in range(k - 1, 0, -1):
        i = int(split_at[layer][j])
        bounds[layer] = i
        j = i - 1

    cluster_starts = uniq[bounds]
    inner = 0.5 * (uniq[np.asarray(bounds[1:], dtype=np.int64) - 1] + cluster_starts[1:])
    top = uniq[-1]
    lo = uniq[0]
    if m == 1:
        top = np.nextafter(lo, np.inf)
    edges = np.concatenate([[lo], inner, [top]])
    return assign_codes(vals, edges), edges


def log_pretransform(values) -> np.ndarray:
    """Natural log, elementwise; rejects non-positive values by row."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size:
        bad = vals <= 0
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise BinningError(
                f"row {i + 1}: log pre-transform needs positive values, got {vals[i]:g}"
            )
    return np.log(vals)


def encode_dataset(dataset: Dataset, rules: dict) -> EncodedDataset:
    """Discretize every numeric column; categorical columns pass through.

    ``rules`` maps numeric column names to :class:`BinningRule`. The
    returned codebook records edges, log flags and level labels, so
    decoding and re-encoding round-trip on bins. Record count and column
    order are preserved.
    """
    code_columns = []
    codecs = []
    for spec in dataset.schema:
        col = dataset.column(spec.name)
        if spec.is_categorical:
            code_columns.append(col.astype(np.int64))
            codecs.append(ColumnCodec(name=spec.name, kind="categorical", labels=spec.levels))
            continue
        rule = rules.get(spec.name)
        if rule is None:
            raise BinningError(f"numeric column '{spec.name}' has no binning rule")
        vals = col
        try:
            if rule.log_pretransform:
                vals = log_pretransform(vals)
            if rule.method == EXPLICIT:
                codes, edges = explicit_bins(vals, rule.cutoffs, floor=rule.floor)
            elif rule.method == EQUAL_FREQUENCY:
                codes, edges = equal_frequency_bins(vals, rule.k)
            elif rule.method == UNIFORM_WIDTH:
                codes, edges = uniform_width_bins(vals, rule.k)
            else:
                codes, edges = kmeans_1d(vals, rule.k)
        except BinningError as exc:
            raise BinningError(f"column '{spec.name}': {exc}") from None
        code_columns.append(codes)
        codecs.append(
            ColumnCodec(
                name=spec.name,
                kind="binned",
                edges=tuple(edges),
                log_flag=rule.log_pretransform,
                method=rule.method,
            )
        )
    codes = (
        np.column_stack(code_columns)
        if code_columns and len(code_columns[0])
        else np.zeros((0, len(codecs)), dtype=np.int64)
    )
    return EncodedDataset(codes, Codebook(codecs), provenance=dataset.provenance)


def drop_suppressed_rows(encoded: EncodedDataset) -> tuple[EncodedDataset, int]:
    """Remove rows containing any reserved suppressed code.

    Returns the cleaned dataset (plain codebook, no suppression flags) and
    the number of rows dropped, so suppression stays visible in reports.
    """
    mask = np.ones(encoded.n_records, dtype=bool)
    for j, codec in enumerate(encoded.codebook):
        if codec.has_suppressed:
            mask &= encoded.codes[:, j] != codec.suppressed_code
    clean = Codebook(replace(c, has_suppressed=False) for c in encoded.codebook)
    kept = encoded.codes[mask]
    return EncodedDataset(kept, clean, encoded.provenance), int((~mask).sum())


def write_encoded_csv(encoded: EncodedDataset, path) -> None:
    """Persist the code matrix as integer CSV with a header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(encoded.codebook.names) + "\n")
        for row in encoded.codes:
            fh.write(",".join(str(int(c)) for c in row) + "\n")


def read_encoded_csv(path, codebook: Codebook) -> EncodedDataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != codebook.names:
            raise TabularError(
                f"{path}: header mismatch: expected {list(codebook.names)}, found {header}"
            )
        rows = [line.strip().split(",") for line in fh if line.strip()]
    codes = (
        np.asarray(rows, dtype=np.int64)
        if rows
        else np.zeros((0, len(codebook)), dtype=np.int64)
    )
    return EncodedDataset(codes, codebook, provenance=str(path))
