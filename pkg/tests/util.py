"""Shared fixture builders for the test suite."""

import numpy as np

from synthbank.binning import Codebook, ColumnCodec, EncodedDataset


def make_encoded(codes, domain_sizes, names=None) -> EncodedDataset:
    """Wrap a code matrix as an EncodedDataset with categorical codecs."""
    codes = np.asarray(codes, dtype=np.int64)
    if codes.ndim == 1:
        codes = codes[:, None]
    d = codes.shape[1]
    names = names or [f"a{j}" for j in range(d)]
    codecs = [
        ColumnCodec(
            name=names[j],
            kind="categorical",
            labels=tuple(f"v{i}" for i in range(domain_sizes[j])),
        )
        for j in range(d)
    ]
    return EncodedDataset(codes, Codebook(codecs))


def tv_distance(p, q) -> float:
    """Total-variation distance between two count/probability tables."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.sum() > 0:
        p = p / p.sum()
    if q.sum() > 0:
        q = q / q.sum()
    return 0.5 * float(np.abs(p - q).sum())
