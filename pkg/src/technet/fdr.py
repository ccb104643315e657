"""Benjamini-Hochberg link selection and the binary directed technology network.

Two significance bases are supported when turning a p-value matrix into an
adjacency matrix:

``percentile``
    BH on the plain null-exceedance percentile counts/K. A link strictly above
    every null replicate gets p = 0 and is always retained. This is the
    default: it is the rank statistic the null ensemble actually measures, and
    it keeps a handful of genuinely extreme links detectable at moderate K.

``addone``
    BH on the pseudo-count p-values (1 + counts)/(K + 1). Conservative: the
    floor 1/(K+1) can exceed the BH line entirely, in which case the network
    is empty no matter how extreme the links are.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .nullmodel import PvalueMatrix

SIGNIFICANCE_BASES = ("percentile", "addone")


@dataclass(frozen=True, eq=False)
class TechnologyNetwork:
    """Directed binary adjacency over the field set; entry (i, j) = link i -> j."""

    year: int
    fields: tuple[str, ...]
    adjacency: np.ndarray
    significance_level: float

    def __post_init__(self) -> None:
        n = len(self.fields)
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be square over the field set")
        if self.adjacency.dtype != np.uint8:
            object.__setattr__(self, "adjacency", self.adjacency.astype(np.uint8))

    @property
    def n_links(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> list[tuple[str, str]]:
        src, dst = np.nonzero(self.adjacency)
        return sorted((self.fields[s], self.fields[t]) for s, t in zip(src, dst))


def bh_fdr(pvalues: Sequence[tuple[Hashable, float]], q: float) -> set[Hashable]:
    """Benjamini-Hochberg step-up selection over (key, p-value) pairs.

    Sorts ascending, finds the largest rank k with p_(k) <= k*q/m and rejects
    ranks 1..k. Tied p-values straddle no boundary: if any member of a tie
    group qualifies at its highest rank, the whole group is included.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly between 0 and 1")
    items = list(pvalues)
    if not items:
        raise ValueError("empty p-value list")
    m = len(items)
    order = sorted(range(m), key=lambda i: (items[i][1], i))
    k_max = 0
    for rank, idx in enumerate(order, start=1):
        if items[idx][1] <= rank * q / m:
            k_max = rank
    return {items[idx][0] for idx in order[:k_max]}


def build_adjacency(
    p: PvalueMatrix,
    q: float = 0.05,
    include_diagonal: bool = False,
    basis: str = "percentile",
) -> TechnologyNetwork:
    """Build the binary directed network of BH-significant links.

    The tested family excludes structurally impossible links (rows whose
    source field had zero base ubiquity) and, by default, the diagonal, whose
    entries measure persistence rather than cross-field catalysis.
    """
    if basis not in SIGNIFICANCE_BASES:
        raise ValueError(f"basis must be one of {SIGNIFICANCE_BASES}")
    n = len(p.fields)
    if basis == "percentile":
        values = p.exceed_counts / p.n_replicates
    else:
        values = p.pvalues
    tested = np.repeat(p.source_active[:, None], n, axis=1)
    if not include_diagonal:
        np.fill_diagonal(tested, False)

    adjacency = np.zeros((n, n), dtype=np.uint8)
    pairs = [
        ((int(i), int(j)), float(values[i, j]))
        for i, j in zip(*np.nonzero(tested))
    ]
    if pairs:
        for i, j in bh_fdr(pairs, q):
            adjacency[i, j] = 1
    return TechnologyNetwork(
        year=p.base_year, fields=p.fields, adjacency=adjacency, significance_level=q
    )


def network_to_text(net: TechnologyNetwork) -> str:
    """Directed edge list 'year,source_field,target_field', lexicographic order."""
    lines = [f"{net.year},{src},{dst}" for src, dst in net.edges()]
    return "\n".join(lines) + ("\n" if lines else "")


def network_from_text(
    text: str, fields: Sequence[str], *, year: int | None = None, q: float = 0.05
) -> TechnologyNetwork:
    field_index = {f: i for i, f in enumerate(fields)}
    n = len(fields)
    adjacency = np.zeros((n, n), dtype=np.uint8)
    for raw in text.splitlines():
        if not raw.strip():
            continue
        y, src, dst = raw.split(",")
        y_int = int(y)
        if year is None:
            year = y_int
        elif y_int != year:
            raise ValueError(f"mixed years {year} and {y_int} in network text")
        adjacency[field_index[src], field_index[dst]] = 1
    if year is None:
        raise ValueError("year required to parse an empty network file")
    return TechnologyNetwork(
        year=year, fields=tuple(fields), adjacency=adjacency, significance_level=q
    )
