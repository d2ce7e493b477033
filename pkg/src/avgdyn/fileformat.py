"""Plain-text graph files.

Layout::

    n m k
    u v w        (m lines, 0-based endpoints, decimal weight)
    b_0 ... b_{n-1}   (ground-truth block per vertex, or a single '-')

``k`` is 0 when no partition is stored.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from .graph import GraphError, Partition, WeightedGraph


class GraphFormatError(GraphError):
    pass


def format_weight(w: float) -> str:
    return format(float(w), ".17g")


def dumps(graph: WeightedGraph, partition: Partition | None = None) -> str:
    edges = list(graph.edges())
    k = 0 if partition is None else partition.k
    lines = [f"{graph.n} {len(edges)} {k}"]
    lines.extend(f"{u} {v} {format_weight(w)}" for u, v, w in edges)
    if partition is None:
        lines.append("-")
    else:
        if partition.n != graph.n:
            raise ValueError("partition size does not match graph")
        lines.append(" ".join(str(int(b)) for b in partition.assignment))
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[WeightedGraph, Partition | None]:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise GraphFormatError("empty graph file")
    try:
        n, m, k = (int(x) for x in rows[0])
    except ValueError as exc:
        raise GraphFormatError(f"bad header {' '.join(rows[0])!r}: expected 'n m k'") from exc
    if len(rows) != m + 2:
        raise GraphFormatError(f"header announces {m} edges but file has {len(rows) - 2} edge lines")
    edges = []
    for lineno, row in enumerate(rows[1:m + 1], start=2):
        if len(row) != 3:
            raise GraphFormatError(f"line {lineno}: expected 'u v w'")
        try:
            edges.append((int(row[0]), int(row[1]), float(row[2])))
        except ValueError as exc:
            raise GraphFormatError(f"line {lineno}: {exc}") from exc
    try:
        graph = WeightedGraph(n, edges)
    except GraphError as exc:
        raise GraphFormatError(str(exc)) from exc
    last = rows[-1]
    if last == ["-"]:
        return graph, None
    if len(last) != n:
        raise GraphFormatError(f"partition line has {len(last)} entries, expected {n}")
    try:
        partition = Partition([int(b) for b in last], k if k > 0 else None)
    except ValueError as exc:
        raise GraphFormatError(f"bad partition: {exc}") from exc
    return graph, partition


def read_graph(path) -> tuple[WeightedGraph, Partition | None]:
    return loads(Path(path).read_text())


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_graph(path, graph: WeightedGraph, partition: Partition | None = None) -> None:
    atomic_write_text(path, dumps(graph, partition))
