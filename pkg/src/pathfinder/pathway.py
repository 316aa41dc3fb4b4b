"""Assembled invasion pathways: identified, baseline or ground-truth trees."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


@dataclass(frozen=True)
class PathwayEdge:
    src: int
    dst: int
    tick: int | None = None
    case_id: str | None = None
    case_class: str | None = None
    pi: float | None = None
    entropy: float | None = None
    identifiability: float | None = None
    unique: bool | None = None


@dataclass
class PathwayTree:
    root: int
    edges: list = field(default_factory=list)  # PathwayEdge, in tick order for IPI trees
    method: str = "ipi"
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(e.src, e.dst) for e in self.edges}

    def timed_edges(self) -> set[tuple[int, int, int]]:
        return {(e.tick, e.src, e.dst) for e in self.edges if e.tick is not None}

    def parents(self) -> dict[int, int]:
        out = {}
        for e in self.edges:
            if e.dst in out:
                raise ValueError(f"node {e.dst} has more than one parent")
            out[e.dst] = e.src
        return out

    def is_arborescence(self) -> bool:
        """Single parent per non-root node and every node reaches the root."""
        try:
            parent = self.parents()
        except ValueError:
            return False
        if self.root in parent:
            return False
        for v in parent:
            seen = set()
            while v != self.root:
                if v in seen or v not in parent:
                    return False
                seen.add(v)
                v = parent[v]
        return True


IPI_HEADER = ["tick", "src", "dst", "case_id", "case_class", "pi", "entropy", "identifiability", "unique"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def save_ipi_tree(tree: PathwayTree, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(IPI_HEADER)
        for e in tree.edges:
            w.writerow([_fmt(getattr(e, k)) for k in IPI_HEADER])


def load_ipi_tree(path, root: int) -> PathwayTree:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != IPI_HEADER:
            raise ValueError(f"expected header {','.join(IPI_HEADER)}")
        edges = []
        for rec in reader:
            num = lambda k: float(rec[k]) if rec[k] != "" else None  # noqa: E731
            edges.append(PathwayEdge(
                int(rec["src"]), int(rec["dst"]), int(rec["tick"]), rec["case_id"], rec["case_class"],
                num("pi"), num("entropy"), num("identifiability"), rec["unique"] == "1",
            ))
    return PathwayTree(root, edges, "ipi")


def save_baseline_tree(tree: PathwayTree, path) -> None:
    """``src,dst`` CSV preceded by a ``#`` line naming method, root and parameters."""
    params = " ".join(f"{k}={tree.params[k]}" for k in sorted(tree.params))
    buf = io.StringIO()
    buf.write(f"# method={tree.method} root={tree.root} {params}".rstrip() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["src", "dst"])
    for e in sorted(tree.edges, key=lambda e: (e.dst, e.src)):
        w.writerow([e.src, e.dst])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def load_baseline_tree(path) -> PathwayTree:
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError("baseline tree file must start with a '# method=...' line")
        meta = dict(tok.split("=", 1) for tok in first[1:].split() if "=" in tok)
        reader = csv.reader(fh)
        if next(reader, None) != ["src", "dst"]:
            raise ValueError("expected header src,dst")
        edges = [PathwayEdge(int(a), int(b)) for a, b in reader]
    method = meta.pop("method", "unknown")
    root = int(meta.pop("root", -1))
    return PathwayTree(root, edges, method, meta)
