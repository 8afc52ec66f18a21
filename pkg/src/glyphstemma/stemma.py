"""Distance-based trees: neighbor joining (unrooted), UPGMA (rooted), Newick I/O."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


@dataclass
class PhyloTree:
    """Undirected weighted tree; ``root`` is set only for rooted trees.

    ``adj[node][neighbor]`` holds the branch length. Leaves carry labels.
    """

    adj: dict[int, dict[int, float]] = field(default_factory=dict)
    labels: dict[int, str] = field(default_factory=dict)
    rooted: bool = False
    root: int | None = None
    heights: dict[int, float] = field(default_factory=dict)

    def add_node(self, label: str | None = None) -> int:
        node = len(self.adj)
        while node in self.adj:
            node += 1
        self.adj[node] = {}
        if label is not None:
            self.labels[node] = label
        return node

    def connect(self, a: int, b: int, length: float) -> None:
        self.adj[a][b] = length
        self.adj[b][a] = length

    @property
    def leaves(self) -> list[str]:
        return sorted(self.labels.values())

    def leaf_node(self, label: str) -> int:
        for n, lab in self.labels.items():
            if lab == label:
                return n
        raise KeyError(label)

    def _min_leaf(self, node: int, parent: int | None, memo: dict) -> str:
        key = (node, parent)
        if key not in memo:
            best = self.labels.get(node)
            for nb in self.adj[node]:
                if nb != parent:
                    sub = self._min_leaf(nb, node, memo)
                    best = sub if best is None or sub < best else best
            memo[key] = best
        return memo[key]

    def path_distances(self) -> dict[tuple[str, str], float]:
        out = {}
        leaves = [n for n in self.labels]
        for src in leaves:
            dist = {src: 0.0}
            stack = [src]
            while stack:
                node = stack.pop()
                for nb, w in self.adj[node].items():
                    if nb not in dist:
                        dist[nb] = dist[node] + w
                        stack.append(nb)
            for dst in leaves:
                out[(self.labels[src], self.labels[dst])] = dist[dst]
        return out

    def splits(self) -> set[frozenset[str]]:
        """Nontrivial leaf bipartitions, each stored as the side without the smallest label."""
        all_leaves = frozenset(self.labels.values())
        smallest = min(all_leaves)
        out = set()
        memo: dict = {}

        def below(node, parent):
            key = (node, parent)
            if key not in memo:
                s = {self.labels[node]} if node in self.labels else set()
                for nb in self.adj[node]:
                    if nb != parent:
                        s |= below(nb, node)
                memo[key] = frozenset(s)
            return memo[key]

        for a in self.adj:
            for b in self.adj[a]:
                side = below(b, a)
                if 1 < len(side) < len(all_leaves) - 1:
                    out.add(side if smallest not in side else all_leaves - side)
        return out


def robinson_foulds(t1: PhyloTree, t2: PhyloTree) -> int:
    if set(t1.labels.values()) != set(t2.labels.values()):
        raise ValueError("trees have different leaf sets")
    return len(t1.splits() ^ t2.splits())


def _check_matrix(m) -> tuple[list[str], np.ndarray]:
    labels = list(m.labels)
    D = np.asarray(m.values, dtype=np.float64)
    if len(labels) < 2:
        raise ValueError("need at least two taxa")
    if D.shape != (len(labels), len(labels)):
        raise ValueError("matrix shape does not match labels")
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate labels")
    if not np.all(np.isfinite(D)):
        raise ValueError("non-finite distances")
    scale = max(1.0, float(np.abs(D).max()))
    if np.any(np.abs(D - D.T) > 1e-9 * scale) or np.any(np.abs(np.diag(D)) > 1e-9 * scale):
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    return labels, (D + D.T) / 2.0


def _pick_pair(scores: np.ndarray, keys: list[str]) -> tuple[int, int]:
    """Minimum off-diagonal entry; near-ties go to the lexicographically smallest key pair."""
    n = len(keys)
    iu = np.triu_indices(n, k=1)
    vals = scores[iu]
    best = vals.min()
    tol = TIE_TOL * max(1.0, abs(float(best)))
    cands = [(i, j) for i, j, v in zip(iu[0], iu[1], vals) if v <= best + tol]
    return min(cands, key=lambda p: tuple(sorted((keys[p[0]], keys[p[1]]))))


def neighbor_joining(m) -> PhyloTree:
    labels, D = _check_matrix(m)
    tree = PhyloTree(rooted=False)
    nodes = [tree.add_node(lab) for lab in labels]
    keys = list(labels)  # smallest leaf label under each active node
    D = D.copy()
    while len(nodes) > 2:
        n = len(nodes)
        r = D.sum(axis=1)
        Q = (n - 2) * D - r[:, None] - r[None, :]
        i, j = _pick_pair(Q, keys)
        li = 0.5 * D[i, j] + (r[i] - r[j]) / (2.0 * (n - 2))
        lj = D[i, j] - li
        new = tree.add_node()
        for node, length in ((nodes[i], li), (nodes[j], lj)):
            if length < 0:
                log.warning("negative branch length %.6g clamped to 0", length)
                length = 0.0
            tree.connect(new, node, length)
        du = 0.5 * (D[i] + D[j] - D[i, j])
        keep = [x for x in range(n) if x not in (i, j)]
        D2 = np.empty((n - 1, n - 1))
        D2[:-1, :-1] = D[np.ix_(keep, keep)]
        D2[-1, :-1] = D2[:-1, -1] = du[keep]
        D2[-1, -1] = 0.0
        nodes = [nodes[x] for x in keep] + [new]
        keys = [keys[x] for x in keep] + [min(keys[i], keys[j])]
        D = D2
    length = D[0, 1]
    if length < 0:
        log.warning("negative branch length %.6g clamped to 0", length)
        length = 0.0
    tree.connect(nodes[0], nodes[1], float(length))
    return tree


def upgma(m) -> PhyloTree:
    labels, D = _check_matrix(m)
    tree = PhyloTree(rooted=True)
    nodes = [tree.add_node(lab) for lab in labels]
    for nd in nodes:
        tree.heights[nd] = 0.0
    sizes = [1] * len(nodes)
    keys = list(labels)
    D = D.copy()
    while len(nodes) > 1:
        n = len(nodes)
        i, j = _pick_pair(D, keys)
        h = D[i, j] / 2.0
        new = tree.add_node()
        tree.heights[new] = h
        for x in (i, j):
            tree.connect(new, nodes[x], max(0.0, h - tree.heights[nodes[x]]))
        merged = (sizes[i] * D[i] + sizes[j] * D[j]) / (sizes[i] + sizes[j])
        keep = [x for x in range(n) if x not in (i, j)]
        D2 = np.empty((n - 1, n - 1))
        D2[:-1, :-1] = D[np.ix_(keep, keep)]
        D2[-1, :-1] = D2[:-1, -1] = merged[keep]
        D2[-1, -1] = 0.0
        nodes = [nodes[x] for x in keep] + [new]
        sizes = [sizes[x] for x in keep] + [sizes[i] + sizes[j]]
        keys = [keys[x] for x in keep] + [min(keys[i], keys[j])]
        D = D2
    tree.root = nodes[0]
    return tree


def _fmt(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def to_newick(t: PhyloTree) -> str:
    memo: dict = {}

    def render(node: int, parent: int | None) -> str:
        kids = [nb for nb in t.adj[node] if nb != parent]
        if not kids:
            return t.labels[node]
        kids.sort(key=lambda nb: t._min_leaf(nb, node, memo))
        inner = ",".join(f"{render(nb, node)}:{_fmt(t.adj[node][nb])}" for nb in kids)
        return f"({inner})" + (t.labels[node] if node in t.labels else "")

    if t.rooted:
        if t.root is None:
            raise ValueError("rooted tree without a root")
        return render(t.root, None) + ";"

    leaf_nodes = sorted((lab, n) for n, lab in t.labels.items())
    first = leaf_nodes[0][1]
    if len(leaf_nodes) == 2 and len(t.adj) == 2:
        other = leaf_nodes[1][1]
        half = _fmt(t.adj[first][other] / 2.0)
        return f"({leaf_nodes[0][0]}:{half},{leaf_nodes[1][0]}:{half});"
    anchor = next(iter(t.adj[first]))
    return render(anchor, None) + ";"


def parse_newick(text: str, rooted: bool = True) -> PhyloTree:
    s = text.strip()
    if not s.endswith(";"):
        raise ValueError("Newick string must end with ';'")
    s = s[:-1]
    tree = PhyloTree(rooted=rooted)
    pos = 0

    def read_name() -> str:
        nonlocal pos
        start = pos
        while pos < len(s) and s[pos] not in ",():;":
            pos += 1
        return s[start:pos].strip()

    def read_length() -> float:
        nonlocal pos
        if pos < len(s) and s[pos] == ":":
            pos += 1
            return float(read_name())
        return 0.0

    def subtree() -> int:
        nonlocal pos
        node = tree.add_node()
        if pos < len(s) and s[pos] == "(":
            pos += 1
            while True:
                child = subtree()
                tree.connect(node, child, read_length())
                if s[pos] == ",":
                    pos += 1
                elif s[pos] == ")":
                    pos += 1
                    break
                else:
                    raise ValueError(f"unexpected {s[pos]!r} at {pos}")
            name = read_name()
            if name:
                tree.labels[node] = name
        else:
            name = read_name()
            if not name:
                raise ValueError(f"unnamed leaf at {pos}")
            tree.labels[node] = name
        return node

    root = subtree()
    if pos != len(s):
        raise ValueError(f"trailing characters at {pos}")
    if rooted:
        tree.root = root
    elif len(tree.adj[root]) == 2 and root not in tree.labels:
        a, b = tree.adj[root]
        tree.connect(a, b, tree.adj[root][a] + tree.adj[root][b])
        del tree.adj[a][root], tree.adj[b][root], tree.adj[root]
    return tree
