"""Data model of an M-layer hierarchy and assembly of its layer matrices.

Layer 1 is the physical layer. The nodes of layer ``l`` are partitioned into
groups, and group ``p`` of layer ``l`` is the subordinate group of node ``p``
of layer ``l + 1``. The top layer holds a single group. Nodes are numbered
in ascending group order, so every node's physical-layer descendants occupy a
contiguous index range.

All indices are 0-based here; scenario files use 1-based indices and are
converted on load (see :mod:`hiercon.scenario`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidSpecError, StructuralError

SUM_TOL = 1e-12
CHECK_TOL = 1e-12


@dataclass(frozen=True)
class GroupSpec:
    """One intra-layer group: ``size`` nodes joined by undirected ``edges``.

    ``edges`` holds 0-based pairs ``(q, r)`` with ``q < r``. ``weights`` is
    either empty (all edges weigh 1) or has one positive entry per edge.
    """

    size: int
    edges: tuple = ()
    weights: tuple = ()

    def edge_weights(self) -> tuple:
        return self.weights if self.weights else (1.0,) * len(self.edges)


@dataclass(frozen=True)
class LayerSpec:
    """Groups of one layer plus the collecting rows used by their superiors.

    ``collecting`` is ``None`` for the weight-proportional default, otherwise
    one row per group (the top layer never uses it).
    """

    groups: tuple
    collecting: Optional[tuple] = None

    @property
    def node_count(self) -> int:
        return sum(g.size for g in self.groups)


@dataclass(frozen=True)
class HierarchySpec:
    layers: tuple
    physical_weights: tuple
    hop_delays: tuple = ()

    @property
    def M(self) -> int:
        return len(self.layers)

    @property
    def n_physical(self) -> int:
        return len(self.physical_weights)

    def node_counts(self) -> list:
        return [layer.node_count for layer in self.layers]

    def with_delays(self, hop_delays) -> "HierarchySpec":
        return HierarchySpec(self.layers, self.physical_weights, tuple(float(d) for d in hop_delays))

    def with_collecting(self, collecting) -> "HierarchySpec":
        """Return a copy with per-layer collecting rows replaced.

        ``collecting`` is a sequence with one entry per layer (``None`` keeps
        the default for that layer).
        """
        layers = tuple(
            LayerSpec(layer.groups, None if rows is None else tuple(tuple(float(v) for v in r) for r in rows))
            for layer, rows in zip(self.layers, collecting)
        )
        return HierarchySpec(layers, self.physical_weights, self.hop_delays)


@dataclass(frozen=True)
class Violation:
    """A single failed invariant. ``layer`` and ``group`` are 1-based."""

    field: str
    message: str
    layer: Optional[int] = None
    group: Optional[int] = None

    def __str__(self) -> str:
        where = []
        if self.layer is not None:
            where.append(f"layer {self.layer}")
        if self.group is not None:
            where.append(f"group {self.group}")
        loc = ", ".join(where)
        return f"{loc + ': ' if loc else ''}{self.field}: {self.message}"


def _is_connected(size: int, edges) -> bool:
    if size <= 1:
        return True
    parent = list(range(size))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    components = size
    for q, r in edges:
        a, b = find(q), find(r)
        if a != b:
            parent[a] = b
            components -= 1
    return components == 1


def _validate_group(g: GroupSpec, layer: int, group: int) -> list:
    out = []
    if not isinstance(g.size, (int, np.integer)) or g.size < 1:
        return [Violation("size", f"group size must be a positive integer, got {g.size!r}", layer, group)]
    in_range = True
    seen = set()
    for q, r in g.edges:
        if q == r:
            out.append(Violation("edges", f"self-loop on node {q + 1}", layer, group))
            in_range = False
        elif not (0 <= q < g.size and 0 <= r < g.size):
            out.append(Violation("edges", f"edge ({q + 1}, {r + 1}) out of range 1..{g.size}", layer, group))
            in_range = False
        else:
            key = (min(q, r), max(q, r))
            if key in seen:
                out.append(Violation("edges", f"duplicate edge ({key[0] + 1}, {key[1] + 1})", layer, group))
            seen.add(key)
    if g.weights:
        if len(g.weights) != len(g.edges):
            out.append(Violation("edge_weights", f"{len(g.weights)} weights for {len(g.edges)} edges", layer, group))
        for w in g.weights:
            if not (math.isfinite(w) and w > 0):
                out.append(Violation("edge_weights", f"edge weight {w} is not positive", layer, group))
    if in_range and not _is_connected(g.size, g.edges):
        out.append(Violation("edges", "group disconnected", layer, group))
    return out


def validate(spec: HierarchySpec) -> list:
    """Return every violated invariant of ``spec``; an empty list means valid."""
    out = []
    M = spec.M
    if M < 1:
        return [Violation("layers", "at least one layer is required")]
    if len(spec.hop_delays) != M - 1:
        out.append(Violation("hop_delays", f"expected {M - 1} hop delays, got {len(spec.hop_delays)}"))
    for i, d in enumerate(spec.hop_delays):
        if not (math.isfinite(d) and d >= 0):
            out.append(Violation("hop_delays", f"delay d{i + 1} = {d} must be finite and nonnegative"))

    for li, layer in enumerate(spec.layers):
        lnum = li + 1
        if not layer.groups:
            out.append(Violation("groups", "layer has no groups", lnum))
            continue
        for gi, g in enumerate(layer.groups):
            out.extend(_validate_group(g, lnum, gi + 1))
        if li == M - 1:
            if len(layer.groups) != 1:
                out.append(Violation("groups", f"top layer must have exactly one group, got {len(layer.groups)}", lnum))
        else:
            upper = spec.layers[li + 1].node_count
            if len(layer.groups) != upper:
                out.append(Violation(
                    "groups", f"{len(layer.groups)} groups but layer {lnum + 1} has {upper} nodes", lnum))
            if layer.collecting is not None:
                out.extend(_validate_collecting(layer, lnum))

    n1 = spec.layers[0].node_count if spec.layers[0].groups else 0
    if len(spec.physical_weights) != n1:
        out.append(Violation(
            "physical_weights", f"length {len(spec.physical_weights)} does not match {n1} physical nodes"))
    for i, a in enumerate(spec.physical_weights):
        if not (math.isfinite(a) and a > 0):
            out.append(Violation("physical_weights", f"weight a{i + 1} = {a} must be positive"))
    return out


def _validate_collecting(layer: LayerSpec, lnum: int) -> list:
    out = []
    rows = layer.collecting
    if len(rows) != len(layer.groups):
        return [Violation("collecting", f"{len(rows)} rows for {len(layer.groups)} groups", lnum)]
    for gi, (row, g) in enumerate(zip(rows, layer.groups)):
        if len(row) != g.size:
            out.append(Violation("collecting", f"row length {len(row)} != group size {g.size}", lnum, gi + 1))
            continue
        if any(not math.isfinite(v) or v < 0 for v in row):
            out.append(Violation("collecting", "negative entry in collecting row", lnum, gi + 1))
        total = math.fsum(row)
        if abs(total - 1.0) > SUM_TOL:
            out.append(Violation("collecting", f"collecting row sums to {total:.12g}", lnum, gi + 1))
    return out


def require_valid(spec: HierarchySpec) -> None:
    violations = validate(spec)
    if violations:
        raise InvalidSpecError(violations)


def group_laplacian(g: GroupSpec) -> np.ndarray:
    """Weighted graph Laplacian ``D_out - A`` of one group."""
    L = np.zeros((g.size, g.size))
    for (q, r), w in zip(g.edges, g.edge_weights()):
        if not (0 <= q < g.size and 0 <= r < g.size) or q == r:
            raise StructuralError(f"edge ({q + 1}, {r + 1}) invalid for group of size {g.size}")
        L[q, r] -= w
        L[r, q] -= w
        L[q, q] += w
        L[r, r] += w
    return L


def _block_diag(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    m = sum(b.shape[1] for b in blocks)
    out = np.zeros((n, m))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


def _aggregate(spec: HierarchySpec, leaf_values) -> list:
    values = [np.asarray(leaf_values, dtype=float)]
    for layer in spec.layers[:-1]:
        below = values[-1]
        up = []
        start = 0
        for g in layer.groups:
            up.append(below[start:start + g.size].sum())
            start += g.size
        values.append(np.array(up))
    return values


def physical_numbers(spec: HierarchySpec) -> list:
    """Leaf counts ``n^(l)`` for every layer, as a list of integer arrays."""
    return [v.astype(int) for v in _aggregate(spec, np.ones(spec.n_physical))]


def physical_weights_all(spec: HierarchySpec) -> list:
    """Aggregated physical weights ``a^(l)`` for every layer."""
    a = np.asarray(spec.physical_weights, dtype=float)
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise DomainError("physical weights must be positive")
    return _aggregate(spec, a)


def leaf_ranges(spec: HierarchySpec) -> list:
    """Per layer, the ``(start, stop)`` physical-index range under each node."""
    counts = physical_numbers(spec)
    out = []
    for n in counts:
        stops = np.cumsum(n)
        starts = stops - n
        out.append([(int(s), int(e)) for s, e in zip(starts, stops)])
    return out


def default_collecting(spec: HierarchySpec, l: int, weights=None) -> tuple:
    """Weight-proportional collecting rows for layer ``l`` (0-based)."""
    a = (weights or physical_weights_all(spec))[l]
    rows = []
    start = 0
    for g in spec.layers[l].groups:
        part = a[start:start + g.size]
        rows.append(tuple(part / part.sum()))
        start += g.size
    return tuple(rows)


@dataclass(frozen=True, eq=False)
class LayerMatrices:
    """Assembled matrices of a hierarchy; list index ``l`` is layer ``l + 1``.

    ``broadcast[l]`` and ``collect[l]`` link layer ``l + 1`` to ``l + 2``.
    ``effective[l]`` is the N1 x N1 matrix through which layer ``l + 1``
    acts on the physical states; ``total`` is their sum.
    """

    spec: HierarchySpec
    laplacians: list
    inv_weights: list
    broadcast: list
    collect: list
    effective: list
    total: np.ndarray
    physical_numbers: list
    physical_weights: list
    K: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.effective)

    @property
    def N(self) -> int:
        return self.total.shape[0]

    def equivalent(self, l: int) -> np.ndarray:
        """``K^(l) L_D^(l)`` for 0-based layer ``l``."""
        return self.inv_weights[l] @ self.laplacians[l]

    def broadcast_chain(self, l: int) -> np.ndarray:
        """``B^(1) ... B^(l)``: N1 x N^(l+1) (0-based ``l`` exclusive upper layer)."""
        out = np.eye(self.N)
        for b in self.broadcast[:l]:
            out = out @ b
        return out

    def collect_chain(self, l: int) -> np.ndarray:
        """``C^(l) ... C^(1)``: N^(l+1) x N1."""
        out = np.eye(self.N)
        for c in self.collect[:l]:
            out = c @ out
        return out


def assemble(spec: HierarchySpec) -> LayerMatrices:
    """Build every layer matrix of ``spec``. Raises InvalidSpecError if invalid."""
    require_valid(spec)
    weights = physical_weights_all(spec)
    numbers = physical_numbers(spec)
    M = spec.M

    laplacians = [_block_diag([group_laplacian(g) for g in layer.groups]) for layer in spec.layers]
    inv_weights = [np.diag(1.0 / a) for a in weights]

    broadcast, collect = [], []
    for l in range(M - 1):
        groups = spec.layers[l].groups
        broadcast.append(_block_diag([np.ones((g.size, 1)) for g in groups]))
        rows = spec.layers[l].collecting
        if rows is None:
            rows = default_collecting(spec, l, weights)
        collect.append(_block_diag([np.asarray(r, dtype=float).reshape(1, -1) for r in rows]))

    effective = []
    B = None
    C = None
    for l in range(M):
        local = inv_weights[l] @ laplacians[l]
        if l == 0:
            effective.append(local)
            B = broadcast[0] if M > 1 else None
            C = collect[0] if M > 1 else None
            continue
        effective.append(B @ local @ C)
        if l < M - 1:
            B = B @ broadcast[l]
            C = collect[l] @ C
    total = np.sum(effective, axis=0)
    return LayerMatrices(
        spec=spec,
        laplacians=laplacians,
        inv_weights=inv_weights,
        broadcast=broadcast,
        collect=collect,
        effective=effective,
        total=total,
        physical_numbers=numbers,
        physical_weights=weights,
        K=np.diag(np.asarray(spec.physical_weights, dtype=float)),
    )


@dataclass
class BlockReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def block_structure_check(m: LayerMatrices, tol: float = CHECK_TOL) -> BlockReport:
    """Check the block structure every effective layer matrix must have.

    Within each node-pair block all rows coincide; every diagonal super-block
    (the physical span of one upper-layer node) has zero row sums; and nothing
    lies outside the diagonal super-blocks.
    """
    report = BlockReport()
    ranges = leaf_ranges(m.spec)
    for l, Ll in enumerate(m.effective):
        nodes = ranges[l]
        for i, (a0, a1) in enumerate(nodes):
            for j, (b0, b1) in enumerate(nodes):
                block = Ll[a0:a1, b0:b1]
                spread = float(np.max(np.abs(block - block[0]))) if block.size else 0.0
                if spread > tol:
                    report.violations.append(
                        (l + 1, "rows-differ", (i + 1, j + 1), spread))
        if l + 1 < m.M:
            supers = ranges[l + 1]
        else:
            supers = [(0, m.N)]
        mask = np.ones_like(Ll, dtype=bool)
        for p, (s0, s1) in enumerate(supers):
            sub = Ll[s0:s1, s0:s1]
            rowsum = float(np.max(np.abs(sub.sum(axis=1))))
            if rowsum > tol:
                report.violations.append((l + 1, "row-sum", (p + 1,), rowsum))
            mask[s0:s1, s0:s1] = False
        outside = float(np.max(np.abs(Ll[mask]))) if mask.any() else 0.0
        if outside > tol:
            report.violations.append((l + 1, "off-block", None, outside))
    return report


def fig1(hop_delays=(0.0, 0.0), physical_weights=(0.8, 0.7, 1.5, 1.0, 0.8, 1.2)) -> HierarchySpec:
    """The three-layer, six-generator example hierarchy.

    Physical groups {1,2,3} (path), {4}, {5,6}; layer-2 groups {1,2}, {3};
    a single two-node top group. All edge weights are 1.
    """
    layer1 = LayerSpec((
        GroupSpec(3, ((0, 1), (1, 2))),
        GroupSpec(1),
        GroupSpec(2, ((0, 1),)),
    ))
    layer2 = LayerSpec((GroupSpec(2, ((0, 1),)), GroupSpec(1)))
    layer3 = LayerSpec((GroupSpec(2, ((0, 1),)),))
    return HierarchySpec(
        (layer1, layer2, layer3),
        tuple(float(a) for a in physical_weights),
        tuple(float(d) for d in hop_delays),
    )


def _random_group(rng: np.random.Generator, size: int, extra_edge_prob: float) -> GroupSpec:
    edges = set()
    order = rng.permutation(size)
    for k in range(1, size):
        # attach each node to a uniformly chosen earlier one: random spanning tree
        q, r = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(q, r), max(q, r)))
    for q in range(size):
        for r in range(q + 1, size):
            if (q, r) not in edges and rng.random() < extra_edge_prob:
                edges.add((q, r))
    edges = tuple(sorted(edges))
    return GroupSpec(size, edges, tuple(float(w) for w in np.exp(rng.uniform(np.log(0.5), np.log(2.0), len(edges)))))


def random_spec(
    rng: np.random.Generator,
    max_layers: int = 4,
    max_nodes: int = 20,
    max_group: int = 4,
    extra_edge_prob: float = 0.3,
    random_collecting: bool = True,
    max_delay: float = 0.0,
) -> HierarchySpec:
    """Draw a random valid hierarchy.

    The layer count is uniform on 1..``max_layers``; groups are built top-down
    with sizes uniform on 1..``max_group`` (redrawn until N1 <= ``max_nodes``).
    Each group is a random spanning tree plus extra edges with probability
    ``extra_edge_prob``; edge and physical weights are log-uniform on
    [0.5, 2]; collecting rows are Dirichlet(1) draws when requested.
    """
    M = int(rng.integers(1, max_layers + 1))
    while True:
        sizes = [[int(rng.integers(1, max_group + 1))]]
        for _ in range(M - 1):
            sizes.append([int(rng.integers(1, max_group + 1)) for _ in range(sum(sizes[-1]))])
        if sum(sizes[-1]) <= max_nodes:
            break
    sizes.reverse()
    layers = []
    for l, group_sizes in enumerate(sizes):
        groups = tuple(_random_group(rng, k, extra_edge_prob) for k in group_sizes)
        collecting = None
        if random_collecting and l < M - 1:
            collecting = tuple(tuple(float(v) for v in rng.dirichlet(np.ones(k))) for k in group_sizes)
        layers.append(LayerSpec(groups, collecting))
    n1 = sum(sizes[0])
    weights = tuple(float(a) for a in np.exp(rng.uniform(np.log(0.5), np.log(2.0), n1)))
    delays = tuple(float(d) for d in rng.uniform(0.0, max_delay, M - 1)) if max_delay > 0 else (0.0,) * (M - 1)
    return HierarchySpec(tuple(layers), weights, delays)


def random_collecting(spec: HierarchySpec, rng: np.random.Generator) -> HierarchySpec:
    """Copy of ``spec`` with every collecting row redrawn from Dirichlet(1)."""
    rows = []
    for l, layer in enumerate(spec.layers):
        if l == spec.M - 1:
            rows.append(None)
        else:
            rows.append([rng.dirichlet(np.ones(g.size)) for g in layer.groups])
    return spec.with_collecting(rows)


def numeric_rank(A: np.ndarray, rel: float = 1e-9) -> int:
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel * s[0]))

