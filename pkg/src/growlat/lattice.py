"""Lattice data model.

Node-spring lattices on Z^D with a finite connectivity set of direction
vectors, per-direction (homogeneous) or per-edge (finite sample) rest
lengths and growth factors, and generators for inhomogeneous growth
scenarios.  All randomness runs through numpy's seedable PCG64 generator
with one spawned child stream per direction and per field (rest, growth),
so samples are bit-reproducible given the scenario seed.
"""

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .springs import SpringLaw

Direction = tuple[int, ...]


@dataclass(frozen=True)
class Connectivity:
    """Finite set of spring directions on Z^D.

    No direction may be zero and no two directions may be opposite: a
    direction and its negative describe the same set of springs.
    """

    dimension: int
    directions: tuple[Direction, ...]

    def __post_init__(self):
        d = self.dimension
        if d < 1 or d > 3:
            raise ValueError("dimension must be 1, 2 or 3")
        dirs = tuple(tuple(int(c) for c in v) for v in self.directions)
        object.__setattr__(self, "directions", dirs)
        if not dirs:
            raise ValueError("connectivity must contain at least one direction")
        seen = set()
        for v in dirs:
            if len(v) != d:
                raise ValueError(f"direction {v} does not have {d} components")
            if all(c == 0 for c in v):
                raise ValueError("zero vector is not a valid direction")
            if v in seen:
                raise ValueError(f"duplicate direction {v}")
            neg = tuple(-c for c in v)
            if neg in seen:
                raise ValueError(f"directions {v} and {neg} are opposite")
            seen.add(v)

    @property
    def matrix(self) -> np.ndarray:
        """Directions stacked as rows, shape (len(directions), dimension)."""
        return np.asarray(self.directions, dtype=float)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.matrix, axis=1)


def square_connectivity() -> Connectivity:
    """The planar square lattice with nearest and next-nearest neighbours."""
    return Connectivity(2, ((1, 0), (0, 1), (1, 1), (1, -1)))


def chain_connectivity() -> Connectivity:
    """The one-dimensional chain."""
    return Connectivity(1, ((1,),))


@dataclass(frozen=True)
class HomogeneousLattice:
    """Translation-invariant lattice: one rest length and one growth factor
    per direction, aligned with connectivity.directions."""

    connectivity: Connectivity
    rest: tuple[float, ...]
    growth: tuple[float, ...] = ()
    law: SpringLaw = field(default_factory=SpringLaw)

    def __post_init__(self):
        n = len(self.connectivity.directions)
        rest = tuple(float(x) for x in self.rest)
        if len(rest) != n:
            raise ValueError(f"expected {n} rest lengths, got {len(rest)}")
        if any(x <= 0 for x in rest):
            raise ValueError("rest lengths must be positive")
        growth = tuple(float(x) for x in self.growth) if self.growth else (1.0,) * n
        if len(growth) != n:
            raise ValueError(f"expected {n} growth factors, got {len(growth)}")
        if any(x <= 0 for x in growth):
            raise ValueError("growth factors must be positive")
        object.__setattr__(self, "rest", rest)
        object.__setattr__(self, "growth", growth)


def square_lattice(rest=(1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0)), growth=(), law=SpringLaw()) -> HomogeneousLattice:
    return HomogeneousLattice(square_connectivity(), tuple(rest), tuple(growth), law)


def apply_growth(lattice: HomogeneousLattice, factors) -> HomogeneousLattice:
    """Compose a further growth event: growth factors multiply componentwise.

    Rest lengths are untouched, so the initial and grown systems coexist
    as two lattice values sharing the same rest data.
    """
    factors = tuple(float(x) for x in factors)
    if len(factors) != len(lattice.connectivity.directions):
        raise ValueError("one factor per direction required")
    if any(x <= 0 for x in factors):
        raise ValueError("growth factors must be positive")
    new = tuple(g * f for g, f in zip(lattice.growth, factors))
    return replace(lattice, growth=new)


# ---------------------------------------------------------------------------
# Lattice order


@dataclass(frozen=True)
class OrderResult:
    order: int
    classes: tuple[tuple[Direction, ...], ...]


def lattice_order(connectivity: Connectivity) -> OrderResult:
    """Smallest number K of linearly-independent classes partitioning the
    direction set, together with one witness partition.

    The search enumerates class assignments in lexicographic order of the
    restricted-growth encoding, so the witness returned is deterministic.
    K is always at least ceil(|directions| / dimension).
    """
    dirs = connectivity.directions
    vectors = [np.asarray(v, dtype=float) for v in dirs]
    n = len(dirs)
    lower = -(-n // connectivity.dimension)  # ceil division

    def independent(members: list[int], candidate: int) -> bool:
        if len(members) >= connectivity.dimension:
            return False
        stack = np.stack([vectors[i] for i in members] + [vectors[candidate]])
        return np.linalg.matrix_rank(stack) == len(members) + 1

    def search(k: int):
        classes: list[list[int]] = []

        def place(i: int):
            if i == n:
                return len(classes) == k
            for c in range(len(classes)):
                if independent(classes[c], i):
                    classes[c].append(i)
                    if place(i + 1):
                        return True
                    classes[c].pop()
            if len(classes) < k:
                classes.append([i])
                if place(i + 1):
                    return True
                classes.pop()
            return False

        if place(0):
            return [list(c) for c in classes]
        return None

    for k in range(lower, n + 1):
        found = search(k)
        if found is not None:
            classes = tuple(tuple(dirs[i] for i in cls) for cls in found)
            return OrderResult(k, classes)
    raise RuntimeError("unreachable: singleton partition is always valid")


# ---------------------------------------------------------------------------
# Growth scenarios and finite samples

_SCENARIO_KINDS = ("homogeneous", "checkerboard-diagonal", "uniform-random")


@dataclass(frozen=True)
class GrowthScenario:
    """Recipe for assigning per-edge growth to a finite sample.

    kind "homogeneous": `factors` aligned with the connectivity directions.
    kind "checkerboard-diagonal": square lattice only; the right-diagonal
        spring of cell (i, j) grows by `high` when i + j is even and by
        sqrt(2 - high**2) otherwise, and the left-diagonal spring of the
        same cell receives the partner value, so every cell keeps a
        zero-energy shape.  Axis springs do not grow.
    kind "uniform-random": per-edge factors drawn uniformly from the
        per-direction `intervals`.
    """

    kind: str
    factors: tuple[float, ...] | None = None
    high: float | None = None
    intervals: tuple[tuple[float, float], ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "homogeneous":
            if self.factors is None or any(f <= 0 for f in self.factors):
                raise ValueError("homogeneous scenario needs positive per-direction factors")
        elif self.kind == "checkerboard-diagonal":
            if self.high is None:
                raise ValueError("checkerboard scenario needs a high value")
            if self.high <= 0 or self.high**2 >= 2.0:
                raise ValueError("checkerboard high value h must satisfy 0 < h and h**2 < 2")
        else:
            if self.intervals is None:
                raise ValueError("uniform-random scenario needs per-direction intervals")
            for lo, hi in self.intervals:
                if lo <= 0 or hi < lo:
                    raise ValueError(f"invalid growth interval ({lo}, {hi})")


def homogeneous_growth(factors, seed: int = 0) -> GrowthScenario:
    return GrowthScenario("homogeneous", factors=tuple(float(f) for f in factors), seed=seed)


def no_growth(connectivity: Connectivity, seed: int = 0) -> GrowthScenario:
    return homogeneous_growth((1.0,) * len(connectivity.directions), seed=seed)


def checkerboard_growth(high: float, seed: int = 0) -> GrowthScenario:
    return GrowthScenario("checkerboard-diagonal", high=float(high), seed=seed)


def uniform_growth(intervals, seed: int = 0) -> GrowthScenario:
    ivs = tuple((float(lo), float(hi)) for lo, hi in intervals)
    return GrowthScenario("uniform-random", intervals=ivs, seed=seed)


@dataclass(frozen=True)
class FiniteLatticeSample:
    """Finite node-spring system on Z^D intersected with [0, N]^D.

    An edge (x, v) exists iff both x and x + v lie inside the box.  Edges
    are stored as index pairs into the node table; `owned` marks the edges
    counted by the per-cell normalisation (one spring of each direction
    per unit cell; the excluded springs connect boundary nodes only).
    """

    connectivity: Connectivity
    n: int
    nodes: np.ndarray       # (M, D) int
    edges: np.ndarray       # (E, 2) int node indices (tail, head)
    edge_dirs: np.ndarray   # (E,) int index into connectivity.directions
    rest: np.ndarray        # (E,) float
    growth: np.ndarray      # (E,) float
    owned: np.ndarray       # (E,) bool
    law: SpringLaw = field(default_factory=SpringLaw)

    @property
    def dimension(self) -> int:
        return self.connectivity.dimension

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def node_index(self, x) -> int:
        shape = (self.n + 1,) * self.dimension
        return int(np.ravel_multi_index(tuple(int(c) for c in x), shape))

    def edge_index(self, x, v) -> int:
        """Index of the edge with tail node x along direction v."""
        k = self.connectivity.directions.index(tuple(int(c) for c in v))
        i = self.node_index(x)
        hits = np.nonzero((self.edge_dirs == k) & (self.edges[:, 0] == i))[0]
        if hits.size != 1:
            raise KeyError(f"no edge at {tuple(x)} along {tuple(v)}")
        return int(hits[0])

    def boundary_mask(self) -> np.ndarray:
        """True for nodes on the boundary of the box."""
        return np.any((self.nodes == 0) | (self.nodes == self.n), axis=1)

    def affine_positions(self, f: np.ndarray) -> np.ndarray:
        """Node positions of the affine field x -> F x."""
        f = np.asarray(f, dtype=float)
        return self.nodes.astype(float) @ f.T


def build_sample(
    connectivity: Connectivity,
    n: int,
    rest,
    scenario: GrowthScenario | None = None,
    law: SpringLaw = SpringLaw(),
) -> FiniteLatticeSample:
    """Enumerate all edges of the box and assign rest lengths and growth.

    `rest` is a scalar, a per-direction sequence of scalars, or a
    per-direction sequence where an entry may be an (lo, hi) interval for
    uniformly random per-edge rest lengths.  Randomness (rest and growth)
    is drawn from independent child streams of the scenario seed, so the
    rest field does not change when only the growth scenario kind changes.
    """
    if n < 2:
        raise ValueError("side count N must be at least 2")
    d = connectivity.dimension
    dirs = connectivity.directions
    if scenario is None:
        scenario = no_growth(connectivity)
    if scenario.kind == "homogeneous" and len(scenario.factors) != len(dirs):
        raise ValueError("homogeneous scenario needs one factor per direction")
    if scenario.kind == "uniform-random" and len(scenario.intervals) != len(dirs):
        raise ValueError("uniform-random scenario needs one interval per direction")
    if scenario.kind == "checkerboard-diagonal" and connectivity != square_connectivity():
        raise ValueError("checkerboard scenario is defined for the square connectivity only")

    shape = (n + 1,) * d
    nodes = np.array(list(itertools.product(range(n + 1), repeat=d)), dtype=np.int64)

    tails, dir_ids, owned_list = [], [], []
    per_dir_tails = []
    for k, v in enumerate(dirs):
        ranges = [range(max(0, -c), n - max(0, c) + 1) for c in v]
        xs = np.array(list(itertools.product(*ranges)), dtype=np.int64)
        per_dir_tails.append(xs)
        tails.append(np.ravel_multi_index(xs.T, shape))
        dir_ids.append(np.full(len(xs), k, dtype=np.int64))
        # one spring of each direction per unit cell: springs lying in the
        # face at coordinate N have no owning cell and are not counted
        own = np.ones(len(xs), dtype=bool)
        for axis, c in enumerate(v):
            if c == 0:
                own &= xs[:, axis] < n
        owned_list.append(own)

    tail_idx = np.concatenate(tails)
    edge_dirs = np.concatenate(dir_ids)
    owned = np.concatenate(owned_list)
    heads = np.concatenate(
        [np.ravel_multi_index((xs + np.asarray(v)).T, shape) for xs, v in zip(per_dir_tails, dirs)]
    )
    edges = np.stack([tail_idx, heads], axis=1).astype(np.int64)

    root = np.random.SeedSequence(scenario.seed)
    rest_seq, growth_seq = root.spawn(2)
    rest_streams = rest_seq.spawn(len(dirs))
    growth_streams = growth_seq.spawn(len(dirs))

    # rest lengths
    rest_arr = np.empty(len(edges))
    if np.isscalar(rest):
        rest_spec = [float(rest)] * len(dirs)
    else:
        rest_spec = list(rest)
        if len(rest_spec) != len(dirs):
            raise ValueError("rest specification must be a scalar or one entry per direction")
    for k in range(len(dirs)):
        sel = edge_dirs == k
        entry = rest_spec[k]
        if np.isscalar(entry):
            if entry <= 0:
                raise ValueError("rest lengths must be positive")
            rest_arr[sel] = float(entry)
        else:
            lo, hi = (float(entry[0]), float(entry[1]))
            if lo <= 0 or hi < lo:
                raise ValueError(f"invalid rest interval ({lo}, {hi})")
            rng = np.random.default_rng(rest_streams[k])
            rest_arr[sel] = rng.uniform(lo, hi, int(sel.sum()))

    # growth factors
    growth_arr = np.ones(len(edges))
    if scenario.kind == "homogeneous":
        for k in range(len(dirs)):
            growth_arr[edge_dirs == k] = scenario.factors[k]
    elif scenario.kind == "uniform-random":
        for k in range(len(dirs)):
            lo, hi = scenario.intervals[k]
            rng = np.random.default_rng(growth_streams[k])
            growth_arr[edge_dirs == k] = rng.uniform(lo, hi, int((edge_dirs == k).sum()))
    else:  # checkerboard-diagonal
        high = scenario.high
        partner = float(np.sqrt(2.0 - high**2))
        for k, v in enumerate(dirs):
            if v in ((1, 0), (0, 1)):
                continue
            sel = edge_dirs == k
            xs = per_dir_tails[k]
            cell = xs + np.minimum(np.asarray(v), 0)  # owning cell of each diagonal spring
            even = (cell.sum(axis=1) % 2) == 0
            if v == (1, 1):
                growth_arr[sel] = np.where(even, high, partner)
            else:  # (1, -1)
                growth_arr[sel] = np.where(even, partner, high)

    return FiniteLatticeSample(
        connectivity=connectivity,
        n=n,
        nodes=nodes,
        edges=edges,
        edge_dirs=edge_dirs,
        rest=rest_arr,
        growth=growth_arr,
        owned=owned,
        law=law,
    )
