"""Fully dynamic robust coresets: an aux table plus a merge-and-reduce tree.

State for a point set under insert/delete/update/change-z:

- An ordered table of (cost-at-anchor, id) pairs.  Its top z~ suffix (order:
  cost desc, id asc) is the suspected-outlier pool, kept verbatim; the
  critical entry is the cheapest pool member.
- A merge-and-reduce tree over the remaining (suspected inlier) points: leaf
  buckets of capacity B, one mutable "hot" bucket absorbing arrivals, sealed
  buckets holding exactly B points, and internal nodes storing black-box
  coresets of their subtree at per-level accuracy (eps/4)/h, where the height
  h is fixed by the capacity budget at init time.

Operations move points across the pool threshold and re-reduce only the
tree paths above touched buckets, batched once per operation:

- insert: costlier than the critical entry -> joins the pool, displacing the
  old critical point into the hot bucket; otherwise the point lands in the
  hot bucket directly.
- delete: pool members leave directly (the costliest inlier is promoted to
  keep |pool| = z~); inlier deletions are backfilled from the hot bucket
  (unsealing the most recently sealed bucket when the hot one runs dry).
- change-z: moves the boundary, migrating points between tree and pool; the
  table itself is untouched.
- query: the tree root's coreset union the pool sample (verbatim at beta=0,
  a delta-sample re-derived from seed + pool version otherwise).

eps0 is frozen at init; changing z only moves z~ through the frozen eps0.
Exceeding the capacity budget doubles the slot count and rebuilds every
summary (flagged in the operation stats).
"""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass, replace

import numpy as np

from .builders import BuilderSpec, Coreset, delta_sample_size, uniform_sample
from .data import ParamBall, WeightedDataset, WeightedPoint
from .errors import ConfigError
from .losses import LossModel, point_cost, point_costs
from .robust import RobustCoreset, RobustSplit, _eps0_details

__all__ = ["AuxTable", "MergeReduceTree", "OpStats", "DynamicRobustCoreset"]


class AuxTable:
    """Values sorted ascending by (value, -id).

    The key order makes the top suffix coincide with the trimming order
    (cost desc, id asc): among equal values the smaller id ranks higher.
    """

    def __init__(self) -> None:
        self._keys: list[tuple[float, int]] = []
        self._value_of: dict[int, float] = {}

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, pid: int) -> bool:
        return pid in self._value_of

    @staticmethod
    def key(value: float, pid: int) -> tuple[float, int]:
        return (value, -pid)

    def insert(self, pid: int, value: float) -> None:
        if pid in self._value_of:
            raise ConfigError(f"id {pid} already present")
        insort(self._keys, self.key(value, pid))
        self._value_of[pid] = value

    def remove(self, pid: int) -> float:
        if pid not in self._value_of:
            raise ConfigError(f"id {pid} not present")
        value = self._value_of.pop(pid)
        i = bisect_left(self._keys, self.key(value, pid))
        del self._keys[i]
        return value

    def value_of(self, pid: int) -> float:
        return self._value_of[pid]

    def id_at(self, pos: int) -> int:
        return -self._keys[pos][1]

    def value_at(self, pos: int) -> float:
        return self._keys[pos][0]

    def top_ids(self, count: int) -> list[int]:
        """Ids of the count largest keys, costliest first."""
        if count <= 0:
            return []
        return [-k[1] for k in self._keys[-count:]][::-1]

    def ids(self) -> list[int]:
        return list(self._value_of)

    def check_sorted(self) -> bool:
        return all(a < b for a, b in zip(self._keys, self._keys[1:]))


@dataclass
class OpStats:
    """Per-operation accounting (touched-node counters, not wall clock)."""

    op: str
    buckets_touched: int = 0
    raw_points_touched: int = 0
    pool_moves: int = 0
    rebuilt: bool = False


class MergeReduceTree:
    """Merge-and-reduce over leaf buckets with a single mutable hot bucket.

    Slots hold raw point ids; internal nodes (heap layout over a power-of-two
    slot count) store reduced summaries.  A node whose gathered content is
    within the reduce size keeps it verbatim, so small trees are exact.
    Mutations collect dirty slots; `flush` re-reduces the union of their
    root paths once, so a batch of moves costs one pass.
    """

    def __init__(
        self,
        model: LossModel,
        ball: ParamBall,
        builder: BuilderSpec,
        bucket_size: int,
        capacity: int,
        reduce_size: int,
        eps_quarter: float,
        seed: int | None,
        store: dict[int, tuple[np.ndarray, float | None]],
    ) -> None:
        if bucket_size < 1:
            raise ConfigError(f"bucket size {bucket_size} must be >= 1")
        self.model = model
        self.ball = ball
        self.builder = builder
        self.B = bucket_size
        self.reduce_size = reduce_size
        self.eps_quarter = eps_quarter
        self.seed = seed
        self.store = store
        slots = max(1, math.ceil(max(capacity, bucket_size) / bucket_size))
        self.S = 1 << (slots - 1).bit_length()
        self.height = (self.S - 1).bit_length() + 1
        self.leaves: list[list[int]] = [[] for _ in range(self.S)]
        self.sealed: list[int] = []
        self.hot: int | None = None
        self.free: list[int] = list(range(self.S))
        self.node_summary: list[WeightedDataset | None] = [None] * (2 * self.S - 1)
        self.node_version: list[int] = [0] * (2 * self.S - 1)
        self.slot_of: dict[int, int] = {}

    def _leaf_node(self, slot: int) -> int:
        return self.S - 1 + slot

    @property
    def eps_level(self) -> float:
        return self.eps_quarter / self.height

    def __len__(self) -> int:
        return len(self.slot_of)

    def ids(self) -> set[int]:
        return set(self.slot_of)

    # summaries -----------------------------------------------------------

    def _leaf_dataset(self, slot: int) -> WeightedDataset | None:
        ids = self.leaves[slot]
        if not ids:
            return None
        X = np.stack([self.store[i][0] for i in ids])
        labels = [self.store[i][1] for i in ids]
        y = None if all(v is None for v in labels) else [0.0 if v is None else v for v in labels]
        return WeightedDataset(ids, X, np.ones(len(ids)), y)

    def _reduce_node(self, v: int) -> int:
        """Recompute node v's summary; returns the raw point count gathered."""
        if v >= self.S - 1:
            summary = self._leaf_dataset(v - (self.S - 1))
            self.node_summary[v] = summary
            self.node_version[v] += 1
            return 0 if summary is None else len(summary)
        left = self.node_summary[2 * v + 1]
        right = self.node_summary[2 * v + 2]
        if left is None and right is None:
            union = None
        elif left is None:
            union = right
        elif right is None:
            union = left
        else:
            union = WeightedDataset.union(left, right)
        self.node_version[v] += 1
        if union is None or len(union) <= self.reduce_size:
            self.node_summary[v] = union
            return 0 if union is None else len(union)
        seed = None
        if self.seed is not None:
            seed = int(
                np.random.SeedSequence([self.seed, 7, v, self.node_version[v]]).generate_state(1)[0]
            )
        reduced = self.builder.build(self.model, union, self.ball, self.eps_level, seed)
        self.node_summary[v] = reduced.data
        return len(union)

    def flush(self, dirty: set[int], stats: OpStats) -> None:
        """Re-reduce the union of root paths over the dirty slots."""
        if not dirty:
            return
        nodes = set()
        for slot in dirty:
            v = self._leaf_node(slot)
            nodes.add(v)
            while v > 0:
                v = (v - 1) // 2
                nodes.add(v)
        for v in sorted(nodes, reverse=True):
            stats.raw_points_touched += self._reduce_node(v)
            stats.buckets_touched += 1

    def rebuild_all(self, stats: OpStats) -> None:
        for v in range(2 * self.S - 2, -1, -1):
            stats.raw_points_touched += self._reduce_node(v)
            stats.buckets_touched += 1

    # bucket mechanics ----------------------------------------------------

    def _open_hot(self, dirty: set[int], stats: OpStats) -> None:
        if not self.free:
            self._grow(dirty, stats)
        self.hot = self.free.pop(0)

    def _grow(self, dirty: set[int], stats: OpStats) -> None:
        """Double the slot budget and rebuild (escape hatch on overflow)."""
        old_S = self.S
        self.S = old_S * 2
        self.height = (self.S - 1).bit_length() + 1
        self.leaves.extend([] for _ in range(self.S - old_S))
        self.free.extend(range(old_S, self.S))
        self.node_summary = [None] * (2 * self.S - 1)
        self.node_version = [0] * (2 * self.S - 1)
        stats.rebuilt = True
        dirty.clear()
        self.rebuild_all(stats)

    def add(self, pid: int, dirty: set[int], stats: OpStats) -> None:
        """Place a point into the hot bucket (sealing it when full)."""
        if self.hot is None:
            self._open_hot(dirty, stats)
        self.leaves[self.hot].append(pid)
        self.slot_of[pid] = self.hot
        dirty.add(self.hot)
        if len(self.leaves[self.hot]) >= self.B:
            self.sealed.append(self.hot)
            self.hot = None

    def remove(self, pid: int, dirty: set[int], stats: OpStats) -> None:
        """Delete a point, refilling its bucket from the hot bucket."""
        slot = self.slot_of.pop(pid)
        self.leaves[slot].remove(pid)
        dirty.add(slot)
        if slot != self.hot:
            # a sealed bucket lost a point; the donor comes from the hot
            # bucket, unsealing the most recently sealed one if it ran dry
            if self.hot is not None and not self.leaves[self.hot]:
                self.free.insert(0, self.hot)
                self.hot = None
            if self.hot is None and self.sealed:
                self.hot = self.sealed.pop()
            if slot in self.sealed and self.hot is not None:
                donor = self.leaves[self.hot].pop()
                self.leaves[slot].append(donor)
                self.slot_of[donor] = slot
                dirty.add(self.hot)
                if not self.leaves[self.hot]:
                    self.free.insert(0, self.hot)
                    self.hot = None

    def root_summary(self) -> WeightedDataset | None:
        return self.node_summary[0]

    def check_invariants(self) -> None:
        seen: list[int] = []
        for slot, bucket in enumerate(self.leaves):
            seen.extend(bucket)
            assert len(bucket) <= self.B
            if slot in self.sealed:
                assert len(bucket) == self.B, f"sealed bucket {slot} holds {len(bucket)} != B"
            elif slot != self.hot:
                assert not bucket, f"points in bucket {slot} which is neither sealed nor hot"
        assert len(seen) == len(set(seen)) == len(self.slot_of)
        assert set(seen) == set(self.slot_of)
        root = self.node_summary[0]
        total = 0.0 if root is None else root.total_weight
        assert abs(total - len(self.slot_of)) <= 1e-9 * max(1.0, len(self.slot_of)), (
            f"root weight {total} != live inliers {len(self.slot_of)}"
        )


class DynamicRobustCoreset:
    """Maintains a (beta, eps)-robust coreset under point and z updates."""

    def __init__(
        self,
        model: LossModel,
        ball: ParamBall,
        z: float,
        beta: float,
        eps: float,
        eps0: float,
        builder: BuilderSpec,
        tree: MergeReduceTree,
        table: AuxTable,
        pool: set[int],
        store: dict[int, tuple[np.ndarray, float | None]],
        seed: int | None,
        eta: float,
    ) -> None:
        self.model = model
        self.ball = ball
        self.z = float(z)
        self.beta = beta
        self.eps = eps
        self.eps0 = eps0
        self.builder = builder
        self.tree = tree
        self.table = table
        self.pool = pool
        self.store = store
        self.seed = seed
        self.eta = eta
        self.pool_version = 0
        self.last_op: OpStats | None = None
        self.history: list[OpStats] = []

    # ------------------------------------------------------------------

    @classmethod
    def init(
        cls,
        model: LossModel,
        data: WeightedDataset,
        ball: ParamBall,
        z: float,
        beta: float,
        eps: float,
        builder: BuilderSpec,
        bucket_size: int,
        seed: int | None = 0,
        capacity: int | None = None,
        reduce_size: int | None = None,
        eta: float = 0.1,
        fz_lower: float | None = None,
    ) -> "DynamicRobustCoreset":
        """Build the structure from a unit-weight dataset.

        eps0 is computed once here and frozen.  Suspected inliers are packed
        into leaf buckets (ascending id; full buckets sealed, the trailing
        partial one stays hot) and internal levels are reduced bottom-up at
        accuracy (eps/4)/h with h fixed by the capacity budget (default: the
        initial size).
        """
        if len(data) == 0:
            raise ConfigError("dynamic init needs a nonempty dataset")
        if not np.all(data.w == 1.0):
            raise ConfigError("dynamic maintenance expects unit weights")
        if np.unique(data.ids).shape[0] != len(data):
            raise ConfigError("duplicate ids in dynamic init")
        if not (0 < z < len(data)):
            raise ConfigError(f"z={z} outside (0, n={len(data)})")
        if not (0 <= beta < 1):
            raise ConfigError(f"beta={beta} outside [0, 1)")
        if not (0 < eps < 1):
            raise ConfigError(f"eps={eps} outside (0, 1)")
        eps0, _ = _eps0_details(model, data, ball, z, eps, fz_lower)
        store: dict[int, tuple[np.ndarray, float | None]] = {}
        table = AuxTable()
        costs = point_costs(model, ball.center, data.X, data.y)
        for i in range(len(data)):
            pid = int(data.ids[i])
            label = None if data.y is None else float(data.y[i])
            store[pid] = (data.X[i].copy(), label)
            table.insert(pid, float(costs[i]))
        n = len(data)
        z_tilde = min(math.ceil((1.0 + 1.0 / eps0) * z), n)
        pool = set(table.top_ids(z_tilde))
        if reduce_size is None:
            # nodes hold coresets at the builder's configured size; without
            # one, cap at twice the bucket so small trees stay exact
            reduce_size = builder.size if builder.size is not None else max(2 * bucket_size, 16)
        tree_builder = replace(builder, size=reduce_size, per_layer=None)
        tree = MergeReduceTree(
            model,
            ball,
            tree_builder,
            bucket_size,
            capacity if capacity is not None else n,
            reduce_size,
            eps / 4.0,
            seed,
            store,
        )
        stats = OpStats("init")
        inliers = sorted(pid for pid in store if pid not in pool)
        for start in range(0, len(inliers), bucket_size):
            chunk = inliers[start : start + bucket_size]
            if tree.hot is None:
                tree._open_hot(set(), stats)
            slot = tree.hot
            tree.leaves[slot].extend(chunk)
            for pid in chunk:
                tree.slot_of[pid] = slot
            if len(tree.leaves[slot]) >= bucket_size:
                tree.sealed.append(slot)
                tree.hot = None
        tree.rebuild_all(stats)
        obj = cls(model, ball, z, beta, eps, eps0, builder, tree, table, pool, store, seed, eta)
        obj.last_op = stats
        obj.history.append(stats)
        return obj

    # ------------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.table)

    @property
    def z_tilde(self) -> int:
        return min(math.ceil((1.0 + 1.0 / self.eps0) * self.z), self.n)

    @property
    def degenerate(self) -> bool:
        return math.ceil((1.0 + 1.0 / self.eps0) * self.z) >= self.n

    def critical_key(self) -> tuple[float, int] | None:
        """Key of the cheapest pool member (the critical entry)."""
        if not self.pool:
            return None
        pos = len(self.table) - len(self.pool)
        return (self.table.value_at(pos), -self.table.id_at(pos))

    def _rebalance(self, dirty: set[int], stats: OpStats) -> None:
        """Move points across the threshold until |pool| == z~."""
        target = self.z_tilde
        while len(self.pool) > target:
            # demote the cheapest pool member into the hot bucket
            pos = len(self.table) - len(self.pool)
            pid = self.table.id_at(pos)
            self.pool.discard(pid)
            self.tree.add(pid, dirty, stats)
            self.pool_version += 1
            stats.pool_moves += 1
        while len(self.pool) < target:
            # promote the costliest suspected inlier into the pool
            pos = len(self.table) - len(self.pool) - 1
            while self.table.id_at(pos) in self.pool:
                pos -= 1
            pid = self.table.id_at(pos)
            self.tree.remove(pid, dirty, stats)
            self.pool.add(pid)
            self.pool_version += 1
            stats.pool_moves += 1

    def _finish(self, dirty: set[int], stats: OpStats) -> OpStats:
        self.tree.flush(dirty, stats)
        self.last_op = stats
        self.history.append(stats)
        return stats

    def insert(self, point: WeightedPoint) -> OpStats:
        """Add one unit-weight point."""
        if point.weight != 1.0:
            raise ConfigError("dynamic points are unit weight")
        if point.id in self.table:
            raise ConfigError(f"id {point.id} already present")
        feats = np.asarray(point.features, dtype=np.float64).reshape(-1)
        if feats.shape[0] != self.model.dim:
            raise ConfigError(f"feature dim {feats.shape[0]} != model dim {self.model.dim}")
        value = point_cost(self.model, self.ball.center, feats, point.label)
        stats = OpStats("insert")
        dirty: set[int] = set()
        self.store[point.id] = (feats, point.label)
        self.table.insert(point.id, value)
        crit = self.critical_key()
        if crit is not None and AuxTable.key(value, point.id) > crit:
            self.pool.add(point.id)
            self.pool_version += 1
        else:
            self.tree.add(point.id, dirty, stats)
        self._rebalance(dirty, stats)
        return self._finish(dirty, stats)

    def delete(self, pid: int) -> OpStats:
        """Remove a point by id."""
        if pid not in self.table:
            raise ConfigError(f"id {pid} not present")
        if self.z >= self.n - 1:
            raise ConfigError(f"delete would leave n={self.n - 1} <= z={self.z}")
        stats = OpStats("delete")
        dirty: set[int] = set()
        self.table.remove(pid)
        if pid in self.pool:
            self.pool.discard(pid)
            self.pool_version += 1
        else:
            self.tree.remove(pid, dirty, stats)
        del self.store[pid]
        self._rebalance(dirty, stats)
        return self._finish(dirty, stats)

    def update(self, point: WeightedPoint) -> OpStats:
        """Replace the point with this id (delete + insert, one operation)."""
        if point.id not in self.table:
            raise ConfigError(f"id {point.id} not present")
        feats = np.asarray(point.features, dtype=np.float64).reshape(-1)
        if feats.shape[0] != self.model.dim:
            raise ConfigError(f"feature dim {feats.shape[0]} != model dim {self.model.dim}")
        stats = OpStats("update")
        dirty: set[int] = set()
        self.table.remove(point.id)
        if point.id in self.pool:
            self.pool.discard(point.id)
            self.pool_version += 1
        else:
            self.tree.remove(point.id, dirty, stats)
        value = point_cost(self.model, self.ball.center, feats, point.label)
        self.store[point.id] = (feats, point.label)
        self.table.insert(point.id, value)
        crit = self.critical_key()
        if crit is not None and AuxTable.key(value, point.id) > crit:
            self.pool.add(point.id)
            self.pool_version += 1
        else:
            self.tree.add(point.id, dirty, stats)
        self._rebalance(dirty, stats)
        return self._finish(dirty, stats)

    def change_z(self, dz: float) -> OpStats:
        """Shift the trim weight; the table is untouched, only the pool
        boundary moves (through the frozen eps0)."""
        new_z = self.z + dz
        if new_z < 1:
            raise ConfigError(f"z + dz = {new_z} must be >= 1")
        if new_z >= self.n:
            raise ConfigError(f"z + dz = {new_z} must stay below n = {self.n}")
        stats = OpStats("changez")
        dirty: set[int] = set()
        self.z = float(new_z)
        self._rebalance(dirty, stats)
        return self._finish(dirty, stats)

    # ------------------------------------------------------------------

    def dataset(self) -> WeightedDataset:
        """Snapshot of the live points (ascending id, unit weights)."""
        ids = sorted(self.store)
        X = np.stack([self.store[i][0] for i in ids])
        labels = [self.store[i][1] for i in ids]
        y = None if all(v is None for v in labels) else [0.0 if v is None else v for v in labels]
        return WeightedDataset(ids, X, np.ones(len(ids)), y)

    def _pool_dataset(self) -> WeightedDataset:
        ids = sorted(self.pool)
        X = np.stack([self.store[i][0] for i in ids])
        labels = [self.store[i][1] for i in ids]
        y = None if all(v is None for v in labels) else [0.0 if v is None else v for v in labels]
        return WeightedDataset(ids, X, np.ones(len(ids)), y)

    def query(self) -> RobustCoreset:
        """Current robust coreset: tree root union pool sample.

        The pool side is verbatim at beta = 0 and otherwise a delta-sample
        whose seed derives from (seed, pool version), so identical states
        yield identical samples.  Pure read.
        """
        root = self.tree.root_summary()
        c_si = None
        if root is not None and len(root) > 0:
            c_si = Coreset(root, self.builder.name, {"dynamic": True}, self.seed, len(self.tree))
        pool_data = self._pool_dataset()
        delta = None
        if self.beta == 0.0:
            c_so = pool_data
        else:
            delta = self.beta * self.eps0 / (1.0 + self.eps0)
            m = min(delta_sample_size(delta, self.model.vc_dimension, self.eta), len(pool_data))
            qseed = None
            if self.seed is not None:
                qseed = int(
                    np.random.SeedSequence([self.seed, 13, self.pool_version]).generate_state(1)[0]
                )
            c_so = uniform_sample(pool_data, m, qseed).data
        snapshot = self.dataset()
        id_to_row = {int(pid): row for row, pid in enumerate(snapshot.ids)}
        so_rows = np.array(sorted(id_to_row[p] for p in self.pool), dtype=np.int64)
        si_rows = np.array(
            sorted(id_to_row[p] for p in self.store if p not in self.pool), dtype=np.int64
        )
        tau = self.table.value_at(len(self.table) - len(self.pool)) if self.pool else 0.0
        sp = RobustSplit(
            eps0=self.eps0,
            z_tilde=self.z_tilde,
            tau=tau,
            so_rows=so_rows,
            si_rows=si_rows,
            degenerate=self.degenerate,
        )
        provenance = {
            "builder": self.builder.name,
            "z": self.z,
            "beta": self.beta,
            "eps": self.eps,
            "eps0": self.eps0,
            "z_tilde": self.z_tilde,
            "tau": tau,
            "delta": delta,
            "dynamic": True,
            "n": self.n,
            "pool_version": self.pool_version,
        }
        return RobustCoreset(
            c_si=c_si,
            c_so=c_so,
            split=sp,
            z=self.z,
            beta=self.beta,
            eps=self.eps,
            delta=delta,
            provenance=provenance,
        )

    def check_invariants(self) -> None:
        """Assert table order, pool = top-z~, partition, and tree weights."""
        assert self.table.check_sorted(), "aux table out of order"
        assert len(self.table) == len(self.store) == self.n
        target = self.z_tilde
        assert len(self.pool) == target, f"|pool| {len(self.pool)} != z~ {target}"
        assert set(self.table.top_ids(target)) == self.pool, "pool != top-z~ suffix"
        tree_ids = self.tree.ids()
        assert tree_ids.isdisjoint(self.pool)
        assert tree_ids | self.pool == set(self.store)
        self.tree.check_invariants()
