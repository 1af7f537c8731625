"""Edmonds-Karp max-flow / min-cut on small directed graphs with float capacities.

Terminal links are netted per node before the search: a node with both a
source and a sink capacity carries ``min`` of the two straight through, and
only the difference is kept as an edge (the usual grid-graph shortcut).
"""
from __future__ import annotations

from collections import deque

import numpy as np


class InfeasibleCutError(ValueError):
    """Raised when an infinite-capacity path joins source and sink."""


class FlowNetwork:
    def __init__(self, n: int):
        self.n = n
        self.head: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n + 2)]
        self.source = n
        self.sink = n + 1
        self._src = np.zeros(n)
        self._snk = np.zeros(n)

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        if cap < 0 or rev_cap < 0:
            raise ValueError("capacities must be non-negative")
        if cap == 0 and rev_cap == 0:
            return
        e = len(self.head)
        self.head += [v, u]
        self.cap += [float(cap), float(rev_cap)]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)

    def add_terminal(self, v: int, source_cap: float = 0.0, sink_cap: float = 0.0) -> None:
        """Capacity of the links source->v and v->sink (accumulated)."""
        if source_cap < 0 or sink_cap < 0:
            raise ValueError("capacities must be non-negative")
        self._src[v] += source_cap
        self._snk[v] += sink_cap

    def _finish_terminals(self) -> float:
        both = np.minimum(self._src, self._snk)
        if np.any(np.isinf(both)):
            raise InfeasibleCutError("a node is tied to both source and sink")
        for v in range(self.n):
            net = self._src[v] - self._snk[v]
            if net > 0:
                self.add_edge(self.source, v, net)
            elif net < 0:
                self.add_edge(v, self.sink, -net)
        self._src[:] = 0
        self._snk[:] = 0
        return float(both.sum())

    def _tolerance(self) -> float:
        finite = [c for c in self.cap if np.isfinite(c)]
        return 1e-12 * max(finite, default=1.0)

    def max_flow(self) -> float:
        flow = self._finish_terminals()
        self._eps = eps = self._tolerance()
        s, t = self.source, self.sink
        head, cap, adj = self.head, self.cap, self.adj
        while True:
            parent = [-1] * (self.n + 2)
            parent[s] = -2
            q = deque([s])
            while q and parent[t] == -1:
                u = q.popleft()
                for e in adj[u]:
                    v = head[e]
                    if parent[v] == -1 and cap[e] > eps:
                        parent[v] = e
                        q.append(v)
            if parent[t] == -1:
                return flow
            bottleneck = np.inf
            v = t
            while v != s:
                e = parent[v]
                bottleneck = min(bottleneck, cap[e])
                v = head[e ^ 1]
            if not np.isfinite(bottleneck):
                raise InfeasibleCutError("hard constraints join source and sink")
            v = t
            while v != s:
                e = parent[v]
                cap[e] -= bottleneck
                cap[e ^ 1] += bottleneck
                v = head[e ^ 1]
            flow += bottleneck

    def source_side(self) -> np.ndarray:
        """Boolean mask of non-terminal nodes reachable from the source in the residual graph."""
        eps = getattr(self, "_eps", 0.0)
        seen = [False] * (self.n + 2)
        seen[self.source] = True
        q = deque([self.source])
        while q:
            u = q.popleft()
            for e in self.adj[u]:
                v = self.head[e]
                if not seen[v] and self.cap[e] > eps:
                    seen[v] = True
                    q.append(v)
        return np.array(seen[:self.n], dtype=bool)
