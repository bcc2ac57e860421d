"""Project call graph, log-relevance roles, pruning and subgraph extraction."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

from .frontend import ProjectIndex, TemplateTable

log = logging.getLogger(__name__)

ANCHOR = "anchor"
TRANSITIVE = "transitive"
IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class CallEdge:
    caller: str
    callee: str
    span: tuple[int, int] = (0, 0)
    site: str = ""


@dataclass
class CallGraph:
    nodes: set[str]
    edges: list[CallEdge]
    role: dict[str, str] = field(default_factory=dict)
    templates: dict[str, frozenset[int]] = field(default_factory=dict)
    stubs: set[str] = field(default_factory=set)

    def __post_init__(self):
        self._succ: dict[str, list[str]] | None = None
        self._pred: dict[str, list[str]] | None = None

    @classmethod
    def from_edges(cls, nodes, edges, anchors, templates=None) -> "CallGraph":
        """Build a graph from raw ``(caller, callee)`` pairs and an anchor set."""
        g = cls(set(nodes), [CallEdge(a, b) for a, b in edges])
        if templates is None:
            templates = {a: frozenset({i}) for i, a in enumerate(sorted(anchors), start=1)}
        g.templates = {n: frozenset(templates.get(n, ())) for n in g.nodes}
        g.assign_roles(set(anchors))
        return g

    def successors(self, node: str) -> list[str]:
        if self._succ is None:
            self._index()
        return self._succ.get(node, [])

    def predecessors(self, node: str) -> list[str]:
        if self._pred is None:
            self._index()
        return self._pred.get(node, [])

    def _index(self):
        succ: dict[str, list[str]] = {n: [] for n in self.nodes}
        pred: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            if e.callee not in succ[e.caller]:
                succ[e.caller].append(e.callee)
            if e.caller not in pred[e.callee]:
                pred[e.callee].append(e.caller)
        self._succ = {k: sorted(v) for k, v in succ.items()}
        self._pred = {k: sorted(v) for k, v in pred.items()}

    @property
    def anchors(self) -> set[str]:
        return {n for n, r in self.role.items() if r == ANCHOR}

    def assign_roles(self, anchors: set[str]):
        reached = reverse_reachable(self, anchors)
        self.role = {}
        for n in self.nodes:
            if n in anchors:
                self.role[n] = ANCHOR
            elif n in reached:
                self.role[n] = TRANSITIVE
            else:
                self.role[n] = IRRELEVANT

    def cycles(self) -> list[list[str]]:
        """Strongly connected components that contain a cycle."""
        out = []
        for comp in strongly_connected_components(self):
            if len(comp) > 1 or comp[0] in self.successors(comp[0]):
                out.append(comp)
        return out

    def to_dot(self, name: str = "callgraph") -> str:
        lines = [f"digraph {name} {{"]
        for n in sorted(self.nodes):
            lines.append(f'  "{n}" [role="{self.role.get(n, IRRELEVANT)}"];')
        seen = set()
        for e in sorted(self.edges, key=lambda e: (e.caller, e.callee, e.span)):
            if (e.caller, e.callee) in seen:
                continue
            seen.add((e.caller, e.callee))
            lines.append(f'  "{e.caller}" -> "{e.callee}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def reverse_reachable(graph: CallGraph, targets: set[str]) -> set[str]:
    """Nodes that can reach any of ``targets``: BFS from the targets over inverted edges."""
    seen = set(t for t in targets if t in graph.nodes)
    queue = deque(sorted(seen))
    while queue:
        v = queue.popleft()
        for u in graph.predecessors(v):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return seen


def strongly_connected_components(graph: CallGraph) -> list[list[str]]:
    """Tarjan's algorithm, iterative; each component sorted, list sorted by first member."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[list[str]] = []
    counter = 0
    for root in sorted(graph.nodes):
        if root in index:
            continue
        work = [(root, iter(graph.successors(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(graph.successors(w))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return sorted(comps)


def build_call_graph(index: ProjectIndex, templates: TemplateTable) -> CallGraph:
    """One edge per resolved call site; unresolved callees become body-less stub nodes."""
    nodes = set(index.methods)
    edges: list[CallEdge] = []
    stubs: set[str] = set()
    for method_id, method in index.methods.items():
        if method.body is None:
            continue
        for node in method.body.walk():
            if node.kind != "method-call":
                continue
            callee = node.detail["callee"]
            if callee not in index.methods:
                stubs.add(callee)
            edges.append(CallEdge(method_id, callee, node.span, node.site))
    graph = CallGraph(nodes | stubs, edges, stubs=stubs)
    by_method = templates.by_method()
    graph.templates = {n: frozenset(by_method.get(n, ())) for n in graph.nodes}
    graph.assign_roles({n for n, ts in graph.templates.items() if ts})
    return graph


@dataclass
class PruningReport:
    original_nodes: int
    retained_nodes: int
    note: str = ""

    @property
    def ratio(self) -> float:
        return self.retained_nodes / self.original_nodes if self.original_nodes else 0.0

    def render(self) -> str:
        lines = [
            f"original_nodes: {self.original_nodes}",
            f"retained_nodes: {self.retained_nodes}",
            f"ratio: {self.ratio * 100:.2f}%",
        ]
        if self.note:
            lines.append(f"note: {self.note}")
        return "\n".join(lines) + "\n"


@dataclass
class PrunedGraph:
    graph: CallGraph
    report: PruningReport

    @property
    def nodes(self) -> set[str]:
        return self.graph.nodes

    @property
    def no_logging(self) -> bool:
        return not self.graph.nodes


def prune(graph: CallGraph) -> PrunedGraph:
    """Keep exactly the nodes that can reach an anchor, and every edge among them."""
    anchors = graph.anchors
    original = len(graph.nodes)
    if not anchors:
        empty = CallGraph(set(), [])
        return PrunedGraph(empty, PruningReport(original, 0, "no logging detected"))
    keep = reverse_reachable(graph, anchors)
    edges = [e for e in graph.edges if e.caller in keep and e.callee in keep]
    sub = CallGraph(keep, edges, stubs=graph.stubs & keep)
    sub.templates = {n: graph.templates.get(n, frozenset()) for n in keep}
    sub.role = {n: graph.role[n] for n in keep}
    return PrunedGraph(sub, PruningReport(original, len(keep)))


def reachable_templates(graph: CallGraph, start: str) -> set[int]:
    seen = {start}
    queue = deque([start])
    found: set[int] = set()
    while queue:
        v = queue.popleft()
        found |= graph.templates.get(v, frozenset())
        for w in graph.successors(v):
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return found


@dataclass
class Subgraph:
    entry: str
    members: tuple[str, ...]
    depth_limit: int
    contained_templates: frozenset[int]
    depth_of: dict[str, int] = field(default_factory=dict)

    def render(self) -> str:
        return (f"entry={self.entry} depth_limit={self.depth_limit} "
                f"templates={sorted(self.contained_templates)} members={list(self.members)}")


@dataclass
class SubgraphSelection:
    subgraphs: list[Subgraph]
    candidates: list[tuple[str, int]]
    warnings: list[str] = field(default_factory=list)


def entry_candidates(graph: CallGraph) -> list[str]:
    """Nodes with no in-edges, plus the least member of every source SCC that lacks one."""
    comps = strongly_connected_components(graph)
    comp_of = {n: i for i, c in enumerate(comps) for n in c}
    has_external_pred = [False] * len(comps)
    for e in graph.edges:
        a, b = comp_of[e.caller], comp_of[e.callee]
        if a != b:
            has_external_pred[b] = True
    out = []
    for i, comp in enumerate(comps):
        if not has_external_pred[i]:
            # A singleton without self-loop is a plain zero-in-degree node.
            out.append(comp[0])
    return sorted(out)


def extract_subgraphs(pruned: PrunedGraph | CallGraph, t_entry: int, t_depth: int) -> SubgraphSelection:
    """Rank entry points by reachable-template count and BFS each up to ``t_depth`` calls."""
    if t_entry < 1:
        raise ValueError("t_entry must be >= 1")
    if t_depth < 0:
        raise ValueError("t_depth must be >= 0")
    graph = pruned.graph if isinstance(pruned, PrunedGraph) else pruned
    ranked = sorted(((c, len(reachable_templates(graph, c))) for c in entry_candidates(graph)),
                    key=lambda item: (-item[1], item[0]))
    warnings = []
    if t_entry > len(ranked):
        warnings.append(f"t_entry={t_entry} exceeds {len(ranked)} entry candidates; using all")
    subgraphs = []
    for entry, _ in ranked[:t_entry]:
        depth = {entry: 0}
        order = [entry]
        queue = deque([entry])
        while queue:
            v = queue.popleft()
            if depth[v] == t_depth:
                continue
            for w in graph.successors(v):
                if w not in depth:
                    depth[w] = depth[v] + 1
                    order.append(w)
                    queue.append(w)
        contained = frozenset().union(*(graph.templates.get(m, frozenset()) for m in order))
        if not contained:
            warnings.append(f"entry {entry}: no templates within depth {t_depth}; dropped")
            continue
        subgraphs.append(Subgraph(entry, tuple(order), t_depth, contained, depth))
    for w in warnings:
        log.warning(w)
    return SubgraphSelection(subgraphs, ranked, warnings)
