"""Per-method control flow: CFG lowering, dominators, and the log-oriented reduction.

The CFG is built from the statement AST with canonical lowerings:

* ``if``       true/false edges into the arms, both joining a merge block
* loops        a header block holding the loop node, a back edge from the body
* ``switch``   one ``case`` edge per label group (plus an implicit ``default``),
               fall-through between groups unless the group ends in ``break``
* ``try``      an ``exception`` edge from every call- or throw-bearing block of
               the try region to each catch head; ``finally`` runs after the join

The Lcfg keeps only log points, call sites, branch and merge nodes. Paths
through it are the local log sub-sequences a method can emit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

from .frontend import AstNode, MethodDecl, TemplateTable

EDGE_KINDS = ("seq", "true", "false", "case", "back", "exception")


class DominatorError(ValueError):
    pass


@dataclass
class Block:
    id: int
    stmts: list[AstNode] = field(default_factory=list)

    @property
    def terminator(self) -> AstNode | None:
        if self.stmts and self.stmts[-1].kind in ("if", "loop", "switch-case"):
            return self.stmts[-1]
        return None


@dataclass(frozen=True)
class CfgEdge:
    src: int
    dst: int
    kind: str
    label: object = None


@dataclass
class LoopInfo:
    header: int
    kind: str
    entry_edges: frozenset[tuple[int, int]]
    body: frozenset[int] = frozenset()


@dataclass
class Cfg:
    blocks: dict[int, Block]
    edges: list[CfgEdge]
    entry: int
    exits: set[int]
    loops: list[LoopInfo] = field(default_factory=list)
    method_id: str = ""
    guards: dict[str, tuple] = field(default_factory=dict)

    def successors(self, b: int) -> list[int]:
        return [e.dst for e in self.edges if e.src == b]

    def out_edges(self, b: int) -> list[CfgEdge]:
        return [e for e in self.edges if e.src == b]

    def predecessors(self, b: int) -> list[int]:
        return [e.src for e in self.edges if e.dst == b]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], entry: int = 0) -> "Cfg":
        """Bare graph with empty blocks ``0..n-1``; used for dominator checks."""
        blocks = {i: Block(i) for i in range(n)}
        es = [CfgEdge(a, b, "seq") for a, b in edges]
        exits = {b for b in blocks if not any(e.src == b for e in es)}
        return cls(blocks, es, entry, exits)

    def to_dot(self) -> str:
        lines = [f'digraph "{self.method_id or "cfg"}" {{']
        for b in self.blocks.values():
            label = "\\n".join(_stmt_label(s) for s in b.stmts) or "(empty)"
            lines.append(f'  b{b.id} [shape=box, label="B{b.id}\\n{_esc(label)}"];')
        for e in self.edges:
            extra = f" {e.label}" if e.label is not None else ""
            lines.append(f'  b{e.src} -> b{e.dst} [label="{_esc(e.kind + extra)}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("\\", "\\\\").replace('"', '\\"').replace("\\\\n", "\\n")


def _stmt_label(node: AstNode) -> str:
    d = node.detail
    if node.kind in ("log-call", "method-call"):
        return f"{node.kind} {d.get('text', '')}"
    if node.kind == "if":
        return f"if ({d['condition']})"
    if node.kind == "loop":
        return f"{d['loop_kind']} ({d['condition']})"
    if node.kind == "switch-case":
        return f"switch ({d['selector']})"
    return node.kind


class _CfgBuilder:
    def __init__(self):
        self.blocks: dict[int, Block] = {}
        self.edges: list[CfgEdge] = []
        self.exits: set[int] = set()
        self.loops: list[LoopInfo] = []
        # (break target, continue target or None, continue edge kind)
        self.jump_stack: list[tuple[int, int | None, str]] = []
        self.try_stack: list[list[tuple[int, str]]] = []
        self.guard_stack: list[tuple[str, object]] = []
        self.guards: dict[str, tuple] = {}

    def new_block(self) -> int:
        b = len(self.blocks)
        self.blocks[b] = Block(b)
        return b

    def edge(self, src: int | None, dst: int, kind: str, label=None):
        if src is not None:
            self.edges.append(CfgEdge(src, dst, kind, label))

    def catch_heads(self) -> list[tuple[int, str]]:
        for heads in reversed(self.try_stack):
            if heads:
                return heads
        return []

    def lower(self, seq: AstNode, cur: int | None) -> int | None:
        for stmt in seq.children:
            if cur is None:
                cur = self.new_block()  # dead code; dropped as unreachable
            cur = self.lower_stmt(stmt, cur)
        return cur

    def lower_stmt(self, stmt: AstNode, cur: int) -> int | None:
        k = stmt.kind
        if k == "sequence":
            return self.lower(stmt, cur)
        if k in ("log-call", "method-call"):
            self.blocks[cur].stmts.append(stmt)
            self.guards[stmt.site] = tuple(self.guard_stack)
            heads = self.catch_heads()
            if k == "method-call" and heads:
                nxt = self.new_block()
                self.edge(cur, nxt, "seq")
                for head, types in heads:
                    self.edge(cur, head, "exception", types)
                return nxt
            return cur
        if k == "other-statement":
            jump = stmt.detail.get("jump")
            if jump and self.jump_stack:
                if jump == "break":
                    self.edge(cur, self.jump_stack[-1][0], "seq")
                    return None
                target = next(((c, kind) for _, c, kind in reversed(self.jump_stack) if c is not None), None)
                if target is not None:
                    self.edge(cur, target[0], target[1])
                    return None
            self.blocks[cur].stmts.append(stmt)
            return cur
        if k == "return":
            self.blocks[cur].stmts.append(stmt)
            self.exits.add(cur)
            return None
        if k == "throw":
            self.blocks[cur].stmts.append(stmt)
            heads = self.catch_heads()
            if heads:
                for head, types in heads:
                    self.edge(cur, head, "exception", types)
            else:
                self.exits.add(cur)
            return None
        if k == "if":
            return self.lower_if(stmt, cur)
        if k == "loop":
            if stmt.detail["loop_kind"] == "do":
                return self.lower_do(stmt, cur)
            return self.lower_while(stmt, cur)
        if k == "switch-case":
            return self.lower_switch(stmt, cur)
        if k == "try":
            return self.lower_try(stmt, cur)
        self.blocks[cur].stmts.append(stmt)
        return cur

    def lower_if(self, stmt: AstNode, cur: int) -> int:
        cond = stmt.detail["condition"]
        self.blocks[cur].stmts.append(stmt)
        then_b = self.new_block()
        self.edge(cur, then_b, "true", True)
        self.guard_stack.append((cond, True))
        t_end = self.lower(stmt.children[0], then_b)
        self.guard_stack.pop()
        e_end = None
        has_else = len(stmt.children) > 1
        if has_else:
            else_b = self.new_block()
            self.edge(cur, else_b, "false", False)
            self.guard_stack.append((cond, False))
            e_end = self.lower(stmt.children[1].children[0], else_b)
            self.guard_stack.pop()
        merge = self.new_block()
        self.edge(t_end, merge, "seq")
        if has_else:
            self.edge(e_end, merge, "seq")
        else:
            self.edge(cur, merge, "false", False)
        return merge

    def lower_while(self, stmt: AstNode, cur: int) -> int:
        cond = stmt.detail["condition"]
        header = self.new_block()
        self.edge(cur, header, "seq")
        self.blocks[header].stmts.append(stmt)
        body_b = self.new_block()
        after = self.new_block()
        self.edge(header, body_b, "true", True)
        self.jump_stack.append((after, header, "back"))
        self.guard_stack.append((cond, True))
        b_end = self.lower(stmt.children[0], body_b)
        self.guard_stack.pop()
        self.jump_stack.pop()
        self.edge(b_end, header, "back")
        self.edge(header, after, "false", False)
        self.loops.append(LoopInfo(header, stmt.detail["loop_kind"], frozenset({(header, body_b)})))
        return after

    def lower_do(self, stmt: AstNode, cur: int) -> int:
        body_b = self.new_block()
        self.edge(cur, body_b, "seq")
        cond_b = self.new_block()
        self.blocks[cond_b].stmts.append(stmt)
        after = self.new_block()
        self.jump_stack.append((after, cond_b, "seq"))
        b_end = self.lower(stmt.children[0], body_b)
        self.jump_stack.pop()
        self.edge(b_end, cond_b, "seq")
        self.edge(cond_b, body_b, "back", True)
        self.edge(cond_b, after, "false", False)
        self.loops.append(LoopInfo(body_b, "do", frozenset({(cur, body_b), (cond_b, body_b)})))
        return after

    def lower_switch(self, stmt: AstNode, cur: int) -> int:
        self.blocks[cur].stmts.append(stmt)
        labels = stmt.detail["labels"]
        after = self.new_block()
        case_blocks = [self.new_block() for _ in stmt.children]
        for b, label in zip(case_blocks, labels):
            self.edge(cur, b, "case", label)
        if not any(lbl.startswith("default") or " default" in lbl for lbl in labels):
            self.edge(cur, after, "case", "default")
        self.jump_stack.append((after, None, "seq"))
        selector = stmt.detail["selector"]
        for i, (group, b) in enumerate(zip(stmt.children, case_blocks)):
            self.guard_stack.append((selector, labels[i]))
            end = self.lower(group, b)
            self.guard_stack.pop()
            self.edge(end, case_blocks[i + 1] if i + 1 < len(case_blocks) else after, "seq")
        self.jump_stack.pop()
        return after

    def lower_try(self, stmt: AstNode, cur: int) -> int | None:
        body, *rest = stmt.children
        catches = [c for c in rest if c.kind == "catch"]
        finally_seq = next((c for c in rest if c.kind == "sequence"), None)
        heads = [(self.new_block(), c.detail["types"]) for c in catches]
        body_b = self.new_block()
        self.edge(cur, body_b, "seq")
        self.try_stack.append(heads)
        b_end = self.lower(body, body_b)
        self.try_stack.pop()
        join = self.new_block()
        self.edge(b_end, join, "seq")
        for (head, types), c in zip(heads, catches):
            self.guard_stack.append(("exception", types))
            c_end = self.lower(c.children[0], head)
            self.guard_stack.pop()
            self.edge(c_end, join, "seq")
        if finally_seq is not None:
            return self.lower(finally_seq, join)
        return join


def build_cfg(method: MethodDecl) -> Cfg:
    """Lower a method body to a CFG whose blocks are all reachable from the entry."""
    if method.body is None:
        raise ValueError(f"{method.method_id} has no body")
    b = _CfgBuilder()
    entry = b.new_block()
    end = b.lower(method.body, entry)
    if end is not None:
        b.exits.add(end)
    # Drop unreachable blocks (dead code, merges after all-returning branches).
    reach = {entry}
    queue = deque([entry])
    succ: dict[int, list[int]] = {}
    for e in b.edges:
        succ.setdefault(e.src, []).append(e.dst)
    while queue:
        v = queue.popleft()
        for w in succ.get(v, []):
            if w not in reach:
                reach.add(w)
                queue.append(w)
    remap = {old: new for new, old in enumerate(sorted(reach))}
    blocks = {remap[i]: Block(remap[i], blk.stmts) for i, blk in b.blocks.items() if i in reach}
    edges = [CfgEdge(remap[e.src], remap[e.dst], e.kind, e.label)
             for e in b.edges if e.src in reach and e.dst in reach]
    exits = {remap[x] for x in b.exits if x in reach}
    loops = []
    for lp in b.loops:
        if lp.header not in reach:
            continue
        entries = frozenset((remap[s], remap[d]) for s, d in lp.entry_edges if s in reach and d in reach)
        loops.append(LoopInfo(remap[lp.header], lp.kind, entries))
    cfg = Cfg(blocks, edges, remap[entry], exits, loops, method.method_id, b.guards)
    if loops:
        dom = compute_dominators(cfg)
        cfg.loops = [LoopInfo(lp.header, lp.kind, lp.entry_edges, natural_loop(cfg, dom, lp.header))
                     for lp in loops]
    return cfg


# ---------------------------------------------------------------------------
# Dominators


@dataclass
class DomTree:
    idom: dict[Hashable, Hashable]
    entry: Hashable

    def dominates(self, a, b) -> bool:
        """True if ``a`` dominates ``b`` (reflexive)."""
        while True:
            if a == b:
                return True
            parent = self.idom[b]
            if parent == b:
                return False
            b = parent

    def strictly_dominates(self, a, b) -> bool:
        return a != b and self.dominates(a, b)

    def children(self) -> dict:
        out: dict = {n: [] for n in self.idom}
        for n, p in self.idom.items():
            if n != p:
                out[p].append(n)
        return out


def dominators(nodes: Iterable[Hashable], succ: Callable[[Hashable], Iterable[Hashable]],
               entry: Hashable) -> DomTree:
    """Immediate dominators by the iterative fixed point over reverse postorder."""
    nodes = list(nodes)
    order: list = []
    seen = {entry}
    stack = [(entry, iter(succ(entry)))]
    while stack:
        v, it = stack[-1]
        for w in it:
            if w not in seen:
                seen.add(w)
                stack.append((w, iter(succ(w))))
                break
        else:
            stack.pop()
            order.append(v)
    missing = [n for n in nodes if n not in seen]
    if missing:
        raise DominatorError(f"unreachable from entry: {sorted(map(str, missing))}")
    rpo = list(reversed(order))
    number = {v: i for i, v in enumerate(rpo)}
    preds: dict = {v: [] for v in rpo}
    for v in rpo:
        for w in succ(v):
            preds[w].append(v)

    idom: dict = {entry: entry}

    def intersect(a, b):
        while a != b:
            while number[a] > number[b]:
                a = idom[a]
            while number[b] > number[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for v in rpo[1:]:
            new = None
            for p in preds[v]:
                if p in idom:
                    new = p if new is None else intersect(p, new)
            if idom.get(v) != new:
                idom[v] = new
                changed = True
    return DomTree(idom, entry)


def compute_dominators(cfg: Cfg) -> DomTree:
    succ: dict[int, list[int]] = {b: [] for b in cfg.blocks}
    for e in cfg.edges:
        succ[e.src].append(e.dst)
    return dominators(cfg.blocks, lambda b: succ[b], cfg.entry)


def natural_loop(cfg: Cfg, dom: DomTree, header: int) -> frozenset[int]:
    """Header plus every block reaching a back-edge source without passing the header."""
    body = {header}
    stack = [e.src for e in cfg.edges if e.dst == header and dom.dominates(header, e.src)]
    while stack:
        v = stack.pop()
        if v in body:
            continue
        body.add(v)
        stack.extend(cfg.predecessors(v))
    return frozenset(body)


# ---------------------------------------------------------------------------
# Log-oriented CFG


@dataclass(frozen=True)
class LNode:
    id: int
    kind: str  # entry | exit | log | call | branch | merge
    template_id: int | None = None
    condition: str | None = None
    callee: str | None = None
    args: tuple[str, ...] = ()
    site: str = ""
    constraints: tuple = ()
    block: int | None = None

    def label(self) -> str:
        if self.kind == "log":
            return f"log T{self.template_id}"
        if self.kind == "call":
            return f"call {self.callee}({', '.join(self.args)})"
        if self.kind == "branch":
            return f"branch {self.condition}"
        return self.kind


@dataclass(frozen=True)
class LEdge:
    src: int
    dst: int
    kind: str
    label: object = None
    origin: tuple[tuple[int, int], ...] = ()  # CFG edges this edge stands for
    raises: bool = False  # leaves the method by an uncaught throw


@dataclass(frozen=True)
class LoopAnnotation:
    header: int
    body: frozenset[int]
    entry_edges: frozenset[tuple[int, int]]
    kind: str

    @property
    def at_least_once(self) -> bool:
        return self.kind == "do"


@dataclass
class Lcfg:
    method_id: str
    nodes: dict[int, LNode]
    edges: list[LEdge]
    entry: int
    exit: int
    loops: list[LoopAnnotation] = field(default_factory=list)
    precedes: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        self._out: dict[int, list[LEdge]] = {}
        for e in self.edges:
            self._out.setdefault(e.src, []).append(e)

    def out_edges(self, n: int) -> list[LEdge]:
        return self._out.get(n, [])

    def log_nodes(self) -> list[LNode]:
        return [n for n in self.nodes.values() if n.kind == "log"]

    def call_nodes(self) -> list[LNode]:
        return [n for n in self.nodes.values() if n.kind == "call"]

    def to_dot(self) -> str:
        lines = [f'digraph "{self.method_id}" {{']
        shapes = {"entry": "circle", "exit": "doublecircle", "branch": "diamond", "merge": "point"}
        for n in self.nodes.values():
            lines.append(f'  n{n.id} [shape={shapes.get(n.kind, "box")}, label="{_esc(n.label())}"];')
        for e in self.edges:
            lab = "" if e.label is None else f' [label="{_esc(e.label)}"]'
            if e.kind == "back":
                lab = ' [style=dashed]' if e.label is None else f' [style=dashed, label="{_esc(e.label)}"]'
            lines.append(f"  n{e.src} -> n{e.dst}{lab};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_lcfg(cfg: Cfg, dom: DomTree | None, templates: TemplateTable | dict) -> Lcfg:
    """Reduce ``cfg`` to log points, call sites, branches and merges.

    ``templates`` maps ``(method_id, site)`` to a ``LogTemplate`` (a
    ``TemplateTable`` works). Log calls without a template are elided.
    """
    by_site = templates.by_site if isinstance(templates, TemplateTable) else templates
    if dom is None:
        dom = compute_dominators(cfg)
    nodes: dict[int, LNode] = {}

    def add(kind: str, **kw) -> int:
        nid = len(nodes)
        nodes[nid] = LNode(nid, kind, **kw)
        return nid

    entry = add("entry")
    exit_ = add("exit")
    preds: dict[int, int] = {b: 0 for b in cfg.blocks}
    for e in cfg.edges:
        preds[e.dst] += 1
    out: dict[int, list[CfgEdge]] = {b: [] for b in cfg.blocks}
    for e in cfg.edges:
        out[e.src].append(e)

    block_nodes: dict[int, list[int]] = {}
    for bid, blk in cfg.blocks.items():
        ids: list[int] = []
        if preds[bid] >= 2:
            ids.append(add("merge", block=bid))
        for s in blk.stmts:
            if s.kind == "log-call":
                t = by_site.get((cfg.method_id, s.site))
                if t is not None:
                    ids.append(add("log", template_id=t.template_id, site=s.site, block=bid))
            elif s.kind == "method-call":
                ids.append(add("call", callee=s.detail["callee"], args=tuple(s.detail["args"]), site=s.site,
                               constraints=cfg.guards.get(s.site, ()), block=bid))
        term = blk.terminator
        if term is not None:
            cond = term.detail.get("condition", term.detail.get("selector", ""))
            ids.append(add("branch", condition=cond, site=term.site, block=bid))
        elif not ids and (len(out[bid]) > 1 or any(e.kind == "exception" for e in out[bid])):
            # a bare throw inside a try: keep a node so the exception outcome is not contracted away
            last = blk.stmts[-1] if blk.stmts else None
            ids.append(add("branch", condition=last.detail.get("text", last.kind) if last else "",
                           site=last.site if last else "", block=bid))
        if ids:
            block_nodes[bid] = ids

    def raising(bid: int) -> bool:
        stmts = cfg.blocks[bid].stmts
        return bool(stmts) and stmts[-1].kind == "throw" and not out[bid]

    edges: list[LEdge] = [LEdge(entry, -1, "seq")]
    for ids in block_nodes.values():
        for a, b in zip(ids, ids[1:]):
            edges.append(LEdge(a, b, "seq", None, ()))

    def resolve(bid: int) -> tuple[int, tuple[tuple[int, int], ...], bool]:
        """First Lcfg node reached from block ``bid``, the pass-through hops taken, and whether it raises."""
        hops: list[tuple[int, int]] = []
        while bid not in block_nodes:
            if len(hops) > len(cfg.blocks):
                raise AssertionError(f"empty cycle at block {bid}")
            succs = out[bid]
            if not succs:
                return exit_, tuple(hops), raising(bid)
            hops.append((bid, succs[0].dst))
            bid = succs[0].dst
        return block_nodes[bid][0], tuple(hops), False

    first, hops, raises = resolve(cfg.entry)
    edges[0] = LEdge(entry, first, "seq", None, hops, raises)
    for bid, ids in block_nodes.items():
        tail = ids[-1]
        for e in out[bid]:
            dst, hops, raises = resolve(e.dst)
            edges.append(LEdge(tail, dst, e.kind, e.label, ((e.src, e.dst),) + hops, raises))
        if not out[bid]:
            edges.append(LEdge(tail, exit_, "seq", None, (), raising(bid)))

    loops = []
    for lp in cfg.loops:
        body_nodes = frozenset(n for n, node in nodes.items() if node.block in lp.body)
        loops.append(LoopAnnotation(resolve(lp.header)[0], body_nodes, lp.entry_edges, lp.kind))

    lcfg = Lcfg(cfg.method_id, nodes, edges, entry, exit_, loops)
    lcfg.precedes = _log_ordering(lcfg)
    return lcfg


def _log_ordering(lcfg: Lcfg) -> set[tuple[int, int]]:
    """Template pairs (a, b) where log a dominates log b in the Lcfg."""
    succ: dict[int, list[int]] = {n: [] for n in lcfg.nodes}
    for e in lcfg.edges:
        succ[e.src].append(e.dst)
    reach = {lcfg.entry}
    stack = [lcfg.entry]
    while stack:
        v = stack.pop()
        for w in succ[v]:
            if w not in reach:
                reach.add(w)
                stack.append(w)
    dom = dominators(reach, lambda n: succ[n], lcfg.entry)
    logs = [n for n in lcfg.log_nodes() if n.id in reach]
    pairs = set()
    for a in logs:
        for b in logs:
            if a.id != b.id and dom.dominates(a.id, b.id):
                pairs.add((a.template_id, b.template_id))
    return pairs


# ---------------------------------------------------------------------------
# Local paths


@dataclass(frozen=True)
class Step:
    kind: str  # "log" | "call"
    template_id: int | None = None
    callee: str | None = None
    args: tuple[str, ...] = ()
    site: str = ""

    def key(self) -> tuple:
        return (self.kind, self.template_id if self.kind == "log" else self.callee, self.site)


@dataclass(frozen=True)
class LocalPath:
    method_id: str
    steps: tuple[Step, ...]
    path_conditions: tuple[tuple[str, object], ...]
    index: int = 0
    # number of steps taken before each condition was decided
    cond_positions: tuple[int, ...] = ()
    # call steps after which the path takes an exception edge
    raising_steps: tuple[int, ...] = ()
    raises: bool = False  # ends in an uncaught throw

    def conditions_before(self, step_index: int) -> tuple[tuple[str, object], ...]:
        return tuple(c for c, pos in zip(self.path_conditions, self.cond_positions) if pos <= step_index)

    @property
    def log_templates(self) -> tuple[int, ...]:
        return tuple(s.template_id for s in self.steps if s.kind == "log")

    def signature(self) -> tuple:
        return (tuple(s.key() for s in self.steps), self.path_conditions)

    def render(self) -> str:
        parts = []
        conds = list(zip(self.path_conditions, self.cond_positions or [0] * len(self.path_conditions)))
        for i in range(len(self.steps) + 1):
            parts.extend(f"[{c} -> {outcome}]" for (c, outcome), pos in conds if pos == i)
            if i < len(self.steps):
                s = self.steps[i]
                parts.append(f"log T{s.template_id}" if s.kind == "log"
                             else f"call {s.callee}({', '.join(s.args)})" + (" !" if i in self.raising_steps else ""))
        if self.raises:
            parts.append("raise")
        return " ; ".join(parts)


@dataclass
class PathSet:
    paths: list[LocalPath]
    truncated: bool = False

    def __iter__(self):
        return iter(self.paths)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        return self.paths[i]


MAX_PATH_NODES = 5000


def enumerate_local_paths(lcfg: Lcfg, bounds) -> PathSet:
    """Depth-first walk of entry->exit paths with per-loop iteration bounds.

    An iteration is one traversal of a loop's body-entry edge; on leaving a
    loop its iteration count must lie in ``bounds.loop_unroll`` (do-loops run
    at least once, so 0 is read as 1). Out-edges are followed in stored order:
    true before false, cases in source order, exceptional edges last.
    """
    unroll = set(bounds.loop_unroll)
    limit = bounds.max_local_paths_per_method
    loops = lcfg.loops
    allowed = [({max(1, k) for k in unroll} if lp.at_least_once else unroll) for lp in loops]
    max_iter = [max(a) for a in allowed]

    paths: list[LocalPath] = []
    seen: set[tuple] = set()
    truncated = False
    steps: list[Step] = []
    conds: list[tuple[str, object]] = []
    positions: list[int] = []
    raising: list[int] = []

    def node_step(nid: int) -> Step | None:
        n = lcfg.nodes[nid]
        if n.kind == "log":
            return Step("log", template_id=n.template_id, site=n.site)
        if n.kind == "call":
            return Step("call", callee=n.callee, args=n.args, site=n.site)
        return None

    def advance(edge: LEdge, counts: tuple) -> tuple | None:
        counts = list(counts)
        for i, lp in enumerate(loops):
            src_in, dst_in = edge.src in lp.body, edge.dst in lp.body
            if dst_in and not src_in:
                counts[i] = 0
            if src_in and not dst_in:
                if counts[i] is None or counts[i] not in allowed[i]:
                    return None
                counts[i] = None
            if any(h in lp.entry_edges for h in edge.origin):
                counts[i] = (counts[i] or 0) + 1
                if counts[i] > max_iter[i]:
                    return None
        return tuple(counts)

    # Frames: [node, next edge index, loop counts, len(steps), len(conds), len(raising)],
    # lengths taken after the node's own step was pushed.
    stack: list[list] = []

    def emit(raises: bool) -> bool:
        sig = (tuple(s.key() for s in steps), tuple(conds), tuple(positions), tuple(raising), raises)
        if sig in seen:
            return True
        if len(paths) >= limit:
            return False
        seen.add(sig)
        paths.append(LocalPath(lcfg.method_id, tuple(steps), tuple(conds), len(paths), tuple(positions),
                               tuple(raising), raises))
        return True

    def push(nid: int, counts: tuple, raises: bool = False) -> bool:
        st = node_step(nid)
        if st is not None:
            steps.append(st)
        if nid == lcfg.exit:
            return emit(raises)
        stack.append([nid, 0, counts, len(steps), len(conds), len(raising)])
        return True

    push(lcfg.entry, tuple(None for _ in loops))
    while stack:
        frame = stack[-1]
        nid, idx, counts, n_steps, n_conds, n_raising = frame
        del steps[n_steps:]
        del conds[n_conds:]
        del positions[n_conds:]
        del raising[n_raising:]
        edges = lcfg.out_edges(nid)
        if idx >= len(edges) or len(stack) > MAX_PATH_NODES:
            stack.pop()
            continue
        frame[1] = idx + 1
        e = edges[idx]
        new_counts = advance(e, counts)
        if new_counts is None:
            continue
        if e.label is not None:
            node = lcfg.nodes[e.src]
            cond = "exception" if e.kind == "exception" or node.kind != "branch" else node.condition
            conds.append((cond, e.label))
            positions.append(len(steps))
        if e.kind == "exception" and lcfg.nodes[e.src].kind == "call":
            raising.append(len(steps) - 1)
        if not push(e.dst, new_counts, e.raises):
            truncated = True
            break
    return PathSet(paths, truncated)


@dataclass
class MethodFlow:
    """Everything the assembler needs about one method."""

    method: MethodDecl
    cfg: Cfg
    dom: DomTree
    lcfg: Lcfg
    paths: PathSet


def analyze_method(method: MethodDecl, templates: TemplateTable, bounds) -> MethodFlow:
    cfg = build_cfg(method)
    dom = compute_dominators(cfg)
    lcfg = build_lcfg(cfg, dom, templates)
    return MethodFlow(method, cfg, dom, lcfg, enumerate_local_paths(lcfg, bounds))
