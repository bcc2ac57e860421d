"""Source ingestion: Java subset -> method ASTs -> log templates.

Parsing is delegated to tree-sitter's Java grammar; this module lowers the
concrete syntax tree into a small statement-level AST (``AstNode``) that the
later phases consume. Calls are resolved statically by declared receiver type,
method name and arity. Anything outside the supported subset survives as an
``other-statement`` node.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import tree_sitter_java
from tree_sitter import Language, Node, Parser

from .config import LoggingConfig, SubsetConfig

log = logging.getLogger(__name__)

NODE_KINDS = (
    "sequence", "if", "else-branch", "switch-case", "loop", "try", "catch",
    "log-call", "method-call", "return", "throw", "other-statement",
)
PLACEHOLDER = "<*>"
PLACEHOLDER_KINDS = ("numeric", "identifier", "path", "address", "generic")

_JAVA = Language(tree_sitter_java.language())

NUMERIC_TYPES = {"int", "long", "short", "byte", "double", "float",
                 "Integer", "Long", "Short", "Byte", "Double", "Float"}
_NUMERIC_LITERALS = {"decimal_integer_literal", "hex_integer_literal", "octal_integer_literal",
                     "binary_integer_literal", "decimal_floating_point_literal",
                     "hex_floating_point_literal"}


class FrontendError(Exception):
    pass


class DuplicateMethodError(FrontendError):
    def __init__(self, method_id: str, first: str, second: str):
        super().__init__(f"duplicate method id {method_id!r}: defined at {first} and at {second}")
        self.method_id = method_id
        self.locations = (first, second)


class EmptyLogMessage(FrontendError):
    """A logging call with no message argument."""


@dataclass
class AstNode:
    kind: str
    children: list["AstNode"] = field(default_factory=list)
    span: tuple[int, int] = (0, 0)
    detail: dict = field(default_factory=dict)

    def walk(self) -> Iterator["AstNode"]:
        """Preorder traversal; for statement trees this is source order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "span": list(self.span),
            "detail": self.detail,
            "children": [c.to_dict() for c in self.children],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AstNode":
        return cls(
            kind=d["kind"],
            span=tuple(d["span"]),
            detail=d["detail"],
            children=[cls.from_dict(c) for c in d["children"]],
        )

    @property
    def site(self) -> str:
        return self.detail.get("site", "")


@dataclass
class MethodDecl:
    method_id: str
    name: str
    owner: str
    params: list[tuple[str, str]]
    body: AstNode | None
    source_text: str
    path: str
    line: int
    is_abstract: bool = False
    return_type: str = ""

    @property
    def location(self) -> str:
        return f"{self.path}:{self.line}"

    def param_type(self, name: str) -> str | None:
        for pname, ptype in self.params:
            if pname == name:
                return ptype
        return None


@dataclass
class SourceUnit:
    path: str
    qualified_type_name: str
    methods: list[MethodDecl] = field(default_factory=list)


@dataclass
class Issue:
    path: str
    message: str


@dataclass
class ProjectIndex:
    methods: dict[str, MethodDecl] = field(default_factory=dict)
    units: list[SourceUnit] = field(default_factory=list)
    errors: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    def __len__(self):
        return len(self.methods)

    def __getitem__(self, method_id: str) -> MethodDecl:
        return self.methods[method_id]

    def __contains__(self, method_id) -> bool:
        return method_id in self.methods

    def __iter__(self):
        return iter(self.methods)


@dataclass(frozen=True)
class LogTemplate:
    template_id: int
    pattern: str
    level: str
    location: tuple[str, int]
    placeholder_kinds: tuple[str, ...]
    placeholder_exprs: tuple[str, ...] = ()
    site: str = ""

    @property
    def method_id(self) -> str:
        return self.location[0]

    def dump_line(self) -> str:
        return f"{self.template_id}\t{self.level}\t{self.location[0]}\t{self.location[1]}\t{self.pattern}"


# ---------------------------------------------------------------------------
# Declarations pass


@dataclass
class _TypeInfo:
    qualified: str
    simple: str
    package: str
    imports: dict[str, str]
    superclass: str | None
    outer: str | None
    is_interface: bool
    fields: dict[str, str]
    methods: dict[tuple[str, int], str] = field(default_factory=dict)  # (name, arity) -> method_id
    path: str = ""


@dataclass
class _RawMethod:
    method_id: str
    name: str
    owner: _TypeInfo
    node: Node
    source: bytes
    path: str


def _text(node: Node | None) -> str:
    if node is None:
        return ""
    return node.text.decode("utf-8", errors="replace")


def _norm_ws(s: str) -> str:
    return " ".join(s.split())


def _strip_generics(type_text: str) -> str:
    t = re.sub(r"<.*>", "", type_text).strip()
    return t.replace("...", "[]")


def make_parser() -> Parser:
    return Parser(_JAVA)


def _iter_type_decls(node: Node):
    for child in node.named_children:
        if child.type in ("class_declaration", "interface_declaration", "enum_declaration",
                          "record_declaration"):
            yield child


def _body_members(body: Node):
    for child in body.named_children:
        if child.type == "enum_body_declarations":
            yield from child.named_children
        else:
            yield child


def _formal_params(params_node: Node | None) -> list[tuple[str, str]]:
    out = []
    if params_node is None:
        return out
    for p in params_node.named_children:
        if p.type == "formal_parameter":
            out.append((_text(p.child_by_field_name("name")), _text(p.child_by_field_name("type"))))
        elif p.type == "spread_parameter":
            typ = next((c for c in p.named_children if c.type not in ("modifiers", "variable_declarator")), None)
            decl = next((c for c in p.named_children if c.type == "variable_declarator"), None)
            name = _text(decl.child_by_field_name("name")) if decl else ""
            out.append((name, _text(typ) + "..."))
    return out


def _collect_file(path: str, source: bytes, tree, types: dict[str, _TypeInfo],
                  raw_methods: list[_RawMethod], units: list[SourceUnit]):
    root = tree.root_node
    package = ""
    imports: dict[str, str] = {}
    for child in root.named_children:
        if child.type == "package_declaration":
            name = next((c for c in child.named_children if c.type in ("scoped_identifier", "identifier")), None)
            package = _text(name)
        elif child.type == "import_declaration":
            name = next((c for c in child.named_children if c.type in ("scoped_identifier", "identifier")), None)
            qual = _text(name)
            if qual and "*" not in _text(child):
                imports[qual.rsplit(".", 1)[-1]] = qual

    def visit_type(decl: Node, outer: _TypeInfo | None):
        simple = _text(decl.child_by_field_name("name"))
        if outer is not None:
            qualified = f"{outer.qualified}.{simple}"
        else:
            qualified = f"{package}.{simple}" if package else simple
        superclass = None
        sc = decl.child_by_field_name("superclass")
        if sc is not None:
            superclass = _strip_generics(_text(sc).replace("extends", "", 1).strip())
        info = _TypeInfo(qualified, simple, package, imports, superclass,
                         outer.qualified if outer else None,
                         decl.type == "interface_declaration", {}, path=path)
        if qualified in types:
            raise FrontendError(f"duplicate type {qualified!r} in {types[qualified].path} and {path}")
        types[qualified] = info
        unit = SourceUnit(path=path, qualified_type_name=qualified)
        units.append(unit)
        body = decl.child_by_field_name("body")
        if body is None:
            return
        for member in _body_members(body):
            if member.type == "field_declaration":
                ftype = _strip_generics(_text(member.child_by_field_name("type")))
                for d in member.named_children:
                    if d.type == "variable_declarator":
                        info.fields[_text(d.child_by_field_name("name"))] = ftype
            elif member.type in ("method_declaration", "constructor_declaration"):
                if member.type == "constructor_declaration":
                    name = "<init>"
                else:
                    name = _text(member.child_by_field_name("name"))
                params = _formal_params(member.child_by_field_name("parameters"))
                method_id = f"{qualified}.{name}/{len(params)}"
                raw_methods.append(_RawMethod(method_id, name, info, member, source, path))
                info.methods.setdefault((name, len(params)), method_id)
            elif member.type in ("class_declaration", "interface_declaration", "enum_declaration",
                                 "record_declaration"):
                visit_type(member, info)

    for decl in _iter_type_decls(root):
        visit_type(decl, None)


# ---------------------------------------------------------------------------
# Lowering pass


_CAMEL = re.compile(r"[A-Z]+(?![a-z])|[A-Z]?[a-z0-9]+")
_FORMAT_SPEC = re.compile(r"%%|%n|%(?:\d+\$)?[-#+0,(]*\d*(?:\.\d+)?[sdfxXoeEgGcbhH]")
_SLOT = re.compile(r"\{\}|<\*>")
_NUMERIC_GETTER = re.compile(r"^get\w*(?:Len|Length|Size|Count|Seqno|Bytes|Millis|Port)$")


def infer_placeholder_kind(expr: str, numeric_context: bool = False) -> str:
    """Name-based kind heuristic for a placeholder's source expression."""
    words = [w.lower() for w in _CAMEL.findall(expr)]
    low = expr.lower()
    if any(w in ("id", "ids", "uuid") for w in words) or "blk" in low:
        return "identifier"
    # A count of paths is a number, not a path.
    if numeric_context:
        return "numeric"
    if "addr" in low or "host" in low:
        return "address"
    if "path" in low or "file" in low:
        return "path"
    return "generic"


def _decode_java_string(lit: Node) -> str:
    parts = []
    for c in lit.named_children:
        if c.type == "string_fragment":
            parts.append(_text(c))
        elif c.type == "escape_sequence":
            esc = _text(c)
            parts.append({"\\n": "\n", "\\t": "\t", "\\r": "\r", "\\\"": "\"", "\\'": "'",
                          "\\\\": "\\", "\\b": "\b", "\\f": "\f", "\\0": "\0"}.get(esc, esc))
    if not lit.named_children:
        body = _text(lit)
        if body.startswith('"""'):
            return body[3:-3]
        return body[1:-1]
    return "".join(parts)


class _MethodLowerer:
    """Lowers one method body; resolves call targets against the project types."""

    def __init__(self, raw: _RawMethod, types: dict[str, _TypeInfo], by_simple: dict[str, list[str]],
                 logging_config: LoggingConfig, method_index: dict[str, _RawMethod]):
        self.raw = raw
        self.method_index = method_index
        self.owner = raw.owner
        self.types = types
        self.by_simple = by_simple
        self.logging_config = logging_config
        self.params = _formal_params(raw.node.child_by_field_name("parameters"))
        self.locals: dict[str, str] = {name: _strip_generics(t) for name, t in self.params}
        body = raw.node.child_by_field_name("body")
        if body is not None:
            self._collect_locals(body)

    # -- type resolution -------------------------------------------------

    def _collect_locals(self, node: Node):
        stack = [node]
        while stack:
            n = stack.pop()
            if n.type in ("lambda_expression", "class_body"):
                continue
            if n.type in ("local_variable_declaration", "resource"):
                typ = _strip_generics(_text(n.child_by_field_name("type")))
                if n.type == "resource":
                    name = _text(n.child_by_field_name("name"))
                    if name:
                        self.locals.setdefault(name, typ)
                for d in n.named_children:
                    if d.type == "variable_declarator":
                        self.locals.setdefault(_text(d.child_by_field_name("name")), typ)
            elif n.type == "enhanced_for_statement":
                self.locals.setdefault(_text(n.child_by_field_name("name")),
                                       _strip_generics(_text(n.child_by_field_name("type"))))
            elif n.type == "catch_formal_parameter":
                name = _text(n.child_by_field_name("name"))
                ctype = next((c for c in n.named_children if c.type == "catch_type"), None)
                self.locals.setdefault(name, _text(ctype).split("|")[0].strip())
            stack.extend(n.named_children)

    def resolve_type(self, simple: str) -> str:
        simple = _strip_generics(simple)
        if not simple:
            return simple
        if simple in self.types:
            return simple
        head = simple.split(".")[0]
        imports = self.owner.imports
        if head in imports:
            return imports[head] + simple[len(head):]
        # Nested types visible from the owner and its outers.
        scope: str | None = self.owner.qualified
        while scope:
            cand = f"{scope}.{simple}"
            if cand in self.types:
                return cand
            scope = self.types[scope].outer if scope in self.types else None
        if self.owner.package and f"{self.owner.package}.{simple}" in self.types:
            return f"{self.owner.package}.{simple}"
        matches = self.by_simple.get(simple, [])
        if len(matches) == 1:
            return matches[0]
        return simple

    def field_type(self, type_name: str, name: str) -> str | None:
        seen = set()
        cur: str | None = type_name
        while cur and cur in self.types and cur not in seen:
            seen.add(cur)
            info = self.types[cur]
            if name in info.fields:
                return info.fields[name]
            cur = self._super_of(info)
        return None

    def _super_of(self, info: _TypeInfo) -> str | None:
        if not info.superclass:
            return None
        lowerer_owner = self.owner
        try:
            self.owner = info
            return self.resolve_type(info.superclass)
        finally:
            self.owner = lowerer_owner

    def var_type(self, name: str) -> str | None:
        if name in self.locals:
            return self.resolve_type(self.locals[name])
        scope: str | None = self.owner.qualified
        while scope:
            ftype = self.field_type(scope, name)
            if ftype is not None:
                return self.resolve_type(ftype)
            scope = self.types[scope].outer if scope in self.types else None
        return None

    def is_numeric_expr(self, node: Node) -> bool:
        if node.type in _NUMERIC_LITERALS:
            return True
        if node.type == "identifier":
            t = self.locals.get(_text(node))
            if t is None:
                t = self.field_type(self.owner.qualified, _text(node))
            return t in NUMERIC_TYPES
        if node.type == "method_invocation":
            name = _text(node.child_by_field_name("name"))
            return name in ("size", "length") or bool(_NUMERIC_GETTER.search(name))
        if node.type == "field_access":
            return _text(node.child_by_field_name("field")) == "length"
        if node.type == "parenthesized_expression" and node.named_children:
            return self.is_numeric_expr(node.named_children[0])
        if node.type in ("binary_expression",):
            op = _text(node.child_by_field_name("operator"))
            if op in ("-", "*", "/", "%"):
                return True
        return False

    def expr_type(self, node: Node | None) -> str | None:
        """Best-effort static type of a receiver expression."""
        if node is None:
            return self.owner.qualified
        t = node.type
        if t == "this":
            return self.owner.qualified
        if t == "super":
            return self._super_of(self.owner)
        if t == "identifier":
            name = _text(node)
            vt = self.var_type(name)
            if vt is not None:
                return vt
            resolved = self.resolve_type(name)
            if resolved in self.types or resolved != name or name[:1].isupper():
                return resolved
            return None
        if t == "field_access":
            obj = node.child_by_field_name("object")
            fname = _text(node.child_by_field_name("field"))
            if obj is not None and obj.type == "this":
                ft = self.field_type(self.owner.qualified, fname)
                return self.resolve_type(ft) if ft else None
            base = self.expr_type(obj)
            if base and base in self.types:
                ft = self.field_type(base, fname)
                return self.resolve_type(ft) if ft else None
            # package-qualified type name, e.g. org.slf4j.LoggerFactory
            return self.resolve_type(_text(node))
        if t == "scoped_identifier" or t == "type_identifier":
            return self.resolve_type(_text(node))
        if t == "object_creation_expression":
            return self.resolve_type(_text(node.child_by_field_name("type")))
        if t == "parenthesized_expression" and node.named_children:
            return self.expr_type(node.named_children[-1])
        if t == "cast_expression":
            return self.resolve_type(_text(node.child_by_field_name("type")))
        if t == "method_invocation":
            callee = self.resolve_call(node)[0]
            raw = self.method_index.get(callee)
            if raw is not None:
                rtype = _text(raw.node.child_by_field_name("type"))
                return self.resolve_type(rtype) if rtype else None
            return None
        return None

    def lookup_method(self, type_name: str | None, name: str, arity: int) -> str | None:
        seen = set()
        cur = type_name
        while cur and cur in self.types and cur not in seen:
            seen.add(cur)
            info = self.types[cur]
            if (name, arity) in info.methods:
                return info.methods[(name, arity)]
            cur = self._super_of(info)
        return None

    def resolve_call(self, node: Node) -> tuple[str, list[str], str | None]:
        """Return (callee key, candidate API names, receiver type) for an invocation."""
        name = _text(node.child_by_field_name("name"))
        args = node.child_by_field_name("arguments")
        arity = len(args.named_children) if args is not None else 0
        obj = node.child_by_field_name("object")
        candidates: list[str] = []
        if obj is None:
            scope: str | None = self.owner.qualified
            while scope:
                found = self.lookup_method(scope, name, arity)
                if found:
                    return found, [f"{scope}.{name}"], scope
                scope = self.types[scope].outer if scope in self.types else None
            return f"{self.owner.qualified}.{name}/{arity}", [f"{self.owner.qualified}.{name}"], self.owner.qualified
        rtype = self.expr_type(obj)
        if rtype:
            candidates.append(f"{rtype}.{name}")
            simple = rtype.rsplit(".", 1)[-1]
            if simple != rtype:
                candidates.append(f"{simple}.{name}")
        candidates.append(f"{_norm_ws(_text(obj))}.{name}")
        if rtype:
            found = self.lookup_method(rtype, name, arity)
            if found:
                return found, candidates, rtype
            return f"{rtype}.{name}/{arity}", candidates, rtype
        return f"?.{name}/{arity}", candidates, None

    def match_logging(self, candidates: list[str]) -> tuple[str, str] | None:
        for api in self.logging_config.apis:
            for cand in candidates:
                if fnmatch.fnmatchcase(cand, api.pattern):
                    return api.pattern, api.level
        return None

    # -- statements ------------------------------------------------------

    def span(self, node: Node) -> tuple[int, int]:
        return (node.start_point[0] + 1, node.end_point[0] + 1)

    def site(self, node: Node) -> str:
        return f"{node.start_point[0] + 1}:{node.start_point[1] + 1}"

    def other(self, node: Node, **extra) -> AstNode:
        detail = {"construct": node.type, "text": _norm_ws(_text(node))}
        detail.update(extra)
        return AstNode("other-statement", [], self.span(node), detail)

    def seq(self, nodes: list[AstNode], span: tuple[int, int], **detail) -> AstNode:
        return AstNode("sequence", nodes, span, dict(detail))

    def lower_body(self, body: Node) -> AstNode:
        return self.seq(self.lower_block(body), self.span(body))

    def lower_block(self, node: Node | None) -> list[AstNode]:
        if node is None:
            return []
        if node.type in ("block", "constructor_body", "switch_block_statement_group"):
            out: list[AstNode] = []
            for child in node.named_children:
                if child.type in ("switch_label", "line_comment", "block_comment"):
                    continue
                out.extend(self.lower_stmt(child))
            return out
        return self.lower_stmt(node)

    def lower_stmt(self, node: Node) -> list[AstNode]:
        t = node.type
        if t in ("line_comment", "block_comment", ";"):
            return []
        if t == "block":
            return self.lower_block(node)
        if t == "expression_statement":
            expr = node.named_children[0] if node.named_children else None
            if expr is None:
                return []
            calls = self.extract_calls(expr)
            if expr.type == "method_invocation" and calls and calls[-1].site == self.site(expr):
                return calls
            return calls + [self.other(node)]
        if t == "local_variable_declaration":
            return self.extract_calls(node) + [self.other(node)]
        if t == "if_statement":
            cond = node.child_by_field_name("condition")
            pre = self.extract_calls(cond)
            then = node.child_by_field_name("consequence")
            alt = node.child_by_field_name("alternative")
            children = [self.seq(self.lower_block(then), self.span(then))]
            if alt is not None:
                children.append(AstNode("else-branch", [self.seq(self.lower_block(alt), self.span(alt))],
                                        self.span(alt), {}))
            return pre + [AstNode("if", children, self.span(node),
                                  {"condition": _strip_parens(_text(cond)), "site": self.site(node)})]
        if t == "while_statement":
            cond = node.child_by_field_name("condition")
            body = node.child_by_field_name("body")
            return self.extract_calls(cond) + [AstNode(
                "loop", [self.seq(self.lower_block(body), self.span(body))], self.span(node),
                {"loop_kind": "while", "condition": _strip_parens(_text(cond)), "site": self.site(node)})]
        if t == "do_statement":
            cond = node.child_by_field_name("condition")
            body = node.child_by_field_name("body")
            return [AstNode(
                "loop", [self.seq(self.lower_block(body), self.span(body))], self.span(node),
                {"loop_kind": "do", "condition": _strip_parens(_text(cond)), "site": self.site(node)})]
        if t == "for_statement":
            pre: list[AstNode] = []
            for init in node.children_by_field_name("init"):
                if init.type == "local_variable_declaration":
                    pre.extend(self.lower_stmt(init))
                else:
                    pre.extend(self.extract_calls(init))
            cond = node.child_by_field_name("condition")
            pre.extend(self.extract_calls(cond) if cond is not None else [])
            body = node.child_by_field_name("body")
            body_nodes = self.lower_block(body)
            for upd in node.children_by_field_name("update"):
                body_nodes.extend(self.extract_calls(upd))
            return pre + [AstNode(
                "loop", [self.seq(body_nodes, self.span(body))], self.span(node),
                {"loop_kind": "for", "condition": _norm_ws(_text(cond)) if cond is not None else "true",
                 "site": self.site(node)})]
        if t == "enhanced_for_statement":
            value = node.child_by_field_name("value")
            body = node.child_by_field_name("body")
            header = (f"{_norm_ws(_text(node.child_by_field_name('type')))} "
                      f"{_text(node.child_by_field_name('name'))} : {_norm_ws(_text(value))}")
            return self.extract_calls(value) + [AstNode(
                "loop", [self.seq(self.lower_block(body), self.span(body))], self.span(node),
                {"loop_kind": "foreach", "condition": header, "site": self.site(node)})]
        if t in ("switch_expression", "switch_statement"):
            return self.lower_switch(node)
        if t in ("try_statement", "try_with_resources_statement"):
            return self.lower_try(node)
        if t == "return_statement":
            value = node.named_children[0] if node.named_children else None
            pre = self.extract_calls(value) if value is not None else []
            return pre + [AstNode("return", [], self.span(node),
                                  {"value": _norm_ws(_text(value)) if value is not None else "",
                                   "site": self.site(node)})]
        if t == "throw_statement":
            value = node.named_children[0] if node.named_children else None
            pre = self.extract_calls(value) if value is not None else []
            return pre + [AstNode("throw", [], self.span(node),
                                  {"value": _norm_ws(_text(value)), "site": self.site(node)})]
        if t in ("break_statement", "continue_statement"):
            label = node.named_children[0] if node.named_children else None
            return [self.other(node, jump="break" if t == "break_statement" else "continue",
                               label=_text(label) if label is not None else None)]
        if t == "labeled_statement":
            inner = [c for c in node.named_children if c.type != "identifier"]
            out: list[AstNode] = []
            for c in inner:
                out.extend(self.lower_stmt(c))
            return out
        if t == "synchronized_statement":
            lock = next((c for c in node.named_children if c.type == "parenthesized_expression"), None)
            body = node.child_by_field_name("body")
            return (self.extract_calls(lock) if lock is not None else []) + self.lower_block(body)
        if t == "explicit_constructor_invocation":
            args = node.child_by_field_name("arguments")
            return (self.extract_calls(args) if args is not None else []) + [self.other(node)]
        return [self.other(node)]

    def lower_switch(self, node: Node) -> list[AstNode]:
        cond = node.child_by_field_name("condition")
        body = node.child_by_field_name("body")
        pre = self.extract_calls(cond)
        labels: list[str] = []
        groups: list[AstNode] = []
        for grp in body.named_children if body is not None else []:
            if grp.type == "switch_block_statement_group":
                lab = [_norm_ws(_text(lbl)) for lbl in grp.named_children if lbl.type == "switch_label"]
                labels.append(" | ".join(lab))
                groups.append(self.seq(self.lower_block(grp), self.span(grp)))
            elif grp.type == "switch_rule":
                lab = [_norm_ws(_text(lbl)) for lbl in grp.named_children if lbl.type == "switch_label"]
                labels.append(" | ".join(lab))
                stmts: list[AstNode] = []
                for c in grp.named_children:
                    if c.type == "switch_label":
                        continue
                    if c.type in ("block", "expression_statement", "throw_statement"):
                        stmts.extend(self.lower_stmt(c))
                    else:
                        stmts.extend(self.extract_calls(c))
                if not stmts or stmts[-1].kind not in ("return", "throw"):
                    stmts.append(AstNode("other-statement", [], self.span(grp),
                                         {"construct": "switch_rule_end", "text": "", "jump": "break",
                                          "label": None}))
                groups.append(self.seq(stmts, self.span(grp)))
        return pre + [AstNode("switch-case", groups, self.span(node),
                              {"selector": _strip_parens(_text(cond)), "labels": labels,
                               "site": self.site(node)})]

    def lower_try(self, node: Node) -> list[AstNode]:
        pre: list[AstNode] = []
        resources = node.child_by_field_name("resources")
        if resources is not None:
            for res in resources.named_children:
                pre.extend(self.extract_calls(res))
        body = node.child_by_field_name("body")
        children = [self.seq(self.lower_block(body), self.span(body))]
        for c in node.named_children:
            if c.type == "catch_clause":
                param = next((p for p in c.named_children if p.type == "catch_formal_parameter"), None)
                ctype = next((p for p in param.named_children if p.type == "catch_type"), None) if param else None
                cbody = c.child_by_field_name("body")
                children.append(AstNode(
                    "catch", [self.seq(self.lower_block(cbody), self.span(cbody))], self.span(c),
                    {"types": _norm_ws(_text(ctype)),
                     "var": _text(param.child_by_field_name("name")) if param else ""}))
            elif c.type == "finally_clause":
                fbody = next((p for p in c.named_children if p.type == "block"), None)
                children.append(self.seq(self.lower_block(fbody), self.span(c), finally_block=True))
        return pre + [AstNode("try", children, self.span(node), {"site": self.site(node)})]

    # -- expressions -----------------------------------------------------

    def extract_calls(self, node: Node | None) -> list[AstNode]:
        """Calls inside an expression in evaluation order (arguments first)."""
        out: list[AstNode] = []
        if node is None:
            return out

        def visit(n: Node):
            if n.type == "lambda_expression":
                out.append(self.other(n))
                return
            if n.type == "object_creation_expression":
                for c in n.named_children:
                    if c.type == "argument_list":
                        visit(c)
                out.append(self.ctor_call(n))
                if any(c.type == "class_body" for c in n.named_children):
                    out.append(self.other(n, construct="anonymous_class"))
                return
            if n.type in ("class_body",):
                return
            if n.type == "method_invocation":
                obj = n.child_by_field_name("object")
                if obj is not None:
                    visit(obj)
                args = n.child_by_field_name("arguments")
                if args is not None:
                    visit(args)
                out.append(self.call(n))
                return
            for c in n.named_children:
                visit(c)

        visit(node)
        return out

    def ctor_call(self, node: Node) -> AstNode:
        tname = self.resolve_type(_text(node.child_by_field_name("type")))
        args = node.child_by_field_name("arguments")
        argv = [_norm_ws(_text(a)) for a in args.named_children] if args is not None else []
        callee = self.lookup_method(tname, "<init>", len(argv)) or f"{tname}.<init>/{len(argv)}"
        return AstNode("method-call", [], self.span(node), {
            "callee": callee, "name": "<init>", "receiver": None, "args": argv,
            "api_names": [f"{tname}.<init>"], "site": self.site(node), "text": _norm_ws(_text(node)),
        })

    def call(self, node: Node) -> AstNode:
        callee, candidates, _ = self.resolve_call(node)
        args_node = node.child_by_field_name("arguments")
        arg_nodes = list(args_node.named_children) if args_node is not None else []
        argv = [_norm_ws(_text(a)) for a in arg_nodes]
        obj = node.child_by_field_name("object")
        detail = {
            "callee": callee,
            "name": _text(node.child_by_field_name("name")),
            "receiver": _norm_ws(_text(obj)) if obj is not None else None,
            "args": argv,
            "api_names": candidates,
            "site": self.site(node),
            "text": _norm_ws(_text(node)),
        }
        hit = self.match_logging(candidates)
        if hit is None:
            return AstNode("method-call", [], self.span(node), detail)
        detail["api"], detail["level"] = hit
        detail["message"] = self.message_fragments(arg_nodes)
        return AstNode("log-call", [], self.span(node), detail)

    def message_fragments(self, arg_nodes: list[Node]) -> list[list] | None:
        """Split a log message into ``["lit", text]`` / ``["slot", expr, kind]`` fragments."""
        if not arg_nodes:
            return None
        msg, rest = arg_nodes[0], arg_nodes[1:]
        if (msg.type == "method_invocation" and _text(msg.child_by_field_name("name")) == "format"
                and _text(msg.child_by_field_name("object")) in ("String", "java.lang.String")):
            inner = list(msg.child_by_field_name("arguments").named_children)
            if inner:
                msg, rest = inner[0], inner[1:]
                return self._fragments(msg, rest, printf=True)
        return self._fragments(msg, rest, printf=bool(rest))

    def _fragments(self, msg: Node, fmt_args: list[Node], printf: bool) -> list[list]:
        parts: list[Node] = []

        def flatten(n: Node):
            if n.type == "parenthesized_expression" and len(n.named_children) == 1:
                inner = n.named_children[0]
                # (a + b) is arithmetic unless a string literal makes it a concatenation
                if (inner.type == "binary_expression" and _text(inner.child_by_field_name("operator")) == "+"
                        and _has_string_literal(inner)):
                    flatten(inner)
                    return
            if n.type == "binary_expression" and _text(n.child_by_field_name("operator")) == "+":
                flatten(n.child_by_field_name("left"))
                flatten(n.child_by_field_name("right"))
                return
            parts.append(n)

        flatten(msg)
        frags: list[list] = []
        arg_iter = iter(fmt_args)
        for p in parts:
            if p.type in ("string_literal", "text_block"):
                frags.extend(self._literal_fragments(_decode_java_string(p), arg_iter, printf))
            elif p.type == "character_literal":
                frags.append(["lit", _text(p)[1:-1]])
            else:
                expr = _norm_ws(_text(p))
                frags.append(["slot", expr, infer_placeholder_kind(expr, self.is_numeric_expr(p))])
        return frags

    def _literal_fragments(self, s: str, arg_iter, printf: bool) -> list[list]:
        out: list[list] = []
        pattern = re.compile(_SLOT.pattern + "|" + _FORMAT_SPEC.pattern) if printf else _SLOT
        pos = 0
        for m in pattern.finditer(s):
            tok = m.group(0)
            if tok == "%%":
                out.append(["lit", s[pos:m.start()] + "%"])
            elif tok == "%n":
                out.append(["lit", s[pos:m.start()] + " "])
            else:
                if m.start() > pos:
                    out.append(["lit", s[pos:m.start()]])
                if tok == PLACEHOLDER:
                    out.append(["slot", "", "generic"])
                else:
                    arg = next(arg_iter, None)
                    expr = _norm_ws(_text(arg)) if arg is not None else ""
                    numeric = (arg is not None and self.is_numeric_expr(arg)) or tok[-1] in "dxXo"
                    out.append(["slot", expr, infer_placeholder_kind(expr, numeric) if expr or numeric
                                else "generic"])
            pos = m.end()
        if pos < len(s):
            out.append(["lit", s[pos:]])
        return out


def _has_string_literal(n: Node) -> bool:
    if n.type in ("string_literal", "text_block"):
        return True
    if n.type == "binary_expression" and _text(n.child_by_field_name("operator")) == "+":
        return any(_has_string_literal(c) for c in (n.child_by_field_name("left"), n.child_by_field_name("right")))
    if n.type == "parenthesized_expression" and len(n.named_children) == 1:
        return _has_string_literal(n.named_children[0])
    return False


def _strip_parens(s: str) -> str:
    s = _norm_ws(s)
    while s.startswith("(") and s.endswith(")") and _balanced(s[1:-1]):
        s = s[1:-1].strip()
    return s


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


# ---------------------------------------------------------------------------
# Public operations


def _discover(root: Path, subset: SubsetConfig) -> list[Path]:
    files = []
    excluded = set(subset.exclude_dirs)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in excluded)
        for name in sorted(filenames):
            if any(name.endswith(ext) for ext in subset.extensions):
                files.append(Path(dirpath) / name)
    return files


def parse_source(root: str | os.PathLike, subset_config: SubsetConfig) -> ProjectIndex:
    """Parse every in-scope file under ``root`` into a ``ProjectIndex``.

    Unreadable files are recorded in ``index.errors`` and skipped. Two methods
    with the same id raise ``DuplicateMethodError``.
    """
    root = Path(root)
    if not root.is_dir():
        raise FrontendError(f"source root {root} is not a directory")
    parser = make_parser()
    index = ProjectIndex()
    types: dict[str, _TypeInfo] = {}
    raw_methods: list[_RawMethod] = []
    trees = []
    for f in _discover(root, subset_config):
        rel = f.relative_to(root).as_posix()
        try:
            source = f.read_bytes()
            source.decode("utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            index.errors.append(Issue(rel, f"unreadable: {exc}"))
            continue
        tree = parser.parse(source)
        trees.append(tree)
        if tree.root_node.has_error:
            index.warnings.append(Issue(rel, "syntax errors; affected statements kept as other-statement"))
        _collect_file(rel, source, tree, types, raw_methods, index.units)

    by_simple: dict[str, list[str]] = {}
    for q, info in types.items():
        by_simple.setdefault(info.simple, []).append(q)

    method_index = {m.method_id: m for m in raw_methods}
    unit_by_type = {u.qualified_type_name: u for u in index.units}
    seen: dict[str, str] = {}
    for raw in raw_methods:
        location = f"{raw.path}:{raw.node.start_point[0] + 1}"
        if raw.method_id in seen:
            raise DuplicateMethodError(raw.method_id, seen[raw.method_id], location)
        seen[raw.method_id] = location
        lowerer = _MethodLowerer(raw, types, by_simple, subset_config.logging, method_index)
        body_node = raw.node.child_by_field_name("body")
        body = lowerer.lower_body(body_node) if body_node is not None else None
        decl = MethodDecl(
            method_id=raw.method_id,
            name=raw.name,
            owner=raw.owner.qualified,
            params=lowerer.params,
            body=body,
            source_text=raw.source[raw.node.start_byte:raw.node.end_byte].decode("utf-8"),
            path=raw.path,
            line=raw.node.start_point[0] + 1,
            is_abstract=body is None,
            return_type=_text(raw.node.child_by_field_name("type")),
        )
        index.methods[decl.method_id] = decl
        unit_by_type[raw.owner.qualified].methods.append(decl)
    return index


def parse_snippet(body: str, logging_config: LoggingConfig, prelude: str = "",
                  imports: str = "import org.slf4j.Logger;") -> MethodDecl:
    """Parse a method body (statements only) in a throwaway class; for tests and demos."""
    src = (f"package snippet;\n{imports}\nclass Snippet {{\n"
           f"  private static final Logger LOG = null;\n{prelude}\n"
           f"  void run() {{\n{body}\n  }}\n}}\n").encode()
    parser = make_parser()
    tree = parser.parse(src)
    types: dict[str, _TypeInfo] = {}
    raws: list[_RawMethod] = []
    units: list[SourceUnit] = []
    _collect_file("Snippet.java", src, tree, types, raws, units)
    by_simple = {info.simple: [q] for q, info in types.items()}
    raw = next(r for r in raws if r.name == "run")
    lowerer = _MethodLowerer(raw, types, by_simple, logging_config, {m.method_id: m for m in raws})
    body_ast = lowerer.lower_body(raw.node.child_by_field_name("body"))
    return MethodDecl(raw.method_id, "run", raw.owner.qualified, [], body_ast,
                      src[raw.node.start_byte:raw.node.end_byte].decode(), "Snippet.java",
                      raw.node.start_point[0] + 1)


def recognize_log_calls(method: MethodDecl, logging_config: LoggingConfig) -> list[tuple[AstNode, str]]:
    """Log-call nodes of ``method`` in source order, paired with their level."""
    if method.body is None:
        return []
    hits = []
    for node in method.body.walk():
        if node.kind not in ("log-call", "method-call"):
            continue
        names = node.detail.get("api_names", [])
        level = None
        for api in logging_config.apis:
            if any(fnmatch.fnmatchcase(n, api.pattern) for n in names):
                level = api.level
                break
        if level is not None:
            hits.append((node, level))
    return hits


def extract_template(log_call: AstNode, level: str, method_id: str = "") -> LogTemplate:
    """Normalize one logging call into a ``<*>`` pattern (template_id left at 0)."""
    if log_call.kind != "log-call":
        raise ValueError(f"expected a log-call node, got {log_call.kind}")
    frags = log_call.detail.get("message")
    if not frags:
        raise EmptyLogMessage(f"log call at {log_call.site} has no message argument")
    text_parts: list[str] = []
    kinds: list[str] = []
    exprs: list[str] = []
    for frag in frags:
        if frag[0] == "lit":
            text_parts.append(frag[1])
        else:
            text_parts.append(PLACEHOLDER)
            exprs.append(frag[1])
            kinds.append(frag[2])
    pattern = _norm_ws("".join(text_parts))
    # Whitespace collapsing can never merge or drop a placeholder.
    assert pattern.count(PLACEHOLDER) == len(kinds), (pattern, kinds)
    return LogTemplate(0, pattern, level, (method_id, log_call.span[0]), tuple(kinds), tuple(exprs),
                       log_call.site)


@dataclass
class TemplateTable:
    """All templates of a project, keyed by (method_id, call site)."""

    templates: list[LogTemplate]
    by_site: dict[tuple[str, str], LogTemplate]
    warnings: list[Issue] = field(default_factory=list)

    def __getitem__(self, template_id: int) -> LogTemplate:
        return self.templates[template_id - 1]

    def __len__(self):
        return len(self.templates)

    def for_method(self, method_id: str) -> list[LogTemplate]:
        return [t for t in self.templates if t.method_id == method_id]

    def by_method(self) -> dict[str, set[int]]:
        out: dict[str, set[int]] = {}
        for t in self.templates:
            out.setdefault(t.method_id, set()).add(t.template_id)
        return out


def _template_key(t: LogTemplate) -> str:
    raw = f"{t.pattern}\x00{t.location[0]}\x00{t.location[1]}\x00{t.site}"
    return hashlib.sha256(raw.encode()).hexdigest()


def assign_template_ids(templates: list[LogTemplate]) -> list[LogTemplate]:
    """Dense ids 1..n in order of a content hash of pattern and location."""
    ordered = sorted(templates, key=_template_key)
    return [LogTemplate(i, t.pattern, t.level, t.location, t.placeholder_kinds, t.placeholder_exprs, t.site)
            for i, t in enumerate(ordered, start=1)]


def extract_templates(index: ProjectIndex, logging_config: LoggingConfig) -> TemplateTable:
    raw: list[LogTemplate] = []
    warnings: list[Issue] = []
    for method_id, method in index.methods.items():
        for node, level in recognize_log_calls(method, logging_config):
            if node.kind != "log-call":
                # Matched by a config other than the one used for parsing; re-lower not supported.
                warnings.append(Issue(method.location, f"call at {node.site} matches a logging API only "
                                                       "under a different config; ignored"))
                continue
            try:
                raw.append(extract_template(node, level, method_id))
            except EmptyLogMessage as exc:
                warnings.append(Issue(method.path, str(exc)))
    templates = assign_template_ids(raw)
    by_site = {(t.method_id, t.site): t for t in templates}
    for w in warnings:
        log.warning("%s: %s", w.path, w.message)
    return TemplateTable(templates, by_site, warnings)


def write_template_dump(templates: list[LogTemplate] | TemplateTable, path: str | os.PathLike):
    items = templates.templates if isinstance(templates, TemplateTable) else templates
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in sorted(items, key=lambda t: t.template_id):
            fh.write(t.dump_line() + "\n")


def read_template_dump(path: str | os.PathLike) -> list[LogTemplate]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 4)
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields")
            tid, level, method_id, lno, pattern = parts
            n = pattern.count(PLACEHOLDER)
            out.append(LogTemplate(int(tid), pattern, level, (method_id, int(lno)), ("generic",) * n))
    return out


def serialize_ast(node: AstNode) -> str:
    return json.dumps(node.to_dict(), sort_keys=True)


def deserialize_ast(text: str) -> AstNode:
    return AstNode.from_dict(json.loads(text))
