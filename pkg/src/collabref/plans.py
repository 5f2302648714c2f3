"""Plan derivations: trees of action nodes over surface primitives.

A derivation is a registry-owned record: named nodes, a root, and the
substitution that accumulated while the plan was built or recognized.
Node names are only meaningful inside their own plan. Plans are referred
to from belief propositions by their id constant (p7, p31, ...), so the
registry is the bridge between the belief world and plan structure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import PlanError
from .schemas import SchemaLibrary, StepKind
from .terms import (
    Compound,
    Const,
    NameSource,
    Substitution,
    Term,
    format_term,
    unify,
)


class ItemKind(enum.Enum):
    CONSTRAINT = "constraint"
    MENTAL = "mental"
    CHILD = "child"


@dataclass(frozen=True)
class Item:
    kind: ItemKind
    term: Term | None = None
    child: str | None = None


class PlanStatus(enum.Enum):
    PARTIAL = "partial"
    COMPLETE = "complete"


@dataclass
class NodeRecord:
    name: str
    schema: str
    content: Term
    items: tuple[Item, ...] = ()
    primitive: bool = False
    expanded: bool = True


@dataclass
class PlanDerivation:
    id: str
    root: str
    nodes: dict[str, NodeRecord]
    bindings: Substitution
    status: PlanStatus
    root_effect: Term | None = None

    def node(self, name: str) -> NodeRecord:
        try:
            return self.nodes[name]
        except KeyError:
            raise PlanError(f"plan {self.id} has no node {name}") from None

    def content_of(self, name: str) -> Term:
        return self.bindings.resolve(self.node(name).content)

    def action_nodes(self) -> list[str]:
        """Non-primitive node names, pre-order."""
        out: list[str] = []

        def walk(name: str) -> None:
            rec = self.nodes[name]
            if rec.primitive:
                return
            out.append(name)
            for item in rec.items:
                if item.kind is ItemKind.CHILD:
                    walk(item.child)

        walk(self.root)
        return out

    def yield_node_names(self, name: str | None = None) -> list[str]:
        """Names of primitive leaves under a node, in utterance order."""
        out: list[str] = []

        def walk(n: str) -> None:
            rec = self.nodes[n]
            if rec.primitive:
                out.append(n)
                return
            for item in rec.items:
                if item.kind is ItemKind.CHILD:
                    walk(item.child)

        walk(name or self.root)
        return out

    def yield_of(self, name: str | None = None) -> list[Term]:
        return [self.content_of(n) for n in self.yield_node_names(name)]

    def unexpanded(self) -> list[str]:
        return [n for n, rec in self.nodes.items() if not rec.primitive and not rec.expanded]

    def pretty(self) -> str:
        lines: list[str] = []

        def walk(name: str, depth: int) -> None:
            rec = self.nodes[name]
            pad = "  " * depth
            content = format_term(self.bindings.resolve(rec.content))
            if rec.primitive:
                lines.append(f"{pad}{name}: {content}")
                return
            tag = "" if rec.expanded else " (unexpanded)"
            lines.append(f"{pad}{name}: {content}{tag}")
            for item in rec.items:
                if item.kind is ItemKind.CHILD:
                    walk(item.child, depth + 1)

        lines.append(f"plan {self.id} [{self.status.value}]")
        walk(self.root, 1)
        return "\n".join(lines)


def unify_bridged(
    a: Term, b: Term, s: Substitution, library: SchemaLibrary
) -> Substitution | None:
    """Unify, letting an abstract action head stand for any specialization.

    modifier(...) unifies with modifier-relative(...) positionally; the
    abstract side is treated as if it had the concrete side's functor.
    Only one bridging step is allowed (abstract families are one level deep).
    """
    s2 = unify(a, b, s)
    if s2 is not None:
        return s2
    ra, rb = s.resolve(a), s.resolve(b)
    if isinstance(ra, Compound) and isinstance(rb, Compound) and len(ra.args) == len(rb.args):
        fa, fb = ra.functor, rb.functor
        if library.is_abstract(fa) and library.parent_of(fb) == fa:
            return unify(Compound(fb, ra.args), rb, s)
        if library.is_abstract(fb) and library.parent_of(fa) == fb:
            return unify(ra, Compound(fa, rb.args), s)
    return None


def find_covering_node(
    plan: PlanDerivation, acts: list[Term], s: Substitution
) -> tuple[str, Substitution] | None:
    """The deepest action node whose yield matches the given acts in order.

    Matching unifies act by act, so the caller's acts may contain variables.
    Returns None when no node matches or when two incomparable nodes do.
    """
    matches: list[tuple[str, Substitution]] = []
    for name in plan.action_nodes():
        yielded = plan.yield_of(name)
        if len(yielded) != len(acts):
            continue
        cur = s
        for pat, got in zip(acts, yielded):
            nxt = unify(pat, got, cur)
            if nxt is None:
                cur = None
                break
            cur = nxt
        if cur is not None:
            matches.append((name, cur))
    if not matches:
        return None
    # keep only matches with no matching descendant; pre-order listing means
    # a descendant always appears later than its ancestor
    names = {n for n, _ in matches}
    deepest: list[tuple[str, Substitution]] = []
    for name, sub in matches:
        has_deeper = False
        for item in plan.nodes[name].items:
            if item.kind is ItemKind.CHILD and _subtree_hits(plan, item.child, names):
                has_deeper = True
                break
        if not has_deeper:
            deepest.append((name, sub))
    if len(deepest) != 1:
        return None
    return deepest[0]


def _subtree_hits(plan: PlanDerivation, name: str, targets: set[str]) -> bool:
    rec = plan.nodes[name]
    if rec.primitive:
        return False
    if name in targets:
        return True
    for item in rec.items:
        if item.kind is ItemKind.CHILD and _subtree_hits(plan, item.child, targets):
            return True
    return False


def substitute_node(
    plan: PlanDerivation,
    target: str,
    replacement: Term,
    library: SchemaLibrary,
    names: NameSource,
) -> tuple[PlanDerivation, Substitution]:
    """A copy of the plan with one action node swapped for an unexpanded one.

    The copy is rebuilt from fresh schema instances so no stale bindings
    leak in; kept primitives are pinned by unifying the fresh instance
    against the old node's fully resolved content. Kept nodes keep their
    names, which keeps node references in older beliefs meaningful across
    the family of plans. The target node's content unifies (bridged) with
    the replacement, and its old subtree is dropped.
    """
    if target not in plan.nodes or plan.nodes[target].primitive:
        raise PlanError(f"cannot replace node {target} of plan {plan.id}")
    new_nodes: dict[str, NodeRecord] = {}
    s = Substitution()
    root_effect: Term | None = None

    def rebuild(old_name: str, expected: Term | None) -> str:
        nonlocal s, root_effect
        old = plan.nodes[old_name]
        if old_name == target:
            assert expected is not None
            s2 = unify_bridged(expected, replacement, s, library)
            if s2 is None:
                raise PlanError(
                    f"replacement {format_term(replacement)} does not fit slot of {target}"
                )
            s = s2
            new_nodes[old_name] = NodeRecord(
                name=old_name,
                schema=_functor_of(s.resolve(replacement)),
                content=replacement,
                items=(),
                primitive=False,
                expanded=False,
            )
            return old_name
        if old.primitive:
            assert expected is not None
            s2 = unify(expected, plan.content_of(old_name), s)
            if s2 is None:
                raise PlanError(f"primitive {old_name} no longer fits during rebuild")
            s = s2
            new_nodes[old_name] = NodeRecord(old_name, old.schema, expected, (), True, True)
            return old_name
        schema = library.get(old.schema).instantiate(names)
        if expected is not None:
            s2 = unify_bridged(expected, schema.head, s, library)
            if s2 is None:
                raise PlanError(f"schema {old.schema} no longer fits during rebuild")
            s = s2
        if old_name == plan.root:
            root_effect = schema.effect
        items: list[Item] = []
        old_children = [i.child for i in old.items if i.kind is ItemKind.CHILD]
        child_i = 0
        for step in schema.steps:
            if step.kind is StepKind.CONSTRAINT:
                items.append(Item(ItemKind.CONSTRAINT, term=step.term))
            elif step.kind is StepKind.MENTAL:
                items.append(Item(ItemKind.MENTAL, term=step.term))
            else:
                child_name = rebuild(old_children[child_i], step.term)
                child_i += 1
                items.append(Item(ItemKind.CHILD, child=child_name))
        if child_i != len(old_children):
            raise PlanError(f"node {old_name} child count changed during rebuild")
        new_nodes[old_name] = NodeRecord(old_name, old.schema, schema.head, tuple(items), False, True)
        return old_name

    rebuild(plan.root, None)
    new_plan = PlanDerivation(
        id=names.plan_name().name,
        root=plan.root,
        nodes=new_nodes,
        bindings=s,
        status=PlanStatus.PARTIAL,
        root_effect=root_effect,
    )
    return new_plan, s


def _functor_of(t: Term) -> str:
    if isinstance(t, Compound):
        return t.functor
    if isinstance(t, Const):
        return t.name
    raise PlanError(f"expected an action term, got {t!r}")
