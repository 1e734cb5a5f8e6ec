"""Ordered trees with labelled leaves, and trees carrying dimensions and ranks.

Tree specs are nested brackets with positive integer leaf labels::

    tree = leaf | "[" tree ("," tree)+ "]"

so ``"[[1,3,5],[4,2],6]"`` is a root with three children: an internal node
over leaves 1, 3, 5, an internal node over 4, 2, and the leaf 6.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import prod
from typing import Mapping


class TreeSpecError(ValueError):
    """Malformed tree spec; ``position`` is the 0-based character offset."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class TreeValidationError(ValueError):
    """A structural or rank invariant of a tree is violated."""


@dataclass(frozen=True)
class Tree:
    """A leaf (``label`` set, no children) or an ordered tuple of >= 2 subtrees."""

    label: int | None = None
    children: tuple[Tree, ...] = ()

    def __post_init__(self):
        if self.children:
            if self.label is not None:
                raise TreeValidationError("internal nodes carry no label")
            if len(self.children) < 2:
                raise TreeValidationError(
                    "internal nodes need at least 2 children")
            seen = set()
            for child in self.children:
                overlap = seen.intersection(child.leaves)
                if overlap:
                    raise TreeValidationError(
                        f"duplicate leaf {min(overlap)}: subtrees must have disjoint leaves")
                seen.update(child.leaves)
        elif self.label is None:
            raise TreeValidationError("a leaf needs a label")

    @classmethod
    def leaf(cls, label):
        return cls(label=int(label))

    @classmethod
    def node(cls, *children):
        return cls(children=tuple(children))

    @property
    def is_leaf(self):
        return not self.children

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        """Leaf labels in depth-first order (the mode order of dense tensors)."""
        if self.is_leaf:
            return (self.label,)
        return tuple(l for c in self.children for l in c.leaves)

    @cached_property
    def height(self):
        if self.is_leaf:
            return 0
        return 1 + max(c.height for c in self.children)

    @cached_property
    def _hash(self):
        return hash((self.label, self.children))

    def __hash__(self):
        return self._hash

    def subtrees(self):
        """All subtrees, parents before children (pre-order)."""
        yield self
        for c in self.children:
            yield from c.subtrees()

    def __str__(self):
        if self.is_leaf:
            return str(self.label)
        return "[" + ",".join(str(c) for c in self.children) + "]"


def parse_tree(text: str) -> Tree:
    """Parse a bracketed tree spec into a :class:`Tree`."""
    pos = 0
    n = len(text)

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def parse_node():
        nonlocal pos
        skip_ws()
        if pos >= n:
            raise TreeSpecError("unexpected end of input", pos)
        if text[pos] == "[":
            start = pos
            pos += 1
            children = [parse_node()]
            skip_ws()
            while pos < n and text[pos] == ",":
                pos += 1
                children.append(parse_node())
                skip_ws()
            if pos >= n or text[pos] != "]":
                raise TreeSpecError("expected ',' or ']'", pos)
            pos += 1
            try:
                return Tree(children=tuple(children))
            except TreeValidationError as exc:
                raise TreeSpecError(str(exc), start) from None
        if text[pos].isdigit():
            start = pos
            while pos < n and text[pos].isdigit():
                pos += 1
            label = int(text[start:pos])
            if label <= 0:
                raise TreeSpecError("leaf labels must be positive integers", start)
            return Tree(label=label)
        raise TreeSpecError(f"unexpected character {text[pos]!r}", pos)

    tree = parse_node()
    skip_ws()
    if pos != n:
        raise TreeSpecError("trailing characters", pos)
    return tree


@dataclass(frozen=True)
class RankedTree:
    """A tree together with leaf dimensions ``n_l`` and subtree ranks ``r_tau``.

    ``ranks`` is keyed by :class:`Tree` (each subtree is identified by its
    structure, which is unique because leaves are distinct).
    """

    tree: Tree
    dims: Mapping[int, int]
    ranks: Mapping[Tree, int] = field(repr=False)

    def __post_init__(self):
        self.validate()

    @classmethod
    def uniform(cls, tree, n, r):
        """Same dimension ``n`` at every leaf, rank ``r`` at every non-root subtree."""
        if isinstance(tree, str):
            tree = parse_tree(tree)
        dims = {l: int(n) for l in tree.leaves}
        ranks = {s: int(r) for s in tree.subtrees()}
        ranks[tree] = 1
        return cls(tree, dims, ranks)

    def dim(self, label):
        return self.dims[label]

    def rank(self, subtree):
        return self.ranks[subtree]

    def size(self, subtree=None):
        """``n_tau``: the product of the leaf dimensions below ``subtree``."""
        subtree = self.tree if subtree is None else subtree
        return prod(self.dims[l] for l in subtree.leaves)

    def leaf_dims(self, subtree=None):
        subtree = self.tree if subtree is None else subtree
        return tuple(self.dims[l] for l in subtree.leaves)

    def storage(self):
        """Number of stored scalars: all basis matrices and connection tensors."""
        total = 0
        for s in self.tree.subtrees():
            if s.is_leaf:
                total += self.dims[s.label] * self.ranks[s]
            else:
                total += self.ranks[s] * prod(self.ranks[c] for c in s.children)
        return total

    def validate(self):
        tree = self.tree
        for l in tree.leaves:
            if l not in self.dims:
                raise TreeValidationError(f"missing dimension for leaf {l}")
            if int(self.dims[l]) < 1:
                raise TreeValidationError(f"dimension of leaf {l} must be positive")
        for s in tree.subtrees():
            if s not in self.ranks:
                raise TreeValidationError(f"missing rank for subtree {s}")
            if int(self.ranks[s]) < 1:
                raise TreeValidationError(f"rank of subtree {s} must be positive")
        if self.ranks[tree] != 1:
            raise TreeValidationError(
                f"root rank must be 1, got {self.ranks[tree]}")
        for s in tree.subtrees():
            r = self.ranks[s]
            if s.is_leaf:
                if r > self.dims[s.label]:
                    raise TreeValidationError(
                        f"leaf {s.label}: rank {r} exceeds dimension {self.dims[s.label]}")
                continue
            child_ranks = [self.ranks[c] for c in s.children]
            if r > prod(child_ranks):
                raise TreeValidationError(
                    f"subtree {s}: rank {r} exceeds product of child ranks {child_ranks}")
            for k, rk in enumerate(child_ranks):
                others = r * prod(child_ranks[:k] + child_ranks[k + 1:])
                if rk > others:
                    raise TreeValidationError(
                        f"subtree {s}: child rank {rk} exceeds {others}, "
                        "connection tensor cannot have full multilinear rank")


def _lookup(value, key, kind):
    if isinstance(value, Mapping):
        if key in value:
            return value[key]
        if str(key) in value:
            return value[str(key)]
        raise TreeValidationError(f"no {kind} given for {key}")
    return value


def parse_tree_spec(text, dims=None, ranks=None) -> RankedTree:
    """Parse ``text`` and attach dimensions and ranks.

    ``dims`` is an integer or a map from leaf label to extent.  ``ranks`` is an
    integer or a map from subtree spec string (e.g. ``"[1,3,5]"`` or ``"4"``)
    to rank; the root always gets rank 1 unless it is listed explicitly.
    """
    tree = parse_tree(text) if isinstance(text, str) else text
    if dims is None or ranks is None:
        raise TreeValidationError("both dims and ranks are required")
    dim_map = {l: int(_lookup(dims, l, "dimension")) for l in tree.leaves}
    rank_map = {}
    for s in tree.subtrees():
        if s is tree or s == tree:
            explicit = isinstance(ranks, Mapping) and str(s) in ranks
            rank_map[s] = int(ranks[str(s)]) if explicit else 1
        else:
            rank_map[s] = int(_lookup(ranks, s, "rank"))
    return RankedTree(tree, dim_map, rank_map)


#: Named presets, expanded by the CLI.
PRESETS = {
    "fig2.1": ("[[1,3,5],[4,2],6]", 16, 5),
}
