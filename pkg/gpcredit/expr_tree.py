"""Expression trees evolved as credit classifiers.

A tree is built from binary arithmetic functions over feature terminals and
ephemeral constants. Trees are immutable: genetic operators build new trees
and share untouched branches with their parents.
"""
import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np

# Intermediate values are clipped to this magnitude so evaluation stays finite
CLAMP = 1e12

Path = Tuple[int, ...]


class TreeStructureError(ValueError):
    """Raised when a tree does not fit the data it is evaluated on"""


class ParseError(ValueError):
    """Raised when s-expression text does not describe a valid tree"""


def _protected_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.divide(a, b, out=np.ones_like(a), where=b != 0)


PRIMITIVES: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "pdiv": _protected_div,
}
OPERATORS: Tuple[str, ...] = tuple(PRIMITIVES)


@dataclass(frozen=True)
class FeatureNode:
    """Terminal reading one (0-based) attribute of the example"""
    index: int


@dataclass(frozen=True)
class ConstNode:
    """Ephemeral random constant"""
    value: float


@dataclass(frozen=True)
class FunctionNode:
    """Binary arithmetic primitive"""
    op: str
    children: Tuple["Node", "Node"]

    def __post_init__(self):
        if self.op not in PRIMITIVES:
            raise TreeStructureError(f"Unknown primitive '{self.op}'")
        if len(self.children) != 2:
            raise TreeStructureError(f"Primitive '{self.op}' takes exactly 2 children")


Node = Union[FunctionNode, FeatureNode, ConstNode]


@dataclass(frozen=True)
class ExprTree:
    """A GP classifier: evaluating the root on an example yields its GPout"""
    root: Node

    @property
    def depth(self) -> int:
        return _depth(self.root)

    @property
    def size(self) -> int:
        return sum(1 for _ in iter_subtrees(self))

    def max_feature_index(self) -> int:
        """Largest feature index referenced, or -1 for feature-free trees"""
        indices = [node.index for _, node in iter_subtrees(self) if isinstance(node, FeatureNode)]
        return max(indices, default=-1)

    def to_sexpr(self) -> str:
        return to_sexpr(self)

    def __str__(self) -> str:
        return self.to_sexpr()


def _depth(node: Node) -> int:
    if isinstance(node, FunctionNode):
        return 1 + max(_depth(child) for child in node.children)
    return 0


def iter_subtrees(tree: ExprTree) -> Iterator[Tuple[Path, Node]]:
    """Yield (path, node) for every node in preorder.

    A path is the sequence of child positions leading from the root.
    """
    stack: List[Tuple[Path, Node]] = [((), tree.root)]
    while stack:
        path, node = stack.pop()
        yield path, node
        if isinstance(node, FunctionNode):
            # reversed so the left child comes out first
            for position in (1, 0):
                stack.append((path + (position,), node.children[position]))


def subtree_at(tree: ExprTree, path: Path) -> Node:
    node = tree.root
    for position in path:
        node = node.children[position]
    return node


def replace_subtree(tree: ExprTree, path: Path, new: Node) -> ExprTree:
    """Return a new tree with the node at `path` replaced by `new`"""

    def rebuild(node: Node, remaining: Path) -> Node:
        if not remaining:
            return new
        head, rest = remaining[0], remaining[1:]
        children = list(node.children)
        children[head] = rebuild(children[head], rest)
        return FunctionNode(node.op, (children[0], children[1]))

    return ExprTree(rebuild(tree.root, path))


def evaluate(tree: ExprTree, features: np.ndarray) -> np.ndarray:
    """Evaluate the tree on every row of a feature matrix.

    Returns one GPout per row. Protected division maps x/0 to 1 and every
    intermediate result is clipped to [-CLAMP, CLAMP].
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise TreeStructureError(f"Expected a 2-D feature matrix, got shape {features.shape}")
    n_rows, n_features = features.shape

    def walk(node: Node) -> np.ndarray:
        if isinstance(node, FeatureNode):
            if not 0 <= node.index < n_features:
                raise TreeStructureError(
                    f"Feature x{node.index} out of range for {n_features} attributes"
                )
            return features[:, node.index]
        if isinstance(node, ConstNode):
            return np.full(n_rows, node.value, dtype=np.float64)
        left, right = (walk(child) for child in node.children)
        with np.errstate(over="ignore", invalid="ignore"):
            return np.clip(PRIMITIVES[node.op](left, right), -CLAMP, CLAMP)

    return np.clip(walk(tree.root), -CLAMP, CLAMP)


def eval_tree(tree: ExprTree, x: Sequence[float]) -> float:
    """GPout of the tree for a single feature vector"""
    row = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(evaluate(tree, row)[0])


# -- s-expression codec -------------------------------------------------------

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_FEATURE = re.compile(r"x(\d+)")


def _format_const(value: float) -> str:
    return format(value, ".17g")


def to_sexpr(tree: ExprTree) -> str:
    """Prefix form, e.g. (sub (mul x3 0.412) (pdiv x0 x7))"""

    def emit(node: Node) -> str:
        if isinstance(node, FeatureNode):
            return f"x{node.index}"
        if isinstance(node, ConstNode):
            return _format_const(node.value)
        left, right = (emit(child) for child in node.children)
        return f"({node.op} {left} {right})"

    return emit(tree.root)


def _read_terminal(token: str) -> Node:
    feature = _FEATURE.fullmatch(token)
    if feature:
        return FeatureNode(int(feature.group(1)))
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"Unexpected token '{token}'") from None
    if not np.isfinite(value):
        raise ParseError(f"Non-finite constant '{token}'")
    return ConstNode(value)


def parse_sexpr(text: str) -> ExprTree:
    """Parse the prefix form written by to_sexpr"""
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise ParseError("Nothing to read")

    def read(i: int) -> Tuple[Node, int]:
        if i >= len(tokens):
            raise ParseError("EOF while parsing input")
        token = tokens[i]
        if token == ")":
            raise ParseError("Unbalanced parentheses at ')'")
        if token != "(":
            return _read_terminal(token), i + 1
        if i + 1 >= len(tokens):
            raise ParseError("List not closed")
        op = tokens[i + 1]
        if op not in PRIMITIVES:
            raise ParseError(f"Unknown primitive '{op}'")
        left, i = read(i + 2)
        right, i = read(i)
        if i >= len(tokens):
            raise ParseError(f"List not closed after '{op}'")
        if tokens[i] != ")":
            raise ParseError(f"Primitive '{op}' takes 2 arguments, found extra token '{tokens[i]}'")
        return FunctionNode(op, (left, right)), i + 1

    root, end = read(0)
    if end != len(tokens):
        raise ParseError(f"Trailing token '{tokens[end]}'")
    return ExprTree(root)
