"""A small CLEVR-style theory and corpus for offline experiments.

Scenes are encoded with ``obj/1``, ``attr/3`` and ``left/2`` (``left(A,B)``:
object ``A`` is left of ``B``).  Questions use the indexed operation facts
produced by :func:`~aspdistill.dataset.translate_functional_to_asp`.  Gold
answers come from :func:`execute`, a direct Python evaluator of the operation
tree that shares nothing with the ASP theory.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .asp_core import Literal, Program, Rule, parse_program
from .dataset import Example, FunctionalNode, translate_functional_to_asp

LIGHT_RULES = """\
object(T,I) :- scene(T), obj(I).
ans(V) :- end(T), value(T,V).
ans(N) :- end(T), number(T,N).
ans(yes) :- end(T), bool(T,true).
ans(no) :- end(T), bool(T,false).
"""

FILTER_VALUES = {
    "size": ("large", "small"),
    "color": ("red", "cyan", "yellow"),
    "material": ("metal", "rubber"),
    "shape": ("cube", "cylinder", "sphere"),
}

SET_RULES = """\
object(T,I) :- union(T,T1,T2), object(T1,I).
object(T,I) :- union(T,T1,T2), object(T2,I).
object(T,I) :- and(T,T1,T2), object(T1,I), object(T2,I).
"""

HEAVY_EXTRA_RULES = """\
number(T,N) :- count(T,T1), N = #count{I : object(T1,I)}.
bool(T,true) :- exist(T,T1), object(T1,I).
bool(T,false) :- exist(T,T1), not bool(T,true).
object(T,I) :- unique(T,T1), object(T1,I).
value(T,V) :- query_color(T,T1), object(T1,I), attr(I,color,V).
value(T,V) :- query_shape(T,T1), object(T1,I), attr(I,shape,V).
value(T,V) :- query_material(T,T1), object(T1,I), attr(I,material,V).
"""

FULL_EXTRA_RULES = """\
object(T,J) :- relate_left(T,T1), object(T1,I), left(J,I).
object(T,J) :- same_color(T,T1), object(T1,I), attr(I,color,C), attr(J,color,C), J != I.
bool(T,true) :- equal_integer(T,T1,T2), number(T1,N), number(T2,N).
bool(T,false) :- equal_integer(T,T1,T2), number(T1,N1), number(T2,N2), N1 != N2.
"""


def _filter_rules() -> str:
    lines = []
    for category, values in FILTER_VALUES.items():
        for value in values:
            lines.append(f"object(T,I) :- filter_{value}(T,T1), object(T1,I), attr(I,{category},{value}).")
    return "\n".join(lines) + "\n"


def light_theory() -> Program:
    return parse_program(LIGHT_RULES, label="Light")


def medium_theory() -> Program:
    return parse_program(LIGHT_RULES + _filter_rules() + SET_RULES, label="Medium")


def heavy_theory() -> Program:
    return parse_program(LIGHT_RULES + _filter_rules() + SET_RULES + HEAVY_EXTRA_RULES, label="Heavy")


def full_theory() -> Program:
    return parse_program(
        LIGHT_RULES + _filter_rules() + SET_RULES + HEAVY_EXTRA_RULES + FULL_EXTRA_RULES, label="Full"
    )


TIERS = {"light": light_theory, "medium": medium_theory, "heavy": heavy_theory, "full": full_theory}


def tier(name: str) -> Program:
    try:
        return TIERS[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown tier {name!r}; expected one of {sorted(TIERS)}") from None


# --------------------------------------------------------------------------
# scenes and the reference executor

COLORS = ("red", "blue", "cyan", "yellow")
SIZES = ("large", "small")
MATERIALS = ("metal", "rubber")
SHAPES = ("cube", "cylinder", "sphere")


@dataclass(frozen=True)
class SceneObject:
    id: int
    x: int
    size: str
    color: str
    material: str
    shape: str

    def get(self, category: str) -> str:
        return getattr(self, category)


class Undefined(ValueError):
    """The question has no well-defined answer on this scene."""


def scene_program(objects) -> Program:
    rules = []
    for o in objects:
        rules.append(Rule.make(Literal("obj", (o.id,))))
        for category in ("size", "color", "material", "shape"):
            rules.append(Rule.make(Literal("attr", (o.id, category, o.get(category)))))
    for a in objects:
        for b in objects:
            if a.x < b.x:
                rules.append(Rule.make(Literal("left", (a.id, b.id))))
    return Program(tuple(rules))


def execute(node: FunctionalNode, objects) -> object:
    """Evaluate an operation tree on a scene; returns a set of ids, an int, a bool or a string."""
    op = node.op
    args = [execute(child, objects) for child in node.inputs]
    by_id = {o.id: o for o in objects}
    if op == "scene":
        return frozenset(by_id)
    if op.startswith("filter_"):
        value = op[len("filter_"):]
        category = next(c for c, vals in FILTER_VALUES.items() if value in vals)
        return frozenset(i for i in args[0] if by_id[i].get(category) == value)
    if op == "union":
        return args[0] | args[1]
    if op == "and":
        return args[0] & args[1]
    if op == "unique":
        if len(args[0]) != 1:
            raise Undefined(f"unique over {len(args[0])} objects")
        return args[0]
    if op == "relate_left":
        (anchor,) = _single(args[0])
        return frozenset(o.id for o in objects if o.x < by_id[anchor].x)
    if op == "same_color":
        (anchor,) = _single(args[0])
        return frozenset(o.id for o in objects if o.id != anchor and o.color == by_id[anchor].color)
    if op == "count":
        return len(args[0])
    if op == "exist":
        return bool(args[0])
    if op == "equal_integer":
        return args[0] == args[1]
    if op.startswith("query_"):
        (anchor,) = _single(args[0])
        return by_id[anchor].get(op[len("query_"):])
    raise ValueError(f"unknown operation {op!r}")


def _single(ids) -> tuple:
    if len(ids) != 1:
        raise Undefined(f"expected one object, got {len(ids)}")
    return tuple(ids)


def render_answer(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (int, str)):
        return str(value)
    raise Undefined("answer is an object set")


# --------------------------------------------------------------------------
# question templates


def _random_scene(rng: random.Random) -> list[SceneObject]:
    n = rng.randint(3, 6)
    xs = rng.sample(range(10), n)
    return [
        SceneObject(i, xs[i], rng.choice(SIZES), rng.choice(COLORS), rng.choice(MATERIALS), rng.choice(SHAPES))
        for i in range(n)
    ]


def _chain(rng: random.Random, length: int, base: FunctionalNode) -> FunctionalNode:
    node = base
    for category in rng.sample(list(FILTER_VALUES), length):
        node = FunctionalNode(f"filter_{rng.choice(FILTER_VALUES[category])}", [node])
    return node


def _scene() -> FunctionalNode:
    return FunctionalNode("scene")


def _unique_chain(rng, length):
    return FunctionalNode("unique", [_chain(rng, length, _scene())])


TEMPLATES = {
    "count": lambda rng: FunctionalNode("count", [_chain(rng, rng.randint(0, 3), _scene())]),
    "exist": lambda rng: FunctionalNode("exist", [_chain(rng, rng.randint(0, 3), _scene())]),
    "query": lambda rng: FunctionalNode(
        f"query_{rng.choice(['color', 'shape', 'material'])}", [_unique_chain(rng, rng.randint(1, 3))]
    ),
    "count_union": lambda rng: FunctionalNode(
        "count",
        [_chain(rng, rng.randint(0, 1), FunctionalNode(
            "union", [_chain(rng, rng.randint(1, 2), _scene()), _chain(rng, rng.randint(1, 2), _scene())]))],
    ),
    "count_and": lambda rng: FunctionalNode(
        "count", [FunctionalNode("and", [_chain(rng, rng.randint(1, 2), _scene()), _chain(rng, rng.randint(1, 2), _scene())])]
    ),
    "exist_and": lambda rng: FunctionalNode(
        "exist", [FunctionalNode("and", [_chain(rng, rng.randint(1, 2), _scene()), _chain(rng, rng.randint(1, 2), _scene())])]
    ),
    "count_left": lambda rng: FunctionalNode(
        "count", [_chain(rng, rng.randint(0, 1), FunctionalNode("relate_left", [_unique_chain(rng, rng.randint(1, 3))]))]
    ),
    "exist_left": lambda rng: FunctionalNode(
        "exist", [_chain(rng, rng.randint(0, 1), FunctionalNode("relate_left", [_unique_chain(rng, rng.randint(1, 3))]))]
    ),
    "count_same": lambda rng: FunctionalNode(
        "count", [_chain(rng, rng.randint(0, 1), FunctionalNode("same_color", [_unique_chain(rng, rng.randint(1, 3))]))]
    ),
    "query_left": lambda rng: FunctionalNode(
        f"query_{rng.choice(['color', 'shape', 'material'])}",
        [FunctionalNode("unique", [_chain(rng, rng.randint(1, 2), FunctionalNode("relate_left", [_unique_chain(rng, rng.randint(1, 3))]))])],
    ),
    "equal": lambda rng: FunctionalNode(
        "equal_integer",
        [FunctionalNode("count", [_chain(rng, rng.randint(1, 4), _scene())]),
         FunctionalNode("count", [_chain(rng, rng.randint(1, 4), _scene())])],
    ),
}

EXIST_TEMPLATES = ("exist", "exist_and", "exist_left")


def _candidate(rng: random.Random, template: str):
    while True:
        tree = TEMPLATES[template](rng)
        objects = _random_scene(rng)
        try:
            answer = render_answer(execute(tree, objects))
        except Undefined:
            continue
        return tree, objects, answer


def _make_example(ident: str, tree, objects, answer) -> Example:
    return Example(ident, translate_functional_to_asp(tree), scene_program(objects), answer, tree)


def _question_size(tree: FunctionalNode) -> int:
    return len(translate_functional_to_asp(tree))


def train_corpus(seed: int = 11, per_bucket: int = 4, sizes=range(3, 13)) -> list[Example]:
    """Examples with exactly ``per_bucket`` questions for each question size in ``sizes``.

    Within a bucket, templates rotate so that each bucket mixes answer types.
    """
    rng = random.Random(seed)
    wanted = {size: per_bucket for size in sizes}
    picked: dict[int, list] = {size: [] for size in sizes}
    used_templates: dict[int, list] = {size: [] for size in sizes}
    names = sorted(TEMPLATES)
    attempts = 0
    while any(wanted.values()):
        attempts += 1
        if attempts > 200_000:
            raise RuntimeError("could not fill every question-size bucket")
        template = rng.choice(names)
        tree, objects, answer = _candidate(rng, template)
        size = _question_size(tree)
        if wanted.get(size, 0) == 0:
            continue
        # prefer a template not yet used in this bucket
        if template in used_templates[size] and rng.random() < 0.8:
            continue
        used_templates[size].append(template)
        picked[size].append((tree, objects, answer))
        wanted[size] -= 1
    out = []
    for size in sizes:
        for tree, objects, answer in picked[size]:
            out.append(_make_example(f"train-{len(out):03d}", tree, objects, answer))
    return out


def test_corpus(seed: int = 23, total: int = 40, exist_questions: int = 10) -> list[Example]:
    """Held-out examples; exactly ``exist_questions`` of them mention ``exist``.

    Templates are cycled so that every operation of the full theory appears.
    """
    rng = random.Random(seed)
    exist_names = list(EXIST_TEMPLATES)
    other_names = [t for t in sorted(TEMPLATES) if t not in EXIST_TEMPLATES]
    plan = [exist_names[i % len(exist_names)] for i in range(exist_questions)]
    plan += [other_names[i % len(other_names)] for i in range(total - exist_questions)]
    out = []
    for i, template in enumerate(plan):
        tree, objects, answer = _candidate(rng, template)
        out.append(_make_example(f"test-{i:03d}", tree, objects, answer))
    return out


def clevr_example_tree() -> FunctionalNode:
    """How many large things are either cyan metallic cylinders or yellow blocks?"""
    cylinders = FunctionalNode(
        "filter_cylinder", [FunctionalNode("filter_cyan", [FunctionalNode("filter_metal", [_scene()])])]
    )
    cubes = FunctionalNode("filter_cube", [FunctionalNode("filter_yellow", [_scene()])])
    return FunctionalNode("count", [FunctionalNode("filter_large", [FunctionalNode("union", [cylinders, cubes])])])


TASK_SCENE_EXCERPT = """\
obj(0). attr(0,size,large). attr(0,color,cyan). attr(0,material,metal). attr(0,shape,cylinder).
obj(1). attr(1,size,small). attr(1,color,yellow). attr(1,material,rubber). attr(1,shape,cube).
left(0,1)."""

TASK_QUESTION_EXCERPT = """\
end(3). count(3,2). filter_cube(2,1). filter_yellow(1,0). scene(0)."""
