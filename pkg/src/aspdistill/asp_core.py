"""Parsing, representation, mutation and a brute-force checker for ASP programs.

The parser accepts the normal-program subset used by the distillation loop:
facts, rules, constraints, negation as failure, comparisons and body
aggregates.  Choice rules, weak constraints, disjunctive heads and directives
are tokenized and kept verbatim as *opaque* statements so they reach the
external solver untouched, but the semantic checker refuses them.

The checker (``ground``/``reduct``/``is_answer_set``/``enumerate_answer_sets``)
is exponential on purpose; it exists to cross-check the real solver on tiny
programs.
"""

from __future__ import annotations

import enum
import itertools
import math
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union

DEFAULT_ATOM_BUDGET = 16
# guard against |constants| ** |variables| blowing up before the atom budget trips
_MAX_SUBSTITUTIONS = 200_000


class AspError(Exception):
    """Base class for errors raised by this module."""


class AspSyntaxError(AspError, ValueError):
    def __init__(self, position: int, message: str):
        super().__init__(f"{message} (at offset {position})")
        self.position = position
        self.message = message


class NotGround(AspError):
    pass


class CapacityExceeded(AspError):
    pass


class Unsupported(AspError):
    """Raised when the checker meets a construct it treats as opaque."""


# --------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class Compound:
    """A term that is neither a constant, an integer nor a variable.

    Function terms, arithmetic and intervals are kept as normalized text;
    the checker does not evaluate them.
    """

    text: str
    variables: frozenset = frozenset()

    def __str__(self) -> str:
        return self.text


Term = Union[int, str, Compound]


def is_variable(term: Term) -> bool:
    return isinstance(term, str) and (term[:1].isupper() or term[:1] == "_")


def term_variables(term: Term) -> frozenset:
    if isinstance(term, Compound):
        return term.variables
    if is_variable(term):
        return frozenset([term])
    return frozenset()


def format_term(term: Term) -> str:
    return str(term)


# --------------------------------------------------------------------------
# body elements and rules


@dataclass(frozen=True)
class Literal:
    predicate: str
    terms: tuple = ()
    negated: bool = False

    @property
    def arity(self) -> int:
        return len(self.terms)

    @property
    def signature(self) -> tuple[str, int]:
        return (self.predicate, self.arity)

    @property
    def atom(self) -> "Literal":
        return Literal(self.predicate, self.terms) if self.negated else self

    def variables(self) -> frozenset:
        out: frozenset = frozenset()
        for t in self.terms:
            out |= term_variables(t)
        return out

    def is_ground(self) -> bool:
        return not self.variables()

    def __str__(self) -> str:
        text = self.predicate
        if self.terms:
            text += "(" + ",".join(format_term(t) for t in self.terms) + ")"
        return "not " + text if self.negated else text


@dataclass(frozen=True)
class Comparison:
    left: Term
    op: str
    right: Term

    def variables(self) -> frozenset:
        return term_variables(self.left) | term_variables(self.right)

    def __str__(self) -> str:
        return f"{format_term(self.left)} {self.op} {format_term(self.right)}"


@dataclass(frozen=True)
class Aggregate:
    """A body aggregate such as ``N = #count{I : object(T,I)}``."""

    function: str
    elements: tuple  # of (terms tuple, condition tuple)
    lower: Optional[tuple] = None  # (term, op)
    upper: Optional[tuple] = None  # (op, term)

    def literals(self) -> Iterator[Literal]:
        for _, condition in self.elements:
            for item in condition:
                if isinstance(item, Literal):
                    yield item

    def variables(self) -> frozenset:
        out: frozenset = frozenset()
        if self.lower:
            out |= term_variables(self.lower[0])
        if self.upper:
            out |= term_variables(self.upper[1])
        return out

    def __str__(self) -> str:
        elems = []
        for terms, condition in self.elements:
            text = ",".join(format_term(t) for t in terms)
            if condition:
                text += " : " + ", ".join(str(c) for c in condition)
            elems.append(text)
        text = f"{self.function}{{{'; '.join(elems)}}}"
        if self.lower:
            text = f"{format_term(self.lower[0])} {self.lower[1]} {text}"
        if self.upper:
            text = f"{text} {self.upper[0]} {format_term(self.upper[1])}"
        return text


BodyElement = Union[Literal, Comparison, Aggregate]


class RuleKind(str, enum.Enum):
    FACT = "fact"
    RULE = "rule"
    CONSTRAINT = "constraint"
    OPAQUE = "opaque"


@dataclass(frozen=True)
class Rule:
    head: Optional[Literal]
    body: tuple = ()
    kind: RuleKind = RuleKind.RULE
    source_text: str = ""
    # predicates mentioned by opaque statements, recovered from their tokens
    opaque_predicates: frozenset = field(default=frozenset(), compare=False)

    @classmethod
    def make(cls, head: Optional[Literal], body: Iterable[BodyElement] = ()) -> "Rule":
        body = tuple(body)
        if head is not None and head.negated:
            raise AspError("rule head cannot be negated")
        if head is None:
            kind = RuleKind.CONSTRAINT
        elif not body and head.is_ground():
            kind = RuleKind.FACT
        else:
            kind = RuleKind.RULE
        return cls(head, body, kind, _render(head, body))

    @classmethod
    def opaque(cls, text: str, predicates: frozenset = frozenset()) -> "Rule":
        return cls(None, (), RuleKind.OPAQUE, text, predicates)

    def literals(self) -> Iterator[Literal]:
        if self.head is not None:
            yield self.head
        for item in self.body:
            if isinstance(item, Literal):
                yield item
            elif isinstance(item, Aggregate):
                yield from item.literals()

    def predicates(self) -> set[tuple[str, int]]:
        found = {lit.signature for lit in self.literals()}
        return found | set(self.opaque_predicates)

    def variables(self) -> frozenset:
        out: frozenset = frozenset()
        for lit in self.literals():
            out |= lit.variables()
        for item in self.body:
            if not isinstance(item, Literal):
                out |= item.variables()
        return out

    def is_ground(self) -> bool:
        return self.kind is not RuleKind.OPAQUE and not self.variables()

    def __str__(self) -> str:
        return self.source_text


def _render(head: Optional[Literal], body: tuple) -> str:
    text = str(head) if head is not None else ""
    if body:
        sep = " :- " if head is not None else ":- "
        text += sep + ", ".join(str(b) for b in body)
    return text + "."


@dataclass(frozen=True)
class Program:
    rules: tuple = ()
    label: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        seen = set()
        unique = []
        for rule in self.rules:
            if rule.source_text not in seen:
                seen.add(rule.source_text)
                unique.append(rule)
        object.__setattr__(self, "rules", tuple(unique))

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __contains__(self, rule: object) -> bool:
        if isinstance(rule, str):
            return rule in {r.source_text for r in self.rules}
        return rule in self.rules

    def union(self, *others: "Program", label: Optional[str] = None) -> "Program":
        rules = list(self.rules)
        for other in others:
            rules.extend(other.rules)
        return Program(tuple(rules), label=label if label is not None else self.label)

    def with_label(self, label: Optional[str]) -> "Program":
        return Program(self.rules, label=label)

    def serialize(self) -> str:
        return "".join(r.source_text + "\n" for r in self.rules)

    def __str__(self) -> str:
        return self.serialize()

    def is_ground(self) -> bool:
        return all(r.is_ground() for r in self.rules)


Interpretation = frozenset  # of ground, positive Literal


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|%\*.*?\*%|%[^\n]*)
    |(?P<string>"(?:[^"\\\n]|\\.)*")
    |(?P<directive>\#[A-Za-z_]+)
    |(?P<if>:-)
    |(?P<weak>:~)
    |(?P<dots>\.\.)
    |(?P<dot>\.)
    |(?P<cmp>!=|<>|<=|>=|==|=|<|>)
    |(?P<number>\d+)
    |(?P<var>_*[A-Z][A-Za-z0-9_']*|_)
    |(?P<ident>_*[a-z][A-Za-z0-9_']*)
    |(?P<punct>[(),;:{}\[\]@|+\-*/\\^&?~])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise AspSyntaxError(pos, f"unexpected character {text[pos:pos + 12]!r}")
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    return tokens


def _split_statements(tokens: list[Token], text: str) -> list[list[Token]]:
    statements: list[list[Token]] = []
    current: list[Token] = []
    depth = 0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        current.append(tok)
        if tok.text in "({[" and tok.kind == "punct":
            depth += 1
        elif tok.text in ")}]" and tok.kind == "punct":
            depth -= 1
            if depth < 0:
                raise AspSyntaxError(tok.pos, f"unbalanced {tok.text!r} in {_fragment(text, current)!r}")
        elif tok.kind == "dot" and depth == 0:
            # weak constraints carry a trailing [weight@level, terms] after the period
            if current[0].kind == "weak" and i + 1 < len(tokens) and tokens[i + 1].text == "[":
                while i + 1 < len(tokens):
                    i += 1
                    current.append(tokens[i])
                    if tokens[i].text == "]":
                        break
            statements.append(current)
            current = []
        i += 1
    if current:
        raise AspSyntaxError(current[0].pos, f"statement not terminated by a period: {_fragment(text, current)!r}")
    return statements


def _fragment(text: str, toks: list[Token]) -> str:
    start = toks[0].pos
    end = toks[-1].pos + len(toks[-1].text)
    frag = text[start:end]
    return frag if len(frag) <= 80 else frag[:77] + "..."


def _join_tokens(toks: list[Token]) -> str:
    parts = [toks[0].text]
    for prev, tok in zip(toks, toks[1:]):
        tight = (
            tok.text in (",", ")", "]", "}", ".", "/", "@", "..")
            or prev.text in ("(", "[", "{", "/", "@", "..")
            or (tok.text == "(" and prev.kind == "ident")
        )
        parts.append(tok.text if tight else " " + tok.text)
    return "".join(parts)


def _opaque_predicates(toks: list[Token]) -> frozenset:
    found = set()
    if toks[0].text in ("#const", "#include", "#program", "#script"):
        return frozenset()
    depth = 0  # parentheses and brackets; braces still hold atoms
    for i, tok in enumerate(toks):
        if tok.text in ("(", "["):
            depth += 1
        elif tok.text in (")", "]"):
            depth -= 1
        if tok.kind != "ident" or tok.text == "not" or depth > 0:
            continue
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        prev = toks[i - 1] if i > 0 else None
        if nxt is None or nxt.text not in ("(", "/"):
            # a bare identifier outside any term position is a propositional atom
            if not (prev is not None and prev.kind == "cmp") and not (nxt is not None and nxt.kind == "cmp"):
                found.add((tok.text, 0))
            continue
        if nxt.text == "(":
            depth, arity, j = 0, 1, i + 1
            if j + 1 < len(toks) and toks[j + 1].text == ")":
                arity = 0
            while j < len(toks):
                t = toks[j].text
                if t in "({[":
                    depth += 1
                elif t in ")}]":
                    depth -= 1
                    if depth == 0:
                        break
                elif t == "," and depth == 1:
                    arity += 1
                j += 1
            found.add((tok.text, arity))
        elif nxt is not None and nxt.text == "/" and i + 2 < len(toks) and toks[i + 2].kind == "number":
            found.add((tok.text, int(toks[i + 2].text)))
    return frozenset(found)


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, toks: list[Token], text: str):
        self.toks = toks
        self.text = text
        self.i = 0

    def peek(self, offset: int = 0) -> Optional[Token]:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            self.fail("unexpected end of statement")
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text:
            self.fail(f"expected {text!r}")
        self.i += 1
        return tok

    def fail(self, message: str):
        tok = self.peek()
        pos = tok.pos if tok is not None else self.toks[-1].pos
        raise AspSyntaxError(pos, f"{message} in {_fragment(self.text, self.toks)!r}")

    # statement := [head] [":-" body] "."
    def statement(self) -> Rule:
        head = None
        if self.peek().kind != "if":
            head = self.atom()
        body: list[BodyElement] = []
        if self.accept(":-"):
            if self.peek().kind != "dot":
                body.append(self.body_element())
                while self.accept(","):
                    body.append(self.body_element())
        elif head is None:
            self.fail("empty statement")
        if self.next().kind != "dot":
            self.i -= 1
            self.fail("expected '.'")
        if self.peek() is not None:
            self.fail("trailing tokens")
        if head is None and not body:
            self.fail("constraint without body")
        return Rule.make(head, body)

    def body_element(self) -> BodyElement:
        tok = self.peek()
        if tok is None:
            self.fail("unexpected end of body")
        if tok.kind == "ident" and tok.text == "not":
            nxt = self.peek(1)
            if nxt is not None and nxt.kind == "ident" and nxt.text != "not":
                self.next()
                lit = self.atom()
                return Literal(lit.predicate, lit.terms, negated=True)
            self.fail("'not' must precede an atom")
        if tok.kind == "directive":
            return self.aggregate(lower=None)
        if tok.kind == "ident" and not self._looks_like_term_start():
            return self.atom()
        left = self.term()
        op_tok = self.peek()
        if op_tok is None or op_tok.kind != "cmp":
            self.fail("expected a literal, comparison or aggregate")
        self.next()
        op = _normalize_op(op_tok.text)
        if self.peek() is not None and self.peek().kind == "directive":
            return self.aggregate(lower=(left, op))
        right = self.term()
        return Comparison(left, op, right)

    def _looks_like_term_start(self) -> bool:
        """An identifier starts a comparison only when a comparison operator follows its term."""
        save = self.i
        try:
            self.term()
            tok = self.peek()
            return tok is not None and tok.kind == "cmp"
        except AspSyntaxError:
            return False
        finally:
            self.i = save

    def aggregate(self, lower) -> Aggregate:
        fn = self.next()
        if fn.text not in ("#count", "#sum", "#sum+", "#min", "#max"):
            self.i -= 1
            self.fail(f"unknown aggregate {fn.text!r}")
        self.expect("{")
        elements = []
        if not self.accept("}"):
            while True:
                elements.append(self.aggregate_element())
                if self.accept("}"):
                    break
                self.expect(";")
        upper = None
        tok = self.peek()
        if tok is not None and tok.kind == "cmp":
            self.next()
            upper = (_normalize_op(tok.text), self.term())
        return Aggregate(fn.text, tuple(elements), lower, upper)

    def aggregate_element(self):
        terms = [self.term()]
        while self.accept(","):
            terms.append(self.term())
        condition = []
        if self.accept(":"):
            condition.append(self.body_element())
            while self.accept(","):
                condition.append(self.body_element())
        return tuple(terms), tuple(condition)

    def atom(self) -> Literal:
        tok = self.next()
        if tok.kind != "ident" or tok.text == "not":
            self.i -= 1
            self.fail("expected an atom")
        terms: list[Term] = []
        if self.accept("("):
            if not self.accept(")"):
                terms.append(self.term())
                while self.accept(","):
                    terms.append(self.term())
                self.expect(")")
        return Literal(tok.text, tuple(terms))

    # term := sum [".." sum]
    def term(self) -> Term:
        left = self.sum()
        if self.accept(".."):
            right = self.sum()
            return _compound(f"{left}..{right}", left, right)
        return left

    def sum(self) -> Term:
        left = self.product()
        while self.peek() is not None and self.peek().text in ("+", "-"):
            op = self.next().text
            right = self.product()
            left = _compound(f"{left}{op}{right}", left, right)
        return left

    def product(self) -> Term:
        left = self.unary()
        while self.peek() is not None and self.peek().text in ("*", "/", "\\"):
            op = self.next().text
            right = self.unary()
            left = _compound(f"{left}{op}{right}", left, right)
        return left

    def unary(self) -> Term:
        if self.accept("-"):
            inner = self.unary()
            if isinstance(inner, int):
                return -inner
            return _compound(f"-{inner}", inner)
        return self.primary()

    def primary(self) -> Term:
        tok = self.next()
        if tok.kind == "number":
            return int(tok.text)
        if tok.kind in ("string", "var"):
            return tok.text
        if tok.kind == "ident" and tok.text != "not":
            if self.accept("("):
                args = [self.term()]
                while self.accept(","):
                    args.append(self.term())
                self.expect(")")
                return _compound(f"{tok.text}({','.join(map(str, args))})", *args)
            return tok.text
        if tok.text == "(":
            inner = self.term()
            self.expect(")")
            return _compound(f"({inner})", inner)
        self.i -= 1
        self.fail(f"unexpected {tok.text!r}")


def _compound(text: str, *parts: Term) -> Compound:
    variables: frozenset = frozenset()
    for p in parts:
        variables |= term_variables(p)
    return Compound(text, variables)


def _normalize_op(op: str) -> str:
    return {"<>": "!=", "==": "="}.get(op, op)


def _is_opaque_statement(toks: list[Token]) -> bool:
    first = toks[0]
    if first.kind in ("directive", "weak"):
        return True
    depth = 0
    for tok in toks:
        if tok.kind == "if":
            return False
        if tok.text in "([":
            depth += 1
        elif tok.text in ")]":
            depth -= 1
        elif tok.text == "{" or (depth == 0 and tok.text in (";", "|")):
            # choice rule or disjunctive head
            return True
    return False


def parse_statement(toks: list[Token], text: str) -> Rule:
    if _is_opaque_statement(toks):
        return Rule.opaque(_join_tokens(toks), _opaque_predicates(toks))
    return _Parser(toks, text).statement()


def parse_program(text: str, label: Optional[str] = None) -> Program:
    """Parse ``text`` into a :class:`Program`, keeping statement order."""
    tokens = tokenize(text)
    rules = [parse_statement(stmt, text) for stmt in _split_statements(tokens, text)]
    return Program(tuple(rules), label=label)


def parse_rule(text: str) -> Rule:
    program = parse_program(text)
    if len(program) != 1:
        raise AspSyntaxError(0, f"expected exactly one statement in {text!r}")
    return program.rules[0]


def parse_atom(text: str) -> Literal:
    """Parse a single atom such as ``p(a,1)`` (no trailing period needed)."""
    toks = tokenize(text)
    if not toks:
        raise AspSyntaxError(0, "empty atom")
    parser = _Parser(toks, text)
    lit = parser.atom()
    if parser.peek() is not None:
        parser.fail("trailing tokens after atom")
    return lit


def atoms(*texts: str) -> Interpretation:
    """Build an interpretation from atom strings, e.g. ``atoms("a", "p(1)")``."""
    return frozenset(parse_atom(t) for t in texts)


def read_program(path, label: Optional[str] = None) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read(), label=label)


def write_program(program: Program, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(program.serialize())


# --------------------------------------------------------------------------
# inspection and mutation


def predicates_of(p: Program) -> set[tuple[str, int]]:
    out: set[tuple[str, int]] = set()
    for rule in p.rules:
        out |= rule.predicates()
    return out


def mentions(rule: Rule, pred: str) -> bool:
    return any(name == pred for name, _ in rule.predicates())


def remove_rules_mentioning(p: Program, pred: str) -> Program:
    return Program(tuple(r for r in p.rules if not mentions(r, pred)), label=p.label)


def remove_random_fraction(p: Program, s: float, seed: int) -> Program:
    if not 0 <= s <= 100:
        raise ValueError(f"percentage out of range: {s}")
    n = len(p.rules)
    k = math.floor(Fraction(str(s)) * n / 100)
    doomed = set(random.Random(seed).sample(range(n), k))
    return Program(tuple(r for i, r in enumerate(p.rules) if i not in doomed), label=p.label)


# --------------------------------------------------------------------------
# grounding and the brute-force checker


def _herbrand_base(p: Program) -> set[Literal]:
    return {lit.atom for rule in p.rules for lit in rule.literals()}


def _constants(p: Program) -> list[Term]:
    found: set = set()
    for rule in p.rules:
        for lit in rule.literals():
            found.update(t for t in lit.terms if not isinstance(t, Compound) and not is_variable(t))
        for item in rule.body:
            if isinstance(item, Comparison):
                found.update(t for t in (item.left, item.right) if not isinstance(t, Compound) and not is_variable(t))
    return sorted(found, key=_term_order)


def _term_order(t: Term):
    if isinstance(t, int):
        return (0, t, "")
    if t.startswith('"'):
        return (2, 0, t)
    return (1, 0, t)


def _check_supported(rule: Rule) -> None:
    if rule.kind is RuleKind.OPAQUE:
        raise Unsupported(f"opaque statement: {rule.source_text}")
    for item in rule.body:
        if isinstance(item, Aggregate):
            raise Unsupported(f"aggregate in: {rule.source_text}")
    for lit in rule.literals():
        if any(isinstance(t, Compound) for t in lit.terms):
            raise Unsupported(f"compound term in: {rule.source_text}")
    for item in rule.body:
        if isinstance(item, Comparison) and (isinstance(item.left, Compound) or isinstance(item.right, Compound)):
            raise Unsupported(f"compound term in: {rule.source_text}")


def _compare(left: Term, op: str, right: Term) -> bool:
    a, b = _term_order(left), _term_order(right)
    return {
        "=": a == b,
        "!=": a != b,
        "<": a < b,
        "<=": a <= b,
        ">": a > b,
        ">=": a >= b,
    }[op]


def _freshen_anonymous(rule: Rule) -> tuple[Optional[Literal], tuple]:
    counter = itertools.count()

    def fix(t: Term) -> Term:
        return f"_Anon{next(counter)}" if t == "_" else t

    def fix_item(item):
        if isinstance(item, Literal):
            return Literal(item.predicate, tuple(fix(t) for t in item.terms), item.negated)
        return Comparison(fix(item.left), item.op, fix(item.right))

    head = fix_item(rule.head) if rule.head is not None else None
    return head, tuple(fix_item(b) for b in rule.body)


def _substitute(item, binding: dict):
    if isinstance(item, Literal):
        return Literal(item.predicate, tuple(binding.get(t, t) for t in item.terms), item.negated)
    return Comparison(binding.get(item.left, item.left), item.op, binding.get(item.right, item.right))


def ground(p: Program, budget: int = DEFAULT_ATOM_BUDGET) -> Program:
    """Naively instantiate every variable with every constant of ``p``."""
    constants = _constants(p)
    out: list[Rule] = []
    base: set[Literal] = set()

    def add(rule: Rule):
        out.append(rule)
        base.update(lit.atom for lit in rule.literals())
        if len(base) > budget:
            raise CapacityExceeded(f"ground program exceeds the budget of {budget} atoms")

    for rule in p.rules:
        _check_supported(rule)
        head, body = _freshen_anonymous(rule)
        variables = sorted(_vars_of(head, body))
        if not variables:
            instance = _ground_instance(head, body)
            if instance is not None:
                add(instance)
            continue
        if len(constants) ** len(variables) > _MAX_SUBSTITUTIONS:
            raise CapacityExceeded(f"too many substitutions for: {rule.source_text}")
        for combo in itertools.product(constants, repeat=len(variables)):
            binding = dict(zip(variables, combo))
            g_head = _substitute(head, binding) if head is not None else None
            instance = _ground_instance(g_head, tuple(_substitute(b, binding) for b in body))
            if instance is not None:
                add(instance)
    return Program(tuple(out), label=p.label)


def _vars_of(head: Optional[Literal], body: tuple) -> set:
    out = set(head.variables()) if head is not None else set()
    for item in body:
        out |= item.variables()
    return out


def _ground_instance(head: Optional[Literal], body: tuple) -> Optional[Rule]:
    """Evaluate ground comparisons; ``None`` when one of them is false."""
    kept = []
    for item in body:
        if isinstance(item, Comparison):
            if not _compare(item.left, item.op, item.right):
                return None
        else:
            kept.append(item)
    return Rule.make(head, kept)


def _require_ground(p: Program) -> None:
    for rule in p.rules:
        _check_supported(rule)
        if not rule.is_ground():
            raise NotGround(f"rule has variables: {rule.source_text}")
        if any(isinstance(b, Comparison) for b in rule.body):
            raise Unsupported(f"comparison in ground program: {rule.source_text}; ground() evaluates these")


def _split_body(rule: Rule) -> tuple[set, set]:
    pos = {b for b in rule.body if isinstance(b, Literal) and not b.negated}
    neg = {b.atom for b in rule.body if isinstance(b, Literal) and b.negated}
    return pos, neg


def reduct(p: Program, i: Interpretation) -> Program:
    """Keep rules whose positive body holds in ``i`` and whose negated atoms are all false in it."""
    _require_ground(p)
    kept = []
    for rule in p.rules:
        pos, neg = _split_body(rule)
        if pos <= i and not (neg & i):
            kept.append(Rule.make(rule.head, [b for b in rule.body if not b.negated]))
    return Program(tuple(kept))


def is_model(p: Program, i: Interpretation) -> bool:
    for rule in p.rules:
        pos, neg = _split_body(rule)
        if rule.head is not None and rule.head in i:
            continue
        if not pos <= i or neg & i:
            continue
        return False
    return True


def _check_budget(p: Program, extra: Iterable[Literal] = (), budget: int = DEFAULT_ATOM_BUDGET) -> None:
    size = len(_herbrand_base(p) | set(extra))
    if size > budget:
        raise CapacityExceeded(f"{size} atoms exceed the checker budget of {budget}")


def is_answer_set(p: Program, i: Interpretation, budget: int = DEFAULT_ATOM_BUDGET) -> bool:
    _require_ground(p)
    _check_budget(p, i, budget)
    i = frozenset(i)
    red = reduct(p, i)
    if not is_model(red, i):
        return False
    members = sorted(i, key=str)
    for size in range(len(members)):
        for subset in itertools.combinations(members, size):
            if is_model(red, frozenset(subset)):
                return False
    return True


def enumerate_answer_sets(p: Program, budget: int = DEFAULT_ATOM_BUDGET) -> set[Interpretation]:
    _require_ground(p)
    _check_budget(p, (), budget)
    base = sorted(_herbrand_base(p), key=str)
    found = set()
    for size in range(len(base) + 1):
        for subset in itertools.combinations(base, size):
            candidate = frozenset(subset)
            if is_answer_set(p, candidate, budget):
                found.add(candidate)
    return found


def format_interpretation(i: Interpretation) -> frozenset:
    return frozenset(str(a) for a in i)


def random_ground_program(rng: random.Random, max_atoms: int = 8, max_rules: int = 12) -> Program:
    """A random ground normal program over atoms ``a0..a{n-1}``, for cross-checks."""
    n_atoms = rng.randint(1, max_atoms)
    names = [f"a{i}" for i in range(n_atoms)]
    rules = []
    for _ in range(rng.randint(0, max_rules)):
        head = None if rng.random() < 0.15 else Literal(rng.choice(names), ())
        body = []
        for name in rng.sample(names, rng.randint(0 if head else 1, min(3, n_atoms))):
            body.append(Literal(name, (), negated=rng.random() < 0.5))
        rules.append(Rule.make(head, body))
    return Program(tuple(rules))
