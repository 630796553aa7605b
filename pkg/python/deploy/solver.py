"""
Exact integer optimizer used by the Phase 1 and Phase 2 encoders.

Variables are bounded non-negative integers. Constraints are linear rows, implications
guarded by a variable being zero or positive, and product bounds
``bounded <= a * (b + offset)``. ``solve`` runs a depth-first branch and bound with
bounds-consistency propagation and keeps the best incumbent when the time budget runs
out. ``export_model`` and ``parse_model`` read and write a line-oriented text format:

    var <name> <lo> <hi>
    lin <rel> <const> [<coef>*<name>]...
    imp <name> <zero|pos> : lin <rel> <const> [<coef>*<name>]...
    prod <name> <= <name>*<name><+0|-1>
    obj <min|max> [<w>*<name>]...

The product offset is always written with its sign, so the parser splits it off the last
signed digit run and factor names such as ``x10`` or ``y-1`` survive a round trip.
Lines starting with ``#`` are comments.
"""

import logging
import math
import random
import re
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from python.deploy.errors import ModelError

logger = logging.getLogger(__name__)

FORMAT_HEADER = "# deployment-planner model v1"

_NAME = re.compile(r"^[^\s*:]+$")


@dataclass(frozen=True)
class Var:
    index: int
    name: str
    lo: int
    hi: int

    def __repr__(self) -> str:
        return f"Var({self.name}∈[{self.lo},{self.hi}])"


class Relation(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


Term = tuple[int, Var]


@dataclass(frozen=True)
class LinearConstraint:
    """``Σ coef·var  <relation>  constant``"""

    terms: tuple[Term, ...]
    relation: Relation
    constant: int

    @classmethod
    def build(
        cls, terms: Iterable[Term], relation: Union[Relation, str], constant: int
    ) -> "LinearConstraint":
        terms = tuple((int(coef), var) for coef, var in terms)
        seen = set()
        for _, var in terms:
            if var.index in seen:
                raise ModelError(f"variable {var.name} appears twice in one constraint")
            seen.add(var.index)
        return cls(terms=terms, relation=Relation(relation), constant=int(constant))

    def activity(self, values: Mapping[Var, int]) -> int:
        return sum(coef * values[var] for coef, var in self.terms)

    def holds(self, values: Mapping[Var, int]) -> bool:
        activity = self.activity(values)
        if self.relation == Relation.LE:
            return activity <= self.constant
        if self.relation == Relation.GE:
            return activity >= self.constant
        return activity == self.constant


class GuardSense(str, Enum):
    ZERO = "zero"
    POSITIVE = "pos"


@dataclass(frozen=True)
class Implication:
    guard: Var
    sense: GuardSense
    consequence: LinearConstraint

    def fires(self, value: int) -> bool:
        return value == 0 if self.sense == GuardSense.ZERO else value > 0


@dataclass(frozen=True)
class ProductBound:
    """``bounded <= factor_a * (factor_b + offset)``"""

    bounded: Var
    factor_a: Var
    factor_b: Var
    offset: int = 0

    def holds(self, values: Mapping[Var, int]) -> bool:
        return values[self.bounded] <= values[self.factor_a] * (values[self.factor_b] + self.offset)


class Sense(str, Enum):
    MINIMIZE = "min"
    MAXIMIZE = "max"


@dataclass(frozen=True)
class Objective:
    sense: Sense
    terms: tuple[Term, ...]

    def value(self, values: Mapping[Var, int]) -> int:
        return sum(weight * values[var] for weight, var in self.terms)


class Model:
    """Mutable builder for a constraint model; solved and exported as is"""

    def __init__(self) -> None:
        self.variables: list[Var] = []
        self.linear: list[LinearConstraint] = []
        self.implications: list[Implication] = []
        self.products: list[ProductBound] = []
        self.objective: Optional[Objective] = None
        self._by_name: dict[str, Var] = {}

    def new_var(self, name: str, lo: int, hi: int) -> Var:
        if not _NAME.match(name):
            raise ModelError(f"invalid variable name {name!r}")
        if name in self._by_name:
            raise ModelError(f"duplicate variable name {name!r}")
        if lo < 0 or lo > hi:
            raise ModelError(f"variable {name}: empty or negative domain [{lo}, {hi}]")
        var = Var(index=len(self.variables), name=name, lo=int(lo), hi=int(hi))
        self.variables.append(var)
        self._by_name[name] = var
        return var

    def var(self, name: str) -> Var:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def add(self, constraint: LinearConstraint) -> LinearConstraint:
        self._check_terms(constraint.terms)
        self.linear.append(constraint)
        return constraint

    def add_linear(
        self, terms: Iterable[Term], relation: Union[Relation, str], constant: int
    ) -> LinearConstraint:
        return self.add(LinearConstraint.build(terms, relation, constant))

    def add_implication(
        self, guard: Var, sense: Union[GuardSense, str], consequence: LinearConstraint
    ) -> Implication:
        self._check_var(guard)
        self._check_terms(consequence.terms)
        implication = Implication(guard=guard, sense=GuardSense(sense), consequence=consequence)
        self.implications.append(implication)
        return implication

    def add_product_bound(
        self, bounded: Var, factor_a: Var, factor_b: Var, offset: int = 0
    ) -> ProductBound:
        if offset not in (0, -1):
            raise ModelError(f"product bound offset must be 0 or -1, got {offset}")
        for var in (bounded, factor_a, factor_b):
            self._check_var(var)
        product = ProductBound(bounded=bounded, factor_a=factor_a, factor_b=factor_b, offset=offset)
        self.products.append(product)
        return product

    def minimize(self, terms: Iterable[Term]) -> None:
        self._set_objective(Sense.MINIMIZE, terms)

    def maximize(self, terms: Iterable[Term]) -> None:
        self._set_objective(Sense.MAXIMIZE, terms)

    def _set_objective(self, sense: Sense, terms: Iterable[Term]) -> None:
        terms = tuple((int(weight), var) for weight, var in terms)
        self._check_terms(terms)
        self.objective = Objective(sense=sense, terms=terms)

    def _check_var(self, var: Var) -> None:
        if var.index >= len(self.variables) or self.variables[var.index] != var:
            raise ModelError(f"variable {var.name} does not belong to this model")

    def _check_terms(self, terms: Sequence[Term]) -> None:
        for _, var in terms:
            self._check_var(var)


# Solving


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE_UNPROVEN = "feasible_unproven"
    UNSAT = "unsat"
    TIMEOUT_NO_SOLUTION = "timeout_no_solution"


@dataclass(frozen=True)
class SolveBudget:
    """Wall-clock limit in seconds and branching seed.

    Seed 0 breaks branching ties by lowest variable index. Any other seed breaks them by a
    fixed permutation of the variables drawn from that seed, so equal seeds give equal runs.
    """

    time_limit: Optional[float] = None
    seed: int = 0


@dataclass(frozen=True)
class SolveOutcome:
    status: SolveStatus
    assignment: dict[Var, int] = field(default_factory=dict)
    objective_value: Optional[int] = None
    nodes: int = 0
    elapsed: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_UNPROVEN)

    def value(self, var: Var) -> int:
        return self.assignment[var]


@dataclass(frozen=True)
class Evaluation:
    satisfied: bool
    objective_value: int


class _Row:
    """``Σ coefs·x <= rhs`` over variable indices"""

    __slots__ = ("coefs", "indices", "rhs")

    def __init__(self, coefs: list[int], indices: list[int], rhs: int):
        self.coefs = coefs
        self.indices = indices
        self.rhs = rhs


def _rows_of(constraint: LinearConstraint) -> list[_Row]:
    coefs = [coef for coef, _ in constraint.terms]
    indices = [var.index for _, var in constraint.terms]
    negated = [-coef for coef in coefs]
    if constraint.relation == Relation.LE:
        return [_Row(coefs, indices, constraint.constant)]
    if constraint.relation == Relation.GE:
        return [_Row(negated, indices, -constraint.constant)]
    return [
        _Row(coefs, indices, constraint.constant),
        _Row(negated, list(indices), -constraint.constant),
    ]


CHECK_INTERVAL = 256


class _Search:
    def __init__(self, model: Model, budget: SolveBudget):
        self.model = model
        n = len(model.variables)
        self.lo = [v.lo for v in model.variables]
        self.hi = [v.hi for v in model.variables]
        self.trail: list[tuple[int, int, int]] = []
        self.watchers: list[list[int]] = [[] for _ in range(n)]
        self.props: list[tuple[str, object]] = []
        self.queue: deque[int] = deque()
        self.queued: list[bool] = []

        for constraint in model.linear:
            for row in _rows_of(constraint):
                self._register(("row", row), row.indices)
        for implication in model.implications:
            rows = _rows_of(implication.consequence)
            watched = [implication.guard.index]
            watched += [var.index for _, var in implication.consequence.terms]
            self._register(("imp", (implication.guard.index, implication.sense, rows)), watched)
        for product in model.products:
            spec = (
                product.bounded.index,
                product.factor_a.index,
                product.factor_b.index,
                product.offset,
            )
            self._register(("prod", spec), spec[:3])

        # objective cut, inactive until the first incumbent
        self.objective = model.objective
        self.cut: Optional[_Row] = None
        self.cut_id = -1
        self.cut_active = False
        if self.objective is not None:
            sign = 1 if self.objective.sense == Sense.MINIMIZE else -1
            coefs = [sign * weight for weight, _ in self.objective.terms]
            indices = [var.index for _, var in self.objective.terms]
            self.cut = _Row(coefs, indices, 0)
            self.cut_id = self._register(("row", self.cut), indices)

        self.priority = list(range(n))
        if budget.seed:
            random.Random(budget.seed).shuffle(self.priority)
        self.ascending = self.objective is None or self.objective.sense == Sense.MINIMIZE
        self.deadline: Optional[float] = None
        if budget.time_limit is not None:
            self.deadline = time.perf_counter() + budget.time_limit
        self.nodes = 0
        self.best: Optional[list[int]] = None
        self.best_value: Optional[int] = None

    def _register(self, prop: tuple[str, object], indices: Iterable[int]) -> int:
        prop_id = len(self.props)
        self.props.append(prop)
        self.queued.append(False)
        for index in set(indices):
            self.watchers[index].append(prop_id)
        return prop_id

    # domain updates

    def _enqueue_watchers(self, index: int) -> None:
        for prop_id in self.watchers[index]:
            if not self.queued[prop_id]:
                self.queued[prop_id] = True
                self.queue.append(prop_id)

    def set_lo(self, index: int, value: int) -> bool:
        if value <= self.lo[index]:
            return True
        if value > self.hi[index]:
            return False
        self.trail.append((index, self.lo[index], self.hi[index]))
        self.lo[index] = value
        self._enqueue_watchers(index)
        return True

    def set_hi(self, index: int, value: int) -> bool:
        if value >= self.hi[index]:
            return True
        if value < self.lo[index]:
            return False
        self.trail.append((index, self.lo[index], self.hi[index]))
        self.hi[index] = value
        self._enqueue_watchers(index)
        return True

    def undo(self, mark: int) -> None:
        trail, lo, hi = self.trail, self.lo, self.hi
        while len(trail) > mark:
            index, old_lo, old_hi = trail.pop()
            lo[index] = old_lo
            hi[index] = old_hi

    # propagators

    def min_activity(self, row: _Row) -> int:
        lo, hi = self.lo, self.hi
        return sum(a * (lo[i] if a > 0 else hi[i]) for a, i in zip(row.coefs, row.indices))

    def propagate_row(self, row: _Row) -> bool:
        slack = row.rhs - self.min_activity(row)
        if slack < 0:
            return False
        lo, hi = self.lo, self.hi
        for a, i in zip(row.coefs, row.indices):
            if a > 0:
                bound = lo[i] + slack // a
                if bound < hi[i] and not self.set_hi(i, bound):
                    return False
            elif a < 0:
                bound = hi[i] - slack // (-a)
                if bound > lo[i] and not self.set_lo(i, bound):
                    return False
        return True

    def propagate_implication(self, guard: int, sense: GuardSense, rows: list[_Row]) -> bool:
        if sense == GuardSense.ZERO:
            active, dead = self.hi[guard] == 0, self.lo[guard] > 0
        else:
            active, dead = self.lo[guard] > 0, self.hi[guard] == 0
        if dead:
            return True
        if active:
            return all(self.propagate_row(row) for row in rows)
        for row in rows:
            if self.min_activity(row) > row.rhs:
                # consequence impossible: the guard cannot fire
                if sense == GuardSense.ZERO:
                    return self.set_lo(guard, 1)
                return self.set_hi(guard, 0)
        return True

    def propagate_product(self, bounded: int, a: int, b: int, offset: int) -> bool:
        lo, hi = self.lo, self.hi
        if a == b:
            largest = max(lo[a] * (lo[a] + offset), hi[a] * (hi[a] + offset))
        else:
            largest = max(p * (q + offset) for p in (lo[a], hi[a]) for q in (lo[b], hi[b]))
        if not self.set_hi(bounded, largest):
            return False
        need = lo[bounded]
        if need <= 0:
            return True
        if a == b:
            # x·(x + offset) is non-decreasing over the naturals
            candidate = max(math.isqrt(need), lo[a])
            while candidate * (candidate + offset) < need:
                candidate += 1
            return self.set_lo(a, candidate)
        if hi[a] <= 0 or hi[b] + offset <= 0:
            return False
        return self.set_lo(b, -(-need // hi[a]) - offset) and self.set_lo(
            a, -(-need // (hi[b] + offset))
        )

    def _run(self, prop_id: int) -> bool:
        kind, payload = self.props[prop_id]
        if kind == "row":
            if prop_id == self.cut_id and not self.cut_active:
                return True
            return self.propagate_row(payload)  # type: ignore[arg-type]
        if kind == "imp":
            guard, sense, rows = payload  # type: ignore[misc]
            return self.propagate_implication(guard, sense, rows)
        bounded, a, b, offset = payload  # type: ignore[misc]
        return self.propagate_product(bounded, a, b, offset)

    def propagate(self) -> bool:
        queue, queued = self.queue, self.queued
        while queue:
            prop_id = queue.popleft()
            queued[prop_id] = False
            if not self._run(prop_id):
                for pending in queue:
                    queued[pending] = False
                queue.clear()
                return False
        return True

    def enqueue_all(self) -> None:
        for prop_id in range(len(self.props)):
            self.queued[prop_id] = True
            self.queue.append(prop_id)

    def enqueue_cut(self) -> None:
        if self.cut_active and not self.queued[self.cut_id]:
            self.queued[self.cut_id] = True
            self.queue.appendleft(self.cut_id)

    # search

    def select(self) -> Optional[int]:
        """Smallest domain first, ties by priority (variable order unless seeded)"""
        lo, hi, priority = self.lo, self.hi, self.priority
        chosen: Optional[int] = None
        chosen_key = (0, 0)
        for index in range(len(lo)):
            size = hi[index] - lo[index]
            if size == 0:
                continue
            key = (size, priority[index])
            if chosen is None or key < chosen_key:
                chosen, chosen_key = index, key
        return chosen

    def values(self, index: int) -> Iterator[int]:
        if self.ascending:
            return iter(range(self.lo[index], self.hi[index] + 1))
        return iter(range(self.hi[index], self.lo[index] - 1, -1))

    def record(self) -> None:
        self.best = list(self.lo)
        if self.objective is None or self.cut is None:
            return
        value = sum(weight * self.best[var.index] for weight, var in self.objective.terms)
        self.best_value = value
        logger.debug("incumbent after %d nodes: objective %d", self.nodes, value)
        self.cut.rhs = value - 1 if self.objective.sense == Sense.MINIMIZE else -(value + 1)
        self.cut_active = True

    def out_of_time(self) -> bool:
        return self.deadline is not None and time.perf_counter() > self.deadline

    def run(self) -> SolveStatus:
        self.enqueue_all()
        if not self.propagate():
            return SolveStatus.UNSAT
        first = self.select()
        if first is None:
            self.record()
            return SolveStatus.OPTIMAL

        # explicit stack of (variable, remaining values, trail mark before branching)
        stack: list[tuple[int, Iterator[int], int]] = [(first, self.values(first), len(self.trail))]
        while stack:
            self.nodes += 1
            if self.nodes % CHECK_INTERVAL == 0 and self.out_of_time():
                if self.best is not None:
                    return SolveStatus.FEASIBLE_UNPROVEN
                return SolveStatus.TIMEOUT_NO_SOLUTION
            index, values, mark = stack[-1]
            self.undo(mark)
            value = next(values, None)
            if value is None:
                stack.pop()
                continue
            self.set_lo(index, value)
            self.set_hi(index, value)
            self.enqueue_cut()
            if not self.propagate():
                continue
            following = self.select()
            if following is None:
                self.record()
                if self.objective is None:
                    return SolveStatus.OPTIMAL
                continue
            stack.append((following, self.values(following), len(self.trail)))
        return SolveStatus.OPTIMAL if self.best is not None else SolveStatus.UNSAT


def solve(model: Model, budget: Optional[SolveBudget] = None) -> SolveOutcome:
    """Branch and bound to optimality, or until the time limit expires.

    Without an objective the first solution found is returned as optimal.
    """
    budget = budget or SolveBudget()
    started = time.perf_counter()
    search = _Search(model, budget)
    status = search.run()
    elapsed = time.perf_counter() - started

    if status == SolveStatus.FEASIBLE_UNPROVEN:
        logger.warning(
            "time limit of %ss reached after %d nodes; returning best incumbent",
            budget.time_limit,
            search.nodes,
        )
    logger.debug(
        "solve finished: %s, %d vars, %d nodes, %.3fs",
        status.value,
        len(model.variables),
        search.nodes,
        elapsed,
    )
    if search.best is None or not (
        status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_UNPROVEN)
    ):
        return SolveOutcome(status=status, nodes=search.nodes, elapsed=elapsed)
    assignment = {var: search.best[var.index] for var in model.variables}
    objective_value = model.objective.value(assignment) if model.objective is not None else 0
    return SolveOutcome(
        status=status,
        assignment=assignment,
        objective_value=objective_value,
        nodes=search.nodes,
        elapsed=elapsed,
    )


def evaluate(model: Model, assignment: Mapping[Var, int]) -> Evaluation:
    """Check an assignment against every constraint literally"""
    missing = [var.name for var in model.variables if var not in assignment]
    if missing:
        raise ModelError(f"assignment is missing {len(missing)} variables, e.g. {missing[0]}")

    satisfied = all(var.lo <= assignment[var] <= var.hi for var in model.variables)
    satisfied = satisfied and all(c.holds(assignment) for c in model.linear)
    satisfied = satisfied and all(
        c.consequence.holds(assignment)
        for c in model.implications
        if c.fires(assignment[c.guard])
    )
    satisfied = satisfied and all(p.holds(assignment) for p in model.products)
    objective_value = model.objective.value(assignment) if model.objective is not None else 0
    return Evaluation(satisfied=satisfied, objective_value=objective_value)


# Text format


def _format_terms(terms: Sequence[Term]) -> str:
    return " ".join(f"{coef}*{var.name}" for coef, var in terms)


def _format_linear(constraint: LinearConstraint) -> str:
    line = f"lin {constraint.relation.value} {constraint.constant}"
    if constraint.terms:
        line += " " + _format_terms(constraint.terms)
    return line


def export_model(model: Model) -> str:
    lines = [
        FORMAT_HEADER,
        f"# vars {len(model.variables)} linear {len(model.linear)} "
        f"implications {len(model.implications)} products {len(model.products)}",
    ]
    lines.extend(f"var {v.name} {v.lo} {v.hi}" for v in model.variables)
    lines.extend(_format_linear(c) for c in model.linear)
    lines.extend(
        f"imp {c.guard.name} {c.sense.value} : {_format_linear(c.consequence)}"
        for c in model.implications
    )
    for p in model.products:
        lines.append(
            f"prod {p.bounded.name} <= {p.factor_a.name}*{p.factor_b.name}{p.offset:+d}"
        )
    if model.objective is not None:
        line = f"obj {model.objective.sense.value}"
        if model.objective.terms:
            line += " " + _format_terms(model.objective.terms)
        lines.append(line)
    return "\n".join(lines) + "\n"


_PRODUCT = re.compile(r"^([^\s*:]+)\*([^\s*:]+?)([+-]\d+)?$")


def _parse_terms(model: Model, tokens: Sequence[str], line_no: int) -> list[Term]:
    terms = []
    for token in tokens:
        coef, sep, name = token.partition("*")
        if not sep:
            raise ModelError(f"line {line_no}: expected <coef>*<name>, got {token!r}")
        try:
            terms.append((int(coef), model.var(name)))
        except ValueError:
            raise ModelError(f"line {line_no}: bad coefficient in {token!r}") from None
    return terms


def _parse_linear(model: Model, tokens: Sequence[str], line_no: int) -> LinearConstraint:
    if len(tokens) < 3 or tokens[0] != "lin":
        raise ModelError(f"line {line_no}: expected a 'lin' constraint")
    try:
        relation = Relation(tokens[1])
        constant = int(tokens[2])
    except ValueError:
        raise ModelError(f"line {line_no}: bad relation or constant") from None
    return LinearConstraint.build(_parse_terms(model, tokens[3:], line_no), relation, constant)


def parse_model(text: str) -> Model:
    """Rebuild a model from ``export_model`` output"""
    model = Model()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        keyword = tokens[0]
        try:
            if keyword == "var" and len(tokens) == 4:
                model.new_var(tokens[1], int(tokens[2]), int(tokens[3]))
            elif keyword == "lin":
                model.add(_parse_linear(model, tokens, line_no))
            elif keyword == "imp" and len(tokens) >= 4 and tokens[3] == ":":
                consequence = _parse_linear(model, tokens[4:], line_no)
                model.add_implication(model.var(tokens[1]), GuardSense(tokens[2]), consequence)
            elif keyword == "prod" and len(tokens) == 4 and tokens[2] == "<=":
                match = _PRODUCT.match(tokens[3])
                if match is None:
                    raise ModelError(f"line {line_no}: bad product {tokens[3]!r}")
                model.add_product_bound(
                    model.var(tokens[1]),
                    model.var(match.group(1)),
                    model.var(match.group(2)),
                    int(match.group(3) or 0),
                )
            elif keyword == "obj" and len(tokens) >= 2:
                terms = _parse_terms(model, tokens[2:], line_no)
                if Sense(tokens[1]) == Sense.MINIMIZE:
                    model.minimize(terms)
                else:
                    model.maximize(terms)
            else:
                raise ModelError(f"line {line_no}: unrecognised line {line!r}")
        except ValueError as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"line {line_no}: {exc}") from None
    return model
