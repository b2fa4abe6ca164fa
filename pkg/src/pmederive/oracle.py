"""Exact-rational instances and reference solvers for numeric validation.

Matrices are numpy object arrays of :class:`gmpy2.mpq`.  Reference solvers
never look at a PME: the LU factorization is computed by plain elimination
and linear operations (such as the coupled Sylvester equation) by writing
the whole equation system as one dense linear system over the unknown
entries.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from gmpy2 import mpq

from .expr import (
    Equation,
    Expr,
    IdentityMatrix,
    Inverse,
    Neg,
    OpApply,
    Plus,
    Property,
    Ref,
    Size,
    Times,
    Transpose,
    ZeroMatrix,
    normalize,
    operands_of,
    terms_of,
    to_text,
    walk,
)
from .opspec import OperationSpec
from .partition import GRID, QUADRANT_PARTS, RuleSet, Shape

Matrix = np.ndarray


class OracleError(ArithmeticError):
    pass


class UnsupportedOperation(OracleError):
    pass


# --------------------------------------------------------------------------
# exact dense linear algebra


def zeros(r: int, c: int) -> Matrix:
    out = np.empty((r, c), dtype=object)
    out.fill(mpq(0))
    return out


def eye(n: int) -> Matrix:
    out = zeros(n, n)
    for i in range(n):
        out[i, i] = mpq(1)
    return out


def exact(a) -> Matrix:
    arr = np.asarray(a, dtype=object)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = mpq(v)
    return out


def solve(a: Matrix, b: Matrix) -> Matrix:
    """Solve ``a x = b`` exactly by Gaussian elimination (first nonzero pivot)."""
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise OracleError(f"solve needs a square system, got {a.shape} and {b.shape}")
    m = [[mpq(v) for v in a[i]] + [mpq(v) for v in b[i]] for i in range(n)]
    width = n + b.shape[1]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise OracleError("singular system")
        m[col], m[piv] = m[piv], m[col]
        prow = m[col]
        inv = 1 / prow[col]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col] * inv
                row = m[r]
                for j in range(col, width):
                    if prow[j] != 0:
                        row[j] -= f * prow[j]
    out = zeros(n, b.shape[1])
    for i in range(n):
        inv = 1 / m[i][i]
        for j in range(b.shape[1]):
            out[i, j] = m[i][n + j] * inv
    return out


def inverse(a: Matrix) -> Matrix:
    return solve(a, eye(a.shape[0]))


def lu_nopivot(a: Matrix) -> tuple[Matrix, Matrix]:
    """Doolittle elimination without pivoting: unit lower ``L`` and upper ``U`` with ``L U = a``."""
    n = a.shape[0]
    lo, up = eye(n), zeros(n, n)
    for i in range(n):
        for j in range(i, n):
            up[i, j] = a[i, j] - sum((lo[i, k] * up[k, j] for k in range(i)), mpq(0))
        if up[i, i] == 0 and i < n:
            if any(a[r, i] - sum((lo[r, k] * up[k, i] for k in range(i)), mpq(0)) != 0 for r in range(i + 1, n)):
                raise OracleError("matrix has no LU factorization without pivoting")
            if i < n - 1:
                raise OracleError("zero pivot in LU factorization")
        for r in range(i + 1, n):
            lo[r, i] = (a[r, i] - sum((lo[r, k] * up[k, i] for k in range(i)), mpq(0))) / up[i, i]
    return lo, up


def same(a: Matrix, b: Matrix) -> bool:
    return a.shape == b.shape and bool(np.all(a == b))


# --------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class ConcreteInstance:
    sizes: tuple[tuple[str, int], ...]
    values: Mapping[str, Matrix] = field(compare=False)
    seed: int | None = None

    def size(self, base: str) -> int:
        return _size_of(Size(base), dict(self.sizes))


def _size_of(s: Size, sizes: Mapping[str, int]) -> int:
    if s.base == "1":
        return 1
    return sizes[s.base]


def _operand_value(op, r: int, c: int, rng: np.random.Generator) -> Matrix:
    p = op.properties
    if Property.ZERO in p:
        return zeros(r, c)
    if Property.IDENTITY in p:
        return eye(r)
    vals = rng.integers(-4, 5, size=(r, c))
    diag = rng.integers(1, 10, size=min(r, c)) * rng.choice([-1, 1], size=min(r, c))
    m = exact(vals)
    if Property.LOWER_TRIANGULAR in p:
        m = np.tril(m)
        m[m == 0] = mpq(0)
    if Property.UPPER_TRIANGULAR in p:
        m = np.triu(m)
        m[m == 0] = mpq(0)
    if r == c and p & {Property.LOWER_TRIANGULAR, Property.UPPER_TRIANGULAR, Property.NONSINGULAR}:
        for i in range(r):
            m[i, i] = mpq(int(diag[i]))
    if Property.EXISTS_LU in p and r == c:
        # strict diagonal dominance keeps every leading minor and Schur complement nonsingular
        for i in range(r):
            off = sum(abs(m[i, j]) for j in range(c) if j != i)
            m[i, i] = mpq(int(off) + int(abs(diag[i])))
    if Property.UNIT_DIAGONAL in p:
        for i in range(min(r, c)):
            m[i, i] = mpq(1)
    return m


def _diagonal_subinstances_ok(spec: OperationSpec, values: Mapping[str, Matrix], sizes: Mapping[str, int]) -> bool:
    """Every 1x1 sub-problem taken along the diagonals must be solvable."""
    bases = sorted({s.base for op in spec.operands for s in (op.rows, op.cols) if s.base != "1"})
    ranges = [range(sizes[b]) for b in bases]
    for combo in itertools.product(*ranges):
        idx = dict(zip(bases, combo))
        sub = {}
        for op in spec.inputs:
            i = idx.get(op.rows.base, 0)
            j = idx.get(op.cols.base, 0)
            sub[op.name] = values[op.name][i:i + 1, j:j + 1]
        try:
            reference_solve(spec, sub)
        except OracleError:
            return False
    return True


def random_instance(
    spec: OperationSpec, sizes: int | Mapping[str, int], seed: int = 0, max_tries: int = 1000
) -> ConcreteInstance:
    """A deterministic instance respecting every declared input property."""
    bases = sorted({s.base for op in spec.operands for s in (op.rows, op.cols) if s.base != "1"})
    if isinstance(sizes, int):
        sizes = {b: sizes for b in bases}
    sizes = dict(sizes)
    if any(sizes[b] < 1 for b in bases):
        raise ValueError("sizes must be at least 1")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        values = {}
        for op in spec.inputs:
            values[op.name] = _operand_value(op, _size_of(op.rows, sizes), _size_of(op.cols, sizes), rng)
        if _diagonal_subinstances_ok(spec, values, sizes):
            return ConcreteInstance(tuple(sorted(sizes.items())), values, seed)
    raise OracleError(f"no solvable instance of {spec.name} found after {max_tries} draws")


def instance_violations(spec: OperationSpec, inst: ConcreteInstance) -> list[str]:
    out = []
    for op in spec.inputs:
        m = inst.values[op.name]
        p = op.properties
        name = op.name
        if Property.LOWER_TRIANGULAR in p and not same(m, np.tril(m)):
            out.append(f"{name} is not lower triangular")
        if Property.UPPER_TRIANGULAR in p and not same(m, np.triu(m)):
            out.append(f"{name} is not upper triangular")
        if Property.UNIT_DIAGONAL in p and any(m[i, i] != 1 for i in range(min(m.shape))):
            out.append(f"{name} has a non-unit diagonal")
        if Property.EXISTS_LU in p:
            for k in range(1, m.shape[0] + 1):
                try:
                    inverse(m[:k, :k])
                except OracleError:
                    out.append(f"{name} has a singular leading principal submatrix of order {k}")
                    break
        if Property.NONSINGULAR in p:
            try:
                inverse(m)
            except OracleError:
                out.append(f"{name} is singular")
    return out


# --------------------------------------------------------------------------
# evaluation

Lookup = Callable[[Ref], Matrix]
OpSolver = Callable[[str, Sequence[Matrix]], tuple[Matrix, ...]]


def evaluate(e: Expr, lookup: Lookup, solve_op: OpSolver | None = None):
    """Value of ``e``; an operation application yields a tuple of its outputs."""
    if isinstance(e, Ref):
        return lookup(e)
    if isinstance(e, Plus):
        vals = [evaluate(t, lookup, solve_op) for t in e.terms]
        out = vals[0]
        for v in vals[1:]:
            out = out + v
        return out
    if isinstance(e, Neg):
        return -evaluate(e.arg, lookup, solve_op)
    if isinstance(e, Times):
        vals = [evaluate(f, lookup, solve_op) for f in e.factors]
        out = vals[0]
        for v in vals[1:]:
            if out.shape[1] != v.shape[0]:
                raise OracleError(f"non-conformal product in {to_text(e)}")
            out = out @ v if out.shape[1] else zeros(out.shape[0], v.shape[1])
        return out
    if isinstance(e, Transpose):
        return evaluate(e.arg, lookup, solve_op).T
    if isinstance(e, Inverse):
        v = evaluate(e.arg, lookup, solve_op)
        return inverse(v) if v.shape[0] else v
    if isinstance(e, OpApply):
        if solve_op is None:
            raise OracleError(f"no solver for {e.op}")
        args = [evaluate(a, lookup, solve_op) for a in e.args]
        out = solve_op(e.op, args)
        return out if e.n_outputs > 1 else out[0]
    if isinstance(e, (ZeroMatrix, IdentityMatrix)):
        raise OracleError("a bare 0 or I has no size of its own")
    raise TypeError(f"cannot evaluate {e!r}")


def _bind_sizes(spec: OperationSpec, values: Mapping[str, Matrix]) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for op in spec.inputs:
        m = values[op.name]
        for s, n in ((op.rows, m.shape[0]), (op.cols, m.shape[1])):
            if s.base == "1":
                continue
            if sizes.setdefault(s.base, n) != n:
                raise OracleError(f"inconsistent size {s.base} for {op.name}")
    return sizes


def _free_entries(op, r: int, c: int) -> list[tuple[int, int]]:
    p = op.properties
    out = []
    for i in range(r):
        for j in range(c):
            if Property.LOWER_TRIANGULAR in p and j > i:
                continue
            if Property.UPPER_TRIANGULAR in p and i > j:
                continue
            out.append((i, j))
    return out


def _output_counts(spec: OperationSpec, e: Expr) -> int:
    outs = {op.name for op in spec.outputs}
    return sum(1 for x in walk(e) if isinstance(x, Ref) and x.name in outs)


def _is_linear(spec: OperationSpec) -> bool:
    outs = {op.name for op in spec.outputs}
    if any(op.has(Property.UNIT_DIAGONAL) or op.has(Property.ZERO) or op.has(Property.IDENTITY) for op in spec.outputs):
        return False
    for eq in spec.postcondition:
        res = normalize(Plus((eq.lhs[0], Neg(eq.rhs))))
        for t in terms_of(res):
            if _output_counts(spec, t) > 1:
                return False
            for x in walk(t):
                if isinstance(x, (Inverse, OpApply)) and any(r.name in outs for r in operands_of(x)):
                    return False
    return True


def _solve_linear(spec: OperationSpec, values: Mapping[str, Matrix]) -> dict[str, Matrix]:
    sizes = _bind_sizes(spec, values)
    shapes = {op.name: (_size_of(op.rows, sizes), _size_of(op.cols, sizes)) for op in spec.outputs}
    unknowns = [(op.name, i, j) for op in spec.outputs for i, j in _free_entries(op, *shapes[op.name])]

    def residual(outs: Mapping[str, Matrix]) -> list:
        env = {**values, **outs}
        vec = []
        for eq in spec.postcondition:
            r = evaluate(eq.lhs[0], lambda x: env[x.name]) - evaluate(eq.rhs, lambda x: env[x.name])
            vec.extend(r.reshape(-1))
        return vec

    base = {n: zeros(*shapes[n]) for n in shapes}
    r0 = residual(base)
    if len(r0) != len(unknowns):
        raise UnsupportedOperation(f"{spec.name}: {len(r0)} equations for {len(unknowns)} unknowns")
    n = len(unknowns)
    a = zeros(n, n)
    for col, (name, i, j) in enumerate(unknowns):
        probe = {k: v.copy() for k, v in base.items()}
        probe[name][i, j] = mpq(1)
        rc = residual(probe)
        for row in range(n):
            a[row, col] = rc[row] - r0[row]
    b = zeros(n, 1)
    for row in range(n):
        b[row, 0] = -r0[row]
    x = solve(a, b) if n else zeros(0, 1)
    out = {k: v.copy() for k, v in base.items()}
    for (name, i, j), v in zip(unknowns, x[:, 0]):
        out[name][i, j] = v
    return out


def _lu_form(spec: OperationSpec):
    if len(spec.postcondition) != 1:
        return None
    eq = spec.postcondition[0]
    outs = {op.name for op in spec.outputs}
    res = normalize(Plus((eq.lhs[0], Neg(eq.rhs))))
    prod = [t for t in terms_of(res) if _output_counts(spec, t)]
    rest = [t for t in terms_of(res) if not _output_counts(spec, t)]
    if len(prod) != 1 or not isinstance(prod[0], Times) or len(prod[0].factors) != 2:
        return None
    x, y = prod[0].factors
    if not (isinstance(x, Ref) and isinstance(y, Ref) and {x.name, y.name} == outs):
        return None
    lo, up = spec.operand(x.name), spec.operand(y.name)
    if not (lo.has(Property.LOWER_TRIANGULAR) and lo.has(Property.UNIT_DIAGONAL) and up.has(Property.UPPER_TRIANGULAR)):
        return None
    return x.name, y.name, normalize(Neg(Plus(tuple(rest))))


def reference_solve(spec: OperationSpec, values: Mapping[str, Matrix]) -> dict[str, Matrix]:
    """Output values of ``spec`` for the given input values, computed exactly."""
    lu = _lu_form(spec)
    if lu is not None:
        lname, uname, known = lu
        a = evaluate(known, lambda r: values[r.name])
        lo, up = lu_nopivot(a)
        return {lname: lo, uname: up}
    if _is_linear(spec):
        return _solve_linear(spec, values)
    raise UnsupportedOperation(f"no reference solver for {spec.name}")


# --------------------------------------------------------------------------
# partitioned instances


def split_variables(spec: OperationSpec, rs: RuleSet, sizes: Mapping[str, int]) -> dict[int, int]:
    """Size of the dimension cut by each split variable."""
    out = {}
    for op in spec.operands:
        row, col = rs.split_of(op.name)
        if row is not None:
            out[row] = _size_of(op.rows, sizes)
        if col is not None:
            out[col] = _size_of(op.cols, sizes)
    return out


def quadrant_slices(spec: OperationSpec, rs: RuleSet, r: Ref, split: Mapping[int, int]) -> tuple[slice, slice]:
    row_var, col_var = rs.split_of(r.name)
    row_part, col_part = QUADRANT_PARTS[r.quadrant]

    def cut(var, part):
        if var is None or part == "full":
            return slice(None)
        k = split[var]
        return slice(0, k) if part == "head" else slice(k, None)

    return cut(row_var, row_part), cut(col_var, col_part)


def quadrant_value(spec: OperationSpec, rs: RuleSet, r: Ref, m: Matrix, split: Mapping[int, int]) -> Matrix:
    rows, cols = quadrant_slices(spec, rs, r, split)
    return m[rows, cols]


def all_quadrants(rs: RuleSet, name: str) -> list[Ref]:
    rule = rs.rule(name)
    return [Ref(name, q) for q in rule.quadrants]


def assemble(rs: RuleSet, name: str, quads: Mapping[Ref, Matrix]) -> Matrix:
    rule = rs.rule(name)
    nr, nc = GRID[rule.shape]
    if rule.shape is Shape.ONE_BY_ONE:
        return quads[Ref(name)]
    cells = [quads[Ref(name, q)] for q in rule.quadrants]
    rows = [np.concatenate(cells[i * nc:(i + 1) * nc], axis=1) for i in range(nr)]
    return np.concatenate(rows, axis=0)


# --------------------------------------------------------------------------
# checking a derivation


@dataclass
class CheckReport:
    passed: bool = True
    checks: int = 0
    failures: list[str] = field(default_factory=list)

    def record(self, ok: bool, what: str) -> None:
        self.checks += 1
        if not ok:
            self.passed = False
            self.failures.append(what)

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{status}: {self.checks - len(self.failures)}/{self.checks} exact checks"


class _Solvers:
    """Memoized reference solves of learned operations."""

    def __init__(self, registry):
        self.registry = registry
        self.memo: dict = {}

    def __call__(self, op: str, args: Sequence[Matrix]) -> tuple[Matrix, ...]:
        key = (op, tuple((a.shape, tuple(a.reshape(-1))) for a in args))
        hit = self.memo.get(key)
        if hit is None:
            pattern = self.registry.get(op)
            values = dict(zip(pattern.inputs, args))
            out = reference_solve(pattern.spec, values)
            hit = tuple(out[name] for name in pattern.outputs)
            self.memo[key] = hit
        return hit


def _equation_holds(eq: Equation, lhs_lookup: Lookup, rhs_lookup: Lookup, solvers) -> bool:
    rhs = evaluate(eq.rhs, rhs_lookup, solvers)
    if len(eq.lhs) == 1:
        lhs = evaluate(eq.lhs[0], lhs_lookup, solvers)
        rhs = (rhs,)
        lhs = (lhs,)
    else:
        lhs = tuple(lhs_lookup(r) for r in eq.lhs)
    return len(lhs) == len(rhs) and all(same(a, b) for a, b in zip(lhs, rhs))


def _splits(vars_: Mapping[int, int], k) -> list[dict[int, int]]:
    if k is None:
        keys = sorted(vars_)
        return [dict(zip(keys, c)) for c in itertools.product(*(range(vars_[v] + 1) for v in keys))]
    if isinstance(k, int):
        return [{v: min(k, n) for v, n in vars_.items()}]
    return [dict(k)]


def check_derivation(derivation, inst: ConcreteInstance, k=None, pmes: Iterable[int] | None = None) -> CheckReport:
    """Evaluate every PME cell and every invariant equality on ``inst``.

    ``k`` selects the split: ``None`` for every split point (all combinations
    when several split variables exist), an int for the same point on every
    variable (clipped to its size), or an explicit ``{variable: point}`` map.
    Checks are exact; failures name the PME, the split and the cell.
    """
    spec = derivation.spec
    solvers = _Solvers(derivation.registry)
    report = CheckReport()
    sizes = dict(inst.sizes)
    inputs = {op.name: inst.values[op.name] for op in spec.inputs}
    reference = reference_solve(spec, inputs)
    whole = {**inputs, **reference}
    input_names = {op.name for op in spec.inputs}
    for p in derivation.pmes:
        if pmes is not None and p.index not in pmes:
            continue
        rs = p.pme.ruleset
        vars_ = split_variables(spec, rs, sizes)
        for split in _splits(vars_, k):
            where = f"PME {p.index}, split {','.join(f'k{v}={n}' for v, n in sorted(split.items()))}"
            _check_split(p, spec, rs, split, whole, inputs, reference, input_names, solvers, report, where)
    return report


def _check_split(p, spec, rs, split, whole, inputs, reference, input_names, solvers, report, where):
    original = {}
    for op in spec.operands:
        for r in all_quadrants(rs, op.name):
            original[r] = quadrant_value(spec, rs, r, whole[op.name], split)

    # PME cells with the reference outputs
    def ref_lookup(r: Ref) -> Matrix:
        return original[r]

    for cell in p.pme.cells:
        for eq in cell.equations:
            ok = _equation_holds(eq, ref_lookup, ref_lookup, solvers)
            report.record(ok, f"{where}: PME cell {cell.quadrant or 'Whole'} does not hold: {eq}")

    # task execution: one state per downset, each extending its parent by one task
    start = {}
    for op in spec.operands:
        for r in all_quadrants(rs, op.name):
            v = original[r]
            start[r] = v if op.name in input_names else zeros(*v.shape)
    g = p.graph
    order = sorted(g.ids, key=lambda i: (g.level_of(i), i))
    rank = {t: n for n, t in enumerate(order)}
    states: dict[frozenset, dict] = {frozenset(): start}

    def state_of(done: frozenset) -> dict:
        hit = states.get(done)
        if hit is not None:
            return hit
        last = max(done, key=rank.__getitem__)
        prev = state_of(done - {last})
        task = g.task(last)
        val = evaluate(task.expr, prev.__getitem__, solvers)
        new = dict(prev)
        if len(task.outputs) == 1:
            new[task.outputs[0]] = val
        else:
            new.update(zip(task.outputs, val))
        states[done] = new
        return new

    final = state_of(frozenset(g.ids))
    for op in spec.outputs:
        for r in all_quadrants(rs, op.name):
            if Property.ZERO in rs.rule(op.name).properties(r.quadrant):
                continue
            report.record(same(final[r], original[r]), f"{where}: executing all tasks gives a wrong {to_text(r)}")

    full = all(split[v] == n for v, n in split_variables(spec, rs, _sizes_from(spec, inputs)).items())
    memo: dict = {}
    for inv in p.invariants:
        st = state_of(frozenset(inv.subgraph))

        def rhs_lookup(r: Ref, st=st) -> Matrix:
            return original[r] if r.name in input_names else st[r]

        for q, s in inv.grid:
            for eq in s.equations:
                refs = sorted(operands_of(eq), key=to_text)
                key = (eq, tuple(id(st[r]) for r in refs))
                ok = memo.get(key)
                if ok is None:
                    ok = _equation_holds(eq, st.__getitem__, rhs_lookup, solvers)
                    memo[key] = ok
                report.record(ok, f"{where}: invariant {set(inv.subgraph)} quadrant {q or 'Whole'}: {eq}")
        if full:
            outs = {op.name: assemble(rs, op.name, st) for op in spec.outputs}
            env = {**inputs, **outs}
            holds = all(
                _equation_holds(eq, lambda r: env[r.name], lambda r: env[r.name], solvers) for eq in spec.postcondition
            )
            report.record(holds, f"{where}: invariant {set(inv.subgraph)} with a false guard misses the postcondition")


def _sizes_from(spec: OperationSpec, inputs: Mapping[str, Matrix]) -> dict[str, int]:
    return _bind_sizes(spec, inputs)
