"""Solver contract: linear objective over real variables under cone constraints.

A :class:`ConicProgram` declares named real variables (scalars, vectors,
symmetric-matrix blocks), a linear objective, and constraints as affine maps
paired with cones (zero, nonnegative orthant, second-order, PSD). Complex
Hermitian PSD blocks enter through the real embedding of :mod:`resbeam.lmi`.

Two production backends are provided behind one interface: Clarabel
(interior-point; preferred while the largest PSD block stays small) and SCS
(first-order; scales to the larger lifted-IRS blocks). Both are deterministic
given identical inputs and settings. A grid-refinement reference backend for
tiny programs supports oracle tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from resbeam.lmi import AffineScalar, LmiBlock, ParamRef, hermitian_to_real

__all__ = ["ConicProgram", "ConicSolution", "solve", "reference_solve"]

log = logging.getLogger(__name__)

_SVEC_CACHE: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _svec_indices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle column-major indices and sqrt(2) off-diagonal scaling."""
    if n not in _SVEC_CACHE:
        rows, cols, scale = [], [], []
        for c in range(n):
            for r in range(c + 1):
                rows.append(r)
                cols.append(c)
                scale.append(1.0 if r == c else np.sqrt(2.0))
        _SVEC_CACHE[n] = (np.array(rows), np.array(cols), np.array(scale))
    return _SVEC_CACHE[n]


def _svec(S: np.ndarray) -> np.ndarray:
    r, c, scale = _svec_indices(S.shape[0])
    return S[r, c] * scale


def _svec_lower_perm(n: int) -> np.ndarray:
    """Permutation carrying upper-col-major svec entries to lower-col-major."""
    upper = {}
    k = 0
    for c in range(n):
        for r in range(c + 1):
            upper[(r, c)] = k
            k += 1
    perm = []
    for c in range(n):
        for r in range(c, n):
            perm.append(upper[(c, r)])
    return np.array(perm)


@dataclass
class _PsdBlock:
    const: np.ndarray                      # real symmetric
    coeffs: list[tuple[int, np.ndarray]]   # (column, real symmetric)
    name: str = ""


@dataclass
class ConicSolution:
    """Solver outcome: status, primal values per variable, diagnostics."""

    status: str                    # optimal | infeasible | numerical-failure
    values: dict[str, np.ndarray]
    objective: float
    max_violation: float
    backend: str
    iterations: int = 0
    detail: str = ""
    raw: dict = field(default_factory=dict)

    def value(self, name: str) -> np.ndarray:
        return self.values[name]


class ConicProgram:
    """Assembles one conic problem; immutable once solved."""

    def __init__(self) -> None:
        self._sizes: dict[str, int] = {}
        self._offsets: dict[str, int] = {}
        self._ncols = 0
        self._obj: dict[int, float] = {}
        self._obj_const = 0.0
        self._sense = 1.0  # +1 minimize, -1 maximize
        self._zero_rows: list[AffineScalar] = []
        self._nonneg_rows: list[AffineScalar] = []
        self._soc_groups: list[list[AffineScalar]] = []
        self._psd_blocks: list[_PsdBlock] = []
        self.warm_start: dict[str, np.ndarray] | None = None

    # --- variables ----------------------------------------------------------

    def add_variable(self, name: str, size: int = 1, nonneg: bool = False) -> str:
        """Declare a named real scalar (size 1) or vector variable."""
        if name in self._sizes:
            raise ValueError(f"variable {name!r} already declared")
        if size < 1:
            raise ValueError("size must be positive")
        self._sizes[name] = size
        self._offsets[name] = self._ncols
        self._ncols += size
        if nonneg:
            for i in range(size):
                self._nonneg_rows.append(AffineScalar(0.0, [((name, i), 1.0)]))
        return name

    def add_symmetric(self, name: str, n: int) -> str:
        """Declare a real symmetric n x n block, stored as n(n+1)/2 parameters.

        Parameter order matches the upper-triangle column-major svec layout
        (off-diagonals unscaled); use :meth:`symmetric_value` to materialize.
        """
        self.add_variable(name, n * (n + 1) // 2)
        self._sym_dims = getattr(self, "_sym_dims", {})
        self._sym_dims[name] = n
        return name

    def symmetric_value(self, solution: ConicSolution, name: str) -> np.ndarray:
        n = self._sym_dims[name]
        r, c, _ = _svec_indices(n)
        S = np.zeros((n, n))
        S[r, c] = solution.values[name]
        S[c, r] = solution.values[name]
        return S

    def size(self, name: str) -> int:
        return self._sizes[name]

    def _col(self, ref: ParamRef) -> int:
        name, idx = ref
        if idx < 0 or idx >= self._sizes[name]:
            raise ValueError(f"index {idx} out of range for variable {name!r}")
        return self._offsets[name] + idx

    # --- objective and constraints -------------------------------------------

    def set_objective(self, sense: str, terms: Iterable[tuple[ParamRef, float]],
                      const: float = 0.0) -> None:
        if sense not in ("minimize", "maximize"):
            raise ValueError("sense must be 'minimize' or 'maximize'")
        self._sense = 1.0 if sense == "minimize" else -1.0
        self._obj = {}
        for ref, coef in terms:
            col = self._col(ref)
            self._obj[col] = self._obj.get(col, 0.0) + float(coef)
        self._obj_const = float(const)

    def add_equality(self, expr: AffineScalar) -> None:
        """Constrain expr == 0."""
        self._check(expr)
        self._zero_rows.append(expr)

    def add_nonneg(self, expr: AffineScalar) -> None:
        """Constrain expr >= 0."""
        self._check(expr)
        self._nonneg_rows.append(expr)

    def add_soc(self, exprs: Sequence[AffineScalar]) -> None:
        """Constrain exprs[0] >= l2-norm(exprs[1:])."""
        for e in exprs:
            self._check(e)
        self._soc_groups.append(list(exprs))

    def add_psd(self, const: np.ndarray, coeffs: Iterable[tuple[ParamRef, np.ndarray]],
                name: str = "") -> None:
        """Constrain the real symmetric affine block const + sum x_p C_p >= 0."""
        const = np.asarray(const, dtype=float)
        if const.ndim != 2 or const.shape[0] != const.shape[1]:
            raise ValueError("PSD block must be square")
        resolved = [(self._col(ref), np.asarray(C, dtype=float)) for ref, C in coeffs]
        for _, C in resolved:
            if C.shape != const.shape:
                raise ValueError("PSD coefficient shape mismatch")
        # PSD is invariant under positive scaling; normalize for conditioning
        norms = [np.abs(const).max(initial=0.0)] + [np.abs(C).max(initial=0.0) for _, C in resolved]
        scale = 1.0 / max(1.0, max(norms))
        if scale < 1.0:
            const = const * scale
            resolved = [(col, C * scale) for col, C in resolved]
        self._psd_blocks.append(_PsdBlock(const=const, coeffs=resolved, name=name))

    def add_hermitian_psd(self, block: LmiBlock) -> None:
        """Constrain a complex Hermitian affine block PSD via the real embedding."""
        const = hermitian_to_real(block.const)
        coeffs = [(ref, hermitian_to_real(C)) for ref, C in block.coeffs]
        self.add_psd(const, coeffs, name=block.name)

    def _check(self, expr: AffineScalar) -> None:
        for ref, _ in expr.terms:
            self._col(ref)

    # --- evaluation helpers ---------------------------------------------------

    def _x_from_values(self, values: dict[str, np.ndarray]) -> np.ndarray:
        x = np.zeros(self._ncols)
        for name, size in self._sizes.items():
            x[self._offsets[name]:self._offsets[name] + size] = np.asarray(values[name]).reshape(size)
        return x

    def _values_from_x(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {
            name: x[self._offsets[name]:self._offsets[name] + size].copy()
            for name, size in self._sizes.items()
        }

    def _eval_expr(self, expr: AffineScalar, x: np.ndarray) -> float:
        return expr.const + sum(coef * x[self._col(ref)] for ref, coef in expr.terms)

    def objective_value(self, x: np.ndarray) -> float:
        raw = self._obj_const + sum(coef * x[col] for col, coef in self._obj.items())
        return float(raw)

    def max_violation(self, x: np.ndarray) -> float:
        worst = 0.0
        for expr in self._zero_rows:
            worst = max(worst, abs(self._eval_expr(expr, x)))
        for expr in self._nonneg_rows:
            worst = max(worst, -min(self._eval_expr(expr, x), 0.0))
        for group in self._soc_groups:
            head = self._eval_expr(group[0], x)
            tail = np.linalg.norm([self._eval_expr(e, x) for e in group[1:]])
            worst = max(worst, max(tail - head, 0.0))
        for block in self._psd_blocks:
            S = block.const.copy()
            for col, C in block.coeffs:
                S = S + x[col] * C
            worst = max(worst, max(-float(np.linalg.eigvalsh(S)[0]), 0.0))
        return worst

    # --- assembly --------------------------------------------------------------

    def _rows_to_coo(self, rows: list[AffineScalar], row_base: int,
                     data: list, ri: list, ci: list, b: list) -> None:
        for i, expr in enumerate(rows):
            # s = b - A x >= 0 with s = expr(x) means A[row, col] = -coef, b = const
            for ref, coef in expr.terms:
                data.append(-coef)
                ri.append(row_base + i)
                ci.append(self._col(ref))
            b.append(expr.const)

    def assemble(self) -> tuple[sp.csc_matrix, np.ndarray, np.ndarray, list[tuple[str, int]]]:
        """Build (A, b, c, cone layout) with rows ordered zero/nonneg/soc/psd."""
        data: list[float] = []
        ri: list[int] = []
        ci: list[int] = []
        b: list[float] = []
        layout: list[tuple[str, int]] = []
        row = 0

        self._rows_to_coo(self._zero_rows, row, data, ri, ci, b)
        row += len(self._zero_rows)
        if self._zero_rows:
            layout.append(("zero", len(self._zero_rows)))

        self._rows_to_coo(self._nonneg_rows, row, data, ri, ci, b)
        row += len(self._nonneg_rows)
        if self._nonneg_rows:
            layout.append(("nonneg", len(self._nonneg_rows)))

        for group in self._soc_groups:
            self._rows_to_coo(group, row, data, ri, ci, b)
            row += len(group)
            layout.append(("soc", len(group)))

        for block in self._psd_blocks:
            n = block.const.shape[0]
            tri = n * (n + 1) // 2
            b.extend(_svec(block.const))
            for col, C in block.coeffs:
                v = -_svec(C)
                nz = np.nonzero(v)[0]
                data.extend(v[nz])
                ri.extend(row + nz)
                ci.extend([col] * nz.size)
            row += tri
            layout.append(("psd", n))

        A = sp.coo_matrix((data, (ri, ci)), shape=(row, self._ncols)).tocsc()
        c = np.zeros(self._ncols)
        for col, coef in self._obj.items():
            c[col] = self._sense * coef
        return A, np.array(b), c, layout


# --- backends -----------------------------------------------------------------


def _solve_clarabel(program: ConicProgram, tol: float, max_iters: int,
                    time_limit: float = 60.0) -> ConicSolution:
    import clarabel

    A, b, c, layout = program.assemble()
    cones = []
    for kind, n in layout:
        if kind == "zero":
            cones.append(clarabel.ZeroConeT(n))
        elif kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(n))
        elif kind == "soc":
            cones.append(clarabel.SecondOrderConeT(n))
        else:
            cones.append(clarabel.PSDTriangleConeT(n))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = max_iters
    settings.time_limit = time_limit
    solver = clarabel.DefaultSolver(sp.csc_matrix((len(c), len(c))), c, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status in ("Solved", "AlmostSolved"):
        mapped = "optimal"
    elif status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        mapped = "infeasible"
    else:
        mapped = "numerical-failure"
    x = np.asarray(sol.x) if mapped == "optimal" else np.zeros(len(c))
    return ConicSolution(
        status=mapped,
        values=program._values_from_x(x),
        objective=program.objective_value(x) if mapped == "optimal" else np.nan,
        max_violation=program.max_violation(x) if mapped == "optimal" else np.inf,
        backend="clarabel",
        iterations=int(sol.iterations),
        detail=status,
    )


def _solve_scs(program: ConicProgram, tol: float, max_iters: int,
               allow_inaccurate: bool = False, time_limit: float = 60.0) -> ConicSolution:
    import scs

    A, b, c, layout = program.assemble()
    # reorder PSD rows from upper-col-major to SCS's lower-col-major svec
    perm = np.arange(A.shape[0])
    pos = 0
    cone: dict = {}
    soc_sizes: list[int] = []
    psd_sizes: list[int] = []
    for kind, n in layout:
        if kind == "zero":
            cone["z"] = n
            pos += n
        elif kind == "nonneg":
            cone["l"] = n
            pos += n
        elif kind == "soc":
            soc_sizes.append(n)
            pos += n
        else:
            tri = n * (n + 1) // 2
            perm[pos:pos + tri] = pos + _svec_lower_perm(n)
            psd_sizes.append(n)
            pos += tri
    if soc_sizes:
        cone["q"] = soc_sizes
    if psd_sizes:
        cone["s"] = psd_sizes
    A = A.tocsr()[perm].tocsc()
    b = b[perm]
    data = {"A": A, "b": b, "c": c}
    if program.warm_start is not None and program.warm_start.get("x") is not None:
        for key in ("x", "y", "s"):
            if program.warm_start.get(key) is not None:
                data[key] = np.asarray(program.warm_start[key], dtype=float)
    out = scs.solve(
        data, cone,
        eps_abs=tol, eps_rel=tol, eps_infeas=1e-9,
        max_iters=max_iters, verbose=False,
        time_limit_secs=time_limit,
    )
    info = out["info"]
    status = info["status"]
    if status == "solved" or (allow_inaccurate and status.startswith("solved")):
        mapped = "optimal"
    elif "infeasible" in status:
        mapped = "infeasible"
    else:
        mapped = "numerical-failure"
    x = np.asarray(out["x"]) if out["x"] is not None else np.zeros(len(c))
    x = np.nan_to_num(x)
    sol = ConicSolution(
        status=mapped,
        values=program._values_from_x(x),
        objective=program.objective_value(x) if mapped == "optimal" else np.nan,
        max_violation=program.max_violation(x) if mapped == "optimal" else np.inf,
        backend="scs",
        iterations=int(info["iter"]),
        detail=status,
    )
    sol.raw = {"x": x, "y": np.asarray(out["y"]), "s": np.asarray(out["s"])}
    return sol


_CLARABEL_MAX_PSD = 40  # largest embedded PSD side handled by the IPM backend


def solve(program: ConicProgram, tol: float = 1e-8, max_iters: int = 50_000,
          backend: str | None = None, allow_inaccurate: bool = False,
          time_limit: float = 60.0) -> ConicSolution:
    """Solve the program, choosing the backend by largest PSD block.

    Infeasibility and numerical failure are reported in the status, never
    raised. On a numerical failure of the preferred backend the other
    production backend is tried before giving up. ``allow_inaccurate``
    accepts a reduced-accuracy first-order solution instead of failing;
    callers that validate results exactly downstream use this to keep
    degenerate instances moving.
    """
    largest = max((blk.const.shape[0] for blk in program._psd_blocks), default=0)
    if backend is None:
        backend = "clarabel" if largest <= _CLARABEL_MAX_PSD else "scs"
    order = [backend] + [alt for alt in ("clarabel", "scs") if alt != backend]
    last: ConicSolution | None = None
    for name in order:
        if name == "clarabel":
            sol = _solve_clarabel(program, tol, min(max_iters, 200), time_limit=time_limit)
        else:
            sol = _solve_scs(program, max(tol, 1e-9), max_iters,
                             allow_inaccurate=allow_inaccurate, time_limit=time_limit)
        if sol.status != "numerical-failure":
            return sol
        log.warning("conic backend %s failed (%s); trying fallback", name, sol.detail)
        last = sol
    return last


def reference_solve(program: ConicProgram, rounds: int = 48, width: int = 5,
                    seed: int = 0) -> ConicSolution:
    """Tiny grid-refinement solver for oracle tests (few variables only).

    Multi-scale feasible search: sample a shrinking grid plus random jitter
    around the incumbent, keep the best feasible point. Exact constraint
    evaluation, no duality; intended for <= 6 free parameters.
    """
    n = program._ncols
    if n > 6:
        raise ValueError("reference backend is restricted to tiny programs")
    rng = np.random.default_rng(seed)
    center = np.zeros(n)
    radius = 4.0
    best_x = None
    best_obj = np.inf
    feas_tol = 1e-9
    for _ in range(rounds):
        offsets = np.linspace(-radius, radius, width)
        candidates = [center + delta for delta in
                      (np.stack(np.meshgrid(*([offsets] * n)), axis=-1).reshape(-1, n))]
        candidates += [center + radius * rng.standard_normal(n) for _ in range(64)]
        for x in candidates:
            if program.max_violation(x) > feas_tol:
                continue
            val = program._sense * program.objective_value(x)
            if val < best_obj:
                best_obj = val
                best_x = x.copy()
        if best_x is not None:
            center = best_x
        radius *= 0.6
    if best_x is None:
        return ConicSolution(status="infeasible", values=program._values_from_x(center),
                             objective=np.nan, max_violation=np.inf, backend="reference")
    return ConicSolution(
        status="optimal",
        values=program._values_from_x(best_x),
        objective=program.objective_value(best_x),
        max_violation=program.max_violation(best_x),
        backend="reference",
    )
