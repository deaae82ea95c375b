"""Nonlinear field solves, limiting solves, and the small-data sweep.

The quasilinear problem is solved by fixed-point (Kachanov) iteration:
freeze sigma at the previous iterate's element gradients, solve the
resulting weighted linear problem, damp, repeat. Every converged solve
runs two cheap monitors — energy descent along the iterates and the
discrete maximum principle — and files anything suspicious in the
module-level ``VIOLATIONS`` registry so a test session can assert that
nothing was ever silently wrong.

``iterations`` on a returned FieldSolution counts fixed-point steps;
``residuals`` is the conjugate-gradient history of the final linear
solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import fem
from . import mesh as qmesh
from .materials import sigma as material_sigma
from .materials import validate_assumptions

__all__ = [
    "NonlinearSolveConfig",
    "LambdaSweep",
    "PicardNonConvergenceError",
    "NumericalBreakdownError",
    "VIOLATIONS",
    "record_violation",
    "clear_violations",
    "solve_nonlinear",
    "solve_pec_limit",
    "solve_pei_limit",
    "lambda_sweep",
    "log_grid",
    "linear_profile",
    "boundary_weights",
]

#: Monitor findings from every solve in the process, appended in order.
#: A clean run leaves this empty; tests assert that at teardown.
VIOLATIONS: list = []

ENERGY_DESCENT_RTOL = 1e-9
MAX_PRINCIPLE_RTOL = 1e-8


def record_violation(kind, context, magnitude, detail=""):
    VIOLATIONS.append(
        {"kind": kind, "context": context, "magnitude": float(magnitude),
         "detail": detail}
    )


def clear_violations():
    VIOLATIONS.clear()


class PicardNonConvergenceError(RuntimeError):
    """Fixed-point iteration hit its cap. Carries both histories."""

    def __init__(self, message, energy_history, change_history):
        super().__init__(message)
        self.energy_history = np.asarray(energy_history)
        self.change_history = np.asarray(change_history)


class NumericalBreakdownError(RuntimeError):
    """A non-finite field value appeared; ``element`` locates it."""

    def __init__(self, message, element):
        super().__init__(message)
        self.element = int(element)


@dataclass(frozen=True)
class NonlinearSolveConfig:
    """Fixed-point controls.

    ``damping`` of None picks 1.0, or 0.7 when any region carries a
    steep power law (exponent >= 10), which otherwise tends to
    overshoot. ``initial_guess`` is "linear-sigma" (solve once with
    sigma frozen at a data-scale field), "zero" (free dofs start at
    zero), or an explicit nodal vector.
    """

    max_picard_iter: int = 200
    picard_tol: float = 1e-8
    damping: float | None = None
    linear_tol: float = 1e-10
    max_linear_iter: int | None = None
    initial_guess: object = "linear-sigma"

    def __post_init__(self):
        if self.picard_tol <= 0 or self.linear_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_picard_iter < 1:
            raise ValueError("max_picard_iter must be at least 1")
        if self.damping is not None and not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if isinstance(self.initial_guess, str):
            if self.initial_guess not in ("zero", "linear-sigma"):
                raise ValueError("initial_guess must be 'zero', 'linear-sigma'"
                                 " or a nodal array")


def _boundary_pair(f):
    if isinstance(f, dict):
        nodes = np.array(sorted(f), dtype=np.int64)
        values = np.array([f[int(n)] for n in nodes], dtype=float)
    else:
        nodes, values = f
        nodes = np.asarray(nodes, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        order = np.argsort(nodes)
        nodes, values = nodes[order], values[order]
    if not np.all(np.isfinite(values)):
        raise ValueError("boundary values must be finite")
    return nodes, values


def _auto_damping(material_map, labels):
    for lab in labels:
        model = material_map.for_region(lab)
        if model.kind == "ej-power-law" and model.n >= 10:
            return 0.7
    return 1.0


def _sigma_for(mesh, material_map, labels, e_elements):
    """Per-element sigma on the given regions; placeholder 1 elsewhere."""
    out = np.ones(mesh.element_count)
    for lab in labels:
        mask = mesh.region_mask(lab)
        out[mask] = material_sigma(material_map.for_region(lab), e_elements[mask])
    return out


def _check_finite_field(e_mag, kept, context):
    bad = ~np.isfinite(e_mag[kept])
    if bad.any():
        el = kept[np.argmax(bad)]
        raise NumericalBreakdownError(
            f"{context}: non-finite field in element {el}", el
        )


def _monitor(u, bc_values, energies, context, damping):
    """Energy descent + maximum principle; files violations, returns dict."""
    monitors = {"context": context}
    energies = np.asarray(energies)
    if len(energies) >= 2:
        scale = np.abs(energies[:-1]) * ENERGY_DESCENT_RTOL + 1e-300
        rise = energies[1:] - energies[:-1]
        ok = bool(np.all(rise <= scale))
        monitors["energy_descent_ok"] = ok
        monitors["energy_max_rise"] = float(np.max(rise))
        if not ok:
            record_violation(
                "energy-descent", context, float(np.max(rise)),
                f"damping={damping}",
            )
    else:
        monitors["energy_descent_ok"] = True
    finite = u[np.isfinite(u)]
    lo, hi = float(bc_values.min()), float(bc_values.max())
    span = max(hi - lo, abs(hi), abs(lo), 1e-300)
    under = lo - float(finite.min())
    over = float(finite.max()) - hi
    worst = max(under, over)
    monitors["max_principle_ok"] = worst <= MAX_PRINCIPLE_RTOL * span
    monitors["max_principle_excess"] = max(worst, 0.0)
    if not monitors["max_principle_ok"]:
        record_violation("max-principle", context, worst, f"span={span}")
    return monitors


def solve_nonlinear(mesh, material_map, f, config=None, pec_regions=(),
                    excluded_regions=(), context="nonlinear"):
    """Quasilinear Dirichlet solve by damped fixed-point iteration.

    ``f`` is a dict {node: value} or a (nodes, values) pair. Regions in
    ``pec_regions`` are merged to floating constants, regions in
    ``excluded_regions`` are dropped from assembly; neither needs an
    entry in ``material_map``.
    """
    config = config or NonlinearSolveConfig()
    nodes, values = _boundary_pair(f)
    asm = fem.Assembler(mesh, nodes, pec_regions, excluded_regions)
    active = sorted(
        set(np.unique(mesh.element_region))
        - set(pec_regions) - set(excluded_regions)
    )
    for lab in active:
        material_map.for_region(lab)  # fail early on a missing material
    skip = tuple(pec_regions) + tuple(excluded_regions)
    damping = config.damping
    if damping is None:
        damping = _auto_damping(material_map, active)
    kept = asm.kept

    def energy_of(u):
        return fem.dirichlet_energy(mesh, material_map, u, skip_regions=skip)

    span = float(values.max() - values.min())
    if span == 0.0:
        # constant data: the constant field is the exact minimizer
        parent, index, fixed_value = asm.dof_map_template
        fv = np.array(fixed_value)
        fv[parent[nodes]] = values
        dof_map = fem.DofMap(parent, index, fv, asm.n_free)
        u = dof_map.expand(np.full(asm.n_free, values[0]))
        monitors = _monitor(u, values, [0.0], context, damping)
        return fem.FieldSolution(
            nodal_potential=u,
            element_gradient=fem.element_gradients(mesh, u),
            energy=0.0,
            iterations=0,
            residuals=np.empty(0),
            monitors=monitors,
        )

    # initial iterate
    if isinstance(config.initial_guess, str):
        diam = float(np.max(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))
        e_char = span / max(diam, 1e-300)
        sig0 = _sigma_for(mesh, material_map, active,
                          np.full(mesh.element_count, e_char))
        system = asm.assemble(sig0, values)
        if config.initial_guess == "zero":
            x = np.zeros(asm.n_free)
        else:
            res = fem.solve_spd(system, tol=config.linear_tol,
                                max_iter=config.max_linear_iter)
            x = res.x
        u = system.dof_map.expand(x)
    else:
        u = np.asarray(config.initial_guess, dtype=float)
        if u.shape != (mesh.node_count,):
            raise ValueError("provided initial guess must be a nodal vector")
        system = asm.assemble(
            _sigma_for(mesh, material_map, active,
                       np.hypot(*fem.element_gradients(mesh, u).T)),
            values,
        )
        # project the guess onto this bc: free dofs only
        idx = system.dof_map.index[system.dof_map.parent]
        x = np.zeros(asm.n_free)
        x[idx[idx >= 0]] = u[idx >= 0]
        u = system.dof_map.expand(x)

    energies = [energy_of(u)]
    changes = []
    last = None
    converged = False
    for _ in range(config.max_picard_iter):
        grads = fem.element_gradients(mesh, u)
        e_mag = np.hypot(grads[:, 0], grads[:, 1])
        _check_finite_field(e_mag, kept, context)
        sig = _sigma_for(mesh, material_map, active, e_mag)
        system = asm.assemble(sig, values)
        last = fem.solve_spd(system, tol=config.linear_tol,
                             max_iter=config.max_linear_iter, x0=x)
        if not np.all(np.isfinite(last.x)):
            el = kept[0] if len(kept) else 0
            raise NumericalBreakdownError(
                f"{context}: linear solve produced a non-finite value", el
            )
        x_new = (1.0 - damping) * x + damping * last.x
        scale = max(float(np.max(np.abs(x_new))), 1e-300)
        change = float(np.max(np.abs(x_new - x))) / scale
        x = x_new
        u = system.dof_map.expand(x)
        energies.append(energy_of(u))
        changes.append(change)
        if change <= config.picard_tol:
            converged = True
            break
    if not converged:
        raise PicardNonConvergenceError(
            f"{context}: fixed-point change {changes[-1]:.3e} above tolerance "
            f"{config.picard_tol} after {config.max_picard_iter} iterations",
            energies, changes,
        )
    monitors = _monitor(u, values, energies, context, damping)
    return fem.FieldSolution(
        nodal_potential=u,
        element_gradient=fem.element_gradients(mesh, u),
        energy=energies[-1],
        iterations=len(changes),
        residuals=last.residuals if last is not None else np.empty(0),
        picard_energy=np.asarray(energies),
        picard_change=np.asarray(changes),
        monitors=monitors,
    )


def _as_map(mesh, matrix_material, hidden_regions):
    from .materials import MaterialMap, MaterialModel

    if isinstance(matrix_material, MaterialModel):
        labels = set(np.unique(mesh.element_region)) - set(hidden_regions)
        return MaterialMap({lab: matrix_material for lab in labels})
    return matrix_material


def solve_pec_limit(mesh, matrix_material, pec_regions, f, config=None):
    """Limiting solve with the inclusions replaced by perfect conductors.

    ``matrix_material`` is a single model applied to every non-merged
    region, or a full MaterialMap. A field-independent model (linear, or
    weighted power with exponent 2) converges in one step."""
    mmap = _as_map(mesh, matrix_material, pec_regions)
    return solve_nonlinear(mesh, mmap, f, config, pec_regions=pec_regions,
                           context="pec-limit")


def solve_pei_limit(mesh, matrix_material, pei_regions, f, config=None):
    """Limiting solve with the inclusions replaced by perfect insulators."""
    mmap = _as_map(mesh, matrix_material, pei_regions)
    return solve_nonlinear(mesh, mmap, f, config,
                           excluded_regions=pei_regions, context="pei-limit")


# ---------------------------------------------------------------------------
# boundary profiles and the sweep driver
# ---------------------------------------------------------------------------


def boundary_weights(mesh, nodes):
    """Lumped boundary-edge lengths for the given boundary nodes."""
    nodes = np.asarray(nodes, dtype=np.int64)
    in_set = np.zeros(mesh.node_count, dtype=bool)
    in_set[nodes] = True
    w = np.zeros(mesh.node_count)
    for i, j, _ in mesh.boundary_edges:
        if in_set[i] and in_set[j]:
            length = float(np.linalg.norm(mesh.nodes[j] - mesh.nodes[i]))
            w[i] += 0.5 * length
            w[j] += 0.5 * length
    return w[nodes]


def linear_profile(mesh, scale=1.0, axis=0):
    """Boundary data proportional to a coordinate on the outer boundary.

    Returns (nodes, values) with values = scale * coordinate, which has
    zero weighted boundary mean on a symmetric outer loop."""
    nodes = qmesh.outer_boundary_nodes(mesh)
    return nodes, scale * mesh.nodes[nodes, axis]


def log_grid(high, low, per_decade=9):
    """Strictly decreasing log-uniform grid from high down to low."""
    if not (high > low > 0):
        raise ValueError("need high > low > 0")
    decades = np.log10(high / low)
    count = max(2, int(round(decades * per_decade)) + 1)
    return np.geomspace(high, low, count)


@dataclass(frozen=True)
class LambdaSweep:
    """Per-scale results of a normalized-solution convergence study.

    ``e2``/``einf`` compare the normalized solution u/lam against the
    limiting solution in relative L2 (element-area weighted) and max
    norm, both restricted to the matrix region. ``g0`` is the full
    stored energy divided by lam**p0. Entries are NaN where ``status``
    records a failure."""

    lambdas: np.ndarray
    e2: np.ndarray
    einf: np.ndarray
    g0: np.ndarray
    picard_iters: np.ndarray
    status: tuple
    limit: fem.FieldSolution
    solutions: tuple
    f_nodes: np.ndarray
    f_values: np.ndarray
    p0: float

    CSV_HEADER = ("lambda", "e2", "einf", "G0_lambda", "picard_iters")

    def rows(self):
        for k in range(len(self.lambdas)):
            yield (float(self.lambdas[k]), float(self.e2[k]),
                   float(self.einf[k]), float(self.g0[k]),
                   int(self.picard_iters[k]))

    @property
    def all_ok(self):
        return all(s == "ok" for s in self.status)


def _check_zero_mean(mesh, nodes, values):
    w = boundary_weights(mesh, nodes)
    if w.sum() == 0:
        raise ValueError("boundary profile nodes carry no boundary edges")
    mean = float(w @ values) / float(w.sum())
    scale = max(float(np.max(np.abs(values))), 1e-300)
    if abs(mean) > 1e-8 * scale:
        raise ValueError(
            f"boundary profile must have zero weighted mean "
            f"(got relative mean {mean / scale:.2e})"
        )


def _warn_exponent_mismatch(material_map, inclusion_regions, p0, limit_kind):
    for lab in inclusion_regions:
        try:
            model = material_map.for_region(lab)
            ref = model.e0 if model.e0 > 0 else 1.0
            grid = np.geomspace(ref * 1e-5, ref * 1e5, 121)
            report = validate_assumptions(model, grid)
        except Exception:
            continue
        q0 = report.small_exponent
        if not np.isfinite(q0):
            continue
        tol = report.EXPONENT_TOL
        if limit_kind == "pec" and q0 >= p0 - tol:
            warnings.warn(
                f"region '{lab}' has small-field exponent {q0:.3f}, not below "
                f"p0={p0}; the perfect-conductor limit may not apply",
                stacklevel=3,
            )
        if limit_kind == "pei" and q0 <= p0 + tol:
            warnings.warn(
                f"region '{lab}' has small-field exponent {q0:.3f}, not above "
                f"p0={p0}; the perfect-insulator limit may not apply",
                stacklevel=3,
            )


def lambda_sweep(mesh, material_map, f, lambda_grid, limit_kind, p0=2.0,
                 config=None, inclusion_regions=None, limit_solution=None):
    """Solve at boundary data lam*f over a decreasing grid of lam and
    compare normalized solutions against the stated limiting problem.

    ``limit_kind`` is "pec" or "pei" and decides how the limiting
    solution is computed (unless one is passed in). Individual failures
    are recorded in ``status`` and do not abort the sweep."""
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if lambda_grid.ndim != 1 or len(lambda_grid) == 0:
        raise ValueError("lambda grid must be a non-empty 1-d array")
    if np.any(lambda_grid <= 0) or np.any(np.diff(lambda_grid) >= 0):
        raise ValueError("lambda grid must be positive and strictly decreasing")
    if limit_kind not in ("pec", "pei"):
        raise ValueError("limit_kind must be 'pec' or 'pei'")

    nodes, values = _boundary_pair(f)
    _check_zero_mean(mesh, nodes, values)

    if inclusion_regions is None:
        inclusion_regions = mesh.inclusion_regions()
    inclusion_regions = tuple(inclusion_regions)
    _warn_exponent_mismatch(material_map, inclusion_regions, p0, limit_kind)

    matrix_labels = sorted(
        set(np.unique(mesh.element_region)) - set(inclusion_regions)
    )
    matrix_map = _as_map(mesh, material_map, inclusion_regions)
    if limit_solution is None:
        if limit_kind == "pec":
            limit_solution = solve_pec_limit(
                mesh, matrix_map, inclusion_regions, (nodes, values), config
            )
        else:
            limit_solution = solve_pei_limit(
                mesh, matrix_map, inclusion_regions, (nodes, values), config
            )

    mat_el = np.isin(mesh.element_region, matrix_labels)
    area = qmesh.element_areas(mesh)[mat_el]
    mat_nodes = np.unique(mesh.elements[mat_el])
    v_lim = limit_solution.nodal_potential
    lim_el = v_lim[mesh.elements[mat_el]].mean(axis=1)
    lim_l2 = float(np.sqrt(np.sum(area * lim_el**2)))
    lim_max = float(np.max(np.abs(v_lim[mat_nodes])))

    base = config or NonlinearSolveConfig()
    n = len(lambda_grid)
    e2 = np.full(n, np.nan)
    einf = np.full(n, np.nan)
    g0 = np.full(n, np.nan)
    iters = np.zeros(n, dtype=int)
    status = []
    solutions = []
    prev = None
    prev_lam = None
    for k, lam in enumerate(lambda_grid):
        cfg = base
        if prev is not None:
            guess = prev.nodal_potential * (lam / prev_lam)
            cfg = replace(base, initial_guess=guess)
        try:
            sol = solve_nonlinear(
                mesh, material_map, (nodes, lam * values), cfg,
                context=f"sweep lambda={lam:.3e}",
            )
        except (PicardNonConvergenceError, NumericalBreakdownError,
                fem.NonConvergenceError) as err:
            status.append(f"error: {err}")
            solutions.append(None)
            continue
        v = sol.nodal_potential / lam
        v_el = v[mesh.elements[mat_el]].mean(axis=1)
        e2[k] = float(np.sqrt(np.sum(area * (v_el - lim_el) ** 2))) / lim_l2
        einf[k] = float(np.max(np.abs(v[mat_nodes] - v_lim[mat_nodes]))) / lim_max
        g0[k] = sol.energy / lam**p0
        iters[k] = sol.iterations
        status.append("ok")
        solutions.append(sol)
        prev, prev_lam = sol, lam
    return LambdaSweep(
        lambdas=lambda_grid, e2=e2, einf=einf, g0=g0, picard_iters=iters,
        status=tuple(status), limit=limit_solution, solutions=tuple(solutions),
        f_nodes=nodes, f_values=values, p0=float(p0),
    )
