"""Batch experiment studies over configured models.

Every study produces a :class:`StudyResult` holding data records, pass/fail
checks and a summary.  Records are emitted as CSV with complex cells in
``re,im`` form and rows in a deterministic parameter order; wall-clock
timings go to a separate file so the main outputs stay byte-reproducible
for identical configs and seeds.

Tolerance ladder: 1e-12 for algebraic identities, 1e-10 for identities
mediated by matrix exponentials, fitted convergence orders 1.0 +- 0.15.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from spinqds import dilation, lindblad
from spinqds.config import ModelSpec, build_shell_family
from spinqds.lattice import (
    DEFAULT_DIM_CAP,
    LocalOperator,
    ShellFamily,
    embed,
    embed_block,
    embed_into,
    make_shell_family,
    make_window,
    matrix_units,
    pauli_matrices,
    shell_sites,
)

ALGEBRAIC_TOL = 1e-12
EXPONENTIAL_TOL = 1e-10
ORDER_TARGET = 1.0
ORDER_BAND = 0.15
EXACT_FLOOR = 1e-12
CONTROL_FLOOR = 1e-6

ROLE_CHECK = "check"
ROLE_CONTROL = "negative_control"


@dataclass
class StudyResult:
    """Records, checks and summary of one study run."""

    study: str
    params: dict
    columns: list[str]
    records: list[dict] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    timings: list[dict] = field(default_factory=list)

    def add_record(self, **kwargs) -> None:
        row = dict(self.params)
        row.update(kwargs)
        self.records.append(row)

    def add_check(self, name: str, value: float, threshold: str, passed: bool,
                  role: str = ROLE_CHECK) -> None:
        self.checks.append({"study": self.study, "check": name, "value": value,
                            "threshold": threshold, "role": role, "passed": passed})

    def add_timing(self, name: str, seconds: float) -> None:
        self.timings.append({"study": self.study, "name": name, "seconds": seconds})

    def passed(self) -> bool:
        """True iff every non-negative-control check passed."""
        return all(c["passed"] for c in self.checks if c["role"] == ROLE_CHECK)


# ---------------------------------------------------------------------------
# Random model helpers (seeded; used by studies and the test suite)


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random Hermitian matrix of unit spectral norm."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (a + a.conj().T)
    return h / np.linalg.norm(h, 2)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_shell_family(rng: np.random.Generator, max_shell: int, *,
                        local_dim: int = 2, dim: int = 1, scale: float = 1.0,
                        include_origin: bool = True,
                        cap: int | None = DEFAULT_DIM_CAP) -> ShellFamily:
    """Random weights on every shell level through ``max_shell``.

    Each weight is a dense random block over its full shell, rescaled to
    the given spectral norm.
    """
    shells = []
    levels = range(0 if include_origin else 1, max_shell + 1)
    for level in levels:
        sites = shell_sites(level, dim)
        side = local_dim ** len(sites)
        block = rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))
        block *= scale / np.linalg.norm(block, 2)
        window = make_window(level, dim, local_dim, cap)
        shells.append((level, embed_block(block, sites, window, local_dim)))
    return make_shell_family(shells, local_dim=local_dim, dim=dim)


def corrupted_family(family: ShellFamily, cap: int | None = DEFAULT_DIM_CAP) -> ShellFamily:
    """Negative control: the top shell weight leaks into the window interior.

    The top-level weight is replaced by a flip operator at an interior
    site, bypassing support validation; restriction identities must then
    fail.
    """
    level = family.max_shell
    if level < 1:
        raise ValueError("need a family with at least one shell of level >= 1")
    window = make_window(level, family.dim, family.local_dim, cap)
    _, sx, _, _ = pauli_matrices()
    inner_site = (0,) * family.dim
    bad = embed({inner_site: sx}, window, family.local_dim)
    shells = [(k, w) for k, w in family.shells if k != level] + [(level, bad)]
    return ShellFamily(local_dim=family.local_dim, dim=family.dim,
                       shells=tuple(sorted(shells, key=lambda kv: kv[0])))


# ---------------------------------------------------------------------------
# Studies


def _fit_orders(errors: np.ndarray, hs: np.ndarray) -> tuple[float, float, float]:
    """Mean and (min, max) band of consecutive-pair convergence orders."""
    pairs = []
    for i in range(errors.shape[0]):
        for k in range(len(hs) - 1):
            pairs.append(np.log(errors[i, k] / errors[i, k + 1])
                         / np.log(hs[k] / hs[k + 1]))
    pairs = np.asarray(pairs)
    return float(pairs.mean()), float(pairs.min()), float(pairs.max())


def _base_params(spec: ModelSpec, seed: int, cap: int | None) -> dict:
    return {
        "study": spec.study.kind,
        "flavor": spec.flavor,
        "local_dim": spec.local_dim,
        "lattice_dim": spec.lattice_dim,
        "max_shell": max(s.level for s in spec.shells),
        "seed": seed,
        "cap": -1 if cap is None else cap,
    }


_CONVERGENCE_COLUMNS = ["study", "flavor", "local_dim", "lattice_dim", "max_shell",
                        "seed", "cap", "t_final", "steps", "h", "observable",
                        "error", "unitarity_defect", "role"]


def run_convergence_study(spec: ModelSpec, *, seed: int = 0,
                          cap: int | None = DEFAULT_DIM_CAP) -> StudyResult:
    """Error of the discretized vacuum flow against the exact semigroup.

    For each step count the flow of every seeded random observable is
    compared with the generator exponential at ``t_final``; the fitted
    order of the h-dependence should be first order unless the model is
    exactly degenerate (zero generator), which is reported as exact.
    """
    study = spec.study
    family = build_shell_family(spec, cap)
    level = family.max_shell
    result = StudyResult(spec.study.kind, _base_params(spec, seed, cap),
                         _CONVERGENCE_COLUMNS)
    rng = np.random.default_rng(seed)
    t_final = study.t_final

    if spec.flavor == "gns_form":
        coupling = lindblad.shell_commutator_op(family, level, cap)
        generator = lindblad.lindblad_form_superop(family, level, cap)
        sys_dim = coupling.side
    else:
        generator = lindblad.remark_lindblad_superop(family, level, cap)
        window = generator.window
        sys_dim = generator.operand_side
    observables = [random_hermitian(rng, sys_dim) for _ in range(study.observables)]
    exact_map = lindblad.semigroup(generator, t_final)
    targets = [exact_map.apply(x) for x in observables]

    errors = np.zeros((len(observables), len(study.step_counts)))
    hs = np.array([t_final / k for k in study.step_counts])
    for col, steps_count in enumerate(study.step_counts):
        tick = time.perf_counter()
        if spec.flavor == "gns_form":
            grid = dilation.ToyFockGrid(t_final, steps_count, 1)
            steps = dilation.build_exact_steps(coupling, grid)
            defect = steps.unitarity_defect()
            flows = [dilation.vacuum_expectation_flow(steps, x) for x in observables]
        else:
            grid = dilation.ToyFockGrid(t_final, steps_count,
                                        len([1 for k, _ in family.shells if k <= level]))
            defect = 0.0
            flows = []
            for x in observables:
                op = LocalOperator(window, spec.local_dim, x)
                flows.append(dilation.evans_hudson_flow(
                    family, level, op, grid, cap=cap).matrix)
        for row, (flow, target) in enumerate(zip(flows, targets)):
            err = float(np.linalg.norm(flow - target, 2))
            errors[row, col] = err
            result.add_record(t_final=t_final, steps=steps_count, h=hs[col],
                              observable=row, error=err, unitarity_defect=defect,
                              role=ROLE_CHECK)
        result.add_timing(f"steps={steps_count}", time.perf_counter() - tick)

    if np.all(errors <= EXACT_FLOOR):
        result.summary = {"exact": True, "fitted_order": None}
        result.add_check("convergence_exact", float(errors.max()),
                         f"<= {EXACT_FLOOR}", True)
    else:
        order, low, high = _fit_orders(errors, hs)
        decreasing = bool(np.all(np.diff(errors, axis=1) < 0))
        ok = decreasing and abs(order - ORDER_TARGET) <= ORDER_BAND
        result.summary = {"exact": False, "fitted_order": order,
                          "order_band": (low, high), "decreasing": decreasing}
        result.add_check("convergence_order", order,
                         f"{ORDER_TARGET} +- {ORDER_BAND}", ok)
    return result


_COMPATIBILITY_COLUMNS = ["study", "flavor", "local_dim", "lattice_dim", "max_shell",
                          "seed", "cap", "level_low", "level_high", "steps",
                          "object", "mismatch", "role"]


def _compatibility_mismatch(family: ShellFamily, low: int, high: int,
                            steps_count: int, t_final: float,
                            cap: int | None) -> dict[str, float]:
    """Mismatch of level-``high`` evolutions with embedded level-``low`` ones."""
    c_low = lindblad.shell_commutator_op(family, low, cap)
    c_high = lindblad.shell_commutator_op(family, high, cap)
    win_low = c_low.window
    win_high = c_high.window
    local_dim = family.local_dim

    units = matrix_units(win_low, local_dim)
    basis_low = np.stack([lindblad.vec(u) for u in units], axis=1)
    embedded = np.stack(
        [lindblad.vec(embed_into(LocalOperator(win_low, local_dim, u), win_high).matrix)
         for u in units], axis=1)

    def embed_columns(cols: np.ndarray) -> np.ndarray:
        out = np.empty((c_high.side, cols.shape[1]), dtype=np.complex128)
        for idx in range(cols.shape[1]):
            op = LocalOperator(win_low, local_dim, lindblad.unvec(cols[:, idx]))
            out[:, idx] = lindblad.vec(embed_into(op, win_high).matrix)
        return out

    grid = dilation.ToyFockGrid(t_final, steps_count, 1)
    seq_low = dilation.build_exact_steps(c_low, grid)
    seq_high = dilation.build_exact_steps(c_high, grid)

    v_low = seq_low.step_blocks(0)
    v_high = seq_high.step_blocks(0)
    block_mismatch = 0.0
    for a in range(2):
        for b in range(2):
            lhs = v_high[a, b] @ embedded
            rhs = embed_columns(v_low[a, b] @ basis_low)
            block_mismatch = max(block_mismatch, float(np.max(np.abs(lhs - rhs))))

    chain_low = dilation.apply_vacuum_chain(seq_low, basis_low)
    chain_high = dilation.apply_vacuum_chain(seq_high, embedded)
    vacuum_mismatch = float(np.max(np.abs(chain_high - embed_columns(chain_low))))

    ones = dilation.exp_vector(1.0, grid)
    t_low = dilation.transfer_apply(seq_low, ones, ones, basis_low)
    t_high = dilation.transfer_apply(seq_high, ones, ones, embedded)
    coherent_mismatch = float(np.max(np.abs(t_high - embed_columns(t_low))))

    return {"step_blocks": block_mismatch, "vacuum_chain": vacuum_mismatch,
            "coherent_chain": coherent_mismatch}


def run_compatibility_study(spec: ModelSpec, *, seed: int = 0,
                            cap: int | None = DEFAULT_DIM_CAP) -> StudyResult:
    """Tower compatibility of step evolutions across window levels.

    Checks, for every configured level pair and step count, that level-n
    single-step blocks, vacuum chains, and constant-amplitude transfer
    chains agree with the embedded level-m ones on all embedded basis
    elements.  With ``negative_control = true`` the corrupted family (top
    shell leaking into the interior) must exceed the threshold.
    """
    study = spec.study
    family = build_shell_family(spec, cap)
    result = StudyResult(study.kind, _base_params(spec, seed, cap),
                         _COMPATIBILITY_COLUMNS)
    pairs = [(study.levels[i], study.levels[j])
             for i in range(len(study.levels)) for j in range(len(study.levels))
             if study.levels[i] < study.levels[j]]
    for low, high in pairs:
        for steps_count in study.step_counts:
            tick = time.perf_counter()
            values = _compatibility_mismatch(family, low, high, steps_count,
                                             study.t_final, cap)
            result.add_timing(f"levels=({low},{high}) steps={steps_count}",
                              time.perf_counter() - tick)
            for name, value in sorted(values.items()):
                result.add_record(level_low=low, level_high=high, steps=steps_count,
                                  object=name, mismatch=value, role=ROLE_CHECK)
            worst = max(values.values())
            result.add_check(f"compatibility[{low},{high}]@K={steps_count}", worst,
                             f"<= {EXPONENTIAL_TOL}", worst <= EXPONENTIAL_TOL)
    if study.negative_control:
        bad = corrupted_family(family, cap)
        low, high = pairs[0]
        steps_count = study.step_counts[0]
        values = _compatibility_mismatch(bad, low, high, steps_count,
                                         study.t_final, cap)
        worst = max(values.values())
        for name, value in sorted(values.items()):
            result.add_record(level_low=low, level_high=high, steps=steps_count,
                              object=f"corrupted_{name}", mismatch=value,
                              role=ROLE_CONTROL)
        result.add_check("corrupted_shell_mismatch", worst, f"> {CONTROL_FLOOR}",
                         worst > CONTROL_FLOOR, role=ROLE_CONTROL)
    result.summary = {"pairs": pairs}
    return result


_CP_COLUMNS = ["study", "flavor", "local_dim", "lattice_dim", "max_shell", "seed",
               "cap", "t", "min_choi_eigenvalue", "identity_defect",
               "hermiticity_defect", "role"]


def run_cp_sweep(spec: ModelSpec, *, seed: int = 0,
                 cap: int | None = DEFAULT_DIM_CAP) -> StudyResult:
    """Conservativity and complete positivity of the semigroup over a t-grid."""
    study = spec.study
    family = build_shell_family(spec, cap)
    level = family.max_shell
    if spec.flavor == "gns_form":
        generator = lindblad.lindblad_form_superop(family, level, cap)
    else:
        generator = lindblad.remark_lindblad_superop(family, level, cap)
    result = StudyResult(study.kind, _base_params(spec, seed, cap), _CP_COLUMNS)
    for t in study.times:
        tick = time.perf_counter()
        report = lindblad.cp_certify(lindblad.semigroup(generator, t))
        result.add_timing(f"t={t}", time.perf_counter() - tick)
        result.add_record(t=t, min_choi_eigenvalue=report.min_choi_eigenvalue,
                          identity_defect=report.identity_defect,
                          hermiticity_defect=report.hermiticity_defect,
                          role=ROLE_CHECK)
        ok = (report.is_cp(EXPONENTIAL_TOL)
              and report.is_conservative(EXPONENTIAL_TOL)
              and report.hermiticity_defect <= EXPONENTIAL_TOL)
        result.add_check(f"cp_conservative@t={t}",
                         min(report.min_choi_eigenvalue, 0.0),
                         f">= -{EXPONENTIAL_TOL}", ok)
    result.summary = {"shell_norms": family.shell_norms()}
    return result


_DUAL_COLUMNS = ["study", "flavor", "local_dim", "lattice_dim", "max_shell", "seed",
                 "cap", "steps", "name", "defect", "role"]


def run_dual_check(spec: ModelSpec, *, seed: int = 0,
                   cap: int | None = DEFAULT_DIM_CAP) -> StudyResult:
    """Reversed-adjoint sequence against the negated-coupling sequence."""
    study = spec.study
    family = build_shell_family(spec, cap)
    level = family.max_shell
    coupling = lindblad.shell_commutator_op(family, level, cap)
    result = StudyResult(study.kind, _base_params(spec, seed, cap), _DUAL_COLUMNS)
    steps_count = study.step_counts[0]
    grid = dilation.ToyFockGrid(study.t_final, steps_count, 1)
    steps = dilation.build_exact_steps(coupling, grid)
    dual = dilation.dual_steps(steps)
    negated = dilation.build_exact_steps(-coupling.matrix, grid)
    slot_defect = max(
        float(np.max(np.abs(du - nu)))
        for du, nu in zip(dual.unitaries, negated.unitaries))
    double = dilation.dual_steps(dual)
    involution_defect = max(
        float(np.max(np.abs(dd - u)))
        for dd, u in zip(double.unitaries, steps.unitaries))
    result.add_record(steps=steps_count, name="dual_vs_negated", defect=slot_defect,
                      role=ROLE_CHECK)
    result.add_record(steps=steps_count, name="dual_involution",
                      defect=involution_defect, role=ROLE_CHECK)
    result.add_check("dual_vs_negated", slot_defect, f"<= {ALGEBRAIC_TOL}",
                     slot_defect <= ALGEBRAIC_TOL)
    result.add_check("dual_involution", involution_defect, f"<= {ALGEBRAIC_TOL}",
                     involution_defect <= ALGEBRAIC_TOL)
    return result


_ITO_COLUMNS = ["study", "flavor", "local_dim", "lattice_dim", "max_shell", "seed",
                "cap", "name", "defect", "role"]


def run_ito_check(spec: ModelSpec, *, seed: int = 0,
                  cap: int | None = DEFAULT_DIM_CAP) -> StudyResult:
    """Algebraic unitarity conditions of the model's coefficient table."""
    family = build_shell_family(spec, cap)
    level = family.max_shell
    coupling = lindblad.shell_commutator_op(family, level, cap)
    coeffs = dilation.assemble_coefficients(
        np.zeros((coupling.side, coupling.side)), [coupling.matrix])
    report = dilation.check_ito_unitarity(coeffs)
    result = StudyResult(spec.study.kind, _base_params(spec, seed, cap), _ITO_COLUMNS)
    for name, value in [("markov_defect", report.markov_defect),
                        ("theta_identity_defect", report.theta_identity_defect),
                        ("scattering_defect", report.scattering_defect)]:
        result.add_record(name=name, defect=value, role=ROLE_CHECK)
        result.add_check(name, value, f"<= {EXPONENTIAL_TOL}",
                         value <= EXPONENTIAL_TOL)
    bad_blocks = coeffs.blocks.copy()
    bad_blocks[0, 0] = 2.0 * coeffs.blocks[0, 0]  # drops the 1/2 on the jump sum
    corrupted = replace(coeffs, blocks=bad_blocks)
    bad_report = dilation.check_ito_unitarity(corrupted)
    result.add_record(name="corrupted_markov_defect",
                      defect=bad_report.markov_defect, role=ROLE_CONTROL)
    result.add_check("corrupted_markov_defect", bad_report.markov_defect,
                     f"> {CONTROL_FLOOR}", bad_report.markov_defect > CONTROL_FLOOR,
                     role=ROLE_CONTROL)
    result.summary = {"corrupted_expected": 0.5 * float(np.linalg.norm(
        sum(op.conj().T @ op for op in coeffs.jump_ops), 2))}
    return result


STUDY_RUNNERS = {
    "convergence": run_convergence_study,
    "compatibility": run_compatibility_study,
    "cp_sweep": run_cp_sweep,
    "dual_check": run_dual_check,
    "ito_check": run_ito_check,
}


def run_study(spec: ModelSpec, *, seed: int = 0,
              cap: int | None = DEFAULT_DIM_CAP) -> StudyResult:
    return STUDY_RUNNERS[spec.study.kind](spec, seed=seed, cap=cap)


# ---------------------------------------------------------------------------
# CSV emission


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (complex, np.complexfloating)):
        return f"{float(value.real)!r},{float(value.imag)!r}"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _parse_cell(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    if "," in text:
        re_part, im_part = text.split(",", 1)
        return complex(float(re_part), float(im_part))
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    return text


def emit_csv(result: StudyResult, path) -> Path:
    """Write the data records: header row, deterministic row order."""
    path = Path(path)
    rows = sorted(result.records,
                  key=lambda r: tuple(_format_cell(r.get(c, "")) for c in result.columns))
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(result.columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c, "")) for c in result.columns])
    return path


def emit_checks_csv(result: StudyResult, path) -> Path:
    path = Path(path)
    columns = ["study", "check", "value", "threshold", "role", "passed"]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in result.checks:
            writer.writerow([_format_cell(row[c]) for c in columns])
    return path


def emit_timings_csv(result: StudyResult, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["study", "name", "seconds"])
        for row in result.timings:
            writer.writerow([row["study"], row["name"], repr(row["seconds"])])
    return path


def emit_plot_data(result: StudyResult, outdir) -> list[Path]:
    """Two-column CSV per curve (convergence studies: h vs error)."""
    outdir = Path(outdir)
    paths = []
    if result.study != "convergence":
        return paths
    by_obs: dict[int, list[tuple[float, float]]] = {}
    for row in result.records:
        by_obs.setdefault(row["observable"], []).append((row["h"], row["error"]))
    for obs, points in sorted(by_obs.items()):
        path = outdir / f"curve_observable{obs}.csv"
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["h", "error"])
            for h, err in sorted(points):
                writer.writerow([repr(h), repr(err)])
        paths.append(path)
    return paths


def emit_superoperator_csv(matrix: np.ndarray, path) -> Path:
    """Row-major matrix dump with ``re,im`` cells."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        for row in np.asarray(matrix):
            writer.writerow([f"{float(v.real)!r},{float(v.imag)!r}" for v in row])
    return path


def read_csv(path) -> list[dict]:
    """Parse an emitted CSV back into typed records."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return [{k: _parse_cell(v) for k, v in zip(header, row)} for row in reader]


def generator_matrix(spec: ModelSpec, cap: int | None = DEFAULT_DIM_CAP) -> np.ndarray:
    """The model's generator superoperator matrix (flavor-dependent)."""
    family = build_shell_family(spec, cap)
    level = family.max_shell
    if spec.flavor == "gns_form":
        return lindblad.lindblad_form_superop(family, level, cap).matrix
    return lindblad.remark_lindblad_superop(family, level, cap).matrix
