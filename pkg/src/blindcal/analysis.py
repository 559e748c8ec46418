"""Quality metrics, sensitivities, probe-state search, sweeps and bootstrap error bars.

Every benchmark returns a :class:`Table` whose rows carry the seed that
reproduces them; tables write themselves as CSV (header row first) and JSON.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats

from .error_models import (
    NESTED_ERROR_LEVELS, NINE_PARAMETER_ERRORS, XI_ACTUAL, CalibrationVector, ErrorModelSpec,
    PhysicalParams, zeta_to_xi,
)
from .measurement_map import EXPECTATION, PROJECTIVE, DataVector, MeasurementMap, build_map
from .operators import eig_hermitian, pure_density, trace_distance
from .simulator import (
    NAMED_STATES, CircuitSpec, NoiseSpec, derive_seed, exact_channel_probabilities, inject_miscalibration,
    prepare_state, sample_counts, target_state,
)
from .solver import (
    TOMOGRAPHY_CONFIG, SolverConfig, blind_calibrate, calibrated_tomography, trace_one_project,
)

# Blind settings for simulation benchmarks: run to a stall rather than to the
# 1e-2 residual threshold, which finite-shot data at high shot counts crosses
# long before the estimate has converged.
BENCHMARK_CONFIG = SolverConfig(epsilon=1e-12, max_iters=1000, stall_tol=1e-10, restarts=2)

ILL_CONDITIONED = 1e8

# Nested model subsets for post-hoc model selection, largest first.
MODEL_SELECTION_SETS = {
    "set1": NINE_PARAMETER_ERRORS,
    "set2": ("dark_bright", "spillover", "crosstalk_symmetric", "crosstalk_asymmetric", "crosstalk_phase"),
    "set3": ("dark_bright", "spillover", "crosstalk_symmetric", "crosstalk_asymmetric"),
    "set4": ("dark_bright", "spillover"),
    "set5": ("dark_bright",),
}


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

@dataclass
class Table:
    """Rows of a benchmark, written as CSV and JSON."""

    name: str
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            cols.extend(k for k in row if k not in cols)
        return cols

    def column(self, key: str) -> np.ndarray:
        return np.array([row[key] for row in self.rows])

    def to_json(self) -> dict:
        return {"name": self.name, "meta": self.meta, "rows": self.rows}

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns)
            writer.writeheader()
            writer.writerows(self.rows)
        return path

    def write(self, out_dir, meta: dict | None = None) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if meta:
            self.meta = {**self.meta, **meta}
        csv_path = self.write_csv(out_dir / f"{self.name}.csv")
        json_path = out_dir / f"{self.name}.json"
        json_path.write_text(json.dumps(self.to_json(), indent=1, default=_json_default))
        return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def loglog_slope(x, y) -> float:
    """Least-squares slope of log10(y) against log10(x)."""
    return float(np.polyfit(np.log10(np.asarray(x, float)), np.log10(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _values(xi) -> np.ndarray:
    return xi.values if isinstance(xi, CalibrationVector) else np.asarray(xi, dtype=float)


def calibration_error(xi, tau) -> float:
    """Mean absolute deviation over the error coefficients (entry 0 excluded)."""
    a, b = _values(xi), _values(tau)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        return 0.0
    return float(np.mean(np.abs(a[1:] - b[1:])))


def normalized_calibration_error(xi, tau) -> float:
    """l1 deviation relative to the l1 size of the true errors; absolute when tau has no errors."""
    a, b = _values(xi), _values(tau)
    scale = float(np.sum(np.abs(b[1:])))
    dev = float(np.sum(np.abs(a[1:] - b[1:])))
    return dev / scale if scale > 0 else calibration_error(a, b)


def dominant_eigenvalue(rho: np.ndarray) -> float:
    return float(eig_hermitian(rho)[0][0])


@dataclass(frozen=True)
class CalibrationAssessment:
    name: str
    E: float
    td_target: float
    td_delta: float
    dominant_eigenvalue: float
    rho_hat: np.ndarray = field(repr=False, compare=False)

    def to_row(self) -> dict:
        return {"candidate": self.name, "E": self.E, "td_target": self.td_target,
                "td_delta": self.td_delta, "dominant_eigenvalue": self.dominant_eigenvalue}


STANDARD = "standard"


def assess(mmap: MeasurementMap, data, candidates: dict, target_psi, tau=None,
           config: SolverConfig = TOMOGRAPHY_CONFIG) -> dict[str, CalibrationAssessment]:
    """Calibrated tomography for each candidate calibration, scored against the target.

    ``candidates`` maps names (typically standard, direct, blind) to calibration
    vectors; a standard (ideal) candidate is added when missing. ``td_delta``
    is each candidate's TD to target minus the standard one.
    """
    cands = dict(candidates)
    cands.setdefault(STANDARD, CalibrationVector.ideal(mmap.spec))
    target = pure_density(np.asarray(target_psi))
    rhos = {name: calibrated_tomography(mmap, data, xi, config) for name, xi in cands.items()}
    tds = {name: trace_distance(rho, target) for name, rho in rhos.items()}
    out = {}
    for name, xi in cands.items():
        e = calibration_error(xi, tau) if tau is not None else float("nan")
        out[name] = CalibrationAssessment(name, e, tds[name], tds[name] - tds[STANDARD],
                                          dominant_eigenvalue(rhos[name]), rhos[name])
    return out


# ---------------------------------------------------------------------------
# sensitivities
# ---------------------------------------------------------------------------

def sensitivity_s1(mmap: MeasurementMap, xi, rho) -> float:
    """Norm of the data shift caused by the calibration relative to the ideal map."""
    ideal = CalibrationVector.ideal(mmap.spec)
    return float(np.linalg.norm(mmap.apply(xi, rho) - mmap.apply(ideal, rho)))


@dataclass(frozen=True)
class S2Result:
    value: float
    condition_number: float

    @property
    def ill_conditioned(self) -> bool:
        return self.condition_number > ILL_CONDITIONED


def sensitivity_s2(mmap: MeasurementMap, xi, rho, r: int = 1) -> S2Result:
    """Distance of the ideal-model linear inversion of shifted data from the rank-r states."""
    ideal = CalibrationVector.ideal(mmap.spec)
    a0 = mmap.state_matrix(ideal)
    cond = float(np.linalg.cond(a0))
    vec = np.linalg.pinv(a0) @ mmap.apply(xi, rho)
    dim = mmap.dim
    lin = vec.reshape(dim, dim).T
    lin = (lin + lin.conj().T) / 2
    proj = trace_one_project(lin, r)
    return S2Result(float(np.linalg.norm(lin - proj)), cond)


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

def restrict_zeta(spec: ErrorModelSpec, zeta: PhysicalParams) -> PhysicalParams:
    """The physical parameters the model can represent exactly; everything else is zeroed.

    Without a phase block the crosstalk is taken along its cosine component,
    and the symmetric model uses the mean of both sides.
    """
    errors = set(spec.errors)
    kw = dict(zeta.to_dict())
    if "over_rotation" not in errors:
        kw["xi_or"] = 0.0
    if "dark_bright" not in errors:
        kw["p0"] = kw["p1"] = 0.0
    if "spillover" not in errors:
        kw["p_left"] = kw["p_right"] = 0.0
    if "crosstalk_phase" not in errors:
        lc = zeta.xi_l * math.cos(zeta.phi_l)
        rc = zeta.xi_r * math.cos(zeta.phi_r)
        if "crosstalk_asymmetric" not in errors:
            lc = rc = (lc + rc) / 2 if "crosstalk_symmetric" in errors else 0.0
        kw.update(xi_l=lc, xi_r=rc, phi_l=0.0, phi_r=0.0)
    if "crosstalk_nnn" not in errors:
        kw.update(xi_nnl=0.0, xi_nnr=0.0, phi_nnl=0.0, phi_nnr=0.0)
    return PhysicalParams.from_dict(kw)


@dataclass(frozen=True)
class TrialResult:
    E: float
    td_target: float
    td_blind_state: float
    xi_hat: CalibrationVector
    converged: bool
    iterations: int


def blind_trial(mmap: MeasurementMap, data, target_psi, tau: CalibrationVector,
                config: SolverConfig = BENCHMARK_CONFIG, seed: int = 0,
                anticipated: CalibrationVector | None = None, tomography: bool = True,
                tomography_config: SolverConfig = TOMOGRAPHY_CONFIG) -> TrialResult:
    """Blind calibration scored by E and by the TD of the follow-up calibrated tomography."""
    res = blind_calibrate(mmap, data, config, anticipated_xi=anticipated, target_psi=target_psi, seed=seed)
    target = pure_density(np.asarray(target_psi))
    td_rank = trace_distance(res.rho_hat, target)
    if tomography:
        rho = calibrated_tomography(mmap, data, res.xi_hat, tomography_config)
        td = trace_distance(rho, target)
    else:
        td = td_rank
    return TrialResult(calibration_error(res.xi_hat, tau), td, td_rank, res.xi_hat,
                       res.converged, res.iterations)


def _simulated(circuit: CircuitSpec, zeta: PhysicalParams, noise: NoiseSpec | None):
    rho = prepare_state(circuit, noise)
    return rho, exact_channel_probabilities(zeta, rho)


@lru_cache(maxsize=32)
def _cached_map(spec: ErrorModelSpec, mode: str = PROJECTIVE) -> MeasurementMap:
    return build_map(spec, mode)


def map_jobs(func, tasks: list, jobs: int = 1) -> list:
    """Apply ``func`` to every task, in worker processes when jobs > 1; order is preserved."""
    if jobs <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


def _blind_task(task) -> TrialResult:
    spec, mode, probs, n, shots, seed, psi, tau, config, tomography = task
    data = sample_counts(probs, shots, seed=seed, n=n)
    return blind_trial(_cached_map(spec, mode), data, psi, tau, config, seed=seed, anticipated=tau,
                       tomography=tomography)


# ---------------------------------------------------------------------------
# benchmarks
# ---------------------------------------------------------------------------

def shot_scaling_benchmark(circuit: CircuitSpec = NAMED_STATES["GHZ"], zeta: PhysicalParams = XI_ACTUAL,
                           shot_grid=(100, 1000, 10_000, 100_000), trials: int = 10,
                           spec: ErrorModelSpec | None = None, config: SolverConfig = BENCHMARK_CONFIG,
                           seed: int = 0, noise: NoiseSpec | None = None, jobs: int = 1) -> tuple[Table, Table]:
    """Calibration error and TD to target against shots per basis.

    Returns (per-trial table, per-shot summary). The summary meta holds the
    log-log slopes of the mean E and mean TD.
    """
    shot_grid = [int(s) for s in shot_grid]
    if any(b <= a for a, b in zip(shot_grid, shot_grid[1:])):
        raise ValueError("shot grid must be strictly increasing")
    spec = spec or ErrorModelSpec(circuit.n)
    tau = zeta_to_xi(spec, zeta)
    psi = target_state(circuit)
    _, probs = _simulated(circuit, zeta, noise)
    keys = [(shots, t, derive_seed(seed, shots, t)) for shots in shot_grid for t in range(trials)]
    tasks = [(spec, PROJECTIVE, probs, circuit.n, shots, s, psi, tau, config, True) for shots, _, s in keys]
    results = map_jobs(_blind_task, tasks, jobs)
    trial_rows = [{"shots": shots, "trial": t, "seed": s, "E": r.E, "td_target": r.td_target,
                   "converged": r.converged, "iterations": r.iterations}
                  for (shots, t, s), r in zip(keys, results)]
    summary = []
    for shots in shot_grid:
        es = [r.E for (sh, _, _), r in zip(keys, results) if sh == shots]
        tds = [r.td_target for (sh, _, _), r in zip(keys, results) if sh == shots]
        ddof = 1 if trials > 1 else 0
        summary.append({"shots": shots, "trials": trials, "seed": seed,
                        "E_mean": float(np.mean(es)), "E_std": float(np.std(es, ddof=ddof)),
                        "td_mean": float(np.mean(tds)), "td_std": float(np.std(tds, ddof=ddof))})
    summ = Table("shot_scaling", summary)
    if len(shot_grid) > 1:
        summ.meta = {"E_slope": loglog_slope(shot_grid, summ.column("E_mean")),
                     "td_slope": loglog_slope(shot_grid, summ.column("td_mean"))}
    return Table("shot_scaling_trials", trial_rows), summ


def param_count_benchmark(circuit: CircuitSpec = NAMED_STATES["GHZ"], zeta: PhysicalParams = XI_ACTUAL,
                          shots: int = 1000, trials: int = 5, levels=NESTED_ERROR_LEVELS,
                          config: SolverConfig = BENCHMARK_CONFIG, seed: int = 0, jobs: int = 1) -> Table:
    """Calibration error as the model grows through the nested error levels.

    Each level's data carry only the errors that level models, so every fit
    is well specified and the trend isolates identifiability.
    """
    psi = target_state(circuit)
    rho = prepare_state(circuit)
    tasks, specs = [], []
    for li, errors in enumerate(levels):
        spec = ErrorModelSpec(circuit.n, tuple(errors))
        z = restrict_zeta(spec, zeta)
        probs = exact_channel_probabilities(z, rho)
        specs.append(spec)
        tasks += [(spec, PROJECTIVE, probs, circuit.n, shots, derive_seed(seed, li, t), psi,
                   zeta_to_xi(spec, z), config, False) for t in range(trials)]
    results = map_jobs(_blind_task, tasks, jobs)
    rows = []
    for li, (errors, spec) in enumerate(zip(levels, specs)):
        es = [r.E for r in results[li * trials:(li + 1) * trials]]
        rows.append({"level": li + 1, "k": spec.k, "errors": "+".join(errors), "shots": shots, "trials": trials,
                     "seed": seed, "E_mean": float(np.mean(es)), "E_std": float(np.std(es))})
    return Table("param_count", rows)


def projective_vs_expectation(circuit: CircuitSpec = NAMED_STATES["GHZ"], zeta: PhysicalParams = XI_ACTUAL,
                              shots: int = 1000, trials: int = 20, spec: ErrorModelSpec | None = None,
                              config: SolverConfig = BENCHMARK_CONFIG, seed: int = 0, jobs: int = 1) -> Table:
    """Paired trials: the same counts fitted with the projective and the expectation-value map.

    Meta carries the mean paired difference and a one-sided Wilcoxon p-value
    for the hypothesis that projective errors are smaller.
    """
    spec = spec or ErrorModelSpec(circuit.n)
    tau = zeta_to_xi(spec, zeta)
    psi = target_state(circuit)
    _, probs = _simulated(circuit, zeta, None)
    seeds = [derive_seed(seed, t) for t in range(trials)]
    tasks = [(spec, mode, probs, circuit.n, shots, s, psi, tau, config, False)
             for s in seeds for mode in (PROJECTIVE, EXPECTATION)]
    results = map_jobs(_blind_task, tasks, jobs)
    rows = [{"trial": t, "seed": s, "shots": shots, "E_projective": results[2 * t].E,
             "E_expectation": results[2 * t + 1].E} for t, s in enumerate(seeds)]
    table = Table("projective_vs_expectation", rows)
    diff = table.column("E_projective") - table.column("E_expectation")
    p = float(stats.wilcoxon(diff, alternative="less").pvalue) if np.any(diff != 0) else 1.0
    table.meta = {"mean_difference": float(diff.mean()), "wilcoxon_p_less": p,
                  "E_projective_mean": float(table.column("E_projective").mean()),
                  "E_expectation_mean": float(table.column("E_expectation").mean())}
    return table


def normalization_methods(circuit: CircuitSpec = NAMED_STATES["GHZ"], zeta: PhysicalParams = XI_ACTUAL,
                          shots: int = 1000, trials: int = 5, noise: float = 0.01,
                          spec: ErrorModelSpec | None = None, config: SolverConfig = BENCHMARK_CONFIG,
                          seed: int = 0) -> Table:
    """Blind calibration and calibrated tomography under each state-normalization method."""
    spec = spec or ErrorModelSpec(circuit.n)
    mmap = build_map(spec)
    tau = zeta_to_xi(spec, zeta)
    psi = target_state(circuit)
    target = pure_density(psi)
    _, probs = _simulated(circuit, zeta, NoiseSpec(noise))
    rows = []
    for t in range(trials):
        s = derive_seed(seed, t)
        data = sample_counts(probs, shots, seed=s, n=circuit.n)
        for method in ("none", "trace", "project"):
            cfg = replace(config, normalization=method)
            res = blind_calibrate(mmap, data, cfg, anticipated_xi=tau, target_psi=psi, seed=s)
            tomo_cfg = replace(TOMOGRAPHY_CONFIG, normalization=method)
            rho = calibrated_tomography(mmap, data, res.xi_hat, tomo_cfg)
            rows.append({"trial": t, "seed": s, "normalization": method,
                         "E": calibration_error(res.xi_hat, tau), "td_target": trace_distance(rho, target)})
    return Table("normalization_methods", rows)


def td_validity_sweep(circuit: CircuitSpec = NAMED_STATES["OS1"], zeta: PhysicalParams = XI_ACTUAL,
                      shots: int = 1000, trials: int = 5, noise: float = 0.01,
                      c_grid=tuple(np.arange(0, 2.01, 0.25)), spec: ErrorModelSpec | None = None,
                      seed: int = 0) -> Table:
    """TD of calibrated tomography along the line from ideal to actual calibration (and beyond).

    Reports both the TD to the target and to the noisy prepared state, averaged
    over trials; meta holds the c minimizing the mean TD to target.
    """
    spec = spec or ErrorModelSpec(circuit.n)
    mmap = build_map(spec)
    ideal = CalibrationVector.ideal(spec).values
    actual = zeta_to_xi(spec, zeta).values
    target = pure_density(target_state(circuit))
    prepared, probs = _simulated(circuit, zeta, NoiseSpec(noise))
    tds = np.zeros((len(c_grid), trials))
    tdp = np.zeros_like(tds)
    for t in range(trials):
        data = sample_counts(probs, shots, seed=derive_seed(seed, t), n=circuit.n)
        for ci, c in enumerate(c_grid):
            rho = calibrated_tomography(mmap, data, (1 - c) * ideal + c * actual)
            tds[ci, t] = trace_distance(rho, target)
            tdp[ci, t] = trace_distance(rho, prepared)
    rows = [{"c": float(c), "trials": trials, "seed": seed, "td_target_mean": float(tds[i].mean()),
             "td_target_std": float(tds[i].std()), "td_prepared_mean": float(tdp[i].mean()),
             "td_prepared_std": float(tdp[i].std())} for i, c in enumerate(c_grid)]
    table = Table("td_validity", rows)
    table.meta = {"argmin_c": float(c_grid[int(np.argmin(tds.mean(axis=1)))])}
    return table


def injection_recovery(circuit: CircuitSpec, grid=(0.0, 0.01, 0.025, 0.05), shots: int = 4000,
                       base: PhysicalParams | None = None, config: SolverConfig = BENCHMARK_CONFIG,
                       seed: int = 0) -> Table:
    """Blind recovery of injected over-rotation and symmetric crosstalk on a product state."""
    base = base or PhysicalParams()
    spec = ErrorModelSpec(circuit.n, ("over_rotation", "crosstalk_symmetric"))
    mmap = build_map(spec)
    psi = target_state(circuit)
    rho = prepare_state(circuit)
    rows = []
    for i, eo in enumerate(grid):
        for j, ec in enumerate(grid):
            s = derive_seed(seed, i, j)
            zeta = inject_miscalibration(base, eo, ec)
            data = sample_counts(exact_channel_probabilities(zeta, rho), shots, seed=s, n=circuit.n)
            res = blind_calibrate(mmap, data, config, target_psi=psi, seed=s)
            got = res.xi_hat.as_dict()
            rows.append({"injected_or": eo, "injected_ct": ec, "seed": s, "recovered_or": got["xi_or"],
                         "recovered_ct": got["xi_ct"], "error_or": got["xi_or"] - eo,
                         "error_ct": got["xi_ct"] - ec, "converged": res.converged})
    return Table("injection_recovery", rows)


def calibration_quality_ordering(circuit: CircuitSpec, levels=(0.0, 0.01, 0.025, 0.05), shots: int = 4000,
                                 base: PhysicalParams | None = None, B: int = 20,
                                 config: SolverConfig = BENCHMARK_CONFIG, seed: int = 0) -> Table:
    """TD to target of standard, matched and blind calibrated tomography under injected miscalibration.

    Each level injects the same over-rotation and symmetric crosstalk. Matched
    uses the true coefficients, blind the blind estimate; ``td_blind_boot_std``
    is the bootstrap std of the blind-tomography TD.
    """
    base = base or PhysicalParams()
    spec = ErrorModelSpec(circuit.n, ("over_rotation", "crosstalk_symmetric"))
    mmap = build_map(spec)
    psi = target_state(circuit)
    rho = prepare_state(circuit)
    rows = []
    for i, level in enumerate(levels):
        s = derive_seed(seed, i)
        zeta = inject_miscalibration(base, level, level)
        data = sample_counts(exact_channel_probabilities(zeta, rho), shots, seed=s, n=circuit.n)
        blind = blind_calibrate(mmap, data, config, target_psi=psi, seed=s).xi_hat
        a = assess(mmap, data, {"matched": zeta_to_xi(spec, zeta), "blind": blind}, psi)
        boot = bootstrap_error_bars(mmap, data, config, B=B, target_psi=psi, seed=s, reported=blind,
                                    track_td=True)
        std, matched, bl = a[STANDARD].td_target, a["matched"].td_target, a["blind"].td_target
        rows.append({"level": level, "seed": s, "td_standard": std, "td_matched": matched, "td_blind": bl,
                     "td_blind_boot_std": boot.td_std, "margin": std - max(matched, bl)})
    return Table("calibration_quality_ordering", rows)


# ---------------------------------------------------------------------------
# model selection
# ---------------------------------------------------------------------------

def model_selection_sweep(calibration: tuple[DataVector, np.ndarray], tests: dict,
                          sets: dict | None = None, zeta_true: PhysicalParams | None = None,
                          config: SolverConfig = BENCHMARK_CONFIG, seed: int = 0) -> Table:
    """Blind-calibrate each nested model on the calibration data, then assess each test state.

    ``calibration`` is (data, target_psi); ``tests`` maps names to the same
    pair. With ``zeta_true`` the calibration error against the model's
    representable truth is reported; otherwise E is NaN.
    """
    data, psi = calibration
    sets = sets or MODEL_SELECTION_SETS
    rows = []
    for name, errors in sets.items():
        spec = ErrorModelSpec(data.n, tuple(errors))
        mmap = build_map(spec)
        res = blind_calibrate(mmap, data, config, target_psi=psi, seed=seed)
        e = float("nan")
        if zeta_true is not None:
            e = calibration_error(res.xi_hat, zeta_to_xi(spec, restrict_zeta(spec, zeta_true)))
        row = {"set": name, "k": spec.k, "seed": seed, "E": e}
        deltas = []
        for tname, (tdata, tpsi) in tests.items():
            a = assess(mmap, tdata, {"blind": res.xi_hat}, tpsi)
            row[f"td_delta_{tname}"] = a["blind"].td_delta
            deltas.append(a["blind"].td_delta)
        row["td_delta_mean"] = float(np.mean(deltas)) if deltas else float("nan")
        rows.append(row)
    return Table("model_selection", rows)


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapReport:
    names: tuple[str, ...]
    reported: np.ndarray
    std: np.ndarray
    median_offset: np.ndarray
    samples: np.ndarray = field(repr=False)
    seed: int = 0
    td_samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def td_std(self) -> float:
        """Bootstrap std of the follow-up tomography's TD to target (NaN when not recorded)."""
        if self.td_samples is None:
            return float("nan")
        return float(np.std(self.td_samples, ddof=1))

    def rows(self) -> list[dict]:
        return [{"parameter": n, "reported": float(r), "std": float(s), "median_offset": float(o),
                 "seed": self.seed}
                for n, r, s, o in zip(self.names, self.reported, self.std, self.median_offset)]

    def table(self) -> Table:
        return Table("bootstrap", self.rows())


def bootstrap_error_bars(mmap: MeasurementMap, data: DataVector, config: SolverConfig = BENCHMARK_CONFIG,
                         B: int = 100, target_psi=None, seed: int = 0,
                         reported: CalibrationVector | None = None, track_td: bool = False) -> BootstrapReport:
    """Resample counts from the empirical frequencies and re-solve B times.

    Each resample is a multinomial draw per basis at the original shot count;
    solves start around the reported calibration. Exact-probability data
    (zero shots) resample to themselves. With ``track_td`` each resample also
    runs calibrated tomography with its own estimate and records the TD to
    ``target_psi``.
    """
    if track_td and target_psi is None:
        raise ValueError("track_td needs target_psi")
    if B < 2:
        raise ValueError("B must be >= 2")
    if reported is None:
        reported = blind_calibrate(mmap, data, config, target_psi=target_psi, seed=seed).xi_hat
    exact = bool(np.all(data.shots_per_basis == 0))
    draws, tds = [], []
    target = pure_density(np.asarray(target_psi)) if track_td else None
    for b in range(B):
        s = derive_seed(seed, b)
        if exact:
            sample = data
        else:
            rng = np.random.default_rng(s)
            counts = np.array([rng.multinomial(int(n), row / row.sum())
                               for n, row in zip(data.shots_per_basis, data.per_basis)])
            sample = DataVector.from_counts(data.n, counts)
        # one solver seed for every resample so the spread reflects the data only
        res = blind_calibrate(mmap, sample, config, anticipated_xi=reported, target_psi=target_psi, seed=seed)
        draws.append(res.xi_hat.values)
        if track_td:
            tds.append(trace_distance(calibrated_tomography(mmap, sample, res.xi_hat), target))
    draws = np.array(draws)
    return BootstrapReport(reported.names, reported.values, draws.std(axis=0, ddof=1),
                           np.abs(reported.values - np.median(draws, axis=0)), draws, seed,
                           np.array(tds) if track_td else None)


# ---------------------------------------------------------------------------
# probe-state optimization
# ---------------------------------------------------------------------------

_MAGNITUDES = ("xi_or", "p0", "p1", "p_left", "p_right", "xi_l", "xi_r")


@dataclass(frozen=True)
class ProbeOptimizationConfig:
    """Settings for the derivative-free probe-state search.

    ``budget`` counts objective evaluations; each evaluation runs one blind
    calibration per point of the zeta grid.
    """

    objective: str = "mean"
    shot_noise: bool = False
    shots: int = 1000
    normalize_error: bool = False
    budget: int = 20
    initial_step: float = 0.25
    min_step: float = 1 / 64
    grid_points: int = 5
    params: tuple[str, ...] | None = None
    zeta_ref: PhysicalParams = XI_ACTUAL
    solver: SolverConfig = SolverConfig(epsilon=1e-12, max_iters=300, stall_tol=1e-10, restarts=1)
    seed: int = 0

    def __post_init__(self):
        if self.objective not in ("mean", "max"):
            raise ValueError("objective must be 'mean' or 'max'")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


def zeta_grid(config: ProbeOptimizationConfig) -> list[PhysicalParams]:
    """One-at-a-time sweeps over [0, 2*reference] per magnitude, plus the joint reference point."""
    ref = config.zeta_ref
    names = config.params or tuple(p for p in _MAGNITUDES if getattr(ref, p) != 0)
    zero = PhysicalParams(phi_l=ref.phi_l, phi_r=ref.phi_r)
    points = {tuple(zero.to_dict().items()): zero}
    for name in names:
        top = 2 * getattr(ref, name)
        for v in np.linspace(0, top, config.grid_points):
            z = replace(zero, **{name: float(min(v, 1.0))})
            points.setdefault(tuple(z.to_dict().items()), z)
    points.setdefault(tuple(ref.to_dict().items()), ref)
    return list(points.values())


class ProbeObjective:
    """Aggregate blind-calibration error of a product state over the zeta grid."""

    def __init__(self, config: ProbeOptimizationConfig, spec: ErrorModelSpec):
        self.config = config
        self.spec = spec
        self.mmap = build_map(spec)
        self.grid = zeta_grid(config)
        self.taus = [zeta_to_xi(spec, restrict_zeta(spec, z)) for z in self.grid]
        self.evaluations = 0

    def __call__(self, angles) -> float:
        cfg = self.config
        circuit = CircuitSpec.product(*angles)
        psi = target_state(circuit)
        rho = pure_density(psi)
        errs = []
        for gi, (z, tau) in enumerate(zip(self.grid, self.taus)):
            probs = exact_channel_probabilities(z, rho)
            s = derive_seed(cfg.seed, gi)
            data = sample_counts(probs, cfg.shots if cfg.shot_noise else 0, seed=s, n=circuit.n)
            res = blind_calibrate(self.mmap, data, cfg.solver, target_psi=psi, seed=s)
            err = normalized_calibration_error if cfg.normalize_error else calibration_error
            errs.append(err(res.xi_hat, tau))
        self.evaluations += 1
        return float(np.mean(errs) if cfg.objective == "mean" else np.max(errs))


def optimize_probe_states(config: ProbeOptimizationConfig, spec: ErrorModelSpec,
                          seed_state: CircuitSpec | None = None, top: int = 5) -> list[tuple[CircuitSpec, float]]:
    """Coordinate pattern search over per-qubit (theta, phi), best states first.

    Each cycle tries +/- step on every angle and keeps improvements; the step
    halves after a cycle without one. Stops when the evaluation budget is
    spent or the step falls below ``min_step``.
    """
    seed_state = seed_state or NAMED_STATES["OS1"]
    if seed_state.kind != "product":
        raise ValueError("probe search runs over product states")
    if config.budget == 0:
        return [(seed_state, float("nan"))]
    objective = ProbeObjective(config, spec)
    x = np.array([a for pair in seed_state.angles for a in pair], dtype=float)
    seen = {tuple(np.round(x, 12)): objective(x)}
    best = seen[tuple(np.round(x, 12))]
    step = config.initial_step
    while objective.evaluations < config.budget and step >= config.min_step:
        improved = False
        for i in range(x.size):
            for sign in (1.0, -1.0):
                if objective.evaluations >= config.budget:
                    break
                trial = x.copy()
                trial[i] += sign * step
                # theta in [0, 1], phi periodic in [0, 2)
                trial[i] = np.clip(trial[i], 0.0, 1.0) if i % 2 == 0 else trial[i] % 2.0
                key = tuple(np.round(trial, 12))
                if key in seen:
                    continue
                val = objective(trial)
                seen[key] = val
                if val < best:
                    x, best, improved = trial, val, True
                    break
        if not improved:
            step /= 2
    ranked = sorted(seen.items(), key=lambda kv: kv[1])[:top]
    return [(CircuitSpec.product(*k), v) for k, v in ranked]


def sensitivity_correlation(spec: ErrorModelSpec, states: list[CircuitSpec], zeta: PhysicalParams = XI_ACTUAL,
                            shots: int = 1000, config: SolverConfig = BENCHMARK_CONFIG, seed: int = 0) -> Table:
    """s1, s2 and blind-calibration error per state, with Spearman correlations in meta."""
    mmap = build_map(spec)
    xi = zeta_to_xi(spec, zeta)
    rows = []
    for si, c in enumerate(states):
        psi = target_state(c)
        rho = pure_density(psi)
        s = derive_seed(seed, si)
        data = sample_counts(exact_channel_probabilities(zeta, rho), shots, seed=s, n=c.n)
        e = blind_trial(mmap, data, psi, xi, config, seed=s, anticipated=xi, tomography=False).E
        s2 = sensitivity_s2(mmap, xi, rho)
        rows.append({"state": si, "angles": json.dumps(c.angles), "seed": s, "s1": sensitivity_s1(mmap, xi, rho),
                     "s2": s2.value, "condition_number": s2.condition_number, "E": e})
    table = Table("sensitivity", rows)
    if len(rows) > 2:
        table.meta = {"spearman_s1": float(stats.spearmanr(table.column("s1"), table.column("E"))[0]),
                      "spearman_s2": float(stats.spearmanr(table.column("s2"), table.column("E"))[0])}
    return table

