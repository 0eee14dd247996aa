"""Command-line harness: ``mqbsim run|validate|map|resources``.

A run is driven by one YAML config (paths inside it resolve relative to the
config file) plus ``--override key.sub=value`` edits. Failures exit with

    2  unreadable or invalid input
    3  numerical failure
    4  infeasible mapping

and print one line ``mqbsim-error code=<n> kind=<kind> reason=<text>`` to stderr.
"""

from __future__ import annotations

import copy
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .closed import (
    TrotterError,
    compare_schemes,
    mqb_trotter_plan,
    propagate_exact,
    trotter_error_scan,
)
from .io import trajectory_table, write_csv, write_snapshots
from .mapping import (
    InfeasibleError,
    MappingError,
    laser_drive_requirements,
    load_hardware,
    map_to_mqb,
    resource_estimate,
    scale_factor_bounds,
    simulator_hamiltonian,
)
from .models import (
    ModelError,
    build_hamiltonian,
    bundled_model_path,
    initial_state,
    load_model,
    random_lvc_model,
    validate_model_file,
)
from .open import (
    BathError,
    IntegrationError,
    BathSpec,
    broadband_cooling_approx,
    ohmic_couplings,
    propagate_lindblad,
    thermal_bath,
)
from .operators import InvalidTruncationError, LayoutError, NotHermitianError

EXPERIMENTS = ("propagate", "trotter-scan", "compare-schemes", "open-system", "map",
               "feasibility", "resources")

EXIT_PARSE, EXIT_NUMERIC, EXIT_INFEASIBLE = 2, 3, 4


class HarnessError(Exception):
    def __init__(self, code: int, kind: str, reason: str):
        super().__init__(reason)
        self.code, self.kind, self.reason = code, kind, reason


def _fail(exc: HarnessError):
    reason = " ".join(str(exc.reason).split())
    click.echo(f"mqbsim-error code={exc.code} kind={exc.kind} reason={reason}", err=True)
    sys.exit(exc.code)


def _classify(exc: Exception) -> HarnessError:
    if isinstance(exc, HarnessError):
        return exc
    if isinstance(exc, InfeasibleError):
        return HarnessError(EXIT_INFEASIBLE, "infeasible", str(exc))
    if isinstance(exc, (IntegrationError, FloatingPointError, np.linalg.LinAlgError,
                        ArithmeticError, RuntimeError)):
        return HarnessError(EXIT_NUMERIC, "numeric", f"{type(exc).__name__}: {exc}")
    if isinstance(exc, (yaml.YAMLError, OSError, KeyError, TypeError, ValueError, IndexError,
                        ModelError, MappingError, LayoutError, InvalidTruncationError,
                        NotHermitianError, TrotterError, BathError)):
        return HarnessError(EXIT_PARSE, "parse", f"{type(exc).__name__}: {exc}")
    raise exc


# -- configuration --------------------------------------------------------------

def apply_override(config: dict, item: str) -> None:
    """Set ``a.b.c=value`` in place; the value is parsed as YAML."""
    if "=" not in item:
        raise HarnessError(EXIT_PARSE, "parse", f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise HarnessError(EXIT_PARSE, "parse", f"bad override key {key!r}")
    node = config
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise HarnessError(EXIT_PARSE, "parse", f"override {key!r} descends into a scalar")
    node[parts[-1]] = yaml.safe_load(raw)


def load_config(path, overrides=()) -> tuple[dict, Path]:
    path = Path(path)
    with open(path) as fh:
        config = yaml.safe_load(fh) or {}
    if not isinstance(config, dict):
        raise HarnessError(EXIT_PARSE, "parse", f"{path}: config must be a mapping")
    for item in overrides:
        apply_override(config, item)
    return config, path.parent


def _resolve(base: Path, value) -> Path:
    if isinstance(value, str) and value.startswith("bundled:"):
        return bundled_model_path(value.split(":", 1)[1])
    p = Path(value)
    return p if p.is_absolute() else base / p


class Run:
    """Parsed configuration plus derived objects shared by the experiments."""

    def __init__(self, config: dict, base: Path, seed: int | None = None):
        self.config = config
        self.base = base
        kind = config.get("experiment")
        if kind not in EXPERIMENTS:
            raise HarnessError(EXIT_PARSE, "parse",
                               f"experiment must be one of {', '.join(EXPERIMENTS)}; got {kind!r}")
        self.kind = kind
        self.seed = int(config.get("seed", 0) if seed is None else seed)
        self._model = None

    # model and layout
    @property
    def model(self):
        if self._model is None:
            spec = self.config.get("model")
            if spec is None:
                raise HarnessError(EXIT_PARSE, "parse", "config has no 'model'")
            if isinstance(spec, dict) and "random" in spec:
                r = spec["random"]
                rng = np.random.default_rng(self.seed)
                self._model = random_lvc_model(rng, int(r.get("d", 2)), int(r.get("N", 2)),
                                               float(r.get("scale", 0.1)))
            else:
                path = _resolve(self.base, spec)
                if not path.exists():
                    raise HarnessError(EXIT_PARSE, "parse", f"model file not found: {path}")
                self._model = load_model(path)
        return self._model

    @property
    def roles(self):
        return self.config.get("roles", self.model.metadata.get("roles"))

    def layout(self):
        trunc = self.config.get("truncation", 20)
        if isinstance(trunc, int):
            trunc = [trunc] * self.model.n_modes
        return self.model.layout(trunc)

    def psi0(self, layout):
        init = self.config.get("initial_state", {}) or {}
        idx = int(init.get("electronic", layout.d - 1))
        disp = {int(k): float(v) for k, v in (init.get("displacements") or {}).items()}
        return initial_state(layout, idx, disp)

    def time_grid(self):
        t = self.config.get("time", {}) or {}
        t_final = float(t.get("t_final", 300.0))
        dt = float(t.get("dt", 0.5))
        if not (t_final > 0 and dt > 0):
            raise HarnessError(EXIT_PARSE, "parse", "time.t_final and time.dt must be positive")
        n = int(round(t_final / dt))
        return t_final, dt, np.linspace(0.0, n * dt, n + 1)

    def trotter(self):
        return self.config.get("trotter", {}) or {}

    def plan(self, layout, scheme=None):
        tr = self.trotter()
        params = map_to_mqb(self.model, 1.0, self.roles)
        return mqb_trotter_plan(params, layout, scheme or tr.get("scheme", "rescaling"),
                                float(tr.get("dt", 0.5)), tr.get("stark_weights"))

    def hardware(self):
        hw = self.config.get("hardware")
        if hw is None:
            raise HarnessError(EXIT_PARSE, "parse", f"experiment {self.kind} needs 'hardware'")
        path = _resolve(self.base, hw)
        if not path.exists():
            raise HarnessError(EXIT_PARSE, "parse", f"hardware file not found: {path}")
        return load_hardware(path)


# -- experiments ------------------------------------------------------------------

def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise HarnessError(EXIT_NUMERIC, "numeric", "non-finite values in results")


def _write_traj(run, out, name, traj, timestamps, open_system=False):
    _check_finite(traj.populations, traj.q_expect, traj.p_expect)
    cols, rows = trajectory_table(traj, open_system)
    return write_csv(out / name, cols, rows, run.config, timestamps)


def exp_propagate(run: Run, out: Path, timestamps: bool, threads: int):
    layout = run.layout()
    _, _, times = run.time_grid()
    snaps = run.config.get("snapshots", {}) or {}
    traj = propagate_exact(build_hamiltonian(run.model, layout), run.psi0(layout), times, layout,
                           snapshot_times=snaps.get("times", ()))
    files = [_write_traj(run, out, "trajectory.csv", traj, timestamps)]
    if snaps.get("times"):
        files.append(write_snapshots(out / snaps.get("file", "snapshots.bin"), traj.snapshots,
                                     layout))
    return files


def exp_trotter_scan(run: Run, out: Path, timestamps: bool, threads: int):
    layout = run.layout()
    t_final, _, _ = run.time_grid()
    dts = run.trotter().get("dt_list", [0.05, 0.1, 0.2, 0.5])
    res = trotter_error_scan(run.plan(layout), dts, t_final, run.psi0(layout), layout)
    return [write_csv(out / "trotter_scan.csv",
                      ["dt_fs", "max_pop_error", "min_fidelity", "fitted_order"],
                      res.as_table(), run.config, timestamps)]


def exp_compare_schemes(run: Run, out: Path, timestamps: bool, threads: int):
    layout = run.layout()
    t_final, _, _ = run.time_grid()
    res_plan = run.plan(layout, "rescaling")
    cmp = compare_schemes(res_plan, res_plan.with_scheme("rewinding"), run.psi0(layout),
                          t_final, layout)
    _check_finite(cmp.fidelity_rescaling, cmp.fidelity_rewinding)
    rows = [(t, a, b, abs(a - b)) for t, a, b in
            zip(cmp.times, cmp.fidelity_rescaling, cmp.fidelity_rewinding)]
    return [
        write_csv(out / "compare_schemes.csv",
                  ["time_fs", "fidelity_rescaling", "fidelity_rewinding", "abs_difference"],
                  rows, run.config, timestamps),
        _write_traj(run, out, "trajectory_rescaling.csv", cmp.rescaling, timestamps),
        _write_traj(run, out, "trajectory_rewinding.csv", cmp.rewinding, timestamps),
    ]


def _baths(run: Run, gamma0=None) -> BathSpec:
    b = run.config.get("bath", {}) or {}
    omega = run.model.omega
    T = float(b.get("temperature", 0.0))
    if "gamma" in b:
        gamma = np.broadcast_to(np.asarray(b["gamma"], float), omega.shape)
    else:
        gamma = ohmic_couplings(float(gamma0), float(b.get("omega_cut", omega.max())), omega)
    bath = thermal_bath(gamma, omega, T)
    if b.get("broadband", False):
        bath = broadband_cooling_approx(bath)
    return bath


def exp_open_system(run: Run, out: Path, timestamps: bool, threads: int):
    layout = run.layout()
    _, _, times = run.time_grid()
    b = run.config.get("bath", {}) or {}
    H = simulator_hamiltonian(map_to_mqb(run.model, 1.0, run.roles), layout, traceless_stark=True)
    psi = run.psi0(layout)
    sweep = [None] if "gamma" in b else list(np.atleast_1d(b.get("gamma0", [0.0])))
    integ = run.config.get("integrator", {}) or {}
    kw = {k: float(integ[k]) for k in ("rtol", "atol", "max_step") if k in integ}

    def one(g0):
        return propagate_lindblad(psi, H, _baths(run, g0), times, layout, **kw)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        trajs = list(pool.map(one, sweep))
    files = []
    for i, traj in enumerate(trajs):
        name = "open_system.csv" if len(sweep) == 1 else f"open_system_{i:02d}.csv"
        _check_finite(traj.populations)
        cols, rows = trajectory_table(traj, open_system=True)
        meta = {} if sweep[i] is None else {"gamma0": repr(float(sweep[i]))}
        files.append(write_csv(out / name, cols, rows, run.config, timestamps, meta))
    return files


def _map_rows(params, drives=None):
    rows = [("F", "", params.F)]
    rows += [("delta", str(j), v) for j, v in enumerate(params.delta)]
    rows += [("chi", str(n), v) for n, v in enumerate(params.chi)]
    for j in params.tuning_set:
        rows += [("theta_prime", f"{n}:{j}", params.theta_prime[n, j]) for n in range(params.d)]
    for k in params.coupling_set:
        rows += [("omega_prime", f"{n}:{m}:{k}", params.omega_prime[n, m, k])
                 for n in range(params.d) for m in range(n + 1, params.d)]
    if drives is not None:
        for j in params.tuning_set:
            rows += [("theta_drive", f"{n}:{j}", drives.theta[n, j]) for n in range(params.d)]
        for k in params.coupling_set:
            rows += [("omega_drive", f"{n}:{m}:{k}", drives.omega[n, m, k])
                     for n in range(params.d) for m in range(n + 1, params.d)]
    return rows


def exp_map(run: Run, out: Path, timestamps: bool, threads: int):
    mp = run.config.get("mapping", {}) or {}
    params = map_to_mqb(run.model, float(mp.get("F", 1.0)), run.roles)
    drives = laser_drive_requirements(params, run.hardware()) if "hardware" in run.config else None
    return [write_csv(out / "mqb_params.csv", ["parameter", "index", "value_eV"],
                      _map_rows(params, drives), run.config, timestamps)]


def exp_feasibility(run: Run, out: Path, timestamps: bool, threads: int):
    fz = run.config.get("feasibility", {}) or {}
    t_final, _, _ = run.time_grid()
    if "M" in fz:
        M = int(fz["M"])
    else:
        params = map_to_mqb(run.model, 1.0, run.roles)
        M = len(set(params.tuning_set) | set(params.coupling_set))
    b = scale_factor_bounds(float(fz.get("t_max", t_final)), run.hardware(), M, run.model,
                            float(fz.get("dt_mol", run.trotter().get("dt", 0.5))))
    path = write_csv(out / "feasibility.csv", ["quantity", "value"],
                     [("F_min", b.F_min), ("F_max1", b.F_max1), ("F_max2", b.F_max2),
                      ("feasible", int(b.feasible))], run.config, timestamps)
    if not b.feasible:
        raise HarnessError(EXIT_INFEASIBLE, "infeasible",
                           f"F_min={b.F_min:.6g} > F_max={min(b.F_max1, b.F_max2):.6g}")
    return [path]


def exp_resources(run: Run, out: Path, timestamps: bool, threads: int):
    rs = run.config.get("resources", {}) or {}
    if "N" in rs:
        N, d = int(rs["N"]), int(rs.get("d", 2))
    else:
        N, d = run.model.n_modes, run.model.d
    rep = resource_estimate(N, d, int(rs.get("basis_size", 20)))
    return [write_csv(out / "resources.csv", ["resource", "value"], rep.rows(), run.config,
                      timestamps)]


EXPERIMENT_FUNCS = {
    "propagate": exp_propagate,
    "trotter-scan": exp_trotter_scan,
    "compare-schemes": exp_compare_schemes,
    "open-system": exp_open_system,
    "map": exp_map,
    "feasibility": exp_feasibility,
    "resources": exp_resources,
}


def execute(config: dict, base: Path, out: Path, threads: int = 1, seed: int | None = None,
            timestamps: bool = False) -> list[Path]:
    """Run one experiment; raises HarnessError on any failure."""
    config = copy.deepcopy(config)
    try:
        run = Run(config, base, seed)
        run.config["seed"] = run.seed
        out.mkdir(parents=True, exist_ok=True)
        return EXPERIMENT_FUNCS[run.kind](run, out, timestamps, threads)
    except Exception as exc:  # noqa: BLE001 - mapped onto exit codes
        raise _classify(exc) from exc


# -- click front end ----------------------------------------------------------------

@click.group()
@click.version_option(__version__, prog_name="mqbsim")
def main():
    """Vibronic dynamics and MQB simulator mapping experiments."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="YAML run configuration.")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted-key config override (repeatable).")
@click.option("--out", "out_dir", default="out", show_default=True, type=click.Path(file_okay=False))
@click.option("--threads", default=1, show_default=True, type=click.IntRange(1),
              help="Workers for sweep points.")
@click.option("--seed", default=None, type=int, help="Seed for randomized models.")
@click.option("--timestamps", is_flag=True, help="Add a creation time to output headers.")
def run(config_path, overrides, out_dir, threads, seed, timestamps):
    """Run the experiment described by a config file."""
    try:
        config, base = load_config(config_path, overrides)
        files = execute(config, base, Path(out_dir), threads, seed, timestamps)
    except HarnessError as exc:
        _fail(exc)
    except Exception as exc:  # noqa: BLE001
        _fail(_classify(exc))
    for f in files:
        click.echo(str(f))


@main.command()
@click.argument("path", type=click.Path())
def validate(path):
    """Check a model file's symmetry, units tag and role assignment."""
    problems = validate_model_file(path)
    if problems:
        for p in problems:
            click.echo(f"FAIL {p}")
        _fail(HarnessError(EXIT_PARSE, "invalid-model", "; ".join(problems)))
    click.echo(f"PASS {path}")


@main.command("map")
@click.argument("model_path")
@click.option("--scale", "F", default=1.0, show_default=True, type=float, help="Scale factor F.")
@click.option("--hardware", default=None, type=click.Path(), help="Hardware file for drive strengths.")
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False),
              help="Write mqb_params.csv here instead of printing.")
def map_cmd(model_path, F, hardware, out_dir):
    """Print the MQB parameters of a model."""
    model = model_path if model_path.startswith("bundled:") else str(Path(model_path).resolve())
    config = {"experiment": "map", "model": model, "mapping": {"F": F}}
    if hardware:
        config["hardware"] = str(Path(hardware).resolve())
    try:
        run_ = Run(config, Path.cwd())
        params = map_to_mqb(run_.model, F, run_.roles)
        drives = laser_drive_requirements(params, run_.hardware()) if hardware else None
        rows = _map_rows(params, drives)
        if out_dir:
            click.echo(str(write_csv(Path(out_dir) / "mqb_params.csv",
                                     ["parameter", "index", "value_eV"], rows, config)))
            return
    except Exception as exc:  # noqa: BLE001
        _fail(_classify(exc))
    for name, idx, val in rows:
        click.echo(f"{name:<12} {idx:<8} {val:.10g}")


@main.command()
@click.option("--modes", "N", required=True, type=click.IntRange(1), help="Number of modes.")
@click.option("--states", "d", default=2, show_default=True, type=click.IntRange(2))
@click.option("--basis-size", default=20, show_default=True, type=click.IntRange(1))
def resources(N, d, basis_size):
    """Print hardware resource counts for N modes and d electronic states."""
    rep = resource_estimate(N, d, basis_size)
    for name, val in rep.rows():
        click.echo(f"{name:<24} {val}")
    mem = rep.classical_bytes
    click.echo(f"{'classical_memory_log10':<24} {math.log10(mem):.3f}")


if __name__ == "__main__":
    main()
