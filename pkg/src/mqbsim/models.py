"""Vibronic-coupling model definitions and their operator form."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import yaml

from .operators import (
    LayoutError,
    SpaceLayout,
    embed,
    embed_product,
    expm_apply,
    momentum_p,
    number,
    position_q,
)

SYMMETRY_ATOL = 1e-12


class ModelError(ValueError):
    """Invalid vibronic-coupling model."""


@dataclass(frozen=True)
class VCModel:
    """Vibronic-coupling model truncated at second order.

    Energies are in eV. ``c1[j, n, m]`` multiplies ``|n><m| Q_j`` and
    ``c2[j, k, n, m]`` multiplies ``|n><m| Q_j Q_k``.
    """

    omega: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray | None = None
    state_labels: tuple[str, ...] | None = None
    mode_labels: tuple[str, ...] | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        c0 = np.atleast_2d(np.asarray(self.c0, dtype=float))
        N, d = omega.shape[0], c0.shape[0]
        c1 = np.asarray(self.c1, dtype=float).reshape(N, d, d)
        c2 = (np.zeros((N, N, d, d)) if self.c2 is None
              else np.asarray(self.c2, dtype=float).reshape(N, N, d, d))
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)
        for arr in (omega, c0, c1, c2):
            arr.setflags(write=False)
        problems = model_problems(self)
        if problems:
            raise ModelError("; ".join(problems))

    @property
    def d(self) -> int:
        return self.c0.shape[0]

    @property
    def n_modes(self) -> int:
        return self.omega.shape[0]

    @property
    def is_linear(self) -> bool:
        return not np.any(self.c2)

    def layout(self, truncation) -> SpaceLayout:
        if np.isscalar(truncation):
            truncation = [int(truncation)] * self.n_modes
        return SpaceLayout(self.d, tuple(truncation))


def model_problems(model: VCModel) -> list[str]:
    """Human-readable list of invariant violations (empty when valid)."""
    out = []
    d, N = model.c0.shape[0], model.omega.shape[0]
    if model.c0.shape != (d, d):
        out.append(f"c0 must be square, got {model.c0.shape}")
        return out
    for j, w in enumerate(model.omega):
        if not np.isfinite(w) or w <= 0:
            out.append(f"omega[{j}] = {w} must be positive")
    for n, m in zip(*np.nonzero(np.abs(model.c0 - model.c0.T) > SYMMETRY_ATOL)):
        if n < m:
            out.append(f"c0[{n}][{m}] != c0[{m}][{n}]")
    for j, n, m in zip(*np.nonzero(np.abs(model.c1 - model.c1.transpose(0, 2, 1)) > SYMMETRY_ATOL)):
        if n < m:
            out.append(f"c1[{j}][{n}][{m}] != c1[{j}][{m}][{n}]")
    asym_nm = np.abs(model.c2 - model.c2.transpose(0, 1, 3, 2)) > SYMMETRY_ATOL
    for j, k, n, m in zip(*np.nonzero(asym_nm)):
        if n < m:
            out.append(f"c2[{j}][{k}][{n}][{m}] != c2[{j}][{k}][{m}][{n}]")
    asym_jk = np.abs(model.c2 - model.c2.transpose(1, 0, 2, 3)) > SYMMETRY_ATOL
    for j, k, n, m in zip(*np.nonzero(asym_jk)):
        if j < k:
            out.append(f"c2[{j}][{k}][{n}][{m}] != c2[{k}][{j}][{n}][{m}]")
    for name, arr in (("c0", model.c0), ("c1", model.c1), ("c2", model.c2)):
        if not np.all(np.isfinite(arr)):
            out.append(f"{name} has non-finite entries")
    if model.state_labels is not None and len(model.state_labels) != d:
        out.append(f"{len(model.state_labels)} state labels for d={d}")
    if model.mode_labels is not None and len(model.mode_labels) != N:
        out.append(f"{len(model.mode_labels)} mode labels for N={N}")
    return out


def _check_layout(model: VCModel, layout: SpaceLayout) -> None:
    if layout.d != model.d or layout.n_modes != model.n_modes:
        raise LayoutError(
            f"layout (d={layout.d}, N={layout.n_modes}) does not match "
            f"model (d={model.d}, N={model.n_modes})"
        )


def harmonic_part(model: VCModel, layout: SpaceLayout) -> sp.csc_matrix:
    """Sum over modes of omega_j (a^dag a + 1/2).

    Written in the number basis so the zero-point term is exact at every
    retained level, including the top one.
    """
    _check_layout(model, layout)
    H = sp.csc_matrix((layout.dim, layout.dim), dtype=complex)
    for j, n in enumerate(layout.truncations):
        h = model.omega[j] * (number(n) + 0.5 * sp.identity(n, format="csc"))
        H = H + embed(h, layout.mode_factor(j), layout)
    return H.tocsc()


def electronic_part(model: VCModel, layout: SpaceLayout, include_constant: bool = True) -> sp.csc_matrix:
    """The sum over n, m of C_nm |n><m| with C_nm expanded to second order."""
    _check_layout(model, layout)
    H = sp.csc_matrix((layout.dim, layout.dim), dtype=complex)
    if include_constant and np.any(model.c0):
        H = H + embed(model.c0, 0, layout)
    qs = [position_q(n) for n in layout.truncations]
    for j in range(model.n_modes):
        if np.any(model.c1[j]):
            H = H + embed_product(model.c1[j], {j: qs[j]}, layout)
    for j in range(model.n_modes):
        for k in range(model.n_modes):
            c = model.c2[j, k]
            if not np.any(c):
                continue
            ops = {j: qs[j] @ qs[j]} if j == k else {j: qs[j], k: qs[k]}
            H = H + embed_product(c, ops, layout)
    return H.tocsc()


def build_hamiltonian(model: VCModel, layout: SpaceLayout) -> sp.csc_matrix:
    """Full vibronic-coupling Hamiltonian on ``layout`` (eV)."""
    return (harmonic_part(model, layout) + electronic_part(model, layout)).tocsc()


@dataclass(frozen=True)
class TwoStateLVCParams:
    """Pauli-operator parameters of a two-state linear model (eV)."""

    deltaE: float
    W0: float
    kappa_bar: np.ndarray
    delta_kappa: np.ndarray
    lam: np.ndarray


def pauli_form(model: VCModel) -> TwoStateLVCParams:
    if model.d != 2:
        raise ModelError(f"Pauli form needs d=2, got d={model.d}")
    if not model.is_linear:
        raise ModelError("Pauli form is defined for linear models only")
    c0, c1 = model.c0, model.c1
    return TwoStateLVCParams(
        deltaE=float(c0[1, 1] - c0[0, 0]),
        W0=float(c0[0, 1]),
        kappa_bar=(c1[:, 1, 1] + c1[:, 0, 0]) / 2,
        delta_kappa=c1[:, 1, 1] - c1[:, 0, 0],
        lam=c1[:, 0, 1].copy(),
    )


def from_pauli_form(params: TwoStateLVCParams, omega) -> VCModel:
    """Rebuild a traceless-constant two-state model from Pauli parameters."""
    kb = np.asarray(params.kappa_bar, float)
    dk = np.asarray(params.delta_kappa, float)
    lam = np.asarray(params.lam, float)
    c0 = np.array([[-params.deltaE / 2, params.W0], [params.W0, params.deltaE / 2]])
    c1 = np.empty((len(kb), 2, 2))
    c1[:, 0, 0] = kb - dk / 2
    c1[:, 1, 1] = kb + dk / 2
    c1[:, 0, 1] = c1[:, 1, 0] = lam
    return VCModel(omega=omega, c0=c0, c1=c1)


def displace_model(model: VCModel, mode_k: int, beta: float) -> VCModel:
    """Model after the coordinate shift Q_k -> Q_k - beta.

    The identity constant omega_k beta^2 / 2 is dropped; all other constants
    stay in ``c0``.
    """
    if not 0 <= mode_k < model.n_modes:
        raise IndexError(f"mode index {mode_k} out of range for N={model.n_modes}")
    if beta == 0:
        return model
    c0 = model.c0 - beta * model.c1[mode_k] + beta**2 * model.c2[mode_k, mode_k]
    c1 = model.c1 - 2 * beta * model.c2[mode_k]
    c1[mode_k] -= beta * model.omega[mode_k] * np.eye(model.d)
    return replace(model, c0=c0, c1=c1, c2=model.c2.copy())


def displace_state(state, mode_k: int, beta: float, layout: SpaceLayout) -> np.ndarray:
    """Apply exp(-i beta P_k), which shifts <Q_k> by +beta."""
    p = embed(momentum_p(layout.truncations[mode_k]), layout.mode_factor(mode_k), layout)
    return expm_apply(p, state, beta)


def franck_condon_state(layout: SpaceLayout, electronic_index: int) -> np.ndarray:
    """|n> on the qudit with every mode in its vacuum."""
    if not 0 <= electronic_index < layout.d:
        raise IndexError(f"electronic index {electronic_index} out of range for d={layout.d}")
    psi = np.zeros(layout.shape, dtype=complex)
    psi[(electronic_index,) + (0,) * layout.n_modes] = 1.0
    return psi.ravel()


def initial_state(layout: SpaceLayout, electronic_index: int, displacements=None) -> np.ndarray:
    psi = franck_condon_state(layout, electronic_index)
    for k, beta in sorted((displacements or {}).items()):
        psi = displace_state(psi, int(k), float(beta), layout)
    return psi


def random_lvc_model(rng: np.random.Generator, d: int, n_modes: int, scale: float = 0.1,
                     omega_range=(0.05, 0.15)) -> VCModel:
    """Random linear model with symmetric coefficient tensors (for tests and scans)."""
    omega = rng.uniform(*omega_range, size=n_modes)
    c0 = rng.normal(scale=scale, size=(d, d))
    c1 = rng.normal(scale=scale, size=(n_modes, d, d))
    return VCModel(omega=omega, c0=(c0 + c0.T) / 2, c1=(c1 + c1.transpose(0, 2, 1)) / 2)


# -- model files -------------------------------------------------------------

def _model_from_dict(data: dict) -> VCModel:
    units = data.get("units")
    if units != "eV":
        raise ModelError(f"model file must declare units: eV (got {units!r})")
    for key in ("d", "N", "omega", "c0", "c1"):
        if key not in data:
            raise ModelError(f"model file is missing '{key}'")
    d, N = int(data["d"]), int(data["N"])
    omega = np.asarray(data["omega"], dtype=float)
    c0 = np.asarray(data["c0"], dtype=float)
    c1 = np.asarray(data["c1"], dtype=float)
    if omega.shape != (N,) or c0.shape != (d, d) or c1.shape != (N, d, d):
        raise ModelError(
            f"array shapes omega{omega.shape}, c0{c0.shape}, c1{c1.shape} "
            f"inconsistent with d={d}, N={N}"
        )
    c2 = np.zeros((N, N, d, d))
    for entry in data.get("c2") or []:
        j, k, n, m, value = entry
        j, k, n, m = int(j), int(k), int(n), int(m)
        for a, b in ((j, k), (k, j)):
            c2[a, b, n, m] = c2[a, b, m, n] = float(value)
    meta = {key: data[key] for key in ("name", "source", "roles", "notes") if key in data}
    return VCModel(
        omega=omega, c0=c0, c1=c1, c2=c2,
        state_labels=tuple(data["state_labels"]) if "state_labels" in data else None,
        mode_labels=tuple(data["mode_labels"]) if "mode_labels" in data else None,
        metadata=meta,
    )


def load_model(path) -> VCModel:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ModelError(f"{path}: expected a mapping at the top level")
    return _model_from_dict(data)


def model_to_dict(model: VCModel) -> dict:
    c2 = []
    for j, k, n, m in zip(*np.nonzero(model.c2)):
        if j <= k and n <= m:
            c2.append([int(j), int(k), int(n), int(m), float(model.c2[j, k, n, m])])
    out = {"units": "eV", "d": model.d, "N": model.n_modes}
    out.update({k: v for k, v in model.metadata.items() if k in ("name", "source", "notes", "roles")})
    if model.state_labels:
        out["state_labels"] = list(model.state_labels)
    if model.mode_labels:
        out["mode_labels"] = list(model.mode_labels)
    out["omega"] = model.omega.tolist()
    out["c0"] = model.c0.tolist()
    out["c1"] = model.c1.tolist()
    if c2:
        out["c2"] = c2
    return out


def save_model(model: VCModel, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(model_to_dict(model), fh, sort_keys=False)


def validate_model_file(path) -> list[str]:
    """Problems found in a model file; an empty list means it passed."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        return [f"cannot read {path}: {exc}"]
    if not isinstance(data, dict):
        return ["top level must be a mapping"]
    problems = []
    if data.get("units") != "eV":
        problems.append(f"missing or wrong units tag (expected 'eV', got {data.get('units')!r})")
        data = {**data, "units": "eV"}
    try:
        model = _model_from_dict(data)
    except ModelError as exc:
        problems.extend(str(exc).split("; "))
        return problems
    except (TypeError, ValueError) as exc:
        problems.append(f"malformed arrays: {exc}")
        return problems
    roles = data.get("roles")
    if roles is not None:
        from .mapping import MappingError, normalize_roles

        try:
            normalize_roles(model, roles)
        except MappingError as exc:
            problems.append(str(exc))
    return problems


def bundled_model_path(name: str = "pyrazine_2d") -> Path:
    return Path(__file__).parent / "data" / f"{name}.yaml"


def pyrazine_model() -> VCModel:
    return load_model(bundled_model_path("pyrazine_2d"))
