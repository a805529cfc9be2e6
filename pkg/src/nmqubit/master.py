"""Unconditional dynamics: dissipative generators, a fixed-step RK4 integrator,
qubit reduction, the single-qubit memoryless baseline, and the analytic
first-moment solution for the decoupled mode bank used as an oracle.

The dissipator of a collapse operator N acting on a state rho is the
trace-preserving form N rho N^dag - (N^dag N rho + rho N^dag N)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import (
    DensityMatrix,
    HilbertLayout,
    LayoutMismatchError,
    Operator,
    partial_trace,
)
from .slh import SlhModel, qubit_operator


class PositivityError(RuntimeError):
    """The integrated state left the positive cone beyond tolerance."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Ingredients of a dissipative generator.

    With ``direct_terms = (D, D^dag)`` the generator carries the explicit
    commutator pair [D, rho] + [rho, D^dag] on top of the Hamiltonian and
    collapse contributions; this is the written-out form of the augmented
    master equation, algebraically equal to folding i(D - D^dag) into H.
    """

    hamiltonian: Operator
    collapse_ops: tuple[Operator, ...]
    direct_terms: tuple[Operator, Operator] | None = None

    def __post_init__(self) -> None:
        lay = self.hamiltonian.layout
        ops = list(self.collapse_ops)
        if self.direct_terms is not None:
            ops += list(self.direct_terms)
        for op in ops:
            if op.layout != lay:
                raise LayoutMismatchError("all generator operators must share one layout")
        if self.hamiltonian.herm_deviation() > 1e-10:
            raise ValueError("generator hamiltonian must be Hermitian to 1e-10")

    @property
    def layout(self) -> HilbertLayout:
        return self.hamiltonian.layout


def _entries(rho) -> np.ndarray:
    if isinstance(rho, (DensityMatrix, Operator)):
        return rho.entries
    return np.asarray(rho, dtype=complex)


def _check_layout(rho, layout: HilbertLayout) -> None:
    if isinstance(rho, (DensityMatrix, Operator)) and rho.layout != layout:
        raise LayoutMismatchError(
            f"state layout {rho.layout.dims} does not match generator layout {layout.dims}"
        )


def lindblad_apply(rho, spec: GeneratorSpec) -> np.ndarray:
    """Time derivative -i[H, rho] + sum of dissipators (+ direct terms)."""
    _check_layout(rho, spec.layout)
    r = _entries(rho)
    h = spec.hamiltonian.entries
    out = -1j * (h @ r - r @ h)
    for op in spec.collapse_ops:
        n = op.entries
        nd = n.conj().T
        ndn = nd @ n
        out = out + n @ r @ nd - 0.5 * (ndn @ r + r @ ndn)
    if spec.direct_terms is not None:
        d, ddag = (op.entries for op in spec.direct_terms)
        out = out + (d @ r - r @ d) + (r @ ddag - ddag @ r)
    return out


def collapse_operators(model: SlhModel) -> tuple[Operator, ...]:
    """Collapse operators implied by a model's couplings and field mode.

    ``independent`` treats every field channel as its own dissipation channel;
    ``shared`` merges the bank channels (all non-probe couplings) into the
    single operator sum_k sqrt(gamma_k) a_k, reflecting one common drive field.
    """
    if model.field_mode == "independent":
        return model.couplings
    bank = [op for i, op in enumerate(model.couplings) if i != model.probe_index]
    merged: list[Operator] = []
    if bank:
        total = bank[0]
        for op in bank[1:]:
            total = total + op
        merged.append(total)
    if model.probe_index is not None:
        merged.append(model.couplings[model.probe_index])
    return tuple(merged)


def generator_spec(model: SlhModel, form: str = "lindblad") -> GeneratorSpec:
    """Build the generator of a model in one of its two equivalent forms.

    ``lindblad`` keeps the full Hamiltonian (including the qubit-bank
    interaction); ``direct`` splits that interaction out as explicit
    commutator terms, exactly as the augmented master equation is written.
    """
    cops = collapse_operators(model)
    if form == "lindblad":
        return GeneratorSpec(model.hamiltonian, cops)
    if form == "direct":
        if model.direct_coupling is None:
            raise ValueError("model carries no direct qubit-bank coupling")
        d = model.direct_coupling
        h_i = 1j * (d - d.dag())
        return GeneratorSpec(model.hamiltonian - h_i, cops, direct_terms=(d, d.dag()))
    raise ValueError(f"unknown generator form {form!r}")


def augmented_apply(rho, model: SlhModel) -> np.ndarray:
    """Apply the augmented master equation in its written-out form:
    -i[H_S + H_A, rho] + bank and probe dissipators + [D, rho] + [rho, D^dag]."""
    return lindblad_apply(rho, generator_spec(model, form="direct"))


class CompiledGenerator:
    """Precomputed arrays for fast repeated application.

    The generator is rewritten as E rho + rho E^dag + sum_k N_k rho N_k^dag
    with E = -iH - (1/2) sum N^dag N (+ D - D^dag when direct terms exist).
    """

    __slots__ = ("layout", "e", "edag", "n_pairs")

    def __init__(self, spec: GeneratorSpec) -> None:
        self.layout = spec.layout
        e = -1j * spec.hamiltonian.entries
        self.n_pairs = []
        for op in spec.collapse_ops:
            n = op.entries
            nd = n.conj().T
            e = e - 0.5 * (nd @ n)
            self.n_pairs.append((n, nd))
        if spec.direct_terms is not None:
            d, ddag = (op.entries for op in spec.direct_terms)
            e = e + d - ddag
        self.e = e
        self.edag = e.conj().T

    def apply(self, r: np.ndarray) -> np.ndarray:
        out = self.e @ r + r @ self.edag
        for n, nd in self.n_pairs:
            out = out + n @ r @ nd
        return out


@dataclass
class MasterResult:
    """Integrated states plus per-point conservation diagnostics.

    ``tr_drift`` is the pre-renormalization |trace - 1| of each step,
    ``herm_dev`` the max |rho - rho^dag| entry, ``min_eig`` the smallest
    eigenvalue, all recorded on the same grid as ``states``.
    """

    t_grid: np.ndarray
    layout: HilbertLayout
    states: np.ndarray
    tr_drift: np.ndarray
    herm_dev: np.ndarray
    min_eig: np.ndarray

    def density_matrices(self) -> list[DensityMatrix]:
        return [DensityMatrix.wrap(self.layout, s) for s in self.states]

    def qubit_bloch(self) -> np.ndarray:
        """(n, 3) Bloch components of the reduced qubit over the grid."""
        if self.layout.dims[0] != 2:
            raise ValueError("layout does not start with a qubit factor")
        rest = self.layout.total // 2
        reduced = np.einsum("tinjn->tij", self.states.reshape(-1, 2, rest, 2, rest))
        out = np.empty((len(self.states), 3))
        out[:, 0] = 2.0 * reduced[:, 0, 1].real
        out[:, 1] = -2.0 * reduced[:, 0, 1].imag
        out[:, 2] = (reduced[:, 0, 0] - reduced[:, 1, 1]).real
        return out


def integrate_master(rho0: DensityMatrix, spec: GeneratorSpec, t_grid,
                     positivity_abort: float = 1e-6) -> MasterResult:
    """Propagate with classic fixed-step RK4 over the given time grid.

    Every stored state is renormalized by its trace; the pre-normalization
    drift is logged.  Aborts if any state develops an eigenvalue below
    ``-positivity_abort``.
    """
    _check_layout(rho0, spec.layout)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) < 1 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-d sequence")
    gen = CompiledGenerator(spec)
    n = len(t)
    d = spec.layout.total
    states = np.empty((n, d, d), dtype=complex)
    tr_drift = np.empty(n)
    herm_dev = np.empty(n)
    min_eig = np.empty(n)

    rho = rho0.entries.astype(complex)

    def record(i: int, r: np.ndarray, pre_trace: float) -> np.ndarray:
        tr_drift[i] = abs(pre_trace - 1.0)
        r = r / pre_trace
        herm_dev[i] = np.max(np.abs(r - r.conj().T))
        w = np.linalg.eigvalsh(r)
        min_eig[i] = w[0]
        if w[0] < -positivity_abort:
            raise PositivityError(
                f"state at t={t[i]:.6g} (grid point {i}) has eigenvalue {w[0]:.3e} "
                f"< -{positivity_abort:g}; reduce the step size"
            )
        states[i] = r
        return r

    rho = record(0, rho, float(np.trace(rho).real))
    for i in range(n - 1):
        dt = t[i + 1] - t[i]
        k1 = gen.apply(rho)
        k2 = gen.apply(rho + 0.5 * dt * k1)
        k3 = gen.apply(rho + 0.5 * dt * k2)
        k4 = gen.apply(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = record(i + 1, rho, float(np.trace(rho).real))

    return MasterResult(t, spec.layout, states, tr_drift, herm_dev, min_eig)


def reduce_to_qubit(rho: DensityMatrix) -> DensityMatrix:
    """Trace out everything but the leading qubit factor."""
    if rho.layout.dims[0] != 2:
        raise ValueError("layout does not start with a qubit factor")
    return partial_trace(rho, keep={0})


def ancilla_moment_oracle(t: float, params, a0) -> np.ndarray:
    """First moments of the decoupled bank: <a_k(t)> = exp(-(gamma_k/2 +
    i omega_k) t) <a_k(0)>, exact for a vacuum drive."""
    if t < 0:
        raise ValueError("t must be >= 0")
    a0 = np.asarray(a0, dtype=complex)
    rates = np.array([p.gamma / 2.0 + 1j * p.omega for p in params])
    return np.exp(-rates * t) * a0


def augmented_initial_state(bloch, layout: HilbertLayout, ancilla_kets=None) -> DensityMatrix:
    """Product state: qubit with the given Bloch vector, each mode in a pure
    ket (vacuum when unspecified)."""
    if layout.dims[0] != 2:
        raise ValueError("layout does not start with a qubit factor")
    x, y, z = bloch
    rho_q = DensityMatrix.from_bloch(x, y, z).entries
    rho = rho_q
    for slot, dim in enumerate(layout.dims[1:]):
        if ancilla_kets is not None and ancilla_kets[slot] is not None:
            v = np.asarray(ancilla_kets[slot], dtype=complex).reshape(-1)
            if v.size != dim:
                raise ValueError(f"ancilla ket {slot} has length {v.size}, expected {dim}")
            v = v / np.linalg.norm(v)
        else:
            v = np.zeros(dim, dtype=complex)
            v[0] = 1.0
        rho = np.kron(rho, np.outer(v, v.conj()))
    return DensityMatrix(layout, rho)


def markovian_baseline_spec(omega_q: float, ancillas, gamma_q: float,
                            probe_kind: str = "pauli_x",
                            probe_scale: complex = 1.0) -> GeneratorSpec:
    """Qubit-only reference model: the bank couplings act directly as white
    noise channels sqrt(kappa_k) sigma_k next to the probe channel."""
    h = 0.5 * omega_q * qubit_operator("pauli_z")
    cops = [math.sqrt(p.kappa) * qubit_operator(p.sigma_kind, p.sigma_scale) for p in ancillas]
    cops.append(math.sqrt(gamma_q) * qubit_operator(probe_kind, probe_scale))
    return GeneratorSpec(h, tuple(cops))


def markovian_baseline_apply(rho_q, omega_q: float, sigma_ops, probe_op) -> np.ndarray:
    """Apply the memoryless qubit generator with explicit collapse operators."""
    h = 0.5 * omega_q * qubit_operator("pauli_z")
    spec = GeneratorSpec(h, tuple(sigma_ops) + (probe_op,))
    return lindblad_apply(rho_q, spec)
