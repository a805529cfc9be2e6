import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nmqubit.operators import HilbertLayout, Operator, embed, kron, make_standard_operator
from nmqubit.slh import (
    AncillaParams,
    SlhModel,
    build_ancilla_bank,
    build_augmented,
    build_probed,
    concatenate,
    qubit_operator,
    series,
)

from conftest import rand_density


def single_mode(omega, gamma, n=3):
    return build_ancilla_bank([AncillaParams(omega=omega, gamma=gamma, kappa=0.0,
                                             truncation=n)])


class TestAncillaParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            AncillaParams(omega=1.0, gamma=0.0, kappa=1.0)
        with pytest.raises(ValueError):
            AncillaParams(omega=1.0, gamma=1.0, kappa=-0.1)
        with pytest.raises(ValueError):
            AncillaParams(omega=1.0, gamma=1.0, kappa=1.0, truncation=1)
        with pytest.raises(ValueError):
            AncillaParams(omega=1.0, gamma=1.0, kappa=1.0, sigma_kind="pauli_w")


class TestBank:
    def test_single_mode_example(self):
        bank = build_ancilla_bank(
            [AncillaParams(omega=10.0, gamma=0.6, kappa=1.0, truncation=5)]
        )
        a = make_standard_operator("annihilation", 5)
        assert bank.layout.dims == (5,)
        assert_allclose(bank.couplings[0].entries, math.sqrt(0.6) * a.entries)
        assert_allclose(bank.hamiltonian.entries, 10.0 * (a.dag() @ a).entries)

    def test_hamiltonian_commutes_with_number(self):
        params = [
            AncillaParams(omega=1.0, gamma=0.5, kappa=0.2, truncation=3),
            AncillaParams(omega=2.0, gamma=0.8, kappa=0.1, truncation=3),
        ]
        bank = build_ancilla_bank(params)
        num = Operator.zero(bank.layout)
        for k, p in enumerate(params):
            a = embed(make_standard_operator("annihilation", 3), k, bank.layout)
            num = num + a.dag() @ a
        comm = bank.hamiltonian @ num - num @ bank.hamiltonian
        assert_allclose(comm.entries, 0, atol=1e-12)

    def test_couplings_commute(self):
        params = [
            AncillaParams(omega=1.0, gamma=0.5, kappa=0.2, truncation=3),
            AncillaParams(omega=2.0, gamma=0.8, kappa=0.1, truncation=3),
        ]
        bank = build_ancilla_bank(params)
        c0, c1 = bank.couplings
        assert_allclose((c0 @ c1 - c1 @ c0).entries, 0, atol=1e-14)


class TestConcatenate:
    def test_reproduces_bank(self):
        params = [
            AncillaParams(omega=1.0, gamma=0.4, kappa=0.0, truncation=3),
            AncillaParams(omega=2.0, gamma=0.9, kappa=0.0, truncation=3),
            AncillaParams(omega=3.0, gamma=0.2, kappa=0.0, truncation=3),
        ]
        bank = build_ancilla_bank(params)
        joined = concatenate(
            concatenate(build_ancilla_bank(params[:1]), build_ancilla_bank(params[1:2])),
            build_ancilla_bank(params[2:]),
        )
        assert joined.layout == bank.layout
        assert_allclose(joined.hamiltonian.entries, bank.hamiltonian.entries, atol=1e-12)
        for got, want in zip(joined.couplings, bank.couplings):
            assert_allclose(got.entries, want.entries, atol=1e-12)

    def test_empty_identity(self):
        g = single_mode(1.5, 0.7)
        out = concatenate(g, SlhModel.empty())
        assert out.layout == g.layout
        assert_allclose(out.hamiltonian.entries, g.hamiltonian.entries)
        assert len(out.couplings) == g.n_channels

    def test_layout_total_multiplies(self):
        g1 = single_mode(1.0, 0.5, n=3)
        g2 = single_mode(2.0, 0.5, n=4)
        assert concatenate(g1, g2).layout.total == g1.layout.total * g2.layout.total


class TestSeries:
    def test_passthrough_identity(self):
        g = single_mode(1.5, 0.7)
        out = series(SlhModel.passthrough(g.n_channels), g)
        assert out.layout == g.layout
        assert_allclose(out.hamiltonian.entries, g.hamiltonian.entries, atol=1e-14)
        assert_allclose(out.couplings[0].entries, g.couplings[0].entries, atol=1e-14)

    def test_couplings_add_for_identity_scattering(self):
        g1 = single_mode(1.0, 0.5)
        g2 = single_mode(2.0, 0.8)
        out = series(g2, g1)
        i1 = Operator.identity(g1.layout)
        i2 = Operator.identity(g2.layout)
        want = kron(g1.couplings[0], i2) + kron(i1, g2.couplings[0])
        assert_allclose(out.couplings[0].entries, want.entries, atol=1e-12)

    def test_hamiltonian_cross_term(self):
        # hand-expanded: H = H1 + H2 + (X - X^dag)/(2i), X = L2^dag L1
        g1 = single_mode(1.0, 0.5)
        g2 = single_mode(2.0, 0.8)
        out = series(g2, g1)
        i1 = Operator.identity(g1.layout)
        i2 = Operator.identity(g2.layout)
        l1 = kron(g1.couplings[0], i2)
        l2 = kron(i1, g2.couplings[0])
        x = l2.dag() @ l1
        want = (
            kron(g1.hamiltonian, i2)
            + kron(i1, g2.hamiltonian)
            + (x - x.dag()) * (-0.5j)
        ).entries
        assert_allclose(out.hamiltonian.entries, want, atol=1e-12)
        assert out.hamiltonian.herm_deviation() < 1e-12

    def test_channel_count_mismatch(self):
        g1 = single_mode(1.0, 0.5)
        params = [
            AncillaParams(omega=1.0, gamma=0.4, kappa=0.0, truncation=3),
            AncillaParams(omega=2.0, gamma=0.9, kappa=0.0, truncation=3),
        ]
        with pytest.raises(ValueError):
            series(build_ancilla_bank(params), g1)


class TestAugmented:
    def params(self, kappa=1.0):
        return [AncillaParams(omega=2.0, gamma=0.6, kappa=kappa,
                              sigma_kind="pauli_y", truncation=5)]

    def test_interaction_matches_hand_formula(self):
        params = self.params()
        model = build_augmented(2.0, build_ancilla_bank(params), params)
        lay = model.layout
        a = embed(make_standard_operator("annihilation", 5), 1, lay)
        sy = embed(make_standard_operator("pauli_y", 2), 0, lay)
        h_i = -1j * (math.sqrt(0.6) / 2.0) * (a.dag() @ sy - sy @ a)
        h_s = embed(1.0 * make_standard_operator("pauli_z", 2), 0, lay)
        a_num = a.dag() @ a
        want = h_s + 2.0 * a_num + h_i
        assert_allclose(model.hamiltonian.entries, want.entries, atol=1e-12)

    def test_zero_kappa_decouples(self):
        params = self.params(kappa=0.0)
        model = build_augmented(2.0, build_ancilla_bank(params), params)
        assert_allclose(model.direct_coupling.entries, 0, atol=1e-14)

    def test_hermitian_for_random_params(self, rng):
        for _ in range(5):
            params = [
                AncillaParams(
                    omega=float(rng.uniform(0.5, 3)),
                    gamma=float(rng.uniform(0.1, 1)),
                    kappa=float(rng.uniform(0, 2)),
                    sigma_kind=str(rng.choice(["pauli_x", "pauli_y", "sigma_minus"])),
                    sigma_scale=complex(rng.normal(), rng.normal()),
                    truncation=4,
                )
            ]
            model = build_augmented(1.7, build_ancilla_bank(params), params)
            assert model.hamiltonian.herm_deviation() < 1e-12

    def test_direct_terms_match_commutator(self, rng):
        # [D, rho] + [rho, D^dag] must equal -i[H_I, rho]
        params = self.params()
        model = build_augmented(2.0, build_ancilla_bank(params), params)
        d = model.direct_coupling.entries
        h_i = 1j * (d - d.conj().T)
        for _ in range(5):
            rho = rand_density(rng, model.layout.dims).entries
            lhs = (d @ rho - rho @ d) + (rho @ d.conj().T - d.conj().T @ rho)
            rhs = -1j * (h_i @ rho - rho @ h_i)
            assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestProbed:
    def make(self, gamma_q=0.8):
        params = [AncillaParams(omega=2.0, gamma=0.6, kappa=1.0,
                                sigma_kind="pauli_y", truncation=5)]
        aug = build_augmented(2.0, build_ancilla_bank(params), params)
        return build_probed(aug, gamma_q, "pauli_x")

    def test_probe_coupling(self):
        model = self.make()
        lay = model.layout
        want = embed(math.sqrt(0.8) * make_standard_operator("pauli_x", 2), 0, lay)
        assert_allclose(model.couplings[model.probe_index].entries, want.entries)

    def test_channel_count(self):
        model = self.make()
        assert model.n_channels == 2  # one bank mode + probe
        assert model.probe_index == 1

    def test_zero_gamma_probe(self):
        model = self.make(gamma_q=0.0)
        assert_allclose(model.couplings[model.probe_index].entries, 0, atol=1e-14)

    def test_scattering_identity(self):
        model = self.make()
        eye = np.eye(model.layout.total)
        for i, row in enumerate(model.scattering):
            for j, op in enumerate(row):
                assert_allclose(op.entries, eye if i == j else 0.0, atol=1e-14)


class TestQubitOperatorMenu:
    def test_menu_and_scale(self):
        sy = qubit_operator("pauli_y", scale=2j)
        assert_allclose(sy.entries, 2j * make_standard_operator("pauli_y", 2).entries)
        with pytest.raises(ValueError):
            qubit_operator("identity")
