"""Lower-bound parameter families: construction, membership, and pair bounds."""

import math

import numpy as np
import pytest

from covlab import (
    BandedFamilySpec,
    NuSequence,
    SparseFamilySpec,
    ThetaIndex,
    UsageError,
    assouad_terms,
    build_f1_banded,
    build_f2_banded,
    build_f3_banded,
    build_sparse_theta,
    certify_banded_membership,
    certify_sparse_membership,
    flip_bit,
    sample_banded_theta,
    sample_sparse_theta,
)


def _nu_table(alpha: float = 0.5, length: int = 1024) -> NuSequence:
    return NuSequence.table([m**-alpha for m in range(1, length + 1)])


def _f2_spec(r: int = 16, N: int = 50, tau: float = 0.003) -> BandedFamilySpec:
    return BandedFamilySpec(kind="f2", r=r, N=N, tau=tau, nu=_nu_table())


def _f3_spec(r: int = 16, N: int = 100_000, tau: float = 0.003) -> BandedFamilySpec:
    return BandedFamilySpec(kind="f3", r=r, N=N, tau=tau, nu=_nu_table())


def _sparse_spec(r_plus_one: int = 64, N: int = 7) -> SparseFamilySpec:
    gamma2 = math.sqrt(2.0 * math.log(r_plus_one))
    return SparseFamilySpec(
        q=0.5, gamma1_q=3.0, gamma2=gamma2, nu_const=0.02, N=N
    )


def _failed(report):
    return [c.name for c in report.checks if not c.passed]


class TestDiagonalFamily:
    def test_member_count_and_separation(self):
        spec = BandedFamilySpec(kind="f1", r=16, N=100, w=1.0, tau=0.01)
        members = build_f1_banded(spec)
        assert len(members) == 17
        delta = np.linalg.norm(members[0] - members[1], 2)
        assert delta == pytest.approx(
            math.sqrt(0.01 * math.log(16) / 100), rel=1e-12
        )
        assert delta == pytest.approx(0.016651, abs=5e-7)

    def test_unperturbed_member_is_scaled_identity(self):
        spec = BandedFamilySpec(kind="f1", r=8, N=100, w=2.0, tau=0.01)
        members = build_f1_banded(spec)
        np.testing.assert_array_equal(members[0], 2.0 * np.eye(8))

    def test_every_member_positive_definite(self):
        spec = BandedFamilySpec(kind="f1", r=32, N=50, tau=0.01)
        for member in build_f1_banded(spec):
            assert np.linalg.eigvalsh(member).min() > 0.0

    def test_requires_enough_samples(self):
        with pytest.raises(UsageError):
            BandedFamilySpec(kind="f1", r=256, N=5)


class TestLinkedBandedFamilies:
    def test_f2_zero_theta_is_identity(self):
        spec = _f2_spec()
        theta = ThetaIndex(bits=(0,) * spec.gamma_N)
        np.testing.assert_array_equal(build_f2_banded(spec, theta), np.eye(spec.r))

    def test_f2_off_diagonal_amplitude(self):
        spec = _f2_spec()
        theta = ThetaIndex(bits=(1,) * spec.gamma_N)
        Sigma = build_f2_banded(spec, theta)
        off = Sigma[~np.eye(spec.r, dtype=bool)]
        nonzero = off[off != 0.0]
        assert nonzero.size > 0
        np.testing.assert_allclose(nonzero, spec.tau * spec.h_N)

    def test_f2_eigenvalue_floor(self):
        spec = _f2_spec()
        theta = ThetaIndex(bits=(1,) * spec.gamma_N)
        Sigma = build_f2_banded(spec, theta)
        assert np.linalg.eigvalsh(Sigma).min() >= 0.75 - 1e-10
        col_mass = np.abs(Sigma).sum(axis=0).max()
        assert col_mass <= 1.25

    def test_f2_membership_certificate_passes(self):
        spec = _f2_spec()
        for i in range(5):
            theta = sample_banded_theta(spec, seed=3, index=i)
            report = certify_banded_membership(spec, theta)
            assert _failed(report) == []

    def test_f2_tail_is_exactly_zero_past_band(self):
        spec = _f2_spec()
        theta = sample_banded_theta(spec, seed=4, index=0)
        report = certify_banded_membership(spec, theta)
        zero_checks = [c for c in report.checks if c.name.startswith("tail_zero_m")]
        assert zero_checks and all(c.measured == 0.0 for c in zero_checks)

    def test_f3_zero_theta_is_identity(self):
        spec = _f3_spec()
        theta = ThetaIndex(bits=(0,) * spec.gamma_N)
        np.testing.assert_array_equal(build_f3_banded(spec, theta), np.eye(spec.r))

    def test_f3_amplitude_and_certificate(self):
        spec = _f3_spec()
        theta = ThetaIndex(bits=(1,) * spec.gamma_N)
        Sigma = build_f3_banded(spec, theta)
        off = Sigma[~np.eye(spec.r, dtype=bool)]
        nonzero = off[off != 0.0]
        np.testing.assert_allclose(nonzero, spec.tau / math.sqrt(spec.N * spec.r))
        report = certify_banded_membership(spec, theta)
        assert _failed(report) == []

    def test_theta_sampling_is_deterministic(self):
        spec = _f2_spec()
        assert sample_banded_theta(spec, 9, 2) == sample_banded_theta(spec, 9, 2)
        assert sample_banded_theta(spec, 9, 2) != sample_banded_theta(spec, 9, 3)

    def test_spec_validation(self):
        with pytest.raises(UsageError):
            _f2_spec(r=4, N=50)  # needs r > m_star^d
        with pytest.raises(UsageError):
            _f3_spec(r=16, N=10)  # needs r < m_star^d
        with pytest.raises(UsageError):
            BandedFamilySpec(kind="f2", r=16, N=50, tau=0.3, nu=_nu_table())
        with pytest.raises(UsageError):
            # 20 cells cannot tile a 2-d axis-aligned partition
            BandedFamilySpec(kind="f2", r=20, N=50, d=2, nu=_nu_table())
        with pytest.raises(UsageError):
            build_f2_banded(_f3_spec(), ThetaIndex(bits=(0,) * _f3_spec().gamma_N))

    def test_theta_bits_validated(self):
        with pytest.raises(UsageError):
            ThetaIndex(bits=(0, 2, 1))


class TestSparseFamily:
    def test_derived_sizes(self):
        spec = _sparse_spec()
        assert spec.r == 63
        assert spec.r_star == 31
        assert spec.eps == pytest.approx(
            0.02 * math.sqrt(math.log(63) / 7), rel=1e-12
        )
        assert spec.ell >= 1

    def test_zero_xi_block_structure(self):
        spec = _sparse_spec()
        theta = sample_sparse_theta(spec, seed=1, index=0)
        theta_off = type(theta)(xi=(0,) * len(theta.xi), rows=theta.rows)
        Sigma = build_sparse_theta(spec, theta_off)
        want = np.diag([1.0] + [0.5] * spec.r)
        np.testing.assert_array_equal(Sigma, want)

    def test_active_row_has_ell_links_at_half_eps(self):
        spec = _sparse_spec()
        theta = sample_sparse_theta(spec, seed=2, index=0)
        Sigma = build_sparse_theta(spec, theta)
        active = [m for m, bit in enumerate(theta.xi) if bit == 1]
        assert active, "sampled theta should activate at least one row"
        for m in active:
            row = Sigma[1 + m].copy()
            row[1 + m] = 0.0
            nonzero = row[row != 0.0]
            assert nonzero.size == spec.ell
            np.testing.assert_allclose(nonzero, spec.eps / 2.0)

    def test_column_cap_respected(self):
        spec = _sparse_spec()
        for i in range(10):
            theta = sample_sparse_theta(spec, seed=5, index=i)
            Sigma = build_sparse_theta(spec, theta)
            sub = Sigma[1:, 1:]
            off_support = (sub != 0.0) & ~np.eye(spec.r, dtype=bool)
            assert off_support.sum(axis=0).max() <= 2 * spec.ell

    def test_unit_norm_and_unit_top_left(self):
        spec = _sparse_spec()
        theta = sample_sparse_theta(spec, seed=6, index=0)
        Sigma = build_sparse_theta(spec, theta)
        e1 = np.zeros(spec.r + 1)
        e1[0] = 1.0
        np.testing.assert_array_equal(Sigma @ e1, e1)
        assert np.linalg.norm(Sigma, 2) == pytest.approx(1.0, abs=1e-12)

    def test_membership_certificate_passes(self):
        spec = _sparse_spec()
        for i in range(5):
            theta = sample_sparse_theta(spec, seed=7, index=i)
            report = certify_sparse_membership(spec, theta, mc_samples=800, seed=i)
            assert _failed(report) == []

    def test_config_validation(self):
        with pytest.raises(UsageError):
            SparseFamilySpec(q=0.5, gamma1_q=3.0, gamma2=2.9, nu_const=0.9, N=7)
        with pytest.raises(UsageError):
            SparseFamilySpec(q=1.2, gamma1_q=3.0, gamma2=2.9, nu_const=0.02, N=7)


class TestFlipBit:
    def test_banded_hamming_one(self):
        spec = _f2_spec()
        theta = sample_banded_theta(spec, seed=8, index=0)
        other = flip_bit(theta, 1)
        diff = sum(a != b for a, b in zip(theta.bits, other.bits))
        assert diff == 1
        assert flip_bit(other, 1) == theta

    def test_sparse_flip_keeps_rows(self):
        spec = _sparse_spec()
        theta = sample_sparse_theta(spec, seed=9, index=0)
        other = flip_bit(theta, 0)
        assert other.rows == theta.rows
        assert sum(a != b for a, b in zip(theta.xi, other.xi)) == 1

    def test_position_out_of_range(self):
        spec = _f2_spec()
        theta = sample_banded_theta(spec, seed=10, index=0)
        with pytest.raises(UsageError):
            flip_bit(theta, len(theta.bits))


class TestAssouadTerms:
    def test_f2_pairs_satisfy_proof_inequalities(self):
        spec = _f2_spec()
        rng = np.random.default_rng(11)
        pairs = []
        for i in range(6):
            theta = sample_banded_theta(spec, seed=12, index=i)
            pairs.append((theta, flip_bit(theta, int(rng.integers(spec.gamma_N)))))
        report = assouad_terms(spec, pairs)
        assert report.all_passed, [c.name for c in report.checks if not c.passed]
        assert report.alpha_min > 0.0
        assert report.worst_kl <= (16.0 / 9.0) * report.worst_frob2 + 1e-18

    def test_f2_frobenius_budget_value(self):
        spec = _f2_spec()
        theta = ThetaIndex(bits=(0,) * spec.gamma_N)
        other = flip_bit(theta, 0)
        A = build_f2_banded(spec, theta)
        B = build_f2_banded(spec, other)
        frob2 = float(np.sum((A - B) ** 2))
        assert frob2 <= 2.0 * spec.tau**2 * spec.h_N**2 * (2 * spec.K) ** spec.d

    def test_sparse_pairs_satisfy_alpha_bound(self):
        spec = _sparse_spec()
        pairs = []
        for i in range(6):
            theta = sample_sparse_theta(spec, seed=13, index=i)
            pairs.append((theta, flip_bit(theta, i % spec.r_star)))
        report = assouad_terms(spec, pairs)
        assert report.all_passed, [c.name for c in report.checks if not c.passed]
        # per-pair separation over Hamming distance is at least ell*eps/r
        assert report.alpha_min >= spec.ell * spec.eps / spec.r - 1e-12

    def test_sparse_pairs_must_share_rows(self):
        spec = _sparse_spec()
        a = sample_sparse_theta(spec, seed=14, index=0)
        b = sample_sparse_theta(spec, seed=14, index=1)
        if a.rows == b.rows:  # pragma: no cover - seeds chosen to differ
            pytest.skip("sampled row patterns coincide")
        with pytest.raises(UsageError):
            assouad_terms(spec, [(a, b)])

    def test_identical_thetas_rejected(self):
        spec = _f2_spec()
        theta = sample_banded_theta(spec, seed=15, index=0)
        with pytest.raises(UsageError):
            assouad_terms(spec, [(theta, theta)])

    def test_report_format_mentions_every_check(self):
        spec = _f2_spec()
        theta = sample_banded_theta(spec, seed=16, index=0)
        report = assouad_terms(spec, [(theta, flip_bit(theta, 0))])
        text = report.format()
        assert "alpha_min=" in text
        assert "hamming_two_ways.pass=" in text
        assert "kl_vs_frobenius.pass=" in text
        assert "frobenius_budget.pass=" in text
