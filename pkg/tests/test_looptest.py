import numpy as np
import pytest

from conftest import TIGHT, WELL_POSED, correlated_trials, honest_trials, random_instance, random_preps
from loopspam import worked_example as we
from loopspam.errors import LabelError, SingularMatrixError
from loopspam.qcore import PRESET_EFFECTS, PRESET_KETS, pauli_expand_joint, random_effect, random_ket
from loopspam.scenario import AliceCorrelated, BobCorrelated, Honest, exact_data_matrix
from loopspam.looptest import (
    EXACT_TOL,
    Trial,
    consistency_residual,
    exact_source,
    flag_rows,
    localize,
    normalized_map,
    pair_test,
    row_scores,
    substitution_schedule,
    test_matrix as product_matrix,
)


def example_trials(device=None, basis="negated-y"):
    device = device or we.correlated_device()
    s1, s2 = we.trial_sets(basis)
    bob = we.bob_set(basis)
    return (Trial.from_data(s1, exact_data_matrix(s1, bob, device)),
            Trial.from_data(s2, exact_data_matrix(s2, bob, device)))


class TestNormalizedMap:
    def test_example_values(self):
        t1, t2 = example_trials()
        np.testing.assert_allclose(normalized_map(t1), we.EXPECTED["A1T_inv_S1"], atol=1e-12)
        np.testing.assert_allclose(normalized_map(t2), we.EXPECTED["A2T_inv_S2"], atol=1e-12)

    def test_honest_map_is_four_x_b(self, rng):
        for _ in range(50):
            a, _, b, xi = random_instance(rng)
            t = Trial.from_data(a, exact_data_matrix(a, b, Honest(xi)))
            np.testing.assert_allclose(normalized_map(t), 4 * pauli_expand_joint(xi) @ b.matrix, atol=1e-10)

    def test_singular_preparation_rejected(self):
        with pytest.raises(SingularMatrixError):
            Trial(("a", "b", "c", "d"), np.ones((4, 4)), np.eye(4), "x")


class TestResidual:
    def test_example_residual(self):
        t1, t2 = example_trials()
        res = consistency_residual(t1, t2)
        expected = np.zeros((4, 4))
        expected[3, 3] = -1
        np.testing.assert_allclose(res.pauli, expected, atol=1e-12)

    def test_honest_residual_vanishes(self, rng):
        for _ in range(100):
            res = consistency_residual(*honest_trials(rng))
            assert res.max_abs <= 1e-9 and res.state_max_abs <= 1e-9

    def test_state_residual_isolates_offending_row(self, rng):
        for _ in range(100):
            t1, t2, k = correlated_trials(rng)
            scores = row_scores(consistency_residual(t1, t2).state)
            assert scores[k] > 1e-6
            assert np.all(np.delete(scores, k) < 1e-9)

    def test_mismatched_fixed_sets_rejected(self):
        t1, t2 = example_trials()
        other = Trial(t2.labels, t2.A, t2.S, "other")
        with pytest.raises(LabelError):
            consistency_residual(t1, other)
        with pytest.raises(LabelError):
            product_matrix(t1, other)

    def test_state_residual_basis_invariant(self):
        a = consistency_residual(*example_trials(basis="negated-y")).state
        b = consistency_residual(*example_trials(basis="standard")).state
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestProductMatrix:
    def test_example_value(self):
        t1, t2 = example_trials()
        T = product_matrix(t1, t2)
        np.testing.assert_allclose(T, we.EXPECTED["T"], atol=1e-12)
        # identical data matrices reduce the product to A2^T (A1^T)^{-1}
        oracle = t2.A.T @ np.linalg.inv(t1.A.T)
        np.testing.assert_allclose(T, oracle, atol=1e-12)
        assert not np.allclose(T[3], we.REFERENCE_PRODUCT_ROW4)

    def test_example_flags_row_four_only(self):
        report = pair_test(*example_trials())
        assert report.flagged == (3,)
        assert report.source == "product"
        assert report.flagged_labels == [("psi4", "psi5")]
        assert report.to_dict()["flagged_rows"] == [4]

    def test_honest_example_device_passes(self):
        report = pair_test(*example_trials(we.honest_device()))
        assert report.passed
        np.testing.assert_allclose(report.product, np.eye(4), atol=1e-12)

    def test_honest_random_identity(self, rng):
        for _ in range(100):
            assert np.max(np.abs(product_matrix(*honest_trials(rng, **WELL_POSED)) - np.eye(4))) <= 1e-9

    def test_honest_conditioned_identity_at_exact_tolerance(self, rng):
        for _ in range(200):
            t1, t2 = honest_trials(rng, **TIGHT)
            assert np.max(np.abs(product_matrix(t1, t2) - np.eye(4))) <= EXACT_TOL
            assert pair_test(t1, t2).passed

    def test_offending_row_only(self, rng):
        for _ in range(100):
            t1, t2, k = correlated_trials(rng, **WELL_POSED)
            dev = row_scores(product_matrix(t1, t2) - np.eye(4))
            assert dev[k] > 1e-6
            assert np.all(np.delete(dev, k) < 1e-9)

    @pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
    def test_scale_invariance(self, c, rng):
        t1, t2 = example_trials()
        np.testing.assert_allclose(product_matrix(t1.scaled(c), t2.scaled(c)), we.EXPECTED["T"], rtol=0, atol=1e-12)
        for _ in range(20):
            t1, t2 = honest_trials(rng, **TIGHT)
            np.testing.assert_allclose(product_matrix(t1.scaled(c), t2.scaled(c)), product_matrix(t1, t2),
                                       rtol=0, atol=1e-12)

    def test_reparametrization_invariance(self, rng):
        t1, t2 = example_trials()
        ref = pair_test(t1, t2)
        for _ in range(100):
            G = rng.normal(size=(4, 4))
            while np.linalg.svd(G, compute_uv=False)[-1] < 0.1:
                G = rng.normal(size=(4, 4))
            rep = pair_test(t1.reparametrized(G), t2.reparametrized(G))
            np.testing.assert_allclose(rep.product, ref.product, atol=1e-10)
            assert rep.flagged == ref.flagged

    def test_formulations_agree_on_pass_fail(self, rng):
        for make in (honest_trials, lambda r, **kw: correlated_trials(r, **kw)[:2]):
            for _ in range(50):
                t1, t2 = make(rng, **TIGHT)
                prod = pair_test(t1, t2, method="product")
                res = pair_test(t1, t2, method="residual")
                assert prod.passed == res.passed

    def test_singular_second_data_matrix(self, trial_sets, bob_set):
        d = Honest(PRESET_EFFECTS["half"])
        s1, s2 = trial_sets
        t1 = Trial.from_data(s1, exact_data_matrix(s1, bob_set, d))
        t2 = Trial.from_data(s2, exact_data_matrix(s2, bob_set, d))
        with pytest.raises(SingularMatrixError):
            product_matrix(t1, t2)
        report = pair_test(t1, t2)
        assert report.source == "residual" and report.passed
        with pytest.raises(SingularMatrixError):
            pair_test(t1, t2, method="product")


class TestFlagRows:
    def test_examples(self):
        t1, t2 = example_trials()
        assert flag_rows(product_matrix(t1, t2) - np.eye(4), 0.1) == (3,)
        assert flag_rows(np.full((4, 4), 1e-12), 1e-6) == ()

    def test_non_positive_threshold(self):
        with pytest.raises(ValueError):
            flag_rows(np.zeros((4, 4)), 0.0)

    def test_sampled_trials_need_threshold(self):
        t1, t2 = example_trials()
        s1 = Trial(t1.labels, t1.A, t1.S, t1.fixed_label, exact=False)
        with pytest.raises(ValueError, match="threshold"):
            pair_test(s1, t2)
        assert pair_test(s1, t2, tau=0.5).mode == "sampled"

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            pair_test(*example_trials(), method="magic")


class TestLocalization:
    def run(self, device, basis="negated-y"):
        base, _ = we.trial_sets(basis)
        source = exact_source(we.bob_set(basis), device)
        return localize(base, {"psi5": PRESET_KETS["psi5"]}, None, source)

    def test_schedule(self):
        pairs = substitution_schedule(["a", "b", "c", "d"], ["e"])
        assert [p[1] for p in pairs] == [("e", "b", "c", "d"), ("a", "e", "c", "d"),
                                         ("a", "b", "e", "d"), ("a", "b", "c", "e")]

    def test_example_pool_implicates_psi5(self):
        rep = self.run(we.correlated_device())
        assert rep.implicated == ["psi5"]
        assert rep.cleared == ["psi1", "psi2", "psi3", "psi4"]
        statuses = {o.second: o.status for o in rep.outcomes}
        # psi1, psi3, psi4, psi5 are linearly dependent
        assert statuses[("psi1", "psi5", "psi3", "psi4")] == "skipped"

    def test_honest_clears_everything(self):
        rep = self.run(we.honest_device())
        assert rep.cleared == ["psi1", "psi2", "psi3", "psi4", "psi5"]
        assert rep.implicated == [] and rep.unattributed == 0

    def test_standard_basis_same_verdicts(self):
        assert self.run(we.correlated_device(), "standard").verdicts == self.run(we.correlated_device()).verdicts

    def test_two_culprits_in_larger_pool(self, rng):
        base = random_preps(rng, "a")
        extras = {f"e{k}": random_ket(rng) for k in range(3)}
        device = AliceCorrelated(random_effect(rng), {"e0": random_effect(rng), "e1": random_effect(rng)})
        rep = localize(base, extras, None, exact_source(random_preps(rng, "b"), device))
        assert rep.implicated == ["e0", "e1"]
        assert set(rep.cleared) == set(base.labels) | {"e2"}

    def test_bob_side(self):
        device = BobCorrelated(PRESET_EFFECTS["singlet"], {"psi5": PRESET_EFFECTS["symmetric"]})
        base, _ = we.trial_sets()
        alice = we.bob_set()
        rep = localize(base, {"psi5": PRESET_KETS["psi5"]}, None, exact_source(alice, device, "bob"))
        assert rep.implicated == ["psi5"]

    def test_pool_too_small(self):
        base, _ = we.trial_sets()
        with pytest.raises(ValueError, match="at least 5"):
            localize(base, {}, None, exact_source(we.bob_set(), we.honest_device()))

    def test_duplicate_label_in_pool(self):
        base, _ = we.trial_sets()
        with pytest.raises(LabelError):
            localize(base, {"psi1": PRESET_KETS["psi5"]}, None, exact_source(we.bob_set(), we.honest_device()))

    def test_report_dict(self):
        d = self.run(we.correlated_device()).to_dict()
        assert d["verdicts"]["psi5"] == "implicated"
        assert len(d["schedule"]) == 4


def test_exact_tolerance_constant():
    assert EXACT_TOL == 1e-10
