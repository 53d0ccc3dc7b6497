import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from lais.compression import compress_locations
from lais.errors import DegenerateWeightsError
from lais.ledger import EvalLedger
from lais.mcmc import ChainConfig, run_mh_chain
from lais.rng import derive_rng
from lais.targets import TargetDensity, gaussian_target
from lais.weighting import (ProposalBank, build_bank, draw_lower_samples,
                            equivalent_proposal_check, estimate,
                            eval_denominator, gaussian_log_pdf,
                            recycle_weighting, sample_set_from_csv,
                            sample_set_to_csv, scheme, weight_points,
                            weight_samples)


def _standard_target(dim=2):
    return gaussian_target(np.zeros(dim), np.eye(dim))


def _bank(N=3, T=8, D=2, sigma=1.5, seed=0):
    rng = derive_rng(seed)
    locs = rng.normal(size=(N, T, D)) * 2.0
    covs = np.broadcast_to(sigma ** 2 * np.eye(D), (N, D, D)).copy()
    return ProposalBank(locations=locs, covs=covs)


def _run_chains(target_factory, N=3, T=8, sigma=1.2, seed=5):
    records = []
    for n in range(N):
        cfg = ChainConfig(
            target=target_factory(),
            n_steps=T,
            proposal_scale=sigma,
            init=np.full(2, 0.1 * n),
            rng=derive_rng(seed, n),
            chain_index=n,
        )
        records.append(run_mh_chain(cfg))
    return records


class TestDenominatorSchemes:
    def test_standard_matches_single_gaussian(self):
        bank = _bank()
        target = _standard_target()
        samples = draw_lower_samples(bank, 2, derive_rng(1))
        wss = weight_samples(target, bank, scheme("standard"), samples)
        # oracle: each weight is pi(x) / N(x | own location, own cov)
        for i in range(wss.count):
            n, t = wss.chain_idx[i], wss.step_idx[i]
            expect = target.log_unnorm(wss.samples[i]) - gaussian_log_pdf(
                wss.samples[i], bank.locations[n, t], bank.covs[n]
            )
            assert wss.log_weights[i] == pytest.approx(expect, abs=1e-12)

    def test_complete_matches_full_mixture_oracle(self):
        bank = _bank(N=2, T=5)
        target = _standard_target()
        samples = draw_lower_samples(bank, 1, derive_rng(2))
        wss = weight_samples(target, bank, scheme("complete"), samples)
        flat = bank.locations.reshape(-1, 2)
        comp = np.stack(
            [multivariate_normal(mu, bank.covs[0]).logpdf(wss.samples) for mu in flat]
        )
        log_phi = logsumexp(comp, axis=0) - np.log(len(flat))
        expect = target.log_unnorm_batch(wss.samples) - log_phi
        assert_allclose(wss.log_weights, expect, atol=1e-12)

    def test_full_covariance_path_matches_scipy(self):
        # anisotropic covariances exercise the dense-cholesky branch
        cov_a = np.array([[2.0, 0.6], [0.6, 1.0]])
        cov_b = np.array([[1.0, -0.3], [-0.3, 3.0]])
        rng = derive_rng(7)
        locs = rng.normal(size=(2, 4, 2))
        bank = ProposalBank(locations=locs, covs=np.stack([cov_a, cov_b]))
        assert bank.shared_iso_sigma2() is None
        target = _standard_target()
        samples = draw_lower_samples(bank, 1, derive_rng(3))
        wss = weight_samples(target, bank, scheme("temporal"), samples)
        X = wss.samples
        for i in range(wss.count):
            n = wss.chain_idx[i]
            comp = [
                multivariate_normal(locs[n, t], bank.covs[n]).logpdf(X[i])
                for t in range(4)
            ]
            expect = target.log_unnorm(X[i]) - (logsumexp(comp) - np.log(4))
            assert wss.log_weights[i] == pytest.approx(expect, abs=1e-12)

    def test_spatial_mixes_across_chains_at_one_step(self):
        bank = _bank(N=4, T=3)
        target = _standard_target()
        samples = draw_lower_samples(bank, 1, derive_rng(4))
        wss = weight_samples(target, bank, scheme("spatial"), samples)
        i = 5
        t = wss.step_idx[i]
        comp = [
            gaussian_log_pdf(wss.samples[i], bank.locations[n, t], bank.covs[n])
            for n in range(4)
        ]
        expect = target.log_unnorm(wss.samples[i]) - (logsumexp(comp) - np.log(4))
        assert wss.log_weights[i] == pytest.approx(expect, abs=1e-12)

    def test_compressed_equals_complete_when_every_point_is_a_cluster(self):
        bank = _bank(N=3, T=6, sigma=1.5)
        target = _standard_target()
        samples = draw_lower_samples(bank, 1, derive_rng(5))
        complete = weight_samples(target, bank, scheme("complete"), samples)
        flat = bank.locations.reshape(-1, 2)
        mix = compress_locations(flat, flat.shape[0], 1.5 ** 2, seed=0)
        compressed = weight_points(target.fork(), scheme("compressed", mix),
                                   complete.samples)
        assert_allclose(compressed.log_weights, complete.log_weights, atol=1e-12)


class TestCollapseIdentities:
    def test_single_chain_spatial_equals_standard(self):
        bank = _bank(N=1, T=10)
        target = _standard_target()
        samples = draw_lower_samples(bank, 2, derive_rng(6))
        a = weight_samples(target.fork(), bank, scheme("standard"), samples)
        b = weight_samples(target.fork(), bank, scheme("spatial"), samples)
        np.testing.assert_array_equal(a.log_weights, b.log_weights)

    def test_single_chain_complete_equals_temporal(self):
        bank = _bank(N=1, T=10)
        target = _standard_target()
        samples = draw_lower_samples(bank, 2, derive_rng(6))
        a = weight_samples(target.fork(), bank, scheme("temporal"), samples)
        b = weight_samples(target.fork(), bank, scheme("complete"), samples)
        np.testing.assert_array_equal(a.log_weights, b.log_weights)

    def test_single_step_temporal_equals_standard(self):
        bank = _bank(N=7, T=1)
        target = _standard_target()
        samples = draw_lower_samples(bank, 3, derive_rng(8))
        a = weight_samples(target.fork(), bank, scheme("standard"), samples)
        b = weight_samples(target.fork(), bank, scheme("temporal"), samples)
        np.testing.assert_array_equal(a.log_weights, b.log_weights)

    def test_single_step_complete_equals_spatial(self):
        bank = _bank(N=7, T=1)
        target = _standard_target()
        samples = draw_lower_samples(bank, 3, derive_rng(8))
        a = weight_samples(target.fork(), bank, scheme("spatial"), samples)
        b = weight_samples(target.fork(), bank, scheme("complete"), samples)
        np.testing.assert_array_equal(a.log_weights, b.log_weights)


class TestEvaluationCounts:
    @pytest.mark.parametrize("kind,per_sample", [
        ("standard", 1), ("spatial", 3), ("temporal", 8), ("complete", 24),
    ])
    def test_fresh_sample_proposal_costs(self, kind, per_sample):
        bank = _bank(N=3, T=8)
        target = _standard_target()
        samples = draw_lower_samples(bank, 2, derive_rng(9))
        S = 3 * 8 * 2
        weight_samples(target, bank, scheme(kind), samples)
        assert target.ledger.proposal_evals == S * per_sample
        assert target.ledger.full_posterior_evals == S

    def test_compressed_costs_one_per_component(self):
        bank = _bank(N=3, T=8)
        mix = compress_locations(bank.locations.reshape(-1, 2), 5, 1.0, seed=1)
        target = _standard_target()
        X = derive_rng(10).normal(size=(40, 2))
        weight_points(target, scheme("compressed", mix), X)
        assert target.ledger.proposal_evals == 40 * 5

    @pytest.mark.parametrize("kind,per_sample", [
        ("standard", 0), ("spatial", 2), ("temporal", 7), ("complete", 23),
    ])
    def test_recycled_proposal_costs(self, kind, per_sample):
        records = _run_chains(_standard_target)
        ledger = EvalLedger()
        wss = recycle_weighting(records, scheme(kind), ledger)
        assert wss.count == 3 * 8
        assert ledger.proposal_evals == 24 * per_sample
        assert ledger.full_posterior_evals == 0

    def test_renumerated_recycling_charges_the_new_target(self):
        records = _run_chains(_standard_target)
        fresh = _standard_target()
        ledger = EvalLedger()
        recycle_weighting(records, scheme("spatial"), ledger,
                          numerator_target=fresh)
        assert fresh.ledger.full_posterior_evals == 24

    def test_eval_denominator_counts_and_needs_origin(self):
        bank = _bank(N=3, T=8)
        ledger = EvalLedger()
        v = eval_denominator(bank, scheme("temporal"), np.zeros(2),
                             origin=(1, 0), ledger=ledger)
        assert np.isfinite(v)
        assert ledger.proposal_evals == 8
        with pytest.raises(ValueError):
            eval_denominator(bank, scheme("standard"), np.zeros(2))
        with pytest.raises(ValueError):
            eval_denominator(bank, scheme("spatial"), np.zeros(2), origin=(5, 0))


class TestRecycling:
    def test_standard_scheme_reuses_stored_values_bitwise(self):
        records = _run_chains(_standard_target)
        wss = recycle_weighting(records, scheme("standard"), EvalLedger())
        stored_num = np.concatenate([r.candidate_log_target for r in records])
        stored_prop = np.concatenate([r.candidate_log_proposal for r in records])
        np.testing.assert_array_equal(wss.log_weights, stored_num - stored_prop)
        np.testing.assert_array_equal(
            wss.samples, np.concatenate([r.candidates for r in records])
        )

    def test_bank_is_centred_on_conditioning_states(self):
        records = _run_chains(_standard_target, N=2, T=5)
        wss = recycle_weighting(records, scheme("temporal"), EvalLedger())
        # oracle: temporal mixture over proposals centred at states 0..T-1
        rec = records[0]
        mus = rec.states[:-1]
        i = 2
        comp = [
            gaussian_log_pdf(wss.samples[i], mu, rec.proposal_cov) for mu in mus
        ]
        expect = rec.candidate_log_target[i] - (logsumexp(comp) - np.log(5))
        assert wss.log_weights[i] == pytest.approx(expect, abs=1e-12)

    def test_renumeration_changes_only_the_numerator(self):
        records = _run_chains(_standard_target)
        shifted = gaussian_target(np.zeros(2), np.eye(2))
        base = recycle_weighting(records, scheme("complete"), EvalLedger())
        renum = recycle_weighting(records, scheme("complete"), EvalLedger(),
                                  numerator_target=shifted)
        # same target density, so re-evaluated numerators agree to rounding
        assert_allclose(renum.log_weights, base.log_weights, atol=1e-9)

    def test_chains_without_stored_candidates_are_rejected(self):
        records = _run_chains(_standard_target, N=2, T=4)
        records[1].candidates = None
        with pytest.raises(ValueError, match="stored candidate"):
            recycle_weighting(records, scheme("complete"), EvalLedger())

    def test_compressed_scheme_is_not_recyclable(self):
        records = _run_chains(_standard_target, N=2, T=4)
        mix = compress_locations(np.zeros((4, 2)) + derive_rng(0).normal(size=(4, 2)),
                                 2, 1.0, seed=0)
        with pytest.raises(ValueError):
            recycle_weighting(records, scheme("compressed", mix), EvalLedger())


class TestWeightedSampleSet:
    def _uniform_set(self, S=50):
        bank = _bank(N=1, T=1, sigma=1.0)
        bank.locations[:] = 0.0
        target = TargetDensity(
            2, lambda x: gaussian_log_pdf(x, np.zeros(2), np.eye(2))
        )
        samples = draw_lower_samples(bank, S, derive_rng(11))
        return weight_samples(target, bank, scheme("standard"), samples)

    def test_matched_proposal_gives_unit_weights_and_full_ess(self):
        wss = self._uniform_set()
        assert_allclose(wss.log_weights, 0.0, atol=1e-12)
        assert wss.ess() == pytest.approx(wss.count, rel=1e-12)
        assert not wss.degenerate

    def test_one_hot_weights_flag_degenerate_without_raising(self, tmp_path):
        path = tmp_path / "one_hot.csv"
        with open(path, "w") as fh:
            fh.write("n,t,m,x_1,log_weight\n")
            fh.write("0,0,0,0.5,0.0\n")
            for i in range(1, 40):
                fh.write(f"0,{i},0,0.1,-900.0\n")
        wss = sample_set_from_csv(path, scheme_kind="standard")
        assert wss.degenerate
        assert wss.ess() == pytest.approx(1.0, abs=1e-6)
        assert wss.normalized_weights().max() > 1.0 - 1e-12

    def test_all_zero_weights_raise(self):
        bank = _bank(N=1, T=4, sigma=0.5)
        bank.locations[:] = 50.0  # proposals land far outside the support
        target = TargetDensity(
            2,
            lambda x: 0.0 if np.all(np.abs(x) < 1) else -np.inf,
            batch_logpdf=lambda X: np.where(
                np.all(np.abs(X) < 1, axis=1), 0.0, -np.inf
            ),
        )
        samples = draw_lower_samples(bank, 3, derive_rng(12))
        with pytest.raises(DegenerateWeightsError):
            weight_samples(target, bank, scheme("standard"), samples)

    def test_zero_weight_samples_are_kept_and_counted(self):
        bank = _bank(N=1, T=1, sigma=3.0)
        bank.locations[:] = 0.0
        target = TargetDensity(
            2,
            lambda x: 0.0 if np.all(np.abs(x) < 1) else -np.inf,
            batch_logpdf=lambda X: np.where(
                np.all(np.abs(X) < 1, axis=1), 0.0, -np.inf
            ),
        )
        samples = draw_lower_samples(bank, 400, derive_rng(13))
        wss = weight_samples(target, bank, scheme("standard"), samples)
        assert 0 < wss.n_zero_weight < 400
        assert wss.count == 400
        assert np.sum(wss.log_weights == -np.inf) == wss.n_zero_weight

    def test_ess_between_one_and_count(self):
        wss = self._uniform_set()
        rng = derive_rng(14)
        wss.log_weights = rng.normal(size=wss.count)
        assert 1.0 <= wss.ess() <= wss.count


class TestEstimate:
    def test_normaliser_counts_zero_weight_samples(self, tmp_path):
        path = tmp_path / "half.csv"
        with open(path, "w") as fh:
            fh.write("n,t,m,x_1,log_weight\n")
            fh.write("0,0,0,1.0,0.0\n")
            fh.write("0,1,0,2.0,0.0\n")
            fh.write("0,2,0,3.0,-inf\n")
            fh.write("0,3,0,4.0,-inf\n")
        wss = sample_set_from_csv(path)
        out = estimate(wss)
        # sum of weights is 2, count is 4
        assert out.log_z_hat == pytest.approx(np.log(0.5), abs=1e-12)
        assert out.i_hat[0] == pytest.approx(1.5, abs=1e-12)

    def test_self_normalised_mean_equals_ratio_form(self):
        bank = _bank(N=2, T=6)
        target = _standard_target()
        samples = draw_lower_samples(bank, 2, derive_rng(15))
        wss = weight_samples(target, bank, scheme("complete"), samples)
        out = estimate(wss, transform=lambda X: X ** 2)
        w = np.exp(wss.log_weights)
        direct = (w[:, None] * wss.samples ** 2).sum(axis=0) / w.sum()
        assert_allclose(out.i_hat, direct, atol=1e-12)
        # ratio identity: sum(w f) / (S * Z_hat) is the same number
        alt = (w[:, None] * wss.samples ** 2).sum(axis=0) / (
            wss.count * np.exp(out.log_z_hat)
        )
        assert_allclose(out.i_hat, alt, atol=1e-12)

    def test_json_dict_shape(self):
        wss = TestWeightedSampleSet()._uniform_set()
        out = estimate(wss, evals={"full": 50})
        d = out.to_json_dict()
        assert d["scheme"] == "standard"
        assert d["count"] == 50
        assert d["evals"] == {"full": 50}
        assert d["Z_hat"] == pytest.approx(np.exp(d["log_Z_hat"]))


class TestEquivalentProposalCheck:
    def test_moments_match_location_noise_plus_jitter(self):
        mean = np.array([1.0, -2.0])
        loc_cov = np.array([[4.0, 0.0], [0.0, 4.0]])

        def sampler(rng, size):
            return mean + rng.standard_normal((size, 2)) * 2.0

        report = equivalent_proposal_check(
            sampler, 1.5 ** 2 * np.eye(2), 200_000, derive_rng(16),
            expected_mean=mean, expected_location_cov=loc_cov,
        )
        assert_allclose(report["empirical_mean"], report["expected_mean"],
                        atol=0.05)
        assert_allclose(report["empirical_cov"], report["expected_cov"],
                        rtol=0.05, atol=0.05)


class TestSerialisation:
    def test_csv_round_trip_is_bitwise(self, tmp_path):
        bank = _bank(N=2, T=4)
        target = _standard_target()
        samples = draw_lower_samples(bank, 3, derive_rng(17))
        wss = weight_samples(target, bank, scheme("temporal"), samples)
        path = tmp_path / "set.csv"
        sample_set_to_csv(wss, path)
        back = sample_set_from_csv(path, scheme_kind="temporal")
        np.testing.assert_array_equal(back.samples, wss.samples)
        np.testing.assert_array_equal(back.log_weights, wss.log_weights)
        np.testing.assert_array_equal(back.chain_idx, wss.chain_idx)
        np.testing.assert_array_equal(back.step_idx, wss.step_idx)
        np.testing.assert_array_equal(back.draw_idx, wss.draw_idx)
        assert back.scheme == "temporal"


class TestBankConstruction:
    def test_post_step_states_by_default_conditioning_states_for_recycling(self):
        records = _run_chains(_standard_target, N=1, T=6)
        rec = records[0]
        fresh = build_bank(records, cov=np.eye(2))
        np.testing.assert_array_equal(fresh.locations[0], rec.states[1:])
        recycled = build_bank(records, use_initial_states=True)
        np.testing.assert_array_equal(recycled.locations[0], rec.states[:-1])

    def test_cov_fallback_and_override(self):
        records = _run_chains(_standard_target, N=2, T=4, sigma=1.2)
        bank = build_bank(records)
        assert_allclose(bank.covs[0], 1.2 ** 2 * np.eye(2))
        forced = build_bank(records, cov=2.0)
        assert_allclose(forced.covs[1], 4.0 * np.eye(2))

    def test_mismatched_chains_rejected(self):
        a = _run_chains(_standard_target, N=1, T=4)[0]
        b = _run_chains(_standard_target, N=1, T=6)[0]
        with pytest.raises(ValueError):
            build_bank([a, b])

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            build_bank([])

    def test_draw_count_validation(self):
        bank = _bank()
        with pytest.raises(ValueError):
            draw_lower_samples(bank, 0, derive_rng(0))
