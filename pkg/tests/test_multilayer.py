import numpy as np
import pytest
from scipy.special import expit

import ormachine as om
from ormachine import multilayer, predict


def hand_built_stack(u0, lam0, u1=None, lam1=None):
    """Stack with fixed hard codes and dispersions, for propagation tests."""
    widths = [u0.shape[1]] + ([u1.shape[1]] if u1 is not None else [])
    arch = om.Architecture(layer_widths=widths)
    cfg = om.SamplerConfig()

    def summary(u_bits, lam, n_rows):
        width = u_bits.shape[1]
        z = np.zeros((n_rows, width))
        return om.PosteriorSummary(
            z_mean=z,
            u_mean=u_bits.astype(np.float64),
            z_map=z.astype(np.int8),
            u_map=u_bits.astype(np.int8),
            lambda_final=om.Dispersion(lam),
            lambda_trace=np.array([lam]),
            n_samples=1,
            config=cfg,
        )

    summaries = [summary(u0, lam0, 4)]
    if u1 is not None:
        summaries.append(summary(u1, lam1, 4))
    dummy = om.ObservedMatrix(np.zeros((4, u0.shape[0]), dtype=np.int8))
    return om.LayerStack(
        layers=[],
        architecture=arch,
        schedule=om.StackSchedule(),
        summaries=summaries,
        data=dummy,
    )


class TestArchitecture:
    def test_validation(self):
        with pytest.raises(ValueError):
            om.Architecture(layer_widths=[])
        with pytest.raises(ValueError):
            om.Architecture(layer_widths=[3, 0])
        with pytest.raises(ValueError):
            om.Architecture(layer_widths=[3], code_priors=[0.1, 0.2])

    def test_prior_coercion(self):
        arch = om.Architecture(layer_widths=[3, 2], code_priors=[0.1, om.BernoulliPrior(0.2)])
        assert all(isinstance(p, om.BernoulliPrior) for p in arch.code_priors)
        assert arch.depth == 2


class TestTrainStack:
    def test_single_layer_reduces_to_flat_sampler(self):
        x_clean, _, _ = om.gen_random_boolean(om.SyntheticSpec(15, 12, 2, seed=10))
        x = om.ObservedMatrix.from_binary(x_clean)
        flat = om.run(x, 2, om.SamplerConfig(burn_in=30, samples=40, seed=11))
        stack = om.train_stack(
            x,
            om.Architecture(layer_widths=[2]),
            om.StackSchedule(burn_in=30, samples=40, seed=11),
        )
        assert stack.depth == 1
        s = stack.summaries[0]
        assert s.z_mean.tobytes() == flat.z_mean.tobytes()
        assert s.u_mean.tobytes() == flat.u_mean.tobytes()
        assert np.array_equal(s.lambda_trace, flat.lambda_trace)
        assert s.lambda_final.value == flat.lambda_final.value

    def test_shape_telescoping(self):
        x_clean, _, _ = om.gen_random_boolean(om.SyntheticSpec(20, 15, 4, seed=1))
        stack = om.train_stack(
            om.ObservedMatrix.from_binary(x_clean),
            om.Architecture(layer_widths=[4, 3, 2]),
            om.StackSchedule(burn_in=5, samples=5, seed=1),
        )
        assert stack.layers[0].x.shape == (20, 15)
        assert stack.layers[1].x.shape == (20, 4)
        assert stack.layers[2].x.shape == (20, 3)
        for k, width in enumerate([4, 3, 2]):
            assert stack.summaries[k].z_mean.shape == (20, width)

    def test_all_missing_reverts_to_priors(self):
        x = om.ObservedMatrix(np.zeros((8, 6), dtype=np.int8))
        arch = om.Architecture(layer_widths=[2, 2], code_priors=[0.5, 0.3])
        stack = om.train_stack(x, arch, om.StackSchedule(burn_in=30, samples=1500, seed=2))
        bottom, top = stack.summaries
        # bottom latents see no data; their conditional mixes the prior with
        # the (weak) message from the upper layer, so means hover near 1/2
        assert np.abs(bottom.z_mean - 0.5).max() < 0.15
        assert np.abs(bottom.u_mean - 0.5).max() < 0.15
        assert np.abs(top.u_mean - 0.3).mean() < 0.1

    def test_stack_not_worse_than_bottom_alone_on_training_reconstruction(self):
        x_clean, _, _ = om.gen_random_boolean(om.SyntheticSpec(40, 30, 3, seed=3))
        noisy = om.apply_bitflip_noise(x_clean, 0.1, seed=3)
        x = om.ObservedMatrix.from_binary(noisy)
        flat = om.run(x, 3, om.SamplerConfig(burn_in=60, samples=60, seed=4))
        stack = om.train_stack(
            x,
            om.Architecture(layer_widths=[3, 3]),
            om.StackSchedule(burn_in=60, samples=60, seed=4),
        )
        recon_flat = predict.map_reconstruction(
            flat.z_mean, flat.u_mean, flat.lambda_final.value
        )
        b = stack.summaries[0]
        recon_stack = predict.map_reconstruction(b.z_mean, b.u_mean, b.lambda_final.value)
        err_flat = om.reconstruction_error(noisy, recon_flat)
        err_stack = om.reconstruction_error(noisy, recon_stack)
        assert err_stack <= err_flat + 0.01

    def test_rejects_inconsistent_architecture(self):
        x = om.ObservedMatrix(np.ones((4, 4), dtype=np.int8))
        with pytest.raises(ValueError):
            om.train_stack(x, om.Architecture(layer_widths=[2], code_priors=[0.1, 0.2]))


class TestFeedForward:
    def test_single_layer_high_dispersion_recovers_code(self):
        rng = np.random.default_rng(5)
        u0 = rng.integers(0, 2, (9, 3), dtype=np.int8)
        stack = hand_built_stack(u0, om.LAMBDA_MAX)
        for l in range(3):
            out = om.feed_forward(stack, 1, l)
            assert np.abs(out - u0[:, l]).max() < 1e-5

    def test_all_zero_activation_gives_noise_floor(self):
        rng = np.random.default_rng(6)
        u0 = rng.integers(0, 2, (7, 2), dtype=np.int8)
        lam = 1.2
        stack = hand_built_stack(u0, lam)
        out = om.feed_forward(stack, 1, activation=np.zeros(2))
        assert np.allclose(out, 1 - expit(lam))

    def test_two_layer_chain_matches_monte_carlo(self):
        rng = np.random.default_rng(7)
        u0 = rng.integers(0, 2, (6, 4), dtype=np.int8)  # bottom codes: 6 features, width 4
        u1 = rng.integers(0, 2, (4, 2), dtype=np.int8)  # upper codes: 4 latents, width 2
        lam0, lam1 = 1.8, 1.1
        stack = hand_built_stack(u0, lam0, u1, lam1)
        for l in range(2):
            out = om.feed_forward(stack, 2, l)
            # forward-simulate the generative chain
            sig1, sig0 = expit(lam1), expit(lam0)
            p_z1 = np.where(u1[:, l] == 1, sig1, 1 - sig1)
            draws = rng.random((100_000, 4)) < p_z1
            product = (draws[:, None, :] & (u0[None, :, :] == 1)).any(axis=2)
            sim = (sig0 * product + (1 - sig0) * (~product)).mean(axis=0)
            assert np.abs(out - sim).max() <= 0.02

    def test_output_within_dispersion_bounds(self):
        rng = np.random.default_rng(8)
        u0 = rng.integers(0, 2, (11, 3), dtype=np.int8)
        lam = 0.9
        stack = hand_built_stack(u0, lam)
        out = om.feed_forward(stack, 1, activation=rng.random(3))
        assert (out >= 1 - expit(lam) - 1e-12).all()
        assert (out <= expit(lam) + 1e-12).all()

    def test_index_errors(self):
        u0 = np.ones((3, 2), dtype=np.int8)
        stack = hand_built_stack(u0, 1.0)
        with pytest.raises(IndexError):
            om.feed_forward(stack, 2, 0)
        with pytest.raises(IndexError):
            om.feed_forward(stack, 1, 5)


class TestImpute:
    def test_no_missing_cells_gives_empty_report(self):
        x_clean, _, _ = om.gen_random_boolean(om.SyntheticSpec(10, 8, 2, seed=9))
        x = om.ObservedMatrix.from_binary(x_clean)
        stack = om.train_stack(
            x, om.Architecture(layer_widths=[2]), om.StackSchedule(burn_in=5, samples=5, seed=9)
        )
        report = om.impute(stack)
        assert len(report.cells) == 0
        assert len(report.probabilities) == 0

    def test_held_out_digit_cells_imputed_confidently(self):
        digits = om.calculator_digits(copies=5)
        split = om.mask_random(digits.matrix, 0.7, seed=10)
        stack = om.train_stack(
            split.observed,
            om.Architecture(layer_widths=[7], code_priors=[0.1]),
            om.StackSchedule(burn_in=100, samples=100, seed=10),
        )
        report = om.impute(stack)
        ones = split.hidden_truths == 1
        assert report.probabilities[ones].mean() >= 0.9

    def test_shape_mismatch_rejected(self):
        x_clean, _, _ = om.gen_random_boolean(om.SyntheticSpec(10, 8, 2, seed=11))
        x = om.ObservedMatrix.from_binary(x_clean)
        stack = om.train_stack(
            x, om.Architecture(layer_widths=[2]), om.StackSchedule(burn_in=5, samples=5, seed=11)
        )
        with pytest.raises(ValueError, match="shape"):
            om.impute(stack, om.ObservedMatrix(np.zeros((3, 3), dtype=np.int8)))
