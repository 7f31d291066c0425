import numpy as np
import pytest

from specgan.cascade_gan import (
    GeneratorStack,
    NumericalAbort,
    PartitionError,
    SmvDataset,
    SpatialRegularizer,
    TrainConfig,
    condition_indices,
    condition_vector,
    discriminator_step,
    generator_param_count,
    load_checkpoint,
    partition_bands,
    regularizer_finetune,
    sample_fakes,
    save_checkpoint,
    stack_param_count,
    synthesize_smv,
    train,
    train_backward_pass,
    train_forward_pass,
    train_generator,
    transfer_weights,
)
from specgan.datasets import ellipsoid_meshes, encode_meshes
from specgan.feature_net import FeatureExtractor
from specgan.sh_core import degree_order_arrays, lm_index, num_coeffs


def small_config(**kw):
    base = dict(bandlimit=4, t_prime=2, noise_dim=8, cond_dim=10, hidden=16, disc_hidden=16,
                batch=8, reg_batch=3, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def ellipsoids():
    meshes, _ = ellipsoid_meshes(30, np.random.default_rng(0))
    smvs, clouds = encode_meshes(meshes, 4)
    return SmvDataset.from_smvs(smvs), clouds


class TestPartition:
    def test_m100_four_bands(self):
        p = partition_bands(100, 4)
        assert p.sizes() == [1326, 1275, 3825, 3775]
        assert sum(p.sizes()) == 10201

    def test_m100_ranges_by_enumeration(self):
        p = partition_bands(100, 4)
        ls, ms = degree_order_arrays(100)
        expected = [
            np.flatnonzero((ls <= 50) & (ms <= 0)),
            np.flatnonzero((ls <= 50) & (ms > 0)),
            np.flatnonzero((ls > 50) & (ms <= 0)),
            np.flatnonzero((ls > 50) & (ms > 0)),
        ]
        for band, exp in zip(p.bands, expected):
            assert np.array_equal(band, exp)

    def test_m1(self):
        p = partition_bands(1, 2)
        assert [b.tolist() for b in p.bands] == [
            [lm_index(0, 0), lm_index(1, -1), lm_index(1, 0)], [lm_index(1, 1)]]

    @pytest.mark.parametrize("m,t", [(1, 2), (5, 2), (8, 4), (9, 6), (20, 8)])
    def test_cover(self, m, t):
        allidx = np.concatenate(partition_bands(m, t).bands)
        assert len(allidx) == num_coeffs(m)
        assert np.array_equal(np.sort(allidx), np.arange(num_coeffs(m)))

    def test_invalid(self):
        with pytest.raises(PartitionError):
            partition_bands(8, 3)
        with pytest.raises(PartitionError):
            partition_bands(1, 4)

    def test_text_roundtrip(self):
        p = partition_bands(12, 4)
        assert type(p).from_text(p.to_text()).sizes() == p.sizes()


class TestConditioning:
    def test_identity_for_100(self):
        x = np.arange(100.0)
        assert np.array_equal(condition_vector(x), x)

    def test_floor_spacing(self):
        assert np.array_equal(condition_indices(1326), (np.arange(100) * 1326) // 100)

    def test_cyclic_padding(self):
        x = np.arange(40.0)
        out = condition_vector(x)
        assert out.shape == (100,)
        assert np.array_equal(out, np.concatenate([x, x, x[:20]]))


class TestArchitecture:
    def test_dims(self):
        cfg = TrainConfig(bandlimit=6, t_prime=4)
        st = GeneratorStack(cfg)
        assert st.total == 7
        assert st.G(1).in_dim == 200
        for gen in range(2, 8):
            assert st.G(gen).in_dim == 300
            assert st.G(gen).out_dim == st.band_size(gen)
        assert [l.activation for l in st.G(3).layers] == ["relu", "relu", "tanh"]
        assert [l.out_dim for l in st.G(3).layers][:2] == [512, 512]

    def test_param_formula(self):
        cfg = TrainConfig(bandlimit=6, t_prime=4)
        st = GeneratorStack(cfg)
        for gen in range(1, 8):
            B = st.band_size(gen)
            assert st.G(gen).num_params() == generator_param_count(st.G(gen).in_dim, B)
        assert st.generator_param_count() == stack_param_count(6, 4)

    def test_scalability(self):
        ratio = stack_param_count(100, 4) / stack_param_count(15, 4)
        assert 4 * 100**2 / (4 * 15**2) == pytest.approx(44.44, abs=0.01)
        assert ratio < 5

    def test_config_text(self, tmp_path):
        cfg = small_config(lr_forward=3e-4)
        assert TrainConfig.from_text(cfg.to_text()) == cfg
        assert TrainConfig.from_text("i = 2\nj = 7\np = 1\n").gen_iters == 7
        with pytest.raises(ValueError):
            TrainConfig.from_text("colour = red\n")
        with pytest.raises(ValueError):
            TrainConfig.from_text("t_prime = 3\n")


class TestDataset:
    def test_normalized_range(self, ellipsoids):
        ds, _ = ellipsoids
        assert np.abs(ds.normalized).max() <= 1 / 1.1 + 1e-12
        np.testing.assert_allclose(ds.denormalize(ds.normalized), ds.coeffs, rtol=1e-15)

    def test_zero_coefficient_scale(self):
        ds = SmvDataset(np.zeros((3, 4)))
        assert np.all(ds.scale == 1.0)

    def test_mixed_bandlimits(self):
        from specgan.sh_core import SMV

        with pytest.raises(ValueError):
            SmvDataset.from_smvs([SMV.zeros(1), SMV.zeros(2)])


class TestTraining:
    def test_zero_iters_unchanged(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        before = [p.copy() for g in st.generators for p in g.params()]
        train_forward_pass(st, ds, 0)
        after = [p for g in st.generators for p in g.params()]
        assert all(np.array_equal(a, b) for a, b in zip(before, after))

    def test_update_ratio(self, ellipsoids, monkeypatch):
        import specgan.cascade_gan as cg

        calls = []
        orig_d, orig_g = cg.discriminator_step, cg.generator_step
        monkeypatch.setattr(cg, "discriminator_step", lambda *a, **k: calls.append("d") or orig_d(*a, **k))
        monkeypatch.setattr(cg, "generator_step", lambda *a, **k: calls.append("g") or orig_g(*a, **k))
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        train_generator(st, 1, ds, 4)
        assert "".join(calls) == "dddg" * 4

    def test_toy_constant_band(self):
        c = np.array([2.0, 0.3, -0.5, 0.7])
        ds = SmvDataset(np.tile(c, (50, 1)))
        st = GeneratorStack(TrainConfig(bandlimit=1, t_prime=2, hidden=64, disc_hidden=64), ds.scale)
        train_generator(st, 2, ds, 2000)
        out = sample_fakes(st, 2, ds, 200)
        assert abs(out.mean() - ds.normalized[0, 3]) < 0.1

    def test_discriminator_separates(self, ellipsoids):
        from scipy.stats import mannwhitneyu

        ds, _ = ellipsoids
        st = GeneratorStack(TrainConfig(bandlimit=4, seed=1), ds.scale)
        for _ in range(200):
            discriminator_step(st, 1, ds)
        real = st.D(1)(ds.normalized[:, st.partition.bands[0]])[:, 0]
        fake = st.D(1)(sample_fakes(st, 1, ds, 30))[:, 0]
        auc = mannwhitneyu(real, fake).statistic / (len(real) * len(fake))
        assert auc > 0.9

    def test_transfer(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(t_prime=4, bandlimit=4), ds.scale)
        train_forward_pass(st, ds, 2)
        transfer_weights(st)
        first = [p.copy() for p in st.G(6).params()]
        transfer_weights(st)
        assert all(np.array_equal(a, b) for a, b in zip(first, st.G(6).params()))
        # G_6 <- G_2: same input width, identical outputs
        x = np.random.default_rng(0).normal(size=(5, st.input_dim(2)))
        assert np.array_equal(st.G(6)(x), st.G(2)(x))
        # G_5 <- G_1: conditioning columns start at zero
        z = np.random.default_rng(1).normal(size=(5, 8))
        cond = np.random.default_rng(2).normal(size=(5, 10))
        assert np.array_equal(st.G(5)(np.hstack([z, cond])), st.G(1)(z))
        assert np.array_equal(st.D(5)(np.ones((1, st.band_size(1)))), st.D(1)(np.ones((1, st.band_size(1)))))

    def test_transfer_t2(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        transfer_weights(st)
        assert st.total == 3
        np.testing.assert_array_equal(st.G(3).layers[-1].weights, st.G(1).layers[-1].weights)

    def test_backward_lr_zero(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(lr_backward=0.0), ds.scale)
        train_forward_pass(st, ds, 2)
        transfer_weights(st)
        before = [p.copy() for p in st.G(3).params()]
        train_backward_pass(st, ds, 3)
        assert all(np.array_equal(a, b) for a, b in zip(before, st.G(3).params()))

    def test_chain_length(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(t_prime=4), ds.scale)
        gens = st.assembly_generators()
        assert [g for g, _ in gens] == [4, 5, 6, 7]
        assert sorted(b for _, b in gens) == [1, 2, 3, 4]
        # synthesis runs the whole chain but only T' generators contribute
        assert len(gens) == st.t_prime

    def test_synthesis_deterministic_and_complete(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        a = synthesize_smv(st, 4, seed=11)
        b = synthesize_smv(st, 4, seed=11)
        assert all(np.array_equal(x.coeffs, y.coeffs) for x, y in zip(a, b))
        assert a[0].coeffs.shape == (num_coeffs(4),)
        assert np.all(np.abs(np.stack([s.coeffs for s in a])) <= st.scale + 1e-15)

    @pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
    def test_nan_aborts(self, ellipsoids):
        ds, _ = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        st.D(1).layers[-1].bias[:] = np.nan
        with pytest.raises(NumericalAbort):
            discriminator_step(st, 1, ds)


class TestRegularizer:
    def _setup(self, ellipsoids):
        ds, clouds = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        fe = FeatureExtractor(feature_dim=12, hidden=(8, 12), rng=np.random.default_rng(0)).freeze()
        return st, fe, SpatialRegularizer(st, fe, clouds[:5])

    def test_requires_frozen(self, ellipsoids):
        ds, clouds = ellipsoids
        st = GeneratorStack(small_config(), ds.scale)
        with pytest.raises(ValueError):
            SpatialRegularizer(st, FeatureExtractor(feature_dim=4), clouds[:2])

    def test_p_zero(self, ellipsoids):
        st, fe, _ = self._setup(ellipsoids)
        before = [p.copy() for g in st.generators for p in g.params()]
        regularizer_finetune(st, fe, ellipsoids[1][:3], 0)
        assert all(np.array_equal(a, p) for a, p in zip(before, (p for g in st.generators for p in g.params())))

    def test_identical_features_zero_loss(self, ellipsoids):
        st, fe, reg = self._setup(ellipsoids)
        x = np.stack([s.coeffs for s in synthesize_smv(st, 2, seed=0)]) / st.scale
        radii = reg.basis.reconstruct(x * st.scale)
        targets = np.stack([fe.extract(reg.directions[r > 0] * r[r > 0, None]) for r in radii])
        loss, grad = reg.loss_and_grads(x, targets)
        assert loss == 0.0
        assert np.all(grad == 0)

    def test_full_chain_finite_difference(self, ellipsoids):
        st, fe, reg = self._setup(ellipsoids)
        targets = reg.real_features[:3]

        def loss_and_grads():
            outputs, caches = st.run_chain(st.total, 3, keep_cache=True, rng=np.random.default_rng(5))
            x = st.assemble(outputs)
            loss, gx = reg.loss_and_grads(x, targets)
            return loss, st.backprop_chain(outputs, caches, gx)

        _, grads = loss_and_grads()
        rng = np.random.default_rng(6)
        analytic, numeric = [], []
        for gen in (1, 2, 3):
            for k, p in enumerate(st.G(gen).params()):
                for _ in range(3):
                    idx = tuple(rng.integers(0, s) for s in p.shape)
                    old = p[idx]
                    p[idx] = old + 1e-6
                    up = loss_and_grads()[0]
                    p[idx] = old - 1e-6
                    down = loss_and_grads()[0]
                    p[idx] = old
                    numeric.append((up - down) / 2e-6)
                    analytic.append(grads[gen][k][idx])
        analytic, numeric = np.array(analytic), np.array(numeric)
        assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-3

    def test_gradient_clip(self, ellipsoids):
        ds, clouds = ellipsoids
        st = GeneratorStack(small_config(grad_clip=1e-8), ds.scale)
        fe = FeatureExtractor(feature_dim=12, hidden=(8, 12), rng=np.random.default_rng(0)).freeze()
        reg = SpatialRegularizer(st, fe, clouds[:5])
        reg.step()
        assert reg.clipped == 1


class TestCheckpoint:
    def test_roundtrip_and_resume(self, ellipsoids, tmp_path):
        ds, _ = ellipsoids
        cfg = small_config(gen_iters=3, reg_iters=0, outer_iters=2)
        full = train(GeneratorStack(cfg, ds.scale), ds)

        half_cfg = small_config(gen_iters=3, reg_iters=0, outer_iters=1)
        half = train(GeneratorStack(half_cfg, ds.scale), ds, checkpoint_dir=tmp_path)
        resumed = load_checkpoint(tmp_path, cfg)
        assert resumed.completed_outer == 1
        train(resumed, ds)
        for a, b in zip(full.generators + full.discriminators, resumed.generators + resumed.discriminators):
            for p, q in zip(a.params(), b.params()):
                assert np.array_equal(p, q)
        assert half.completed_outer == 1
        for name in ("gen_1.nnw", "disc_3.nnw", "partition.txt", "norm.txt", "config.txt"):
            assert (tmp_path / name).exists()

    def test_partition_mismatch(self, ellipsoids, tmp_path):
        ds, _ = ellipsoids
        save_checkpoint(GeneratorStack(small_config(), ds.scale), tmp_path)
        (tmp_path / "partition.txt").write_text("bandlimit=4\nt_prime=4\n")
        with pytest.raises(PartitionError):
            load_checkpoint(tmp_path)
