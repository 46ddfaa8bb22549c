import subprocess
import sys

import numpy as np
import pytest

from ganlocal import minigen
from ganlocal.errors import ShapeMismatch

# Weight checksum of the default seed-0 build, recorded at first build and
# pinned: any change to the draw order or layer plan shows up here.
SEED0_CHECKSUM = "526ff8066e7b21ce4dcd09c54f7a916041b7fd2d6705b444293c044273f152ac"


def leaky(x):
    return np.where(x > 0, x, 0.2 * x)


class TestBuild:
    def test_same_seed_bit_identical(self):
        g1 = minigen.build_generator(minigen.GeneratorConfig(seed=7))
        g2 = minigen.build_generator(minigen.GeneratorConfig(seed=7))
        assert g1.weight_checksum() == g2.weight_checksum()
        assert np.array_equal(g1.const, g2.const)

    def test_different_seeds_differ(self):
        g1 = minigen.build_generator(minigen.GeneratorConfig(seed=0))
        g2 = minigen.build_generator(minigen.GeneratorConfig(seed=1))
        assert g1.weight_checksum() != g2.weight_checksum()

    def test_seed0_checksum_pinned(self, generator):
        assert generator.weight_checksum() == SEED0_CHECKSUM

    def test_style_biases_start_at_one(self, generator):
        for b in generator.style_b:
            assert np.all(b == 1.0)

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            minigen.GeneratorConfig(resolutions=(4, 16), channels=(8, 8))
        with pytest.raises(ValueError):
            minigen.GeneratorConfig(resolutions=(4, 8), channels=(8,))


class TestMapLatent:
    def test_deterministic(self, generator):
        z = generator.latent_from_seed(5)
        assert np.array_equal(generator.map_latent(z), generator.map_latent(z))

    def test_finite_for_large_inputs(self, generator):
        rng = np.random.default_rng(0)
        z = rng.normal(size=64).astype(np.float32)
        z = z / np.linalg.norm(z) * 100.0
        assert np.isfinite(generator.map_latent(z)).all()

    def test_hand_sized_matrix_algebra(self):
        cfg = minigen.GeneratorConfig(seed=2, latent_dim=2, resolutions=(4,), channels=(3,))
        g = minigen.build_generator(cfg)
        z = np.array([0.3, -1.2], dtype=np.float32)
        h = leaky(g.map_w1 @ z + g.map_b1)
        expected = leaky(g.map_w2 @ h + g.map_b2)
        assert np.allclose(g.map_latent(z), expected, atol=1e-7)


class TestStyles:
    def test_zero_w_gives_biases(self, generator):
        styles = generator.styles_from_w(np.zeros(64, dtype=np.float32))
        for l, sigma in styles.items():
            assert np.array_equal(sigma, generator.style_b[l])

    def test_affine_linearity(self, generator):
        rng = np.random.default_rng(3)
        w1 = rng.normal(size=64).astype(np.float32)
        w2 = rng.normal(size=64).astype(np.float32)
        a, b = 0.7, -1.3
        mixed = generator.styles_from_w(a * w1 + b * w2)
        s1 = generator.styles_from_w(w1)
        s2 = generator.styles_from_w(w2)
        bias = generator.styles_from_w(np.zeros(64, dtype=np.float32))
        for l in mixed:
            lin = a * (s1[l] - bias[l]) + b * (s2[l] - bias[l]) + bias[l]
            assert np.allclose(mixed[l], lin, atol=1e-4)

    def test_matches_matmul_oracle(self, generator):
        rng = np.random.default_rng(4)
        w = rng.normal(size=64).astype(np.float32)
        styles = generator.styles_from_w(w)
        for l in range(generator.config.num_layers):
            expected = generator.style_w[l].astype(np.float64) @ w.astype(np.float64) + 1.0
            assert np.abs(styles[l] - expected).max() < 1e-6


def forward_oracle(g: minigen.Generator, styles: dict) -> np.ndarray:
    """Straight-line scalar-loop forward pass for tiny plans."""
    cfg = g.config
    x = g.const.astype(np.float64).copy()
    cur = cfg.resolutions[0]
    for l in range(cfg.num_layers):
        if cfg.resolutions[l] > cur:
            x = x.repeat(2, axis=1).repeat(2, axis=2)
            cur = cfg.resolutions[l]
        ci, h, w = x.shape
        co = cfg.channels[l]
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="reflect")
        y = np.zeros((co, h, w))
        for o in range(co):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for c in range(ci):
                        for a in range(3):
                            for b in range(3):
                                acc += padded[c, i + a, j + b] * g.conv_w[l][o, c, a, b]
                    y[o, i, j] = acc + g.conv_b[l][o]
        for o in range(co):
            mu = y[o].mean()
            var = ((y[o] - mu) ** 2).mean()
            y[o] = (y[o] - mu) / np.sqrt(var + minigen.NORM_EPS)
            y[o] = y[o] * styles[l][o]
        y = np.where(y > 0, y, 0.2 * y)
        x = y
    rgb = np.einsum("oc,chw->ohw", g.rgb_w.astype(np.float64), x) + g.rgb_b[:, None, None]
    return np.clip(minigen.RGB_GAIN * rgb + minigen.RGB_OFFSET, 0.0, 1.0)


class TestSynthesize:
    def test_deterministic(self, generator):
        styles = generator.styles_from_w(generator.map_latent(generator.latent_from_seed(9)))
        r1 = generator.synthesize(styles, capture_layers=(0, 5))
        r2 = generator.synthesize(styles, capture_layers=(0, 5))
        assert np.array_equal(r1.image, r2.image)
        for l in (0, 5):
            assert np.array_equal(r1.captures[l].data, r2.captures[l].data)

    def test_convenience_path_equivalence(self, generator):
        z = generator.latent_from_seed(11)
        via_steps = generator.synthesize(
            generator.styles_from_w(generator.map_latent(z)), capture_layers=(5,)
        )
        via_render = generator.render(z, capture_layers=(5,))
        assert np.array_equal(via_steps.image, via_render.image)
        assert np.array_equal(via_steps.captures[5].data, via_render.captures[5].data)

    def test_matches_independent_forward_oracle(self, toy_generator):
        g = toy_generator
        z = g.latent_from_seed(1)
        styles = g.styles_from_w(g.map_latent(z))
        expected = forward_oracle(g, styles)
        got = g.synthesize(styles).image
        assert np.abs(got.astype(np.float64) - expected).max() < 1e-5

    def test_zero_style_at_last_layer_changes_image(self, toy_generator):
        g = toy_generator
        styles = g.styles_from_w(g.map_latent(g.latent_from_seed(2)))
        zeroed = dict(styles)
        zeroed[g.config.num_layers - 1] = np.zeros_like(styles[g.config.num_layers - 1])
        assert not np.array_equal(g.synthesize(styles).image, g.synthesize(zeroed).image)

    def test_capture_prefix_unchanged_when_late_style_changes(self, generator):
        styles = generator.styles_from_w(generator.map_latent(generator.latent_from_seed(3)))
        altered = dict(styles)
        altered[4] = styles[4] * 1.5
        layers = tuple(range(7))
        base = generator.synthesize(styles, capture_layers=layers)
        other = generator.synthesize(altered, capture_layers=layers)
        for l in range(4):
            assert np.array_equal(base.captures[l].data, other.captures[l].data)
        for l in range(4, 7):
            assert not np.array_equal(base.captures[l].data, other.captures[l].data)

    def test_capture_shapes_follow_plan(self, generator):
        styles = generator.styles_from_w(generator.map_latent(generator.latent_from_seed(4)))
        res = generator.synthesize(styles, capture_layers=tuple(range(7)))
        cfg = generator.config
        for l in range(7):
            n, c, h, w = res.captures[l].data.shape
            assert (c, h, w) == (cfg.channels[l], cfg.resolutions[l], cfg.resolutions[l])
        assert res.captures[cfg.base_layer].data.shape[2:] == (32, 32)

    def test_image_range_and_shape(self, generator):
        img = generator.render(generator.latent_from_seed(6)).image
        assert img.shape == (3, 32, 32)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_style_shape_mismatch(self, generator):
        styles = generator.styles_from_w(generator.map_latent(generator.latent_from_seed(1)))
        bad = dict(styles)
        bad[2] = bad[2][:10]
        with pytest.raises(ShapeMismatch):
            generator.synthesize(bad)
        incomplete = dict(styles)
        del incomplete[3]
        with pytest.raises(ShapeMismatch):
            generator.synthesize(incomplete)

    def test_batch_equals_single(self, generator):
        zs = np.stack([generator.latent_from_seed(s) for s in (1, 2)])
        batch = generator.render_batch(zs, capture_layers=(5,))
        for i in (0, 1):
            single = batch[i]
            assert single.image.shape == (3, 32, 32)
            assert single.captures[5].data.shape[0] == 1


class TestThreadCountDeterminism:
    def test_render_digest_stable_across_thread_counts(self):
        script = (
            "import hashlib, numpy as np\n"
            "from ganlocal import minigen\n"
            "g = minigen.build_generator()\n"
            "r = g.render(g.latent_from_seed(1), capture_layers=(5,))\n"
            "h = hashlib.sha256(r.image.tobytes())\n"
            "h.update(r.captures[5].data.tobytes())\n"
            "print(h.hexdigest())\n"
        )
        digests = set()
        for threads in ("1", "4"):
            out = subprocess.run(
                [sys.executable, "-c", script],
                capture_output=True,
                text=True,
                env={
                    "OMP_NUM_THREADS": threads,
                    "OPENBLAS_NUM_THREADS": threads,
                    "MKL_NUM_THREADS": threads,
                    "PATH": "/usr/bin:/bin:/usr/local/bin",
                },
                check=True,
            )
            digests.add(out.stdout.strip())
        assert len(digests) == 1
