"""A miniature deterministic style-based image generator.

The generator reproduces the structural mechanism of the big style-based
models at desk scale: a mapping network turns a latent ``z`` into an
intermediate latent ``w``, per-layer affine maps turn ``w`` into per-channel
style coefficients, and synthesis starts from a learned constant image whose
features are normalized and re-scaled by the style at every layer. There is
no training; all weights come from one seeded stream, so a seed fully
determines every output bit.

Within a layer the order is: (optional 2x nearest upsample) -> 3x3
convolution -> per-channel normalization -> style scaling -> leaky rectifier.
The captured activation at a layer therefore has exactly one style
coefficient per channel, which is what lets channel attributions drive style
edits layer by layer.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch
from .ndio import ActivationTensor

LEAKY_SLOPE = 0.2
WEIGHT_STD = 0.02
NORM_EPS = 1e-8
# Affine map from raw RGB-head output into [0,1]; the gain keeps typical
# outputs inside the clamp so style changes stay visible in pixel space.
RGB_GAIN = 2.0
RGB_OFFSET = 0.5

DEFAULT_RESOLUTIONS = (4, 8, 8, 16, 16, 32, 32)
DEFAULT_CHANNELS = (64, 64, 64, 64, 48, 48, 32)

# A style set maps layer index -> per-channel scaling coefficients.
StyleSet = dict[int, np.ndarray]


@dataclass(frozen=True)
class GeneratorConfig:
    """Seed and layer plan. The defaults give a 3x32x32 output.

    ``resolutions`` and ``channels`` may be overridden to build small test
    plans; resolutions must start at 4 and may only repeat or double.
    """

    seed: int = 0
    latent_dim: int = 64
    resolutions: tuple[int, ...] = DEFAULT_RESOLUTIONS
    channels: tuple[int, ...] = DEFAULT_CHANNELS

    def __post_init__(self) -> None:
        if len(self.resolutions) != len(self.channels) or not self.resolutions:
            raise ValueError("layer plan needs matching, non-empty resolution/channel tuples")
        prev = self.resolutions[0]
        for r in self.resolutions[1:]:
            if r not in (prev, prev * 2):
                raise ValueError(f"resolution {r} must repeat or double {prev}")
            prev = r

    @property
    def num_layers(self) -> int:
        return len(self.resolutions)

    @property
    def base_layer(self) -> int:
        """Index of the first layer at the output resolution."""
        return self.resolutions.index(self.resolutions[-1])

    @property
    def output_size(self) -> int:
        return self.resolutions[-1]


@dataclass(frozen=True, eq=False)
class RenderResult:
    """One generated image in [0,1] plus requested raw activation captures."""

    image: np.ndarray
    captures: dict[int, ActivationTensor]


@dataclass(frozen=True, eq=False)
class BatchRenderResult:
    images: np.ndarray
    captures: dict[int, ActivationTensor]

    def __getitem__(self, i: int) -> RenderResult:
        caps = {
            l: ActivationTensor(a.data[i : i + 1], layer_id=l)
            for l, a in self.captures.items()
        }
        return RenderResult(image=self.images[i], captures=caps)


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    out = np.einsum("ncijab,ocab->noij", win, w, optimize=True)
    return (out + b[None, :, None, None]).astype(np.float32)


class Generator:
    """Immutable synthesis network; all methods are pure functions."""

    def __init__(self, config: GeneratorConfig):
        self.config = config
        rng = np.random.Generator(np.random.PCG64(config.seed))

        def draw(*shape: int) -> np.ndarray:
            a = (rng.standard_normal(shape) * WEIGHT_STD).astype(np.float32)
            a.flags.writeable = False
            return a

        d = config.latent_dim
        ch = config.channels
        # Fixed traversal order: constant input, mapping, per-layer conv and
        # style weights, RGB head. Changing it changes every seed's output.
        self.const = draw(ch[0], config.resolutions[0], config.resolutions[0])
        self.map_w1 = draw(d, d)
        self.map_b1 = draw(d)
        self.map_w2 = draw(d, d)
        self.map_b2 = draw(d)
        self.conv_w: list[np.ndarray] = []
        self.conv_b: list[np.ndarray] = []
        self.style_w: list[np.ndarray] = []
        self.style_b: list[np.ndarray] = []
        in_ch = ch[0]
        for l in range(config.num_layers):
            self.conv_w.append(draw(ch[l], in_ch, 3, 3))
            self.conv_b.append(draw(ch[l]))
            self.style_w.append(draw(ch[l], d))
            bias = np.ones(ch[l], dtype=np.float32)
            bias.flags.writeable = False
            self.style_b.append(bias)
            in_ch = ch[l]
        self.rgb_w = draw(3, ch[-1])
        self.rgb_b = draw(3)

    def weight_checksum(self) -> str:
        """SHA-256 over all weights in traversal order; a regression anchor."""
        h = hashlib.sha256()
        for a in self._weights():
            h.update(a.tobytes())
        return h.hexdigest()

    def _weights(self):
        yield self.const
        yield from (self.map_w1, self.map_b1, self.map_w2, self.map_b2)
        for l in range(self.config.num_layers):
            yield self.conv_w[l]
            yield self.conv_b[l]
            yield self.style_w[l]
            yield self.style_b[l]
        yield self.rgb_w
        yield self.rgb_b

    def latent_from_seed(self, seed: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.standard_normal(self.config.latent_dim).astype(np.float32)

    def map_latent(self, z: np.ndarray) -> np.ndarray:
        """Two-layer perceptron z -> w, leaky rectifier after each layer."""
        z2 = np.atleast_2d(np.asarray(z, dtype=np.float32))
        h = _leaky(z2 @ self.map_w1.T + self.map_b1)
        w = _leaky(h @ self.map_w2.T + self.map_b2)
        return w[0] if np.asarray(z).ndim == 1 else w

    def styles_from_w(self, w: np.ndarray) -> StyleSet:
        """Per-layer affine maps of w; biases start at 1 so w=0 gives sigma=1."""
        return {
            l: (np.asarray(w, dtype=np.float32) @ self.style_w[l].T + self.style_b[l])
            for l in range(self.config.num_layers)
        }

    def _check_styles(self, batch: dict[int, np.ndarray], n: int) -> None:
        for l, c in enumerate(self.config.channels):
            if l not in batch:
                raise ShapeMismatch(f"style set is missing layer {l}")
            if batch[l].shape != (n, c):
                raise ShapeMismatch(
                    f"layer {l} style has shape {batch[l].shape}, expected ({n}, {c})"
                )

    def synthesize(
        self, styles: StyleSet, capture_layers: tuple[int, ...] = ()
    ) -> RenderResult:
        batch = {l: np.asarray(s, dtype=np.float32)[None, :] for l, s in styles.items()}
        res = self.synthesize_batch(batch, capture_layers)
        return res[0]

    def synthesize_batch(
        self,
        styles: dict[int, np.ndarray] | list[StyleSet],
        capture_layers: tuple[int, ...] = (),
    ) -> BatchRenderResult:
        """Run the synthesis stack for a batch of style sets.

        Samples are independent; rendering alone or inside any batch gives
        bit-identical results.
        """
        if isinstance(styles, list):
            styles = {
                l: np.stack([np.asarray(s[l], dtype=np.float32) for s in styles])
                for l in range(self.config.num_layers)
            }
        n = next(iter(styles.values())).shape[0]
        self._check_styles(styles, n)

        cfg = self.config
        x = np.broadcast_to(self.const[None], (n, *self.const.shape)).astype(np.float32)
        captures: dict[int, ActivationTensor] = {}
        cur_res = cfg.resolutions[0]
        for l in range(cfg.num_layers):
            if cfg.resolutions[l] > cur_res:
                x = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
                cur_res = cfg.resolutions[l]
            x = _conv3x3(x, self.conv_w[l], self.conv_b[l])
            mu = np.mean(x, axis=(2, 3), dtype=np.float64, keepdims=True)
            var = np.mean(
                (x.astype(np.float64) - mu) ** 2, axis=(2, 3), keepdims=True
            )
            scale = (1.0 / np.sqrt(var + NORM_EPS)).astype(np.float32)
            x = (x - mu.astype(np.float32)) * scale
            x = x * styles[l][:, :, None, None]
            x = _leaky(x)
            if l in capture_layers:
                captures[l] = ActivationTensor(x.copy(), layer_id=l)
        rgb = np.einsum("nchw,oc->nohw", x, self.rgb_w, optimize=True)
        rgb = rgb + self.rgb_b[None, :, None, None]
        images = np.clip(RGB_GAIN * rgb + RGB_OFFSET, 0.0, 1.0).astype(np.float32)
        return BatchRenderResult(images=images, captures=captures)

    def render(self, z: np.ndarray, capture_layers: tuple[int, ...] = ()) -> RenderResult:
        """Convenience path: map z, derive styles, synthesize."""
        return self.synthesize(self.styles_from_w(self.map_latent(z)), capture_layers)

    def render_batch(
        self,
        zs: np.ndarray,
        capture_layers: tuple[int, ...] = (),
        chunk: int = 32,
    ) -> BatchRenderResult:
        """Render many latents, chunked to bound peak memory."""
        zs = np.asarray(zs, dtype=np.float32)
        images = []
        caps: dict[int, list[np.ndarray]] = {l: [] for l in capture_layers}
        for start in range(0, zs.shape[0], chunk):
            w = self.map_latent(zs[start : start + chunk])
            batch = {
                l: w @ self.style_w[l].T + self.style_b[l]
                for l in range(self.config.num_layers)
            }
            part = self.synthesize_batch(batch, capture_layers)
            images.append(part.images)
            for l in capture_layers:
                caps[l].append(part.captures[l].data)
        return BatchRenderResult(
            images=np.concatenate(images),
            captures={
                l: ActivationTensor(np.concatenate(caps[l]), layer_id=l)
                for l in capture_layers
            },
        )


def build_generator(config: GeneratorConfig | None = None) -> Generator:
    return Generator(config or GeneratorConfig())
