"""Project state shared by the CLI and the HTTP service.

A project directory holds the generator configuration, rendered samples with
their captured activations and styles (as array archives, so externally
exported runs can be dropped in), the semantic catalog, and edit outputs:

    project.json            generator seed, layer/K choices, sample count
    samples/sample_####.png rendered sample images
    arrays/captures.zip     capture_l<k>: N x C x H x W activations per layer
    arrays/styles.zip       sigma_l<k>:   N x C style coefficients per layer
    arrays/latents.npy      N x latent_dim sampled latents
    catalog/                manifest.json + arrays.zip
    out/                    edit and sweep outputs
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import editor, metrics, semantics
from .errors import GanLocalError
from .minigen import Generator, GeneratorConfig, StyleSet, build_generator
from .ndio import (
    ActivationTensor,
    read_archive,
    read_array_file,
    standardize_with,
    write_archive,
    write_array_file,
)

DEFAULT_SAMPLE_COUNT = 200
DEFAULT_K = 15


@dataclass(frozen=True)
class ProjectConfig:
    data_dir: str
    generator_seed: int = 0
    base_layer: int | None = None
    k: int = DEFAULT_K
    sample_count: int = DEFAULT_SAMPLE_COUNT
    cluster_seed: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < self.k:
            raise ValueError("sample count must be at least k")


def save_config(config: ProjectConfig, path: Path) -> None:
    path.write_text(json.dumps(asdict(config), sort_keys=True, indent=2) + "\n")


def load_config(path: Path) -> ProjectConfig:
    return ProjectConfig(**json.loads(path.read_text()))


class Project:
    """Lazy, cached access to one project directory."""

    def __init__(self, config: ProjectConfig):
        self.config = config
        self.root = Path(config.data_dir)
        self._generator: Generator | None = None
        self._captures: dict[int, ActivationTensor] | None = None
        self._styles: dict[int, np.ndarray] | None = None
        self._latents: np.ndarray | None = None
        self._images: np.ndarray | None = None
        self._catalog: semantics.SemanticCatalog | None = None

    # -- paths ------------------------------------------------------------
    @property
    def arrays_dir(self) -> Path:
        return self.root / "arrays"

    @property
    def samples_dir(self) -> Path:
        return self.root / "samples"

    @property
    def catalog_dir(self) -> Path:
        return self.root / "catalog"

    @property
    def out_dir(self) -> Path:
        return self.root / "out"

    # -- generator and samples ---------------------------------------------
    @property
    def generator(self) -> Generator:
        if self._generator is None:
            self._generator = build_generator(GeneratorConfig(seed=self.config.generator_seed))
        return self._generator

    @property
    def base_layer(self) -> int:
        if self.config.base_layer is not None:
            return self.config.base_layer
        return self.generator.config.base_layer

    def generate(self, write_images: bool = True) -> None:
        """Render the sample batch and export latents/styles/captures."""
        gen = self.generator
        n = self.config.sample_count
        rng = np.random.Generator(np.random.PCG64(gen.config.seed))
        latents = rng.standard_normal((n, gen.config.latent_dim)).astype(np.float32)
        layers = tuple(range(gen.config.num_layers))
        batch = gen.render_batch(latents, capture_layers=layers)
        w = gen.map_latent(latents)
        styles = {l: gen.styles_from_w(w)[l] for l in layers}

        self.arrays_dir.mkdir(parents=True, exist_ok=True)
        (self.arrays_dir / "latents.npy").write_bytes(write_array_file(latents))
        (self.arrays_dir / "captures.zip").write_bytes(
            write_archive({f"capture_l{l}": batch.captures[l].data for l in layers})
        )
        (self.arrays_dir / "styles.zip").write_bytes(
            write_archive({f"sigma_l{l}": styles[l] for l in layers})
        )
        if write_images:
            self.samples_dir.mkdir(parents=True, exist_ok=True)
            for i in range(n):
                metrics.save_image_png(
                    batch.images[i], self.samples_dir / f"sample_{i:04d}.png"
                )
        self._latents = latents
        self._captures = dict(batch.captures)
        self._styles = styles
        self._images = batch.images

    def _require_arrays(self) -> None:
        if self._captures is not None:
            return
        cap_path = self.arrays_dir / "captures.zip"
        if not cap_path.exists():
            raise GanLocalError(
                f"no sample arrays under {self.arrays_dir}; run `gen` first"
            )
        caps = read_archive(cap_path.read_bytes())
        self._captures = {
            int(k.removeprefix("capture_l")): ActivationTensor(v, layer_id=int(k.removeprefix("capture_l")))
            for k, v in caps.items()
        }
        styles = read_archive((self.arrays_dir / "styles.zip").read_bytes())
        self._styles = {int(k.removeprefix("sigma_l")): v for k, v in styles.items()}
        self._latents = read_array_file((self.arrays_dir / "latents.npy").read_bytes())

    @property
    def captures(self) -> dict[int, ActivationTensor]:
        self._require_arrays()
        return self._captures

    @property
    def styles(self) -> dict[int, np.ndarray]:
        self._require_arrays()
        return self._styles

    @property
    def latents(self) -> np.ndarray:
        self._require_arrays()
        return self._latents

    @property
    def images(self) -> np.ndarray:
        if self._images is None:
            self._images = self.generator.render_batch(self.latents).images
        return self._images

    def sample_styles(self, sample_id: int) -> StyleSet:
        styles = self.styles
        n = next(iter(styles.values())).shape[0]
        if not 0 <= sample_id < n:
            raise KeyError(f"sample id {sample_id} out of range 0..{n - 1}")
        return {l: styles[l][sample_id] for l in styles}

    @property
    def sample_count(self) -> int:
        return next(iter(self.styles.values())).shape[0]

    # -- catalog ------------------------------------------------------------
    def cluster(self, k: int | None = None, seed: int | None = None) -> semantics.SemanticCatalog:
        """Run spherical k-means at the base layer; write a draft catalog
        attributed at the base layer only."""
        k = self.config.k if k is None else k
        seed = self.config.cluster_seed if seed is None else seed
        base = self.captures[self.base_layer]
        from .ndio import channel_moments, standardize

        mean, std = channel_moments(base)
        membership, centroids = semantics.spherical_kmeans(standardize(base), k, seed)
        att = semantics.attribution_all_layers(
            {self.base_layer: base}, membership, self.base_layer
        )
        catalog = semantics.SemanticCatalog(
            base_layer_id=self.base_layer,
            k=k,
            centroids=centroids,
            clusters=tuple(semantics.ClusterInfo(id=i) for i in range(k)),
            parts=(),
            attributions=att,
            base_membership=membership,
            channel_mean=mean,
            channel_std=std,
            provenance={
                "seed": seed,
                "sample_count": int(base.data.shape[0]),
                "generator_seed": self.config.generator_seed,
            },
        )
        self.save_catalog(catalog)
        return catalog

    def attribute(self) -> semantics.SemanticCatalog:
        """Fill in attribution matrices for every captured layer."""
        from dataclasses import replace

        catalog = self.catalog
        att = semantics.attribution_all_layers(
            self.captures, catalog.base_membership, self.base_layer
        )
        catalog = replace(catalog, attributions=att)
        self.save_catalog(catalog)
        return catalog

    @property
    def catalog(self) -> semantics.SemanticCatalog:
        if self._catalog is None:
            if not (self.catalog_dir / "manifest.json").exists():
                raise GanLocalError(
                    f"no catalog under {self.catalog_dir}; run `cluster` first"
                )
            self._catalog = semantics.load_catalog(self.catalog_dir)
        return self._catalog

    def save_catalog(self, catalog: semantics.SemanticCatalog) -> None:
        semantics.save_catalog(catalog, self.catalog_dir)
        self._catalog = catalog

    # -- edits ----------------------------------------------------------------
    def resolve_ref(self, ref: tuple[str, int]) -> int | StyleSet:
        """("seed", n) -> latent seed n; ("sample", i) -> stored style set."""
        kind, value = ref
        if kind == "seed":
            return int(value)
        if kind == "sample":
            return self.sample_styles(int(value))
        raise ValueError(f"unknown reference kind {kind!r}")

    def edit_bundle(
        self,
        target: tuple[str, int],
        reference: tuple[str, int],
        part: str,
        params: editor.EditParams,
    ) -> dict:
        """One edit with its locality evaluation and per-layer query summary."""
        catalog = self.catalog
        request = editor.EditRequest(
            target=self.resolve_ref(target),
            reference=self.resolve_ref(reference),
            part=part,
            params=params,
        )
        result = editor.edit(request, catalog, self.generator)
        base_capture = result.target.captures[catalog.base_layer_id]
        std = standardize_with(base_capture, catalog.channel_mean.astype(np.float64), catalog.channel_std.astype(np.float64))
        membership = semantics.assign_membership(std, catalog.centroids)
        h, w = result.target.image.shape[1:]
        mask = metrics.roi_mask_for_part(membership, catalog, part, h, w)
        report = metrics.locality(result.target.image, result.edited.image, mask)
        diff = metrics.diff_map(result.target.image, result.edited.image)
        q_summary = {
            l: {
                "support": int(np.count_nonzero(q)),
                "budget_spent": editor.budget_spent(
                    q, semantics.part_row(catalog, part, l)
                )
                if params.mode != "global"
                else None,
                "q": [float(v) for v in q],
            }
            for l, q in result.queries.items()
        }
        return {
            "result": result,
            "mask": mask,
            "diff": diff,
            "locality": report,
            "q_summary": q_summary,
        }

    def sweep(
        self,
        mode: str,
        values: list[float],
        pairs: int,
        part: str,
        rho_ratio: float = editor.DEFAULT_RHO_RATIO,
        pair_seed_base: int = 10_000,
    ) -> tuple[list[dict], dict[str, np.ndarray]]:
        """Grid of edits over many target/reference pairs.

        Returns CSV-ready rows and the per-edit query dump (archive entries
        ``q_<value-index>_<pair>_<layer>``) used to audit budget usage.
        """
        rows: list[dict] = []
        qdump: dict[str, np.ndarray] = {}
        for vi, value in enumerate(values):
            if mode == "sequential":
                params = editor.EditParams(mode=mode, epsilon=value, rho_ratio=rho_ratio)
            else:
                params = editor.EditParams(mode=mode, lam=value, rho_ratio=rho_ratio)
            for p in range(pairs):
                t_seed = pair_seed_base + 2 * p
                r_seed = pair_seed_base + 2 * p + 1
                bundle = self.edit_bundle(("seed", t_seed), ("seed", r_seed), part, params)
                rep: metrics.LocalityReport = bundle["locality"]
                rows.append(
                    {
                        "mode": mode,
                        "epsilon_or_lambda": value,
                        "pair_id": p,
                        "part_id": part,
                        "in_mse": rep.in_mse,
                        "out_mse": rep.out_mse,
                    }
                )
                for l, q in bundle["result"].queries.items():
                    qdump[f"q_{vi}_{p}_{l}"] = np.asarray(q, dtype=np.float64)
        return rows, qdump


def write_sweep_csv(rows: list[dict], path: Path) -> None:
    fields = ["mode", "epsilon_or_lambda", "pair_id", "part_id", "in_mse", "out_mse"]
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def load_project(data_dir: str | Path) -> Project:
    path = Path(data_dir) / "project.json"
    if path.exists():
        cfg = load_config(path)
        if Path(cfg.data_dir) != Path(data_dir):
            cfg = ProjectConfig(**{**asdict(cfg), "data_dir": str(data_dir)})
        return Project(cfg)
    return Project(ProjectConfig(data_dir=str(data_dir)))
