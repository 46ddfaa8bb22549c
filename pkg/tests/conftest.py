import numpy as np
import pytest

from ganlocal import minigen, ndio, semantics


@pytest.fixture(scope="session")
def generator():
    return minigen.build_generator()


@pytest.fixture(scope="session")
def toy_generator():
    """Two-layer 4->8 plan, small enough for loop-based oracles."""
    cfg = minigen.GeneratorConfig(
        seed=3, latent_dim=8, resolutions=(4, 8), channels=(6, 5)
    )
    return minigen.build_generator(cfg)


@pytest.fixture(scope="session")
def small_batch(generator):
    """24 rendered samples with captures at every layer."""
    rng = np.random.Generator(np.random.PCG64(0))
    zs = rng.standard_normal((24, generator.config.latent_dim)).astype(np.float32)
    return generator.render_batch(zs, capture_layers=tuple(range(7)))


@pytest.fixture(scope="session")
def small_catalog(small_batch):
    return semantics.build_catalog(
        small_batch.captures[5], dict(small_batch.captures), k=5, seed=0, generator_seed=0
    )


@pytest.fixture(scope="session")
def small_project(tmp_path_factory):
    """A fully initialized on-disk project shared by CLI/server tests."""
    from ganlocal import project as project_mod

    root = tmp_path_factory.mktemp("proj")
    cfg = project_mod.ProjectConfig(
        data_dir=str(root), generator_seed=0, k=5, sample_count=24
    )
    proj = project_mod.Project(cfg)
    project_mod.save_config(cfg, root / "project.json")
    proj.generate()
    proj.cluster()
    proj.attribute()
    return proj


def random_membership(rng, n, k, h, w, hard=False):
    """Random partition-of-unity membership tensor."""
    if hard:
        labels = rng.integers(0, k, size=(n, h, w))
        return ndio.one_hot_membership(labels, k)
    raw = rng.uniform(0.05, 1.0, size=(n, k, h, w))
    return ndio.MembershipTensor(raw / raw.sum(axis=1, keepdims=True), hard=False)
