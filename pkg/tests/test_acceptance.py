"""Acceptance suite: one test per contract criterion, each printing a
PASS/FAIL line with its measured values. Run with `pytest -s` to see them.

The locality trade-off check (criterion 6) is a soft criterion: it writes
its CSV/plot artifacts and warns instead of failing, since part
disentanglement on a randomly initialized generator is not guaranteed.
"""

import io
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from ganlocal import editor, metrics, minigen, ndio, semantics

ARTIFACTS = Path(__file__).resolve().parent.parent / "artifacts"

FULL_SEED = 0
FULL_N = 200
FULL_K = 15


def _announce(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="module")
def full_pipeline():
    """Seed-0 generator, 200 samples, K=15 catalog; wall time recorded."""
    t0 = time.perf_counter()
    gen = minigen.build_generator(minigen.GeneratorConfig(seed=FULL_SEED))
    rng = np.random.Generator(np.random.PCG64(FULL_SEED))
    zs = rng.standard_normal((FULL_N, gen.config.latent_dim)).astype(np.float32)
    batch = gen.render_batch(zs, capture_layers=tuple(range(gen.config.num_layers)))
    catalog = semantics.build_catalog(
        batch.captures[gen.config.base_layer],
        dict(batch.captures),
        k=FULL_K,
        seed=0,
        generator_seed=FULL_SEED,
    )
    elapsed = time.perf_counter() - t0
    return {"generator": gen, "batch": batch, "catalog": catalog, "seconds": elapsed}


def _random_instances(count: int = 1000, c: int = 16, seed: int = 2024):
    rng = np.random.Generator(np.random.PCG64(seed))
    return [
        (rng.uniform(0.0, 1.0, c), float(rng.uniform(0.0, 4.0))) for _ in range(count)
    ]


class TestCriterion1SequentialOracle:
    def test_solver_equals_lp_optimum(self):
        from scipy.optimize import linprog

        instances = _random_instances()
        t0 = time.perf_counter()
        solved = [editor.query_sequential(m, eps, 0.1) for m, eps in instances]
        solver_time = time.perf_counter() - t0

        worst = 0.0
        for (m, eps), q in zip(instances, solved):
            eligible = m > 0.1
            bounds = [(0.0, 1.0) if e else (0.0, 0.0) for e in eligible]
            res = linprog(-m, A_ub=[(1.0 - m)], b_ub=[eps], bounds=bounds, method="highs")
            assert res.status == 0
            worst = max(worst, float(np.abs(res.x - q).max()))
        ok = worst <= 1e-9 and solver_time < 5.0
        _announce(
            "criterion 1 sequential-vs-LP",
            ok,
            f"1000 instances, worst elementwise diff {worst:.2e} (tol 1e-9), "
            f"solver time {solver_time:.2f}s (< 5s)",
        )
        assert worst <= 1e-9
        assert solver_time < 5.0


class TestCriterion2BudgetAndNesting:
    def test_budget_safety_and_nesting(self):
        rng = np.random.Generator(np.random.PCG64(77))
        worst_budget = -np.inf
        for m, eps in _random_instances(seed=4096):
            eps2 = float(rng.uniform(0.0, 4.0))
            lo, hi = sorted((eps, eps2))
            q_lo = editor.query_sequential(m, lo, 0.1)
            q_hi = editor.query_sequential(m, hi, 0.1)
            for q, e in ((q_lo, lo), (q_hi, hi)):
                overhang = float(np.sum(q * (1.0 - m))) - e
                worst_budget = max(worst_budget, overhang)
                assert overhang <= 1e-9
            assert set(np.flatnonzero(q_lo)) <= set(np.flatnonzero(q_hi))
            assert np.all(q_lo <= q_hi + 1e-12)
        _announce(
            "criterion 2 budget safety + nesting",
            True,
            f"1000 instance pairs, worst budget overhang {worst_budget:.2e} (tol 1e-9)",
        )


class TestCriterion3AttributionPartition:
    def test_column_sums_all_layers(self, full_pipeline):
        catalog = full_pipeline["catalog"]
        batch = full_pipeline["batch"]
        assert catalog.k == FULL_K
        assert catalog.base_membership.data.shape[2:] == (32, 32)
        assert catalog.provenance["sample_count"] == FULL_N

        sizes = catalog.base_membership.data.sum(axis=(0, 2, 3))
        assert (sizes > 0).all(), "clustering must yield non-empty clusters"

        worst = 0.0
        for layer_id, att in catalog.attributions.items():
            dead = ndio.standardize(batch.captures[layer_id]).dead_channels
            assert dead == (), f"layer {layer_id} has dead channels {dead}"
            cols = att.m.astype(np.float64).sum(axis=0)
            worst = max(worst, float(np.abs(cols - 1.0).max()))

        # base layer again through an explicitly soft membership
        soft = ndio.resample_membership(catalog.base_membership, 32, 32)
        base_std = ndio.standardize(batch.captures[catalog.base_layer_id])
        att_soft = semantics.channel_attribution(base_std, soft)
        cols = att_soft.m.astype(np.float64).sum(axis=0)
        worst = max(worst, float(np.abs(cols - 1.0).max()))

        elapsed = full_pipeline["seconds"]
        ok = worst <= 1e-4 and elapsed < 60.0
        _announce(
            "criterion 3 attribution partition of unity",
            ok,
            f"N={FULL_N} K={FULL_K} layers={sorted(catalog.attributions)}, "
            f"worst |colsum-1| {worst:.2e} (tol 1e-4), pipeline {elapsed:.1f}s (< 60s)",
        )
        assert worst <= 1e-4
        assert elapsed < 60.0


class TestCriterion4EditEndpoints:
    def test_identity_and_full_transfer(self, full_pipeline):
        catalog = full_pipeline["catalog"]
        gen = full_pipeline["generator"]
        max_m = max(float(att.m.max()) for att in catalog.attributions.values())
        assert max_m < 1.0, "identity check premise requires no fully-relevant channel"

        request = editor.EditRequest(
            target=1,
            reference=2,
            part="cluster-0-part",
            params=editor.EditParams(mode="sequential", epsilon=0.0),
        )
        res = editor.edit(request, catalog, gen)
        identity_ok = np.array_equal(res.edited.image, res.target.image)

        full = editor.EditRequest(
            target=1,
            reference=2,
            part="cluster-0-part",
            params=editor.EditParams(mode="global", lam=1.0),
        )
        res_full = editor.edit(full, catalog, gen)
        transfer_ok = np.array_equal(res_full.edited.image, res_full.reference.image)
        _announce(
            "criterion 4 edit identity / full transfer",
            identity_ok and transfer_ok,
            f"eps=0 bit-identical to target: {identity_ok}; "
            f"q=1 bit-identical to reference: {transfer_ok} (max M {max_m:.3f})",
        )
        assert identity_ok and transfer_ok


class TestCriterion5SphericalKMeans:
    def test_objective_monotone_on_100_instances(self):
        rng = np.random.default_rng(31337)
        violations = 0
        for trial in range(100):
            rows = rng.normal(size=(int(rng.integers(30, 80)), 6)).astype(np.float32)
            a = ndio.ActivationTensor(
                rows[:, :, None, None], layer_id=0, standardized=True
            )
            _, _, history = semantics.spherical_kmeans(
                a, k=int(rng.integers(2, 7)), seed=trial, return_history=True
            )
            if any(b < a_ - 1e-9 for a_, b in zip(history, history[1:])):
                violations += 1
        _announce(
            "criterion 5a k-means objective monotone",
            violations == 0,
            f"100 random instances, {violations} monotonicity violations",
        )
        assert violations == 0

    def test_orthogonal_recovery(self):
        from sklearn.metrics import adjusted_rand_score

        rng = np.random.default_rng(5)
        truth = np.repeat(np.arange(3), 40)
        rows = np.zeros((120, 3), dtype=np.float32)
        rows[np.arange(120), truth] = rng.uniform(0.5, 3.0, size=120).astype(np.float32)
        a = ndio.ActivationTensor(rows[:, :, None, None], layer_id=0, standardized=True)
        membership, _ = semantics.spherical_kmeans(a, k=3, seed=0)
        labels = membership.data[:, :, 0, 0].argmax(axis=1)
        ari = adjusted_rand_score(truth, labels)
        _announce("criterion 5b orthogonal recovery", ari == 1.0, f"ARI = {ari}")
        assert ari == 1.0

    def test_bitwise_determinism_across_runs_and_threads(self):
        rng = np.random.default_rng(9)
        rows = rng.normal(size=(500, 12)).astype(np.float32)
        a = ndio.ActivationTensor(rows[:, :, None, None], layer_id=0, standardized=True)
        m1, c1 = semantics.spherical_kmeans(a, k=7, seed=3)
        m2, c2 = semantics.spherical_kmeans(a, k=7, seed=3)
        in_process = np.array_equal(m1.data, m2.data) and np.array_equal(c1.v, c2.v)

        script = (
            "import hashlib, numpy as np\n"
            "from ganlocal import ndio, semantics\n"
            "rows = np.random.default_rng(9).normal(size=(500, 12)).astype(np.float32)\n"
            "a = ndio.ActivationTensor(rows[:, :, None, None], layer_id=0, standardized=True)\n"
            "m, c = semantics.spherical_kmeans(a, k=7, seed=3)\n"
            "h = hashlib.sha256(m.data.tobytes()); h.update(c.v.tobytes())\n"
            "print(h.hexdigest())\n"
        )
        digests = set()
        for threads in ("1", "4"):
            out = subprocess.run(
                [sys.executable, "-c", script],
                capture_output=True,
                text=True,
                check=True,
                env={
                    "OMP_NUM_THREADS": threads,
                    "OPENBLAS_NUM_THREADS": threads,
                    "MKL_NUM_THREADS": threads,
                    "PATH": "/usr/bin:/bin:/usr/local/bin",
                },
            )
            digests.add(out.stdout.strip())
        ok = in_process and len(digests) == 1
        _announce(
            "criterion 5c k-means determinism",
            ok,
            f"in-process bitwise: {in_process}, thread-count digests: {len(digests)} unique",
        )
        assert ok


def _edit_grid(full_pipeline, part: str, pairs: int, seq_eps, sim_lam):
    """Locality means per setting, reusing target/reference renders."""
    gen = full_pipeline["generator"]
    catalog = full_pipeline["catalog"]
    layers = tuple(range(gen.config.num_layers))
    rows_out = []
    acc = {("sequential", e): [] for e in seq_eps}
    acc.update({("simultaneous", l): [] for l in sim_lam})
    part_rows = {l: semantics.part_row(catalog, part, l) for l in layers}
    for p in range(pairs):
        t_seed, r_seed = 10_000 + 2 * p, 10_001 + 2 * p
        s_t = gen.styles_from_w(gen.map_latent(gen.latent_from_seed(t_seed)))
        s_r = gen.styles_from_w(gen.map_latent(gen.latent_from_seed(r_seed)))
        target = gen.synthesize(s_t, capture_layers=(catalog.base_layer_id,))
        std = ndio.standardize_with(
            target.captures[catalog.base_layer_id],
            catalog.channel_mean.astype(np.float64),
            catalog.channel_std.astype(np.float64),
        )
        u = semantics.assign_membership(std, catalog.centroids)
        h, w = target.image.shape[1:]
        mask = metrics.roi_mask_for_part(u, catalog, part, h, w)
        for mode, value in acc:
            sigma_g = {}
            for l in layers:
                if mode == "sequential":
                    q = editor.query_sequential(part_rows[l], value, 0.1)
                else:
                    q = editor.query_simultaneous(part_rows[l], value)
                sigma_g[l] = editor.interpolate_conditioned(s_t[l], s_r[l], q)
            edited = gen.synthesize(sigma_g)
            rep = metrics.locality(target.image, edited.image, mask)
            acc[(mode, value)].append((rep.in_mse, rep.out_mse))
            rows_out.append(
                {
                    "mode": mode,
                    "epsilon_or_lambda": value,
                    "pair_id": p,
                    "part_id": part,
                    "in_mse": rep.in_mse,
                    "out_mse": rep.out_mse,
                }
            )
    means = {
        key: tuple(np.array(vals, dtype=np.float64).mean(axis=0)) for key, vals in acc.items()
    }
    return rows_out, means


class TestCriterion6LocalityTradeoff:
    def test_sequential_has_best_tradeoff(self, full_pipeline):
        pairs = 100
        seq_eps = [0.5, 1.0, 2.0, 4.0, 8.0]
        sim_lam = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0]
        part = "cluster-0-part"
        rows, means = _edit_grid(full_pipeline, part, pairs, seq_eps, sim_lam)

        ARTIFACTS.mkdir(exist_ok=True)
        from ganlocal.project import write_sweep_csv

        write_sweep_csv(rows, ARTIFACTS / "locality_tradeoff.csv")

        sim_curve = sorted(
            (means[("simultaneous", l)] for l in sim_lam), key=lambda t: t[0]
        )
        sim_in = np.array([pt[0] for pt in sim_curve])
        sim_out = np.array([pt[1] for pt in sim_curve])

        comparisons = []
        for e in seq_eps:
            seq_in, seq_out = means[("sequential", e)]
            if not (sim_in[0] <= seq_in <= sim_in[-1]):
                continue
            matched_sim_out = float(np.interp(seq_in, sim_in, sim_out))
            comparisons.append((e, seq_in, seq_out, matched_sim_out))
        # raw grid matches within +-5% mean In-MSE
        raw_matches = [
            (e, l)
            for e in seq_eps
            for l in sim_lam
            if abs(means[("sequential", e)][0] - means[("simultaneous", l)][0])
            <= 0.05 * max(means[("sequential", e)][0], means[("simultaneous", l)][0])
        ]
        for e, l in raw_matches:
            comparisons.append(
                (e, means[("sequential", e)][0], means[("sequential", e)][1], means[("simultaneous", l)][1])
            )

        self._plot(means, seq_eps, sim_lam)
        assert comparisons, "no matched In-MSE operating points; widen the grids"
        wins = sum(1 for _, _, s, m in comparisons if s <= m)
        detail = (
            f"{pairs} pairs, {len(comparisons)} matched points, sequential wins {wins}; "
            + "; ".join(
                f"eps={e:g}: In {si:.4f} Out {so:.4f} vs sim Out {mo:.4f}"
                for e, si, so, mo in comparisons[:5]
            )
            + f"; artifacts in {ARTIFACTS}"
        )
        ok = wins == len(comparisons)
        _announce("criterion 6 locality trade-off (soft)", ok, detail)
        if not ok:
            warnings.warn(
                "sequential did not dominate simultaneous at matched In-MSE; "
                "soft criterion - investigate, see artifacts/locality_tradeoff.csv"
            )

    @staticmethod
    def _plot(means, seq_eps, sim_lam):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        for mode, grid, style in (
            ("sequential", seq_eps, "o-"),
            ("simultaneous", sim_lam, "s--"),
        ):
            pts = np.array([means[(mode, v)] for v in grid])
            ax.plot(pts[:, 1], pts[:, 0], style, label=mode)
        ax.set_xlabel("Out-MSE (low is good)")
        ax.set_ylabel("In-MSE (high is good)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(ARTIFACTS / "locality_tradeoff.png", dpi=120)
        plt.close(fig)


class TestCriterion7ColorAndFrechet:
    def test_analytic_cases(self):
        lab_white = metrics.srgb_to_lab(np.ones((3, 1, 1)))[:, 0, 0]
        lab_black = metrics.srgb_to_lab(np.zeros((3, 1, 1)))[:, 0, 0]
        white_ok = np.abs(lab_white - [100.0, 0.0, 0.0]).max() < 0.01
        black_ok = np.abs(lab_black).max() < 0.01

        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 4))
        s = metrics.GaussianStats(mu=rng.normal(size=4), cov=a @ a.T + 0.2 * np.eye(4))
        self_ok = metrics.frechet_distance(s, s) < 1e-8

        s1 = metrics.GaussianStats(mu=np.zeros(2), cov=np.eye(2))
        s2 = metrics.GaussianStats(mu=np.array([3.0, 4.0]), cov=np.eye(2))
        shift = metrics.frechet_distance(s1, s2)
        shift_ok = abs(shift - 25.0) < 1e-6

        b = rng.normal(size=(4, 4))
        s3 = metrics.GaussianStats(mu=rng.normal(size=4), cov=b @ b.T + 0.2 * np.eye(4))
        sym = abs(metrics.frechet_distance(s, s3) - metrics.frechet_distance(s3, s))
        sym_ok = sym < 1e-6
        ok = white_ok and black_ok and self_ok and shift_ok and sym_ok
        _announce(
            "criterion 7 color + Fréchet analytic",
            ok,
            f"white {lab_white.round(4)}, black {lab_black.round(4)}, "
            f"self-dist <1e-8: {self_ok}, mean-shift {shift:.8f}, asymmetry {sym:.2e}",
        )
        assert ok


class TestCriterion8FileFormats:
    def test_roundtrips_and_rejections(self, full_pipeline, tmp_path):
        rng = np.random.default_rng(123)
        a = rng.normal(size=(3, 4, 2)).astype(np.float32)
        file_ok = ndio.read_array_file(ndio.write_array_file(a)).tobytes() == a.tobytes()
        buf = io.BytesIO()
        np.save(buf, a)
        byte_ok = ndio.write_array_file(ndio.read_array_file(buf.getvalue())) == buf.getvalue()

        arrays = {"x": a, "y": rng.normal(size=(5,)).astype(np.float32)}
        arch = ndio.read_archive(ndio.write_archive(arrays))
        archive_ok = all(np.array_equal(arch[k], arrays[k]) for k in arrays)

        fortran_rejected = False
        try:
            fb = io.BytesIO()
            np.save(fb, np.asfortranarray(rng.normal(size=(3, 3)).astype(np.float32)))
            ndio.read_array_file(fb.getvalue())
        except Exception as exc:
            fortran_rejected = type(exc).__name__ == "UnsupportedLayout"

        catalog = full_pipeline["catalog"]
        catalog = semantics.set_label(catalog, 0, "region-a")
        catalog = semantics.merge_clusters(catalog, [1, 2], "merged")
        semantics.save_catalog(catalog, tmp_path / "cat")
        loaded = semantics.load_catalog(tmp_path / "cat")
        catalog_ok = (
            loaded.k == catalog.k
            and loaded.base_layer_id == catalog.base_layer_id
            and loaded.clusters == catalog.clusters
            and loaded.parts == catalog.parts
            and loaded.provenance == catalog.provenance
            and np.array_equal(loaded.centroids.v, catalog.centroids.v)
            and np.array_equal(loaded.base_membership.data, catalog.base_membership.data)
            and np.array_equal(loaded.channel_mean, catalog.channel_mean)
            and np.array_equal(loaded.channel_std, catalog.channel_std)
            and all(
                np.array_equal(loaded.attributions[l].m, catalog.attributions[l].m)
                for l in catalog.attributions
            )
        )
        ok = file_ok and byte_ok and archive_ok and fortran_rejected and catalog_ok
        _announce(
            "criterion 8 file formats",
            ok,
            f"file bit-exact: {file_ok}, reference-byte-identical: {byte_ok}, "
            f"archive: {archive_ok}, column-major rejected: {fortran_rejected}, "
            f"catalog field-equal: {catalog_ok}",
        )
        assert ok
