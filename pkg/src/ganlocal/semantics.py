"""Semantic part discovery: spherical k-means over patch embeddings, channel
attribution matrices, and the human-labelable catalog.

Each spatial position of a hidden activation tensor is a C-dimensional patch
embedding. Clustering those embeddings on the unit sphere (cosine similarity)
partitions every image into K spatial groups; the attribution matrix then
scores, per layer, how much each channel's squared standardized activation
falls inside each group. Columns of an attribution matrix sum to 1 for
standardized inputs because memberships are a partition of unity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    AlreadyAssigned,
    DegenerateInput,
    MissingLayerAttribution,
    SchemaVersionMismatch,
    ShapeMismatch,
    UnknownCluster,
    UnknownPart,
)
from .ndio import (
    ActivationTensor,
    MembershipTensor,
    one_hot_membership,
    read_archive,
    resample_membership,
    standardize,
    write_archive,
)

SCHEMA_VERSION = 1
_CHUNK = 1 << 16
_ZERO_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class CentroidMatrix:
    """K x C cluster directions, one unit-norm row per cluster."""

    v: np.ndarray

    def __post_init__(self) -> None:
        norms = np.linalg.norm(self.v.astype(np.float64), axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("centroid rows must be unit norm")
        # float32 is the persistence dtype; keeping it canonical makes
        # save -> load an exact identity.
        v = np.ascontiguousarray(self.v, dtype=np.float32)
        v.flags.writeable = False
        object.__setattr__(self, "v", v)

    @property
    def k(self) -> int:
        return self.v.shape[0]


@dataclass(frozen=True, eq=False)
class AttributionMatrix:
    """K x C channel contributions to each cluster, entries in [0, 1]."""

    m: np.ndarray
    layer_id: int

    def __post_init__(self) -> None:
        if self.m.min(initial=0.0) < 0.0 or self.m.max(initial=0.0) > 1.0:
            raise ValueError("attribution entries must lie in [0, 1]")
        m = np.ascontiguousarray(self.m, dtype=np.float32)
        m.flags.writeable = False
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class ClusterInfo:
    id: int
    label: str = ""
    merged_into: str | None = None


@dataclass(frozen=True)
class PartInfo:
    part_id: str
    label: str
    cluster_ids: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class SemanticCatalog:
    """Persisted clustering outcome for one generator.

    Attributions are stored per cluster; part-level rows are derived by
    summing member rows (clamped to [0, 1]). Unassigned clusters are
    addressable as implicit single-cluster parts named ``cluster-<id>-part``.
    ``channel_mean``/``channel_std`` are the base-layer moments of the
    clustered batch, kept so fresh captures can be standardized consistently
    before assignment to the stored centroids.
    """

    base_layer_id: int
    k: int
    centroids: CentroidMatrix
    clusters: tuple[ClusterInfo, ...]
    parts: tuple[PartInfo, ...]
    attributions: dict[int, AttributionMatrix]
    base_membership: MembershipTensor
    channel_mean: np.ndarray
    channel_std: np.ndarray
    provenance: dict

    def __post_init__(self) -> None:
        for name in ("channel_mean", "channel_std"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def cluster(self, cluster_id: int) -> ClusterInfo:
        for c in self.clusters:
            if c.id == cluster_id:
                return c
        raise UnknownCluster(f"no cluster {cluster_id}")


def _flatten_rows(a: ActivationTensor) -> np.ndarray:
    n, c, h, w = a.data.shape
    return a.data.transpose(0, 2, 3, 1).reshape(n * h * w, c).astype(np.float64)


def _normalize_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(rows, axis=1)
    zero = norms < _ZERO_NORM
    safe = np.where(zero, 1.0, norms)
    return rows / safe[:, None], zero


def assign_rows(rows: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best cluster per row by cosine similarity; ties go to the lowest index.

    Rows are processed in fixed-size chunks in a fixed order, keeping the
    result bitwise reproducible. Returns (labels, best similarity per row).
    """
    labels = np.empty(rows.shape[0], dtype=np.int64)
    best = np.empty(rows.shape[0], dtype=np.float64)
    for s in range(0, rows.shape[0], _CHUNK):
        sims = rows[s : s + _CHUNK] @ centroids.T
        labels[s : s + _CHUNK] = np.argmax(sims, axis=1)
        best[s : s + _CHUNK] = np.take_along_axis(
            sims, labels[s : s + _CHUNK, None], axis=1
        )[:, 0]
    return labels, best


def kmeans_objective(rows: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    """Total cosine similarity of rows with their assigned centroids."""
    total = 0.0
    for s in range(0, rows.shape[0], _CHUNK):
        chunk = rows[s : s + _CHUNK]
        total += float(
            np.einsum("ij,ij->i", chunk, centroids[labels[s : s + _CHUNK]]).sum()
        )
    return total


def _centroid_sums(rows: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, rows.shape[1]), dtype=np.float64)
    for j in range(k):
        members = labels == j
        if members.any():
            sums[j] = rows[members].sum(axis=0)
    return sums


def _kmeanspp_init(
    rows: np.ndarray, zero: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Seeding proportional to cosine distance from the nearest chosen centre."""
    pool = np.flatnonzero(~zero)
    centroids = np.empty((k, rows.shape[1]), dtype=np.float64)
    first = pool[rng.integers(len(pool))]
    centroids[0] = rows[first]
    best = rows @ centroids[0]
    for j in range(1, k):
        d = np.maximum(0.0, 1.0 - best)
        d[zero] = 0.0
        total = d.sum()
        if total < _ZERO_NORM:
            idx = pool[rng.integers(len(pool))]
        else:
            idx = rng.choice(rows.shape[0], p=d / total)
        centroids[j] = rows[idx]
        best = np.maximum(best, rows @ centroids[j])
    return centroids


def spherical_kmeans(
    a: ActivationTensor,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-5,
    return_history: bool = False,
):
    """Cluster patch embeddings on the unit sphere.

    Rows are the activation vectors at every (n, h, w) position, normalized
    to unit length; all-zero rows are assigned to cluster 0 by convention.
    Alternates maximal-dot-product assignment with normalized-mean centroid
    updates; empty clusters are re-seeded from the worst-served rows. Stops
    when the objective improves by less than ``tol``.

    Returns a hard membership tensor and the centroid matrix (and the
    per-iteration objective values when ``return_history``).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not a.standardized:
        raise ValueError("activations must be standardized before clustering")
    n, c, h, w = a.data.shape
    rows, zero = _normalize_rows(_flatten_rows(a))
    distinct = np.unique(rows[~zero], axis=0).shape[0]
    if k > distinct:
        raise DegenerateInput(f"k={k} exceeds {distinct} distinct normalized rows")

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeanspp_init(rows, zero, k, rng)
    labels = np.zeros(rows.shape[0], dtype=np.int64)
    history: list[float] = []
    prev_obj = -np.inf
    for _ in range(max_iter):
        labels, best = assign_rows(rows, centroids)
        # Re-seed empty clusters from the worst-served non-zero rows, one
        # distinct row per empty cluster in increasing cluster order.
        counts = np.bincount(labels, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            order = [
                i for i in np.argsort(best, kind="stable") if not zero[i]
            ][: empties.size]
            for j, i in zip(empties, order):
                labels[i] = j
        sums = _centroid_sums(rows, labels, k)
        norms = np.linalg.norm(sums, axis=1)
        ok = norms > _ZERO_NORM
        centroids[ok] = sums[ok] / norms[ok, None]
        obj = kmeans_objective(rows, labels, centroids)
        history.append(obj)
        if obj - prev_obj < tol:
            break
        prev_obj = obj

    membership = one_hot_membership(labels.reshape(n, h, w), k)
    result = (membership, CentroidMatrix(centroids))
    return (*result, history) if return_history else result


def assign_membership(a: ActivationTensor, centroids: CentroidMatrix) -> MembershipTensor:
    """Hard memberships for fresh standardized activations."""
    if not a.standardized:
        raise ValueError("activations must be standardized before assignment")
    n, c, h, w = a.data.shape
    rows, _ = _normalize_rows(_flatten_rows(a))
    labels, _ = assign_rows(rows, centroids.v)
    return one_hot_membership(labels.reshape(n, h, w), centroids.k)


def channel_attribution(a: ActivationTensor, u: MembershipTensor) -> AttributionMatrix:
    """Mean squared standardized activation of each channel inside each cluster."""
    if not a.standardized:
        raise ValueError("attribution requires standardized activations")
    n, c, h, w = a.data.shape
    if u.data.shape[0] != n or u.data.shape[2:] != (h, w):
        raise ShapeMismatch(
            f"activations {a.data.shape} and memberships {u.data.shape} disagree"
        )
    sq = a.data.astype(np.float64) ** 2
    m = np.einsum("nchw,nkhw->kc", sq, u.data.astype(np.float64)) / (n * h * w)
    # Guard against float residue just above 1 on unit-variance channels.
    return AttributionMatrix(m=np.clip(m, 0.0, 1.0), layer_id=a.layer_id)


def attribution_all_layers(
    captures: dict[int, ActivationTensor],
    u_base: MembershipTensor,
    base_layer_id: int,
) -> dict[int, AttributionMatrix]:
    """Attribution per captured layer against one base-layer clustering.

    The base-layer membership is bilinearly resampled (soft) to each layer's
    spatial size; captures are standardized before applying the attribution.
    """
    out: dict[int, AttributionMatrix] = {}
    for layer_id in sorted(captures):
        cap = captures[layer_id]
        h, w = cap.data.shape[2:]
        if layer_id == base_layer_id and (h, w) == u_base.data.shape[2:]:
            u = u_base
        else:
            u = resample_membership(u_base, h, w)
        std = cap if cap.standardized else standardize(cap)
        out[layer_id] = channel_attribution(std, u)
    return out


def build_catalog(
    base_capture: ActivationTensor,
    captures: dict[int, ActivationTensor],
    k: int,
    seed: int,
    generator_seed: int,
) -> SemanticCatalog:
    """Cluster the base layer and attribute every captured layer."""
    from .ndio import channel_moments

    mean, std = channel_moments(base_capture)
    std_base = standardize(base_capture)
    membership, centroids = spherical_kmeans(std_base, k, seed)
    attributions = attribution_all_layers(captures, membership, base_capture.layer_id)
    clusters = tuple(ClusterInfo(id=i) for i in range(k))
    return SemanticCatalog(
        base_layer_id=base_capture.layer_id,
        k=k,
        centroids=centroids,
        clusters=clusters,
        parts=(),
        attributions=attributions,
        base_membership=membership,
        channel_mean=mean,
        channel_std=std,
        provenance={
            "seed": seed,
            "sample_count": int(base_capture.data.shape[0]),
            "generator_seed": generator_seed,
        },
    )


def set_label(catalog: SemanticCatalog, cluster_id: int, label: str) -> SemanticCatalog:
    catalog.cluster(cluster_id)
    clusters = tuple(
        replace(c, label=label) if c.id == cluster_id else c for c in catalog.clusters
    )
    return replace(catalog, clusters=clusters)


def merge_clusters(
    catalog: SemanticCatalog, cluster_ids: list[int], part_label: str
) -> SemanticCatalog:
    """Create a part from unassigned clusters; their rows sum, clamped."""
    if not cluster_ids:
        raise UnknownCluster("a part needs at least one cluster")
    for cid in cluster_ids:
        info = catalog.cluster(cid)
        if info.merged_into is not None:
            raise AlreadyAssigned(f"cluster {cid} already belongs to {info.merged_into}")
    if len(set(cluster_ids)) != len(cluster_ids):
        raise AlreadyAssigned("duplicate cluster ids in one merge")
    part_id = f"part-{len(catalog.parts)}"
    part = PartInfo(part_id=part_id, label=part_label, cluster_ids=tuple(sorted(cluster_ids)))
    clusters = tuple(
        replace(c, merged_into=part_id) if c.id in cluster_ids else c
        for c in catalog.clusters
    )
    return replace(catalog, clusters=clusters, parts=(*catalog.parts, part))


def resolve_part(catalog: SemanticCatalog, part_ref: str) -> tuple[str, tuple[int, ...]]:
    """Resolve a part reference to (part id, member cluster ids).

    Accepts explicit part ids and labels, plus the implicit name
    ``cluster-<id>-part`` for clusters not merged into any part.
    """
    for p in catalog.parts:
        if part_ref in (p.part_id, p.label):
            return p.part_id, p.cluster_ids
    if part_ref.startswith("cluster-") and part_ref.endswith("-part"):
        try:
            cid = int(part_ref[len("cluster-") : -len("-part")])
        except ValueError:
            raise UnknownPart(f"bad part reference {part_ref!r}") from None
        info = catalog.cluster(cid)
        if info.merged_into is not None:
            raise UnknownPart(f"cluster {cid} is merged into {info.merged_into}")
        return part_ref, (cid,)
    raise UnknownPart(f"no part or cluster matches {part_ref!r}")


def part_row(catalog: SemanticCatalog, part_ref: str, layer_id: int) -> np.ndarray:
    """Part-level attribution row at a layer: clamped sum of member rows."""
    _, cluster_ids = resolve_part(catalog, part_ref)
    if layer_id not in catalog.attributions:
        raise MissingLayerAttribution(f"no attribution for layer {layer_id}")
    m = catalog.attributions[layer_id].m.astype(np.float64)
    return np.clip(m[list(cluster_ids)].sum(axis=0), 0.0, 1.0)


def catalog_units(catalog: SemanticCatalog) -> list[tuple[str, tuple[int, ...]]]:
    """Partition of clusters into competing units: explicit parts plus each
    unassigned cluster alone, ordered by smallest member cluster id."""
    units: list[tuple[str, tuple[int, ...]]] = [
        (p.part_id, p.cluster_ids) for p in catalog.parts
    ]
    units.extend(
        (f"cluster-{c.id}-part", (c.id,))
        for c in catalog.clusters
        if c.merged_into is None
    )
    units.sort(key=lambda u: min(u[1]))
    return units


def save_catalog(catalog: SemanticCatalog, path: str | Path) -> None:
    """Write manifest.json plus an arrays.zip next to it. Deterministic bytes."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {
        "centroids": catalog.centroids.v,
        "base_membership": catalog.base_membership.data,
        "channel_mean": catalog.channel_mean,
        "channel_std": catalog.channel_std,
    }
    for layer_id, att in catalog.attributions.items():
        arrays[f"m_l{layer_id}"] = att.m
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "base_layer_id": catalog.base_layer_id,
        "k": catalog.k,
        "clusters": [
            {"id": c.id, "label": c.label, "merged_into": c.merged_into}
            for c in catalog.clusters
        ],
        "parts": [
            {"part_id": p.part_id, "label": p.label, "cluster_ids": list(p.cluster_ids)}
            for p in catalog.parts
        ],
        "attributions": {str(l): f"m_l{l}" for l in sorted(catalog.attributions)},
        "provenance": catalog.provenance,
    }
    (root / "arrays.zip").write_bytes(write_archive(arrays))
    (root / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )


def load_catalog(path: str | Path) -> SemanticCatalog:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    required = {
        "schema_version",
        "base_layer_id",
        "k",
        "clusters",
        "parts",
        "attributions",
        "provenance",
    }
    missing = required - set(manifest)
    if missing:
        raise SchemaVersionMismatch(f"manifest missing keys: {sorted(missing)}")
    if manifest["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"schema_version {manifest['schema_version']} != {SCHEMA_VERSION}"
        )
    arrays = read_archive((root / "arrays.zip").read_bytes())
    attributions = {
        int(l): AttributionMatrix(m=arrays[key], layer_id=int(l))
        for l, key in manifest["attributions"].items()
    }
    return SemanticCatalog(
        base_layer_id=manifest["base_layer_id"],
        k=manifest["k"],
        centroids=CentroidMatrix(arrays["centroids"]),
        clusters=tuple(
            ClusterInfo(id=c["id"], label=c["label"], merged_into=c["merged_into"])
            for c in manifest["clusters"]
        ),
        parts=tuple(
            PartInfo(
                part_id=p["part_id"],
                label=p["label"],
                cluster_ids=tuple(p["cluster_ids"]),
            )
            for p in manifest["parts"]
        ),
        attributions=attributions,
        base_membership=MembershipTensor(arrays["base_membership"], hard=True),
        channel_mean=arrays["channel_mean"],
        channel_std=arrays["channel_std"],
        provenance=manifest["provenance"],
    )
