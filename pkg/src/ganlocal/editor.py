"""Query-vector construction and style interpolation for local edits.

A local edit replaces per-layer style coefficients of a target image with a
per-channel blend toward a reference image: sigma_out = sigma_t + q *
(sigma_r - sigma_t) with q in [0,1] per channel. The query q comes from the
part's attribution row, either proportionally ("simultaneous", q =
min(1, lambda*m)) or by greedily filling the most relevant channels under an
out-of-region budget ("sequential"): channels are eligible above a relevance
threshold, sorted by relevance, and set to 1 while the accumulated cost
q*(1-m) stays within the budget; the first channel that would overflow gets
the fractional remainder and everything after it gets 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingLayerAttribution, ShapeMismatch
from .minigen import Generator, RenderResult, StyleSet
from .semantics import SemanticCatalog, part_row

DEFAULT_RHO_RATIO = 0.1
DEFAULT_EPSILON = 40.0

MODES = ("global", "simultaneous", "sequential")


@dataclass(frozen=True)
class EditParams:
    """Mode plus the knobs that mode needs.

    ``lam`` drives global and simultaneous edits, ``epsilon`` the sequential
    budget; ``rho_ratio`` is the relevance threshold below which a channel is
    never selected.
    """

    mode: str
    lam: float | None = None
    epsilon: float | None = None
    rho_ratio: float = DEFAULT_RHO_RATIO

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "global":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValueError("global mode needs 0 <= lam <= 1")
        elif self.mode == "simultaneous":
            if self.lam is None or self.lam < 0.0:
                raise ValueError("simultaneous mode needs lam >= 0")
        else:
            if self.epsilon is None or self.epsilon < 0.0:
                raise ValueError("sequential mode needs epsilon >= 0")
        if not 0.0 <= self.rho_ratio < 1.0:
            raise ValueError("rho_ratio must lie in [0, 1)")


@dataclass(frozen=True)
class EditRequest:
    """What to edit: target/reference as latent seeds or explicit style sets."""

    target: int | StyleSet
    reference: int | StyleSet
    part: str | None
    params: EditParams
    layers: tuple[int, ...] | None = None


@dataclass(frozen=True, eq=False)
class EditResult:
    edited: RenderResult
    target: RenderResult
    reference: RenderResult
    queries: dict[int, np.ndarray]


def interpolate_global(sigma_s: np.ndarray, sigma_r: np.ndarray, lam: float) -> np.ndarray:
    """Linear blend of two style vectors; endpoints reproduce inputs exactly."""
    if sigma_s.shape != sigma_r.shape:
        raise ShapeMismatch(f"style shapes differ: {sigma_s.shape} vs {sigma_r.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    if lam == 0.0:
        return sigma_s.copy()
    if lam == 1.0:
        return sigma_r.copy()
    # np.float64 keeps the arithmetic in double precision (a bare python
    # float would stay in the array dtype), matching the conditioned path.
    return (sigma_s + np.float64(lam) * (sigma_r - sigma_s)).astype(sigma_s.dtype)


def query_simultaneous(m_row: np.ndarray, lam: float) -> np.ndarray:
    """Proportional query: q = min(1, lam * m), all channels at once."""
    if lam < 0.0:
        raise ValueError("lam must be >= 0")
    m = np.asarray(m_row, dtype=np.float64)
    if m.min(initial=0.0) < 0.0 or m.max(initial=0.0) > 1.0:
        raise ValueError("attribution row entries must lie in [0, 1]")
    return np.minimum(1.0, lam * m)


def query_sequential(
    m_row: np.ndarray, epsilon: float, rho_ratio: float = DEFAULT_RHO_RATIO
) -> np.ndarray:
    """Greedy budgeted query.

    Channels with relevance strictly above ``rho_ratio`` are walked in
    decreasing-relevance order (ties to the lower channel index). Each gets
    weight 1 while the running out-of-region cost q*(1-m) fits in
    ``epsilon``; the first overflow gets the fractional remainder, later
    channels get 0. Fully relevant channels (m = 1) cost nothing and are
    always taken. The result is the exact optimum of the fractional-knapsack
    relaxation because m/(1-m) is increasing in m.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if not 0.0 <= rho_ratio < 1.0:
        raise ValueError("rho_ratio must lie in [0, 1)")
    m = np.asarray(m_row, dtype=np.float64)
    q = np.zeros_like(m)
    eligible = np.flatnonzero(m > rho_ratio)
    if eligible.size == 0:
        return q
    order = eligible[np.argsort(-m[eligible], kind="stable")]
    cost = 0.0
    for c in order:
        w = 1.0 - m[c]
        if cost + w <= epsilon:
            q[c] = 1.0
            cost += w
        else:
            if w > 0.0 and epsilon > cost:
                q[c] = (epsilon - cost) / w
            break
    return q


def interpolate_conditioned(
    sigma_s: np.ndarray, sigma_r: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Per-channel blend sigma_s + q*(sigma_r - sigma_s).

    q = 0 and q = 1 channels copy the respective input bit-exactly rather
    than going through the arithmetic.
    """
    if sigma_s.shape != sigma_r.shape or sigma_s.shape != q.shape:
        raise ShapeMismatch(
            f"shapes differ: {sigma_s.shape}, {sigma_r.shape}, {q.shape}"
        )
    out = (sigma_s + q * (sigma_r - sigma_s)).astype(sigma_s.dtype)
    out = np.where(q == 0.0, sigma_s, out)
    out = np.where(q == 1.0, sigma_r, out)
    return out.astype(sigma_s.dtype)


def budget_spent(q: np.ndarray, m_row: np.ndarray) -> float:
    """Out-of-region cost actually used by a query."""
    return float(np.sum(np.asarray(q, dtype=np.float64) * (1.0 - np.asarray(m_row, dtype=np.float64))))


def resolve_styles(generator: Generator, source: int | StyleSet) -> StyleSet:
    """Latent seed -> style set via the mapping network; style sets pass through."""
    if isinstance(source, (int, np.integer)):
        z = generator.latent_from_seed(int(source))
        return generator.styles_from_w(generator.map_latent(z))
    return {int(l): np.asarray(s, dtype=np.float32) for l, s in source.items()}


def build_query(m_row: np.ndarray, params: EditParams) -> np.ndarray:
    if params.mode == "global":
        return np.full(m_row.shape, float(params.lam))
    if params.mode == "simultaneous":
        return query_simultaneous(m_row, float(params.lam))
    return query_sequential(m_row, float(params.epsilon), params.rho_ratio)


def edit(
    request: EditRequest,
    catalog: SemanticCatalog,
    generator: Generator,
    capture_layers: tuple[int, ...] = (),
) -> EditResult:
    """Run one conditioned edit end to end.

    Per styled layer the query is built from that layer's part attribution
    row (the same epsilon/rho apply independently at every layer), applied to
    the target/reference styles, and the blended styles are synthesized.
    Layers excluded by ``request.layers`` keep the target's style.
    """
    layers = request.layers or tuple(range(generator.config.num_layers))
    sigma_s = resolve_styles(generator, request.target)
    sigma_r = resolve_styles(generator, request.reference)
    queries: dict[int, np.ndarray] = {}
    sigma_g: StyleSet = {}
    for l in range(generator.config.num_layers):
        if l not in layers:
            sigma_g[l] = sigma_s[l]
            continue
        if request.params.mode == "global":
            q = np.full(sigma_s[l].shape, float(request.params.lam))
        else:
            if l not in catalog.attributions:
                raise MissingLayerAttribution(f"no attribution for layer {l}")
            q = build_query(part_row(catalog, request.part, l), request.params)
        queries[l] = q
        sigma_g[l] = interpolate_conditioned(sigma_s[l], sigma_r[l], q)
    base = (catalog.base_layer_id,)
    return EditResult(
        edited=generator.synthesize(sigma_g, capture_layers),
        target=generator.synthesize(sigma_s, tuple(set(base + capture_layers))),
        reference=generator.synthesize(sigma_r, capture_layers),
        queries=queries,
    )
