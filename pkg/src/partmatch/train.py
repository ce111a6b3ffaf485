"""Supervised-contrastive training of the projection head.

Loss, gradients, and the Adam update are written out explicitly in numpy
so every step is reproducible from a seed. Anchors contrast against all
other batch rows; positives share the anchor's material key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encode import NORM_GUARD, ProjectionHead, init_head


class TrainingError(RuntimeError):
    """Raised when a training run cannot proceed (bad data, divergence)."""


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.07
    learning_rate: float = 1e-5
    steps: int = 20000
    batch_size: int = 256
    hidden_dim: int = 512
    out_dim: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    floor: int = 8
    cap: int = 100
    max_ratio: float = 5.0
    log_every: int = 100

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")


@dataclass(frozen=True)
class TrainSample:
    """One embedding with its supervision label.

    ``kind`` records how the sample entered the pool: a deduplicated
    exemplar ("base"), another instance of a duplicate group
    ("extra-instance"), or an extra rendered viewpoint ("extra-view").
    """

    mesh_id: str
    part_id: int
    material_id: int
    x: np.ndarray
    kind: str = "base"

    @property
    def material_key(self) -> tuple[str, int]:
        return (self.mesh_id, self.material_id)


@dataclass
class MaterialPool:
    """Candidate samples for one (mesh, material), grouped by provenance."""

    base: list[TrainSample] = field(default_factory=list)
    extra_instances: list[TrainSample] = field(default_factory=list)
    extra_views: list[TrainSample] = field(default_factory=list)


def balance_dataset(
    pools: dict[tuple[str, int], MaterialPool],
    floor: int = 8,
    cap: int = 100,
    max_ratio: float = 5.0,
    seed: int = 0,
) -> list[TrainSample]:
    """Flatten material pools into a per-key balanced training set.

    Keys below the floor are topped up from extra instances first, then
    extra views. Keys above the cap are randomly thinned. Finally, within
    each mesh, the largest materials are thinned until no material holds
    more than ``max_ratio`` times the smallest. Keys that cannot reach two
    samples are dropped: they could never contribute a positive pair.
    """
    rng = np.random.default_rng(seed)

    chosen: dict[tuple[str, int], list[TrainSample]] = {}
    for key in sorted(pools):
        pool = pools[key]
        samples = list(pool.base)
        for extra in (pool.extra_instances, pool.extra_views):
            for s in extra:
                if len(samples) >= floor:
                    break
                samples.append(s)
        if len(samples) < 2:
            continue
        if len(samples) > cap:
            keep = np.sort(rng.choice(len(samples), size=cap, replace=False))
            samples = [samples[i] for i in keep]
        chosen[key] = samples

    mesh_ids = sorted({k[0] for k in chosen})
    for mesh_id in mesh_ids:
        keys = sorted(k for k in chosen if k[0] == mesh_id)
        while True:
            counts = {k: len(chosen[k]) for k in keys}
            limit = max_ratio * min(counts.values())
            over = [k for k in keys if counts[k] > limit]
            if not over:
                break
            for k in over:
                target = int(limit)
                keep = np.sort(rng.choice(counts[k], size=target, replace=False))
                chosen[k] = [chosen[k][i] for i in keep]

    out: list[TrainSample] = []
    for key in sorted(chosen):
        out.extend(chosen[key])
    return out


def supcon_loss(
    z: np.ndarray, labels: np.ndarray, temperature: float
) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss and its gradient wrt z.

    For each anchor i with positive set P_i (same label, not itself) and
    candidate set A_i (everything but itself):

        L_i = (1/|P_i|) * sum_{j in P_i} [ logsumexp_{a in A_i}(s_ia / t) - s_ij / t ]

    with s = z z^T. Anchors without positives are skipped; the loss is the
    mean over the remaining anchors. Returns (loss, dL/dz).
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    n = z.shape[0]
    if n < 2:
        raise ValueError("need at least two samples for a contrastive batch")

    sim = (z @ z.T) / temperature
    eye = np.eye(n, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & ~eye
    pos_counts = pos.sum(axis=1)
    anchors = pos_counts > 0
    n_anchors = int(anchors.sum())
    if n_anchors == 0:
        raise ValueError("batch holds no positive pairs")

    sim_masked = np.where(eye, -np.inf, sim)
    row_max = sim_masked.max(axis=1)
    expd = np.exp(sim_masked - row_max[:, None])
    denom = expd.sum(axis=1)
    lse = row_max + np.log(denom)

    pos_mean = np.zeros(n)
    pos_mean[anchors] = (sim * pos).sum(axis=1)[anchors] / pos_counts[anchors]
    per_anchor = lse - pos_mean
    loss = float(per_anchor[anchors].mean())

    softmax = expd / denom[:, None]
    grad_sim = np.zeros((n, n))
    grad_sim[anchors] = softmax[anchors]
    grad_sim[anchors] -= pos[anchors] / pos_counts[anchors, None]
    grad_sim /= n_anchors
    grad_sim[eye] = 0.0

    dz = (grad_sim + grad_sim.T) @ z / temperature
    return loss, dz


def head_forward(x: np.ndarray, head: ProjectionHead) -> tuple[np.ndarray, dict]:
    """Batched forward pass keeping the cache needed for backprop."""
    x = np.asarray(x, dtype=np.float64)
    h_pre = x @ head.w1.T + head.b1
    h = np.maximum(h_pre, 0.0)
    u = h @ head.w2.T + head.b2
    norms = np.maximum(np.linalg.norm(u, axis=1), NORM_GUARD)
    z = u / norms[:, None]
    cache = {"x": x, "h_pre": h_pre, "h": h, "u": u, "norms": norms, "z": z}
    return z, cache


def head_backward(
    dz: np.ndarray, cache: dict, head: ProjectionHead
) -> dict[str, np.ndarray]:
    """Gradients of the loss wrt head parameters given dL/dz."""
    z, norms = cache["z"], cache["norms"]
    du = (dz - z * (z * dz).sum(axis=1, keepdims=True)) / norms[:, None]
    grads = {
        "w2": du.T @ cache["h"],
        "b2": du.sum(axis=0),
    }
    dh = du @ head.w2
    dh_pre = dh * (cache["h_pre"] > 0.0)
    grads["w1"] = dh_pre.T @ cache["x"]
    grads["b1"] = dh_pre.sum(axis=0)
    return grads


def loss_and_grads(
    x: np.ndarray, labels: np.ndarray, head: ProjectionHead, temperature: float
) -> tuple[float, dict[str, np.ndarray]]:
    z, cache = head_forward(x, head)
    loss, dz = supcon_loss(z, labels, temperature)
    return loss, head_backward(dz, cache, head)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_head(cls, head: ProjectionHead) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in head.params().items()},
            v={k: np.zeros_like(v) for k, v in head.params().items()},
        )


def adam_step(
    head: ProjectionHead,
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> ProjectionHead:
    """One Adam update; mutates ``state``, returns the updated head."""
    state.t += 1
    new = {}
    for name, param in head.params().items():
        g = grads[name]
        state.m[name] = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        state.v[name] = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        m_hat = state.m[name] / (1.0 - cfg.beta1**state.t)
        v_hat = state.v[name] / (1.0 - cfg.beta2**state.t)
        new[name] = param - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return ProjectionHead(**new)


def _sample_batch(
    rng: np.random.Generator,
    by_key: list[np.ndarray],
    batch_size: int,
) -> np.ndarray:
    """Indices for one batch: repeatedly draw a key, take two of its samples.

    Keys are drawn with replacement; the two samples within a draw are
    distinct. An odd final slot is filled from a key already in the batch
    so every row keeps at least one positive.
    """
    picked: list[int] = []
    drawn_keys: list[int] = []
    while batch_size - len(picked) >= 2:
        k = int(rng.integers(len(by_key)))
        drawn_keys.append(k)
        pair = rng.choice(len(by_key[k]), size=2, replace=False)
        picked.extend(int(by_key[k][i]) for i in pair)
    if len(picked) < batch_size:
        k = drawn_keys[int(rng.integers(len(drawn_keys)))]
        i = int(rng.integers(len(by_key[k])))
        picked.append(int(by_key[k][i]))
    return np.asarray(picked, dtype=np.int64)


@dataclass
class TrainResult:
    head: ProjectionHead
    losses: list[tuple[int, float]]
    steps: int


def train_projection_head(
    samples: Sequence[TrainSample], cfg: TrainConfig = TrainConfig()
) -> TrainResult:
    """Fit the projection head on balanced samples.

    Deterministic for a given (samples, cfg): init and batch order both
    derive from cfg.seed. Raises TrainingError when no material key has
    two samples or the loss stops being finite.
    """
    if not samples:
        raise TrainingError("no training samples")
    in_dim = samples[0].x.shape[0]
    for s in samples:
        if s.x.shape != (in_dim,):
            raise TrainingError(
                f"sample {s.mesh_id}/{s.part_id} has dim {s.x.shape}, expected ({in_dim},)"
            )

    keys: dict[tuple[str, int], list[int]] = {}
    for i, s in enumerate(samples):
        keys.setdefault(s.material_key, []).append(i)
    eligible = [np.asarray(v) for k, v in sorted(keys.items()) if len(v) >= 2]
    if not eligible:
        raise TrainingError("no material key has two or more samples")

    key_list = sorted(k for k, v in keys.items() if len(v) >= 2)
    label_of = {k: i for i, k in enumerate(key_list)}
    X = np.stack([s.x for s in samples])
    labels_all = np.asarray(
        [label_of.get(s.material_key, -1 - i) for i, s in enumerate(samples)]
    )

    init_seed, batch_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    head = init_head(
        in_dim=in_dim,
        hidden_dim=cfg.hidden_dim,
        out_dim=cfg.out_dim,
        seed=init_seed.generate_state(1)[0],
    )
    rng = np.random.default_rng(batch_seed)
    state = AdamState.for_head(head)

    losses: list[tuple[int, float]] = []
    for step in range(cfg.steps):
        idx = _sample_batch(rng, eligible, min(cfg.batch_size, max(2, len(samples))))
        loss, grads = loss_and_grads(X[idx], labels_all[idx], head, cfg.temperature)
        if not np.isfinite(loss):
            raise TrainingError(f"loss became non-finite at step {step}")
        head = adam_step(head, grads, state, cfg)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            losses.append((step, loss))
    return TrainResult(head=head, losses=losses, steps=cfg.steps)
