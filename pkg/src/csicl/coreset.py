"""Exemplar selection and the growing knowledge core-set.

Per class, a budget of E exemplars is split by the clustering-herding ratio
beta: round(beta * E) picks come from k-means++/Lloyd clustering in the
model's latent feature space (each centroid mapped back to its nearest actual
member), and the remainder come from greedy herding, which drives the mean of
the selected features toward the class mean.  Selected sequences are stored
with the trained model's confidence-downscaled predictions as soft labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as m
from .sim import CsiSequence

LLOYD_MAX_ITER = 100


@dataclass
class FeatureSet:
    """Latent features of one domain dataset grouped by class.

    per_class maps class id -> (features (m, L), indices into the source
    dataset (m,)).
    """

    per_class: dict[int, tuple[np.ndarray, np.ndarray]]

    def __len__(self):
        return sum(len(ix) for _, ix in self.per_class.values())

    @property
    def classes(self) -> list[int]:
        return sorted(self.per_class)


@dataclass
class CoreSetEntry:
    sequence: CsiSequence
    soft_label: np.ndarray
    domain_id: int
    class_id: int


@dataclass
class KnowledgeCoreSet:
    """Accumulated distilled exemplars across the domains seen so far."""

    budget_per_class: int
    eta: float
    entries: list[CoreSetEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def domains(self) -> list[int]:
        return sorted({e.domain_id for e in self.entries})


def build_feature_set(params: m.ModelParams, xs: list[np.ndarray],
                      class_ids: np.ndarray) -> FeatureSet:
    """Encoder features of every entry, grouped by class (evaluation mode)."""
    feats = m.extract_features(params, xs)
    per_class = {}
    for c in np.unique(class_ids):
        idx = np.flatnonzero(class_ids == c)
        per_class[int(c)] = (feats[idx], idx)
    return FeatureSet(per_class)


def kmeans_objective(features: np.ndarray, centroids: np.ndarray) -> float:
    """Sum over features of the squared distance to the nearest centroid."""
    d2 = np.sum((features[:, None, :] - centroids[None]) ** 2, axis=-1)
    return float(d2.min(axis=1).sum())


def _kmeanspp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding: each new centroid is drawn by squared-distance
    sampling over a handful of local candidates and the one that lowers the
    total inertia most is kept."""
    n = len(features)
    n_trials = 2 + int(math.log2(k)) if k > 1 else 1
    chosen = [int(rng.integers(n))]
    d2 = np.sum((features - features[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:                       # all remaining points coincide
            pick = int(rng.integers(n))
        else:
            candidates = rng.choice(n, size=n_trials, p=d2 / total)
            best_pick, best_d2, best_total = None, None, np.inf
            for cand in candidates:
                cand_d2 = np.minimum(
                    d2, np.sum((features - features[cand]) ** 2, axis=1))
                cand_total = cand_d2.sum()
                if cand_total < best_total:
                    best_pick, best_d2, best_total = int(cand), cand_d2, cand_total
            pick, d2 = best_pick, best_d2
            chosen.append(pick)
            continue
        chosen.append(pick)
        d2 = np.minimum(d2, np.sum((features - features[pick]) ** 2, axis=1))
    return features[chosen].copy()


def _lloyd(features: np.ndarray, centroids: np.ndarray):
    """Lloyd iterations to a fixed assignment (or the iteration cap).

    Empty clusters are reseeded to the point farthest from its own centroid.
    Returns (centroids, assignment, objective trace); the objective is checked
    to be non-increasing at every iteration.
    """
    trace = [kmeans_objective(features, centroids)]
    assign = None
    for _ in range(LLOYD_MAX_ITER):
        d2 = np.sum((features[:, None, :] - centroids[None]) ** 2, axis=-1)
        new_assign = d2.argmin(axis=1)
        assigned_d2 = d2[np.arange(len(features)), new_assign]
        for j in range(len(centroids)):
            members = features[new_assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                farthest = int(assigned_d2.argmax())
                centroids[j] = features[farthest]
                new_assign[farthest] = j
                assigned_d2[farthest] = 0.0
        obj = kmeans_objective(features, centroids)
        if obj > trace[-1] * (1 + 1e-9) + 1e-12:
            raise RuntimeError("clustering objective increased during a Lloyd iteration")
        trace.append(obj)
        if assign is not None and np.array_equal(assign, new_assign):
            break
        assign = new_assign
    return centroids, assign, trace


def _nearest_members(features: np.ndarray, centroids: np.ndarray) -> list[int]:
    """Map each centroid to a distinct member index (ties and collisions go to
    the lowest / next-nearest index)."""
    picks: list[int] = []
    for c in centroids:
        order = np.argsort(np.sum((features - c) ** 2, axis=1), kind="stable")
        pick = next(int(i) for i in order if int(i) not in picks)
        picks.append(pick)
    return picks


def kmeans_select(features: np.ndarray, m_select: int, seed,
                  return_trace: bool = False):
    """Select m_select representative member indices by k-means++ and Lloyd."""
    features = np.asarray(features, dtype=float)
    if not 1 <= m_select <= len(features):
        raise ValueError("selection count must lie in [1, len(features)]")
    if m_select == len(features):
        picks = list(range(len(features)))
        return (picks, [kmeans_objective(features, features)]) if return_trace else picks
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(features, m_select, rng)
    centroids, _, trace = _lloyd(features, centroids)
    picks = _nearest_members(features, centroids)
    return (picks, trace) if return_trace else picks


def herding_select(features: np.ndarray, fixed: list[int], m_select: int) -> list[int]:
    """Greedy nearest-class-mean selection of m_select additional indices.

    At each step the running mean of everything selected so far plus the
    candidate is compared to the full class mean; ties break to the lowest
    index and selection is without replacement.
    """
    features = np.asarray(features, dtype=float)
    n = len(features)
    if m_select + len(fixed) > n:
        raise ValueError("cannot select more exemplars than available features")
    class_mean = features.mean(axis=0)
    running_sum = features[list(fixed)].sum(axis=0) if fixed else np.zeros(features.shape[1])
    chosen = list(fixed)
    available = np.ones(n, dtype=bool)
    available[list(fixed)] = False
    for step in range(m_select):
        count = len(chosen) + 1
        cand_means = (running_sum + features) / count
        dist = np.linalg.norm(cand_means - class_mean, axis=1)
        dist[~available] = np.inf
        pick = int(dist.argmin())
        chosen.append(pick)
        available[pick] = False
        running_sum = running_sum + features[pick]
    return chosen[len(fixed):]


def herding_select_sum_form(features: np.ndarray, fixed: list[int],
                            m_select: int) -> list[int]:
    """Variant greedy rule that compares the running *sum* (not mean) to the
    class mean; kept selectable because the two readings differ by a
    per-step scaling."""
    features = np.asarray(features, dtype=float)
    n = len(features)
    if m_select + len(fixed) > n:
        raise ValueError("cannot select more exemplars than available features")
    class_mean = features.mean(axis=0)
    running_sum = features[list(fixed)].sum(axis=0) if fixed else np.zeros(features.shape[1])
    chosen = list(fixed)
    available = np.ones(n, dtype=bool)
    available[list(fixed)] = False
    for _ in range(m_select):
        dist = np.linalg.norm((running_sum + features) - class_mean, axis=1)
        dist[~available] = np.inf
        pick = int(dist.argmin())
        chosen.append(pick)
        available[pick] = False
        running_sum = running_sum + features[pick]
    return chosen[len(fixed):]


def select_exemplars(features: np.ndarray, budget: int, beta: float, seed,
                     herding_form: str = "mean") -> list[int]:
    """Hybrid selection: round(beta * budget) by clustering, rest by herding."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("the clustering-herding ratio must lie in [0, 1]")
    if not 1 <= budget <= len(features):
        raise ValueError("budget must lie in [1, len(features)]")
    n_cluster = min(budget, int(round(beta * budget)))
    picks = kmeans_select(features, n_cluster, seed) if n_cluster else []
    herd = herding_select if herding_form == "mean" else herding_select_sum_form
    picks = picks + herd(features, picks, budget - n_cluster)
    return picks


def distill_labels(params: m.ModelParams, xs: list[np.ndarray], eta: float) -> np.ndarray:
    """Soft labels: the trained model's confidence-downscaled predictions."""
    return m.predict_proba(params, xs, eta=eta)


def update_knowledge(knowledge: KnowledgeCoreSet, domain_id: int,
                     new_entries: list[CoreSetEntry]) -> KnowledgeCoreSet:
    """Append one domain's exemplars; re-inserting a (domain, class) pair is an
    error, and each incoming class must fill the per-class budget exactly."""
    existing = {(e.domain_id, e.class_id) for e in knowledge.entries}
    incoming = {(e.domain_id, e.class_id) for e in new_entries}
    clash = existing & incoming
    if clash:
        raise ValueError(f"core-set already holds exemplars for {sorted(clash)}")
    if any(e.domain_id != domain_id for e in new_entries):
        raise ValueError("all new entries must come from the stated domain")
    counts: dict[int, int] = {}
    for e in new_entries:
        counts[e.class_id] = counts.get(e.class_id, 0) + 1
    off_budget = {c: n for c, n in counts.items() if n != knowledge.budget_per_class}
    if off_budget:
        raise ValueError(f"per-class exemplar counts {off_budget} do not match "
                         f"the budget {knowledge.budget_per_class}")
    knowledge.entries.extend(new_entries)
    return knowledge


@dataclass
class MemoryReport:
    stored_bytes: int
    model_float_count: int
    exemplar_fraction: float


def memory_report(knowledge: KnowledgeCoreSet, dataset_size: int,
                  typical_n: int, n_links: int, n_classes: int,
                  budget_per_class: int | None = None) -> MemoryReport:
    """Memory accounting of the core-set.

    stored_bytes counts the serialized footprint exactly as persisted (a
    complex CSI value is two stored scalars); model_float_count reproduces the
    idealized k * (N * L_H + C) * C * E floating-point tally for k stored
    domains; exemplar_fraction is C * E / M.
    """
    budget = knowledge.budget_per_class if budget_per_class is None else budget_per_class
    stored = 0
    for e in knowledge.entries:
        n = e.sequence.n_samples
        l_h = e.sequence.samples.shape[1]
        # u32 count + f64 timestamps + f32 interleaved re/im + u16 label
        stored += 4 + 8 * n + 8 * n * l_h + 2
    k = len(knowledge.domains)
    float_count = k * (typical_n * n_links + n_classes) * n_classes * budget
    fraction = n_classes * budget / dataset_size
    return MemoryReport(stored_bytes=stored, model_float_count=int(float_count),
                        exemplar_fraction=float(fraction))
