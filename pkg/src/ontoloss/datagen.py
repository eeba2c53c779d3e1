"""Synthetic ontologies and datasets, splits, and fingerprint diversity selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ontology import OntologyGraph, ancestor_masks, compile_constraints, descendant_masks


class InfeasibleSpec(ValueError):
    pass


@dataclass
class Dataset:
    """Feature rows with crisp labels; ``labelled[i] == False`` marks an unlabelled row."""

    features: np.ndarray
    labels: np.ndarray
    labelled: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.labelled = np.asarray(self.labelled, dtype=bool)
        n = len(self.features)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("features and labels must be 2-D")
        if len(self.labels) != n or len(self.labelled) != n:
            raise ValueError("features, labels and labelled flags differ in length")
        self.labels[~self.labelled] = 0

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.features[idx], self.labels[idx], self.labelled[idx])

    @staticmethod
    def concat(*parts: "Dataset") -> "Dataset":
        return Dataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.labelled for p in parts]),
        )

    def unlabel(self) -> "Dataset":
        return Dataset(self.features, np.zeros_like(self.labels), np.zeros(len(self), dtype=bool))


def write_dataset(ds: Dataset, path) -> None:
    lines = [f"{ds.feature_dim}\t{ds.n_labels}"]
    for x, y, flag in zip(ds.features, ds.labels, ds.labelled):
        lines.append(
            ",".join(repr(float(v)) for v in x) + "|" + ",".join(str(int(v)) for v in y) + f"|{int(flag)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        try:
            dim, n_labels = int(header[0]), int(header[1])
        except (ValueError, IndexError):
            raise ValueError(f"{path}:1: header must be 'feature_dim<TAB>n_labels'") from None
        feats, labels, flags = [], [], []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("|")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'features|labels|flag'")
            x = [float(v) for v in parts[0].split(",")] if dim else []
            y = [int(v) for v in parts[1].split(",")] if n_labels else []
            if len(x) != dim or len(y) != n_labels or parts[2] not in ("0", "1"):
                raise ValueError(f"{path}:{lineno}: row does not match header dimensions")
            feats.append(x)
            labels.append(y)
            flags.append(parts[2] == "1")
    return Dataset(
        np.array(feats, dtype=float).reshape(-1, dim),
        np.array(labels, dtype=np.int8).reshape(-1, n_labels),
        np.array(flags, dtype=bool),
    )


@dataclass
class SyntheticSpec:
    n_classes: int = 50
    dag_density: float = 0.08
    n_disjoint_axioms: int = 8
    n_samples: int = 5000
    feature_dim: int = 64
    label_noise: float = 0.0
    seed: int = 0
    signal: float = 1.0
    noise: float = 1.0
    inherit: float = 0.8

    def __post_init__(self):
        if self.n_classes < 1 or self.n_samples < 0 or self.feature_dim < 1:
            raise InfeasibleSpec("n_classes and feature_dim must be positive")
        if not 0 <= self.dag_density <= 1 or not 0 <= self.label_noise < 1:
            raise InfeasibleSpec("dag_density must be in [0, 1] and label_noise in [0, 1)")
        if not 0 <= self.inherit < 1:
            raise InfeasibleSpec("inherit must be in [0, 1)")


@dataclass
class SyntheticWorld:
    """Everything needed to draw more rows from the same generative process."""

    graph: OntologyGraph
    prototypes: np.ndarray
    closure: np.ndarray
    spec: SyntheticSpec = field(repr=False)

    def constraints(self):
        return compile_constraints(self.graph)

    def sample(self, n: int, rng: np.random.Generator, shift: Optional[np.ndarray] = None,
               label_noise: Optional[float] = None) -> Dataset:
        """Draw ``n`` rows: one latent class each, labels are its upward closure."""
        latent = rng.integers(0, len(self.closure), size=n)
        labels = self.closure[latent].copy()
        features = self.spec.signal * self.prototypes[latent]
        features = features + self.spec.noise * rng.standard_normal((n, self.prototypes.shape[1]))
        if shift is not None:
            features = features + shift
        noise = self.spec.label_noise if label_noise is None else label_noise
        if noise > 0:
            flips = rng.random(labels.shape) < noise
            labels = np.where(flips, 1 - labels, labels)
        return Dataset(features, labels.astype(np.int8), np.ones(n, dtype=bool))


def class_names(n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"C{i:0{width}d}" for i in range(n)]


def generate(spec: SyntheticSpec) -> tuple[SyntheticWorld, Dataset]:
    """Random DAG ontology, disjointness axioms and a closure-consistent dataset.

    Class ``i`` may only subsume classes ``j > i`` so the graph is acyclic by
    construction.  With ``inherit > 0`` subclasses resemble their parents in
    feature space.  Disjoint pairs share no descendant (reflexively), hence no
    row labelled by upward closure can carry both.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_classes
    names = class_names(n)
    upper = np.triu(rng.random((n, n)) < spec.dag_density, k=1)
    edges = [(int(child), int(parent)) for parent, child in zip(*np.nonzero(upper))]
    graph = OntologyGraph.from_pairs(names, edges)

    anc = ancestor_masks(graph)
    desc = descendant_masks(graph)
    eligible = [
        (a, b)
        for a in range(n)
        for b in range(a + 1, n)
        if not ((desc[a] | 1 << a) & (desc[b] | 1 << b))
    ]
    if spec.n_disjoint_axioms > len(eligible):
        raise InfeasibleSpec(
            f"{spec.n_disjoint_axioms} disjointness axioms requested, only {len(eligible)} eligible pairs"
        )
    chosen = rng.choice(len(eligible), size=spec.n_disjoint_axioms, replace=False)
    for i in sorted(chosen):
        a, b = eligible[i]
        graph.add_disjointness(names[a], names[b])

    closure = np.zeros((n, n), dtype=np.int8)
    for i in range(n):
        closure[i, i] = 1
        m = anc[i]
        while m:
            low = m & -m
            closure[i, low.bit_length() - 1] = 1
            m ^= low

    # a class prototype mixes the mean of its parents' prototypes with fresh
    # noise; parents have smaller indices so one forward pass suffices
    prototypes = rng.standard_normal((n, spec.feature_dim))
    if spec.inherit > 0:
        fresh = np.sqrt(1.0 - spec.inherit ** 2)
        for i, parents in enumerate(graph.parents()):
            if parents:
                prototypes[i] = spec.inherit * prototypes[parents].mean(axis=0) + fresh * prototypes[i]
    world = SyntheticWorld(graph=graph, prototypes=prototypes, closure=closure, spec=spec)
    return world, world.sample(spec.n_samples, rng)


def tanimoto(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"fingerprint lengths differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def tanimoto_matrix(fps) -> np.ndarray:
    f = np.asarray(fps, dtype=np.int64)
    inter = f @ f.T
    ones = f.sum(axis=1)
    union = ones[:, None] + ones[None, :] - inter
    return np.divide(inter, union, out=np.zeros(inter.shape), where=union > 0)


def diversity_subsample(pool, group_size: int, keep_per_group: int, seed: int) -> np.ndarray:
    """Keep the least self-similar fingerprints from each shuffled group.

    An item's score is the sum of its Tanimoto similarities to the other group
    members.  A trailing partial group keeps ``floor(keep * len / group_size)``.
    Returns sorted indices into ``pool``.
    """
    pool = np.asarray(pool, dtype=bool)
    if len(pool) == 0:
        raise ValueError("empty fingerprint pool")
    if not 0 <= keep_per_group <= group_size or group_size < 1:
        raise ValueError("need 0 <= keep_per_group <= group_size and group_size >= 1")
    order = np.random.default_rng(seed).permutation(len(pool))
    selected = []
    for start in range(0, len(pool), group_size):
        members = order[start:start + group_size]
        keep = keep_per_group if len(members) == group_size else keep_per_group * len(members) // group_size
        if keep == 0:
            continue
        sim = tanimoto_matrix(pool[members])
        scores = np.round(sim.sum(axis=1) - np.diag(sim), 12)
        ranked = np.lexsort((members, scores))
        selected.extend(members[ranked[:keep]])
    return np.sort(np.array(selected, dtype=np.intp))


def random_fingerprints(n: int, n_clusters: int, length: int = 128, flip_prob: float = 0.05,
                        seed: int = 0, density: float = 0.3, weights=None) -> np.ndarray:
    """Fingerprints drawn around random per-cluster bit templates.

    ``weights`` sets the cluster proportions (uniform when omitted).
    """
    rng = np.random.default_rng(seed)
    templates = rng.random((n_clusters, length)) < density
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n_clusters,) or (weights < 0).any() or weights.sum() <= 0:
            raise ValueError("weights must be non-negative, one per cluster")
        weights = weights / weights.sum()
    cluster = rng.choice(n_clusters, size=n, p=weights)
    flips = rng.random((n, length)) < flip_prob
    return templates[cluster] ^ flips


def write_fingerprints(fps, path) -> None:
    fps = np.asarray(fps, dtype=bool)
    width = -(-fps.shape[1] // 4)
    lines = []
    for row in fps:
        value = 0
        for bit in row:
            value = (value << 1) | int(bit)
        value <<= width * 4 - len(row)
        lines.append(f"{value:0{width}x}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_fingerprints(path, n_bits: Optional[int] = None) -> np.ndarray:
    rows = [line.strip() for line in Path(path).read_text(encoding="ascii").splitlines() if line.strip()]
    if not rows:
        return np.zeros((0, n_bits or 0), dtype=bool)
    width = len(rows[0])
    n_bits = width * 4 if n_bits is None else n_bits
    out = np.zeros((len(rows), n_bits), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}:{i + 1}: fingerprint length differs from the first row")
        bits = bin(int(row, 16))[2:].zfill(width * 4)
        out[i] = [c == "1" for c in bits[:n_bits]]
    return out


def split(n: int, ratios: Sequence[float] = (340, 9, 51), seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle cut into train/val/test; rounding remainder goes to train."""
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError("ratios must be three non-negative numbers with a positive sum")
    total = sum(ratios)
    n_val = math.floor(n * ratios[1] / total + 1e-9)
    n_test = math.floor(n * ratios[2] / total + 1e-9)
    n_train = n - n_val - n_test
    for name, size, r in zip(("train", "val", "test"), (n_train, n_val, n_test), ratios):
        if r > 0 and size == 0:
            raise ValueError(f"{name} split is empty for {n} samples at ratios {ratios}")
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
