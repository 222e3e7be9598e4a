"""Discrete structure from reduced coordinates: clusters and transition graphs."""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import DBSCAN

from .errors import ValidationError

__all__ = ["TransitionGraph", "cluster_states", "extract_graph", "canonical_labels"]


def cluster_states(coords, radius=0.1, min_pts=5):
    """DBSCAN labels of state coordinates; ``-1`` marks noise."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    if coords.shape[0] < 1:
        raise ValidationError("nothing to cluster")
    if not radius > 0 or min_pts < 1:
        raise ValidationError("radius must be > 0 and min_pts >= 1")
    labels = DBSCAN(eps=radius, min_samples=min_pts).fit_predict(coords)
    return canonical_labels(labels)


def canonical_labels(labels):
    """Relabel clusters by decreasing size, ties by first occurrence."""
    labels = np.asarray(labels)
    ids = [c for c in np.unique(labels) if c >= 0]
    first = {c: int(np.argmax(labels == c)) for c in ids}
    order = sorted(ids, key=lambda c: (-np.sum(labels == c), first[c]))
    out = np.full(labels.shape, -1, dtype=int)
    for new, old in enumerate(order):
        out[labels == old] = new
    return out


def _entropy(p):
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum()) + 0.0 if p.size else 0.0


def _symbol_value(v):
    v = float(v)
    return int(v) if v.is_integer() else v


@dataclass
class TransitionGraph:
    """Clusters with probabilities plus symbol-labelled edges.

    ``clusters`` entries: ``id, probability, count, centroid``.
    ``edges`` entries: ``source, target, symbol, probability, count``.
    ``unifilarity`` maps ``(cluster, symbol)`` to the entropy in bits of the
    successor-cluster distribution; 0 means the symbol determines the
    successor.
    """

    clusters: list
    edges: list
    noise: int
    unifilarity: dict = field(default_factory=dict)

    def outgoing(self, source):
        return [e for e in self.edges if e["source"] == source]

    def edge(self, source, target, symbol):
        for e in self.edges:
            if (e["source"], e["target"], e["symbol"]) == (source, target, symbol):
                return e
        return None

    def to_dict(self):
        return {
            "clusters": self.clusters,
            "edges": self.edges,
            "noise": self.noise,
            "unifilarity": [
                {"cluster": c, "symbol": s, "entropy_bits": h}
                for (c, s), h in sorted(self.unifilarity.items())
            ],
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_dot(self):
        lines = ["digraph transitions {", "  rankdir=LR;"]
        for c in self.clusters:
            lines.append(f'  c{c["id"]} [label="{c["id"]}\\np={c["probability"]:.3f}"];')
        for e in self.edges:
            lines.append(
                f'  c{e["source"]} -> c{e["target"]} [label="{e["symbol"]} | {e["probability"]:.3f}"];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


def extract_graph(labels, pairs, symbols=None, coords=None):
    """Count labelled transitions between consecutive samples.

    An edge ``(c, c', v)`` is counted when sample ``i`` is in cluster ``c``,
    the next observation is ``v`` and sample ``i+1`` is in ``c'``. Pairs
    touching a noise point are skipped.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (len(pairs),):
        raise ValidationError("labels must have one entry per sample")
    if symbols is None:
        symbols = pairs.next_symbols()
    symbols = np.asarray(symbols)
    i, j = pairs.successor_index(1)
    if len(i) == 0:
        raise ValidationError("no consecutive sample pairs")
    noise = int(np.sum(labels < 0))
    members = labels >= 0
    if not np.any(members):
        raise ValidationError("every sample is labelled noise")
    total = members.sum()
    clusters = []
    for c in np.unique(labels[members]):
        mask = labels == c
        entry = {"id": int(c), "probability": float(mask.sum() / total), "count": int(mask.sum())}
        if coords is not None:
            entry["centroid"] = np.asarray(coords)[mask].mean(axis=0).tolist()
        clusters.append(entry)

    keep = members[i] & members[j]
    src, dst, sym = labels[i[keep]], labels[j[keep]], symbols[i[keep]]
    edges, unifilar = [], {}
    for c in np.unique(src):
        from_c = src == c
        n_out = from_c.sum()
        for v in np.unique(sym[from_c]):
            with_v = from_c & (sym == v)
            targets, counts = np.unique(dst[with_v], return_counts=True)
            unifilar[(int(c), _symbol_value(v))] = _entropy(counts / counts.sum())
            for t, n in zip(targets, counts):
                edges.append({
                    "source": int(c),
                    "target": int(t),
                    "symbol": _symbol_value(v),
                    "probability": float(n / n_out),
                    "count": int(n),
                })
    return TransitionGraph(clusters=clusters, edges=edges, noise=noise, unifilarity=unifilar)
