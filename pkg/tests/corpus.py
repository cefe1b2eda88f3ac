"""Deterministic spin systems (Ω ≤ 4096) with targets computed by brute force."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from oracles import boltzmann_brute, spin_energy, spin_words


@dataclass
class SpinInstance:
    name: str
    J: np.ndarray
    labels: tuple
    values: np.ndarray  # shape (Ω, len(labels)), lexicographic word order
    targets: dict


def _couplings(rng, n, kind):
    if kind == "ring":
        J = np.zeros((n, n))
        for i in range(n):
            J[i, (i + 1) % n] = J[(i + 1) % n, i] = 1.0
        return J
    J = np.triu(rng.normal(size=(n, n)), 1)
    return J + J.T


def build_corpus(seed=2024):
    rng = np.random.default_rng(seed)
    plan = [(2, "ring", 1), (3, "random", 1), (4, "ring", 1), (4, "random", 2), (5, "random", 2),
            (6, "random", 1), (6, "ring", 2), (8, "random", 2), (9, "random", 1), (10, "random", 2),
            (11, "ring", 2), (12, "random", 2)]
    corpus = []
    for n, kind, n_free in plan:
        J = _couplings(rng, n, kind)
        words = spin_words(n)
        labels = ("energy", "magnetization")[:n_free]
        values = np.array([[spin_energy(w, J), float(w.sum())][:n_free] for w in words])
        lam = rng.normal(scale=0.6, size=n_free)
        p, _ = boltzmann_brute(values, lam)
        targets = {lab: float(np.dot(p, values[:, i])) for i, lab in enumerate(labels)}
        corpus.append(SpinInstance(f"{kind}{n}-{n_free}free", J, labels, values, targets))
    return corpus
