"""Synthetic sequence data with planted cluster structure."""
from __future__ import annotations

from importlib import resources

import numpy as np

from .sequences import SequenceDataset, from_event_lists, load_dataset

__all__ = ["make_planted_sequences", "load_synthetic"]


def _templates(rng, n_templates, length, codes, min_diff):
    for _ in range(1000):
        t = rng.integers(0, len(codes), size=(n_templates, length))
        diffs = [(t[a] != t[b]).sum() for a in range(n_templates) for b in range(a + 1, n_templates)]
        if not diffs or min(diffs) >= min_diff:
            return t
    raise RuntimeError("could not draw sufficiently distinct templates")


def make_planted_sequences(n: int = 60, n_templates: int = 3, length: int = 6, n_codes: int = 8,
                           noise: float = 0.1, indel_every: int = 5, min_diff: int = 4,
                           seed: int = 0) -> SequenceDataset:
    """Noisy copies of a few random template sequences.

    Cases are assigned to templates round-robin. Each position is replaced by
    a different random code with probability ``noise``, and every
    ``indel_every``-th case receives one random insertion or deletion. The
    template index is stored in the ``template`` label column.
    """
    rng = np.random.default_rng(seed)
    codes = [chr(ord("A") + i) for i in range(n_codes)]
    templates = _templates(rng, n_templates, length, codes, min_diff)
    lists, truth = [], []
    for i in range(n):
        t = i % n_templates
        seq = templates[t].copy()
        flip = rng.random(length) < noise
        for p in np.flatnonzero(flip):
            seq[p] = (seq[p] + rng.integers(1, n_codes)) % n_codes
        seq = seq.tolist()
        if indel_every and (i + 1) % indel_every == 0:
            if rng.random() < 0.5 and len(seq) > 1:
                del seq[int(rng.integers(0, len(seq)))]
            else:
                seq.insert(int(rng.integers(0, len(seq) + 1)), int(rng.integers(0, n_codes)))
        lists.append([codes[c] for c in seq])
        truth.append(str(t))
    return from_event_lists(lists, labels={"template": truth})


def load_synthetic() -> SequenceDataset:
    """The bundled 60-case, 3-template fixture (long format)."""
    ref = resources.files("seqom") / "data" / "synthetic60.csv"
    with resources.as_file(ref) as path:
        return load_dataset(path, "long")
