"""Versioned text checkpoints.

A checkpoint is a UTF-8 text file:

    crowdner-checkpoint v1
    meta <one-line JSON object>
    param <name> <rows> <cols>
    <one line per row: space-separated C double hex literals>
    ...

Values are written with float.hex(), so save/load round-trips every
parameter bit for bit, and identical runs produce identical files.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = "crowdner-checkpoint v1"


def save_params(path, arrays, meta=None):
    """Write a name -> 2-D float64 array map (plus optional JSON metadata)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        if meta is not None:
            fh.write("meta " + json.dumps(meta, sort_keys=True, ensure_ascii=False) + "\n")
        for name in sorted(arrays):
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.ndim != 2:
                raise ValueError(f"parameter {name!r} is not 2-D")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"parameter {name!r} contains NaN or Inf")
            fh.write(f"param {name} {a.shape[0]} {a.shape[1]}\n")
            for r in a:
                fh.write(" ".join(x.hex() for x in r.tolist()) + "\n")


def load_params(path):
    """Read back (arrays, meta); meta is None when absent."""
    arrays = {}
    meta = None
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (header {magic!r})")
        line = fh.readline()
        if line.startswith("meta "):
            meta = json.loads(line[5:])
            line = fh.readline()
        while line:
            parts = line.split()
            if len(parts) != 4 or parts[0] != "param":
                raise ValueError(f"malformed parameter header {line!r}")
            name, rows, cols = parts[1], int(parts[2]), int(parts[3])
            a = np.empty((rows, cols))
            for r in range(rows):
                fields = fh.readline().split()
                if len(fields) != cols:
                    raise ValueError(f"parameter {name!r}: row {r} has {len(fields)} values")
                a[r] = [float.fromhex(x) for x in fields]
            arrays[name] = a
            line = fh.readline()
    return arrays, meta


def save_model(path, tagger, vocab, workers):
    """Checkpoint a tagger together with everything needed to rebuild it:
    model config, label set, character vocabulary and worker order."""
    meta = {
        "kind": "crowdner-model",
        "config": tagger.config.to_dict(),
        "vocab": vocab.to_dict(),
        "workers": list(workers),
    }
    save_params(path, tagger.param_arrays(), meta)


def load_model(path):
    """Rebuild (tagger, vocab, workers) from a model checkpoint."""
    from .data import Vocabulary
    from .model import CrowdTagger, ModelConfig

    arrays, meta = load_params(path)
    if not meta or meta.get("kind") != "crowdner-model":
        raise ValueError("checkpoint does not hold a model")
    config = ModelConfig.from_dict(meta["config"])
    tagger = CrowdTagger(config, np.random.default_rng(0))
    tagger.load_param_arrays(arrays)
    vocab = Vocabulary.from_dict(meta["vocab"])
    return tagger, vocab, list(meta["workers"])
