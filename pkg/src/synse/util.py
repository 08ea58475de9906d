"""Small shared helpers: stable softmax/sigmoid, seed derivation, hashing."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

# Role tags for deriving independent sub-seeds from one run seed.
ROLE_SYNTH = 1
ROLE_PARTITION = 2
ROLE_MODEL_INIT = 3
ROLE_TRAIN = 4
ROLE_GEN_UNSEEN = 5
ROLE_ZSL_CLF = 6
ROLE_SEEN_CLF = 7
ROLE_JOINT_SEEN = 8
ROLE_JOINT_CLF = 9
ROLE_GATE_SYNTH_TRAIN = 10
ROLE_GATE_SYNTH_VAL = 11


def derived_seed(base_seed: int, role: int) -> int:
    """Deterministically derive an independent child seed for one pipeline role."""
    seq = np.random.SeedSequence([int(base_seed), int(role)])
    return int(seq.generate_state(1, np.uint64)[0])


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax."""
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=axis, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_bytes(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())
