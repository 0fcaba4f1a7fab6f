"""Multi-reward head: one reward per criterion, summed into the final score.

Architectures::

    linear  r = W v + b
    mlp     r = W2 tanh(W1 v + b1) + b2

Model file layout (all integers little-endian)::

    8 bytes   magic  b"FGRWMDL\\0"
    uint32    format version (currently 1)
    uint32    header length in bytes
    header    UTF-8 JSON: version, system_name, n_outputs, spec, arch, hidden,
              params (list of [name, shape] in storage order)
    payload   each parameter array as little-endian float64, C order
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatVersionError, ParseError, StructuralError, ValidationError
from .features import FeatureSpec, featurize

MAGIC = b"FGRWMDL\0"
FORMAT_VERSION = 1
ARCHES = ("linear", "mlp")


@dataclass
class RewardModel:
    spec: FeatureSpec
    n_outputs: int
    system_name: str
    arch: str = "linear"
    hidden: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHES:
            raise ValidationError(f"unknown arch {self.arch!r}", "arch")
        if self.arch == "mlp" and self.hidden < 1:
            raise ValidationError("mlp needs hidden >= 1", "hidden")
        if self.n_outputs < 1:
            raise ValidationError("n_outputs must be >= 1", "n_outputs")

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("W", "b") if self.arch == "linear" else ("W1", "b1", "W2", "b2")

    def param_shapes(self) -> dict:
        d, n, h = self.spec.dim, self.n_outputs, self.hidden
        if self.arch == "linear":
            return {"W": (n, d), "b": (n,)}
        return {"W1": (h, d), "b1": (h,), "W2": (n, h), "b2": (n,)}

    def copy(self) -> "RewardModel":
        return RewardModel(self.spec, self.n_outputs, self.system_name, self.arch, self.hidden,
                           {k: v.copy() for k, v in self.params.items()})


@dataclass(frozen=True)
class RewardVector:
    values: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.values))


def init_model(spec: FeatureSpec, n_outputs: int, system_name: str, arch: str = "linear",
               hidden: int = 0, seed: int = 0, init: str = "uniform") -> RewardModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from a fixed seed, biases zero.

    ``init="zeros"`` zeroes every parameter instead.
    """
    model = RewardModel(spec, n_outputs, system_name, arch, hidden)
    rng = np.random.default_rng(seed)
    for name, shape in model.param_shapes().items():
        if init == "zeros" or name.startswith("b"):
            model.params[name] = np.zeros(shape)
        elif init == "uniform":
            bound = 1.0 / np.sqrt(shape[1])
            model.params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            raise ValidationError(f"unknown init {init!r}", "init")
    return model


def forward_batch(model: RewardModel, X: np.ndarray):
    """Rewards for each row of ``X``; returns ``(R, cache)`` with ``R`` of shape (B, N)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.spec.dim:
        raise StructuralError(f"features of shape {X.shape} do not match dim {model.spec.dim}")
    p = model.params
    if model.arch == "linear":
        return X @ p["W"].T + p["b"], (X,)
    H = np.tanh(X @ p["W1"].T + p["b1"])
    return H @ p["W2"].T + p["b2"], (X, H)


def backward_batch(model: RewardModel, cache, dR: np.ndarray) -> dict:
    """Parameter gradients given ``dR = dLoss/dR`` for the rows in ``cache``."""
    p = model.params
    if model.arch == "linear":
        (X,) = cache
        return {"W": dR.T @ X, "b": dR.sum(axis=0)}
    X, H = cache
    dA = (dR @ p["W2"]) * (1.0 - H * H)
    return {"W1": dA.T @ X, "b1": dA.sum(axis=0), "W2": dR.T @ H, "b2": dR.sum(axis=0)}


def forward(model: RewardModel, features) -> RewardVector:
    v = np.asarray(features, dtype=float)
    if v.ndim != 1:
        raise StructuralError("forward expects a single feature vector")
    R, _ = forward_batch(model, v[None, :])
    return RewardVector(R[0])


def score_report(model: RewardModel, reference: str, candidate: str,
                 table=None, record_id=None) -> tuple[RewardVector, float]:
    """Per-criterion rewards and their sum for one candidate."""
    rv = forward(model, featurize(model.spec, reference, candidate, table, record_id))
    return rv, rv.total


def score_many(model: RewardModel, items, table=None) -> np.ndarray:
    """Reward matrix (B, N) for ``(reference, candidate[, record_id])`` tuples."""
    from .features import featurize_many
    R, _ = forward_batch(model, featurize_many(model.spec, items, table))
    return R


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def model_bytes(model: RewardModel) -> bytes:
    shapes = model.param_shapes()
    header = {
        "version": FORMAT_VERSION,
        "system_name": model.system_name,
        "n_outputs": model.n_outputs,
        "spec": model.spec.to_dict(),
        "arch": model.arch,
        "hidden": model.hidden,
        "params": [[name, list(shapes[name])] for name in model.param_names],
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(raw)), raw]
    for name in model.param_names:
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        if arr.shape != shapes[name]:
            raise StructuralError(f"parameter {name} has shape {arr.shape}")
        out.append(arr.tobytes())
    return b"".join(out)


def model_from_bytes(data: bytes, system_name: str | None = None) -> RewardModel:
    if len(data) < 16 or data[:8] != MAGIC:
        raise ParseError("not a reward model file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"model format version {version}; expected {FORMAT_VERSION}")
    if 16 + hlen > len(data):
        raise ParseError("model file truncated in header")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        spec = FeatureSpec.from_dict(header["spec"])
        stored_system = header["system_name"]
        shape_info = [(str(n), [int(d) for d in s]) for n, s in header["params"]]
        model = RewardModel(spec, int(header["n_outputs"]), stored_system, header["arch"],
                            int(header["hidden"]))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError):
        raise ParseError("corrupt model header") from None
    if system_name is not None and stored_system != system_name:
        raise ValidationError(
            f"model was trained for system {stored_system!r}, not {system_name!r}",
            "system_name")
    expected = model.param_shapes()
    if {n: tuple(s) for n, s in shape_info} != expected:
        raise ParseError("model header parameter shapes do not match its architecture")
    offset = 16 + hlen
    for name, shape in shape_info:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise ParseError(f"model file truncated in parameter {name}")
        model.params[name] = np.frombuffer(data[offset:end], dtype="<f8").astype(float).reshape(shape)
        offset = end
    if offset != len(data):
        raise ParseError("trailing bytes after model parameters")
    if any(not np.all(np.isfinite(v)) for v in model.params.values()):
        raise ValidationError("model contains non-finite parameters")
    return model


def save_model(model: RewardModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path, system_name: str | None = None) -> RewardModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read(), system_name)
