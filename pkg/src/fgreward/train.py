"""Mini-batch training of the reward head on report pairs.

Update rules, with gradient ``g`` of the batch loss and step size ``eta``:

``momentum`` (default)::

    v <- mu * v + g
    p <- p - eta * v

``adaptive`` (per-parameter scaling with bias-corrected moments)::

    m <- b1 * m + (1 - b1) * g
    s <- b2 * s + (1 - b2) * g**2
    p <- p - eta * (m / (1 - b1**t)) / (sqrt(s / (1 - b2**t)) + eps)

Pairs are reshuffled every epoch with ``default_rng([seed, epoch])``, so a
run resumed from an epoch checkpoint follows the same trajectory as an
uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ParseError, TrainingDiverged, ValidationError
from .features import featurize
from .loss import LossConfig, mre_arrays
from .model import RewardModel, backward_batch, forward_batch, model_bytes, model_from_bytes

CHECKPOINT_VERSION = 1
# Fields that do not change the parameter trajectory of completed epochs.
_UNHASHED = ("epochs", "eval_every", "patience")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 4
    batch_size: int = 6
    step_size: float = 0.01
    optimizer: str = "momentum"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    eval_every: int = 0
    patience: int | None = None
    allow_raw_margins: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1", "epochs")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1", "batch_size")
        if not self.step_size >= 0:
            raise ValidationError("step_size must be >= 0", "step_size")
        if self.optimizer not in ("momentum", "adaptive"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}", "optimizer")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["loss"] = LossConfig(**d["loss"])
        return cls(**d)


def config_hash(config: TrainConfig) -> str:
    d = {k: v for k, v in config.to_dict().items() if k not in _UNHASHED}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainState:
    model: RewardModel
    opt: dict
    epoch: int = 0
    t: int = 0
    log: list = field(default_factory=list)
    config: dict = field(default_factory=dict)


@dataclass
class TrainResult:
    model: RewardModel
    log: list
    state: TrainState


def pair_features(pairs, spec, table=None) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrices for accepted and rejected reports; texts featurized once."""
    cache: dict = {}

    def feat(ref, rec):
        key = (ref, rec.candidate_text, rec.id if table is not None else None)
        if key not in cache:
            cache[key] = featurize(spec, ref, rec.candidate_text, table, rec.id)
        return cache[key]

    Xw = np.vstack([feat(p.reference_text, p.accepted) for p in pairs])
    Xl = np.vstack([feat(p.reference_text, p.rejected) for p in pairs])
    return Xw, Xl


def _margins(pairs):
    M = np.array([p.sub_margins for p in pairs], dtype=float)
    Mtot = np.array([p.total_margin for p in pairs], dtype=float)
    return M, Mtot


def _loss_and_grad(model, Xw, Xl, M, Mtot, loss_cfg, grad=True):
    Rw, cw = forward_batch(model, Xw)
    Rl, cl = forward_batch(model, Xl)
    bd, dRw, dRl = mre_arrays(Rw, Rl, M, Mtot, loss_cfg, grad=grad)
    if not grad:
        return bd, Rw, Rl, None
    gw = backward_batch(model, cw, dRw)
    gl = backward_batch(model, cl, dRl)
    return bd, Rw, Rl, {k: gw[k] + gl[k] for k in gw}


def evaluate_pairs(model, Xw, Xl, M, Mtot, loss_cfg) -> dict:
    """Training-set loss terms and pair-ranking accuracy."""
    bd, Rw, Rl, _ = _loss_and_grad(model, Xw, Xl, M, Mtot, loss_cfg, grad=False)
    acc = float(np.mean(Rw.sum(axis=1) > Rl.sum(axis=1)))
    return {"l_ind": bd.l_ind, "l_tot": bd.l_tot, "l_total": bd.l_total,
            "pair_accuracy": acc}


def _new_opt(model: RewardModel) -> dict:
    opt = {}
    for k, v in model.params.items():
        opt["v:" + k] = np.zeros_like(v)
        opt["s:" + k] = np.zeros_like(v)
    return opt


def _update(model, opt, grads, config: TrainConfig, t: int) -> None:
    eta = config.step_size
    for k in model.param_names:
        g = grads[k]
        if config.optimizer == "momentum":
            v = opt["v:" + k]
            v *= config.momentum
            v += g
            model.params[k] = model.params[k] - eta * v
        else:
            m, s = opt["v:" + k], opt["s:" + k]
            m *= config.beta1
            m += (1 - config.beta1) * g
            s *= config.beta2
            s += (1 - config.beta2) * g * g
            mh = m / (1 - config.beta1 ** t)
            sh = s / (1 - config.beta2 ** t)
            model.params[k] = model.params[k] - eta * mh / (np.sqrt(sh) + config.eps)


def _snapshot(state: TrainState) -> TrainState:
    return TrainState(state.model.copy(), {k: v.copy() for k, v in state.opt.items()},
                      state.epoch, state.t, [dict(e) for e in state.log], dict(state.config))


def train(pairs, model: RewardModel, config: TrainConfig = TrainConfig(), *,
          state: TrainState | None = None, table=None, eval_fn=None) -> TrainResult:
    """Train ``model`` (copied, not mutated) for ``config.epochs`` epochs.

    ``state`` continues a run from a checkpoint; training proceeds from
    ``state.epoch`` up to ``config.epochs``. ``eval_fn(model) -> dict`` is
    merged into the log every ``eval_every`` epochs.
    """
    if not pairs:
        raise ValidationError("no training pairs")
    systems = {p.system for p in pairs}
    if systems != {model.system_name}:
        raise ValidationError(f"pairs for systems {sorted(systems)} but model is for "
                              f"{model.system_name!r}")
    if len(pairs[0].sub_margins) != model.n_outputs:
        raise ValidationError("pair sub-margins do not match the model's output count")
    if not config.allow_raw_margins and not all(p.normalized for p in pairs):
        raise ValidationError("pairs must be margin-normalized before training")

    if state is None:
        state = TrainState(model.copy(), _new_opt(model), config=config.to_dict())
    else:
        state = _snapshot(state)
        state.config = config.to_dict()
    Xw, Xl = pair_features(pairs, state.model.spec, table)
    M, Mtot = _margins(pairs)
    K = len(pairs)

    if not state.log:
        entry = {"epoch": 0, **evaluate_pairs(state.model, Xw, Xl, M, Mtot, config.loss)}
        state.log.append(entry)

    best, stale = min(e["l_total"] for e in state.log), 0
    while state.epoch < config.epochs:
        order = np.random.default_rng([config.seed, state.epoch]).permutation(K)
        good = _snapshot(state)
        for start in range(0, K, config.batch_size):
            idx = order[start:start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                try:
                    bd, _, _, grads = _loss_and_grad(state.model, Xw[idx], Xl[idx], M[idx],
                                                     Mtot[idx], config.loss)
                except NumericError:
                    raise TrainingDiverged(f"non-finite rewards at step {state.t + 1}",
                                           good) from None
                state.t += 1
                _update(state.model, state.opt, grads, config, state.t)
            if not np.isfinite(bd.l_total) or not all(
                    np.all(np.isfinite(v)) for v in state.model.params.values()):
                raise TrainingDiverged(f"non-finite loss at step {state.t}", good)
        state.epoch += 1
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                stats = evaluate_pairs(state.model, Xw, Xl, M, Mtot, config.loss)
            except NumericError:
                stats = {"l_total": float("nan")}
        if not np.isfinite(stats["l_total"]):
            raise TrainingDiverged(f"non-finite loss after epoch {state.epoch}", good)
        entry = {"epoch": state.epoch, **stats}
        if eval_fn is not None and config.eval_every and state.epoch % config.eval_every == 0:
            entry.update(eval_fn(state.model))
        state.log.append(entry)
        if config.patience is not None:
            if entry["l_total"] < best:
                best, stale = entry["l_total"], 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return TrainResult(state.model, state.log, state)


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def checkpoint(state: TrainState, path) -> None:
    meta = {"version": CHECKPOINT_VERSION, "epoch": state.epoch, "t": state.t,
            "log": state.log, "config": state.config,
            "config_hash": config_hash(TrainConfig.from_dict(state.config))}
    arrays = {"opt:" + k: v for k, v in state.opt.items()}
    arrays["model"] = np.frombuffer(model_bytes(state.model), dtype=np.uint8)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def resume(path, config: TrainConfig | None = None) -> TrainState:
    """Load a checkpoint; refuse if ``config`` would change the trajectory."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            model = model_from_bytes(bytes(z["model"]))
            opt = {k[4:]: z[k].copy() for k in z.files if k.startswith("opt:")}
    except (zipfile.BadZipFile, KeyError, ValueError, OSError, EOFError) as exc:
        raise ParseError(f"corrupt checkpoint {path}: {exc}") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {meta.get('version')}")
    if config is not None and config_hash(config) != meta["config_hash"]:
        saved = meta["config"]
        now = config.to_dict()
        diff = {k: (saved.get(k), now[k]) for k in now
                if k not in _UNHASHED and saved.get(k) != now[k]}
        raise ValidationError(f"checkpoint config differs: {diff}", "config")
    return TrainState(model, opt, meta["epoch"], meta["t"], meta["log"], meta["config"])
