"""Small numpy feed-forward networks, losses, AdamW and the training loop.

A network is ``[projection] -> hidden layers (ReLU + dropout) -> 2-logit head``.
The *representation* is the output of the last hidden layer (the input to
the head). Training runs in float64; checkpoints hold float32 weights and
every forward pass of a checkpoint uses exactly those weights.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError, ValidationError
from .evaluation import map_from_arrays

CHECKPOINT_MAGIC = b"CWCKPT1"
CHECKPOINT_VERSION = 1

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8

# Learning rates used for the pretrained encoders and baselines; presets only.
LR_PRESETS = {
    "hubert": 7e-5,
    "wav2vec2": 5e-5,
    "data2vec-audio": 5e-5,
    "bert": 2e-5,
    "bert-single-speaker": 1e-5,
    "fnn-entities": 0.05,
}


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = ()
    n_classes: int = 2
    dropout: float | tuple[float, ...] = 0.0
    # Optional per-block linear projection of the input: ((width, proj_dim or None), ...).
    input_blocks: tuple[tuple[int, int | None], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if isinstance(self.dropout, (int, float)):
            object.__setattr__(self, "dropout", (float(self.dropout),) * len(self.hidden_dims))
        else:
            object.__setattr__(self, "dropout", tuple(float(p) for p in self.dropout))
        object.__setattr__(self, "input_blocks",
                           tuple((int(w), None if p is None else int(p)) for w, p in self.input_blocks))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims) or self.n_classes < 2:
            raise ConfigError(f"invalid network dimensions: {self}")
        drops = self.dropouts
        if len(drops) != len(self.hidden_dims) or any(not 0.0 <= p < 1.0 for p in drops):
            raise ConfigError(f"dropout must be in [0, 1) for each hidden layer, got {self.dropout}")
        if self.input_blocks:
            if sum(w for w, _ in self.input_blocks) != self.input_dim:
                raise ConfigError("input block widths must sum to input_dim")
            if any(p is not None and p < 1 for _, p in self.input_blocks):
                raise ConfigError("projection widths must be positive")

    @property
    def dropouts(self) -> tuple[float, ...]:
        return self.dropout

    @property
    def projected_dim(self) -> int:
        if not self.input_blocks:
            return self.input_dim
        return sum(w if p is None else p for w, p in self.input_blocks)

    @property
    def rep_dim(self) -> int:
        return self.hidden_dims[-1] if self.hidden_dims else self.projected_dim

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes = []
        for w, p in self.input_blocks:
            if p is not None:
                shapes += [(w, p), (p,)]
        dims = [self.projected_dim, *self.hidden_dims]
        for a, b in zip(dims[:-1], dims[1:]):
            shapes += [(a, b), (b,)]
        shapes += [(dims[-1], self.n_classes), (self.n_classes,)]
        return shapes

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_dims": list(self.hidden_dims),
                "n_classes": self.n_classes, "dropout": list(self.dropout),
                "input_blocks": [list(b) for b in self.input_blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        drop = d.get("dropout", 0.0)
        return cls(d["input_dim"], tuple(d["hidden_dims"]), d.get("n_classes", 2),
                   tuple(drop) if isinstance(drop, list) else drop,
                   tuple(tuple(b) for b in d.get("input_blocks", [])))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 15
    warmup_proportion: float = 0.1
    weight_decay: float = 0.02
    batch_size: int = 32
    seed: int = 0
    lam: float = 0.75  # alignment-loss weight; classification gets 1 - lam

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.warmup_proportion <= 1.0:
            raise ConfigError(f"warmup_proportion must be in [0, 1], got {self.warmup_proportion}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")


# ---------------------------------------------------------------------------
# model


@dataclass
class Cache:
    x: np.ndarray
    proj_in: list
    acts: list          # input to each hidden layer, then the representation
    pre: list           # pre-activations of hidden layers
    masks: list         # dropout multipliers (None when inactive)


class Mlp:
    def __init__(self, spec: MlpSpec, params: Sequence[np.ndarray]):
        shapes = spec.param_shapes()
        if len(params) != len(shapes):
            raise ShapeError(f"expected {len(shapes)} parameter arrays, got {len(params)}")
        for p, s in zip(params, shapes):
            if tuple(p.shape) != s:
                raise ShapeError(f"parameter shape {p.shape} != {s}")
        self.spec = spec
        self.params = [np.array(p, dtype=np.float64) for p in params]

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        params = []
        shapes = spec.param_shapes()
        n_hidden = len(spec.hidden_dims)
        n_proj = len(shapes) // 2 - n_hidden - 1
        for i in range(0, len(shapes), 2):
            fan_in, fan_out = shapes[i]
            layer = i // 2
            relu = n_proj <= layer < n_proj + n_hidden
            std = math.sqrt((2.0 if relu else 1.0) / fan_in)
            params.append(rng.normal(0.0, std, (fan_in, fan_out)))
            # Small positive ReLU bias keeps all-zero inputs off the kink.
            params.append(np.full(fan_out, 0.01 if relu else 0.0))
        return cls(spec, params)

    def copy(self) -> "Mlp":
        return Mlp(self.spec, [p.copy() for p in self.params])

    @property
    def head(self) -> list[np.ndarray]:
        return self.params[-2:]

    def forward(self, x, train: bool = False, rng: np.random.Generator | None = None):
        """Return ``(representation, logits, cache)``; dropout only when ``train``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"batch shape {x.shape} does not match input_dim {self.spec.input_dim}")
        k = 0
        proj_in = []
        if self.spec.input_blocks:
            parts, col = [], 0
            for w, p in self.spec.input_blocks:
                xb = x[:, col:col + w]
                col += w
                proj_in.append(xb)
                if p is None:
                    parts.append(xb)
                else:
                    W, b = self.params[k], self.params[k + 1]
                    k += 2
                    parts.append(xb @ W + b)
            h = np.concatenate(parts, axis=1)
        else:
            h = x
        acts, pre, masks = [h], [], []
        for li, drop in enumerate(self.spec.dropouts):
            W, b = self.params[k], self.params[k + 1]
            k += 2
            z = h @ W + b
            h = np.maximum(z, 0.0)
            mask = None
            if train and drop > 0.0:
                if rng is None:
                    raise ValidationError("training-mode forward with dropout needs an rng")
                mask = (rng.random(h.shape) >= drop) / (1.0 - drop)
                h = h * mask
            pre.append(z)
            masks.append(mask)
            acts.append(h)
        W, b = self.params[k], self.params[k + 1]
        logits = h @ W + b
        return h, logits, Cache(x, proj_in, acts, pre, masks)

    def backward(self, cache: Cache, d_logits=None, d_rep=None) -> list[np.ndarray]:
        """Gradients for every parameter given upstream gradients."""
        grads = [None] * len(self.params)
        h = cache.acts[-1]
        W_head = self.params[-2]
        if d_logits is None:
            d_logits = np.zeros((h.shape[0], self.spec.n_classes))
        grads[-2] = h.T @ d_logits
        grads[-1] = d_logits.sum(axis=0)
        dh = d_logits @ W_head.T
        if d_rep is not None:
            dh = dh + d_rep
        k = len(self.params) - 2
        for li in reversed(range(len(self.spec.hidden_dims))):
            k -= 2
            if cache.masks[li] is not None:
                dh = dh * cache.masks[li]
            dz = dh * (cache.pre[li] > 0.0)
            grads[k] = cache.acts[li].T @ dz
            grads[k + 1] = dz.sum(axis=0)
            dh = dz @ self.params[k].T
        col, kp = 0, 0
        for (w, p), xb in zip(self.spec.input_blocks, cache.proj_in):
            if p is not None:
                dpart = dh[:, col:col + p]
                grads[kp] = xb.T @ dpart
                grads[kp + 1] = dpart.sum(axis=0)
                kp += 2
            col += w if p is None else p
        return grads

    def predict_proba(self, x) -> np.ndarray:
        """Class-1 softmax probability per row (eval mode)."""
        _, logits, _ = self.forward(x)
        return softmax(logits)[:, 1]

    def represent(self, x) -> np.ndarray:
        rep, _, _ = self.forward(x)
        return rep


# ---------------------------------------------------------------------------
# losses


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def ce_loss_and_grad(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    lsm = _log_softmax(logits)
    loss = -lsm[np.arange(n), labels].mean()
    grad = np.exp(lsm)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def ce_loss(logits, labels) -> float:
    """Mean negative log softmax probability of the true class."""
    return ce_loss_and_grad(logits, labels)[0]


def mse_loss_and_grad(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def mse_loss(pred, target) -> float:
    return mse_loss_and_grad(pred, target)[0]


def hinge_loss_and_grad(scores, signs):
    scores = np.asarray(scores, dtype=np.float64)
    signs = np.asarray(signs, dtype=np.float64)
    margin = 1.0 - signs * scores
    loss = np.maximum(0.0, margin).mean()
    grad = np.where(margin > 0.0, -signs, 0.0) / scores.shape[0]
    return float(loss), grad


def hinge_loss(scores, signs) -> float:
    """Mean of ``max(0, 1 - y * s)`` with ``y`` in {-1, +1}."""
    return hinge_loss_and_grad(scores, signs)[0]


def composite_loss(align: float, ce: float, lam: float) -> float:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lam}")
    return lam * align + (1.0 - lam) * ce


# Objectives map (representation, logits, labels, row indices) -> (loss, d_rep, d_logits).


class CrossEntropy:
    def __call__(self, rep, logits, labels, idx):
        loss, g = ce_loss_and_grad(logits, labels)
        return loss, None, g


class Hinge:
    """Margin loss on ``logit_1 - logit_0`` (linear SVM stand-in)."""

    def __call__(self, rep, logits, labels, idx):
        scores = logits[:, 1] - logits[:, 0]
        signs = 2.0 * np.asarray(labels, dtype=np.float64) - 1.0
        loss, g = hinge_loss_and_grad(scores, signs)
        d = np.zeros_like(logits)
        d[:, 1] = g
        d[:, 0] = -g
        return loss, None, d


@dataclass
class RepresentationMSE:
    targets: np.ndarray

    def __call__(self, rep, logits, labels, idx):
        loss, g = mse_loss_and_grad(rep, self.targets[idx])
        return loss, g, None


@dataclass
class Composite:
    """``lam * align + (1 - lam) * ce`` over the same forward pass."""

    targets: np.ndarray
    lam: float = 0.75

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must be in [0, 1], got {self.lam}")

    def parts(self, rep, logits, labels, idx):
        align, g_rep = mse_loss_and_grad(rep, self.targets[idx])
        ce, g_logits = ce_loss_and_grad(logits, labels)
        return align, ce, g_rep, g_logits

    def __call__(self, rep, logits, labels, idx):
        align, ce, g_rep, g_logits = self.parts(rep, logits, labels, idx)
        return (composite_loss(align, ce, self.lam), self.lam * g_rep,
                (1.0 - self.lam) * g_logits)


OBJECTIVES = {"ce": CrossEntropy, "hinge": Hinge}


# ---------------------------------------------------------------------------
# optimiser and schedule


@dataclass
class AdamState:
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adamw_step(params, grads, state: AdamState, lr_t: float, weight_decay: float,
               beta1: float = BETA1, beta2: float = BETA2, eps: float = ADAM_EPS,
               trainable: Sequence[bool] | None = None):
    """One in-place AdamW update with decoupled weight decay.

    ``p <- p - lr_t * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)``.
    Entries flagged False in ``trainable`` are left untouched.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if trainable is not None and not trainable[i]:
            continue
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p -= lr_t * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p)
    return params, state


def lr_schedule(step: int, total_steps: int, peak_lr: float, warmup_proportion: float) -> float:
    """Linear warm-up to ``peak_lr`` over ``ceil(p * total)`` steps, then linear decay to 0."""
    if not 1 <= step <= total_steps:
        raise ValidationError(f"step {step} outside [1, {total_steps}]")
    warm = math.ceil(warmup_proportion * total_steps)
    if warm > 0 and step <= warm:
        return peak_lr * step / warm
    if total_steps == warm:
        return peak_lr
    return peak_lr * (total_steps - step) / (total_steps - warm)


# ---------------------------------------------------------------------------
# checkpoints


def _params_bytes(params) -> bytes:
    return b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in params)


@dataclass
class Checkpoint:
    spec: MlpSpec
    config: TrainConfig
    params: list[np.ndarray]          # float32
    epoch: int = 0
    dev_map: float = float("nan")
    meta: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def __post_init__(self):
        self.params = [np.asarray(p, dtype=np.float32) for p in self.params]

    @property
    def seed(self) -> int:
        return self.config.seed

    def model(self) -> Mlp:
        return Mlp(self.spec, [p.astype(np.float64) for p in self.params])

    def fingerprint(self) -> str:
        return hashlib.sha256(_params_bytes(self.params)).hexdigest()

    def head_bytes(self) -> bytes:
        return _params_bytes(self.params[-2:])

    def to_bytes(self) -> bytes:
        meta = {
            "version": self.version,
            "spec": self.spec.to_dict(),
            "config": asdict(self.config),
            "epoch": self.epoch,
            "dev_map": None if math.isnan(self.dev_map) else self.dev_map,
            "seed": self.seed,
            "shapes": [list(p.shape) for p in self.params],
            "fingerprint": self.fingerprint(),
            "meta": self.meta,
        }
        block = json.dumps(meta, sort_keys=True).encode("utf-8")
        return CHECKPOINT_MAGIC + struct.pack("<I", len(block)) + block + _params_bytes(self.params)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if not data.startswith(CHECKPOINT_MAGIC):
            raise ValidationError("not a checkpoint file (bad magic)")
        off = len(CHECKPOINT_MAGIC)
        try:
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            meta = json.loads(data[off:off + n].decode("utf-8"))
            off += n
            params = []
            for shape in meta["shapes"]:
                count = int(np.prod(shape)) if shape else 1
                arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
                params.append(arr.astype(np.float32))
                off += 4 * count
        except (struct.error, ValueError, KeyError) as exc:
            raise ValidationError(f"truncated or malformed checkpoint: {exc}") from None
        if off != len(data):
            raise ValidationError("checkpoint has trailing bytes")
        ckpt = cls(MlpSpec.from_dict(meta["spec"]), TrainConfig(**meta["config"]), params,
                   meta["epoch"], float("nan") if meta["dev_map"] is None else meta["dev_map"],
                   meta.get("meta", {}), meta["version"])
        if ckpt.fingerprint() != meta["fingerprint"]:
            raise ValidationError("checkpoint fingerprint mismatch (corrupt file)")
        return ckpt

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# training


@dataclass
class LabeledSet:
    """Feature rows with labels and their (event_id, line_no) keys."""

    x: np.ndarray
    y: np.ndarray
    keys: list

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.y) or len(self.y) != len(self.keys):
            raise ShapeError("features, labels and keys must have matching lengths")

    def __len__(self):
        return len(self.y)

    @property
    def events(self):
        return [k[0] for k in self.keys]

    @property
    def lines(self):
        return [k[1] for k in self.keys]


def dev_map(model: Mlp, dev: LabeledSet) -> float:
    scores = model.predict_proba(dev.x)
    return map_from_arrays(scores, dev.y, dev.events, dev.lines)[0]


def train_classifier(train: LabeledSet, dev: LabeledSet, spec: MlpSpec, config: TrainConfig,
                     objective: Callable | str = "ce", init: Mlp | None = None,
                     trainable: Sequence[bool] | None = None, meta: dict | None = None,
                     on_epoch: Callable | None = None) -> Checkpoint:
    """Mini-batch AdamW training with per-epoch dev-MAP checkpoint selection.

    The returned checkpoint is the epoch with the highest dev MAP (earliest
    on ties). Rows are reshuffled every epoch with a PCG64 stream seeded
    from ``config.seed``; the same stream drives weight init and dropout.
    """
    if train.x.shape[1] != spec.input_dim or dev.x.shape[1] != spec.input_dim:
        raise ShapeError(f"feature width does not match input_dim {spec.input_dim}")
    if len(train) == 0:
        raise ValidationError("empty training set")
    if isinstance(objective, str):
        try:
            objective = OBJECTIVES[objective]()
        except KeyError:
            raise ConfigError(f"unknown loss {objective!r}") from None
    rng = np.random.default_rng(config.seed)
    model = init.copy() if init is not None else Mlp.init(spec, rng)
    if init is not None and init.spec != spec:
        raise ConfigError("initial model spec differs from requested spec")
    n = len(train)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total = steps_per_epoch * config.epochs
    state = AdamState()
    step = 0
    best = None
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for s in range(steps_per_epoch):
            idx = order[s * config.batch_size:(s + 1) * config.batch_size]
            step += 1
            lr_t = lr_schedule(step, total, config.learning_rate, config.warmup_proportion)
            rep, logits, cache = model.forward(train.x[idx], train=True, rng=rng)
            loss, d_rep, d_logits = objective(rep, logits, train.y[idx], idx)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss {loss} at epoch {epoch}, step {step}")
            grads = model.backward(cache, d_logits, d_rep)
            adamw_step(model.params, grads, state, lr_t, config.weight_decay, trainable=trainable)
        snapshot = Checkpoint(spec, config, model.params, epoch, meta=dict(meta or {}))
        score = dev_map(snapshot.model(), dev)
        snapshot.dev_map = score
        if on_epoch is not None:
            on_epoch(epoch, snapshot, model)
        if best is None or score > best.dev_map:
            best = snapshot
    return best


# ---------------------------------------------------------------------------
# gradient verification


def objective_value(model: Mlp, objective, x, labels, idx=None) -> float:
    rep, logits, _ = model.forward(x)
    idx = np.arange(len(x)) if idx is None else idx
    return objective(rep, logits, labels, idx)[0]


def analytic_grads(model: Mlp, objective, x, labels, idx=None) -> list[np.ndarray]:
    rep, logits, cache = model.forward(x)
    idx = np.arange(len(x)) if idx is None else idx
    _, d_rep, d_logits = objective(rep, logits, labels, idx)
    return model.backward(cache, d_logits, d_rep)


def gradcheck(model: Mlp, objective, x, labels, h: float = 1e-4, idx=None,
              floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Runs in eval mode on a float64 copy of ``model``. The relative error per
    entry is ``|a - n| / max(|a| + |n|, floor)``; the floor sits above the
    round-off of a central difference (about ``eps * |loss| / h``) so exactly
    cancelling gradients do not register as failures.
    """
    model = model.copy()
    analytic = analytic_grads(model, objective, x, labels, idx)
    worst = 0.0
    for p, g in zip(model.params, analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = objective_value(model, objective, x, labels, idx)
            flat[j] = orig - h
            down = objective_value(model, objective, x, labels, idx)
            flat[j] = orig
            num = (up - down) / (2.0 * h)
            err = abs(gflat[j] - num) / max(abs(gflat[j]) + abs(num), floor)
            worst = max(worst, err)
    return worst
