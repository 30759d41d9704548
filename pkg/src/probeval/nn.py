"""From-scratch neural core: MLP classifier, AdamW, and the training loop.

The model is a single-hidden-layer MLP (50 ReLU units by default) over a
frozen input vector, optionally preceded by a learned softmax-weighted
average over L layer vectors.  Everything is plain numpy with hand-written
gradients; training runs in float64 for numerical headroom while inputs may
arrive as float32.

``MlpClassifier`` wraps the functional core in a scikit-learn style
estimator (``fit``/``predict``/``get_params``), accepting (N, H) inputs, or
(N, L, H) when layer mixing is enabled.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .embeddings import softmax as softmax_1d
from .errors import FormatError

DEFAULT_HIDDEN = 50

_TENSOR_ORDER = ("w1", "b1", "w2", "b2", "mix")


@dataclass
class MlpParams:
    w1: np.ndarray  # (input_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, n_classes)
    b2: np.ndarray  # (n_classes,)
    mix: np.ndarray | None = None  # (L,) raw layer-mixing weights

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        if self.mix is not None:
            out["mix"] = self.mix
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            mix=None if self.mix is None else self.mix.copy(),
        )

    @property
    def param_count(self) -> int:
        return sum(t.size for t in self.tensors().values())

    @property
    def n_classes(self) -> int:
        return int(self.b2.size)

    def all_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tensors().values())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_mlp(
    input_dim: int,
    n_classes: int,
    hidden: int = DEFAULT_HIDDEN,
    mix_layer_count: int | None = None,
    rng: np.random.Generator | None = None,
) -> MlpParams:
    """Uniform Glorot weights, zero biases, zero mixing weights (uniform start)."""
    rng = rng or np.random.Generator(np.random.PCG64(0))
    return MlpParams(
        w1=_glorot(rng, input_dim, hidden),
        b1=np.zeros(hidden),
        w2=_glorot(rng, hidden, n_classes),
        b2=np.zeros(n_classes),
        mix=None if mix_layer_count is None else np.zeros(mix_layer_count),
    )


def _mix_inputs(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Collapse (N, L, H) inputs to (N, H) via the softmax layer weights."""
    if params.mix is None:
        if x.ndim != 2:
            raise ValueError(f"expected (N, H) inputs, got shape {x.shape}")
        return x, None
    if x.ndim != 3 or x.shape[1] != params.mix.size:
        raise ValueError(
            f"expected (N, {params.mix.size}, H) inputs for layer mixing, "
            f"got shape {x.shape}"
        )
    s = softmax_1d(params.mix)
    return np.einsum("nlh,l->nh", x, s), s


def mlp_forward(
    params: MlpParams,
    x: np.ndarray,
    train_mode: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    dropout_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Logits for a batch; inverted dropout on the hidden layer in train mode.

    ``dropout_mask`` pins the mask (testing seam); otherwise it is drawn from
    ``rng`` when training with dropout > 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in input batch")
    single = x.ndim == (1 if params.mix is None else 2)
    if single:
        x = x[None, ...]
    xbar, _ = _mix_inputs(params, x)
    a1 = xbar @ params.w1 + params.b1
    h = np.maximum(a1, 0.0)
    if train_mode and dropout > 0.0:
        if dropout_mask is None:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng or a mask")
            dropout_mask = rng.random(h.shape) >= dropout
        h = h * dropout_mask / (1.0 - dropout)
    logits = h @ params.w2 + params.b2
    return logits[0] if single else logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grads(
    params: MlpParams,
    x: np.ndarray,
    y: np.ndarray,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    train_mode: bool = True,
    dropout_mask: np.ndarray | None = None,
) -> tuple[float, MlpParams]:
    """Mean softmax cross-entropy and gradients for every trainable tensor."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty batch")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in input batch")
    k = params.n_classes
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{y.min()}, {y.max()}]")
    n = x.shape[0]

    xbar, s = _mix_inputs(params, x)
    a1 = xbar @ params.w1 + params.b1
    h = np.maximum(a1, 0.0)
    if train_mode and dropout > 0.0:
        if dropout_mask is None:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng or a mask")
            dropout_mask = rng.random(h.shape) >= dropout
        hd = h * dropout_mask / (1.0 - dropout)
    else:
        dropout_mask = None
        hd = h
    logits = hd @ params.w2 + params.b2

    log_probs = _log_softmax(logits)
    loss = -float(log_probs[np.arange(n), y].mean())

    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    gw2 = hd.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhd = dlogits @ params.w2.T
    dh = dhd if dropout_mask is None else dhd * dropout_mask / (1.0 - dropout)
    da1 = dh * (a1 > 0.0)
    gw1 = xbar.T @ da1
    gb1 = da1.sum(axis=0)

    gmix = None
    if params.mix is not None:
        dxbar = da1 @ params.w1.T
        grad_s = np.einsum("nh,nlh->l", dxbar, x)
        gmix = s * (grad_s - float(s @ grad_s))
    return loss, MlpParams(w1=gw1, b1=gb1, w2=gw2, b2=gb2, mix=gmix)


class AdamW:
    """AdamW with decoupled weight decay.

    Update per tensor, with bias-corrected moments m-hat and v-hat:
        p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p
    """

    def __init__(
        self,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: MlpParams, grads: MlpParams):
        """Update ``params`` in place from ``grads``."""
        ptensors = params.tensors()
        gtensors = grads.tensors()
        if set(ptensors) != set(gtensors):
            raise ValueError("parameter/gradient tensors do not match")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in ptensors.items():
            g = gtensors[name]
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name} shape {p.shape}"
                )
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            # The decay term uses the pre-step value of p, hence one fused update.
            p -= self.lr * ((m / bc1) / (np.sqrt(v / bc2) + self.eps) + self.weight_decay * p)


class EarlyStopping:
    """Stop after ``patience`` evaluations without a strict improvement."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = -np.inf
        self.bad_evals = 0
        self.improved = False

    def update(self, value: float) -> bool:
        """Record one evaluation; returns True when training should stop.

        Also reports whether this evaluation improved via ``improved``.
        """
        self.improved = value > self.best
        if self.improved:
            self.best = value
            self.bad_evals = 0
        else:
            self.bad_evals += 1
        return self.bad_evals >= self.patience


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    dropout: float = 0.2
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    patience: int = 5
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def predict_indices(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return np.argmax(mlp_forward(params, x, train_mode=False), axis=-1)


def train(
    params: MlpParams,
    train_x: np.ndarray,
    train_y: np.ndarray,
    dev_x: np.ndarray,
    dev_y: np.ndarray,
    cfg: TrainConfig,
) -> tuple[MlpParams, list[dict]]:
    """Mini-batch AdamW training with dev-accuracy early stopping.

    Evaluates on dev after every epoch; stops after ``patience`` evaluations
    without improvement or at ``max_epochs``; returns the best-dev snapshot
    and the per-epoch history.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    dev_x = np.asarray(dev_x, dtype=np.float64)
    dev_y = np.asarray(dev_y)
    if train_y.size == 0:
        raise ValueError("empty training set")
    if dev_y.size == 0:
        raise ValueError("empty dev set")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    opt = AdamW(
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    best = params.copy()
    stopper = EarlyStopping(cfg.patience)
    history: list[dict] = []
    n = train_x.shape[0]
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            loss, grads = loss_and_grads(
                params, train_x[idx], train_y[idx], dropout=cfg.dropout, rng=rng
            )
            opt.step(params, grads)
            losses.append(loss)
        if not params.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")
        dev_acc = float(np.mean(predict_indices(params, dev_x) == dev_y))
        history.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "dev_accuracy": dev_acc}
        )
        stop = stopper.update(dev_acc)
        if stopper.improved:
            best = params.copy()
        if stop:
            break
    return best, history


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn style front end over the functional core.

    With ``mix_layers=True`` the estimator expects (N, L, H) inputs and learns
    the layer-mixing weights jointly with the MLP; otherwise inputs are
    (N, H).  A dev set may be passed to ``fit``; without one a fraction of
    the training data is held out for early stopping.
    """

    def __init__(
        self,
        hidden_size: int = DEFAULT_HIDDEN,
        mix_layers: bool = False,
        batch_size: int = 128,
        dropout: float = 0.2,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        patience: int = 5,
        max_epochs: int = 200,
        validation_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.hidden_size = hidden_size
        self.mix_layers = mix_layers
        self.batch_size = batch_size
        self.dropout = dropout
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.patience = patience
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            dropout=self.dropout,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
            patience=self.patience,
            max_epochs=self.max_epochs,
            seed=self.seed,
        )

    def _check_x(self, x) -> np.ndarray:
        x = check_array(x, dtype=np.float64, allow_nd=True)
        want = 3 if self.mix_layers else 2
        if x.ndim != want:
            raise ValueError(
                f"expected {want}-d inputs with mix_layers={self.mix_layers}, "
                f"got {x.ndim}-d"
            )
        return x

    def _encode(self, y, allow_unknown: bool = False) -> np.ndarray:
        index = {label: i for i, label in enumerate(self.classes_)}
        out = np.empty(len(y), dtype=np.int64)
        for i, label in enumerate(y):
            if label in index:
                out[i] = index[label]
            elif allow_unknown:
                out[i] = -1
            else:
                raise ValueError(f"unknown label {label!r}")
        return out

    def fit(self, X, y, dev_X=None, dev_y=None):
        X = self._check_x(X)
        y = np.asarray(y)
        if len(y) != X.shape[0]:
            raise ValueError("X and y lengths differ")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("need at least 2 classes")
        y_idx = self._encode(y)

        if dev_X is not None:
            if dev_y is None:
                raise ValueError("dev_X given without dev_y")
            dev_X = self._check_x(dev_X)
            dev_idx = self._encode(dev_y, allow_unknown=True)
            train_X, train_idx = X, y_idx
        else:
            if not 0.0 < self.validation_fraction < 1.0:
                raise ValueError(
                    "without an explicit dev set, validation_fraction must "
                    "lie in (0, 1)"
                )
            rng = np.random.Generator(np.random.PCG64(self.seed))
            order = rng.permutation(X.shape[0])
            n_dev = max(1, int(round(self.validation_fraction * X.shape[0])))
            if n_dev >= X.shape[0]:
                raise ValueError("not enough data to hold out a dev set")
            dev_X, dev_idx = X[order[:n_dev]], y_idx[order[:n_dev]]
            train_X, train_idx = X[order[n_dev:]], y_idx[order[n_dev:]]

        self.n_features_in_ = int(X.shape[-1])
        self.n_mix_layers_ = int(X.shape[1]) if self.mix_layers else None
        rng = np.random.Generator(np.random.PCG64(self.seed))
        params = init_mlp(
            input_dim=self.n_features_in_,
            n_classes=self.classes_.size,
            hidden=self.hidden_size,
            mix_layer_count=self.n_mix_layers_,
            rng=rng,
        )
        self.params_, self.history_ = train(
            params, train_X, train_idx, dev_X, dev_idx, self._train_config()
        )
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return mlp_forward(self.params_, self._check_x(X), train_mode=False)

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]

    @property
    def epochs_trained_(self) -> int:
        check_is_fitted(self, "history_")
        return len(self.history_)

    def mixing_weights(self) -> np.ndarray | None:
        """Softmax of the learned layer weights, or None without mixing."""
        check_is_fitted(self, "params_")
        if self.params_.mix is None:
            return None
        return softmax_1d(self.params_.mix)

    def save(self, path):
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "MlpClassifier":
        return load_checkpoint(path)


# ---------------------------------------------------------------------------
# Checkpoints: length-prefixed header JSON + raw float32 LE tensors in
# declaration order (w1, b1, w2, b2, then mix when present).

_CKPT_FORMAT = "MLPCKPT1"


def save_checkpoint(clf: MlpClassifier, path):
    check_is_fitted(clf, "params_")
    params = clf.params_
    header = {
        "format": _CKPT_FORMAT,
        "input_dim": int(params.w1.shape[0]),
        "hidden_size": int(params.w1.shape[1]),
        "n_classes": params.n_classes,
        "classes": [c.item() if hasattr(c, "item") else c for c in clf.classes_],
        "mix_layer_count": None if params.mix is None else int(params.mix.size),
        "hyperparameters": clf.get_params(),
        "seed": clf.seed,
        "epochs_trained": clf.epochs_trained_,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in _TENSOR_ORDER:
            tensor = params.tensors().get(name)
            if tensor is not None:
                f.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path) -> MlpClassifier:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise FormatError("checkpoint too short")
    (hlen,) = struct.unpack("<I", data[:4])
    try:
        header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad checkpoint header: {exc}") from None
    if header.get("format") != _CKPT_FORMAT:
        raise FormatError(f"unknown checkpoint format {header.get('format')!r}")
    d, hid, k = header["input_dim"], header["hidden_size"], header["n_classes"]
    mix_l = header["mix_layer_count"]
    shapes = [("w1", (d, hid)), ("b1", (hid,)), ("w2", (hid, k)), ("b2", (k,))]
    if mix_l is not None:
        shapes.append(("mix", (mix_l,)))
    need = sum(int(np.prod(s)) for _, s in shapes)
    payload = data[4 + hlen :]
    if len(payload) != 4 * need:
        raise FormatError(
            f"checkpoint payload holds {len(payload)} bytes, expected {4 * need}"
        )
    tensors = {}
    off = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        tensors[name] = (
            np.frombuffer(payload, dtype="<f4", count=size, offset=off)
            .reshape(shape)
            .astype(np.float64)
        )
        off += 4 * size
    clf = MlpClassifier(**header["hyperparameters"])
    clf.classes_ = np.array(header["classes"])
    clf.params_ = MlpParams(**tensors)
    clf.history_ = [{}] * header["epochs_trained"]
    clf.n_features_in_ = d
    clf.n_mix_layers_ = mix_l
    return clf
