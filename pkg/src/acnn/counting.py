"""Crowd-counting networks: plain CNN baseline and adaptive variants.

Every model is a trunk of conv -> ReLU -> LRN -> 2x2 max-pool stages whose
flattened features feed two heads: a density regressor (FC1 512, FC2 81,
FC3 1) and a patch count-class classifier (FC4 81, FC5 15). Adaptive stages
get their filters from a filter-manifold network driven by normalized side
information.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .adaptive import DEFAULT_HIDDEN, AdaptiveConv2d
from .crowd.context import AUX_KINDS, AuxNormalizer
from .crowd.evaluate import evaluate_mae, predict_count
from .crowd.patches import N_CLASSES
from .errors import ContractViolation, InvalidArgument, NumericError
from .nn import functional as Fn
from .nn.layers import LRN, Activation, Conv2d, Dense, Flatten, MaxPool2, Sequential
from .nn.optim import AdamConfig, adam_step

LAYER_KINDS = ("static_conv", "adaptive_conv", "pool", "lrn", "dense")

# densities are ~1e-3 per pixel; the regressor works on this multiple of them
DENSITY_SCALE = 1000.0

# the printed classifier row (1,312) matches 16 outputs, not the 15 classes used
TABLE1_FC5_OUTPUTS = 16


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    kernel: tuple = (5, 5)
    activation: str = "relu"


@dataclass(frozen=True)
class ModelSpec:
    name: str
    patch_size: int
    aux_kind: str
    layers: tuple
    regression: tuple = (512, 81, 1)
    classification: tuple = (81, N_CLASSES)
    fmn_hidden: tuple = DEFAULT_HIDDEN
    head_activation: str = "relu"

    @property
    def aux_dim(self):
        return AUX_KINDS[self.aux_kind]

    @property
    def adaptive(self):
        return any(l.kind == "adaptive_conv" for l in self.layers)

    def to_dict(self):
        d = asdict(self)
        d["layers"] = [asdict(l) for l in self.layers]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["layers"] = tuple(LayerSpec(l["kind"], l["filters"], tuple(l["kernel"]), l["activation"])
                            for l in d["layers"])
        for k in ("regression", "classification", "fmn_hidden"):
            d[k] = tuple(d[k])
        return cls(**d)


def _stages(kinds_filters):
    out = []
    for kind, n in kinds_filters:
        out += [LayerSpec(kind, n), LayerSpec("lrn"), LayerSpec("pool")]
    return tuple(out)


SPECS = {
    "cnn64": ModelSpec("cnn64", 33, "perspective", _stages([("static_conv", 64), ("static_conv", 64)])),
    "acnn-v1": ModelSpec("acnn-v1", 33, "perspective", _stages([("adaptive_conv", 64), ("static_conv", 64)])),
    "acnn-v2": ModelSpec("acnn-v2", 33, "perspective", _stages([("static_conv", 64), ("adaptive_conv", 30)])),
    "acnn-v3": ModelSpec("acnn-v3", 33, "perspective", _stages([("adaptive_conv", 32), ("adaptive_conv", 32)])),
    "acnn-ah": ModelSpec("acnn-ah", 65, "angle_height",
                         _stages([("adaptive_conv", 40), ("adaptive_conv", 40), ("adaptive_conv", 32)])),
}


def get_spec(name):
    try:
        return SPECS[name]
    except KeyError:
        raise InvalidArgument(f"unknown model spec {name!r}; choose from {sorted(SPECS)}") from None


class CountingModel:
    """Trunk + regression head + classification head for one :class:`ModelSpec`."""

    def __init__(self, spec, seed=0, dtype=np.float32):
        if spec.aux_kind not in AUX_KINDS:
            raise InvalidArgument(f"unknown aux kind {spec.aux_kind!r}")
        self.spec = spec
        self.patch_size = spec.patch_size
        self.aux_kind = spec.aux_kind
        self.normalizer = None
        self.trained = False
        rng = np.random.default_rng(seed)

        trunk, named = [], []
        channels, size = 1, spec.patch_size
        n_conv = 0
        for ls in spec.layers:
            if ls.kind == "static_conv" or ls.kind == "adaptive_conv":
                if ls.filters < 1:
                    raise InvalidArgument(f"conv layer needs a positive filter count, got {ls.filters}")
                n_conv += 1
                if ls.kind == "static_conv":
                    conv = Conv2d(channels, ls.filters, ls.kernel, rng=rng, dtype=dtype, name=f"conv{n_conv}")
                    trunk += [conv, Activation(ls.activation)]
                    named.append((f"conv{n_conv}", conv, None))
                else:
                    conv = AdaptiveConv2d(channels, ls.filters, ls.kernel, spec.aux_dim, spec.fmn_hidden,
                                          ls.activation, rng=rng, dtype=dtype, name=f"conv{n_conv}")
                    trunk.append(conv)
                    named.append((f"conv{n_conv}", conv, f"FMN{n_conv}"))
                channels = ls.filters
            elif ls.kind == "lrn":
                trunk.append(LRN())
            elif ls.kind == "pool":
                trunk.append(MaxPool2())
                size = (size + 1) // 2
            elif ls.kind == "dense":
                raise InvalidArgument("dense layers belong to the heads, not the trunk")
            else:
                raise InvalidArgument(f"unknown layer kind {ls.kind!r}")
        if n_conv == 0:
            channels = 1
        self.flat_dim = channels * size * size
        trunk.append(Flatten())
        self.trunk = Sequential(trunk, "trunk")
        self._conv_layers = named

        def head(sizes, first):
            layers, n_in = [], self.flat_dim
            for i, n_out in enumerate(sizes):
                fc = Dense(n_in, n_out, rng, dtype, name=f"FC{first + i}")
                layers.append(fc)
                if i < len(sizes) - 1:
                    layers.append(Activation(spec.head_activation))
                n_in = n_out
            return Sequential(layers)

        self.reg_head = head(spec.regression, 1)
        self.cls_head = head(spec.classification, 1 + len(spec.regression))

    # -- parameters ---------------------------------------------------------

    def params(self):
        return self.trunk.params() + self.reg_head.params() + self.cls_head.params()

    def buffers(self):
        return []

    def astype(self, dtype):
        for part in (self.trunk, self.reg_head, self.cls_head):
            part.astype(dtype)
        return self

    @property
    def dtype(self):
        return self.params()[0].value.dtype

    # -- forward/backward ---------------------------------------------------

    def normalize_aux(self, raw_aux):
        if self.normalizer is None:
            raise ContractViolation("aux normalization has not been fitted")
        return self.normalizer.transform(raw_aux).astype(self.dtype)

    def forward(self, patches, aux_norm, train=False):
        """Returns ``(density_scaled [N], class_logits [N, 15])``."""
        x = np.asarray(patches, dtype=self.dtype)
        feats = self.trunk.forward(x, aux_norm, train)
        return self.reg_head.forward(feats, None, train)[:, 0], self.cls_head.forward(feats, None, train)

    def backward(self, g_density, g_logits):
        g1 = self.reg_head.backward(g_density[:, None].astype(self.dtype, copy=False))
        g2 = self.cls_head.backward(g_logits.astype(self.dtype, copy=False))
        self.trunk.backward(g1 + g2)

    def predict_density(self, patches, raw_aux):
        dens, _ = self.forward(patches, self.normalize_aux(raw_aux))
        return dens.astype(np.float64) / DENSITY_SCALE


# -- parameter accounting ------------------------------------------------------

@dataclass
class ParamTable:
    rows: list  # (layer name, count)
    total: int
    table1_total: int  # with FC5 counted at the printed 16 outputs
    fc5_delta: int


def count_params(model):
    """Per-layer parameter counts in Table-1 row order, plus totals."""
    if model is None:
        return ParamTable([], 0, 0, 0)
    rows = []
    for conv_name, layer, fmn_name in model._conv_layers:
        if fmn_name is None:
            rows.append((conv_name, sum(p.size for p in layer.params())))
        else:
            rows.append((fmn_name, layer.fmn.n_params))
            rows.append((conv_name, 0))
    for head in (model.reg_head, model.cls_head):
        for layer in head:
            if isinstance(layer, Dense):
                rows.append((layer.name, layer.weight.size + layer.bias.size))
    total = sum(n for _, n in rows)
    delta = 0
    if model.cls_head.layers:
        n_in, n_out = model.cls_head.layers[-1].weight.value.shape
        if n_out == N_CLASSES:
            delta = (n_in + 1) * (TABLE1_FC5_OUTPUTS - n_out)
    return ParamTable(rows, total, total + delta, delta)


def format_param_table(name, table):
    lines = [f"# parameters per layer: {name}", "layer,params"]
    lines += [f"{layer},{n}" for layer, n in table.rows]
    lines.append(f"total,{table.total}")
    lines.append(f"total_fc5_16,{table.table1_total}")
    lines.append(f"# FC5 has {N_CLASSES} outputs; the 16-output row used by the reference table adds "
                 f"{table.fc5_delta} parameters (total_fc5_16)")
    return "\n".join(lines)


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    lam: float = 0.1
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    lr: float = 1e-3
    val_fraction: float = 0.1
    patience: int = 10
    max_steps: int = None
    anneal: bool = False  # cosine-decay lr to zero over max_steps

    def __post_init__(self):
        if self.anneal and not self.max_steps:
            raise InvalidArgument("anneal needs max_steps")
        if self.lam < 0:
            raise InvalidArgument("loss weight lambda must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgument("epochs and batch size must be positive")
        if not 0 <= self.val_fraction < 1:
            raise InvalidArgument("val_fraction must be in [0, 1)")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    train_mse: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    best_epoch: int = -1
    steps: int = 0


def multitask_step(model, patches, aux_norm, density, classes, lam):
    """Forward + backward on one batch; returns ``(loss, mse, ce)``.

    Parameter gradients are left in place for the optimizer.
    """
    pred, logits = model.forward(patches, aux_norm, train=True)
    target = (np.asarray(density) * DENSITY_SCALE).astype(pred.dtype)
    mse, g_pred = Fn.loss_mse(pred, target)
    ce, g_logits = Fn.loss_softmax_xent(logits, np.asarray(classes))
    model.backward(g_pred, lam * g_logits)
    return mse + lam * ce, mse, ce


def _snapshot(model):
    return [p.value.copy() for p in model.params()]


def _restore(model, snap):
    for p, v in zip(model.params(), snap):
        p.value[...] = v


def train_counting(model, samples, cfg, log=None):
    """Mini-batch Adam on ``MSE(density) + lam * CE(count class)``.

    ``samples`` is a :class:`~acnn.crowd.patches.PatchSet` with raw aux. The
    aux normalizer is fitted on the training split. Early stopping keeps the
    parameters with the lowest validation density MAE.
    """
    if len(samples) == 0:
        raise InvalidArgument("no training samples")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(samples))
    n_val = int(round(cfg.val_fraction * len(samples)))
    val, train = samples.subset(np.sort(order[:n_val])), samples.subset(np.sort(order[n_val:]))
    if len(train) == 0:
        raise InvalidArgument("validation split leaves no training samples")
    model.normalizer = AuxNormalizer.fit(model.aux_kind, train.aux)
    aux_train = model.normalize_aux(train.aux)
    aux_val = model.normalize_aux(val.aux) if n_val else None
    opt = AdamConfig(lr=cfg.lr)
    params = model.params()
    hist = TrainHistory()
    best, best_snap, bad = np.inf, None, 0

    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train))
        losses, mses = [], []
        for i in range(0, len(perm), cfg.batch_size):
            idx = np.sort(perm[i:i + cfg.batch_size])
            loss, mse, ce = multitask_step(model, train.patches[idx], aux_train[idx], train.density[idx],
                                           train.count_class[idx], cfg.lam)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} step {hist.steps}: "
                                   f"mse={mse} ce={ce} lr={cfg.lr}")
            if cfg.anneal:
                opt.lr = cfg.lr * 0.5 * (1.0 + np.cos(np.pi * hist.steps / cfg.max_steps))
            adam_step(params, opt)
            hist.steps += 1
            losses.append(loss)
            mses.append(mse)
            if cfg.max_steps is not None and hist.steps >= cfg.max_steps:
                break
        hist.train_loss.append(float(np.mean(losses)))
        hist.train_mse.append(float(np.mean(mses)))
        if n_val:
            pred = np.concatenate([model.forward(val.patches[j:j + 256], aux_val[j:j + 256])[0]
                                   for j in range(0, n_val, 256)])
            vm = float(np.mean(np.abs(pred / DENSITY_SCALE - val.density)))
        else:
            vm = hist.train_mse[-1]
        hist.val_mae.append(vm)
        if log:
            log(f"epoch {epoch + 1}: loss {hist.train_loss[-1]:.6g} mse {hist.train_mse[-1]:.6g} val_mae {vm:.6g}")
        if vm < best:
            best, best_snap, bad, hist.best_epoch = vm, _snapshot(model), 0, epoch
        else:
            bad += 1
            if bad >= cfg.patience:
                break
        if cfg.max_steps is not None and hist.steps >= cfg.max_steps:
            break
    if best_snap is not None:
        _restore(model, best_snap)
    model.trained = True
    return model, hist


# -- evaluation ----------------------------------------------------------------

@dataclass
class CountingReport:
    mae: float
    predicted: list
    true: list
    region_mae: dict = field(default_factory=dict)
    region_counts: dict = field(default_factory=dict)


def eval_counting(model, scenes, stride=4, roi=None, regions=None):
    """Per-scene counts and MAE; optional named region masks get their own MAE.

    ``scenes`` yields objects with ``image``, ``density``, ``context.values``
    and ``pmap`` (e.g. :class:`~acnn.crowd.synth.SyntheticScene`).
    """
    if not model.trained:
        raise ContractViolation("model has not been trained")
    scenes = list(scenes)
    pred, true = [], []
    region_pred = {k: [] for k in (regions or {})}
    region_true = {k: [] for k in (regions or {})}
    for sc in scenes:
        full = np.ones(sc.image.shape, bool) if roi is None else np.asarray(roi, bool)
        pred.append(predict_count(model, sc.image, sc.context.values, sc.pmap, stride, full))
        true.append(float(sc.density[full].sum()))
        for k, mask in (regions or {}).items():
            m = np.asarray(mask, bool) & full
            region_pred[k].append(predict_count(model, sc.image, sc.context.values, sc.pmap, stride, m)
                                  if m.any() else 0.0)
            region_true[k].append(float(sc.density[m].sum()))
    report = CountingReport(evaluate_mae(pred, true), pred, true)
    for k in region_pred:
        report.region_mae[k] = evaluate_mae(region_pred[k], region_true[k])
        report.region_counts[k] = (region_pred[k], region_true[k])
    return report
