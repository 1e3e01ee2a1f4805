"""Non-blind deconvolution of disk-blurred images.

The adaptive model is three separable stages: twelve L x 1 vertical filters,
twelve 1 x L horizontal filters (each followed by batch norm and leaky ReLU)
and a 1 x 1 fusion filter with a sigmoid, every filter bank generated from
the normalized blur radius. The plain baseline has the same topology with
static filters and 38 channels.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .adaptive import AdaptiveConv2d
from .crowd.context import AuxNormalizer
from .errors import ContractViolation, InvalidArgument, NumericError
from .nn import functional as Fn
from .nn.layers import Activation, BatchNorm2d, Conv2d
from .nn.optim import AdamConfig, adam_step

PSNR_CAP = 100.0
FILTER_LENGTH = 121
DECONV_HIDDEN = (4, 8)
IMAGE_RANGE = (0.02, 0.98)
BORDER_MODES = {"reflect": "reflect", "periodic": "wrap"}


# -- corruption ------------------------------------------------------------------

def disk_kernel(r):
    """Binary disk of radius ``r`` normalized to unit sum, shape ``(2r+1, 2r+1)``."""
    if int(r) != r or r < 1:
        raise InvalidArgument(f"disk radius must be a positive integer, got {r}")
    r = int(r)
    i, j = np.mgrid[-r:r + 1, -r:r + 1]
    k = (i * i + j * j <= r * r).astype(np.float64)
    return k / k.sum()


def disk_blur(image, r, border="reflect"):
    image = np.asarray(image, dtype=np.float64)
    k = disk_kernel(r)
    if image.ndim != 2:
        raise InvalidArgument("disk_blur expects a 2-D image")
    if min(image.shape) < k.shape[0]:
        raise InvalidArgument(f"kernel of radius {r} is larger than the {image.shape} image")
    if border not in BORDER_MODES:
        raise InvalidArgument(f"border must be one of {sorted(BORDER_MODES)}")
    return ndimage.convolve(image, k, mode=BORDER_MODES[border])


@dataclass
class CorruptionConfig:
    radii: tuple = (3, 5, 7, 9, 11)
    sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        self.radii = tuple(int(r) for r in self.radii)
        if not self.radii or min(self.radii) < 1:
            raise InvalidArgument("radii must be positive integers")
        if self.sigma < 0:
            raise InvalidArgument("noise sigma must be >= 0")


def corrupt(image, cfg, r, seed=None):
    """Disk blur, then additive Gaussian noise, clamped to [0, 1]."""
    out = disk_blur(image, r)
    if cfg.sigma > 0:
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        out = out + rng.normal(0.0, cfg.sigma, out.shape)
    return np.clip(out, 0.0, 1.0)


def psnr(reference, test):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP))


# -- texture corpus ----------------------------------------------------------------

def texture_image(rng, size=64):
    """Procedural grayscale texture: multi-scale noise plus hard-edged shapes."""
    img = np.zeros((size, size))
    for sigma, w in ((8.0, 1.0), (3.0, 0.6), (1.0, 0.3)):
        f = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
        img += w * f / (f.std() + 1e-12)
    rr, cc = np.mgrid[0:size, 0:size]
    for _ in range(rng.integers(3, 8)):
        level = rng.uniform(-2, 2)
        if rng.random() < 0.5:
            r0, c0 = rng.integers(0, size, 2)
            h, w = rng.integers(4, size // 2, 2)
            mask = (rr >= r0) & (rr < r0 + h) & (cc >= c0) & (cc < c0 + w)
        else:
            r0, c0 = rng.uniform(0, size, 2)
            rad = rng.uniform(3, size / 4)
            mask = (rr - r0) ** 2 + (cc - c0) ** 2 < rad * rad
        img[mask] = 0.5 * img[mask] + level
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo + 1e-12)
    return IMAGE_RANGE[0] + (IMAGE_RANGE[1] - IMAGE_RANGE[0]) * img


def texture_corpus(n, size=64, seed=0):
    seqs = np.random.SeedSequence(seed).spawn(n)
    return np.stack([texture_image(np.random.default_rng(s), size) for s in seqs]) if n else \
        np.zeros((0, size, size))


def scale_to_range(image):
    """Affine map of [0, 1] images into the sigmoid-safe range."""
    lo, hi = IMAGE_RANGE
    return lo + (hi - lo) * np.clip(np.asarray(image, dtype=np.float64), 0, 1)


# -- models --------------------------------------------------------------------------

@dataclass(frozen=True)
class DeconvSpec:
    adaptive: bool = True
    channels: int = 12
    filter_length: int = FILTER_LENGTH
    fmn_hidden: tuple = DECONV_HIDDEN
    slope: float = 0.01

    def __post_init__(self):
        if self.channels < 1:
            raise InvalidArgument("channels must be positive")
        if self.filter_length < 1 or self.filter_length % 2 == 0:
            raise InvalidArgument("filter length must be a positive odd integer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["fmn_hidden"] = tuple(d["fmn_hidden"])
        return cls(**d)


def acnn_deconv_spec(filter_length=FILTER_LENGTH):
    return DeconvSpec(True, 12, filter_length)


def plain_deconv_spec(filter_length=FILTER_LENGTH, channels=38):
    return DeconvSpec(False, channels, filter_length)


class DeconvNet:
    """Separable vertical/horizontal deconvolution network."""

    patch_size = None

    def __init__(self, spec, seed=0, dtype=np.float32):
        self.spec = spec
        self.normalizer = None
        self.train_radii = ()
        self.trained = False
        rng = np.random.default_rng(seed)
        L, C = spec.filter_length, spec.channels
        kernels = ((L, 1), (1, L), (1, 1))
        ins, outs = (1, C, C), (C, C, 1)
        self.convs, self.layers = [], []
        for i, (k, cin, cout) in enumerate(zip(kernels, ins, outs)):
            name = f"layer{i + 1}"
            if spec.adaptive:
                conv = AdaptiveConv2d(cin, cout, k, 1, spec.fmn_hidden, "linear", rng=rng, dtype=dtype,
                                      name=name)
            else:
                conv = Conv2d(cin, cout, k, rng=rng, dtype=dtype, name=name)
            self.convs.append(conv)
            self.layers.append(conv)
            if i < 2:
                self.layers += [BatchNorm2d(cout, dtype=dtype, name=f"bn{i + 1}"),
                                Activation("leaky_relu", spec.slope)]
            else:
                self.layers.append(Activation("sigmoid"))

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def batchnorms(self):
        return [l for l in self.layers if isinstance(l, BatchNorm2d)]

    @property
    def dtype(self):
        return self.params()[0].value.dtype

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def normalize_aux(self, radii):
        if not self.spec.adaptive:
            return None
        if self.normalizer is None:
            raise ContractViolation("radius normalization has not been fitted")
        return self.normalizer.transform(np.asarray(radii, dtype=np.float64).reshape(-1, 1)).astype(self.dtype)

    def forward(self, x, aux_norm, train=False):
        h = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            h = layer.forward(h, aux_norm, train)
        return h

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def restore(self, images, radii, batch=16):
        """Deblur ``images`` [N, H, W] blurred with per-image ``radii``."""
        if not self.trained:
            raise ContractViolation("model has not been trained")
        images = np.asarray(images)
        radii = np.broadcast_to(np.asarray(radii), (len(images),))
        out = np.empty(images.shape, dtype=np.float64)
        for i in range(0, len(images), batch):
            aux = self.normalize_aux(radii[i:i + batch])
            out[i:i + batch] = self.forward(images[i:i + batch, None], aux)[:, 0]
        return out


def build_plain_deconv_cnn(channels=38, filter_length=FILTER_LENGTH, seed=0):
    return DeconvNet(plain_deconv_spec(filter_length, channels), seed)


def deconv_param_count(model):
    return int(sum(p.size for p in model.params()))


def deconv_layer_params(model):
    """Parameter count per stage: generator (adaptive) or filter bank (static), plus batch norm."""
    rows = []
    for i, conv in enumerate(model.convs):
        rows.append((f"{'FMN' if model.spec.adaptive else 'conv'}{i + 1}", sum(p.size for p in conv.params())))
    for bn in model.batchnorms():
        rows.append((bn.name, sum(p.size for p in bn.params())))
    return rows


# -- training / evaluation ---------------------------------------------------------

@dataclass
class DeconvTrainConfig:
    steps: int = 2000
    batch_size: int = 16
    lr: float = 3e-3
    seed: int = 0
    sigma: float = 0.01
    identity: bool = False  # train towards the corrupted input itself

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise InvalidArgument("steps and batch size must be positive")


@dataclass
class DeconvHistory:
    loss: list = field(default_factory=list)


def corrupt_corpus(images, radii, sigma, seed):
    """Corrupted copy of every image at every radius: ``[len(radii), N, H, W]``."""
    cfg = CorruptionConfig(radii, sigma, seed)
    seeds = np.random.SeedSequence(seed).generate_state(len(radii) * len(images)).reshape(len(radii), -1)
    return np.stack([np.stack([corrupt(img, cfg, r, int(s)) for img, s in zip(images, row)])
                     for r, row in zip(cfg.radii, seeds)])


def train_deconv(model, corpus, radii, cfg, log=None):
    """Adam on the pixel MSE between the network output and the clean image.

    Every step draws a batch of (image, radius) pairs from the pre-corrupted
    training set; batch norm runs in training mode.
    """
    corpus = np.asarray(corpus, dtype=np.float64)
    if len(corpus) == 0:
        raise InvalidArgument("empty training corpus")
    radii = tuple(int(r) for r in radii)
    if not radii:
        raise InvalidArgument("no training radii")
    model.train_radii = radii
    if model.spec.adaptive:
        model.normalizer = AuxNormalizer.fit("kernel_radius", np.asarray(radii, dtype=np.float64))
    blurred = corrupt_corpus(corpus, radii, cfg.sigma, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    opt = AdamConfig(lr=cfg.lr)
    params = model.params()
    hist = DeconvHistory()
    n_pairs = len(radii) * len(corpus)
    for step in range(cfg.steps):
        pick = np.sort(rng.choice(n_pairs, min(cfg.batch_size, n_pairs), replace=False))
        ri, ii = np.divmod(pick, len(corpus))
        x = blurred[ri, ii][:, None]
        target = x if cfg.identity else corpus[ii][:, None]
        y = model.forward(x, model.normalize_aux(np.asarray(radii)[ri]), train=True)
        loss, g = Fn.loss_mse(y, target.astype(y.dtype))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite deconvolution loss at step {step} (lr={cfg.lr})")
        model.backward(g)
        adam_step(params, opt)
        hist.loss.append(float(loss))
        if log and (step + 1) % 100 == 0:
            log(f"step {step + 1}: loss {np.mean(hist.loss[-100:]):.6g}")
    model.trained = True
    return model, hist


@dataclass
class DeconvRow:
    radius: int
    seen: bool
    psnr_blurred: float
    psnr_model: float

    @property
    def delta(self):
        return self.psnr_model - self.psnr_blurred


def eval_deconv(model, corpus, radii, sigma=0.01, seed=0):
    """Mean PSNR of blurred input and model output per radius."""
    if not model.trained:
        raise ContractViolation("model has not been trained")
    corpus = np.asarray(corpus, dtype=np.float64)
    radii = tuple(int(r) for r in radii)
    blurred = corrupt_corpus(corpus, radii, sigma, seed)
    rows = []
    for r, b in zip(radii, blurred):
        restored = model.restore(b, r)
        rows.append(DeconvRow(r, r in model.train_radii,
                              float(np.mean([psnr(c, x) for c, x in zip(corpus, b)])),
                              float(np.mean([psnr(c, y) for c, y in zip(corpus, restored)]))))
    return rows


class PassThrough:
    """Returns its input unchanged; the zero-gain reference model."""

    trained = True
    train_radii = ()

    def restore(self, images, radii):
        return np.asarray(images, dtype=np.float64)
