"""End-to-end experiments on the synthetic benchmarks.

``counting_benefit`` trains the adaptive counting model and the plain CNN on
the same multi-context scenes and compares test MAE; with ``holdout`` it also
retrains the adaptive model without the middle third of contexts and splits
its test error into seen and unseen contexts. ``deconv_gains`` trains the
adaptive and plain deconvolution networks on one corpus and tabulates PSNR
gains per radius.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .counting import CountingModel, TrainConfig, eval_counting, get_spec, train_counting
from .crowd.benchmark import BenchmarkConfig, build_benchmark, context_aux, middle_third, patch_dataset
from .deconv import (
    DeconvNet, DeconvTrainConfig, acnn_deconv_spec, eval_deconv, plain_deconv_spec, texture_corpus, train_deconv,
)


@dataclass
class CountingRun:
    seed: int
    mae: dict = field(default_factory=dict)  # model name -> test MAE
    holdout_seen: float = float("nan")
    holdout_unseen: float = float("nan")
    seconds: float = 0.0


@dataclass
class CountingSchedule:
    steps: int = 350
    batch_size: int = 64
    lr: float = 1e-3
    lam: float = 0.1
    patches_per_scene: int = 300
    patch_stride: int = 2
    val_fraction: float = 0.05
    stride: int = 4
    anneal: bool = True


def _train_eval(name, train_scenes, test_sets, sched, seed, log):
    spec = get_spec(name)
    data = patch_dataset(train_scenes, spec.aux_kind, sched.patches_per_scene, sched.patch_stride, seed,
                         spec.patch_size)
    cfg = TrainConfig(lam=sched.lam, epochs=10**6, batch_size=sched.batch_size, seed=seed, lr=sched.lr,
                      val_fraction=sched.val_fraction, max_steps=sched.steps, anneal=sched.anneal)
    model = CountingModel(spec, seed=seed)
    train_counting(model, data, cfg)
    maes = [eval_counting(model, scenes, sched.stride).mae for scenes in test_sets]
    if log:
        log(f"  {name}: " + " ".join(f"{m:.3f}" for m in maes))
    return maes


def counting_benefit(seeds=(0, 1, 2), models=("acnn-v3", "cnn64"), holdout=True, sched=None,
                     bench_cfg=None, log=None):
    """One :class:`CountingRun` per seed; the seed drives both scenes and initialization."""
    sched = sched or CountingSchedule()
    runs = []
    for seed in seeds:
        t0 = time.time()
        cfg = bench_cfg or BenchmarkConfig()
        bench = build_benchmark(BenchmarkConfig(**{**cfg.__dict__, "seed": seed}))
        run = CountingRun(seed)
        train, test = bench.scenes("train"), bench.scenes("test")
        for name in models:
            run.mae[name] = _train_eval(name, train, [test], sched, seed, log)[0]
        if holdout:
            held = set(middle_third(context_aux(bench)))
            seen = [c for c in range(len(bench.config.contexts)) if c not in held]
            run.holdout_seen, run.holdout_unseen = _train_eval(
                models[0], bench.scenes("train", seen), [bench.scenes("test", seen), bench.scenes("test", held)],
                sched, seed, log)
        run.seconds = time.time() - t0
        if log:
            log(f"seed {seed}: {run.mae} holdout seen {run.holdout_seen:.3f} unseen {run.holdout_unseen:.3f} "
                f"({run.seconds:.0f} s)")
        runs.append(run)
    return runs


@dataclass
class DeconvSchedule:
    n_train: int = 200
    n_test: int = 80
    size: int = 64
    filter_length: int = 31
    steps: int = 1500
    batch_size: int = 16
    lr: float = 3e-3
    sigma: float = 0.01
    train_radii: tuple = (3, 7, 11)
    test_radii: tuple = (3, 5, 7, 9, 11)


def deconv_gains(sched=None, seed=0, log=None):
    """``{"acnn": rows, "cnn": rows}`` of :class:`~acnn.deconv.DeconvRow`, same data for both."""
    sched = sched or DeconvSchedule()
    s_train, s_test = np.random.SeedSequence(seed).generate_state(2)
    train = texture_corpus(sched.n_train, sched.size, int(s_train))
    test = texture_corpus(sched.n_test, sched.size, int(s_test))
    out = {}
    for key, spec in (("acnn", acnn_deconv_spec(sched.filter_length)),
                      ("cnn", plain_deconv_spec(sched.filter_length))):
        t0 = time.time()
        model = DeconvNet(spec, seed=seed)
        cfg = DeconvTrainConfig(sched.steps, sched.batch_size, sched.lr, seed, sched.sigma)
        train_deconv(model, train, sched.train_radii, cfg)
        out[key] = eval_deconv(model, test, sched.test_radii, sched.sigma, seed + 1)
        if log:
            log(f"{key} ({time.time() - t0:.0f} s): "
                + " ".join(f"r{r.radius} {r.delta:+.2f}" for r in out[key]))
    return out
