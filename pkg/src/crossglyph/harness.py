"""Training loop, experiment configuration, evaluation, and metrics.

One training step draws a labeled source batch and an unlabeled target
batch, augments the target weakly and strongly, and minimizes

    total = cls + adv + consistency + trade_off * transition

in a single backward pass: the domain term is the discriminator's binary
cross-entropy computed behind a gradient-reversal node, so the same
sweep that trains the discriminator pushes the extractor toward
domain-invariant features. Pseudo labels come from the weak view and are
constants to the tape. Every loss can be switched off; a disabled term
is simply absent from the sum, which keeps ablations bit-comparable to
zero-weight runs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import losses
from . import pseudolabel
from .augment import StrongPolicy, strong_augment, weak_augment
from .data import (BatchIterator, Benchmark, Dataset, GlyphCounts, GlyphSpec,
                   generate_glyph_benchmark, load_dataset)
from .networks import Classifier, Discriminator, FeatureExtractor, gradient_scale
from .rng import SeededRng

# rng stream ids under the training seed
_STREAM_INIT = 0
_STREAM_SOURCE_ORDER = 1
_STREAM_TARGET_ORDER = 2
_STREAM_AUGMENT = 3
_WEAK, _STRONG = 0, 1


class TrainingDiverged(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass
class TrainConfig:
    """Everything a run needs; field names double as config-file keys."""

    # optimization
    trade_off: float = 1.0
    threshold: float = 0.95
    lr0: float = 0.001
    t_max: int = 5000
    batch_size: int = 32
    momentum: float = 0.9
    seed: int = 0
    eval_interval: int = 500
    # ablation switches
    use_adv: bool = True
    use_lu: bool = True
    use_ld: bool = True
    strong_in_lu: bool = True
    strong_in_ld: bool = True
    # the reversed (extractor-side) adversarial gradient ramps from 0 up to
    # adv_strength over training; the raw full-strength min-max oscillates
    # at this scale while the discriminator itself always trains unscaled
    adv_warmup: bool = True
    adv_strength: float = 0.2
    # architecture
    conv_channels1: int = 6
    conv_channels2: int = 12
    feature_dim: int = 64
    classifier_hidden: int = 0
    discriminator_hidden: int = 64
    # strong-augmentation policy
    aug_ops_per_image: int = 2
    aug_erase_prob: float = 0.5
    # data: synthetic benchmark ...
    data_kind: str = "glyphs"
    data_seed: int = 1234
    classes: int = 10
    image_size: int = 32
    glyph_strokes: int = 3
    stroke_radius: float = 1.1
    source_style_jitter: float = 0.02
    target_style_jitter: float = 0.045
    erosion_radius: int = 1
    speckle_density: float = 0.06
    contrast_jitter: float = 0.25
    brightness_jitter: float = 0.10
    rotation_jitter: float = 10.0
    source_train_per_class: int = 200
    target_train_per_class: int = 200
    test_per_class: int = 50
    # ... or manifest ingestion
    data_root: str = ""
    source_train_manifest: str = ""
    target_train_manifest: str = ""
    source_test_manifest: str = ""
    target_test_manifest: str = ""

    def validate(self) -> None:
        if self.trade_off < 0:
            raise ValueError(f"trade_off must be >= 0, got {self.trade_off}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.t_max < 0:
            raise ValueError(f"t_max must be >= 0, got {self.t_max}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.data_kind not in ("glyphs", "manifest"):
            raise ValueError(f"unknown data_kind {self.data_kind!r}")

    def glyph_spec(self) -> GlyphSpec:
        return GlyphSpec(
            classes=self.classes, strokes=self.glyph_strokes, image_size=self.image_size,
            stroke_radius=self.stroke_radius,
            source_style_jitter=self.source_style_jitter,
            target_style_jitter=self.target_style_jitter,
            erosion_radius=self.erosion_radius, speckle_density=self.speckle_density,
            contrast_jitter=self.contrast_jitter, brightness_jitter=self.brightness_jitter,
            rotation_jitter=self.rotation_jitter)

    def glyph_counts(self) -> GlyphCounts:
        return GlyphCounts(
            source_train=self.source_train_per_class,
            target_train=self.target_train_per_class,
            source_test=self.test_per_class, target_test=self.test_per_class)

    def strong_policy(self) -> StrongPolicy:
        return StrongPolicy(ops_per_image=self.aug_ops_per_image,
                            erase_prob=self.aug_erase_prob)


# -- config file io ----------------------------------------------------------------


def _coerce(text: str, target_type) -> object:
    if target_type is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return target_type(text)


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse `key = value` lines into a TrainConfig."""
    config = dataclasses.replace(base) if base else TrainConfig()
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    types = {"float": float, "int": int, "str": str, "bool": bool}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        setattr(config, key, _coerce(value, types[fields[key]]))
    config.validate()
    return config


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def config_text(config: TrainConfig) -> str:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in dataclasses.fields(TrainConfig)]
    return "\n".join(lines) + "\n"


def apply_overrides(config: TrainConfig, overrides: list[str]) -> TrainConfig:
    """Apply `key=value` strings on top of a config."""
    return parse_config("\n".join(overrides), base=config)


# -- schedule -----------------------------------------------------------------------


def lr_schedule(lr0: float, t: int, t_max: int) -> float:
    """Polynomial decay lr0 * (1 - t/t_max)^0.9 from lr0 down to zero."""
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if not 0 <= t <= t_max:
        raise ValueError(f"iteration {t} outside [0, {t_max}]")
    return lr0 * (1.0 - t / t_max) ** 0.9


# -- model state ----------------------------------------------------------------------


class TrainState:
    """Networks, the flat parameter set, and the iteration counter."""

    def __init__(self, config: TrainConfig):
        rng = SeededRng(config.seed, (_STREAM_INIT,))
        self.extractor = FeatureExtractor(
            config.image_size, config.image_size, rng.child(0),
            channels=(config.conv_channels1, config.conv_channels2),
            feature_dim=config.feature_dim)
        self.classifier = Classifier(
            config.feature_dim, config.classes, rng.child(1),
            hidden=config.classifier_hidden)
        self.discriminator = Discriminator(
            config.feature_dim, rng.child(2), hidden=config.discriminator_hidden)
        self.params = ag.ParamSet()
        self.params.add_group("F", self.extractor.params())
        self.params.add_group("G", self.classifier.params())
        self.params.add_group("D", self.discriminator.params())
        self.iteration = 0

    def checkpoint_arrays(self):
        return self.params.state_arrays()

    def load_checkpoint_arrays(self, arrays) -> None:
        self.params.load_state_arrays(arrays)


# -- datasets ---------------------------------------------------------------------------

_BENCH_CACHE: dict[tuple, Benchmark] = {}


def make_datasets(config: TrainConfig) -> Benchmark:
    if config.data_kind == "manifest":
        root = config.data_root
        return Benchmark(
            source_train=load_dataset(root, config.source_train_manifest, domain="source",
                                      split="train", classes=config.classes,
                                      image_size=config.image_size),
            target_train=load_dataset(root, config.target_train_manifest, domain="target",
                                      split="train", classes=config.classes,
                                      image_size=config.image_size),
            source_test=load_dataset(root, config.source_test_manifest, domain="source",
                                     split="test", classes=config.classes,
                                     image_size=config.image_size),
            target_test=load_dataset(root, config.target_test_manifest, domain="target",
                                     split="test", classes=config.classes,
                                     image_size=config.image_size),
        )
    spec, counts = config.glyph_spec(), config.glyph_counts()
    key = (config.data_seed,) + dataclasses.astuple(spec) + dataclasses.astuple(counts)
    if key not in _BENCH_CACHE:
        _BENCH_CACHE[key] = generate_glyph_benchmark(spec, counts, config.data_seed)
    return _BENCH_CACHE[key]


# -- one training step --------------------------------------------------------------------


def _augment_target(tgt_images: np.ndarray, config: TrainConfig, step: int,
                    need_weak: bool, need_strong: bool):
    policy = config.strong_policy()
    weak = np.empty_like(tgt_images) if need_weak else None
    strong = np.empty_like(tgt_images) if need_strong else None
    for i in range(tgt_images.shape[0]):
        if need_weak:
            rng = SeededRng(config.seed, (_STREAM_AUGMENT, step, i, _WEAK))
            weak[i] = weak_augment(tgt_images[i], rng)
        if need_strong:
            rng = SeededRng(config.seed, (_STREAM_AUGMENT, step, i, _STRONG))
            strong[i] = strong_augment(tgt_images[i], policy, rng)
    return weak, strong


def train_step(state: TrainState, src_images: np.ndarray, src_labels: np.ndarray,
               tgt_images: np.ndarray, config: TrainConfig, lr: float) -> dict:
    """One fused forward/backward/update; returns the per-loss record."""
    need_weak = config.use_adv or config.use_lu or config.use_ld
    need_strong = ((config.use_lu and config.strong_in_lu)
                   or (config.use_ld and config.strong_in_ld))
    weak, strong = _augment_target(tgt_images, config, state.iteration,
                                   need_weak, need_strong)

    segments = [src_images]
    if need_weak:
        segments.append(weak)
    if need_strong:
        segments.append(strong)
    batch = ag.tensor(np.concatenate(segments, axis=0))
    feats = state.extractor.forward(batch)
    logits = state.classifier.logits(feats)

    n_src = src_images.shape[0]
    n_tgt = tgt_images.shape[0]
    src_logits = ag.slice_rows(logits, 0, n_src)
    weak_logits = strong_logits = None
    if need_weak:
        weak_logits = ag.slice_rows(logits, n_src, n_src + n_tgt)
    if need_strong:
        at = n_src + (n_tgt if need_weak else 0)
        strong_logits = ag.slice_rows(logits, at, at + n_tgt)

    l_cls = losses.source_classification_loss(src_logits, src_labels)
    terms = [l_cls]
    record = {"l_cls": l_cls.item(), "l_adv": 0.0, "l_u": 0.0, "l_d": 0.0}

    if config.use_adv:
        src_feats = ag.slice_rows(feats, 0, n_src)
        weak_feats = ag.slice_rows(feats, n_src, n_src + n_tgt)
        domain_in = ag.concat_rows([src_feats, weak_feats])
        scale = config.adv_strength
        if config.adv_warmup:
            progress = state.iteration / max(config.t_max, 1)
            scale *= 2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0
        if scale != 1.0:
            domain_in = gradient_scale(domain_in, scale)
        domain_logits = state.discriminator.logits(domain_in, reverse=True)
        l_adv = losses.domain_discrimination_loss(
            ag.slice_rows(domain_logits, 0, n_src),
            ag.slice_rows(domain_logits, n_src, n_src + n_tgt))
        record["l_adv"] = l_adv.item()
        terms.append(l_adv)

    pseudo = None
    if config.use_lu or config.use_ld:
        weak_probs = ag.softmax_rows(weak_logits)
    if config.use_lu:
        # labels are read off the weak view's values; no gradient flows through them
        pseudo = pseudolabel.assign_pseudo_labels(weak_probs.data, config.threshold)
        lu_logits = strong_logits if config.strong_in_lu else weak_logits
        l_u = losses.consistency_loss(lu_logits, pseudo)
        record["l_u"] = l_u.item()
        terms.append(l_u)

    if config.use_ld:
        other = ag.softmax_rows(strong_logits) if config.strong_in_ld else weak_probs
        l_d = losses.transition_consistency_loss(weak_probs, other)
        record["l_d"] = l_d.item()
        if config.trade_off != 0.0:
            terms.append(l_d if config.trade_off == 1.0
                         else ag.mul(config.trade_off, l_d))

    total = terms[0]
    for term in terms[1:]:
        total = ag.add(total, term)
    record["total"] = total.item()
    record["lr"] = lr
    if pseudo is not None:
        record["batch_mask_rate"] = float(np.mean(pseudo >= 0))

    if not math.isfinite(record["total"]):
        raise TrainingDiverged(
            f"non-finite loss at iteration {state.iteration}: "
            f"l_cls={record['l_cls']} l_adv={record['l_adv']} "
            f"l_u={record['l_u']} l_d={record['l_d']}")

    state.params.zero_grad()
    ag.backward(total, params=state.params.tensors())
    ag.sgd_momentum_step(state.params, state.params.gather_grads(), lr,
                         momentum=config.momentum)
    state.iteration += 1
    return record


# -- evaluation ------------------------------------------------------------------------


def _predict_probabilities(state: TrainState, images: np.ndarray,
                           chunk: int = 256) -> np.ndarray:
    out = []
    with ag.no_grad():
        for start in range(0, images.shape[0], chunk):
            feats = state.extractor.forward(images[start:start + chunk])
            out.append(state.classifier.probabilities(feats).data)
    return np.concatenate(out, axis=0)


def evaluate(state: TrainState, dataset: Dataset) -> float:
    """Fraction of argmax-correct predictions; no augmentation, ties to the
    lowest class index."""
    if dataset.labels is None:
        raise ValueError(f"dataset {dataset.domain}-{dataset.split} has no labels to evaluate")
    probs = _predict_probabilities(state, dataset.images)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels))


def pseudo_label_diagnostics(state: TrainState, target_train: Dataset,
                             threshold: float) -> tuple[float, float | None]:
    """Mask rate and purity of the current model over the raw target pool."""
    probs = _predict_probabilities(state, target_train.images)
    rate = pseudolabel.mask_rate(probs, threshold)
    pure = None
    if target_train.eval_labels is not None:
        pure = pseudolabel.purity(probs, threshold, target_train.eval_labels)
    return rate, pure


# -- experiment driver --------------------------------------------------------------------


def _eval_record(state: TrainState, bench: Benchmark, config: TrainConfig) -> dict:
    rate, pure = pseudo_label_diagnostics(state, bench.target_train, config.threshold)
    return {
        "source_test_acc": evaluate(state, bench.source_test),
        "target_test_acc": evaluate(state, bench.target_test),
        "mask_rate": rate,
        "purity": pure,
    }


def run_experiment(config: TrainConfig, run_dir) -> dict:
    """Train for t_max iterations; write metrics JSONL, config, checkpoint.

    Returns a summary with the final accuracies and artifact paths.
    """
    config.validate()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(config_text(config), encoding="utf-8")

    bench = make_datasets(config)
    state = TrainState(config)
    metrics_path = run_dir / "metrics.jsonl"

    src_iter = iter(BatchIterator(bench.source_train, config.batch_size,
                                  config.seed, stream=(_STREAM_SOURCE_ORDER,)))
    tgt_iter = iter(BatchIterator(bench.target_train, config.batch_size,
                                  config.seed, stream=(_STREAM_TARGET_ORDER,)))

    final_eval = None
    with open(metrics_path, "w", encoding="utf-8") as metrics:
        def emit(record: dict) -> None:
            metrics.write(json.dumps(record, sort_keys=True) + "\n")

        record0 = {"iteration": 0, "lr": config.lr0}
        record0.update(_eval_record(state, bench, config))
        final_eval = record0
        emit(record0)

        for t in range(1, config.t_max + 1):
            lr = lr_schedule(config.lr0, t - 1, config.t_max)
            src_images, src_labels = next(src_iter)
            tgt_images, _ = next(tgt_iter)
            record = train_step(state, src_images, src_labels, tgt_images, config, lr)
            record["iteration"] = t
            if t % config.eval_interval == 0 or t == config.t_max:
                record.update(_eval_record(state, bench, config))
                final_eval = record
            emit(record)

    ckpt_path = run_dir / "checkpoint.ckpt"
    ag.save_params(ckpt_path, state.checkpoint_arrays())
    return {
        "config": config,
        "iterations": config.t_max,
        "source_test_acc": final_eval["source_test_acc"],
        "target_test_acc": final_eval["target_test_acc"],
        "metrics_path": metrics_path,
        "checkpoint_path": ckpt_path,
    }


def run_repeated(config: TrainConfig, num_seeds: int, run_dir) -> dict:
    """Run num_seeds seeds (seed, seed+1, ...) and report mean and std."""
    if num_seeds < 1:
        raise ValueError("need at least one seed")
    run_dir = Path(run_dir)
    summaries = []
    for i in range(num_seeds):
        cfg = dataclasses.replace(config, seed=config.seed + i)
        summaries.append(run_experiment(cfg, run_dir / f"seed_{cfg.seed}"))
    src = np.array([s["source_test_acc"] for s in summaries])
    tgt = np.array([s["target_test_acc"] for s in summaries])
    return {
        "runs": summaries,
        "source_test_mean": float(src.mean()),
        "source_test_std": float(src.std()),
        "target_test_mean": float(tgt.mean()),
        "target_test_std": float(tgt.std()),
    }
