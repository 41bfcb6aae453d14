"""Per-horizon LSTM subnetworks: splitting, early-stopped training, blank prediction."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import json
import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import (N_MOTOR, FeaturizedTrial, Normalizer, WindowSet, fit_normalizer, window_dataset,
                       window_inputs, window_length)
from .lstm import AdamState, LSTMParams, adam_step, backward, clip_by_norm, mse_loss, predict

log = logging.getLogger(__name__)

DEFAULT_INTEGRATION_MS = (27, 53, 200, 600)
ALL_HORIZONS = tuple(range(1, 38))
DESK_HORIZONS = (1, 19, 37)
DESK_EPOCHS = 200
# 200 epochs at the full-run optimizer settings barely move the loss, so desk
# runs take more and larger Adam steps
DESK_LEARNING_RATE = 3e-3
DESK_BATCH_SIZE = 8
SPLIT_FRACTIONS = (0.68, 0.12, 0.20)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, horizon: int | None = None):
        self.epoch = epoch
        self.horizon = horizon
        where = f" (horizon {horizon})" if horizon is not None else ""
        super().__init__(f"loss became NaN at epoch {epoch}{where}")


@dataclass(frozen=True)
class ModelSpec:
    integration_ms: float = 27
    horizons: tuple = ALL_HORIZONS
    batch_size: int = 128
    max_epochs: int = 2000
    patience: int = 100
    learning_rate: float = 1e-4
    seed: int = 0
    n_hidden: int = 25
    clip_norm: float | None = None

    def __post_init__(self):
        hz = tuple(int(h) for h in self.horizons)
        if not hz or list(hz) != sorted(set(hz)) or hz[0] < 1 or hz[-1] > 37:
            raise ValueError(f"horizons must be sorted, unique and within 1..37: {self.horizons}")
        object.__setattr__(self, "horizons", hz)
        if self.integration_ms <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValueError("integration_ms, batch_size and max_epochs must be positive")
        if self.patience < 0 or self.learning_rate <= 0:
            raise ValueError("patience must be >= 0 and learning_rate > 0")

    @property
    def window_length(self) -> int:
        return window_length(self.integration_ms)

    def desk(self, horizons=DESK_HORIZONS, epochs_cap: int = DESK_EPOCHS) -> "ModelSpec":
        return replace(self, horizons=tuple(horizons), max_epochs=min(self.max_epochs, epochs_cap),
                       learning_rate=DESK_LEARNING_RATE, batch_size=DESK_BATCH_SIZE)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    initial_train_loss: float = math.nan
    initial_val_loss: float = math.nan
    best_epoch: int = 0

    @property
    def stopped_epoch(self) -> int:
        return len(self.val_loss)

    @property
    def best_val_loss(self) -> float:
        return self.initial_val_loss if self.best_epoch == 0 else self.val_loss[self.best_epoch - 1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# best_epoch={self.best_epoch}\n")
            fh.write("epoch,train_loss,val_loss\n")
            fh.write(f"0,{float(self.initial_train_loss)!r},{float(self.initial_val_loss)!r}\n")
            for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                fh.write(f"{e},{float(tr)!r},{float(va)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "History":
        h = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line.startswith("# best_epoch="):
                    h.best_epoch = int(line.split("=")[1])
                elif line and line[0].isdigit():
                    e, tr, va = line.split(",")
                    if e == "0":
                        h.initial_train_loss, h.initial_val_loss = float(tr), float(va)
                    else:
                        h.train_loss.append(float(tr))
                        h.val_loss.append(float(va))
        return h


@dataclass
class Split:
    train: list
    validation: list
    test: list


def split_counts(n: int) -> tuple[int, int, int]:
    """68/12/20 by nearest rounding; ties go to the training partition."""
    def round_down_ties(x):
        return int(math.ceil(x - 0.5 - 1e-9))
    n_val = round_down_ties(n * SPLIT_FRACTIONS[1])
    n_test = round_down_ties(n * SPLIT_FRACTIONS[2])
    return n - n_val - n_test, n_val, n_test


def split_dataset(trials: Sequence, seed: int) -> Split:
    """Random trial-level partition into train / validation / test."""
    n = len(trials)
    if n < 10:
        raise ValueError(f"need at least 10 trials to split, got {n}")
    n_train, n_val, _ = split_counts(n)
    order = np.random.default_rng([seed, 68_12_20]).permutation(n)
    pick = lambda idx: [trials[i] for i in sorted(idx)]
    return Split(pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
                 pick(order[n_train + n_val:]))


def fit_train_normalizer(train: Sequence[FeaturizedTrial]) -> Normalizer:
    """Motor statistics over whole training trials, optical ones up to the end of the blank.

    Optical rates explode as the ball closes on the head after the blank, which
    would shrink the normalized inputs ~100x, while the motor block needs the
    full reach so that long-horizon paddle targets stay near unit scale.
    """
    whole = fit_normalizer([ft.features for ft in train], "train")
    used = fit_normalizer([ft.features[:ft.blank_onset + ft.n_blank + 1] for ft in train], "train")
    return Normalizer(np.r_[whole.mean[:N_MOTOR], used.mean[N_MOTOR:]],
                      np.r_[whole.sd[:N_MOTOR], used.sd[N_MOTOR:]], "train")


@dataclass
class Dataset:
    """Featurized trials split by partition, with a train-only normalizer."""
    train: list
    validation: list
    test: list
    normalizer: Normalizer

    @classmethod
    def build(cls, featurized: Sequence[FeaturizedTrial], seed: int) -> "Dataset":
        split = split_dataset(list(featurized), seed)
        return cls(split.train, split.validation, split.test, fit_train_normalizer(split.train))

    @classmethod
    def from_partitions(cls, featurized: Sequence[FeaturizedTrial], ids: dict,
                        normalizer: Normalizer | None = None) -> "Dataset":
        """Rebuild a recorded split from ``{"train": [...], "validation": [...], "test": [...]}``."""
        by_id = {ft.trial_id: ft for ft in featurized}
        missing = [i for part in ids.values() for i in part if i not in by_id]
        if missing:
            raise ValueError(f"split refers to {len(missing)} trials absent from the features, "
                             f"e.g. {missing[:3]}")
        parts = {name: [by_id[i] for i in ids[name]] for name in ("train", "validation", "test")}
        norm = normalizer if normalizer is not None else fit_train_normalizer(parts["train"])
        return cls(parts["train"], parts["validation"], parts["test"], norm)

    def split_ids(self) -> dict:
        return {name: [int(ft.trial_id) for ft in self.partition(name)]
                for name in ("train", "validation", "test")}

    def partition(self, name: str) -> list:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]

    def windows(self, name: str, integration_ms: float, horizon: int) -> WindowSet:
        return window_dataset(self.partition(name), integration_ms, horizon, self.normalizer,
                              partition=name)


def _epoch_batches(rng, n, batch_size):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train_subnetwork(train: WindowSet, validation: WindowSet, spec: ModelSpec,
                     horizon: int | None = None) -> tuple[LSTMParams, History]:
    """Mini-batch Adam with early stopping on validation MSE.

    Returns the parameters of the best validation epoch (epoch 0 being the
    initialization) and the loss history.
    """
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation windows must be nonempty")
    for ws in (train, validation):
        if ws.partition == "test":
            raise ValueError("test-partition windows cannot be used for training")
    horizon = train.horizon_frames if horizon is None else horizon
    rng = np.random.default_rng([spec.seed, horizon])
    params = LSTMParams.initialize(rng, train.inputs.shape[2], spec.n_hidden, train.targets.shape[1])
    state = AdamState.for_params(params, learning_rate=spec.learning_rate)
    hist = History()
    hist.initial_train_loss = mse_loss(predict(train.inputs, params), train.targets)
    hist.initial_val_loss = mse_loss(predict(validation.inputs, params), validation.targets)
    best, best_loss, wait = params.copy(), hist.initial_val_loss, 0
    for epoch in range(1, spec.max_epochs + 1):
        total = 0.0
        for idx in _epoch_batches(rng, len(train), spec.batch_size):
            loss, grads = backward(train.inputs[idx], train.targets[idx], params)
            if spec.clip_norm is not None:
                grads = clip_by_norm(grads, spec.clip_norm)
            adam_step(params, grads, state)
            total += loss * len(idx)
        val = mse_loss(predict(validation.inputs, params), validation.targets)
        if not (math.isfinite(total) and math.isfinite(val)):
            raise TrainingDivergedError(epoch, horizon)
        hist.train_loss.append(total / len(train))
        hist.val_loss.append(val)
        if val < best_loss:
            best, best_loss, wait = params.copy(), val, 0
            hist.best_epoch = epoch
        else:
            wait += 1
            if wait >= max(spec.patience, 1):
                break
    return best, hist


@dataclass
class TrainedModel:
    spec: ModelSpec
    subnetworks: dict
    normalizer: Normalizer
    histories: dict

    @property
    def horizons(self) -> tuple:
        return tuple(sorted(self.subnetworks))

    @property
    def label(self) -> str:
        return f"lstm_I{self.spec.integration_ms:g}"

    def predict(self, inputs: np.ndarray, horizon: int) -> np.ndarray:
        """Normalized-space predictions for normalized (N, L, 16) windows."""
        return predict(inputs, self.subnetworks[horizon])

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {"kind": "lstm_model", "spec": asdict(self.spec),
                    "horizons": list(self.horizons), "window_length": self.spec.window_length}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        self.normalizer.save(d / "normalizer.txt")
        for h in self.horizons:
            self.subnetworks[h].save(d / f"subnet_{h:02d}.params")
            self.histories[h].to_csv(d / f"history_{h:02d}.csv")

    @classmethod
    def load(cls, directory) -> "TrainedModel":
        d = Path(directory)
        if not (d / "manifest.json").exists():
            raise FileNotFoundError(f"no trained model at {d} (missing manifest.json)")
        manifest = json.loads((d / "manifest.json").read_text())
        spec_fields = manifest["spec"]
        spec_fields["horizons"] = tuple(spec_fields["horizons"])
        spec = ModelSpec(**spec_fields)
        subnets = {h: LSTMParams.load(d / f"subnet_{h:02d}.params") for h in manifest["horizons"]}
        hists = {h: History.from_csv(d / f"history_{h:02d}.csv") for h in manifest["horizons"]}
        return cls(spec, subnets, Normalizer.load(d / "normalizer.txt"), hists)


def _train_one(args):
    spec, train, validation, horizon = args
    return horizon, train_subnetwork(train, validation, spec, horizon)


def train_model(spec: ModelSpec, dataset: Dataset, workers: int = 1) -> TrainedModel:
    """Train one independent subnetwork per horizon on shared blank-onset windows."""
    jobs = []
    for h in spec.horizons:
        jobs.append((spec, dataset.windows("train", spec.integration_ms, h),
                     dataset.windows("validation", spec.integration_ms, h), h))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_train_one, jobs))
    else:
        results = {}
        for job in jobs:
            h, res = _train_one(job)
            log.info("I=%g ms horizon %d: best epoch %d, val %.5f", spec.integration_ms, h,
                     res[1].best_epoch, res[1].best_val_loss)
            results[h] = res
    return TrainedModel(spec, {h: results[h][0] for h in spec.horizons}, dataset.normalizer,
                        {h: results[h][1] for h in spec.horizons})


def predict_blank(model: TrainedModel, trial: FeaturizedTrial) -> np.ndarray:
    """Physical-unit motor predictions, one row per horizon, from the blank-onset window."""
    x = model.normalizer.apply(window_inputs([trial], model.spec.integration_ms))
    rows = [model.normalizer.invert_motor(model.predict(x, h))[0] for h in model.horizons]
    return np.vstack(rows)
