"""Toy training of the boundary-point decoder on synthetic ribbons."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .loss import Lambdas
from .nnet import DecodeTarget, DecoderParams, LossConfig, decode_batch, decoder_backward, init_decoder, save_checkpoint
from .representation import AdaptiveTextRegion, resample_pairs
from .synth import SyntheticRibbon, augment_flips, make_dataset

log = logging.getLogger(__name__)

MOMENTUM = 0.9
WEIGHT_DECAY = 5e-4


class NumericFailure(RuntimeError):
    pass


@dataclass
class TrainConfig:
    seed: int = 42
    dataset_size: int = 200
    holdout: float = 0.2
    kind: str = "arc"
    epochs: int = 50
    batch_size: int = 2
    hidden_dim: int = 128
    max_steps: int = 16
    lr: float = 1e-2
    lr_patience: int = 5
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    clip_norm: float = 5.0
    lambda_points: float = 1.0
    lambda_stop: float = 1.0
    # 0 = adaptive pair count; k > 0 = every region resampled to k pairs, no stop
    fixed_pairs: int = 0
    # 1 = train on each ribbon plus its horizontal/vertical mirror images
    augment: int = 1
    out_dir: str = "toy_run"

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            conv = {"int": int, "float": float, "str": str}[types[key]]
            try:
                values[key] = conv(val)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {val!r}") from e
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def _targets(ribbons: list[SyntheticRibbon], fixed_pairs: int) -> list[DecodeTarget]:
    out = []
    for r in ribbons:
        if fixed_pairs:
            fixed = resample_pairs(r.gt_region, fixed_pairs)
            pts = SyntheticRibbon(r.centerline, r.half_width, fixed, r.proposal, r.feature).targets()
        else:
            pts = r.targets()
        out.append(DecodeTarget(pts))
    return out


@dataclass
class SplitMetrics:
    point_error: float
    stop_accuracy: float

    def as_dict(self):
        return asdict(self)


def evaluate_decoder(params: DecoderParams, ribbons: list[SyntheticRibbon], max_steps: int, fixed_pairs: int = 0) -> SplitMetrics:
    """Mean Euclidean point error (normalized units) over the gt steps, and
    exact stop-step accuracy.  A fixed-count model is assumed to stop at
    ``fixed_pairs``."""
    X = np.stack([r.feature for r in ribbons])
    steps = max(max_steps, fixed_pairs)
    coords, stop_step = decode_batch(params, X, steps)
    errs, hits = [], 0
    for n, (r, tg) in enumerate(zip(ribbons, _targets(ribbons, fixed_pairs))):
        k = tg.num_pairs
        d = (coords[n, :k] - tg.points).reshape(-1, 2)
        errs.extend(np.hypot(d[:, 0], d[:, 1]))
        predicted = fixed_pairs if fixed_pairs else int(stop_step[n])
        hits += predicted == r.num_pairs
    return SplitMetrics(float(np.mean(errs)), hits / len(ribbons))


def split_dataset(cfg: TrainConfig):
    data = make_dataset(cfg.seed, cfg.dataset_size, cfg.kind)
    n_test = int(round(cfg.dataset_size * cfg.holdout))
    return data[n_test:], data[:n_test]


@dataclass
class TrainResult:
    params: DecoderParams
    history: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)


def _dump_batch(out_dir: Path, epoch: int, batch_idx, X, targets):
    path = out_dir / "nan_batch.json"
    path.write_text(json.dumps({
        "epoch": epoch,
        "indices": [int(i) for i in batch_idx],
        "features": X.tolist(),
        "targets": [t.points.tolist() for t in targets],
    }))
    return path


def train(cfg: TrainConfig, out_dir=None, write: bool = True) -> TrainResult:
    """SGD with momentum and weight decay (on weight matrices), learning rate
    halved after ``lr_patience`` epochs without a new best training loss.

    Writes ``metrics.csv``, ``checkpoint.json`` and ``config.txt`` to
    ``out_dir`` when ``write`` is set.
    """
    out = Path(out_dir or cfg.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
    train_set, test_set = split_dataset(cfg)
    if cfg.augment:
        train_set = augment_flips(train_set)
    rng = np.random.default_rng(cfg.seed)
    params = init_decoder(train_set[0].feature.size, cfg.hidden_dim, rng)
    lam = Lambdas(1.0, cfg.lambda_points, cfg.lambda_stop if not cfg.fixed_pairs else 0.0)
    loss_cfg = LossConfig(lam, average=True)
    X_all = np.stack([r.feature for r in train_set])
    T_all = _targets(train_set, cfg.fixed_pairs)
    velocity = params.zeros_like()
    decay_names = {"lstm.W", "lstm.U", "coord_w", "stop_w"}

    lr, best, stale = cfg.lr, np.inf, 0
    history = []
    epoch_metrics = evaluate_decoder(params, test_set, cfg.max_steps, cfg.fixed_pairs)
    history.append({"epoch": 0, "lr": lr, "loss": float("nan"), "points": float("nan"), "stop": float("nan"),
                    "test_point_error": epoch_metrics.point_error, "test_stop_accuracy": epoch_metrics.stop_accuracy})
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_set))
        tot = pts = stp = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            X = X_all[idx]
            tg = [T_all[i] for i in idx]
            loss, terms, grads = decoder_backward(params, X, tg, loss_cfg)
            if not np.isfinite(loss) or not np.all(np.isfinite(grads.flat())):
                dump = _dump_batch(out, epoch, idx, X, tg) if write else None
                raise NumericFailure(f"non-finite loss {loss} at epoch {epoch}; batch dumped to {dump}")
            norm = float(np.sqrt(sum(np.sum(g * g) for _, g in grads.named_arrays())))
            clip = min(1.0, cfg.clip_norm / norm) if cfg.clip_norm > 0 and norm > 0 else 1.0
            vel = dict(velocity.named_arrays())
            grd = dict(grads.named_arrays())
            for name, p in params.named_arrays():
                step = clip * grd[name]
                if name in decay_names:
                    step = step + cfg.weight_decay * p
                v = vel[name]
                v *= cfg.momentum
                v -= lr * step
                p += v
            w = len(idx) / len(train_set)
            tot += loss * w
            pts += terms["points"] * w
            stp += terms["stop"] * w
        m = evaluate_decoder(params, test_set, cfg.max_steps, cfg.fixed_pairs)
        history.append({"epoch": epoch, "lr": lr, "loss": tot, "points": pts, "stop": stp,
                        "test_point_error": m.point_error, "test_stop_accuracy": m.stop_accuracy})
        log.info("epoch %d lr %.4g loss %.5f points %.5f stop %.5f | test err %.4f stop acc %.3f",
                 epoch, lr, tot, pts, stp, m.point_error, m.stop_accuracy)
        if tot < best - 1e-12:
            best, stale = tot, 0
        else:
            stale += 1
            if stale >= cfg.lr_patience:
                lr, stale = lr / 2, 0

    final = evaluate_decoder(params, test_set, cfg.max_steps, cfg.fixed_pairs).as_dict()
    if write:
        with open(out / "metrics.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(history[0]))
            wr.writeheader()
            for row in history:
                wr.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        save_checkpoint(params, out / "checkpoint.json", {"config": asdict(cfg), "final": final})
        (out / "final_metrics.json").write_text(json.dumps(final, indent=2))
    return TrainResult(params, history, final)


def point_error_on(params: DecoderParams, ribbons: list[SyntheticRibbon], max_steps: int, fixed_pairs: int = 0,
                   compare_pairs: int | None = None) -> float:
    """Mean distance between predicted and gt chains, both resampled to
    ``compare_pairs`` points per chain (default: the gt pair count).

    Lets an adaptive and a fixed-count model be scored on the same points.
    """
    X = np.stack([r.feature for r in ribbons])
    coords, stop_step = decode_batch(params, X, max(max_steps, fixed_pairs))
    errs = []
    for n, r in enumerate(ribbons):
        k = fixed_pairs or max(int(stop_step[n]), 2)
        pred = AdaptiveTextRegion.from_pairs(coords[n, :k].reshape(-1, 2, 2))
        gt_norm = AdaptiveTextRegion.from_pairs(r.targets().reshape(-1, 2, 2))
        m = compare_pairs or r.num_pairs
        a, b = resample_pairs(pred, m), resample_pairs(gt_norm, m)
        d = np.vstack([a.tops - b.tops, a.bottoms - b.bottoms])
        errs.extend(np.hypot(d[:, 0], d[:, 1]))
    return float(np.mean(errs))
