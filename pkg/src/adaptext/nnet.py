"""Small numpy kernels for the refinement stage.

The boundary-point decoder is a single-layer LSTM fed the same proposal
descriptor at every step.  Each step has a coordinate head (one point
pair, 4 values in proposal-normalized units) and a stop head
(continue/stop logits).  Optional text/non-text and bbox heads act on the
descriptor directly, so the full refinement loss can be trained and
gradient-checked through one parameter set.

Gate layout in the stacked LSTM matrices is ``[input, forget, cell, output]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .loss import Lambdas, smooth_l1, smooth_l1_grad, softmax
from .representation import AdaptiveTextRegion, ProposalBox, denormalize_targets

CHECKPOINT_FORMAT = "adaptext-decoder"
CHECKPOINT_VERSION = 1
INIT_SCALE = 0.08
FORGET_BIAS = 1.0


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    W: np.ndarray  # (4H, D)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U.shape[1]

    def check(self):
        H, D = self.hidden_dim, self.input_dim
        if self.W.shape != (4 * H, D) or self.U.shape != (4 * H, H) or self.b.shape != (4 * H,):
            raise ValueError(f"inconsistent LSTM shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")


def lstm_step(params: LstmParams, state, x):
    """One LSTM step.  ``state`` is ``(h, c)``; returns ``((h, c), h)``.

    Works on single vectors or row-batches.
    """
    h, c = state
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim or np.shape(h)[-1] != params.hidden_dim:
        raise ValueError(
            f"dimension mismatch: input {x.shape[-1]} vs {params.input_dim}, "
            f"hidden {np.shape(h)[-1]} vs {params.hidden_dim}"
        )
    z = x @ params.W.T + h @ params.U.T + params.b
    H = params.hidden_dim
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return (h_new, c_new), h_new


@dataclass
class DecoderParams:
    lstm: LstmParams
    coord_w: np.ndarray  # (4, H)
    coord_b: np.ndarray  # (4,)
    stop_w: np.ndarray  # (2, H)
    stop_b: np.ndarray  # (2,)
    cls_w: np.ndarray | None = None  # (2, D)
    cls_b: np.ndarray | None = None
    bbox_w: np.ndarray | None = None  # (4, D)
    bbox_b: np.ndarray | None = None

    @property
    def has_proposal_heads(self) -> bool:
        return self.cls_w is not None

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "lstm.W", self.lstm.W
        yield "lstm.U", self.lstm.U
        yield "lstm.b", self.lstm.b
        for name in ("coord_w", "coord_b", "stop_w", "stop_b", "cls_w", "cls_b", "bbox_w", "bbox_b"):
            arr = getattr(self, name)
            if arr is not None:
                yield name, arr

    def check(self):
        self.lstm.check()
        H, D = self.lstm.hidden_dim, self.lstm.input_dim
        expect = {"coord_w": (4, H), "coord_b": (4,), "stop_w": (2, H), "stop_b": (2,)}
        if self.has_proposal_heads:
            expect.update({"cls_w": (2, D), "cls_b": (2,), "bbox_w": (4, D), "bbox_b": (4,)})
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    def zeros_like(self) -> "DecoderParams":
        return self.map(np.zeros_like)

    def copy(self) -> "DecoderParams":
        return self.map(np.copy)

    def map(self, fn) -> "DecoderParams":
        def m(a):
            return None if a is None else fn(a)

        return DecoderParams(
            LstmParams(fn(self.lstm.W), fn(self.lstm.U), fn(self.lstm.b)),
            m(self.coord_w), m(self.coord_b), m(self.stop_w), m(self.stop_b),
            m(self.cls_w), m(self.cls_b), m(self.bbox_w), m(self.bbox_b),
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.named_arrays()])


def init_decoder(
    input_dim: int,
    hidden_dim: int = 128,
    rng: np.random.Generator | None = None,
    proposal_heads: bool = False,
    scale: float = INIT_SCALE,
) -> DecoderParams:
    rng = np.random.default_rng(0) if rng is None else rng
    H, D = hidden_dim, input_dim

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape)

    b = u(4 * H)
    b[H : 2 * H] += FORGET_BIAS
    params = DecoderParams(LstmParams(u(4 * H, D), u(4 * H, H), b), u(4, H), u(4), u(2, H), u(2))
    if proposal_heads:
        params.cls_w, params.cls_b = u(2, D), u(2)
        params.bbox_w, params.bbox_b = u(4, D), u(4)
    return params


@dataclass
class DecoderStep:
    coords: np.ndarray
    stop_prob: float


@dataclass
class DecoderOutput:
    steps: list[DecoderStep]
    stop_step: int
    text_prob: float | None = None
    bbox: np.ndarray | None = None

    @property
    def degenerate(self) -> bool:
        return self.stop_step < 2

    def coords(self) -> np.ndarray:
        """Flattened coordinates of the steps before the stop step."""
        if not self.stop_step:
            return np.zeros(0)
        return np.concatenate([s.coords for s in self.steps[: self.stop_step]])

    def region(self, proposal: ProposalBox) -> AdaptiveTextRegion | None:
        if self.degenerate:
            return None
        return denormalize_targets(self.coords(), proposal)


def _unroll(params: DecoderParams, X: np.ndarray, T: int) -> dict:
    """Batched forward over ``T`` steps, keeping everything backward needs."""
    B, H = X.shape[0], params.lstm.hidden_dim
    xz = X @ params.lstm.W.T + params.lstm.b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache = {"X": X, "h": [h], "c": [c], "gates": [], "coords": [], "logits": []}
    for _ in range(T):
        z = xz + h @ params.lstm.U.T
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = sigmoid(z[:, 3 * H :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cache["h"].append(h)
        cache["c"].append(c)
        cache["gates"].append((i, f, g, o, tc))
        cache["coords"].append(h @ params.coord_w.T + params.coord_b)
        cache["logits"].append(h @ params.stop_w.T + params.stop_b)
    if params.has_proposal_heads:
        cache["cls_logits"] = X @ params.cls_w.T + params.cls_b
        cache["bbox"] = X @ params.bbox_w.T + params.bbox_b
    return cache


def decoder_forward(params: DecoderParams, feature, max_steps: int = 16) -> DecoderOutput:
    """Decode one proposal, stopping at the first step whose stop class wins."""
    x = np.asarray(feature, dtype=np.float64).reshape(-1)
    if x.shape[0] != params.lstm.input_dim:
        raise ValueError(f"feature has {x.shape[0]} values, decoder expects {params.lstm.input_dim}")
    if max_steps < 2:
        raise ValueError("max_steps must be >= 2")
    H = params.lstm.hidden_dim
    state = (np.zeros(H), np.zeros(H))
    steps = []
    stop_step = max_steps
    for t in range(max_steps):
        state, h = lstm_step(params.lstm, state, x)
        logits = h @ params.stop_w.T + params.stop_b
        steps.append(DecoderStep(h @ params.coord_w.T + params.coord_b, float(softmax(logits)[1])))
        if logits[1] > logits[0]:
            stop_step = t
            break
    out = DecoderOutput(steps, stop_step)
    if params.has_proposal_heads:
        out.text_prob = float(softmax(x @ params.cls_w.T + params.cls_b)[1])
        out.bbox = x @ params.bbox_w.T + params.bbox_b
    return out


def decode_batch(params: DecoderParams, X: np.ndarray, max_steps: int = 16):
    """Run ``max_steps`` steps for every row of ``X``.

    Returns ``(coords, stop_step)`` with coords shaped ``(B, max_steps, 4)``.
    Coordinates are produced for every step regardless of where decoding
    stops, so point error can be scored independently of stop accuracy.
    """
    cache = _unroll(params, np.asarray(X, dtype=np.float64), max_steps)
    coords = np.stack(cache["coords"], axis=1)
    logits = np.stack(cache["logits"], axis=1)
    stops = logits[:, :, 1] > logits[:, :, 0]
    stop_step = np.where(stops.any(axis=1), stops.argmax(axis=1), max_steps)
    return coords, stop_step


@dataclass
class DecodeTarget:
    """Supervision for one proposal.

    ``points`` is ``(k, 4)`` in proposal-normalized units (top x, top y,
    bottom x, bottom y).  The stop head is supervised at every step:
    continue for the ``k`` pair steps, stop at step ``k``.
    """

    points: np.ndarray | None = None
    t: int = 1
    bbox: np.ndarray | None = None

    @property
    def num_pairs(self) -> int:
        return 0 if self.points is None else len(self.points)


@dataclass
class LossConfig:
    lambdas: Lambdas = field(default_factory=Lambdas)
    average: bool = True


def _targets_arrays(targets: Sequence[DecodeTarget], T: int):
    B = len(targets)
    pts = np.zeros((B, T, 4))
    cmask = np.zeros((B, T))
    smask = np.zeros((B, T))
    labels = np.zeros((B, T), dtype=np.int64)
    t_ind = np.array([tg.t for tg in targets], dtype=np.float64)
    for n, tg in enumerate(targets):
        k = tg.num_pairs
        if k:
            pts[n, :k] = tg.points
            cmask[n, :k] = 1.0
            smask[n, : k + 1] = 1.0
            labels[n, k] = 1
    return pts, cmask, smask, labels, t_ind


def num_steps(targets: Sequence[DecodeTarget]) -> int:
    return max(max(tg.num_pairs for tg in targets) + 1, 1)


def decoder_loss(params: DecoderParams, X, targets: Sequence[DecodeTarget], cfg: LossConfig = LossConfig(), cache=None,
                 arrays=None):
    """Batch loss and per-term sums (each term summed over the batch before
    lambda/t weighting, divided by batch size when averaging)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] != len(targets):
        raise ValueError(f"{X.shape[0]} features for {len(targets)} targets")
    T = num_steps(targets)
    if cache is None:
        cache = _unroll(params, X, T)
    pts, cmask, smask, labels, t_ind = _targets_arrays(targets, T) if arrays is None else arrays
    lam = cfg.lambdas
    coords = np.stack(cache["coords"], axis=1)
    logits = np.stack(cache["logits"], axis=1)

    pts_term = (smooth_l1(pts - coords).sum(axis=2) * cmask).sum(axis=1)
    probs = softmax(logits)
    p_true = np.take_along_axis(probs, labels[..., None], axis=2)[..., 0]
    stop_term = (-np.log(np.maximum(p_true, 1e-12)) * smask).sum(axis=1)
    cls_term = np.zeros(len(targets))
    bbox_term = np.zeros(len(targets))
    if params.has_proposal_heads:
        cp = softmax(cache["cls_logits"])
        cls_term = -np.log(np.maximum(cp[np.arange(len(targets)), t_ind.astype(int)], 1e-12))
        for n, tg in enumerate(targets):
            if tg.bbox is not None:
                bbox_term[n] = smooth_l1(np.asarray(tg.bbox) - cache["bbox"][n]).sum()
    per = cls_term + t_ind * (lam.bbox * bbox_term + lam.points * pts_term + lam.stop * stop_term)
    scale = 1.0 / len(targets) if cfg.average else 1.0
    terms = {
        "cls": cls_term.sum() * scale,
        "bbox": (t_ind * bbox_term).sum() * scale,
        "points": (t_ind * pts_term).sum() * scale,
        "stop": (t_ind * stop_term).sum() * scale,
    }
    return float(per.sum() * scale), terms


def decoder_backward(params: DecoderParams, X, targets: Sequence[DecodeTarget], cfg: LossConfig = LossConfig()):
    """Loss and analytic gradients by backpropagation through time."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.lstm.input_dim:
        raise ValueError(f"feature dim {X.shape[1]} != decoder input dim {params.lstm.input_dim}")
    B = X.shape[0]
    T = num_steps(targets)
    cache = _unroll(params, X, T)
    loss, terms = decoder_loss(params, X, targets, cfg, cache)
    pts, cmask, smask, labels, t_ind = _targets_arrays(targets, T)
    lam = cfg.lambdas
    scale = 1.0 / B if cfg.average else 1.0
    H = params.lstm.hidden_dim
    g = params.zeros_like()

    w_pts = (lam.points * scale * t_ind)[:, None]
    w_stop = (lam.stop * scale * t_ind)[:, None]
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dz_sum = np.zeros((B, 4 * H))
    for step in reversed(range(T)):
        h = cache["h"][step + 1]
        h_prev = cache["h"][step]
        c_prev = cache["c"][step]
        i, f, gg, o, tc = cache["gates"][step]

        dcoord = -smooth_l1_grad(pts[:, step] - cache["coords"][step]) * (w_pts * cmask[:, step : step + 1])
        onehot = np.zeros((B, 2))
        onehot[np.arange(B), labels[:, step]] = 1.0
        dlogit = (softmax(cache["logits"][step]) - onehot) * (w_stop * smask[:, step : step + 1])
        g.coord_w += dcoord.T @ h
        g.coord_b += dcoord.sum(axis=0)
        g.stop_w += dlogit.T @ h
        g.stop_b += dlogit.sum(axis=0)

        dh = dcoord @ params.coord_w + dlogit @ params.stop_w + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [dc * gg * i * (1 - i), dc * c_prev * f * (1 - f), dc * i * (1 - gg * gg), do * o * (1 - o)], axis=1
        )
        dc_next = dc * f
        dh_next = dz @ params.lstm.U
        g.lstm.U += dz.T @ h_prev
        dz_sum += dz
    # the input projection is shared by every step
    g.lstm.W += dz_sum.T @ X
    g.lstm.b += dz_sum.sum(axis=0)

    if params.has_proposal_heads:
        onehot = np.zeros((B, 2))
        onehot[np.arange(B), t_ind.astype(int)] = 1.0
        dcls = (softmax(cache["cls_logits"]) - onehot) * scale
        g.cls_w += dcls.T @ X
        g.cls_b += dcls.sum(axis=0)
        dbox = np.zeros((B, 4))
        for n, tg in enumerate(targets):
            if tg.bbox is not None:
                dbox[n] = -smooth_l1_grad(np.asarray(tg.bbox) - cache["bbox"][n]) * lam.bbox * scale * t_ind[n]
        g.bbox_w += dbox.T @ X
        g.bbox_b += dbox.sum(axis=0)
    return loss, terms, g


@dataclass
class GradCheckResult:
    max_rel_error: float
    param: str
    index: tuple
    analytic: float
    numeric: float


REL_FLOOR = 1e-6


def compare_gradients(params: DecoderParams, loss_fn, grads: DecoderParams, epsilon: float = 1e-5) -> GradCheckResult:
    """Central differences of ``loss_fn(params)`` against ``grads``, entry by entry.

    Relative error is ``|a - n| / max(|a|, |n|, floor)`` with
    ``floor = REL_FLOOR * max(1, |loss|)``.  Roundoff in the differenced
    loss grows with its magnitude, so entries whose gradient is below that
    resolution are compared on an absolute scale instead.
    """
    floor = REL_FLOOR * max(1.0, abs(loss_fn(params)))
    worst = GradCheckResult(0.0, "", (), 0.0, 0.0)
    analytic = dict(grads.named_arrays())
    for name, arr in params.named_arrays():
        ga = analytic[name]
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + epsilon
            lp = loss_fn(params)
            arr[idx] = old - epsilon
            lm = loss_fn(params)
            arr[idx] = old
            num = (lp - lm) / (2 * epsilon)
            a = ga[idx]
            rel = abs(a - num) / max(abs(a), abs(num), floor)
            if rel > worst.max_rel_error or not worst.param:
                worst = GradCheckResult(float(rel), name, idx, float(a), float(num))
    return worst


def grad_check(params: DecoderParams, X, targets: Sequence[DecodeTarget], epsilon: float = 1e-5,
               cfg: LossConfig = LossConfig()) -> GradCheckResult:
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _, _, grads = decoder_backward(params, X, targets, cfg)
    T = num_steps(targets)
    arrays = _targets_arrays(targets, T)

    def loss_fn(p):
        return decoder_loss(p, X, targets, cfg, _unroll(p, X, T), arrays)[0]

    return compare_gradients(params, loss_fn, grads, epsilon)


# -- squeeze-and-excitation --------------------------------------------------


@dataclass
class SeBlockParams:
    fc1_w: np.ndarray  # (reduced, C)
    fc1_b: np.ndarray
    fc2_w: np.ndarray  # (C, reduced)
    fc2_b: np.ndarray

    @property
    def channels(self) -> int:
        return self.fc1_w.shape[1]

    @property
    def reduced(self) -> int:
        return self.fc1_w.shape[0]


SE_REDUCTION = 16
# (reduced, channels) of the SE blocks after each VGG16 stage
SE_VGG16_SHAPES = [(4, 64), (8, 128), (16, 256), (32, 512), (32, 512)]


def init_se(channels: int, reduction: int = SE_REDUCTION, rng: np.random.Generator | None = None) -> SeBlockParams:
    rng = np.random.default_rng(0) if rng is None else rng
    r = channels // reduction
    if r < 1 or channels % reduction:
        raise ValueError(f"{channels} channels not divisible by reduction {reduction}")
    s1, s2 = 1 / np.sqrt(channels), 1 / np.sqrt(r)
    return SeBlockParams(
        rng.uniform(-s1, s1, (r, channels)), np.zeros(r), rng.uniform(-s2, s2, (channels, r)), np.zeros(channels)
    )


def se_scales(params: SeBlockParams, feature: np.ndarray) -> np.ndarray:
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 3 or feature.shape[0] != params.channels:
        raise ValueError(f"expected ({params.channels}, H, W) feature map, got {feature.shape}")
    squeezed = feature.mean(axis=(1, 2))
    hidden = np.maximum(params.fc1_w @ squeezed + params.fc1_b, 0.0)
    return sigmoid(params.fc2_w @ hidden + params.fc2_b)


def se_forward(params: SeBlockParams, feature) -> np.ndarray:
    """Recalibrate channels: pool, FC, ReLU, FC, sigmoid, scale."""
    feature = np.asarray(feature, dtype=np.float64)
    return feature * se_scales(params, feature)[:, None, None]


# -- anchors -----------------------------------------------------------------

ANCHOR_SIZES = (32, 64, 128, 256, 512)
ANCHOR_RATIOS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class Anchor:
    x: float
    y: float
    w: float
    h: float


def anchor_grid(sizes=ANCHOR_SIZES, ratios=ANCHOR_RATIOS, stride: int = 16, fmap_w: int = 1, fmap_h: int = 1) -> list[Anchor]:
    """Anchors centred on each feature-map cell.

    For size ``s`` and ratio ``r`` (height / width) the anchor is
    ``s / sqrt(r)`` wide and ``s * sqrt(r)`` tall, so its area is ``s**2``.
    Ordering: row, column, size, ratio.
    """
    if not len(sizes) or not len(ratios):
        raise ValueError("anchor sizes and ratios must be non-empty")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    shapes = [(s / np.sqrt(r), s * np.sqrt(r)) for s in sizes for r in ratios]
    out = []
    for i in range(fmap_h):
        cy = (i + 0.5) * stride
        for j in range(fmap_w):
            cx = (j + 0.5) * stride
            out.extend(Anchor(cx, cy, float(w), float(h)) for w, h in shapes)
    return out


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(params: DecoderParams, path, extra: dict | None = None):
    """JSON checkpoint with a dimensions header.

    Layout::

        {"format": "adaptext-decoder", "version": 1,
         "input_dim": D, "hidden_dim": H, "proposal_heads": bool,
         "arrays": {name: {"shape": [...], "data": [float, ...]}}, "extra": {...}}

    ``data`` is row-major; floats are written with ``repr`` precision so
    they load back bit-exactly.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "input_dim": params.lstm.input_dim,
        "hidden_dim": params.lstm.hidden_dim,
        "proposal_heads": params.has_proposal_heads,
        "arrays": {n: {"shape": list(a.shape), "data": a.ravel().tolist()} for n, a in params.named_arrays()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> DecoderParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    arrays = {n: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for n, v in doc["arrays"].items()}
    params = DecoderParams(
        LstmParams(arrays.pop("lstm.W"), arrays.pop("lstm.U"), arrays.pop("lstm.b")),
        **{k: arrays.get(k) for k in ("coord_w", "coord_b", "stop_w", "stop_b", "cls_w", "cls_b", "bbox_w", "bbox_b")},
    )
    params.check()
    if params.lstm.input_dim != doc["input_dim"] or params.lstm.hidden_dim != doc["hidden_dim"]:
        raise ValueError(f"{path}: header dimensions disagree with arrays")
    return params
