"""Loss functions, Adam, and the deterministic training loop.

The loop samples 5-field windows with even-aligned square crops, balancing
window indicator 0/1 so both reconstruction branches receive updates. Runs
are deterministic for a fixed seed and single worker: the sampler draws a
fixed RNG sequence per iteration and multi-item gradients are reduced in
batch-index order. A non-finite batch loss aborts training with the
iteration and learning rate in the exception.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .autograd import Tensor, backward
from .errors import DataError, NumericalAbort
from .fields import FieldWindow, synth_interlaced
from .model import forward, save_weights

LOSS_CSV_HEADER = ("iteration", "loss")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 5000
    batch_size: int = 4
    crop_size: int = 64
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    charbonnier_eps: float = 1e-3
    l1_weight: float = 1.0
    charbonnier_weight: float = 0.1
    seed: int = 0
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if self.crop_size % 2 != 0:
            raise DataError(f"crop_size must be even, got {self.crop_size}")
        positive = ("iterations", "batch_size", "crop_size", "learning_rate",
                    "adam_beta1", "adam_beta2", "adam_epsilon",
                    "charbonnier_eps", "checkpoint_interval")
        for name in positive:
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")

    def to_dict(self):
        import dataclasses
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        import dataclasses
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


def charbonnier(pred, gt, eps=1e-3):
    """mean(sqrt((pred - gt)^2 + eps^2)); smooth everywhere for eps > 0."""
    diff = ops.sub(pred, gt)
    return ops.mean(ops.sqrt(ops.add_scalar(ops.mul(diff, diff), eps * eps)))


def total_loss(pred, gt, l1_weight=1.0, charbonnier_weight=0.1,
               charbonnier_eps=1e-3):
    """L1 plus a down-weighted Charbonnier penalty on the same difference."""
    l1 = ops.mean(ops.absolute(ops.sub(pred, gt)))
    cb = charbonnier(pred, gt, eps=charbonnier_eps)
    return ops.add(ops.mul_scalar(l1, l1_weight),
                   ops.mul_scalar(cb, charbonnier_weight))


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads=None):
        """One update; ``grads`` maps id(param) -> gradient, else .grad."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            g = grads.get(id(p)) if grads is not None else p.grad
            if g is None:
                continue
            g = g.astype(p.data.dtype, copy=False)
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class WindowSampler:
    """Balanced 5-field window sampler with even-aligned square crops."""

    def __init__(self, clips, crop_size, rng, edge_exclusion=2):
        self.crop = crop_size
        self.rng = rng
        self.streams = []
        self.by_indicator = {0: [], 1: []}
        for ci, clip in enumerate(clips):
            h, w = clip[0].pixels.shape[1:]
            if h < crop_size or w < crop_size:
                raise DataError(
                    f"clip {ci} is {h}x{w}, smaller than crop {crop_size}")
            stream = synth_interlaced(clip)
            self.streams.append(stream)
            for c in range(edge_exclusion, len(clip) - edge_exclusion):
                # even source index -> odd-parity field -> indicator 0
                self.by_indicator[c % 2].append((ci, c))
        for ind in (0, 1):
            if not self.by_indicator[ind]:
                raise DataError(
                    f"dataset has no interior windows with indicator {ind}")

    def sample(self):
        """One (FieldWindow, gt_field_pixels) pair at a random crop."""
        indicator = int(self.rng.integers(0, 2))
        pool = self.by_indicator[indicator]
        ci, center = pool[int(self.rng.integers(0, len(pool)))]
        stream = self.streams[ci]
        h, w = stream.fields[0].pixels.shape[1:]
        frame_h, crop = 2 * h, self.crop
        y0 = 2 * int(self.rng.integers(0, (frame_h - crop) // 2 + 1))
        x0 = int(self.rng.integers(0, w - crop + 1))
        fy0, fy1 = y0 // 2, (y0 + crop) // 2

        idx = [min(max(center + d, 0), len(stream) - 1) for d in (-2, -1, 0, 1, 2)]
        fields = tuple(
            replace(stream.fields[i],
                    pixels=np.ascontiguousarray(
                        stream.fields[i].pixels[:, fy0:fy1, x0:x0 + crop]))
            for i in idx)
        window = FieldWindow(fields=fields, indicator=indicator)
        gt = np.ascontiguousarray(
            stream.gt_fields[center].pixels[:, fy0:fy1, x0:x0 + crop])
        return window, gt


def _item_loss(weights, window, gt, config):
    pred = forward(window, weights, train=True)
    gt_t = Tensor(gt, dtype=weights.dtype)
    return total_loss(pred, gt_t, l1_weight=config.l1_weight,
                      charbonnier_weight=config.charbonnier_weight,
                      charbonnier_eps=config.charbonnier_eps)


def write_loss_csv(path, curve):
    with open(path, "w", newline="") as f:
        f.write(",".join(LOSS_CSV_HEADER) + "\n")
        for it, loss in curve:
            f.write(f"{it},{loss!r}\n")


def read_loss_csv(path):
    curve = []
    with open(path) as f:
        header = f.readline().strip()
        if header != ",".join(LOSS_CSV_HEADER):
            raise DataError(f"{path}: unexpected loss CSV header {header!r}")
        for line in f:
            it, loss = line.strip().split(",")
            curve.append((int(it), float(loss)))
    return curve


def train_loop(weights, clips, config, loss_csv_path=None, checkpoint_dir=None,
               workers=1, log_every=0):
    """Train in place; returns the loss curve as [(iteration, loss), ...]."""
    rng = np.random.default_rng(config.seed)
    sampler = WindowSampler(clips, config.crop_size, rng)
    params = weights.parameters()
    opt = Adam(params, lr=config.learning_rate, beta1=config.adam_beta1,
               beta2=config.adam_beta2, eps=config.adam_epsilon)
    inv_batch = np.asarray(1.0 / config.batch_size, dtype=weights.dtype)
    curve = []

    for it in range(1, config.iterations + 1):
        batch = [sampler.sample() for _ in range(config.batch_size)]

        def run_item(pair):
            window, gt = pair
            loss = _item_loss(weights, window, gt, config)
            grads = {}
            backward(loss, grad=inv_batch.copy(), into=grads)
            return loss.item(), grads

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_item, batch))
        else:
            results = [run_item(pair) for pair in batch]

        batch_loss = sum(r[0] for r in results) / config.batch_size
        if not math.isfinite(batch_loss):
            raise NumericalAbort(
                f"non-finite loss {batch_loss} at iteration {it}",
                iteration=it, learning_rate=config.learning_rate)

        total = {}
        for _, grads in results:
            for key, g in grads.items():
                total[key] = g if key not in total else total[key] + g
        opt.step(total)
        curve.append((it, batch_loss))

        if log_every and it % log_every == 0:
            print(f"iter {it}/{config.iterations} loss {batch_loss:.6f}",
                  flush=True)
        if checkpoint_dir is not None and it % config.checkpoint_interval == 0:
            save_weights(weights,
                         f"{checkpoint_dir}/checkpoint_{it:06d}.dfrs")

    if loss_csv_path is not None:
        write_loss_csv(loss_csv_path, curve)
    return curve
