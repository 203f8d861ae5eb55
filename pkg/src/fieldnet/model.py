"""End-to-end deinterlacing network: feature extraction, four-way alignment,
attention fusion, and separate even/odd reconstruction.

Pipeline per 5-field window: a shared entry conv lifts each field to
``base_channels``; shared residual blocks refine them; each supporting field
is aligned to the center reference through its own chain of deformable
blocks; aligned features plus the reference are fused by one conv; the
attention module's output on the reference's entry-conv feature is added;
finally the indicator bit routes the fused feature through the even- or
odd-field reconstruction branch, whose head conv maps back to 3 channels.

Weight files: magic ``DFRS``, little-endian u32 version and tensor count,
then per tensor a u32-length-prefixed UTF-8 name, u32 rank, u32 extents and
raw little-endian float32 data in row-major order; a trailing u64
length-prefixed UTF-8 JSON blob stores the network config.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import ops
from .attention import SAModule
from .autograd import Tensor, no_grad
from .blocks import AlignmentChain, Conv2dLayer, ParamStore, ResBlock
from .errors import DataError, ShapeError
from .fields import weave

MAGIC = b"DFRS"
FORMAT_VERSION = 1

ALIGN_MODES = ("dfres", "delta_dfres", "regular_offsets")
ATTENTION_MODES = ("sa", "esa", "none")


@dataclass(frozen=True)
class NetworkConfig:
    num_fields: int = 5
    base_channels: int = 64
    qk_channels: int = 8
    feat_blocks: int = 5
    align_blocks: int = 4
    recon_blocks: int = 7
    align_mode: str = "dfres"
    attention_mode: str = "sa"
    alignment_enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.num_fields % 2 != 1 or self.num_fields < 1:
            raise DataError(f"num_fields must be odd, got {self.num_fields}")
        if self.qk_channels * 8 != self.base_channels:
            raise DataError(
                f"qk_channels must be base_channels/8, got {self.qk_channels} "
                f"for {self.base_channels} channels")
        if self.align_mode not in ALIGN_MODES:
            raise DataError(f"align_mode must be one of {ALIGN_MODES}")
        if self.attention_mode not in ATTENTION_MODES:
            raise DataError(f"attention_mode must be one of {ATTENTION_MODES}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


class ModelWeights:
    """All learnable tensors of one network instance, plus its layer graph."""

    def __init__(self, config, seed=None, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.store = ParamStore()
        rng = np.random.default_rng(config.seed if seed is None else seed)
        c = config.base_channels
        store, dt = self.store, self.dtype

        self.conv1 = Conv2dLayer(store, "conv1", 3, c, 3, rng, dt)
        self.feat = [ResBlock(store, f"feat.block{i}", c, rng, dt)
                     for i in range(config.feat_blocks)]
        self.support_positions = [p for p in range(config.num_fields)
                                  if p != config.num_fields // 2]
        if config.alignment_enabled:
            self.align = {
                p: AlignmentChain(store, f"align.pos{p}", c,
                                  config.align_blocks, rng, dt,
                                  config.align_mode)
                for p in self.support_positions}
            self.conv2 = Conv2dLayer(store, "conv2", config.num_fields * c, c,
                                     3, rng, dt)
        else:
            self.align = None
            self.conv2 = None
        if config.attention_mode != "none":
            self.attention = SAModule(store, "attention", c,
                                      config.qk_channels, rng, dt)
        else:
            self.attention = None
        self.recon = {}
        for branch in ("even", "odd"):
            blocks = [ResBlock(store, f"recon.{branch}.block{i}", c, rng, dt)
                      for i in range(config.recon_blocks)]
            head = Conv2dLayer(store, f"recon.{branch}.conv3", c, 3, 3, rng, dt)
            self.recon[branch] = (blocks, head)

    def parameters(self):
        return self.store.tensors()

    def named_parameters(self):
        return self.store.items()

    def zero_grads(self):
        for t in self.store.tensors():
            t.zero_grad()


def init_weights(config, seed=None, dtype=np.float32):
    """Fresh weights: He conv init, zero biases/offset convs/attention scale."""
    return ModelWeights(config, seed=seed, dtype=dtype)


def forward(window, weights, config=None, train=False):
    """Estimate the missing opposite-parity field for a window's reference.

    ``config`` overrides the weights' stored config for mode switches (the
    SA->ESA swap, ablation arms); it must describe the same parameter set.
    Output is [3, h, w], clamped to [0,1] unless ``train``.
    """
    cfg = weights.config if config is None else config
    shape = window.fields[0].pixels.shape
    for f in window.fields:
        if f.pixels.shape != shape:
            raise ShapeError("window fields must share one size")

    entry_feats = []
    feats = []
    for f in window.fields:
        x = weights.conv1(Tensor(f.pixels, dtype=weights.dtype))
        entry_feats.append(x)
        for blk in weights.feat:
            x = blk(x)
        feats.append(x)
    center = cfg.num_fields // 2
    ref = feats[center]

    if cfg.alignment_enabled:
        if weights.align is None:
            raise DataError("config enables alignment but weights carry none")
        parts = []
        for p in range(cfg.num_fields):
            parts.append(ref if p == center
                         else weights.align[p](ref, feats[p]))
        fused = weights.conv2(ops.concat(parts, axis=0))
    else:
        fused = ref

    if cfg.attention_mode != "none":
        if weights.attention is None:
            raise DataError("config enables attention but weights carry none")
        fused = ops.add(fused,
                        weights.attention.forward(entry_feats[center],
                                                  mode=cfg.attention_mode))

    branch = "even" if window.indicator == 0 else "odd"
    blocks, head = weights.recon[branch]
    y = fused
    for blk in blocks:
        y = blk(y)
    est = head(y)
    if not train:
        est = ops.clamp01(est)
    return est


def deinterlace_frame(window, weights, config=None):
    """Full progressive frame: reference field woven with the estimate."""
    with no_grad():
        est = forward(window, weights, config=config, train=False)
    est_pixels = est.data.astype(window.reference.pixels.dtype, copy=False)
    return weave(window.reference, est_pixels, window.indicator)


def param_count(weights):
    """(total learnable scalars, per-subsystem breakdown)."""
    return weights.store.param_count(), weights.store.count_by_prefix(depth=1)


def save_weights(weights, path):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(weights.store)))
        for name, t in weights.store.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", t.data.ndim))
            for extent in t.data.shape:
                f.write(struct.pack("<I", extent))
            f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        blob = json.dumps(weights.config.to_dict(), sort_keys=True).encode("utf-8")
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)


def _read_exact(f, n, path):
    raw = f.read(n)
    if len(raw) != n:
        raise DataError(f"{path}: truncated weight file")
    return raw


def load_weights(path, expect_config=None):
    """Load a DFRS weight file; bit-exact round trip with save_weights.

    With ``expect_config``, the file must provide exactly that config's
    parameter set (mode switches with identical weights are applied through
    ``forward``'s config override instead).
    """
    with open(path, "rb") as f:
        if _read_exact(f, 4, path) != MAGIC:
            raise DataError(f"{path}: bad magic, not a DFRS weight file")
        (version,) = struct.unpack("<I", _read_exact(f, 4, path))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported format version {version}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, path))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, path))
            name = _read_exact(f, name_len, path).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, path))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4, path))[0]
                for _ in range(rank))
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(f, 4 * n_items, path)
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        (blob_len,) = struct.unpack("<Q", _read_exact(f, 8, path))
        blob = _read_exact(f, blob_len, path).decode("utf-8")
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after config blob")
    config = NetworkConfig.from_dict(json.loads(blob))
    if expect_config is not None:
        config = expect_config

    weights = ModelWeights(config, dtype=np.float32)
    want = set(weights.store.names())
    have = set(arrays)
    if want != have:
        missing = sorted(want - have)[:4]
        extra = sorted(have - want)[:4]
        raise DataError(
            f"{path}: parameter names do not match config "
            f"(missing {missing}, unexpected {extra})")
    for name, t in weights.store.items():
        arr = arrays[name]
        if arr.shape != t.data.shape:
            raise ShapeError(
                f"{path}: tensor {name} has shape {arr.shape}, "
                f"expected {t.data.shape}")
        t.data = arr
    return weights
