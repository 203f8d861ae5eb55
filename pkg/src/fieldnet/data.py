"""Synthetic progressive clips for desk-scale training and evaluation.

Each clip is a textured background panning horizontally at 1 px per frame
with textured rectangles sliding over it at the clip's velocity (1 to 4 px
per frame, cycling across clips). One rectangle moves horizontally, one
vertically, one diagonally, so field-rate motion exercises every alignment
direction. All positions are integer and wrap around the canvas, and pixel
values are quantized to the 8-bit grid so clips survive PPM round trips
bit-exactly.
"""

import argparse
from pathlib import Path

import numpy as np

from .fields import Frame
from .ppm import write_clip

DEFAULT_FRAMES = 32
DEFAULT_SIZE = 64
DEFAULT_NUM_CLIPS = 8
DEFAULT_TRAIN_CLIPS = 6
VELOCITY_CYCLE = (1, 2, 3, 4)


def _bilinear_upsample(coarse, h, w):
    c, gh, gw = coarse.shape
    ys = np.linspace(0.0, gh - 1.0, h)
    xs = np.linspace(0.0, gw - 1.0, w)
    y0 = np.minimum(ys.astype(np.int64), gh - 2)
    x0 = np.minimum(xs.astype(np.int64), gw - 2)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    tl = coarse[:, y0][:, :, x0]
    tr = coarse[:, y0][:, :, x0 + 1]
    bl = coarse[:, y0 + 1][:, :, x0]
    br = coarse[:, y0 + 1][:, :, x0 + 1]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def _smooth_texture(rng, h, w, scale=4):
    coarse = rng.random((3, h // scale + 2, w // scale + 2))
    return _bilinear_upsample(coarse, h, w)


def _paste_wrapped(canvas, patch, top, left):
    h, w = canvas.shape[1:]
    ph, pw = patch.shape[1:]
    rows = (np.arange(ph) + top) % h
    cols = (np.arange(pw) + left) % w
    canvas[:, rows[:, None], cols[None, :]] = patch


def generate_clip(seed, num_frames=DEFAULT_FRAMES, height=DEFAULT_SIZE,
                  width=DEFAULT_SIZE, velocity=1, bg_velocity=1, num_rects=3):
    """One progressive clip as a list of [0,1] float32 Frames."""
    rng = np.random.default_rng(seed)
    bg = _smooth_texture(rng, height, width)
    bg_dir = 1 if rng.integers(0, 2) == 0 else -1

    rects = []
    directions = [(velocity, 0), (0, velocity), (velocity, velocity)]
    for r in range(num_rects):
        rh = int(rng.integers(12, 25))
        rw = int(rng.integers(12, 25))
        tex = _smooth_texture(rng, rh, rw, scale=3)
        top = int(rng.integers(0, height))
        left = int(rng.integers(0, width))
        dx, dy = directions[r % len(directions)]
        sx = 1 if rng.integers(0, 2) == 0 else -1
        sy = 1 if rng.integers(0, 2) == 0 else -1
        rects.append((tex, top, left, sy * dy, sx * dx))

    frames = []
    for t in range(num_frames):
        canvas = np.roll(bg, shift=bg_dir * bg_velocity * t, axis=2).copy()
        for tex, top, left, dy, dx in rects:
            _paste_wrapped(canvas, tex, top + dy * t, left + dx * t)
        quantized = np.round(canvas * 255.0) / 255.0
        frames.append(Frame(quantized.astype(np.float32)))
    return frames


def generate_static_clip(seed, num_frames=DEFAULT_FRAMES, height=DEFAULT_SIZE,
                         width=DEFAULT_SIZE):
    """Motionless variant of generate_clip; every frame is identical."""
    return generate_clip(seed, num_frames=num_frames, height=height,
                         width=width, velocity=0, bg_velocity=0)


def clip_velocity(clip_index):
    return VELOCITY_CYCLE[clip_index % len(VELOCITY_CYCLE)]


def make_dataset(seed=0, num_clips=DEFAULT_NUM_CLIPS,
                 train_clips=DEFAULT_TRAIN_CLIPS, num_frames=DEFAULT_FRAMES,
                 size=DEFAULT_SIZE):
    """(train, holdout) lists of clips with velocities cycling 1 to 4."""
    clips = [
        generate_clip(seed * 1000 + i, num_frames=num_frames, height=size,
                      width=size, velocity=clip_velocity(i))
        for i in range(num_clips)]
    return clips[:train_clips], clips[train_clips:]


def write_dataset(out_dir, seed=0, num_clips=DEFAULT_NUM_CLIPS,
                  num_frames=DEFAULT_FRAMES, size=DEFAULT_SIZE):
    """Write clip00/, clip01/, ... of PPM frames; returns the clip dirs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dirs = []
    for i in range(num_clips):
        clip = generate_clip(seed * 1000 + i, num_frames=num_frames,
                             height=size, width=size,
                             velocity=clip_velocity(i))
        clip_dir = out / f"clip{i:02d}"
        clip_dir.mkdir(exist_ok=True)
        write_clip(clip_dir, clip)
        dirs.append(clip_dir)
    return dirs


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="generate the synthetic moving-rectangle dataset")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--clips", type=int, default=DEFAULT_NUM_CLIPS)
    parser.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    parser.add_argument("--size", type=int, default=DEFAULT_SIZE)
    args = parser.parse_args(argv)
    dirs = write_dataset(args.out_dir, seed=args.seed, num_clips=args.clips,
                         num_frames=args.frames, size=args.size)
    print(f"wrote {len(dirs)} clips under {args.out_dir}")


if __name__ == "__main__":
    main()
