"""PNG export of factor matrices and contact sheets of frames and columns.

Absolute intensities are meaningless up to the factorization's reciprocal
scale ambiguity, so every exported PNG is normalized and the normalization
range is recorded in the filename.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .tensor import TensorError


def contact_sheet(frames, cols=None, gap=1):
    """Tile (n, h, w, c) frames into one (H, W, c) image with thin gaps."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 3:
        frames = frames[..., None]
    if frames.ndim != 4:
        raise TensorError(f"expected (n, h, w[, c]) frames, got {frames.shape}")
    n, h, w, c = frames.shape
    if cols is None:
        cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    sheet = np.full((rows * (h + gap) - gap, cols * (w + gap) - gap, c), np.nan)
    for k in range(n):
        r, q = divmod(k, cols)
        sheet[r * (h + gap):r * (h + gap) + h, q * (w + gap):q * (w + gap) + w] = frames[k]
    return np.nan_to_num(sheet, nan=np.nanmin(sheet) if np.isfinite(sheet).any() else 0.0)


def save_png(path_base, image):
    """Normalize to [0, 1], write 8-bit PNG; range goes into the filename.

    Returns the path actually written.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    lo = float(image.min()) if image.size else 0.0
    hi = float(image.max()) if image.size else 1.0
    span = hi - lo
    norm = (image - lo) / span if span > 0 else np.zeros_like(image)
    u8 = (np.clip(norm, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if u8.shape[-1] == 1:
        pil = Image.fromarray(u8[..., 0], mode="L")
    elif u8.shape[-1] == 3:
        pil = Image.fromarray(u8, mode="RGB")
    else:
        raise TensorError(f"cannot export {u8.shape[-1]}-channel image as PNG")
    path = f"{path_base}_min{lo:.4g}_max{hi:.4g}.png"
    pil.save(path)
    return path


def save_video_sheet(path_base, video, max_frames=64):
    """Contact sheet of evenly spaced frames from a (t, h, w, c) video."""
    video = np.asarray(video)
    t = video.shape[0]
    take = np.linspace(0, t - 1, min(t, max_frames)).astype(int)
    return save_png(path_base, contact_sheet(video[take]))


def save_transport_sheet(path_base, transport, max_columns=64):
    """Contact sheet of response images (columns) of an (I, J, i, j, c) transport."""
    transport = np.asarray(transport)
    I, J, i, j, c = transport.shape
    cols = transport.reshape(I, J, i * j, c).transpose(2, 0, 1, 3)
    take = np.linspace(0, i * j - 1, min(i * j, max_columns)).astype(int)
    return save_png(path_base, contact_sheet(cols[take]))
