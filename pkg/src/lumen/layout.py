"""Conversions between image-shaped tensors and their stacked matrix forms.

Videos are (t, n0, n1, channels); transport tensors are (I, J, i, j, channels).
Matrix forms carry a leading channel axis: observed videos become
(channels, I*J, t), hidden videos (channels, i*j, t), transports
(channels, I*J, i*j). Pixel stacking is row-major.
"""

from __future__ import annotations

import numpy as np

from .tensor import TensorError


def video_to_matrix(video):
    video = np.asarray(video)
    if video.ndim != 4:
        raise TensorError(f"expected video (t, n0, n1, c), got {video.shape}")
    t, n0, n1, c = video.shape
    return np.ascontiguousarray(video.reshape(t, n0 * n1, c).transpose(2, 1, 0))


def matrix_to_video(mat, frame_shape):
    mat = np.asarray(mat)
    c, p, t = mat.shape
    n0, n1 = frame_shape
    if p != n0 * n1:
        raise TensorError(f"matrix has {p} pixels, frame shape {frame_shape} wants {n0 * n1}")
    return np.ascontiguousarray(mat.transpose(2, 1, 0).reshape(t, n0, n1, c))


def transport_to_matrix(transport):
    transport = np.asarray(transport)
    if transport.ndim != 5:
        raise TensorError(f"expected transport (I, J, i, j, c), got {transport.shape}")
    I, J, i, j, c = transport.shape
    return np.ascontiguousarray(transport.reshape(I * J, i * j, c).transpose(2, 0, 1))


def matrix_to_transport(mat, observed_shape, hidden_shape):
    mat = np.asarray(mat)
    c, p, n = mat.shape
    I, J = observed_shape
    i, j = hidden_shape
    if p != I * J or n != i * j:
        raise TensorError(f"matrix {mat.shape} does not match {observed_shape} x {hidden_shape}")
    return np.ascontiguousarray(mat.transpose(1, 2, 0).reshape(I, J, i, j, c))
