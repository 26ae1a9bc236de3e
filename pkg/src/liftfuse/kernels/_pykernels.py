"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature.
Floating point accumulation order is matched so both backends produce
bit-identical results.
"""

import numpy as np

BACKEND = "python"


def neighbor_table(in_keys, out_coords, grid_shape, ksize, stride):
    """Rulebook for a sparse convolution.

    Args:
        in_keys: sorted int64 linear keys of the input voxels, ``(N,)``.
        out_coords: int64 ``(M, 4)`` array of ``(batch, i, j, k)`` output coords.
        grid_shape: input grid dims ``(H, W, D)``.
        ksize: odd kernel edge length.
        stride: output-to-input index multiplier.

    Returns:
        int64 ``(M, ksize**3)`` table of input row indices, ``-1`` where the
        neighbor is empty or out of bounds. Offsets are enumerated in
        lexicographic ``(dx, dy, dz)`` order.
    """
    H, W, D = (int(s) for s in grid_shape)
    r = ksize // 2
    M = out_coords.shape[0]
    K = ksize ** 3
    table = np.full((M, K), -1, dtype=np.int64)
    if M == 0 or in_keys.shape[0] == 0:
        return table
    base = out_coords[:, 1:] * stride
    b = out_coords[:, 0]
    n = in_keys.shape[0]
    col = 0
    for dx in range(-r, r + 1):
        for dy in range(-r, r + 1):
            for dz in range(-r, r + 1):
                i = base[:, 0] + dx
                j = base[:, 1] + dy
                k = base[:, 2] + dz
                inside = (i >= 0) & (i < H) & (j >= 0) & (j < W) & (k >= 0) & (k < D)
                key = ((b * H + i) * W + j) * D + k
                pos = np.searchsorted(in_keys, key)
                pos_c = np.minimum(pos, n - 1)
                hit = inside & (in_keys[pos_c] == key)
                table[hit, col] = pos_c[hit]
                col += 1
    return table


def gather_rows(feats, table):
    """``(M, K*C)`` matrix of neighbor features; empty neighbors are zero."""
    N, C = feats.shape
    padded = np.zeros((N + 1, C), dtype=np.float64)
    padded[:N] = feats
    # -1 indexes the trailing zero row
    return padded[table].reshape(table.shape[0], table.shape[1] * C)


def scatter_rows(cols, table, n_rows):
    """Adjoint of :func:`gather_rows`; sums contributions per input row.

    Contributions are accumulated offset by offset, so each input row receives
    its terms in increasing offset order.
    """
    M, K = table.shape
    C = cols.shape[1] // K if K else 0
    out = np.zeros((n_rows + 1, C), dtype=np.float64)
    for k in range(K):
        idx = table[:, k]
        # valid indices are unique per offset; -1 collisions land in the dummy row
        out[idx] += cols[:, k * C:(k + 1) * C]
    return out[:n_rows]


def segment_max(feats, seg, n_seg):
    """Per-channel max over rows sharing a segment id.

    Returns ``(values (S, C), argrow (S, C))``. Ties resolve to the lowest row.
    Segments without rows are filled with zeros and ``-1``.
    """
    N, C = feats.shape
    out = np.full((n_seg, C), -np.inf)
    np.maximum.at(out, seg, feats)
    is_max = feats == out[seg]
    flat = seg[:, None] * C + np.arange(C)[None, :]
    rows = np.broadcast_to(np.arange(N, dtype=np.int64)[:, None], (N, C))
    arg = np.full(n_seg * C, N, dtype=np.int64)
    np.minimum.at(arg, flat[is_max], rows[is_max])
    arg = arg.reshape(n_seg, C)
    empty = arg == N
    arg[empty] = -1
    out[empty] = 0.0
    return out, arg


def zbuffer(pix, depth, n_pix):
    """Index of the nearest sample per pixel (``-1`` if none); ties go to the lowest index."""
    P = pix.shape[0]
    winner = np.full(n_pix, -1, dtype=np.int64)
    if P == 0:
        return winner
    order = np.lexsort((np.arange(P), depth, pix))
    p_sorted = pix[order]
    first = np.ones(P, dtype=bool)
    first[1:] = p_sorted[1:] != p_sorted[:-1]
    winner[p_sorted[first]] = order[first]
    return winner
