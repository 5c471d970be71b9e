"""Hard-output MIMO detectors.

All detectors take a batch of channels ``H`` (..., nr, nt), received vectors
``y`` (..., nr) and the candidate symbol alphabet ``points`` (already scaled
by any power factor), and return per-stream point indices (..., nt).
"""

import numpy as np

from .errors import DomainError, SingularChannelError
from .modulation import slice_indices

ML_MAX_CANDIDATES = 1_000_000


def _prep(H, y):
    H = np.asarray(H, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if H.ndim < 2 or y.shape[-1] != H.shape[-2]:
        raise DomainError("y length must equal the number of receive antennas")
    batch = np.broadcast_shapes(H.shape[:-2], y.shape[:-1])
    H = np.broadcast_to(H, batch + H.shape[-2:])
    y = np.broadcast_to(y, batch + y.shape[-1:])
    return H, y


def check_full_column_rank(H):
    """Raise SingularChannelError unless every matrix in the batch has full column rank."""
    H = np.asarray(H)
    nr, nt = H.shape[-2:]
    if nt > nr:
        raise SingularChannelError("more streams than receive antennas")
    sv = np.linalg.svd(H, compute_uv=False)
    tol = sv[..., :1] * max(nr, nt) * np.finfo(float).eps
    if np.any(sv[..., -1:] <= tol):
        raise SingularChannelError("channel matrix is rank deficient")


def residual_metric(H, y, cand_points):
    """||y - H s||^2 for candidate vectors ``cand_points`` (..., C, nt)."""
    r = y[..., None, :] - np.einsum("...ij,...cj->...ci", H, cand_points)
    return (r.real**2 + r.imag**2).sum(axis=-1)


def _lex_key(idx, k):
    nt = idx.shape[-1]
    w = k ** np.arange(nt - 1, -1, -1, dtype=np.int64)
    return (idx.astype(np.int64) * w).sum(axis=-1)


def _pick(metric, idx, k):
    """Minimum metric, ties to the lexicographically smallest index vector."""
    best = metric.min(axis=-1, keepdims=True)
    key = np.where(metric == best, _lex_key(idx, k), np.iinfo(np.int64).max)
    j = key.argmin(axis=-1)
    return np.take_along_axis(idx, j[..., None, None], axis=-2)[..., 0, :]


def detect_ml(H, y, points, num_streams=None):
    """Exhaustive maximum-likelihood search over points^num_streams."""
    H, y = _prep(H, y)
    points = np.asarray(points)
    nt = H.shape[-1] if num_streams is None else num_streams
    if nt != H.shape[-1]:
        raise DomainError("num_streams must match the channel width")
    k = points.size
    if k**nt > ML_MAX_CANDIDATES:
        raise DomainError(f"ML search space {k}^{nt} exceeds {ML_MAX_CANDIDATES}")
    idx = np.indices((k,) * nt).reshape(nt, -1).T            # lexicographic order
    cand = np.broadcast_to(idx, H.shape[:-2] + idx.shape)
    metric = residual_metric(H, y, points[cand])
    return _pick(metric, cand, k)


def detect_zf(H, y, points):
    """Zero-forcing: pseudo-inverse equalisation then per-stream slicing."""
    H, y = _prep(H, y)
    check_full_column_rank(H)
    x = np.einsum("...ij,...j->...i", np.linalg.pinv(H), y)
    return slice_indices(x, np.asarray(points))


def detect_nc(H, y, points):
    """Ordered nulling and cancellation (V-BLAST ordering).

    At each step the remaining stream with the smallest nulling-vector norm,
    i.e. the highest post-nulling SNR, is detected and cancelled.
    """
    H, y = _prep(H, y)
    check_full_column_rank(H)
    points = np.asarray(points)
    nt = H.shape[-1]
    active = np.ones(H.shape[:-2] + (nt,), dtype=bool)
    out = np.zeros(H.shape[:-2] + (nt,), dtype=np.int64)
    r = y.copy()
    for _ in range(nt):
        Ha = H * active[..., None, :]
        G = np.linalg.pinv(Ha)                                 # rows of removed streams are 0
        norms = np.where(active, (np.abs(G) ** 2).sum(axis=-1), np.inf)
        sel = norms.argmin(axis=-1)
        g = np.take_along_axis(G, sel[..., None, None], axis=-2)[..., 0, :]
        x = (g * r).sum(axis=-1)
        s = slice_indices(x, points)
        np.put_along_axis(out, sel[..., None], s[..., None], axis=-1)
        h = np.take_along_axis(H, sel[..., None, None], axis=-1)[..., 0]
        r = r - h * points[s][..., None]
        np.put_along_axis(active, sel[..., None], False, axis=-1)
    return out


def lord_candidates(H, y, points):
    """LORD candidate list: every layer as root, every root symbol, QR back-substitution.

    Returns indices shaped (..., nt * K, nt) in original stream order.
    """
    H, y = _prep(H, y)
    points = np.asarray(points)
    nt = H.shape[-1]
    k = points.size
    batch = H.shape[:-2]
    cands = []
    for root in range(nt):
        perm = [i for i in range(nt) if i != root] + [root]
        Q, R = np.linalg.qr(H[..., perm])
        z = np.einsum("...ji,...j->...i", Q.conj(), y)
        s = np.zeros(batch + (k, nt), dtype=np.int64)
        s[..., nt - 1] = np.arange(k)
        for i in range(nt - 2, -1, -1):
            acc = z[..., i, None] - np.einsum(
                "...j,...cj->...c", R[..., i, i + 1:], points[s[..., i + 1:]])
            x = acc / R[..., i, i, None]
            s[..., i] = slice_indices(x, points)
        back = np.empty_like(s)
        back[..., perm] = s
        cands.append(back)
    return np.concatenate(cands, axis=-2)


def detect_lord(H, y, points):
    """Layered orthogonal lattice detector, hard output."""
    H, y = _prep(H, y)
    check_full_column_rank(H)
    points = np.asarray(points)
    idx = lord_candidates(H, y, points)
    metric = residual_metric(H, y, points[idx])
    return _pick(metric, idx, points.size)


DETECTORS = {"ml": detect_ml, "zf": detect_zf, "nc": detect_nc, "lord": detect_lord}


def get_detector(name):
    try:
        return DETECTORS[name.lower()]
    except KeyError:
        raise DomainError(f"unknown detector {name!r}") from None
