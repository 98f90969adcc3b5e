"""Explicit 7-point heat update on the active voxel set.

Both implementations apply the same per-voxel arithmetic in the same order
(face order x-, x+, y-, y+, z-, z+) so they agree bit for bit.
"""
import numpy as np

from .._accel import njit


@njit(cache=True)
def diffuse_numba(T, active, pinned, n_sub, r, conv, t_amb, substrate_on, t_sub):
    nx, ny, nz = T.shape
    cur = T.copy()
    nxt = T.copy()
    for _ in range(n_sub):
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if not active[i, j, k] or pinned[i, j, k]:
                        nxt[i, j, k] = cur[i, j, k]
                        continue
                    tc = cur[i, j, k]
                    acc = 0.0
                    nexp = 0
                    if i > 0 and active[i - 1, j, k]:
                        acc += cur[i - 1, j, k] - tc
                    else:
                        nexp += 1
                    if i < nx - 1 and active[i + 1, j, k]:
                        acc += cur[i + 1, j, k] - tc
                    else:
                        nexp += 1
                    if j > 0 and active[i, j - 1, k]:
                        acc += cur[i, j - 1, k] - tc
                    else:
                        nexp += 1
                    if j < ny - 1 and active[i, j + 1, k]:
                        acc += cur[i, j + 1, k] - tc
                    else:
                        nexp += 1
                    if k > 0:
                        if active[i, j, k - 1]:
                            acc += cur[i, j, k - 1] - tc
                        else:
                            nexp += 1
                    elif substrate_on:
                        acc += t_sub - tc
                    if k < nz - 1 and active[i, j, k + 1]:
                        acc += cur[i, j, k + 1] - tc
                    else:
                        nexp += 1
                    nxt[i, j, k] = tc + r * acc - conv * nexp * (tc - t_amb)
        cur, nxt = nxt, cur
    return cur


def _shifted(a, axis, step, fill):
    """``out[v] = a[v + step along axis]``, ``fill`` outside the grid."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(None, -step)
    else:
        src[axis], dst[axis] = slice(None, step), slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


_FACES = ((0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1))


def diffuse_numpy(T, active, pinned, n_sub, r, conv, t_amb, substrate_on, t_sub):
    update = active & ~pinned
    nbr_active = [_shifted(active, ax, st, False) for ax, st in _FACES]
    nexp = np.zeros(T.shape, dtype=np.int64)
    for f, (ax, st) in enumerate(_FACES):
        m = ~nbr_active[f]
        if (ax, st) == (2, -1):
            m[:, :, 0] = False  # bottom face sits on the substrate, never exposed
        nexp += m
    bottom = np.zeros(T.shape, dtype=bool)
    if substrate_on:
        bottom[:, :, 0] = True
    cur = T.copy()
    for _ in range(n_sub):
        acc = np.zeros(T.shape)
        for f, (ax, st) in enumerate(_FACES):
            nb = _shifted(cur, ax, st, np.nan)
            if (ax, st) == (2, -1):
                nb = np.where(bottom, t_sub, nb)
                present = nbr_active[f] | bottom
            else:
                present = nbr_active[f]
            with np.errstate(invalid="ignore"):
                acc += np.where(present, nb - cur, 0.0)
        with np.errstate(invalid="ignore"):
            new = cur + r * acc - conv * nexp * (cur - t_amb)
        cur = np.where(update, new, cur)
    return cur
