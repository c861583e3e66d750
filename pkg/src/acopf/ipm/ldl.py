"""Sparse symmetric-indefinite LDL^T factorization with inertia.

A fill-reducing approximate-minimum-degree order is computed once per
sparsity pattern. Numerical factorization walks that order right-looking,
choosing 1x1 or 2x2 pivots by the Bunch-Kaufman test, so a pivot may be
pulled forward when the diagonal candidate is too small. Inertia is read off
the block-diagonal factor (Sylvester's law of inertia).
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp
from numba.typed import List

__all__ = ["Inertia", "LDLFactor", "amd_order", "ldl_factor", "BK_ALPHA"]

BK_ALPHA = (1.0 + np.sqrt(17.0)) / 8.0


@dataclass(frozen=True)
class Inertia:
    positive: int
    negative: int
    zero: int

    def __iter__(self):
        return iter((self.positive, self.negative, self.zero))


def amd_order(pattern: sp.spmatrix, pairs: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Approximate-minimum-degree permutation of a symmetric pattern.

    ``pairs = (a, b)`` glues node ``a[t]`` to node ``b[t]``: the pair is
    ordered as one supernode and emitted as ``a[t], b[t]`` consecutively.
    This lets the ordering anticipate 2x2 pivots on zero-diagonal entries.
    """
    from cvxopt import amd, spmatrix

    coo = sp.coo_matrix(pattern)
    n = pattern.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    node = np.arange(n)
    if pairs is not None and len(pairs[0]):
        a, b = (np.asarray(p, dtype=np.int64) for p in pairs)
        node[b] = a
    _, node = np.unique(node, return_inverse=True)
    nn = int(node.max()) + 1
    r, c = node[coo.row], node[coo.col]
    keep = r >= c
    rows = np.concatenate([r[keep], np.arange(nn)])
    cols = np.concatenate([c[keep], np.arange(nn)])
    mat = spmatrix(1.0, rows.tolist(), cols.tolist(), (nn, nn))
    order = np.array(list(amd.order(mat)), dtype=np.int64)
    rank = np.empty(nn, dtype=np.int64)
    rank[order] = np.arange(nn)
    first = np.ones(n, dtype=np.int64)
    if pairs is not None and len(pairs[0]):
        first[b] = 2
    return np.lexsort((first, rank[node])).astype(np.int64)


# ---------------------------------------------------------------------------
# numba kernels

@nb.njit(cache=True)
def _grow_f(a, need):
    if need <= a.shape[0]:
        return a
    out = np.empty(max(need, 2 * a.shape[0]), a.dtype)
    out[:a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _row_max(k, rc, rv, rlen, elim):
    """Compact row k (drop eliminated columns) and return (max |a_kj|, argmax)."""
    c = rc[k]
    v = rv[k]
    keep = 0
    best = 0.0
    arg = -1
    for p in range(rlen[k]):
        j = c[p]
        if elim[j]:
            continue
        c[keep] = j
        v[keep] = v[p]
        a = abs(v[p])
        if a > best:
            best = a
            arg = j
        keep += 1
    rlen[k] = keep
    return best, arg


@nb.njit(cache=True)
def _sparsest_candidate(k, gk, rel, rc, rv, rlen):
    """Among entries of (compacted) row k with |a_kj| >= rel*gk pick the shortest row."""
    c = rc[k]
    v = rv[k]
    best = -1
    best_len = 1 << 62
    for p in range(rlen[k]):
        if abs(v[p]) >= rel * gk:
            j = c[p]
            if rlen[j] < best_len:
                best_len = rlen[j]
                best = j
    return best


@nb.njit(cache=True)
def _update_row(i, li1, li2, cnt, nbr, u, w, two, rc, rv, rlen, elim, mark, diag, self_pos):
    """a_ij -= li1*u_j + li2*w_j for all gathered neighbours j."""
    c = rc[i]
    v = rv[i]
    keep = 0
    for p in range(rlen[i]):
        j = c[p]
        if elim[j]:
            continue
        c[keep] = j
        v[keep] = v[p]
        mark[j] = keep
        keep += 1
    length = keep
    for q in range(cnt):
        j = nbr[q]
        if q == self_pos:
            if two:
                diag[i] -= li1 * u[q] + li2 * w[q]
            else:
                diag[i] -= li1 * u[q]
            continue
        if two:
            delta = -(li1 * u[q] + li2 * w[q])
        else:
            delta = -li1 * u[q]
        pos = mark[j]
        if pos >= 0:
            v[pos] += delta
        else:
            if length >= c.shape[0]:
                newcap = 2 * c.shape[0] + 4
                c2 = np.empty(newcap, np.int64)
                v2 = np.empty(newcap, np.float64)
                c2[:length] = c[:length]
                v2[:length] = v[:length]
                rc[i] = c2
                rv[i] = v2
                c = c2
                v = v2
            c[length] = j
            v[length] = delta
            mark[j] = length
            length += 1
    for p in range(length):
        mark[c[p]] = -1
    rlen[i] = length


@nb.njit(cache=True)
def _factor(n, indptr, indices, data, alpha, zero_tol, rel, partner, max_pos, max_neg, max_zero):
    diag = np.zeros(n)
    rc = List()
    rv = List()
    rlen = np.zeros(n, np.int64)
    for i in range(n):
        cnt = 0
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] != i:
                cnt += 1
        c = np.empty(max(2 * cnt, 4), np.int64)
        v = np.empty(max(2 * cnt, 4), np.float64)
        k = 0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j == i:
                diag[i] += data[p]
            else:
                c[k] = j
                v[k] = data[p]
                k += 1
        rc.append(c)
        rv.append(v)
        rlen[i] = k

    elim = np.zeros(n, np.bool_)
    mark = -np.ones(n, np.int64)
    nbr = np.empty(n, np.int64)
    u = np.empty(n)
    w = np.empty(n)

    piv_a = np.empty(n, np.int64)
    piv_b = np.empty(n, np.int64)
    d11 = np.empty(n)
    d21 = np.empty(n)
    d22 = np.empty(n)
    lptr = np.zeros(n + 1, np.int64)
    lidx = np.empty(16 * n + 16, np.int64)
    l1 = np.empty(16 * n + 16)
    l2 = np.empty(16 * n + 16)
    npiv = 0
    nnz = 0
    npos = 0
    nneg = 0
    nzero = 0

    aborted = False
    k = 0
    while k < n:
        if npos > max_pos or nneg > max_neg or nzero > max_zero:
            aborted = True
            break
        if elim[k]:
            k += 1
            continue
        gk, r = _row_max(k, rc, rv, rlen, elim)
        if rel < 1.0 and gk > 0.0:
            r = -1
            pk = partner[k]
            if pk >= 0 and not elim[pk]:
                for q in range(rlen[k]):
                    if rc[k][q] == pk and abs(rv[k][q]) >= rel * gk:
                        r = pk
            if r < 0:
                r = _sparsest_candidate(k, gk, rel, rc, rv, rlen)
        akk = diag[k]
        two = False
        p1 = k
        if gk == 0.0 or abs(akk) >= alpha * gk:
            p1 = k
        else:
            gr, _ = _row_max(r, rc, rv, rlen, elim)
            if abs(akk) * gr >= alpha * gk * gk:
                p1 = k
            elif abs(diag[r]) >= alpha * gr:
                p1 = r
            else:
                two = True

        if not two:
            p = p1
            elim[p] = True
            # gather
            cnt = 0
            c = rc[p]
            v = rv[p]
            for q in range(rlen[p]):
                j = c[q]
                if not elim[j]:
                    nbr[cnt] = j
                    u[cnt] = v[q]
                    cnt += 1
            d = diag[p]
            piv_a[npiv] = p
            piv_b[npiv] = -1
            d21[npiv] = 0.0
            d22[npiv] = 0.0
            if abs(d) <= zero_tol:
                nzero += 1
                d11[npiv] = 0.0
                lptr[npiv + 1] = nnz
                npiv += 1
                if p == k:
                    k += 1
                continue
            d11[npiv] = d
            if d > 0:
                npos += 1
            else:
                nneg += 1
            lidx = _grow_f(lidx, nnz + cnt)
            l1 = _grow_f(l1, nnz + cnt)
            l2 = _grow_f(l2, nnz + cnt)
            for q in range(cnt):
                lidx[nnz + q] = nbr[q]
                l1[nnz + q] = u[q] / d
                l2[nnz + q] = 0.0
            for q in range(cnt):
                i = nbr[q]
                _update_row(i, l1[nnz + q], 0.0, cnt, nbr, u, w, False,
                            rc, rv, rlen, elim, mark, diag, q)
            nnz += cnt
            lptr[npiv + 1] = nnz
            npiv += 1
            if p == k:
                k += 1
            continue

        # 2x2 pivot on (k, r)
        p = k
        s = r
        elim[p] = True
        elim[s] = True
        cnt = 0
        apq = 0.0
        c = rc[p]
        v = rv[p]
        for q in range(rlen[p]):
            j = c[q]
            if j == s:
                apq += v[q]
            elif not elim[j]:
                nbr[cnt] = j
                u[cnt] = v[q]
                w[cnt] = 0.0
                mark[j] = cnt
                cnt += 1
        c = rc[s]
        v = rv[s]
        for q in range(rlen[s]):
            j = c[q]
            if j == p or elim[j]:
                continue
            pos = mark[j]
            if pos >= 0:
                w[pos] += v[q]
            else:
                nbr[cnt] = j
                u[cnt] = 0.0
                w[cnt] = v[q]
                mark[j] = cnt
                cnt += 1
        for q in range(cnt):
            mark[nbr[q]] = -1
        a = diag[p]
        b = apq
        e = diag[s]
        det = a * e - b * b
        piv_a[npiv] = p
        piv_b[npiv] = s
        d11[npiv] = a
        d21[npiv] = b
        d22[npiv] = e
        if det < 0:
            npos += 1
            nneg += 1
        elif det > 0:
            if a + e > 0:
                npos += 2
            else:
                nneg += 2
        if abs(det) <= zero_tol * zero_tol or det == 0.0:
            nzero += 1
            lptr[npiv + 1] = nnz
            npiv += 1
            k += 1
            continue
        i00 = e / det
        i01 = -b / det
        i11 = a / det
        lidx = _grow_f(lidx, nnz + cnt)
        l1 = _grow_f(l1, nnz + cnt)
        l2 = _grow_f(l2, nnz + cnt)
        for q in range(cnt):
            lidx[nnz + q] = nbr[q]
            l1[nnz + q] = u[q] * i00 + w[q] * i01
            l2[nnz + q] = u[q] * i01 + w[q] * i11
        for q in range(cnt):
            i = nbr[q]
            _update_row(i, l1[nnz + q], l2[nnz + q], cnt, nbr, u, w, True,
                        rc, rv, rlen, elim, mark, diag, q)
        nnz += cnt
        lptr[npiv + 1] = nnz
        npiv += 1
        k += 1

    return (piv_a[:npiv].copy(), piv_b[:npiv].copy(), d11[:npiv].copy(), d21[:npiv].copy(),
            d22[:npiv].copy(), lptr[:npiv + 1].copy(), lidx[:nnz].copy(), l1[:nnz].copy(),
            l2[:nnz].copy(), npos, nneg, nzero, aborted)


@nb.njit(cache=True)
def _solve(piv_a, piv_b, d11, d21, d22, lptr, lidx, l1, l2, rhs):
    x = rhs.copy()
    npiv = piv_a.shape[0]
    for t in range(npiv):
        p = piv_a[t]
        q = piv_b[t]
        xp = x[p]
        if q < 0:
            for s in range(lptr[t], lptr[t + 1]):
                x[lidx[s]] -= l1[s] * xp
        else:
            xq = x[q]
            for s in range(lptr[t], lptr[t + 1]):
                x[lidx[s]] -= l1[s] * xp + l2[s] * xq
    for t in range(npiv):
        p = piv_a[t]
        q = piv_b[t]
        if q < 0:
            if d11[t] != 0.0:
                x[p] = x[p] / d11[t]
        else:
            a = d11[t]
            b = d21[t]
            e = d22[t]
            det = a * e - b * b
            if det != 0.0:
                xp = x[p]
                xq = x[q]
                x[p] = (e * xp - b * xq) / det
                x[q] = (a * xq - b * xp) / det
    for t in range(npiv - 1, -1, -1):
        p = piv_a[t]
        q = piv_b[t]
        acc = 0.0
        if q < 0:
            for s in range(lptr[t], lptr[t + 1]):
                acc += l1[s] * x[lidx[s]]
            x[p] -= acc
        else:
            acc2 = 0.0
            for s in range(lptr[t], lptr[t + 1]):
                xi = x[lidx[s]]
                acc += l1[s] * xi
                acc2 += l2[s] * xi
            x[p] -= acc
            x[q] -= acc2
    return x


# ---------------------------------------------------------------------------

class LDLFactor:
    """``P A P^T = L D L^T`` for a symmetric matrix given in full CSR form.

    When a diagonal pivot is rejected, the partner row for the 2x2 test is the
    shortest remaining row whose coupling is at least ``partner_threshold``
    times the largest one, which keeps pivots close to the fill-reducing order.
    ``partner_threshold=1`` is the textbook Bunch-Kaufman choice. ``partner``
    (original indexing, -1 for none) names a preferred 2x2 partner per row,
    used whenever its coupling passes the same threshold.

    With ``expected_inertia`` the factorization stops as soon as one of the
    counts exceeds its expected value; :attr:`complete` is then false and
    :attr:`inertia` holds the counts reached so far.
    """

    def __init__(self, matrix: sp.csr_matrix, perm: np.ndarray | None = None,
                 alpha: float = BK_ALPHA, zero_tol: float | None = None,
                 partner_threshold: float = 0.5, partner: np.ndarray | None = None,
                 expected_inertia: tuple[int, int, int] | None = None):
        matrix = sp.csr_matrix(matrix)
        n = matrix.shape[0]
        if perm is None:
            perm = amd_order(matrix)
        self.perm = np.asarray(perm, dtype=np.int64)
        permuted = matrix[self.perm][:, self.perm].tocsr()
        permuted.sum_duplicates()
        self._matrix = permuted
        self._norm = float(np.max(np.asarray(abs(permuted).sum(axis=1)).ravel(), initial=0.0))
        self.last_residual = 0.0
        if zero_tol is None:
            scale = np.max(np.abs(permuted.data)) if permuted.nnz else 1.0
            zero_tol = 1e-14 * max(scale, 1.0)
        part = np.full(n, -1, dtype=np.int64)
        if partner is not None:
            inv = np.empty(n, dtype=np.int64)
            inv[self.perm] = np.arange(n)
            src = np.asarray(partner, dtype=np.int64)
            ok = src >= 0
            part[inv[ok]] = inv[src[ok]]
        limits = (n, n, n) if expected_inertia is None else tuple(int(v) for v in expected_inertia)
        parts = _factor(n, permuted.indptr.astype(np.int64), permuted.indices.astype(np.int64),
                        permuted.data.astype(np.float64), float(alpha), float(zero_tol),
                        float(partner_threshold), part, *limits)
        self._parts = parts[:9]
        self.inertia = Inertia(int(parts[9]), int(parts[10]), int(parts[11]))
        self.complete = not parts[12]
        self.n = n
        self.fill = int(parts[6].shape[0])

    def pivot_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Original indices of the rows paired in 2x2 pivots."""
        a, b = self._parts[0], self._parts[1]
        two = b >= 0
        return self.perm[a[two]], self.perm[b[two]]

    @property
    def singular(self) -> bool:
        return self.inertia.zero > 0 or not self.complete

    def solve(self, rhs: np.ndarray, refine: int = 3, rtol: float = 1e-14) -> np.ndarray:
        """Solve ``A x = rhs`` with up to ``refine`` steps of iterative refinement.

        The relative residual ``|A x - rhs| / (|A| |x| + |rhs|)`` (max norms)
        of the returned solution is stored in :attr:`last_residual`.
        """
        b = np.asarray(rhs, dtype=float)[self.perm]
        x = _solve(*self._parts, b)
        bnorm = np.max(np.abs(b), initial=0.0)
        r = b - self._matrix @ x
        for _ in range(refine):
            if np.max(np.abs(r), initial=0.0) <= rtol * max(bnorm, 1.0):
                break
            x = x + _solve(*self._parts, r)
            r = b - self._matrix @ x
        scale = self._norm * np.max(np.abs(x), initial=0.0) + bnorm
        self.last_residual = float(np.max(np.abs(r), initial=0.0) / scale) if scale > 0 else 0.0
        out = np.empty_like(x)
        out[self.perm] = x
        return out


def ldl_factor(matrix, perm=None) -> LDLFactor:
    return LDLFactor(sp.csr_matrix(matrix), perm)
