# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Line-for-line mirror of ``_pure.py`` (same enumeration order, same sampling
walk, same parent-count table); see that module for commentary.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log

cnp.import_array()

BACKEND_NAME = "cython"


cdef inline int _parent_count(const signed char* edge_size,
                              const signed char* edge_nvis,
                              int ne, bint has_sing) nogil:
    cdef int q = 0
    cdef int e, sz, nv
    if not has_sing:
        for e in range(ne):
            sz = edge_size[e]
            nv = edge_nvis[e]
            if sz == 2:
                q += 2 if nv == 2 else 1
            else:
                q += 6 if nv == 3 else 2
    else:
        for e in range(ne):
            sz = edge_size[e]
            nv = edge_nvis[e]
            if sz == 1:
                q += 1
            elif sz == 2:
                q += 2 if nv == 2 else 0
            else:
                q += 3 if nv == 3 else 0
    return q


def propagate(const signed char[::1] part,
              const double[:, ::1] lp_pair,
              const double[:, :, ::1] lp_tri,
              short[:, ::1] edge_of,
              unsigned char[:, ::1] visited,
              short[:, :, ::1] edge_nodes,
              signed char[:, ::1] edge_size,
              signed char[:, ::1] edge_nvis,
              short[::1] n_edges,
              short[::1] n_sing,
              const double[::1] u_node,
              const double[::1] u_dec,
              int fixed_node,
              bint correct,
              double[::1] log_inc):
    cdef Py_ssize_t N = edge_of.shape[0]
    cdef Py_ssize_t n = edge_of.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ck_arr = np.empty(2 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ca_arr = np.empty(2 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lp_arr = np.empty(2 * n, dtype=np.float64)
    cdef int* ck = <int*> cnp.PyArray_DATA(ck_arr)
    cdef int* ca = <int*> cnp.PyArray_DATA(ca_arr)
    cdef double* lp = <double*> cnp.PyArray_DATA(lp_arr)
    cdef Py_ssize_t i
    cdef int u, v, k, e, ne, nc, j, pick, q, n_unvis, a, b, pv, e_v
    cdef double m, total, target, acc
    cdef int status = 0

    with nogil:
        for i in range(N):
            if fixed_node >= 0:
                v = fixed_node
            else:
                n_unvis = 0
                for u in range(n):
                    if not visited[i, u]:
                        n_unvis += 1
                k = <int>(u_node[i] * n_unvis)
                if k >= n_unvis:
                    k = n_unvis - 1
                v = -1
                for u in range(n):
                    if not visited[i, u]:
                        if k == 0:
                            v = u
                            break
                        k -= 1
            e_v = edge_of[i, v]
            if e_v >= 0:
                edge_nvis[i, e_v] += 1
                visited[i, v] = 1
            else:
                pv = part[v]
                nc = 0
                for u in range(n):
                    if u != v and edge_of[i, u] < 0 and part[u] != pv:
                        ck[nc] = 0
                        ca[nc] = u
                        lp[nc] = lp_pair[v, u]
                        nc += 1
                ne = n_edges[i]
                for e in range(ne):
                    if edge_size[i, e] == 2:
                        a = edge_nodes[i, e, 0]
                        b = edge_nodes[i, e, 1]
                        if part[a] != pv and part[b] != pv:
                            ck[nc] = 1
                            ca[nc] = e
                            lp[nc] = lp_tri[v, a, b]
                            nc += 1
                if nc == 0:
                    e = n_edges[i]
                    edge_nodes[i, e, 0] = v
                    edge_size[i, e] = 1
                    edge_nvis[i, e] = 1
                    edge_of[i, v] = e
                    n_edges[i] = e + 1
                    n_sing[i] += 1
                else:
                    m = lp[0]
                    for j in range(1, nc):
                        if lp[j] > m:
                            m = lp[j]
                    total = 0.0
                    for j in range(nc):
                        total += exp(lp[j] - m)
                    target = u_dec[i] * total
                    acc = 0.0
                    pick = nc - 1
                    for j in range(nc):
                        acc += exp(lp[j] - m)
                        if target < acc:
                            pick = j
                            break
                    if ck[pick] == 0:
                        u = ca[pick]
                        e = n_edges[i]
                        edge_nodes[i, e, 0] = v
                        edge_nodes[i, e, 1] = u
                        edge_size[i, e] = 2
                        edge_nvis[i, e] = 1
                        edge_of[i, v] = e
                        edge_of[i, u] = e
                        n_edges[i] = e + 1
                    else:
                        e = ca[pick]
                        edge_nodes[i, e, 2] = v
                        edge_size[i, e] = 3
                        edge_nvis[i, e] += 1
                        edge_of[i, v] = e
                visited[i, v] = 1
            q = _parent_count(&edge_size[i, 0], &edge_nvis[i, 0],
                              n_edges[i], n_sing[i] > 0)
            if q <= 0:
                status = <int>(i + 1)
                break
            log_inc[i] = -log(<double>q) if correct else 0.0
    return status


def propagate_constrained(const signed char[::1] part,
                          const double[:, ::1] lp_pair,
                          const double[:, :, ::1] lp_tri,
                          const short[::1] true_edge,
                          const short[::1] true_size,
                          short[:, ::1] edge_of,
                          unsigned char[:, ::1] visited,
                          short[:, :, ::1] edge_nodes,
                          signed char[:, ::1] edge_size,
                          signed char[:, ::1] edge_nvis,
                          short[::1] n_edges,
                          short[::1] n_sing,
                          const double[::1] u_node,
                          const double[::1] u_dec,
                          short[:, ::1] path_v,
                          short[:, ::1] path_d1,
                          short[:, ::1] path_d2,
                          int step,
                          double[::1] log_inc):
    cdef Py_ssize_t N = edge_of.shape[0]
    cdef Py_ssize_t n = edge_of.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ck_arr = np.empty(2 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ca_arr = np.empty(2 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cc_arr = np.empty(2 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] am_arr = np.empty(n, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lp_arr = np.empty(2 * n, dtype=np.float64)
    cdef int* ck = <int*> cnp.PyArray_DATA(ck_arr)
    cdef int* ca = <int*> cnp.PyArray_DATA(ca_arr)
    cdef int* cc = <int*> cnp.PyArray_DATA(cc_arr)
    cdef int* amem = <int*> cnp.PyArray_DATA(am_arr)
    cdef double* lp = <double*> cnp.PyArray_DATA(lp_arr)
    cdef Py_ssize_t i
    cdef int u, v, w, k, e, nc, j, pick, n_unvis, na, a, b, pv, pu, tv, e_v
    cdef bint has_cand
    cdef double m, total, cons, target, acc, base
    cdef int status = 0
    cdef double NEG_INF = -np.inf

    with nogil:
        for i in range(N):
            n_unvis = 0
            na = 0
            for u in range(n):
                if visited[i, u]:
                    continue
                n_unvis += 1
                if edge_of[i, u] >= 0:
                    amem[na] = u
                    na += 1
                elif true_size[true_edge[u]] >= 2:
                    amem[na] = u
                    na += 1
                else:
                    pu = part[u]
                    has_cand = False
                    for w in range(n):
                        if w != u and edge_of[i, w] < 0 and part[w] != pu:
                            has_cand = True
                            break
                    if not has_cand:
                        for e in range(n_edges[i]):
                            if edge_size[i, e] == 2:
                                a = edge_nodes[i, e, 0]
                                b = edge_nodes[i, e, 1]
                                if part[a] != pu and part[b] != pu:
                                    has_cand = True
                                    break
                    if not has_cand:
                        amem[na] = u
                        na += 1
            if na == 0:
                status = <int>(i + 1)
                break
            k = <int>(u_node[i] * na)
            if k >= na:
                k = na - 1
            v = amem[k]
            base = log(<double>na) - log(<double>n_unvis)
            e_v = edge_of[i, v]
            if e_v >= 0:
                edge_nvis[i, e_v] += 1
                visited[i, v] = 1
                path_v[i, step] = v
                path_d1[i, step] = -1
                path_d2[i, step] = -1
                log_inc[i] = base
                continue
            pv = part[v]
            tv = true_edge[v]
            nc = 0
            for u in range(n):
                if u != v and edge_of[i, u] < 0 and part[u] != pv:
                    ck[nc] = 0
                    ca[nc] = u
                    cc[nc] = 1 if true_edge[u] == tv else 0
                    lp[nc] = lp_pair[v, u]
                    nc += 1
            for e in range(n_edges[i]):
                if edge_size[i, e] == 2:
                    a = edge_nodes[i, e, 0]
                    b = edge_nodes[i, e, 1]
                    if part[a] != pv and part[b] != pv:
                        ck[nc] = 1
                        ca[nc] = e
                        cc[nc] = 1 if true_edge[a] == tv else 0
                        lp[nc] = lp_tri[v, a, b]
                        nc += 1
            if nc == 0:
                e = n_edges[i]
                edge_nodes[i, e, 0] = v
                edge_size[i, e] = 1
                edge_nvis[i, e] = 1
                edge_of[i, v] = e
                n_edges[i] = e + 1
                n_sing[i] += 1
                visited[i, v] = 1
                path_v[i, step] = v
                path_d1[i, step] = -1
                path_d2[i, step] = -1
                log_inc[i] = base
                continue
            m = lp[0]
            for j in range(1, nc):
                if lp[j] > m:
                    m = lp[j]
            total = 0.0
            cons = 0.0
            for j in range(nc):
                acc = exp(lp[j] - m)
                total += acc
                if cc[j]:
                    cons += acc
            if cons <= 0.0:
                log_inc[i] = NEG_INF
                pick = 0
            else:
                target = u_dec[i] * cons
                acc = 0.0
                pick = -1
                for j in range(nc):
                    if cc[j]:
                        acc += exp(lp[j] - m)
                        pick = j
                        if target < acc:
                            break
                log_inc[i] = base + log(cons) - log(total)
            if ck[pick] == 0:
                u = ca[pick]
                e = n_edges[i]
                edge_nodes[i, e, 0] = v
                edge_nodes[i, e, 1] = u
                edge_size[i, e] = 2
                edge_nvis[i, e] = 1
                edge_of[i, v] = e
                edge_of[i, u] = e
                n_edges[i] = e + 1
                path_d1[i, step] = u
                path_d2[i, step] = -1
            else:
                e = ca[pick]
                a = edge_nodes[i, e, 0]
                b = edge_nodes[i, e, 1]
                edge_nodes[i, e, 2] = v
                edge_size[i, e] = 3
                edge_nvis[i, e] += 1
                edge_of[i, v] = e
                path_d1[i, step] = a if a < b else b
                path_d2[i, step] = b if a < b else a
            visited[i, v] = 1
            path_v[i, step] = v
    return status


cdef int _replay_path(const signed char[::1] part,
                      const double[:, ::1] dist,
                      const double[::1] area,
                      const unsigned char[::1] wide,
                      const double[::1] shift,
                      const double[::1] scale,
                      const short[::1] pv_row,
                      const short[::1] pd1_row,
                      const short[::1] pd2_row,
                      int* edge_of, int* edge_nodes, int* edge_size,
                      int* ck, int* ca,
                      bint fill, double[:, ::1] rows, long long[::1] step_ptr,
                      int[::1] chosen, int[::1] step_path, int path_id,
                      long long* row_cursor, long long* step_cursor) nogil:
    """Replay one path; count (fill=0) or emit (fill=1) its design rows.

    Returns -1 if a recorded decision cannot be matched, else 0.
    """
    cdef Py_ssize_t n = part.shape[0]
    cdef Py_ssize_t R = pv_row.shape[0]
    cdef int r, v, d1, d2, pv, nc, ne, e, u, a, b, j, pick, kind, idx, lo, hi
    cdef double d, d0, dd1, dd2, dmax, dmin, split
    cdef long long rc = row_cursor[0]
    cdef long long sc = step_cursor[0]
    for u in range(n):
        edge_of[u] = -1
        edge_size[u] = 0
    ne = 0
    for r in range(R):
        v = pv_row[r]
        d1 = pd1_row[r]
        d2 = pd2_row[r]
        if edge_of[v] >= 0:
            continue
        pv = part[v]
        nc = 0
        for u in range(n):
            if u != v and edge_of[u] < 0 and part[u] != pv:
                ck[nc] = 0
                ca[nc] = u
                nc += 1
        for e in range(ne):
            if edge_size[e] == 2:
                a = edge_nodes[3 * e]
                b = edge_nodes[3 * e + 1]
                if part[a] != pv and part[b] != pv:
                    ck[nc] = 1
                    ca[nc] = e
                    nc += 1
        if nc == 0:
            edge_nodes[3 * ne] = v
            edge_size[ne] = 1
            edge_of[v] = ne
            ne += 1
            continue
        pick = -1
        for j in range(nc):
            kind = ck[j]
            idx = ca[j]
            if kind == 0:
                if d2 < 0 and d1 == idx:
                    pick = j
            else:
                a = edge_nodes[3 * idx]
                b = edge_nodes[3 * idx + 1]
                lo = a if a < b else b
                hi = b if a < b else a
                if d1 == lo and d2 == hi:
                    pick = j
        if pick < 0:
            return -1
        if nc >= 2:
            if fill:
                for j in range(nc):
                    kind = ck[j]
                    idx = ca[j]
                    rows[rc + j, 0] = 0.0
                    rows[rc + j, 1] = 0.0
                    rows[rc + j, 2] = 0.0
                    rows[rc + j, 3] = 0.0
                    rows[rc + j, 4] = 0.0
                    rows[rc + j, 5] = 0.0
                    if kind == 0:
                        u = idx
                        d = dist[v, u]
                        if wide[v] and wide[u]:
                            rows[rc + j, 0] = (d - shift[0]) / scale[0]
                        else:
                            rows[rc + j, 1] = (d - shift[1]) / scale[1]
                        rows[rc + j, 2] = (fabs(area[v] - area[u]) - shift[2]) / scale[2]
                    else:
                        a = edge_nodes[3 * idx]
                        b = edge_nodes[3 * idx + 1]
                        d0 = dist[v, a]
                        dd1 = dist[v, b]
                        dd2 = dist[a, b]
                        dmax = d0
                        if dd1 > dmax:
                            dmax = dd1
                        if dd2 > dmax:
                            dmax = dd2
                        dmin = d0
                        if dd1 < dmin:
                            dmin = dd1
                        if dd2 < dmin:
                            dmin = dd2
                        if d0 <= dd1 and d0 <= dd2:
                            split = fabs(area[v] + area[a] - area[b])
                        elif dd1 <= dd2:
                            split = fabs(area[v] + area[b] - area[a])
                        else:
                            split = fabs(area[a] + area[b] - area[v])
                        rows[rc + j, 3] = (dmax - shift[3]) / scale[3]
                        rows[rc + j, 4] = (dmin - shift[4]) / scale[4]
                        rows[rc + j, 5] = (split - shift[5]) / scale[5]
                chosen[sc] = pick
                step_path[sc] = path_id
                step_ptr[sc + 1] = rc + nc
            rc += nc
            sc += 1
        kind = ck[pick]
        idx = ca[pick]
        if kind == 0:
            u = idx
            edge_nodes[3 * ne] = v
            edge_nodes[3 * ne + 1] = u
            edge_size[ne] = 2
            edge_of[v] = ne
            edge_of[u] = ne
            ne += 1
        else:
            edge_nodes[3 * idx + 2] = v
            edge_size[idx] = 3
            edge_of[v] = idx
    row_cursor[0] = rc
    step_cursor[0] = sc
    return 0


def extract_design(const signed char[::1] part,
                   const double[:, ::1] dist,
                   const double[::1] area,
                   const unsigned char[::1] wide,
                   const double[::1] shift,
                   const double[::1] scale,
                   const short[:, ::1] path_v,
                   const short[:, ::1] path_d1,
                   const short[:, ::1] path_d2):
    cdef Py_ssize_t P = path_v.shape[0]
    cdef Py_ssize_t n = part.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] eo = np.empty(n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] en = np.empty(3 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] es = np.empty(n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ck_arr = np.empty(2 * n, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ca_arr = np.empty(2 * n, dtype=np.int32)
    cdef int* edge_of = <int*> cnp.PyArray_DATA(eo)
    cdef int* edge_nodes = <int*> cnp.PyArray_DATA(en)
    cdef int* edge_size = <int*> cnp.PyArray_DATA(es)
    cdef int* ck = <int*> cnp.PyArray_DATA(ck_arr)
    cdef int* ca = <int*> cnp.PyArray_DATA(ca_arr)
    cdef long long rc = 0, sc = 0
    cdef Py_ssize_t p
    cdef int rv
    cdef double[:, ::1] no_rows = np.empty((0, 6))
    cdef long long[::1] no_ptr = np.empty(0, dtype=np.int64)
    cdef int[::1] no_int = np.empty(0, dtype=np.int32)

    # pass 1: count
    for p in range(P):
        rv = _replay_path(part, dist, area, wide, shift, scale,
                          path_v[p], path_d1[p], path_d2[p],
                          edge_of, edge_nodes, edge_size, ck, ca,
                          0, no_rows, no_ptr, no_int, no_int, <int>p, &rc, &sc)
        if rv < 0:
            raise ValueError(f"recorded decision not found in path {p}")
    rows = np.zeros((rc, 6), dtype=np.float64)
    step_ptr = np.zeros(sc + 1, dtype=np.int64)
    chosen = np.zeros(sc, dtype=np.int32)
    step_path = np.zeros(sc, dtype=np.int32)
    cdef double[:, ::1] rows_mv = rows
    cdef long long[::1] ptr_mv = step_ptr
    cdef int[::1] chosen_mv = chosen
    cdef int[::1] sp_mv = step_path
    # pass 2: fill
    rc = 0
    sc = 0
    for p in range(P):
        rv = _replay_path(part, dist, area, wide, shift, scale,
                          path_v[p], path_d1[p], path_d2[p],
                          edge_of, edge_nodes, edge_size, ck, ca,
                          1, rows_mv, ptr_mv, chosen_mv, sp_mv, <int>p, &rc, &sc)
        if rv < 0:
            raise ValueError(f"recorded decision not found in path {p}")
    return rows, step_ptr, chosen, step_path
