"""Pure-Python kernel backend.

Mirrors ``_speedups.pyx`` operation for operation (same candidate enumeration
order, same cumulative-probability sampling walk, same parent-count table) so
that both backends produce bit-identical trajectories from the same uniform
draws. Used as the fallback when the compiled extension is unavailable and as
the reference in parity tests; all loops are plain Python and intentionally
simple.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def _parent_count(edge_size, edge_nvis, ne, has_sing):
    """Parent-state count of a (matching, visited) configuration.

    Case split per edge on (size, visited members, singleton presence); the
    "unreachable" sub-cases of the singleton branch contribute zero parents.
    """
    q = 0
    if not has_sing:
        for e in range(ne):
            sz = edge_size[e]
            nv = edge_nvis[e]
            if sz == 2:
                q += 2 if nv == 2 else 1
            else:  # sz == 3; size-1 edges impossible without singletons
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


def propagate(part, lp_pair, lp_tri, edge_of, visited, edge_nodes, edge_size,
              edge_nvis, n_edges, n_sing, u_node, u_dec, fixed_node, correct,
              log_inc):
    """Advance every particle by one decision (one SMC iteration).

    Returns 0 on success, or i+1 if particle i hit a zero parent count
    (impossible for reachable states; kept as a hard data-corruption check).
    """
    N, n = edge_of.shape
    ck = np.empty(2 * n, dtype=np.int32)    # candidate kind: 0 node, 1 edge
    ca = np.empty(2 * n, dtype=np.int32)    # candidate id (node or edge slot)
    lp = np.empty(2 * n, dtype=np.float64)
    for i in range(N):
        # pick the node to visit
        if fixed_node >= 0:
            v = fixed_node
        else:
            n_unvis = 0
            for u in range(n):
                if not visited[i, u]:
                    n_unvis += 1
            k = int(float(u_node[i]) * n_unvis)
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
            # covered: forced empty decision
            edge_nvis[i, e_v] += 1
            visited[i, v] = 1
        else:
            pv = part[v]
            nc = 0
            for u in range(n):
                if u != v and edge_of[i, u] < 0 and part[u] != pv:
                    ck[nc] = 0
                    ca[nc] = u
                    lp[nc] = float(lp_pair[v, u])
                    nc += 1
            ne = int(n_edges[i])
            for e in range(ne):
                if edge_size[i, e] == 2:
                    a = edge_nodes[i, e, 0]
                    b = edge_nodes[i, e, 1]
                    if part[a] != pv and part[b] != pv:
                        ck[nc] = 1
                        ca[nc] = e
                        lp[nc] = float(lp_tri[v, a, b])
                        nc += 1
            if nc == 0:
                # no candidate: v becomes a singleton edge
                e = int(n_edges[i])
                edge_nodes[i, e, 0] = v
                edge_size[i, e] = 1
                edge_nvis[i, e] = 1
                edge_of[i, v] = e
                n_edges[i] = e + 1
                n_sing[i] += 1
            else:
                m = float(lp[0])
                for j in range(1, nc):
                    if float(lp[j]) > m:
                        m = float(lp[j])
                total = 0.0
                for j in range(nc):
                    total += math.exp(float(lp[j]) - m)
                target = float(u_dec[i]) * total
                acc = 0.0
                pick = nc - 1
                for j in range(nc):
                    acc += math.exp(float(lp[j]) - m)
                    if target < acc:
                        pick = j
                        break
                if ck[pick] == 0:
                    u = int(ca[pick])
                    e = int(n_edges[i])
                    edge_nodes[i, e, 0] = v
                    edge_nodes[i, e, 1] = u
                    edge_size[i, e] = 2
                    edge_nvis[i, e] = 1
                    edge_of[i, v] = e
                    edge_of[i, u] = e
                    n_edges[i] = e + 1
                else:
                    e = int(ca[pick])
                    edge_nodes[i, e, 2] = v
                    edge_size[i, e] = 3
                    edge_nvis[i, e] += 1
                    edge_of[i, v] = e
            visited[i, v] = 1
        q = _parent_count(edge_size[i], edge_nvis[i], int(n_edges[i]),
                          n_sing[i] > 0)
        if q <= 0:
            return i + 1
        log_inc[i] = -math.log(q) if correct else 0.0
    return 0


def propagate_constrained(part, lp_pair, lp_tri, true_edge, true_size, edge_of,
                          visited, edge_nodes, edge_size, edge_nvis, n_edges,
                          n_sing, u_node, u_dec, path_v, path_d1, path_d2,
                          step, log_inc):
    """One constrained E-step iteration: moves stay consistent with m^i.

    The visit draw is uniform over nodes with at least one consistent decision
    (set A); the decision is drawn from the renormalized model probabilities of
    the consistent candidates. Weight increment: log(|A|/|unvisited|) plus the
    log of the consistent probability mass. The chosen move is recorded in the
    path arrays (d1/d2 = sorted member ids of the decision, -1 padding).
    """
    N, n = edge_of.shape
    ck = np.empty(2 * n, dtype=np.int32)
    ca = np.empty(2 * n, dtype=np.int32)
    cc = np.empty(2 * n, dtype=np.int32)    # consistency flag per candidate
    lp = np.empty(2 * n, dtype=np.float64)
    amem = np.empty(n, dtype=np.int32)
    for i in range(N):
        # build A: unvisited nodes with a consistent decision
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
                # true singleton: consistent only if its decision set is empty
                pu = part[u]
                has_cand = False
                for w in range(n):
                    if w != u and edge_of[i, w] < 0 and part[w] != pu:
                        has_cand = True
                        break
                if not has_cand:
                    for e in range(int(n_edges[i])):
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
            return i + 1
        k = int(float(u_node[i]) * na)
        if k >= na:
            k = na - 1
        v = int(amem[k])
        base = math.log(na) - math.log(n_unvis)
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
                lp[nc] = float(lp_pair[v, u])
                nc += 1
        for e in range(int(n_edges[i])):
            if edge_size[i, e] == 2:
                a = edge_nodes[i, e, 0]
                b = edge_nodes[i, e, 1]
                if part[a] != pv and part[b] != pv:
                    ck[nc] = 1
                    ca[nc] = e
                    cc[nc] = 1 if true_edge[a] == tv else 0
                    lp[nc] = float(lp_tri[v, a, b])
                    nc += 1
        if nc == 0:
            e = int(n_edges[i])
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
        m = float(lp[0])
        for j in range(1, nc):
            if float(lp[j]) > m:
                m = float(lp[j])
        total = 0.0
        cons = 0.0
        for j in range(nc):
            w = math.exp(float(lp[j]) - m)
            total += w
            if cc[j]:
                cons += w
        if cons <= 0.0:
            # A-membership rule promised a consistent move; defensively kill
            log_inc[i] = -math.inf
            pick = 0
        else:
            target = float(u_dec[i]) * cons
            acc = 0.0
            pick = -1
            for j in range(nc):
                if cc[j]:
                    acc += math.exp(float(lp[j]) - m)
                    pick = j
                    if target < acc:
                        break
            log_inc[i] = base + math.log(cons) - math.log(total)
        if ck[pick] == 0:
            u = int(ca[pick])
            e = int(n_edges[i])
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
            e = int(ca[pick])
            a = int(edge_nodes[i, e, 0])
            b = int(edge_nodes[i, e, 1])
            edge_nodes[i, e, 2] = v
            edge_size[i, e] = 3
            edge_nvis[i, e] += 1
            edge_of[i, v] = e
            path_d1[i, step] = a if a < b else b
            path_d2[i, step] = b if a < b else a
        visited[i, v] = 1
        path_v[i, step] = v
    return 0


def extract_design(part, dist, area, wide, shift, scale, path_v, path_d1,
                   path_d2):
    """Replay recorded paths and emit the multinomial design of every step.

    For each step with at least two candidates: one standardized covariate row
    per candidate plus the index of the chosen row. Steps with forced or
    single-candidate decisions contribute nothing to likelihood or gradient
    and are skipped.

    Returns (rows, step_ptr, chosen, step_path): rows is (R, 6); step s spans
    rows[step_ptr[s]:step_ptr[s+1]] and belongs to path step_path[s].
    """
    P, R = path_v.shape
    n = part.shape[0]
    rows = []
    step_ptr = [0]
    chosen = []
    step_path = []
    edge_of = np.empty(n, dtype=np.int32)
    edge_nodes = np.empty((n, 3), dtype=np.int32)
    edge_size = np.empty(n, dtype=np.int32)
    for p in range(P):
        edge_of[:] = -1
        edge_size[:] = 0
        ne = 0
        for r in range(R):
            v = int(path_v[p, r])
            d1 = int(path_d1[p, r])
            d2 = int(path_d2[p, r])
            if edge_of[v] >= 0:
                continue  # forced empty decision
            pv = part[v]
            cands = []
            for u in range(n):
                if u != v and edge_of[u] < 0 and part[u] != pv:
                    cands.append((0, u))
            for e in range(ne):
                if edge_size[e] == 2:
                    a = edge_nodes[e, 0]
                    b = edge_nodes[e, 1]
                    if part[a] != pv and part[b] != pv:
                        cands.append((1, e))
            if not cands:
                edge_nodes[ne, 0] = v
                edge_size[ne] = 1
                edge_of[v] = ne
                ne += 1
                continue
            pick = -1
            for j, (kind, idx) in enumerate(cands):
                if kind == 0:
                    if d2 < 0 and d1 == idx:
                        pick = j
                else:
                    a, b = int(edge_nodes[idx, 0]), int(edge_nodes[idx, 1])
                    lo, hi = (a, b) if a < b else (b, a)
                    if d1 == lo and d2 == hi:
                        pick = j
            if pick < 0:
                raise ValueError(f"recorded decision not found at path {p} step {r}")
            if len(cands) >= 2:
                for kind, idx in cands:
                    rows.append(_candidate_row(part, dist, area, wide, shift,
                                               scale, edge_nodes, v, kind, idx))
                step_ptr.append(step_ptr[-1] + len(cands))
                chosen.append(pick)
                step_path.append(p)
            kind, idx = cands[pick]
            if kind == 0:
                u = idx
                edge_nodes[ne, 0] = v
                edge_nodes[ne, 1] = u
                edge_size[ne] = 2
                edge_of[v] = ne
                edge_of[u] = ne
                ne += 1
            else:
                edge_nodes[idx, 2] = v
                edge_size[idx] = 3
                edge_of[v] = idx
    rows_arr = (np.stack(rows) if rows else np.zeros((0, 6)))
    return (rows_arr,
            np.asarray(step_ptr, dtype=np.int64),
            np.asarray(chosen, dtype=np.int32),
            np.asarray(step_path, dtype=np.int32))


def _candidate_row(part, dist, area, wide, shift, scale, edge_nodes, v, kind, idx):
    row = np.zeros(6)
    if kind == 0:
        u = idx
        d = float(dist[v, u])
        if wide[v] and wide[u]:
            row[0] = (d - shift[0]) / scale[0]
        else:
            row[1] = (d - shift[1]) / scale[1]
        row[2] = (abs(float(area[v]) - float(area[u])) - shift[2]) / scale[2]
    else:
        a = int(edge_nodes[idx, 0])
        b = int(edge_nodes[idx, 1])
        d0 = float(dist[v, a])
        d1 = float(dist[v, b])
        d2 = float(dist[a, b])
        dmax = max(d0, d1, d2)
        dmin = min(d0, d1, d2)
        # closest pair first-wins in (v,a), (v,b), (a,b) order, matching the
        # stacking order of geometry.triplet_linear_predictors
        if d0 <= d1 and d0 <= d2:
            split = abs(float(area[v]) + float(area[a]) - float(area[b]))
        elif d1 <= d2:
            split = abs(float(area[v]) + float(area[b]) - float(area[a]))
        else:
            split = abs(float(area[a]) + float(area[b]) - float(area[v]))
        row[3] = (dmax - shift[3]) / scale[3]
        row[4] = (dmin - shift[4]) / scale[4]
        row[5] = (split - shift[5]) / scale[5]
    return row
