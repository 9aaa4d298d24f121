"""Hot inner loops: core peeling, Hopcroft-Karp, subset DP, pruned search.

All functions take flat numpy arrays (CSR adjacency: ``ptr`` of length
``n + 1`` and ``adj`` of neighbour ids) so they compile under numba and
still run unchanged in pure Python when the JIT is disabled.
"""
import numpy as np

from ._accel import njit

INF = np.iinfo(np.int64).max


@njit
def peel_kernel(ptr, adj, d_min):
    """Iteratively strip vertices of current degree < d_min; return keep-mask."""
    nv = ptr.shape[0] - 1
    deg = np.empty(nv, np.int64)
    alive = np.ones(nv, np.bool_)
    queue = np.empty(nv, np.int64)
    qt = 0
    for v in range(nv):
        deg[v] = ptr[v + 1] - ptr[v]
        if deg[v] < d_min:
            alive[v] = False
            queue[qt] = v
            qt += 1
    qh = 0
    while qh < qt:
        v = queue[qh]
        qh += 1
        for e in range(ptr[v], ptr[v + 1]):
            w = adj[e]
            if alive[w]:
                deg[w] -= 1
                if deg[w] < d_min:
                    alive[w] = False
                    queue[qt] = w
                    qt += 1
    return alive


@njit
def hopcroft_karp_kernel(n_left, n_right, ptr, adj):
    """Maximum bipartite matching. Returns (match_left, match_right), -1 = free."""
    match_l = np.full(n_left, -1, np.int64)
    match_r = np.full(n_right, -1, np.int64)
    # greedy warm start in adjacency order
    for u in range(n_left):
        for e in range(ptr[u], ptr[u + 1]):
            v = adj[e]
            if match_r[v] == -1:
                match_l[u] = v
                match_r[v] = u
                break
    dist = np.empty(n_left, np.int64)
    queue = np.empty(n_left, np.int64)
    it = np.empty(n_left, np.int64)
    stack = np.empty(n_left + 1, np.int64)
    big = np.iinfo(np.int64).max
    while True:
        qh = 0
        qt = 0
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                queue[qt] = u
                qt += 1
            else:
                dist[u] = big
        found = False
        while qh < qt:
            u = queue[qh]
            qh += 1
            for e in range(ptr[u], ptr[u + 1]):
                w = match_r[adj[e]]
                if w == -1:
                    found = True
                elif dist[w] == big:
                    dist[w] = dist[u] + 1
                    queue[qt] = w
                    qt += 1
        if not found:
            break
        for u in range(n_left):
            it[u] = ptr[u]
        for root in range(n_left):
            if match_l[root] != -1:
                continue
            top = 0
            stack[0] = root
            done = False
            while top >= 0 and not done:
                x = stack[top]
                advanced = False
                while it[x] < ptr[x + 1]:
                    v = adj[it[x]]
                    w = match_r[v]
                    if w == -1:
                        for k in range(top + 1):
                            xk = stack[k]
                            vk = adj[it[xk]]
                            match_l[xk] = vk
                            match_r[vk] = xk
                        done = True
                        break
                    if dist[w] != big and dist[w] == dist[x] + 1:
                        top += 1
                        stack[top] = w
                        advanced = True
                        break
                    it[x] += 1
                if done or advanced:
                    continue
                dist[x] = big
                top -= 1
                if top >= 0:
                    it[stack[top]] += 1
    return match_l, match_r


@njit
def subset_dp_kernel(n, out_bits):
    """Held-Karp style reachability over subsets containing vertex 0.

    ``out_bits[v]`` is the bitmask of out-neighbours of ``v``. Returns a
    Hamilton cycle starting at 0 as an int array, or an empty array.
    """
    if n == 1:
        return np.empty(0, np.int64)
    k = n - 1
    size = 1 << k
    dp = np.zeros(size, np.uint32)
    # bit (v - 1) represents vertex v >= 1
    shifted = np.empty(n, np.int64)
    for v in range(n):
        shifted[v] = out_bits[v] >> 1
    first = shifted[0]
    for b in range(k):
        if (first >> b) & 1:
            dp[1 << b] |= np.uint32(1 << b)
    for mask in range(1, size):
        ends = np.int64(dp[mask])
        while ends:
            low = ends & -ends
            ends ^= low
            e = 0
            while (low >> e) != 1:
                e += 1
            nxt = shifted[e + 1] & ~mask & (size - 1)
            while nxt:
                lb = nxt & -nxt
                nxt ^= lb
                dp[mask | lb] |= np.uint32(lb)
    full = size - 1
    ends = np.int64(dp[full])
    last = -1
    for b in range(k):
        if (ends >> b) & 1 and (out_bits[b + 1] & 1):
            last = b
            break
    if last < 0:
        return np.empty(0, np.int64)
    cycle = np.empty(n, np.int64)
    cycle[0] = 0
    mask = full
    cur = last
    pos = n - 1
    while True:
        cycle[pos] = cur + 1
        pos -= 1
        prev_mask = mask ^ (1 << cur)
        if prev_mask == 0:
            break
        cand = np.int64(dp[prev_mask])
        nxt_cur = -1
        for b in range(k):
            if (cand >> b) & 1 and ((shifted[b + 1] >> cur) & 1):
                nxt_cur = b
                break
        mask = prev_mask
        cur = nxt_cur
    return cycle


@njit
def backtrack_kernel(n, optr, oadj, iptr, iadj, budget):
    """Depth-first Hamilton cycle search from vertex 0 with degree pruning.

    Returns (status, cycle): status 1 found, 0 none exists, -1 budget hit.
    """
    cycle = np.full(n, -1, np.int64)
    if n == 1:
        return 0, cycle
    visited = np.zeros(n, np.bool_)
    avail_in = np.empty(n, np.int64)
    avail_out = np.empty(n, np.int64)
    for v in range(n):
        avail_in[v] = iptr[v + 1] - iptr[v]
        avail_out[v] = optr[v + 1] - optr[v]
        if avail_in[v] == 0 or avail_out[v] == 0:
            return 0, cycle
    path = np.empty(n, np.int64)
    # per-depth candidate lists
    cand = np.empty((n, n), np.int64)
    ncand = np.zeros(n, np.int64)
    ci = np.zeros(n, np.int64)
    path[0] = 0
    visited[0] = True
    # vertex 0 as endpoint of an empty path: it stays available for predecessors
    depth = 0
    nodes = 0
    need_expand = True
    while True:
        if need_expand:
            nodes += 1
            if nodes > budget:
                return -1, cycle
            u = path[depth]
            if depth == n - 1:
                ok = False
                for e in range(optr[u], optr[u + 1]):
                    if oadj[e] == 0:
                        ok = True
                        break
                if ok:
                    for i in range(n):
                        cycle[i] = path[i]
                    return 1, cycle
                ncand[depth] = 0
                ci[depth] = 0
            else:
                # collect moves; a successor whose only live predecessor is u is forced
                cnt = 0
                forced = -1
                nforced = 0
                for e in range(optr[u], optr[u + 1]):
                    w = oadj[e]
                    if not visited[w]:
                        cand[depth, cnt] = w
                        cnt += 1
                        if avail_in[w] == 1:
                            forced = w
                            nforced += 1
                if nforced > 1:
                    cnt = 0
                elif nforced == 1:
                    cand[depth, 0] = forced
                    cnt = 1
                else:
                    # fewest onward options first
                    for a in range(1, cnt):
                        key = cand[depth, a]
                        kv = avail_out[key]
                        b = a - 1
                        while b >= 0 and avail_out[cand[depth, b]] > kv:
                            cand[depth, b + 1] = cand[depth, b]
                            b -= 1
                        cand[depth, b + 1] = key
                ncand[depth] = cnt
                ci[depth] = 0
            need_expand = False
        if ci[depth] < ncand[depth]:
            u = path[depth]
            w = cand[depth, ci[depth]]
            ci[depth] += 1
            # u stops being a live predecessor for its other successors
            bad = False
            for e in range(optr[u], optr[u + 1]):
                y = oadj[e]
                if y != w and not visited[y]:
                    avail_in[y] -= 1
                    if avail_in[y] == 0:
                        bad = True
            visited[w] = True
            for e in range(iptr[w], iptr[w + 1]):
                x = iadj[e]
                if x != w:
                    avail_out[x] -= 1
                    if not visited[x] and avail_out[x] == 0:
                        bad = True
            depth += 1
            path[depth] = w
            if bad:
                # undo immediately
                _undo_step(optr, oadj, iptr, iadj, path, depth, visited, avail_in, avail_out)
                depth -= 1
                continue
            need_expand = True
            continue
        if depth == 0:
            return 0, cycle
        _undo_step(optr, oadj, iptr, iadj, path, depth, visited, avail_in, avail_out)
        depth -= 1


@njit
def _undo_step(optr, oadj, iptr, iadj, path, depth, visited, avail_in, avail_out):
    w = path[depth]
    u = path[depth - 1]
    for e in range(iptr[w], iptr[w + 1]):
        x = iadj[e]
        if x != w:
            avail_out[x] += 1
    visited[w] = False
    for e in range(optr[u], optr[u + 1]):
        y = oadj[e]
        if y != w and not visited[y]:
            avail_in[y] += 1
