"""Compiled inner loops.

Paths are int64 node arrays; node 0 is the depot.  An open path
``[start, s1, ..., sk, 0]`` has fixed end points: ``start`` is the vehicle's
last committed node and the final 0 is the depot return.
"""

import numpy as np
from numba import njit

IMPROVE_EPS = 1e-10


@njit(cache=True)
def path_length(dist, path, n):
    total = 0.0
    for i in range(n - 1):
        total += dist[path[i], path[i + 1]]
    return total


@njit(cache=True)
def two_opt_path(dist, path, n):
    """First-improvement 2-opt on ``path[:n]`` with both end points fixed.

    Scans edge pairs row-major and restarts after every applied move.
    Returns the number of moves applied.
    """
    moves = 0
    improved = True
    while improved:
        improved = False
        for i in range(n - 3):
            a = path[i]
            b = path[i + 1]
            dab = dist[a, b]
            for j in range(i + 2, n - 1):
                c = path[j]
                d = path[j + 1]
                delta = dist[a, c] + dist[b, d] - dab - dist[c, d]
                if delta < -IMPROVE_EPS:
                    lo = i + 1
                    hi = j
                    while lo < hi:
                        tmp = path[lo]
                        path[lo] = path[hi]
                        path[hi] = tmp
                        lo += 1
                        hi -= 1
                    moves += 1
                    improved = True
                    break
            if improved:
                break
    return moves


@njit(cache=True)
def schedule_end(dist, service, speed, path, n, t0):
    t = t0
    for i in range(n - 1):
        t += dist[path[i], path[i + 1]] / speed + service[path[i + 1]]
    return t


@njit(cache=True)
def insert_cheapest(dist, path, n, node):
    """Insert ``node`` into open path ``path[:n]`` at the cheapest interior slot."""
    best = 1e300
    best_pos = 1
    for p in range(1, n):
        delta = dist[path[p - 1], node] + dist[node, path[p]] - dist[path[p - 1], path[p]]
        if delta < best - IMPROVE_EPS:
            best = delta
            best_pos = p
    for q in range(n, best_pos, -1):
        path[q] = path[q - 1]
    path[best_pos] = node
    return best


@njit(cache=True)
def _route_cost(dist, service, speed, workday, path, n, start_time, load, cap_left):
    """(length of path, violation magnitude)."""
    length = path_length(dist, path, n)
    viol = 0.0
    if load > cap_left + 1e-12:
        viol += load - cap_left
    if n > 2:
        end = schedule_end(dist, service, speed, path, n, start_time)
        if end > workday + 1e-9:
            viol += end - workday
    return length, viol


@njit(cache=True)
def memso_decode(genome, free_nodes, m, dist, volumes, service, speed, workday,
                 start_node, start_time, cap_left, committed_len, penalty,
                 paths, counts):
    """Greedy insertion of each vehicle's assigned requests, then 2-opt.

    Fills ``paths[v, :counts[v]]`` with the open path of vehicle ``v`` and
    returns total length plus ``penalty`` times total violation.
    """
    nv = start_node.shape[0]
    loads = np.zeros(nv)
    for v in range(nv):
        paths[v, 0] = start_node[v]
        paths[v, 1] = 0
        counts[v] = 2
    for j in range(genome.shape[0]):
        v = genome[j]
        node = free_nodes[j]
        insert_cheapest(dist, paths[v], counts[v], node)
        counts[v] += 1
        loads[v] += volumes[node]
    total = 0.0
    for v in range(nv):
        if counts[v] > 3:
            two_opt_path(dist, paths[v], counts[v])
        length, viol = _route_cost(dist, service, speed, workday, paths[v], counts[v],
                                   start_time[v], loads[v], cap_left[v])
        total += committed_len[v] + length + penalty * viol
    return total


@njit(cache=True)
def memso_fitness_batch(genomes, free_nodes, m, dist, volumes, service, speed, workday,
                        start_node, start_time, cap_left, committed_len, penalty):
    nv = start_node.shape[0]
    paths = np.empty((nv, free_nodes.shape[0] + 2), dtype=np.int64)
    counts = np.empty(nv, dtype=np.int64)
    out = np.empty(genomes.shape[0])
    for p in range(genomes.shape[0]):
        out[p] = memso_decode(genomes[p], free_nodes, m, dist, volumes, service, speed,
                              workday, start_node, start_time, cap_left, committed_len,
                              penalty, paths, counts)
    return out


@njit(cache=True)
def cheapest_vehicle(paths, counts, loads, node, dist, volumes, service, speed, workday,
                     start_time, cap_left, nv):
    """Vehicle whose cheapest insertion of ``node`` adds least length.

    Feasible insertions (capacity and return time) win over infeasible ones;
    ties go to the lowest vehicle index.
    """
    best_v = 0
    best_delta = 1e300
    best_feas = False
    tmp = np.empty(paths.shape[1] + 1, dtype=np.int64)
    for v in range(nv):
        n = counts[v]
        for i in range(n):
            tmp[i] = paths[v, i]
        delta = insert_cheapest(dist, tmp, n, node)
        feas = loads[v] + volumes[node] <= cap_left[v] + 1e-12
        if feas:
            end = schedule_end(dist, service, speed, tmp, n + 1, start_time[v])
            feas = end <= workday + 1e-9
        if (feas and not best_feas) or (feas == best_feas and delta < best_delta - IMPROVE_EPS):
            best_v = v
            best_delta = delta
            best_feas = feas
    return best_v


@njit(cache=True)
def splitmix64(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15))
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def nearest_center(cx, cy, px, py):
    best = 0
    best_d = 1e300
    for c in range(cx.shape[0]):
        d = (cx[c] - px) ** 2 + (cy[c] - py) ** 2
        if d < best_d:
            best_d = d
            best = c
    return best, best_d


@njit(cache=True)
def decode_division(centers, k, free_nodes, coords, volumes, cap_left, assign, flagged):
    """Assign free requests to vehicles from a flattened cluster-center vector.

    Centers ``2c, 2c+1`` are the (x, y) of center ``c``; centers ``v*k .. v*k+k-1``
    belong to vehicle ``v``.  Requests go in increasing order of distance to
    their nearest center (ties by position in ``free_nodes``).
    Returns the number of requests that took the capacity-respecting branch.
    """
    nc = centers.shape[0] // 2
    nv = nc // k
    cx = np.empty(nc)
    cy = np.empty(nc)
    for c in range(nc):
        cx[c] = centers[2 * c]
        cy[c] = centers[2 * c + 1]
    nf = free_nodes.shape[0]
    near = np.empty(nf, dtype=np.int64)
    dnear = np.empty(nf)
    for j in range(nf):
        p = free_nodes[j]
        near[j], dnear[j] = nearest_center(cx, cy, coords[p, 0], coords[p, 1])
    order = np.argsort(dnear, kind="mergesort")
    residual = cap_left[:nv].copy()
    ok = 0
    for jj in range(nf):
        j = order[jj]
        p = free_nodes[j]
        v = near[j] // k
        flagged[j] = False
        if volumes[p] <= residual[v] + 1e-12:
            assign[j] = v
            ok += 1
        else:
            best_c = -1
            best_d = 1e300
            for c in range(nc):
                w = c // k
                if volumes[p] <= residual[w] + 1e-12:
                    d = (cx[c] - coords[p, 0]) ** 2 + (cy[c] - coords[p, 1]) ** 2
                    if d < best_d:
                        best_d = d
                        best_c = c
            if best_c >= 0:
                assign[j] = best_c // k
                ok += 1
            else:
                assign[j] = v
                flagged[j] = True
        residual[assign[j]] -= volumes[p]
    return ok


@njit(cache=True)
def _random_order_path(path, n, key_seed):
    """Shuffle the interior ``path[1:n-1]`` by keys drawn from ``key_seed``."""
    m = n - 2
    if m < 2:
        return
    keys = np.empty(m, dtype=np.uint64)
    s = key_seed
    for i in range(m):
        s = splitmix64(s)
        keys[i] = s
    order = np.argsort(keys)
    tmp = path[1:n - 1].copy()
    for i in range(m):
        path[1 + i] = tmp[order[i]]


@njit(cache=True)
def phase1_decode(centers, k, free_nodes, coords, dist, volumes, service, speed, workday,
                  start_node, start_time, cap_left, committed_len, penalty, key_seed,
                  assign, flagged, paths, counts):
    nv_all = start_node.shape[0]
    decode_division(centers, k, free_nodes, coords, volumes, cap_left, assign, flagged)
    loads = np.zeros(nv_all)
    for v in range(nv_all):
        paths[v, 0] = start_node[v]
        counts[v] = 1
    # free_nodes is ascending, so each vehicle's requests start in node order
    for j in range(free_nodes.shape[0]):
        v = assign[j]
        paths[v, counts[v]] = free_nodes[j]
        counts[v] += 1
        loads[v] += volumes[free_nodes[j]]
    total = 0.0
    for v in range(nv_all):
        paths[v, counts[v]] = 0
        counts[v] += 1
        _random_order_path(paths[v], counts[v], splitmix64(key_seed ^ np.uint64(v)))
        if counts[v] > 3:
            two_opt_path(dist, paths[v], counts[v])
        length, viol = _route_cost(dist, service, speed, workday, paths[v], counts[v],
                                   start_time[v], loads[v], cap_left[v])
        total += committed_len[v] + length + penalty * viol
    return total


@njit(cache=True)
def genome_seed(genome, seed):
    h = splitmix64(np.uint64(seed))
    bits = genome.view(np.uint64)
    for i in range(bits.shape[0]):
        h = splitmix64(h ^ bits[i])
    return h


@njit(cache=True)
def phase1_fitness_batch(genomes, k, free_nodes, coords, dist, volumes, service, speed,
                         workday, start_node, start_time, cap_left, committed_len, penalty,
                         seed):
    nv = start_node.shape[0]
    nf = free_nodes.shape[0]
    assign = np.empty(nf, dtype=np.int64)
    flagged = np.empty(nf, dtype=np.bool_)
    paths = np.empty((nv, nf + 2), dtype=np.int64)
    counts = np.empty(nv, dtype=np.int64)
    out = np.empty(genomes.shape[0])
    for p in range(genomes.shape[0]):
        g = np.ascontiguousarray(genomes[p])
        out[p] = phase1_decode(g, k, free_nodes, coords, dist, volumes, service, speed,
                               workday, start_node, start_time, cap_left, committed_len,
                               penalty, genome_seed(g, seed), assign, flagged, paths, counts)
    return out


@njit(cache=True)
def rank_path(ranks, nodes, start, path):
    """Open path start -> nodes sorted by (rank, node) -> depot.

    ``nodes`` must be ascending so the stable sort breaks rank ties by node.
    """
    order = np.argsort(ranks, kind="mergesort")
    n = nodes.shape[0]
    path[0] = start
    for i in range(n):
        path[i + 1] = nodes[order[i]]
    path[n + 1] = 0
    return n + 2


@njit(cache=True)
def phase2_fitness_batch(genomes, nodes, start, start_time, dist, service, speed, workday,
                         penalty):
    n = nodes.shape[0]
    path = np.empty(n + 2, dtype=np.int64)
    out = np.empty(genomes.shape[0])
    for p in range(genomes.shape[0]):
        m = rank_path(genomes[p], nodes, start, path)
        length = path_length(dist, path, m)
        end = schedule_end(dist, service, speed, path, m, start_time)
        viol = end - workday if end > workday + 1e-9 else 0.0
        out[p] = length + penalty * viol
    return out
