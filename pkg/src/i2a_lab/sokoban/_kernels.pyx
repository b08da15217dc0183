# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled reverse-play search. Mirrors ``_reverse_play.reverse_play`` exactly."""

from libc.stdint cimport uint64_t, int32_t
from libc.stdlib cimport malloc, calloc, free
from libc.string cimport memcpy

import numpy as np


cdef inline uint64_t _splitmix(uint64_t *state) nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _randbelow(uint64_t *state, uint64_t n) nogil:
    # (2**64) % n computed as (-n) % n in unsigned arithmetic
    cdef uint64_t threshold = (<uint64_t>0 - n) % n
    cdef uint64_t x
    while True:
        x = _splitmix(state)
        if x >= threshold:
            return x % n


cdef struct HashSet:
    uint64_t *slots
    Py_ssize_t cap
    Py_ssize_t size


cdef int _hs_init(HashSet *hs, Py_ssize_t cap) nogil:
    hs.slots = <uint64_t *> calloc(cap, sizeof(uint64_t))
    hs.cap = cap
    hs.size = 0
    return 0 if hs.slots != NULL else -1


cdef int _hs_grow(HashSet *hs) nogil:
    cdef Py_ssize_t old_cap = hs.cap, i, j, mask
    cdef uint64_t *old = hs.slots
    cdef uint64_t k
    hs.cap = old_cap * 2
    hs.slots = <uint64_t *> calloc(hs.cap, sizeof(uint64_t))
    if hs.slots == NULL:
        return -1
    mask = hs.cap - 1
    for i in range(old_cap):
        k = old[i]
        if k != 0:
            j = <Py_ssize_t>(k & <uint64_t>mask)
            while hs.slots[j] != 0:
                j = (j + 1) & mask
            hs.slots[j] = k
    free(old)
    return 0


cdef inline int _hs_contains(HashSet *hs, uint64_t k) nogil:
    cdef Py_ssize_t mask = hs.cap - 1
    cdef Py_ssize_t j = <Py_ssize_t>(k & <uint64_t>mask)
    while hs.slots[j] != 0:
        if hs.slots[j] == k:
            return 1
        j = (j + 1) & mask
    return 0


cdef inline int _hs_add(HashSet *hs, uint64_t k) nogil:
    cdef Py_ssize_t mask, j
    if 2 * (hs.size + 1) > hs.cap:
        if _hs_grow(hs) != 0:
            return -1
    mask = hs.cap - 1
    j = <Py_ssize_t>(k & <uint64_t>mask)
    while hs.slots[j] != 0:
        j = (j + 1) & mask
    hs.slots[j] = k
    hs.size += 1
    return 0


cdef struct Ctx:
    int n_cells
    int width
    int n_boxes
    int max_depth
    Py_ssize_t max_visited
    unsigned char *walls
    unsigned char *is_target
    int32_t *boxes
    int32_t *origin
    int32_t *box_at
    uint64_t *zbox
    uint64_t *zply
    int32_t *path
    int player
    uint64_t rng
    int stop
    int error
    long best_score
    int best_player
    int32_t *best_boxes
    int32_t *best_path
    int best_len
    int max_depth_seen
    HashSet visited


cdef inline long _score(Ctx *c, int swaps) nogil:
    cdef int i, b, o
    cdef long disp = 0
    if c.is_target[c.player]:
        return 0
    for i in range(c.n_boxes):
        b = c.boxes[i]
        if c.is_target[b]:
            return 0
        o = c.origin[i]
        disp += abs(b / c.width - o / c.width) + abs(b % c.width - o % c.width)
    return swaps * disp


cdef void _visit(Ctx *c, int depth, int swaps, int last_box, uint64_t h) nogil:
    cdef uint64_t key = h if h != 0 else 1
    cdef int order[8]
    cdef int i, j, a, tmp, ply, d, nxt, behind, bi
    cdef long sc
    cdef int deltas[4]
    if _hs_contains(&c.visited, key):
        return
    if c.visited.size >= c.max_visited:
        c.stop = 1
        return
    if _hs_add(&c.visited, key) != 0:
        c.stop = 1
        c.error = 1
        return
    if depth > c.max_depth_seen:
        c.max_depth_seen = depth
    sc = _score(c, swaps)
    if sc > c.best_score:
        c.best_score = sc
        c.best_player = c.player
        memcpy(c.best_boxes, c.boxes, c.n_boxes * sizeof(int32_t))
        memcpy(c.best_path, c.path, depth * sizeof(int32_t))
        c.best_len = depth
    if depth >= c.max_depth:
        return
    for i in range(8):
        order[i] = i
    for i in range(7, 0, -1):
        j = <int>_randbelow(&c.rng, i + 1)
        tmp = order[i]
        order[i] = order[j]
        order[j] = tmp
    deltas[0] = -c.width
    deltas[1] = c.width
    deltas[2] = -1
    deltas[3] = 1
    for i in range(8):
        if c.stop:
            return
        a = order[i]
        ply = c.player
        d = deltas[a & 3]
        nxt = ply + d
        if c.walls[nxt] or c.box_at[nxt] >= 0:
            continue
        if a < 4:
            c.player = nxt
            c.path[depth] = a
            _visit(c, depth + 1, swaps, last_box, h ^ c.zply[ply] ^ c.zply[nxt])
            c.player = ply
        else:
            behind = ply - d
            bi = c.box_at[behind]
            if bi < 0:
                continue
            c.box_at[behind] = -1
            c.box_at[ply] = bi
            c.boxes[bi] = ply
            c.player = nxt
            c.path[depth] = a
            _visit(c, depth + 1, swaps + (1 if bi != last_box else 0), bi,
                   h ^ c.zply[ply] ^ c.zply[nxt] ^ c.zbox[behind] ^ c.zbox[ply])
            c.player = ply
            c.boxes[bi] = behind
            c.box_at[ply] = -1
            c.box_at[behind] = bi


def reverse_play(walls, targets, int player, int width, int max_depth,
                 Py_ssize_t max_visited, zobrist, rng_state):
    """See ``_reverse_play.reverse_play``."""
    cdef Py_ssize_t n = len(walls)
    cdef int nb = len(targets)
    cdef int i
    cdef Ctx c
    cdef uint64_t h0
    cdef unsigned char[::1] w_view = np.ascontiguousarray(walls, dtype=np.uint8)
    cdef uint64_t[::1] z_view = np.ascontiguousarray(zobrist, dtype=np.uint64)
    if z_view.shape[0] < 2 * n:
        raise ValueError("zobrist table too short")
    if max_depth < 0 or max_visited < 1:
        raise ValueError("max_depth must be >= 0 and max_visited >= 1")

    c.n_cells = <int>n
    c.width = width
    c.n_boxes = nb
    c.max_depth = max_depth
    c.max_visited = max_visited
    c.walls = &w_view[0]
    c.zbox = &z_view[0]
    c.zply = &z_view[n]
    c.is_target = <unsigned char *> calloc(n, 1)
    c.box_at = <int32_t *> malloc(n * sizeof(int32_t))
    c.boxes = <int32_t *> malloc((nb + 1) * sizeof(int32_t))
    c.origin = <int32_t *> malloc((nb + 1) * sizeof(int32_t))
    c.best_boxes = <int32_t *> malloc((nb + 1) * sizeof(int32_t))
    c.path = <int32_t *> malloc((max_depth + 1) * sizeof(int32_t))
    c.best_path = <int32_t *> malloc((max_depth + 1) * sizeof(int32_t))
    if _hs_init(&c.visited, 4096) != 0:
        raise MemoryError()
    try:
        if (c.is_target == NULL or c.box_at == NULL or c.boxes == NULL or c.origin == NULL
                or c.best_boxes == NULL or c.path == NULL or c.best_path == NULL):
            raise MemoryError()
        for i in range(n):
            c.box_at[i] = -1
        h0 = c.zply[player]
        for i in range(nb):
            c.boxes[i] = targets[i]
            c.origin[i] = targets[i]
            c.best_boxes[i] = targets[i]
            c.is_target[c.boxes[i]] = 1
            c.box_at[c.boxes[i]] = i
            h0 ^= c.zbox[c.boxes[i]]
        c.player = player
        c.rng = <uint64_t>(int(rng_state) & 0xFFFFFFFFFFFFFFFF)
        c.stop = 0
        c.error = 0
        c.best_score = 0
        c.best_player = player
        c.best_len = 0
        c.max_depth_seen = 0
        with nogil:
            _visit(&c, 0, 0, -1, h0)
        if c.error:
            raise MemoryError("visited-set allocation failed")
        return {
            "score": c.best_score,
            "player": c.best_player,
            "boxes": [c.best_boxes[i] for i in range(nb)],
            "path": [c.best_path[i] for i in range(c.best_len)],
            "visited": c.visited.size,
            "max_depth_seen": c.max_depth_seen,
            "rng_state": int(c.rng),
        }
    finally:
        free(c.is_target)
        free(c.box_at)
        free(c.boxes)
        free(c.origin)
        free(c.best_boxes)
        free(c.path)
        free(c.best_path)
        free(c.visited.slots)
