# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled request kernel; mirrors ``_kernel_py`` statement for statement."""
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint64_t

cdef enum:
    LRU_CODE = 0
    QLRU_CODE = 1
    RANDOM_CODE = 2
    TWOLRU_CODE = 3

cdef double TWO53 = 1.0 / 9007199254740992.0


cdef inline double _uniform(uint64_t[::1] rng_state, Py_ssize_t node) noexcept nogil:
    cdef uint64_t s = rng_state[node] + <uint64_t>0x9E3779B97F4A7C15ULL
    rng_state[node] = s
    cdef uint64_t z = (s ^ (s >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    z ^= z >> 31
    return <double>(z >> 11) * TWO53


cdef inline void _unlink(Py_ssize_t lst, int64_t x, int32_t[:, ::1] prev, int32_t[:, ::1] nxt,
                         int64_t[::1] head, int64_t[::1] tail) noexcept nogil:
    cdef int64_t p = prev[lst, x]
    cdef int64_t n = nxt[lst, x]
    if p >= 0:
        nxt[lst, p] = <int32_t>n
    else:
        head[lst] = n
    if n >= 0:
        prev[lst, n] = <int32_t>p
    else:
        tail[lst] = p


cdef inline void _push_front(Py_ssize_t lst, int64_t x, int32_t[:, ::1] prev, int32_t[:, ::1] nxt,
                             int64_t[::1] head, int64_t[::1] tail) noexcept nogil:
    cdef int64_t h = head[lst]
    prev[lst, x] = -1
    nxt[lst, x] = <int32_t>h
    if h >= 0:
        prev[lst, h] = <int32_t>x
    else:
        tail[lst] = x
    head[lst] = x


cdef inline void _touch(Py_ssize_t lst, int64_t x, int32_t[:, ::1] prev, int32_t[:, ::1] nxt,
                        int64_t[::1] head, int64_t[::1] tail) noexcept nogil:
    if head[lst] != x:
        _unlink(lst, x, prev, nxt, head, tail)
        _push_front(lst, x, prev, nxt, head, tail)


cdef inline void _lru_insert(Py_ssize_t lst, int64_t x, int64_t cap, int32_t[:, ::1] prev,
                             int32_t[:, ::1] nxt, uint8_t[:, ::1] present, int64_t[::1] head,
                             int64_t[::1] tail, int64_t[::1] size) noexcept nogil:
    cdef int64_t y
    if size[lst] >= cap:
        y = tail[lst]
        _unlink(lst, y, prev, nxt, head, tail)
        present[lst, y] = 0
        size[lst] -= 1
    _push_front(lst, x, prev, nxt, head, tail)
    present[lst, x] = 1
    size[lst] += 1


def process(int32_t[::1] parent, int32_t[::1] leaf_node, int8_t[::1] policy,
            int64_t[::1] capacity, double[::1] insert_q, uint8_t[:, ::1] admit,
            int32_t[:, ::1] prev, int32_t[:, ::1] nxt, uint8_t[:, ::1] present,
            int64_t[::1] head, int64_t[::1] tail, int64_t[::1] size,
            int32_t[:, ::1] slots, uint64_t[::1] rng_state,
            int64_t[::1] content, int32_t[::1] leaf, int32_t[::1] cls, int32_t[::1] batch,
            int64_t[:, :, ::1] arrivals, int64_t[:, :, ::1] hits):
    """Serve a time-ordered batch of requests; counters are updated in place."""
    cdef Py_ssize_t n_nodes = parent.shape[0]
    cdef Py_ssize_t r, i, nd, v, node, depth
    cdef int64_t x, cap, j, y
    cdef int c, b, pol
    cdef uint8_t allowed
    cdef double q
    # callers guarantee paths of at most MAX_DEPTH caches
    cdef Py_ssize_t[64] path
    cdef uint8_t[64] gate
    with nogil:
        for r in range(content.shape[0]):
            x = content[r]
            c = cls[r]
            b = batch[r]
            node = leaf_node[leaf[r]]
            depth = 0
            while node >= 0:
                if b >= 0:
                    arrivals[node, b, c] += 1
                cap = capacity[node]
                if admit[node, c] and cap > 0:
                    pol = policy[node]
                    allowed = 1
                    if pol == TWOLRU_CODE:
                        v = n_nodes + node
                        allowed = present[v, x]
                        if allowed:
                            _touch(v, x, prev, nxt, head, tail)
                        else:
                            _lru_insert(v, x, cap, prev, nxt, present, head, tail, size)
                    if present[node, x]:
                        if pol != RANDOM_CODE:
                            _touch(node, x, prev, nxt, head, tail)
                        if b >= 0:
                            hits[node, b, c] += 1
                        break
                    path[depth] = node
                    gate[depth] = allowed
                    depth += 1
                node = parent[node]
            for i in range(depth):
                nd = path[i]
                if not gate[i]:
                    continue
                q = insert_q[nd]
                if q < 1.0 and _uniform(rng_state, nd) >= q:
                    continue
                cap = capacity[nd]
                if policy[nd] == RANDOM_CODE:
                    if size[nd] < cap:
                        j = size[nd]
                        size[nd] += 1
                    else:
                        j = <int64_t>(_uniform(rng_state, nd) * cap)
                        y = slots[nd, j]
                        present[nd, y] = 0
                    slots[nd, j] = <int32_t>x
                    prev[nd, x] = <int32_t>j
                    present[nd, x] = 1
                else:
                    _lru_insert(nd, x, cap, prev, nxt, present, head, tail, size)
