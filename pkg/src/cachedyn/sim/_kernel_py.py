"""Pure-Python request kernel; the reference for the compiled twin.

Both kernels mutate the same state arrays and must agree bit for bit.

List layout: list ``i < n_nodes`` is the cache of node ``i``; list
``n_nodes + i`` is the ID-only front list of a 2-LRU node.  LRU lists are
doubly linked through ``prev``/``nxt`` with ``-1`` as terminator and the
most recent entry at ``head``.  RANDOM nodes keep their contents in
``slots`` and reuse ``prev`` as the slot index of each content.
"""

LRU_CODE = 0
QLRU_CODE = 1
RANDOM_CODE = 2
TWOLRU_CODE = 3

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO53 = 1.0 / 9007199254740992.0


def _uniform(rng_state, node):
    s = (int(rng_state[node]) + _GOLDEN) & _MASK
    rng_state[node] = s
    z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return (z >> 11) * _TWO53


def _unlink(lst, x, prev, nxt, head, tail):
    p = prev[lst, x]
    n = nxt[lst, x]
    if p >= 0:
        nxt[lst, p] = n
    else:
        head[lst] = n
    if n >= 0:
        prev[lst, n] = p
    else:
        tail[lst] = p


def _push_front(lst, x, prev, nxt, head, tail):
    h = head[lst]
    prev[lst, x] = -1
    nxt[lst, x] = h
    if h >= 0:
        prev[lst, h] = x
    else:
        tail[lst] = x
    head[lst] = x


def _touch(lst, x, prev, nxt, head, tail):
    if head[lst] != x:
        _unlink(lst, x, prev, nxt, head, tail)
        _push_front(lst, x, prev, nxt, head, tail)


def _lru_insert(lst, x, cap, prev, nxt, present, head, tail, size):
    if size[lst] >= cap:
        y = tail[lst]
        _unlink(lst, y, prev, nxt, head, tail)
        present[lst, y] = 0
        size[lst] -= 1
    _push_front(lst, x, prev, nxt, head, tail)
    present[lst, x] = 1
    size[lst] += 1


def process(parent, leaf_node, policy, capacity, insert_q, admit,
            prev, nxt, present, head, tail, size, slots, rng_state,
            content, leaf, cls, batch, arrivals, hits):
    """Serve a time-ordered batch of requests; counters are updated in place."""
    n_nodes = parent.shape[0]
    path = [0] * n_nodes
    gate = [0] * n_nodes
    for r in range(content.shape[0]):
        x = int(content[r])
        c = int(cls[r])
        b = int(batch[r])
        node = int(leaf_node[leaf[r]])
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
            node = int(parent[node])
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
                    j = int(_uniform(rng_state, nd) * cap)
                    y = slots[nd, j]
                    present[nd, y] = 0
                slots[nd, j] = x
                prev[nd, x] = j
                present[nd, x] = 1
            else:
                _lru_insert(nd, x, cap, prev, nxt, present, head, tail, size)
