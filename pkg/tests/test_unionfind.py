from hypothesis import given, settings, strategies as st

from cadspot.unionfind import DisjointSet


def components(n, edges):
    """Reference via repeated BFS over an adjacency list."""
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, out = set(), []
    for s in range(n):
        if s in seen:
            continue
        comp, todo = [], [s]
        seen.add(s)
        while todo:
            v = todo.pop()
            comp.append(v)
            for w in adj[v] - seen:
                seen.add(w)
                todo.append(w)
        out.append(sorted(comp))
    return out


def test_basic():
    ds = DisjointSet(5)
    assert ds.union(3, 1) == 1
    assert ds.union(4, 3) == 1
    assert ds.find(4) == 1
    assert ds.groups() == [[0], [1, 3, 4], [2]]
    assert ds.labels().tolist() == [0, 1, 2, 1, 1]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 25).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40))))
def test_matches_bfs_and_ignores_order(case):
    n, edges = case
    a = DisjointSet(n)
    for e in edges:
        a.union(*e)
    b = DisjointSet(n)
    for x, y in reversed(edges):
        b.union(y, x)
    assert a.groups() == b.groups() == components(n, edges)
    assert all(a.find(i) == min(g) for g in a.groups() for i in g)
