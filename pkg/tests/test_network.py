import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensenet.network import (NetworkError, build_network, load_network, save_network,
                              validate_connected)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_edge_list_gives_three_nodes(tmp_path):
    net = load_network(write(tmp_path, "g.csv", "0,1\n1,2\n"))
    assert (net.n_nodes, net.n_links) == (3, 2)


def test_csv_comments_and_blank_lines(tmp_path):
    net = load_network(write(tmp_path, "g.csv", "# header\n\n5,7  # trailing\n7,9\n"))
    assert net.n_nodes == 3
    assert net.original_ids == {0: 5, 1: 7, 2: 9}


def test_json_duplicate_link_rejected(tmp_path):
    text = json.dumps({"nodes": [{"id": 0}, {"id": 1}],
                       "links": [{"source": 0, "target": 1}, {"source": 0, "target": 1}]})
    with pytest.raises(NetworkError, match="duplicate link"):
        load_network(write(tmp_path, "g.json", text))


def test_json_reverse_duplicate_rejected():
    with pytest.raises(NetworkError, match="duplicate link"):
        build_network([0, 1], [(0, 1), (1, 0)])


def test_json_disconnected_rejected(tmp_path):
    text = json.dumps({"nodes": [{"id": 0}, {"id": 1}, {"id": 2}],
                       "links": [{"source": 0, "target": 1}]})
    with pytest.raises(NetworkError, match="disconnected"):
        load_network(write(tmp_path, "g.json", text))


def test_dangling_endpoint_named():
    with pytest.raises(NetworkError, match="dangling endpoint 4"):
        build_network([0, 1], [(0, 4)])


def test_self_loop_and_bad_ids():
    with pytest.raises(NetworkError, match="self-loop"):
        build_network([0, 1], [(0, 1), (1, 1)])
    with pytest.raises(NetworkError, match="non-negative"):
        build_network([-1, 0], [(-1, 0)])
    with pytest.raises(NetworkError, match="duplicate node"):
        build_network([0, 0], [])


def test_parse_errors(tmp_path):
    with pytest.raises(NetworkError, match="JSON parse error"):
        load_network(write(tmp_path, "g.json", "{not json"))
    with pytest.raises(NetworkError, match="line 1"):
        load_network(write(tmp_path, "g.csv", "0,1,2\n"))
    with pytest.raises(NetworkError, match="non-integer"):
        load_network(write(tmp_path, "g.csv", "a,b\n"))


def test_validate_connected_cases():
    assert validate_connected(build_network([0, 1, 2], [(0, 1), (1, 2)]))
    two = build_network([0, 1, 2, 3], [(0, 1), (2, 3)], require_connected=False)
    assert not validate_connected(two)
    assert validate_connected(build_network([0], []))


def test_positions_and_attributes(tmp_path):
    text = json.dumps({"nodes": [{"id": 3, "pos": [1, 2], "attrs": {"name": "a"}},
                                 {"id": 8, "pos": [0, 0, 5]}],
                       "links": [{"source": 3, "target": 8}]})
    net = load_network(write(tmp_path, "g.json", text))
    assert net.nodes[0].position == (1.0, 2.0, 0.0)
    assert net.nodes[0].attributes == {"name": "a"}
    assert net.has_positions()


def test_non_finite_position_rejected():
    with pytest.raises(NetworkError, match="invalid position"):
        build_network([0, 1], [(0, 1)], positions={0: (float("nan"), 0, 0)})


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.data())
def test_roundtrip_preserves_graph(tmp_path_factory, n, data):
    ids = data.draw(st.lists(st.integers(0, 1000), min_size=n, max_size=n, unique=True))
    parents = [data.draw(st.integers(0, i - 1)) for i in range(1, n)]
    edges = [(ids[p], ids[i]) for i, p in zip(range(1, n), parents)]
    net = build_network(ids, edges)
    assert sorted(net.original_ids) == list(range(n))
    assert sorted(net.original_ids.values()) == sorted(ids)
    path = tmp_path_factory.mktemp("rt") / "net.json"
    save_network(net, path)
    back = load_network(path)
    assert back.n_nodes == net.n_nodes and back.n_links == net.n_links
    assert back.adjacency() == net.adjacency()
