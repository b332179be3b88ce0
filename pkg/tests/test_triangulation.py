import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trilogy.triangulation import (
    BadGluing,
    EulerMismatch,
    Flip,
    GroupoidWord,
    IllegalFlip,
    LabeledTriangulation,
    MappingClassLoop,
    MarkedTriangulation,
    PathNotFound,
    Permute,
    SurfaceSignature,
    WrongArcCount,
    build_triangulation,
    exchange_matrix,
    find_path,
    flip,
    from_triples,
    mutate_exchange,
    pentagon_word,
    permute,
    random_loop,
    random_word,
    verify_loop,
)

from conftest import FIXTURES, load_fixture


# exchange matrix of the four-punctured sphere fixture, from the corner oracle below
EPS_0_4 = np.array(
    [
        [0, -1, 1, 1, -1, 0],
        [1, 0, -1, -1, 0, 1],
        [-1, 1, 0, 0, 1, -1],
        [-1, 1, 0, 0, 1, -1],
        [1, 0, -1, -1, 0, 1],
        [0, -1, 1, 1, -1, 0],
    ]
)


def corner_oracle(triples, N):
    """Count ccw-consecutive side pairs corner by corner, straight from the triples."""
    a = np.zeros((N, N), dtype=int)
    for tri in triples:
        for s in range(3):
            a[tri[s] - 1, tri[(s + 1) % 3] - 1] += 1
    return a - a.T


def test_signature_counts():
    S = SurfaceSignature(1, 2)
    assert (S.arc_count(), S.triangle_count(), S.euler_characteristic()) == (6, 4, -2)
    assert SurfaceSignature(0, 4).arc_count() == 6
    with pytest.raises(ValueError):
        SurfaceSignature(0, 2)


def test_once_punctured_torus_warns():
    with pytest.warns(UserWarning):
        SurfaceSignature(1, 1)


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_json_roundtrip(name):
    T = load_fixture(name)
    again = LabeledTriangulation.from_json(json.loads(json.dumps(T.to_json())))
    assert again == T and hash(again) == hash(T)


def test_eps_0_4_matches_corner_oracle(sphere4):
    E = exchange_matrix(sphere4)
    assert np.array_equal(E.eps, corner_oracle(sphere4.triangles, 6))
    assert np.array_equal(E.eps, EPS_0_4)
    assert np.array_equal(E.valences.sum(axis=0), [3, 3, 3, 3])


def test_valences_torus(torus2):
    V = exchange_matrix(torus2).valences
    assert sorted(map(tuple, V.T.tolist())) == sorted([(2, 2, 2, 1, 1, 1), (0, 0, 0, 1, 1, 1)])
    # every arc has two ends
    assert np.array_equal(V.sum(axis=1), [2] * 6)


def test_exchange_properties(surface):
    E = exchange_matrix(surface)
    n = surface.signature.punctures
    assert np.array_equal(E.eps, -E.eps.T)
    assert not np.any(E.eps.dot(E.valences))
    assert np.linalg.matrix_rank(E.valences) == n
    assert E.eps.shape[0] - np.linalg.matrix_rank(E.eps) == n


def test_thrice_punctured_sphere_is_rigid():
    T = load_fixture("example_0_3")
    assert T.legal_flips() == []
    assert not np.any(exchange_matrix(T).eps)
    with pytest.raises(IllegalFlip):
        flip(T, 1)


def test_flip_is_an_involution(surface):
    for k in surface.legal_flips():
        assert flip(flip(surface, k), k) == surface


@pytest.mark.parametrize("name", ["example_0_4", "example_1_2"])
def test_flip_commutes_with_mutation(name, rng):
    T = load_fixture(name)
    checked = 0
    while checked < 120:
        k = int(rng.choice(T.legal_flips()))
        assert np.array_equal(exchange_matrix(flip(T, k)).eps, mutate_exchange(exchange_matrix(T).eps, k))
        T = flip(T, k)
        checked += 1


def test_mutation_rule_by_hand():
    eps = np.array([[0, 1, -1], [-1, 0, 1], [1, -1, 0]])
    got = mutate_exchange(eps, 1)
    # b'_ij = -b_ij if k in (i, j), else b_ij + (|b_ik| b_kj + b_ik |b_kj|) / 2
    want = np.array([[0, -1, 1], [1, 0, 0], [-1, 0, 0]])
    assert np.array_equal(got, want)
    assert np.array_equal(mutate_exchange(got, 1), eps)


def test_permutation_relabels_eps(sphere4):
    sigma = {1: 3, 3: 5, 5: 1}
    P = np.zeros((6, 6), dtype=int)
    for i in range(1, 7):
        P[sigma.get(i, i) - 1, i - 1] = 1
    assert np.array_equal(exchange_matrix(permute(sphere4, sigma)).eps, P @ EPS_0_4 @ P.T)


def test_euler_and_gluing_checks():
    S = SurfaceSignature(0, 4)
    with pytest.raises(WrongArcCount):
        from_triples(S, [(1, 2, 3), (1, 3, 2)])
    good = load_fixture("example_0_4")
    gl = good.gluing()
    labels = {a: i for i, (a, _) in zip(good.arcs, gl)}
    with pytest.raises(BadGluing):
        build_triangulation(S, 4, gl[:-1] + [(gl[-1][0], gl[0][0])], labels)
    # a torus with three punctures has the same arc count but another Euler characteristic
    with pytest.raises((EulerMismatch, WrongArcCount)):
        from_triples(SurfaceSignature(1, 2), [(1, 4, 2), (2, 6, 3), (3, 5, 1), (5, 6, 4)])


def test_pentagon_and_quadrilateral_close(torus2):
    eps = exchange_matrix(torus2).eps
    seen = 0
    for i, j in itertools.permutations(torus2.arcs, 2):
        try:
            if abs(eps[i - 1, j - 1]) == 1:
                w = pentagon_word(torus2, i, j)
            elif eps[i - 1, j - 1] == 0:
                w = GroupoidWord(torus2, [Flip(i), Flip(j), Flip(i), Flip(j)])
            else:
                continue
        except IllegalFlip:
            continue
        assert w.end() == torus2
        seen += 1
    assert seen > 0


def test_no_pentagon_on_the_fixture_sphere(sphere4):
    # every pentagon attempt runs into a self-folded triangle
    eps = exchange_matrix(sphere4).eps
    for i, j in itertools.permutations(sphere4.arcs, 2):
        if abs(eps[i - 1, j - 1]) == 1:
            with pytest.raises(IllegalFlip):
                pentagon_word(sphere4, i, j)


def test_word_inverse_and_simplify(sphere4, rng):
    w = random_word(sphere4, 6, rng)
    loop = w.then(w.inverse())
    assert loop.end() == sphere4
    assert len(loop.simplified()) == 0


def test_permute_helpers():
    p = Permute.from_cycles([[1, 2, 3]])
    assert p.mapping() == {1: 2, 2: 3, 3: 1}
    assert Permute.of({**p.mapping()}).cycles() == [[1, 2, 3]]
    q = p.inverse()
    assert {k: q.mapping()[v] for k, v in p.mapping().items()} == {1: 1, 2: 2, 3: 3}
    assert Permute.of({1: 1}).is_identity()


def test_ptolemy_flip_is_exact(sphere4, rng):
    m = MarkedTriangulation.generic(sphere4, rng)
    for k in sphere4.legal_flips():
        back = m.flip(k).flip(k)
        assert back.isotopy_key() == m.isotopy_key()


def test_find_path_roundtrip(sphere4, rng):
    for _ in range(10):
        w = random_word(sphere4, 4, rng)
        p = find_path(sphere4, w.end(), 6)
        assert p.end() == w.end() and len(p) <= len(w) + 1


def test_find_path_marked_mode_respects_isotopy(sphere4, rng):
    m = MarkedTriangulation.generic(sphere4, rng)
    w = random_word(sphere4, 5, rng)
    target = w.marked_trail(m)[-1]
    p = find_path(m, target, 5)
    assert p.marked_trail(m)[-1].isotopy_key() == target.isotopy_key()


def test_find_path_radius(sphere4, rng):
    m = MarkedTriangulation.generic(sphere4, rng)
    w = random_word(sphere4, 6, rng)
    with pytest.raises(PathNotFound) as err:
        find_path(m, w.marked_trail(m)[-1], 1)
    assert err.value.radius == 1


def test_loops(sphere4, rng):
    loop = random_loop(sphere4, 4, rng)
    assert verify_loop(loop)
    assert verify_loop(loop.inverse()) and verify_loop(loop.then(loop))
    again = MappingClassLoop.from_json(json.loads(json.dumps(loop.to_json())))
    assert again.word.moves == loop.word.moves
    # a closing map that moves one triangle onto another with different labels is rejected
    bad = {(t, s): ((t + 1) % 4, s) for t in range(4) for s in range(3)}
    assert not verify_loop(MappingClassLoop(loop.word, bad))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=12))
def test_random_flip_sequences_keep_invariants(seq):
    T = load_fixture("example_1_2")
    for k in seq:
        if k in T.legal_flips():
            T = flip(T, k)
    E = exchange_matrix(T)
    assert np.array_equal(E.eps, corner_oracle(T.triangles, 6))
    assert not np.any(E.eps.dot(E.valences))
    assert T.to_json() == LabeledTriangulation.from_json(T.to_json()).to_json()
