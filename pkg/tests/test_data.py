import gzip
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smtnet.data import (
    Dataset,
    PcaTransform,
    evaluate_accuracy,
    format_accuracy_table,
    load_csv,
    load_idx,
    load_pca,
    pca_fit,
    pca_project,
    pca_reconstruct,
    save_csv,
    save_pca,
    train_test_split,
    write_accuracy_csv,
    write_idx,
)
from smtnet.network import Affine, DimensionError, Network

F = Fraction


def dataset(rows, labels=None):
    rows = tuple(tuple(F(v) for v in r) for r in rows)
    return Dataset(rows, tuple(labels or [0] * len(rows)))


# -- PCA ------------------------------------------------------------------------------


def jacobi_eigen(a, sweeps=100):
    """Cyclic Jacobi rotations on a symmetric matrix (pure Python)."""
    n = len(a)
    a = [row[:] for row in a]
    v = [[float(i == j) for j in range(n)] for i in range(n)]
    for _ in range(sweeps):
        off = sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j)
        if off < 1e-30:
            break
        for p in range(n):
            for q in range(p + 1, n):
                if abs(a[p][q]) < 1e-300:
                    continue
                theta = (a[q][q] - a[p][p]) / (2 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p], a[k][q] = c * akp - s * akq, s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k], a[q][k] = c * apk - s * aqk, s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p], v[k][q] = c * vkp - s * vkq, s * vkp + c * vkq
    pairs = sorted(((a[i][i], [v[k][i] for k in range(n)]) for i in range(n)), key=lambda p: -p[0])
    return pairs


def oriented(vec):
    i = max(range(len(vec)), key=lambda j: (abs(vec[j]) - 1e-12 * j))
    return [-x for x in vec] if vec[i] < 0 else vec


def test_pca_line():
    t = pca_fit(dataset([(0, 0), (1, 1), (2, 2), (3, 3)]), 1)
    (c,) = t.components
    assert all(abs(float(v) - 1 / math.sqrt(2)) < 1e-9 for v in c)
    x = (F(5, 2), F(5, 2))
    assert all(abs(float(a - b)) < 1e-9 for a, b in zip(pca_reconstruct(t, pca_project(t, x)), x))


def test_pca_full_rank_lossless():
    rng = random.Random(1)
    data = dataset([[rng.randint(-9, 9) for _ in range(4)] for _ in range(12)])
    t = pca_fit(data, 4)
    for x in data.features:
        back = pca_reconstruct(t, pca_project(t, x))
        assert max(abs(float(a - b)) for a, b in zip(back, x)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_pca_matches_jacobi_oracle(seed):
    rng = random.Random(seed)
    rows = [[rng.uniform(-3, 3) for _ in range(3)] for _ in range(5)]
    X = np.array(rows)
    C = np.cov(X.T, bias=True).tolist()
    pairs = jacobi_eigen(C)
    t = pca_fit(Dataset(tuple(tuple(F(v) for v in r) for r in rows), (0,) * 5), 3)
    for (val, vec), comp in zip(pairs, t.components):
        expected = oriented(vec)
        assert max(abs(float(c) - e) for c, e in zip(comp, expected)) < 1e-9
    # exact rational mean of the float data
    assert all(abs(float(m) - e) < 1e-12 for m, e in zip(t.mean, X.mean(axis=0)))


def test_pca_rank_deficient_padding():
    t = pca_fit(dataset([(0, 0, 1), (1, 1, 1), (2, 2, 1)]), 3)
    assert t.rank == 1 and t.padded
    assert t.components[1] == (0, 0, 0) and t.components[2] == (0, 0, 0)


def test_pca_arguments():
    with pytest.raises(ValueError):
        pca_fit(dataset([(0, 0), (1, 1)]), 3)
    with pytest.raises(ValueError):
        pca_fit(dataset([(0, 0)]), 1)
    t = pca_fit(dataset([(0, 0), (1, 2)]), 1)
    with pytest.raises(DimensionError):
        pca_project(t, [1])
    with pytest.raises(DimensionError):
        pca_reconstruct(t, [1, 2])


def test_project_mean_is_zero_and_exact_orthonormal_round_trip():
    t = PcaTransform((F(1), F(2)), ((F(3, 5), F(4, 5)), (F(-4, 5), F(3, 5))))
    assert pca_project(t, t.mean) == (0, 0)
    x = (F(7, 3), F(-1, 9))
    assert pca_reconstruct(t, pca_project(t, x)) == x


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.fractions(max_denominator=20), min_size=3, max_size=3),
    st.lists(st.fractions(max_denominator=20), min_size=3, max_size=3),
    st.fractions(max_denominator=20),
)
def test_projection_is_affine(x, y, a):
    t = PcaTransform((F(1), F(0), F(-2)), ((F(1, 3), F(2, 3), F(2, 3)), (F(2, 3), F(1, 3), F(-2, 3))))
    px, py = pca_project(t, x), pca_project(t, y)
    mixed = pca_project(t, [a * u + (1 - a) * v for u, v in zip(x, y)])
    assert mixed == tuple(a * u + (1 - a) * v for u, v in zip(px, py))


def test_reconstruct_perturbation_moves_along_components():
    t = PcaTransform((F(0), F(0)), ((F(3, 5), F(4, 5)),))
    base = pca_reconstruct(t, [F(1)])
    moved = pca_reconstruct(t, [F(1) + F(1, 10)])
    assert tuple(b - a for a, b in zip(base, moved)) == (F(3, 50), F(4, 50))


def test_pca_save_load(tmp_path):
    t = pca_fit(dataset([(0, 1), (2, 5), (3, 2)]), 2)
    save_pca(t, tmp_path / "p.json")
    assert load_pca(tmp_path / "p.json") == t


# -- accuracy ------------------------------------------------------------------------


def two_class_net(labels=None):
    # identity on R^2: class is the larger coordinate
    return Network("id2", [Affine([[F(1), F(0)], [F(0), F(1)]], [F(0), F(0)])], labels)


def test_accuracy_seventy_percent():
    rows = [(2, 0), (3, 1), (5, 4), (1, 0), (0, 2), (1, 3), (0, 9), (4, 1), (0, 1), (2, 1)]
    labels = [0, 0, 0, 0, 1, 1, 1, 1, 0, 1]  # the last three rows are mislabeled
    table = evaluate_accuracy(two_class_net(), dataset(rows, labels))
    assert table.overall == pytest.approx(70.0)
    assert table.total_correct == sum(table.correct) == 7
    assert table.counts == (5, 5)


def test_accuracy_perfect_and_absent_class():
    net = Network("id3", [Affine([[F(1), F(0)], [F(0), F(1)], [F(-1), F(-1)]], [F(0)] * 3)], ["a", "b", "c"])
    table = evaluate_accuracy(net, dataset([(1, 0), (0, 1)], [0, 1]))
    assert table.overall == 100.0
    assert table.accuracy(2) is None
    text = format_accuracy_table({"Original": table, "Modified": table})
    assert "n/a (0 samples)" in text
    assert "'a'" in text and "Overall" in text and "100.0" in text


def test_accuracy_display_order_and_csv(tmp_path):
    net = two_class_net(["one", "two"])
    table = evaluate_accuracy(net, dataset([(1, 0), (0, 1), (0, 2)], [0, 1, 0]), order=[1, 0])
    assert table.class_names == ("two", "one")
    assert table.accuracy(1) == 50.0
    write_accuracy_csv({"Original": table}, tmp_path / "acc.csv")
    lines = (tmp_path / "acc.csv").read_text().splitlines()
    assert lines[0] == "class,Original_accuracy,Original_correct,Original_count"
    assert lines[2] == "one,50.0,1,2"


def test_accuracy_dimension_mismatch():
    with pytest.raises(DimensionError):
        evaluate_accuracy(two_class_net(), dataset([(1, 2, 3)]))


# -- files ---------------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    data = dataset([(F(1, 3), F(-5, 4)), (F(2), F(0))], [1, 0])
    save_csv(data, tmp_path / "d.csv")
    text = (tmp_path / "d.csv").read_text()
    assert "1/3" in text and "-1.25" in text
    assert load_csv(tmp_path / "d.csv") == data


def test_csv_bad_label(tmp_path):
    (tmp_path / "d.csv").write_text("1,2\nx,3\n")
    with pytest.raises(ValueError, match=":2"):
        load_csv(tmp_path / "d.csv")


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, gz):
    images = [[0, 255, 51, 1], [128, 0, 0, 7]]
    write_idx(images, [3, 9], tmp_path / "img", tmp_path / "lab", (2, 2))
    img, lab = tmp_path / "img", tmp_path / "lab"
    if gz:
        for p in (img, lab):
            p.with_name(p.name + ".gz").write_bytes(gzip.compress(p.read_bytes()))
        img, lab = img.with_name("img.gz"), lab.with_name("lab.gz")
    data = load_idx(img, lab)
    assert data.labels == (3, 9)
    assert data.features[0] == (0, 1, F(1, 5), F(1, 255))


def test_idx_bad_magic(tmp_path):
    (tmp_path / "img").write_bytes(b"\x00\x00\x08\x01" + b"\x00" * 12)
    (tmp_path / "lab").write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x00")
    with pytest.raises(ValueError):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_split_is_deterministic_and_disjoint():
    data = dataset([(i,) for i in range(20)], [i % 2 for i in range(20)])
    a1, b1 = train_test_split(data, 0.25, seed=3)
    a2, b2 = train_test_split(data, 0.25, seed=3)
    assert (a1, b1) == (a2, b2)
    assert len(b1) == 5
    assert not set(a1.features) & set(b1.features)
