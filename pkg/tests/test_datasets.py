import numpy as np
import pytest

from dnn_nsr import datasets, numeric
from dnn_nsr.errors import FormatError, ParseError, ValidationError
from oracles import eq_synthetic


def test_synthetic_matches_scalar_formula():
    rng = numeric.make_rng(4)
    a, b = rng.standard_normal((2, 1)), rng.standard_normal((1, 2))
    assert np.allclose(datasets.synthetic_from_factors(a, b), eq_synthetic(a, b), atol=1e-13)


def test_gen_synthetic_uses_seeded_factors():
    rng = numeric.make_rng(11)
    a = rng.standard_normal((6, 2))
    b = rng.standard_normal((2, 5))
    assert np.array_equal(datasets.gen_synthetic(6, 5, 2, 11), datasets.synthetic_from_factors(a, b))


def test_gen_synthetic_statistics_and_range():
    rng = numeric.make_rng(0)
    ab = rng.standard_normal((300, 10)) @ rng.standard_normal((10, 200))
    assert abs(ab.mean()) < 0.05
    x = datasets.gen_synthetic(300, 200, 10, 0)
    inner = x - ab
    assert np.all(np.abs(inner) < 1.71)
    assert np.array_equal(x, datasets.gen_synthetic(300, 200, 10, 0))
    with pytest.raises(ValueError):
        datasets.gen_synthetic(5, 4, 4, 0)


def test_apply_mask_exact_count_and_reproducible():
    x = datasets.gen_synthetic(300, 200, 10, 1)
    obs = datasets.apply_mask(x, 0.5, 3)
    assert obs.omega_count == 30000
    assert np.all(obs.data[obs.mask == 0] == 0)
    assert np.array_equal(obs.data[obs.mask == 1], x[obs.mask == 1])
    assert np.array_equal(obs.mask, datasets.apply_mask(x, 0.5, 3).mask)
    assert not np.array_equal(obs.mask, datasets.apply_mask(x, 0.5, 4).mask)
    full = datasets.apply_mask(x, 0.0, 3)
    assert full.omega_count == x.size and np.array_equal(full.data, x)


def test_apply_mask_rejects_bad_rates():
    x = np.ones((2, 2))
    for rho in (1.0, -0.1, 0.9):
        with pytest.raises(ValueError):
            datasets.apply_mask(x, rho, 0)


def test_observed_matrix_invariants():
    with pytest.raises(ValueError):
        datasets.ObservedMatrix(np.ones((2, 2)), np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        datasets.ObservedMatrix(np.zeros((2, 2)), np.full((2, 2), 0.5))


def test_image_matrix_conversion():
    red = np.array([[[255, 0, 0]]], dtype=np.uint8)
    assert np.array_equal(datasets.image_to_matrix(red), [[1.0, 0.0, 0.0]])
    black = np.zeros((3, 4, 3), dtype=np.uint8)
    assert not datasets.image_to_matrix(black).any()
    img = numeric.make_rng(0).integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
    mat = datasets.image_to_matrix(img)
    assert mat.shape == (5, 21)
    assert np.array_equal(mat[:, 7:14], img[:, :, 1] / 255.0)
    assert np.array_equal(datasets.matrix_to_image(mat, img.shape), img)


def test_matrix_to_image_clamps_and_rounds_half_up():
    mat = np.array([[-0.5, 2.0, 0.5 / 255.0]])
    assert datasets.matrix_to_image(mat).tolist() == [[[0, 255, 1]]]


def test_bad_rasters():
    with pytest.raises(FormatError):
        datasets.image_to_matrix(np.zeros((3, 3)))
    with pytest.raises(FormatError):
        datasets.image_to_matrix(np.full((2, 2, 3), 0.5))
    with pytest.raises(FormatError):
        datasets.matrix_to_image(np.zeros((2, 5)))


def test_png_roundtrip(tmp_path):
    img = numeric.make_rng(1).integers(0, 256, size=(6, 5, 3)).astype(np.uint8)
    path = str(tmp_path / "a.png")
    datasets.save_image(img, path)
    assert np.array_equal(datasets.load_image(path), img)
    (tmp_path / "bad.png").write_bytes(b"not a png")
    with pytest.raises(FormatError):
        datasets.load_image(str(tmp_path / "bad.png"))


def test_matrix_csv_roundtrip(tmp_path):
    mat = numeric.make_rng(2).standard_normal((4, 3)) * 1e5
    path = str(tmp_path / "m.csv")
    datasets.save_matrix_csv(mat, path)
    assert np.array_equal(datasets.load_matrix_csv(path), mat)
    (tmp_path / "bad.csv").write_text("1,2\nx,3\n")
    with pytest.raises(FormatError):
        datasets.load_matrix_csv(str(tmp_path / "bad.csv"))


def test_bundled_image():
    from dnn_nsr import sample_image_path

    img = datasets.load_image(sample_image_path())
    assert img.shape == (64, 64, 3) and img.dtype == np.uint8


def _write(tmp_path, text, name="u.data"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_movielens_fixture_line(tmp_path):
    t = datasets.parse_movielens(_write(tmp_path, "1\t1\t5\t874965758\n"), datasets.ML100K)
    assert (t.rows, t.cols) == (943, 1682)
    assert t.triples() == [(0, 0, 5.0)]


def test_parse_movielens_colons_and_empty(tmp_path):
    t = datasets.parse_movielens(_write(tmp_path, "6040::3952::3::978300760\n"), datasets.ML1M)
    assert (t.rows, t.cols) == (6040, 3952) and t.triples() == [(6039, 3951, 3.0)]
    e = datasets.parse_movielens(_write(tmp_path, "", "e.data"), datasets.ML100K)
    assert len(e) == 0 and (e.rows, e.cols) == (943, 1682)


@pytest.mark.parametrize("text,exc,line", [
    ("1\t1\t5\t1\n2\t2\n", ParseError, 2),
    ("1\t1\tfive\t1\n", ParseError, 1),
    ("1\t1\t5\t1\n1\t1\t4\t2\n", ParseError, 2),
    ("944\t1\t5\t1\n", ParseError, 1),
    ("1\t1\t6\t1\n", ValidationError, None),
])
def test_parse_movielens_errors(tmp_path, text, exc, line):
    with pytest.raises(exc) as info:
        datasets.parse_movielens(_write(tmp_path, text), datasets.ML100K)
    if line is not None:
        assert info.value.line == line


def test_split_ratings_partition(tmp_path):
    rng = numeric.make_rng(3)
    pairs = rng.choice(943 * 1682, size=1000, replace=False)
    lines = ["%d\t%d\t%d\t0" % (p // 1682 + 1, p % 1682 + 1, rng.integers(1, 6)) for p in pairs]
    table = datasets.parse_movielens(_write(tmp_path, "\n".join(lines)), datasets.ML100K)
    train, (u, i, r) = datasets.split_ratings(table, 0.7, 5)
    assert train.omega_count == 700 and u.size == 300
    tr = set(zip(*np.nonzero(train.mask)))
    te = set(zip(u.tolist(), i.tolist()))
    assert not tr & te
    assert tr | te == set(zip(table.users.tolist(), table.items.tolist()))
    assert np.array_equal(train.data[u, i], np.zeros(300))
    full, (u1, _, _) = datasets.split_ratings(table, 1.0, 5)
    assert u1.size == 0 and full.omega_count == 1000
