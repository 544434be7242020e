import numpy as np
import pytest

from pairgossip.data import (
    SyntheticMixtureSpec, auc_toy, gaussian_points, load_csv, load_csv_report, mixture_means, parity_labels,
    synth_mixture,
)
from pairgossip.errors import DataError, ParameterError


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_missing_rows_are_dropped_and_labels_mapped(tmp_path):
    p = _write(tmp_path, "1000,5,1,1,2\n1001,3,?,2,4\n1002,4,4,1,4\n")
    data, rep = load_csv_report(p)
    assert (rep.loaded, rep.dropped, rep.dropped_rows) == (2, 1, [2])
    assert data.points.tolist() == [[5, 1, 1], [4, 4, 1]]
    assert data.labels.tolist() == [-1, 1]


def test_keep_id_as_feature(tmp_path):
    p = _write(tmp_path, "1000,5,1,2\n1001,3,2,4\n")
    assert load_csv(p, keep_id_as_feature=True).d == 3
    assert load_csv(p).d == 2


def test_header_and_identity_labels(tmp_path):
    p = _write(tmp_path, "a,b,y\n0.5,1,7\n1.5,2,8\n")
    data = load_csv(p, has_header=True, id_column=None, label_map=None)
    assert data.labels.tolist() == [7, 8]
    assert data.points.tolist() == [[0.5, 1], [1.5, 2]]


@pytest.mark.parametrize("text,match", [
    ("a,b,y\n", "no data rows"),
    ("", "no data rows"),
    ("1,2,x\n", "label column"),
    ("1,abc,2\n", "column 2"),
    ("1,2,2\n1,2\n", "expected 3 columns"),
    ("1,2,3\n", "not in label map"),
    ("1,?,2\n", "every row was dropped"),
])
def test_data_errors_name_the_location(tmp_path, text, match):
    p = _write(tmp_path, text)
    with pytest.raises(DataError, match=match):
        load_csv(p, has_header=text.startswith("a"))


def test_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv")


def test_column_out_of_range(tmp_path):
    p = _write(tmp_path, "1,2,2\n")
    with pytest.raises(ParameterError):
        load_csv(p, label_column=5)


def test_mixture_defaults():
    spec = SyntheticMixtureSpec()
    data = synth_mixture(spec)
    assert data.points.shape == (1000, 40)
    assert np.bincount(data.labels).tolist() == [100] * 10
    means = mixture_means(spec)
    assert np.all(means[:, 5:] == 0)
    assert np.linalg.matrix_rank(means) == 5


def test_mixture_is_seeded():
    a = synth_mixture(SyntheticMixtureSpec(n=50, seed=3))
    b = synth_mixture(SyntheticMixtureSpec(n=50, seed=3))
    c = synth_mixture(SyntheticMixtureSpec(n=50, seed=4))
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def test_mixture_validation():
    with pytest.raises(ParameterError):
        SyntheticMixtureSpec(subspace=50)
    with pytest.raises(ParameterError):
        SyntheticMixtureSpec(variance=0)


def test_parity_labels():
    assert parity_labels([0, 1, 2, 9]).tolist() == [1, -1, 1, -1]


def test_auc_toy_shape_and_labels():
    data = auc_toy(7, dim=3, shift=0.5, seed=1)
    assert data.points.shape == (7, 3)
    assert data.labels.tolist() == [1, -1, 1, -1, 1, -1, 1]
    assert np.array_equal(auc_toy(7, 3, 0.5, 1).points, data.points)
    with pytest.raises(ParameterError):
        auc_toy(1)


def test_gaussian_points():
    assert gaussian_points(4, 2, seed=0).points.shape == (4, 2)
    with pytest.raises(ParameterError):
        gaussian_points(0)
