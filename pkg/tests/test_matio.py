import numpy as np
import pytest

from rwmpc.matio import MatFormatError, load_matrices, save_matrices


def test_round_trip_lossless(tmp_path):
    rng = np.random.default_rng(3)
    mats = {
        "A": rng.standard_normal((4, 4)) * 10 ** rng.integers(-8, 8, (4, 4)),
        "b_vec": rng.standard_normal((1, 7)),
        "scalar": np.array([[0.75e-3]]),
    }
    path = tmp_path / "m.mat"
    save_matrices(path, mats)
    loaded = load_matrices(path)
    assert set(loaded) == set(mats)
    for name in mats:
        assert np.array_equal(loaded[name], mats[name])


def test_rejects_bad_header(tmp_path):
    path = tmp_path / "m.mat"
    path.write_text("something else\n")
    with pytest.raises(MatFormatError):
        load_matrices(path)


def test_rejects_truncated_rows(tmp_path):
    path = tmp_path / "m.mat"
    path.write_text("rwmpc-mat 1\nmatrix A 2 2\n1 2\n")
    with pytest.raises(MatFormatError, match="truncated"):
        load_matrices(path)


def test_rejects_wrong_width(tmp_path):
    path = tmp_path / "m.mat"
    path.write_text("rwmpc-mat 1\nmatrix A 1 3\n1 2\n")
    with pytest.raises(MatFormatError, match="expected 3"):
        load_matrices(path)


def test_rejects_bad_name(tmp_path):
    with pytest.raises(MatFormatError, match="invalid matrix name"):
        save_matrices(tmp_path / "m.mat", {"1bad": np.eye(2)})


def test_comments_and_blank_lines_ignored(tmp_path):
    path = tmp_path / "m.mat"
    path.write_text("rwmpc-mat 1\n\n# note\nmatrix A 1 1\n# data\n2.5\n")
    assert load_matrices(path)["A"][0, 0] == 2.5
