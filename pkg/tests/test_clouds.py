import numpy as np
import pytest

from sinkbridge.clouds import EotProblem, PointCloud, squared_distances


def test_dim_and_len():
    pc = PointCloud(np.zeros((4, 3)))
    assert len(pc) == 4
    assert pc.dim == 3


def test_radius_is_max_norm():
    pc = PointCloud(np.array([[3.0, 4.0], [0.0, 1.0]]))
    assert pc.radius == pytest.approx(5.0)


def test_one_dimensional_input_promoted():
    pc = PointCloud(np.array([1.0, 2.0, 3.0]))
    assert pc.dim == 1
    assert len(pc) == 3


def test_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0.0]]))


def test_points_are_read_only():
    pc = PointCloud(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        pc.points[0, 0] = 1.0


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pc = PointCloud(rng.standard_normal((7, 3)))
    path = tmp_path / "cloud.csv"
    pc.to_csv(path)
    back = PointCloud.from_csv(path)
    np.testing.assert_array_equal(pc.points, back.points)


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    pc = PointCloud(rng.standard_normal((5, 4)))
    path = tmp_path / "cloud.sbpc"
    pc.to_binary(path)
    back = PointCloud.from_binary(path)
    np.testing.assert_array_equal(pc.points, back.points)


def test_binary_header_layout(tmp_path):
    pc = PointCloud(np.arange(6.0).reshape(3, 2))
    path = tmp_path / "cloud.sbpc"
    pc.to_binary(path)
    raw = path.read_bytes()
    assert raw[:4] == b"SBPC"
    assert int.from_bytes(raw[4:8], "little") == 3
    assert int.from_bytes(raw[8:12], "little") == 2
    assert len(raw) == 16 + 6 * 8
    # column-major: first three doubles are the first coordinate of each point
    col0 = np.frombuffer(raw, dtype="<f8", offset=16, count=3)
    np.testing.assert_array_equal(col0, pc.points[:, 0])


def test_binary_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(ValueError):
        PointCloud.from_binary(path)


def test_problem_validates_dims_and_epsilon():
    a = PointCloud(np.zeros((2, 2)))
    b = PointCloud(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        EotProblem(a, b, 1.0)
    with pytest.raises(ValueError):
        EotProblem(a, a, 0.0)


def test_problem_radius():
    a = PointCloud(np.array([[1.0, 0.0]]))
    b = PointCloud(np.array([[0.0, 2.0]]))
    assert EotProblem(a, b, 1.0).radius == pytest.approx(2.0)


def test_squared_distances_matches_naive():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((6, 3))
    y = rng.standard_normal((4, 3))
    sq = squared_distances(x, y)
    naive = np.array([[np.sum((xi - yj) ** 2) for yj in y] for xi in x])
    np.testing.assert_allclose(sq, naive, atol=1e-12)
    assert np.all(sq >= 0)
