import itertools

import numpy as np
import pytest

import halluc


def smoke_points():
    return [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 3.0])]


def test_version_and_models():
    assert halluc.__version__
    f = halluc.gaussian_meanpool()
    assert f.kind == "gaussian_meanpool"
    assert tuple(f.input_shape) == (28, 28)
    assert tuple(f.output_shape) == (12, 12)
    m = halluc.masked_fft(16, 4, 2)
    assert m.apply(np.zeros((16, 16))).shape == tuple(m.output_shape)


def test_analyze_matches_brute_force():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 5))
    f = halluc.matrix_model(a)
    xs = [rng.normal(size=5) for _ in range(25)]
    ys = [a @ xs[i] + 0.2 * rng.normal(size=2) for i in range(8)]
    eps = 0.8
    report = halluc.analyze(xs, ys, eps, model=f)
    best = 0.0
    for k, y in enumerate(ys):
        members = [n for n, x in enumerate(xs) if np.linalg.norm(a @ x - y) < eps]
        column = report["columns"][k]
        assert column["members"] == members
        diam = max((np.linalg.norm(xs[i] - xs[j]) for i, j in itertools.combinations(members, 2)), default=0.0)
        assert column["diameter"] == pytest.approx(diam, rel=1e-12, abs=0.0)
        best = max(best, diam)
    assert report["kersize"] == pytest.approx(best, rel=1e-12)


def test_tuple_mode_and_errors():
    xs = smoke_points()
    fxs = [x[:1] for x in xs]
    report = halluc.analyze(xs, [np.array([0.0])], 0.5, fxs=fxs)
    assert report["kersize"] == 3.0
    with pytest.raises(ValueError):
        halluc.analyze(xs, [np.array([0.0])], 0.5)
    with pytest.raises(ValueError):
        halluc.analyze(xs, [np.array([0.0])], -1.0, fxs=fxs)


def test_eta_interval_perfect_and_identity():
    f = halluc.first_coordinate_model()
    noise = [np.array([e]) for e in (-0.4, -0.2, 0.0, 0.2, 0.4)]
    target = np.array([0.0, 3.0])
    perfect = halluc.eta_interval(f, 0.5, np.zeros(2), target, noise, lambda y: target, etas=[1.0])
    assert perfect["eta_min"] == 0.0
    assert perfect["eta_max"] == 3.0
    assert perfect["verdict"] == "hallucinates"
    assert perfect["eta_checks"][0]["transfer"] is True
    assert perfect["eta_checks"][0]["iff"]["cond_i"] and perfect["eta_checks"][0]["iff"]["cond_ii"]
    identity = halluc.eta_interval(f, 0.5, np.zeros(2), target, noise, lambda y: np.zeros(2))
    assert identity["verdict"] == "does_not"


def test_nullspace_projection_masked_fft():
    rng = np.random.default_rng(5)
    m = halluc.masked_fft(32, 4, 4)
    v = rng.normal(size=(32, 32))
    p = m.nullspace_project(v)
    assert np.linalg.norm(m.apply(p)) <= 1e-12 * np.linalg.norm(v)
    # The projector is idempotent.
    assert np.linalg.norm(m.nullspace_project(p) - p) <= 1e-12 * np.linalg.norm(v)


def test_paste_keeps_measurements_for_kernel_details():
    rng = np.random.default_rng(7)
    m = halluc.masked_fft(16, 4, 2)
    z = rng.normal(size=(16, 16))
    src = rng.normal(size=(16, 16))
    out = halluc.paste(z, m.apply(z), src, [4, 4], [10, 10], m, 0.5, taper=0)
    assert out["pasted"].shape == (16, 16)
    changed = np.argwhere(np.abs(out["pasted"] - z) > 0)
    assert all(4 <= r < 10 and 4 <= c < 10 for r, c in changed)
    assert out["z_consistent"]


def test_converge_from_below():
    table = halluc.converge(schedule=[100, 1000, 5000], probes=[0.5], epsilon=0.2, seed=1)
    reference = table["reference"][0]
    assert reference == pytest.approx(2.0 * np.sqrt(1.0 - 0.3**2), rel=1e-12)
    values = [row["diameters"][0] for row in table["rows"]]
    assert all(v <= reference for v in values)
    assert values == sorted(values)
    assert table["from_below"] and table["monotone"]


def test_patchify_and_htk_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    hr = rng.normal(size=(4, 32, 32))
    f = halluc.bilinear_aa(4, 32, 4)
    xs, fxs, ids = halluc.patchify([hr], [f.apply(hr)])
    assert len(xs) == 4
    assert ids[3] == "img0_r1_c1"
    assert np.array_equal(xs[3], hr[:, 16:32, 16:32])
    path = str(tmp_path / "t.htk")
    halluc.htk_save(path, hr)
    assert np.array_equal(halluc.htk_load(path), hr)
    c = hr[0] + 1j * hr[1]
    halluc.htk_save(path, c)
    assert np.array_equal(halluc.htk_load(path), c)


def test_seminorms():
    d = np.array([1.0, -2.0, 3.0, -4.0])
    assert halluc.seminorm(d, "l1") == 10.0
    assert halluc.seminorm(d, "linf") == 4.0
    assert halluc.seminorm(d, "l1/n") == 2.5
    with pytest.raises(ValueError):
        halluc.seminorm(d, "l0.5x")
