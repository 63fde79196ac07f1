import math

import numpy as np
import pytest

import nspl


def test_record_size_and_integrals():
    assert nspl.PrimitiveConfig().record_size == 99
    p = nspl.Primitive()
    params = p.params
    assert len(params) == 99
    params[10:34] = list(np.linspace(-1, 1, 24))  # W1
    params[42:50] = [0.3] * 8  # W2
    params[50] = 0.5  # b2
    p.params = params
    ray = nspl.Ray([-2.0, 0.1, 0.0], [1.0, 0.0, 0.0])
    hit = nspl.intersect(p.geometry, ray)
    assert hit is not None
    closed = p.line_integral(ray, *hit)
    quad = p.quad_integral(ray, *hit)
    assert abs(closed - quad) <= 1e-6 * (1 + abs(quad))
    assert 0.0 <= p.kernel(ray) < 1.0


def test_miss_returns_none():
    e = nspl.Ellipsoid([0, 0, 0], [1, 1, 1], [1, 0, 0, 0])
    assert nspl.intersect(e, nspl.Ray([-2, 2, 0], [1, 0, 0])) is None


def test_render_checkpoint_round_trip(tmp_path):
    data, points = nspl.gen_toy("sphere", views=4, resolution=24, seed=1, out=tmp_path / "toy")
    assert len(data) == 4
    assert points.shape[1] == 3
    scene = nspl.init_scene(points[:32], extent=data.extent, seed=2)
    assert len(scene) == 32
    img = nspl.render(scene, data.cameras[0])
    assert img.shape == (24, 24, 3)
    assert np.all(img >= 0) and np.all(img <= 1)

    path = tmp_path / "a.nspl"
    nspl.save_checkpoint(scene, path)
    back = nspl.load_checkpoint(path)
    assert back.parameter_count == 32 * 99
    np.testing.assert_array_equal(back.flatten(), scene.flatten().astype(np.float32).astype(np.float64))

    loaded = nspl.load_dataset(tmp_path / "toy")
    assert len(loaded) == 4
    assert loaded.image(0).shape == (24, 24, 3)


def test_metrics():
    a = np.full((16, 16, 3), 0.3)
    b = np.full((16, 16, 3), 0.4)
    assert nspl.psnr(a, b) == pytest.approx(20.0)
    assert nspl.psnr(a, a) == 99.0
    assert nspl.ssim(a, a) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nspl.psnr(np.zeros((4, 4)), np.zeros((4, 4)))


def test_short_training_improves_fit():
    data, points = nspl.gen_toy("sphere", views=4, resolution=24, seed=0)
    scene = nspl.init_scene(points[:16], extent=data.extent)
    cam = data.cameras[data.train[0]]
    target = data.image(data.train[0])
    before = nspl.psnr(nspl.render(scene, cam), target)
    trained, log = nspl.train(data, scene, {"iterations": "200", "densify": "false", "log_interval": "50"})
    assert len(trained) == 16
    assert log[-1]["final"]
    after = nspl.psnr(nspl.render(trained, cam), target)
    assert after > before + 3.0


def test_check_suites():
    r = nspl.check("integrals", seed=3, cases=200)
    assert r["passed"] and r["cases"] == 200
    assert nspl.check("temporal", cases=50)["passed"]
    with pytest.raises(ValueError):
        nspl.check("nope")
