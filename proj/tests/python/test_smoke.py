import math

import numpy as np
import pytest

import dcreg


def test_icnn_is_convex_along_a_segment():
    net = dcreg.Icnn.init(3, [8, 8], dcreg.Activation.softplus(), seed=3)
    assert net.nonneg()
    x, y = np.array([1.0, -2.0, 0.5]), np.array([-1.0, 0.3, 2.0])
    for lam in np.linspace(0, 1, 11):
        assert net(lam * x + (1 - lam) * y) <= lam * net(x) + (1 - lam) * net(y) + 1e-9


def test_network_gradient_matches_finite_differences():
    net = dcreg.Icnn.init(2, [6], dcreg.Activation.softplus(), seed=1)
    x = np.array([0.4, -0.7])
    h = 1e-6
    fd = [(net(x + h * e) - net(x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(net.grad(x), fd, atol=1e-6)


def test_dc_regularizer_modes():
    r1 = dcreg.Icnn.init(2, [4], dcreg.Activation.relu(), seed=1)
    r2 = dcreg.Icnn.init(2, [4], dcreg.Activation.relu(), seed=2)
    x = np.array([1.0, 1.0])
    assert dcreg.DcRegularizer(r1, r2)(x) == pytest.approx(r1(x) - r2(x))
    wc = dcreg.DcRegularizer(r1, mode=dcreg.DcMode.weakly_convex, rho=2.0)
    assert wc(x) == pytest.approx(r1(x) - 2.0)
    assert dcreg.DcRegularizer(r1, mode=dcreg.DcMode.convex_only)(x) == pytest.approx(r1(x))


def test_checkpoint_round_trip(tmp_path):
    r = dcreg.DcRegularizer(dcreg.Icnn.init(2, [4], seed=1), dcreg.Icnn.init(2, [4], seed=2))
    p = tmp_path / "c.bin"
    dcreg.save_checkpoint(p, r)
    back = dcreg.load_checkpoint(p)
    x = np.array([0.3, -0.1])
    assert back(x) == r(x)
    with pytest.raises(dcreg.MissingArtifact):
        dcreg.load_checkpoint(tmp_path / "none.bin")


def test_radon_adjoint():
    a = dcreg.LinearOp.radon(12, 8, 12)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=a.in_dim), rng.normal(size=a.out_dim)
    assert a.apply(x) @ y == pytest.approx(x @ a.adjoint(y), rel=1e-12)
    with pytest.raises(dcreg.ConfigError):
        dcreg.LinearOp.radon(0, 8, 12)


def test_psm_with_l1_is_ista():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(7, 5))
    y = rng.normal(size=7)
    mu = 0.3
    alpha = 1.0 / np.linalg.norm(a, 2) ** 2
    obj = dcreg.Objective(dcreg.LinearOp.dense(a), y, "l1", "zero", mu)
    tr = dcreg.solve(obj, "psm", iterations=50, alpha=alpha, x0=np.zeros(5))
    x = np.zeros(5)
    for _ in range(50):
        v = x - alpha * a.T @ (a @ x - y)
        x = np.sign(v) * np.maximum(np.abs(v) - alpha * mu, 0)
    assert np.allclose(tr.x, x, atol=1e-10)


def test_dca_on_l1_minus_l2_reaches_a_sparse_point():
    y = np.array([2.0, 1.0])
    obj = dcreg.Objective(dcreg.LinearOp.identity(2), y, "l1", "l2", 0.5)
    tr = dcreg.solve(obj, "dca", iterations=100, exact_inner=True)
    fs = [r.f for r in tr.records]
    assert all(b <= a + 1e-12 for a, b in zip(fs, fs[1:]))
    grid = np.linspace(-3, 3, 601)
    xx, yy = np.meshgrid(grid, grid)
    f = 0.5 * ((xx - 2) ** 2 + (yy - 1) ** 2) + 0.5 * (np.abs(xx) + np.abs(yy) - np.hypot(xx, yy))
    assert obj.value(tr.x) <= f.min() + 1e-6


def test_prox_l1():
    assert np.allclose(dcreg.prox("l1", np.array([2.0, -0.5]), 1.0), [1.0, 0.0])


def test_spiral_and_fit_error():
    clean, noisy, labels = dcreg.gen_spiral(200, 1.0, 4)
    assert clean.shape == noisy.shape == (200, 2)
    assert set(labels) == {0, 1}
    r = dcreg.DcRegularizer(dcreg.Icnn.init(2, [8], seed=1), mode=dcreg.DcMode.convex_only)
    assert dcreg.regularizer_fit_error(r, 200, 1.0, 4, res=21) >= 0.0


def test_short_training_keeps_weights_nonnegative():
    clean, noisy, _ = dcreg.gen_spiral(200, 1.0, 2)
    cfg = dcreg.TrainConfig()
    cfg.epochs, cfg.batch_size, cfg.lr, cfg.seed = 3, 50, 1e-3, 5
    init = dcreg.DcRegularizer(dcreg.Icnn.init(2, [8, 8], seed=1), dcreg.Icnn.init(2, [8, 8], seed=2))
    res = dcreg.train(init, clean / 8, noisy / 8, cfg)
    assert [e.epoch for e in res.log] == [1, 2, 3]
    assert res.reg.r1.nonneg() and res.reg.r2.nonneg()


def test_image_metrics():
    ref = dcreg.phantom(16, "shepp_logan")
    assert dcreg.psnr(ref, ref) == 99.0
    assert dcreg.ssim(ref, ref, 16, 16) == pytest.approx(1.0)
    noisy = ref + 0.01
    assert dcreg.psnr(noisy, ref) == pytest.approx(40.0)


def test_star_geometry():
    assert dcreg.rho_gaussian(np.zeros(2), np.eye(2), 2.0, 0.3) == pytest.approx((1 / (2 * math.pi)) ** 0.25, abs=1e-6)
    k = dcreg.StarBody.lp_ball(256, math.inf)
    c = dcreg.StarBody.lp_ball(256, 3.0, 1.8)
    m = dcreg.harmonic_combination(k, c, 1.0)
    u = np.array([1.0, 0.0])
    assert m.gauge(u) == pytest.approx(k.gauge(u) + c.gauge(u), abs=1e-12)
    body = dcreg.optimal_star_body_gaussian(np.eye(2), 0.16 * np.eye(2), 1.0, 256, True)
    assert body.volume() == pytest.approx(1.0)


def test_config_and_cli(tmp_path):
    cfg = dcreg.preset("stargeom-demo")
    assert cfg.get("problem.kind") == "stargeom"
    with pytest.raises(dcreg.ConfigError):
        cfg.set("nope.key", "1")
    out = tmp_path / "sg"
    assert dcreg.run(["stargeom", "-o", str(out), "--problem.star_m=128", "--problem.star_samples=500",
                      "--problem.star_contour_res=11"]) == 0
    assert (out / "manifest.ini").exists()
    assert dcreg.run(["solve", "--problem.kind=ct"]) == 3
    assert dcreg.run(["train", "--bogus.key=1"]) == 2
