import numpy as np
import pytest

from strategy_search import augmentation as aug


def noisy_volume(seed=0, shape=(6, 5, 4)):
    return np.random.default_rng(seed).random(shape)


def direct_smooth(v):
    """Triple loop over the 27-tap outer-product kernel, edges replicated."""
    k = np.array([0.25, 0.5, 0.25])
    nx, ny, nz = v.shape
    out = np.zeros_like(v)
    for i in range(nx):
        for j in range(ny):
            for l in range(nz):
                acc = 0.0
                for a in range(3):
                    for b in range(3):
                        for c in range(3):
                            ii = min(max(i + a - 1, 0), nx - 1)
                            jj = min(max(j + b - 1, 0), ny - 1)
                            ll = min(max(l + c - 1, 0), nz - 1)
                            acc += k[a] * k[b] * k[c] * v[ii, jj, ll]
                out[i, j, l] = acc
    return out


def test_smooth_constant_volume():
    v = np.full((4, 4, 4), 0.3)
    assert np.allclose(aug.smooth(v), v, rtol=0, atol=1e-15)


def test_sharpen_constant_volume():
    v = np.full((4, 4, 4), 0.3)
    assert np.allclose(aug.sharpen(v), v, rtol=0, atol=1e-15)


def test_smooth_impulse_center():
    v = np.zeros((5, 5, 5))
    v[2, 2, 2] = 1.0
    out = aug.smooth(v)
    assert out[2, 2, 2] == pytest.approx(0.125, abs=1e-15)
    assert np.allclose(out, direct_smooth(v), atol=1e-15)


def test_smooth_matches_direct_convolution():
    v = noisy_volume(3)
    assert np.allclose(aug.smooth(v), direct_smooth(v), atol=1e-14)


def test_smooth_is_linear_before_clamp():
    u, w = noisy_volume(1), noisy_volume(2)
    a, b = 1.7, -2.3
    lhs = aug.smooth(a * u + b * w, clip=False)
    rhs = a * aug.smooth(u, clip=False) + b * aug.smooth(w, clip=False)
    assert np.allclose(lhs, rhs, atol=1e-13)


@pytest.mark.parametrize("fn", [aug.gaussian_noise, aug.contrast, aug.intensity_shift])
def test_stochastic_transforms_deterministic_per_seed(fn):
    v = noisy_volume()
    assert np.array_equal(fn(v, 5), fn(v, 5))
    assert not np.array_equal(fn(v, 5), fn(v, 6))


def test_transform_ranges():
    v = np.full((3, 3, 3), 0.5)
    noise = aug.gaussian_noise(v, 0, clip=False) - 0.5
    assert abs(noise.std() - 0.05) < 0.03
    for seed in range(50):
        assert np.allclose(aug.contrast(v, seed), 0.5)  # contrast pivots on 0.5
        s = aug.intensity_shift(v, seed)[0, 0, 0] - 0.5
        assert -0.1 <= s <= 0.1
        c = (aug.contrast(np.full((1, 1, 1), 0.9), seed)[0, 0, 0] - 0.5) / 0.4
        assert 0.7 <= c <= 1.3


@pytest.mark.parametrize("fn", [aug.smooth, aug.sharpen, aug.gaussian_noise, aug.contrast, aug.intensity_shift])
def test_outputs_clamped_and_shape_preserved(fn):
    v = noisy_volume(7)
    out = fn(v)
    assert out.shape == v.shape
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_zero_probabilities_are_identity():
    v = noisy_volume()
    for seed in range(20):
        out, applied = aug.apply_policy(v, aug.AugmentationPolicy((0.0,) * 5), seed)
        assert np.array_equal(out, v)
        assert applied == [False] * 5


def test_unit_probabilities_always_fire():
    v = noisy_volume()
    for seed in range(200):
        _, applied = aug.apply_policy(v, aug.AugmentationPolicy((1.0,) * 5), seed)
        assert applied == [True] * 5


def test_apply_policy_deterministic():
    v = noisy_volume()
    policy = aug.AugmentationPolicy((0.5, 0.5, 0.5, 0.5, 0.5))
    a, ga = aug.apply_policy(v, policy, 99)
    b, gb = aug.apply_policy(v, policy, 99)
    assert np.array_equal(a, b) and ga == gb
    assert a.min() >= 0 and a.max() <= 1


def test_gate_frequencies_track_probabilities():
    policy = aug.AugmentationPolicy((0.1, 0.3, 0.5, 0.7, 0.9))
    v = np.full((2, 2, 2), 0.5)
    counts = np.zeros(5)
    n = 4000
    for seed in range(n):
        counts += aug.apply_policy(v, policy, seed)[1]
    p = np.array(policy.probs)
    assert np.all(np.abs(counts / n - p) <= 3 * np.sqrt(p * (1 - p) / n))


def test_policy_validation():
    with pytest.raises(ValueError):
        aug.AugmentationPolicy((0.5,) * 4)
    with pytest.raises(ValueError):
        aug.AugmentationPolicy((0.5, 0.5, 0.5, 0.5, 1.2))
    pol = aug.policy_from_strategy(["smooth", "learning_rate"], [0.8, 0.1])
    assert pol.probs == (0.0, 0.8, 0.0, 0.0, 0.0)


def test_volume_round_trip(tmp_path):
    v = noisy_volume(4).astype(np.float32).astype(float)
    path = tmp_path / "v.vol"
    aug.write_volume(path, v)
    raw = path.read_bytes()
    assert raw[:4] == aug.VOLUME_MAGIC
    assert len(raw) == 20 + 4 * v.size
    assert np.array_equal(aug.read_volume(path), v)


def test_volume_format_errors(tmp_path):
    path = tmp_path / "v.vol"
    aug.write_volume(path, noisy_volume())
    raw = path.read_bytes()
    for bad in (raw[:-4], raw[:10], b"XXXX" + raw[4:]):
        path.write_bytes(bad)
        with pytest.raises(aug.VolumeFormatError):
            aug.read_volume(path)
    with pytest.raises(aug.VolumeFormatError):
        aug.read_volume(tmp_path / "missing.vol")
