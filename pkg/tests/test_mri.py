import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srecnn import mri
from srecnn import tensor as T
from srecnn.equivariant import RotationGroup, rotate_image


def _problem(rng, c=3, t=2, h=8):
    x = rng.standard_normal((2, t, h, h))
    s = mri.simulate_coils(h, c)
    m = mri.make_kt_mask(h, t, 2, int(rng.integers(100)))
    y = rng.standard_normal((2, c, t, h, h))
    return x, s, m, y


def test_fft_constant_image():
    for n in (4, 5, 8):
        k = mri.fft2c(np.ones((n, n)))
        assert k[n // 2, n // 2] == pytest.approx(n)
        k[n // 2, n // 2] = 0
        assert np.max(np.abs(k)) < 1e-12


def test_fft_parseval_and_round_trip(rng):
    z = rng.standard_normal((3, 8, 8)) + 1j * rng.standard_normal((3, 8, 8))
    assert np.linalg.norm(mri.fft2c(z)) == pytest.approx(np.linalg.norm(z), rel=1e-12)
    assert np.max(np.abs(mri.ifft2c(mri.fft2c(z)) - z)) < 1e-12


def test_fft_rotation_on_odd_grid(rng):
    z = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
    assert np.max(np.abs(mri.fft2c(np.rot90(z)) - np.rot90(mri.fft2c(z)))) < 1e-12


@pytest.mark.parametrize("n", [8, 9])
def test_kspace_mask_rotation_commutes_with_operator(n, rng):
    """Rotating truth, coils and mask together rotates the zero-filled image."""
    g4 = RotationGroup(4)
    x = rng.standard_normal((2, 2, n, n))
    s = mri.simulate_coils(n, 2)
    m = (rng.random((2, n, n)) < 0.4).astype(float)
    zf = mri.zero_filled(mri.forward_op(x, s, m), s, m).data
    xr, sr = rotate_image(x, 1, g4), rotate_image(s, 1, g4)
    mr = mri.rotate_kspace_mask(m, 1)
    zfr = mri.zero_filled(mri.forward_op(xr, sr, mr), sr, mr).data
    assert np.max(np.abs(zfr - rotate_image(zf, 1, g4))) < 1e-12


def test_forward_degenerate_cases(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    one = mri.simulate_coils(6, 1)
    full = np.ones((2, 6, 6))
    y = mri.forward_op(x, one, full).data
    phase = mri.to_complex(one)[0]
    np.testing.assert_allclose(mri.to_complex(y)[0], mri.fft2c(phase * mri.to_complex(x)),
                               atol=1e-12)
    assert not mri.forward_op(np.zeros_like(x), one, full).data.any()
    assert not mri.adjoint_op(np.zeros((2, 1, 2, 6, 6)), one, full).data.any()


def test_unit_coil_operator_is_plain_fft(rng):
    x = rng.standard_normal((2, 2, 6, 6))
    s = np.zeros((2, 1, 6, 6))
    s[0] = 1
    full = np.ones((2, 6, 6))
    y = mri.forward_op(x, s, full).data
    np.testing.assert_allclose(mri.to_complex(y)[0], mri.fft2c(mri.to_complex(x)), atol=1e-12)
    np.testing.assert_allclose(mri.adjoint_op(y, s, full).data, x, atol=1e-12)


def test_adjointness_20_trials(rng):
    for _ in range(20):
        x, s, m, y = _problem(rng)
        ax = mri.forward_op(x, s, m).data
        ahy = mri.adjoint_op(y, s, m).data
        lhs, rhs = np.vdot(ax, y), np.vdot(x, ahy)
        assert abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y)) < 1e-10


def test_normal_operator_fully_sampled_is_identity(rng):
    x = rng.standard_normal((2, 3, 8, 8))
    s = mri.simulate_coils(8, 4)
    full = np.ones((3, 8, 8))
    back = mri.adjoint_op(mri.forward_op(x, s, full), s, full).data
    assert np.max(np.abs(back - x)) < 1e-10


def test_operator_norm_at_most_one(rng):
    for c in (1, 4):
        s = mri.simulate_coils(16, c)
        m = mri.make_kt_mask(16, 3, 4, 0)
        assert mri.power_norm(s, m) <= 1 + 1e-6


def test_mask_idempotent(rng):
    x, s, m, _ = _problem(rng)
    y = mri.forward_op(x, s, m).data
    np.testing.assert_array_equal(y * m, y)


def test_shape_mismatch_rejected(rng):
    x, s, m, y = _problem(rng)
    with pytest.raises(ValueError):
        mri.forward_op(x[:, :1], s, m)
    with pytest.raises(ValueError):
        mri.adjoint_op(y[:, :2], s, m)


def test_dc_step_examples(rng):
    x, s, m, y = _problem(rng)
    np.testing.assert_array_equal(mri.dc_gradient_step(x, y, s, m, 0.0).data, x)
    yc = mri.forward_op(x, s, m).data
    np.testing.assert_allclose(mri.dc_gradient_step(x, yc, s, m, 0.7).data, x, atol=1e-14)
    # single-pixel identity system: x=0, y=1, eta=0.25 -> 0 - 2*0.25*(0-1) = 0.5
    one = np.zeros((2, 1, 1, 1))
    one[0] = 1
    z = mri.dc_gradient_step(np.zeros((2, 1, 1, 1)), np.array([1.0, 0]).reshape(2, 1, 1, 1, 1),
                             one, np.ones((1, 1, 1)), 0.25).data
    assert z[0, 0, 0, 0] == pytest.approx(0.5) and z[1, 0, 0, 0] == 0


def test_dc_step_gradients(rng):
    x, s, m, y = _problem(rng, c=2, t=1, h=8)
    xt = T.Tensor(x, requires_grad=True)
    eta = T.Tensor(0.3, requires_grad=True)
    w = rng.standard_normal(x.shape)
    T.backward(T.sum_all(T.mul(mri.dc_gradient_step(xt, y, s, m, eta), w)))

    def f(e=0.3, xx=x):
        return float(np.sum(mri.dc_gradient_step(xx, y, s, m, e).data * w))

    fd_eta = (f(0.3 + 1e-6) - f(0.3 - 1e-6)) / 2e-6
    assert eta.grad == pytest.approx(fd_eta, rel=1e-6)
    # linear in x: gradient is (I - 2 eta A^H A)^T w
    expect = w - 0.6 * mri.adjoint_op(mri.forward_op(w, s, m), s, m).data
    np.testing.assert_allclose(xt.grad, expect, atol=1e-12)


# masks

def test_mask_full_sampling():
    np.testing.assert_array_equal(mri.make_kt_mask(16, 3, 1, 0), np.ones((3, 16, 16)))


def test_mask_desk_scale_counts():
    m = mri.make_kt_mask(64, 8, 8, 5)
    lines = m[:, :, 0]
    assert np.all(lines.sum(axis=1) == 8)
    assert np.all(lines[:, 30:34] == 1)
    assert np.all(m == m[:, :, :1])       # whole rows
    assert abs(m.mean() - 1 / 8) <= 0.15 / 8


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([16, 24, 32, 64]), st.integers(1, 8), st.sampled_from([1, 2, 3, 4, 6, 8]),
       st.integers(0, 2 ** 31))
def test_mask_invariants(h, t, accel, seed):
    if np.ceil(h / accel) < 4:
        with pytest.raises(ValueError):
            mri.make_kt_mask(h, t, accel, seed)
        return
    m = mri.make_kt_mask(h, t, accel, seed)
    assert set(np.unique(m)) <= {0.0, 1.0}
    assert np.all(m[:, h // 2 - 2:h // 2 + 2] == 1)
    assert np.all(m[:, :, 0].sum(axis=1) == np.ceil(h / accel))
    np.testing.assert_array_equal(m, mri.make_kt_mask(h, t, accel, seed))


def test_mask_varies_across_frames():
    m = mri.make_kt_mask(64, 8, 8, 1)[:, :, 0]
    assert len({tuple(r) for r in m}) > 4


def test_mask_rejects_bad_inputs():
    with pytest.raises(ValueError):
        mri.make_kt_mask(16, 2, 0.5, 0)
    with pytest.raises(ValueError, match="budget"):
        mri.make_kt_mask(16, 2, 8, 0)


# coils

@pytest.mark.parametrize("c", [1, 2, 4, 8])
def test_coil_normalization(c):
    s = mri.simulate_coils(32, c)
    assert s.shape == (2, c, 32, 32)
    assert np.max(np.abs(np.sum(s ** 2, axis=(0, 1)) - 1)) < 1e-10
    np.testing.assert_array_equal(s, mri.simulate_coils(32, c))


def test_single_coil_unit_magnitude():
    assert np.allclose(np.abs(mri.to_complex(mri.simulate_coils(8, 1))), 1, atol=1e-12)
    with pytest.raises(ValueError):
        mri.simulate_coils(8, 0)
