"""Equivariance checks at layer, block and whole-network level."""

import numpy as np
from scipy.ndimage import gaussian_filter

from . import mri
from .equivariant import (
    GroupConv2d,
    GroupFeatureMap,
    GroupProjection,
    LiftingConv,
    ReLU,
    RotationGroup,
    Sequential,
    TemporalGroupConv,
    equivariance_error,
    rotate_image,
)
from .model import UnrolledConfig, build_model, reconstruct

EXACT_LAYER_TOL = 1e-10
EXACT_NETWORK_TOL = 1e-8
APPROX_TOL = 5e-2


def default_threshold(group, mode):
    if not group.grid_exact:
        return APPROX_TOL
    return EXACT_NETWORK_TOL if mode == "network" else EXACT_LAYER_TOL


def random_field(rng, shape, group, sigma=2.0):
    """White noise, Gaussian-blurred in space when the group has off-grid angles."""
    x = rng.standard_normal(shape)
    if not group.grid_exact:
        x = gaussian_filter(x, [0] * (len(shape) - 2) + [sigma, sigma])
    return x


def layer_errors(group, g, size=16, frames=4, channels=3, p=None, q=3, seed=0):
    """Equivariance error of each layer type (and their composition)."""
    rng = np.random.default_rng(seed)
    p = p or (3 if group.grid_exact else 5)
    s = group.order
    layers = {
        "lifting": LiftingConv(2, channels, group, p, rng),
        "temporal": TemporalGroupConv(channels, channels, group, q, rng),
        "intermediate": GroupConv2d(channels, channels, group, p, rng),
        "projection": GroupProjection(channels, 2, group, p, rng),
    }
    image = random_field(rng, (2, frames, size, size), group)
    fmap = random_field(rng, (s, channels, frames, size, size), group)
    out = {}
    for name, layer in layers.items():
        x = image if layer.in_kind == "image" else GroupFeatureMap(fmap, group)
        out[name] = equivariance_error(layer, x, g, group)
    stack = Sequential(layers["lifting"], ReLU("group"), layers["temporal"], ReLU("group"),
                       layers["intermediate"], ReLU("group"), layers["projection"])
    out["stack"] = equivariance_error(stack, image, g, group)
    return out


def block_error(group, g, size=16, frames=4, filters=(4, 4, 2), p=None, seed=0):
    cfg = UnrolledConfig(unrolls=1, group_order=group.order, filters=filters,
                         spatial_size=p or (3 if group.grid_exact else 5), seed=seed)
    block = build_model(cfg).blocks[0]
    rng = np.random.default_rng(seed + 1)
    x = random_field(rng, (2, frames, size, size), group)
    return equivariance_error(block, x, g, group)


def network_error(group, g, size=16, frames=4, coils=2, accel=2, filters=(4, 4, 2),
                  unrolls=2, mode="sre", seed=0):
    """Reconstruct a problem and its rotated copy; compare to the rotated result."""
    turns = (4 * g) // group.order if (4 * g) % group.order == 0 else None
    if turns is None:
        raise ValueError("network check needs a rotation by a multiple of 90 degrees")
    rng = np.random.default_rng(seed)
    cfg = UnrolledConfig(unrolls=unrolls, group_order=group.order, filters=filters,
                         mode=mode, seed=seed)
    model = build_model(cfg)
    truth = rng.standard_normal((2, frames, size, size))
    sens = mri.simulate_coils(size, coils)
    mask = mri.make_kt_mask(size, frames, accel, seed)
    y = mri.forward_op(truth, sens, mask).data
    rec = reconstruct(y, sens, mask, model).data
    truth_r = rotate_image(truth, g, group)
    sens_r = rotate_image(sens, g, group)
    mask_r = mri.rotate_kspace_mask(mask, turns)
    y_r = mri.forward_op(truth_r, sens_r, mask_r).data
    rec_r = reconstruct(y_r, sens_r, mask_r, model).data
    return float(np.linalg.norm(rec_r - rotate_image(rec, g, group)) / np.linalg.norm(rec))
