"""Unrolled proximal-gradient reconstruction network.

Each of the K iterations takes a data-consistency gradient step with a
learned step size and then applies its own residual CNN block (no weight
sharing across iterations).
"""

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import mri, sret
from . import tensor as T
from .equivariant import (
    GroupConv2d,
    GroupProjection,
    LiftingConv,
    PlainConv1d,
    PlainConv2d,
    ReLU,
    RotationGroup,
    Sequential,
    TemporalGroupConv,
)
from .filters import FourierBasis1D

MODES = ("sre", "plain")


@dataclass
class UnrolledConfig:
    unrolls: int = 2
    group_order: int = 4
    spatial_size: int = 3
    temporal_size: int = 3
    filters: tuple = (8, 8, 2)
    eta0: float = 1.0
    mode: str = "sre"
    seed: int = 0
    zero_last: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.filters = tuple(int(c) for c in self.filters)
        self.validate()

    def validate(self):
        if self.unrolls < 1:
            raise ValueError("unrolls must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.spatial_size % 2 == 0 or self.temporal_size % 2 == 0:
            raise ValueError("filter sizes must be odd")
        if len(self.filters) not in (3, 4) or self.filters[-1] != 2:
            raise ValueError(f"filter recipe must be 3 or 4 widths ending in 2, got {self.filters}")
        if min(self.filters) < 1 or self.group_order < 1:
            raise ValueError("widths and group order must be positive")

    @property
    def widths(self):
        """(lifting, temporal, intermediate, projection) output widths."""
        f = self.filters
        return (f[0], f[0], f[1], f[2]) if len(f) == 3 else f

    def to_text(self):
        items = {
            "mode": self.mode,
            "unrolls": self.unrolls,
            "group_order": self.group_order,
            "spatial_size": self.spatial_size,
            "temporal_size": self.temporal_size,
            "filters": "-".join(map(str, self.filters)),
            "eta0": repr(float(self.eta0)),
            "seed": self.seed,
            "zero_last": int(self.zero_last),
        }
        items.update({f"extra.{k}": v for k, v in sorted(self.extra.items())})
        return "".join(f"{k}={v}\n" for k, v in items.items())

    @classmethod
    def from_text(cls, text):
        kv = dict(line.split("=", 1) for line in text.splitlines() if line)
        extra = {k[6:]: v for k, v in kv.items() if k.startswith("extra.")}
        return cls(
            unrolls=int(kv["unrolls"]),
            group_order=int(kv["group_order"]),
            spatial_size=int(kv["spatial_size"]),
            temporal_size=int(kv["temporal_size"]),
            filters=tuple(int(c) for c in kv["filters"].split("-")),
            eta0=float(kv["eta0"]),
            mode=kv["mode"],
            seed=int(kv["seed"]),
            zero_last=bool(int(kv.get("zero_last", "0"))),
            extra=extra,
        )


class ProximalBlock:
    """``z + net(z)`` on a complex sequence stored as ``[2, T, H, W]``."""

    in_kind = out_kind = "image"

    def __init__(self, net):
        self.net = net

    def __call__(self, z):
        z = T.as_tensor(z)
        return T.add(z, self.net(z))

    def parameters(self):
        return self.net.parameters()

    def named_parameters(self):
        return self.net.named_parameters()


def _sre_net(widths, cfg, rng):
    g = RotationGroup(cfg.group_order)
    p, q = cfg.spatial_size, cfg.temporal_size
    c1, ct, c2, c3 = widths
    return Sequential(
        LiftingConv(2, c1, g, p, rng),
        ReLU("group"),
        TemporalGroupConv(c1, ct, g, q, rng),
        ReLU("group"),
        GroupConv2d(ct, c2, g, p, rng),
        ReLU("group"),
        GroupProjection(c2, c3, g, p, rng, zero=cfg.zero_last),
    )


def _plain_net(widths, cfg, rng):
    p, q = cfg.spatial_size, cfg.temporal_size
    c1, ct, c2, c3 = widths
    return Sequential(
        PlainConv2d(2, c1, p, rng),
        ReLU(),
        PlainConv1d(c1, ct, q, rng),
        ReLU(),
        PlainConv2d(ct, c2, p, rng),
        ReLU(),
        PlainConv2d(c2, c3, p, rng, zero=cfg.zero_last),
    )


def sre_block_params(widths, s, p, q):
    g = RotationGroup(s)
    nb2 = g.default_basis(p).size
    nb1 = FourierBasis1D(q).size
    c1, ct, c2, c3 = widths
    return 2 * c1 * nb2 + c1 * ct * s * nb1 + ct * c2 * s * nb2 + c2 * c3 * nb2


def plain_block_params(widths, p, q):
    c1, ct, c2, c3 = widths
    return 2 * c1 * p * p + c1 * ct * q + ct * c2 * p * p + c2 * c3 * p * p


def matched_plain_widths(cfg):
    """Hidden widths for the plain ablation, scaled to match the SRE count."""
    target = sre_block_params(cfg.widths, cfg.group_order, cfg.spatial_size, cfg.temporal_size)
    p, q = cfg.spatial_size, cfg.temporal_size
    best = None
    for scale in np.arange(0.5, 20.0, 0.005):
        w = tuple(max(1, int(round(c * scale))) for c in cfg.widths[:3]) + (2,)
        err = abs(plain_block_params(w, p, q) - target) / target
        if best is None or err < best[0]:
            best = (err, w)
    return best[1]


class UnrolledModel:
    def __init__(self, cfg, blocks, etas):
        self.cfg = cfg
        self.blocks = blocks
        self.etas = etas

    def parameters(self):
        out = []
        for block, eta in zip(self.blocks, self.etas):
            out.extend(block.parameters())
            out.append(eta)
        return out

    def named_parameters(self):
        out = []
        for k, (block, eta) in enumerate(zip(self.blocks, self.etas)):
            out.extend((f"iter{k}.{n}", p) for n, p in block.named_parameters())
            out.append((f"iter{k}.eta", eta))
        return out

    def parameter_count(self):
        return int(sum(p.size for p in self.parameters()))

    def state_hash(self):
        import hashlib
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, y, coils, mask):
        return reconstruct(y, coils, mask, self)


def build_model(cfg):
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    if cfg.mode == "sre":
        widths, make = cfg.widths, _sre_net
    else:
        widths, make = matched_plain_widths(cfg), _plain_net
    blocks = [ProximalBlock(make(widths, cfg, rng)) for _ in range(cfg.unrolls)]
    etas = [T.Tensor(np.array(cfg.eta0), requires_grad=True) for _ in range(cfg.unrolls)]
    return UnrolledModel(cfg, blocks, etas)


def proximal_block(z, model, k):
    return model.blocks[k](z)


def reconstruct(y, coils, mask, model):
    """Zero-filled start, then K rounds of (gradient step, proximal block)."""
    x = mri.zero_filled(y, coils, mask)
    for k in range(model.cfg.unrolls):
        z = mri.dc_gradient_step(x, y, coils, mask, model.etas[k])
        x = model.blocks[k](z)
    return x


# -- model file -------------------------------------------------------------

MODEL_MAGIC = b"SREM"


def _basis_table(basis):
    rows = []
    for d in basis.descriptors:
        kind = 0.0 if d[0] == "cos" else 1.0
        rows.append([kind, *map(float, d[1:])] + ([0.0] if len(d) == 2 else []))
    return np.array(rows)


def _records(model):
    recs = []
    for k, block in enumerate(model.blocks):
        for i, layer in enumerate(block.net.layers):
            bank = getattr(layer, "bank", None)
            if bank is not None:
                recs.append((f"iter{k}.{i}.basis", _basis_table(bank.basis)))
            for n, p in layer.named_parameters():
                recs.append((f"iter{k}.{i}.{n}", p.data))
        recs.append((f"iter{k}.eta", model.etas[k].data))
    return recs


def save_model(model, path):
    text = model.cfg.to_text().encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    recs = _records(model)
    buf.write(struct.pack("<I", len(recs)))
    for name, arr in recs:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        sret.write_tensor(buf, arr)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_model(path):
    with open(path, "rb") as f:
        if f.read(4) != MODEL_MAGIC:
            raise sret.FormatError("not a model file")
        (n,) = struct.unpack("<I", f.read(4))
        cfg = UnrolledConfig.from_text(f.read(n).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        recs = {}
        for _ in range(count):
            (ln,) = struct.unpack("<I", f.read(4))
            name = f.read(ln).decode("utf-8")
            recs[name] = sret.read_tensor(f)
    model = build_model(cfg)
    for k, block in enumerate(model.blocks):
        for i, layer in enumerate(block.net.layers):
            bank = getattr(layer, "bank", None)
            if bank is not None:
                stored = recs.pop(f"iter{k}.{i}.basis")
                if not np.array_equal(stored, _basis_table(bank.basis)):
                    raise sret.FormatError(f"basis mismatch in layer iter{k}.{i}")
            for n, p in layer.named_parameters():
                arr = recs.pop(f"iter{k}.{i}.{n}")
                if arr.shape != p.shape:
                    raise sret.FormatError(f"iter{k}.{i}.{n}: shape {arr.shape} != {p.shape}")
                p.data[...] = arr
        model.etas[k].data[...] = recs.pop(f"iter{k}.eta")
    if recs:
        raise sret.FormatError(f"unexpected records: {sorted(recs)}")
    return model
