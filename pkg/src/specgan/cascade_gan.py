"""Cascaded spectral GANs over frequency bands of moment vectors.

Generators are numbered from 1. ``G_1 .. G_T'`` form the forward chain, each
producing one band and conditioned on its predecessor's output.
``G_T'+1 .. G_T`` (``T = 2T' - 1``) form the backward chain: ``G_T'+k``
regenerates band ``k`` and is conditioned on ``G_T'+k-1``, so ``G_T'+1`` sees
the highest forward band first. A full moment vector takes band ``T'`` from
``G_T'`` and bands ``1 .. T'-1`` from the backward generators.
"""

import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .neural import MLP, DenseLayer, RmspropState, load_mlp, rmsprop_step, save_mlp
from .sh_core import SMV, grid_directions, num_coeffs, degree_order_arrays
from .spectral_transform import basis_matrix

log = logging.getLogger(__name__)


class PartitionError(ValueError):
    pass


class NumericalAbort(RuntimeError):
    pass


# -- band partition -----------------------------------------------------------

@dataclass
class BandPartition:
    bandlimit: int
    bands: list
    blocks: list

    @property
    def t_prime(self):
        return len(self.bands)

    @property
    def total(self):
        return 2 * self.t_prime - 1

    def sizes(self):
        return [len(b) for b in self.bands]

    def band_of(self, gen):
        """Band (1-based) produced by generator ``gen`` (1-based)."""
        if not 1 <= gen <= self.total:
            raise IndexError(f"no generator {gen} in a cascade of {self.total}")
        return gen if gen <= self.t_prime else gen - self.t_prime

    def to_text(self):
        lines = [f"bandlimit={self.bandlimit}", f"t_prime={self.t_prime}"]
        for i, ((lo, hi), band) in enumerate(zip(self.blocks, self.bands), 1):
            sign = "m<=0" if i % 2 else "m>0"
            lines.append(f"band {i}: {lo}<=l<={hi} {sign} size={len(band)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = dict(line.split("=", 1) for line in text.splitlines()[:2])
        return partition_bands(int(kv["bandlimit"]), int(kv["t_prime"]))


def partition_bands(bandlimit, t_prime):
    """Split all (l, m), l <= M, into ``t_prime`` bands.

    Degrees are cut into ``t_prime / 2`` contiguous blocks at
    ``floor(M k / (t_prime/2))``; each block contributes an ``m <= 0`` band
    followed by an ``m > 0`` band.
    """
    if bandlimit < 1:
        raise PartitionError("bandlimit must be >= 1")
    if t_prime < 2 or t_prime % 2:
        raise PartitionError(f"t_prime must be an even number >= 2, got {t_prime}")
    nblocks = t_prime // 2
    cuts = [bandlimit * k // nblocks for k in range(1, nblocks)]
    edges = [-1, *cuts, bandlimit]
    ls, ms = degree_order_arrays(bandlimit)
    bands, blocks = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        in_block = (ls > lo) & (ls <= hi)
        for sel in (in_block & (ms <= 0), in_block & (ms > 0)):
            idx = np.flatnonzero(sel)
            if idx.size == 0:
                raise PartitionError(
                    f"t_prime={t_prime} leaves an empty band at M={bandlimit}"
                )
            bands.append(idx)
            blocks.append((lo + 1, hi))
    return BandPartition(bandlimit, bands, blocks)


def condition_indices(band_size, cond_dim=100):
    k = np.arange(cond_dim)
    if band_size >= cond_dim:
        return (k * band_size) // cond_dim
    return k % band_size


def condition_vector(prev_output, cond_dim=100):
    """Equally spaced entries of the previous band; short bands repeat cyclically."""
    prev_output = np.asarray(prev_output)
    return prev_output[..., condition_indices(prev_output.shape[-1], cond_dim)]


# -- configuration ------------------------------------------------------------

@dataclass
class TrainConfig:
    bandlimit: int = 8
    t_prime: int = 2
    noise_dim: int = 200
    cond_dim: int = 100
    hidden: int = 512
    disc_hidden: int = 256
    lr_forward: float = 1e-3
    lr_backward: float = 1e-4
    lr_disc: float = 1e-5
    d_steps: int = 3
    batch: int = 32
    seed: int = 0
    outer_iters: int = 3
    gen_iters: int = 2000
    reg_iters: int = 500
    reg_batch: int = 8
    grad_clip: float = 1e3
    real_conditioning: bool = False
    backward_pass: bool = True

    def validate(self):
        if self.bandlimit < 1:
            raise ValueError("bandlimit must be >= 1")
        if self.t_prime < 2 or self.t_prime % 2:
            raise ValueError("t_prime must be even and >= 2")
        for name in ("noise_dim", "cond_dim", "hidden", "disc_hidden", "d_steps", "batch", "reg_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lr_forward", "lr_backward", "lr_disc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("outer_iters", "gen_iters", "reg_iters", "seed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        return self

    def to_text(self):
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text, base=None):
        cfg = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        aliases = {"i": "outer_iters", "j": "gen_iters", "p": "reg_iters"}
        updates = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                key, _, value = line.partition(":")
            key = aliases.get(key.strip(), key.strip())
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            value = value.strip()
            kind = types[key]
            if kind in (bool, "bool"):
                updates[key] = value.lower() in ("1", "true", "yes", "on")
            elif kind in (int, "int"):
                updates[key] = int(value)
            else:
                updates[key] = float(value)
        merged = {f.name: getattr(cfg, f.name) for f in fields(cls)}
        merged.update(updates)
        return cls(**merged).validate()


# -- dataset ------------------------------------------------------------------

class SmvDataset:
    """Ground-truth moment vectors scaled per coefficient into [-1, 1]."""

    def __init__(self, coeffs, scale=None):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.ndim != 2:
            raise ValueError("dataset coefficients must be (n_shapes, n_coeffs)")
        self.bandlimit = math.isqrt(coeffs.shape[1]) - 1
        if num_coeffs(self.bandlimit) != coeffs.shape[1]:
            raise ValueError("coefficient count is not a square")
        if scale is None:
            scale = 1.1 * np.abs(coeffs).max(axis=0)
            scale[scale == 0] = 1.0
        self.scale = np.asarray(scale, dtype=np.float64)
        self.coeffs = coeffs
        self.normalized = coeffs / self.scale

    @classmethod
    def from_smvs(cls, smvs, scale=None):
        degrees = {s.max_degree for s in smvs}
        if len(degrees) != 1:
            raise ValueError("all SMVs must share one bandlimit")
        return cls(np.stack([s.coeffs for s in smvs]), scale)

    def __len__(self):
        return len(self.coeffs)

    def denormalize(self, x):
        return np.asarray(x) * self.scale

    def save_scale(self, path):
        Path(path).write_text("".join(f"{float(v)!r}\n" for v in self.scale))

    @staticmethod
    def load_scale(path):
        return np.array([float(v) for v in Path(path).read_text().split()])


# -- generator stack ----------------------------------------------------------

def generator_param_count(in_dim, band_size, hidden=512):
    return in_dim * hidden + hidden + hidden * hidden + hidden + hidden * band_size + band_size


def stack_param_count(bandlimit, t_prime, noise_dim=200, cond_dim=100, hidden=512):
    """Total generator parameters of a cascade, computed without building it."""
    part = partition_bands(bandlimit, t_prime)
    total = 0
    for gen in range(1, part.total + 1):
        in_dim = noise_dim if gen == 1 else noise_dim + cond_dim
        total += generator_param_count(in_dim, len(part.bands[part.band_of(gen) - 1]), hidden)
    return total


class GeneratorStack:
    def __init__(self, config, scale=None):
        self.config = config.validate()
        self.partition = partition_bands(config.bandlimit, config.t_prime)
        self.rng = np.random.default_rng(config.seed)
        self.scale = np.ones(num_coeffs(config.bandlimit)) if scale is None else np.asarray(scale)
        self.generators = []
        self.discriminators = []
        for gen in range(1, self.partition.total + 1):
            size = self.band_size(gen)
            self.generators.append(MLP.build(
                [self.input_dim(gen), config.hidden, config.hidden, size],
                ["relu", "relu", "tanh"], self.rng))
            self.discriminators.append(MLP.build(
                [size, config.disc_hidden, config.disc_hidden, 1],
                ["leaky_relu", "leaky_relu", "identity"], self.rng))
        self.gen_states = [RmspropState(self.gen_lr(g)) for g in range(1, self.partition.total + 1)]
        self.disc_states = [RmspropState(config.lr_disc) for _ in self.discriminators]
        self.completed_outer = 0

    # structure -------------------------------------------------------------

    @property
    def t_prime(self):
        return self.partition.t_prime

    @property
    def total(self):
        return self.partition.total

    def band_size(self, gen):
        return len(self.partition.bands[self.partition.band_of(gen) - 1])

    def input_dim(self, gen):
        return self.config.noise_dim + (0 if gen == 1 else self.config.cond_dim)

    def gen_lr(self, gen):
        return self.config.lr_forward if gen <= self.t_prime else self.config.lr_backward

    def G(self, gen):
        return self.generators[gen - 1]

    def D(self, gen):
        return self.discriminators[gen - 1]

    def generator_param_count(self):
        return sum(g.num_params() for g in self.generators)

    def assembly_generators(self, forward_only=False):
        """Generators whose outputs make up a full moment vector, as (gen, band) pairs."""
        if forward_only or not self.config.backward_pass:
            return [(g, g) for g in range(1, self.t_prime + 1)]
        return [(self.t_prime, self.t_prime)] + [
            (self.t_prime + k, k) for k in range(1, self.t_prime)
        ]

    # sampling --------------------------------------------------------------

    def noise(self, n):
        return self.rng.standard_normal((n, self.config.noise_dim))

    def _gen_input(self, gen, z, prev):
        if gen == 1:
            return z
        return np.concatenate([z, condition_vector(prev, self.config.cond_dim)], axis=1)

    def run_chain(self, upto, n, keep_cache=False, rng=None):
        """Run ``G_1 .. G_upto`` on fresh noise; returns outputs (and caches) per generator."""
        rng = self.rng if rng is None else rng
        outputs, caches = {}, {}
        prev = None
        for gen in range(1, upto + 1):
            z = rng.standard_normal((n, self.config.noise_dim))
            out, cache = self.G(gen).forward(self._gen_input(gen, z, prev))
            outputs[gen] = out
            if keep_cache:
                caches[gen] = cache
            prev = out
        return outputs, caches

    def assemble(self, outputs, forward_only=False):
        n = next(iter(outputs.values())).shape[0]
        x = np.empty((n, num_coeffs(self.config.bandlimit)))
        for gen, band in self.assembly_generators(forward_only):
            x[:, self.partition.bands[band - 1]] = outputs[gen]
        return x

    def chain_end(self, forward_only=False):
        if forward_only or not self.config.backward_pass:
            return self.t_prime
        return self.total

    def backprop_chain(self, outputs, caches, grad_x, forward_only=False):
        """Parameter gradients of every generator for ``dL/dx`` on the assembled vector."""
        end = self.chain_end(forward_only)
        grad_out = {g: np.zeros_like(outputs[g]) for g in range(1, end + 1)}
        for gen, band in self.assembly_generators(forward_only):
            grad_out[gen] += grad_x[:, self.partition.bands[band - 1]]
        grads = {}
        for gen in range(end, 0, -1):
            grads[gen], grad_in = self.G(gen).backward(caches[gen], grad_out[gen])
            if gen > 1:
                gc = grad_in[:, self.config.noise_dim:]
                idx = condition_indices(outputs[gen - 1].shape[1], self.config.cond_dim)
                np.add.at(grad_out[gen - 1], (slice(None), idx), gc)
        return grads


def synthesize_normalized(stack, n, rng=None, forward_only=False):
    outputs, _ = stack.run_chain(stack.chain_end(forward_only), n, rng=rng)
    return stack.assemble(outputs, forward_only)


def synthesize_smv(stack, count=1, seed=None, forward_only=False):
    """Draw ``count`` moment vectors from the cascade, denormalized to dataset scale.

    With ``seed`` the draw uses its own generator and is reproducible;
    otherwise the stack's training RNG advances.
    """
    rng = None if seed is None else np.random.default_rng(seed)
    x = synthesize_normalized(stack, count, rng, forward_only)
    if not np.all(np.isfinite(x)):
        raise NumericalAbort("synthesized coefficients are not finite")
    return [SMV(stack.config.bandlimit, row) for row in x * stack.scale]


# -- adversarial training -----------------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_finite(value, phase, gen):
    if not np.isfinite(value):
        raise NumericalAbort(f"non-finite loss in {phase} phase, generator {gen}")


def _real_batch(stack, dataset, band, n):
    idx = stack.rng.integers(0, len(dataset), size=n)
    return dataset.normalized[idx][:, stack.partition.bands[band - 1]], idx


def _condition_source(stack, gen, dataset, n):
    """Previous-generator output used to condition ``gen`` (None for G_1)."""
    if gen == 1:
        return None
    prev = gen - 1
    if stack.config.real_conditioning:
        return _real_batch(stack, dataset, stack.partition.band_of(prev), n)[0]
    outputs, _ = stack.run_chain(prev, n)
    return outputs[prev]


def sample_fakes(stack, gen, dataset, n):
    prev = _condition_source(stack, gen, dataset, n)
    return stack.G(gen)(stack._gen_input(gen, stack.noise(n), prev))


def discriminator_step(stack, gen, dataset, fake=None):
    """One RMSprop update of ``D_gen`` on a real and a fake batch; returns the loss."""
    n = stack.config.batch
    band = stack.partition.band_of(gen)
    real, _ = _real_batch(stack, dataset, band, n)
    if fake is None:
        fake = sample_fakes(stack, gen, dataset, n)
    d = stack.D(gen)
    logits, cache = d.forward(np.concatenate([real, fake]))
    lr_, lf_ = logits[:n], logits[n:]
    loss = float(_softplus(-lr_).mean() + _softplus(lf_).mean())
    _check_finite(loss, "discriminator", gen)
    grad = np.concatenate([_sigmoid(lr_) - 1.0, _sigmoid(lf_)]) / n
    grads, _ = d.backward(cache, grad)
    rmsprop_step(stack.disc_states[gen - 1], d.params(), grads, d)
    return loss


def generator_step(stack, gen, dataset):
    """One RMSprop update of ``G_gen`` with the non-saturating loss; returns the loss."""
    n = stack.config.batch
    prev = _condition_source(stack, gen, dataset, n)
    g = stack.G(gen)
    fake, gcache = g.forward(stack._gen_input(gen, stack.noise(n), prev))
    d = stack.D(gen)
    logits, dcache = d.forward(fake)
    loss = float(_softplus(-logits).mean())
    _check_finite(loss, "generator", gen)
    _, grad_fake = d.backward(dcache, (_sigmoid(logits) - 1.0) / n)
    grads, _ = g.backward(gcache, grad_fake)
    rmsprop_step(stack.gen_states[gen - 1], g.params(), grads, g)
    return loss


def train_generator(stack, gen, dataset, iters, log_fn=None, phase="forward"):
    """``iters`` rounds of ``d_steps`` discriminator updates then one generator update."""
    n, k = stack.config.batch, stack.config.d_steps
    for it in range(iters):
        # G is fixed during the discriminator updates, so draw all fakes at once
        fakes = sample_fakes(stack, gen, dataset, n * k)
        for s in range(k):
            d_loss = discriminator_step(stack, gen, dataset, fakes[s * n:(s + 1) * n])
        g_loss = generator_step(stack, gen, dataset)
        if log_fn is not None:
            log_fn(phase, it, f"D{gen}", d_loss)
            log_fn(phase, it, f"G{gen}", g_loss)


def train_forward_pass(stack, dataset, iters, log_fn=None):
    for gen in range(1, stack.t_prime + 1):
        train_generator(stack, gen, dataset, iters, log_fn, "forward")
    return stack


def transfer_weights(stack):
    """Copy ``G_k`` into ``G_T'+k`` (and ``D_k`` into ``D_T'+k``) for k < T'.

    Where the input widths differ (``G_1`` takes noise only), the shared
    leading columns are copied and the extra conditioning columns are zeroed,
    so the copy initially ignores its condition. Optimizer state of the
    receiving networks is reset.
    """
    for k in range(1, stack.t_prime):
        dst_gen = stack.t_prime + k
        if stack.band_size(k) != stack.band_size(dst_gen):
            raise PartitionError(f"G_{k} and G_{dst_gen} produce different bands")
        src, dst = stack.G(k), stack.G(dst_gen)
        layers = []
        for ls, ld in zip(src.layers, dst.layers):
            w = np.zeros_like(ld.weights)
            cols = min(ls.in_dim, ld.in_dim)
            w[:, :cols] = ls.weights[:, :cols]
            layers.append(DenseLayer(w, ls.bias.copy(), ld.activation))
        stack.generators[dst_gen - 1] = MLP(layers)
        stack.discriminators[dst_gen - 1] = stack.D(k).copy()
        stack.gen_states[dst_gen - 1] = RmspropState(stack.gen_lr(dst_gen))
        stack.disc_states[dst_gen - 1] = RmspropState(stack.config.lr_disc)
    return stack


def train_backward_pass(stack, dataset, iters, log_fn=None):
    for gen in range(stack.t_prime + 1, stack.total + 1):
        train_generator(stack, gen, dataset, iters, log_fn, "backward")
    return stack


# -- spatial regularizer ------------------------------------------------------

class SpatialRegularizer:
    """Feature-space loss between reconstructed synthetic clouds and real clouds.

    ``real_features`` are global features of the real clouds, computed once
    since the extractor is frozen.
    """

    def __init__(self, stack, extractor, real_clouds):
        if not extractor.frozen:
            raise ValueError("feature extractor must be frozen before fine-tuning")
        self.stack = stack
        self.extractor = extractor
        self.basis = basis_matrix(stack.config.bandlimit)
        self.directions = grid_directions(stack.config.bandlimit)
        self.real_features = np.stack([extractor.extract(c) for c in real_clouds])
        self.clipped = 0

    def loss_and_grads(self, x, targets):
        """Mean ``||f_g - f_o||`` over the batch and its gradient w.r.t. normalized ``x``."""
        smv = x * self.stack.scale
        radii = self.basis.reconstruct(smv)
        grad_r = np.zeros_like(radii)
        total = 0.0
        n = x.shape[0]
        for b in range(n):
            keep = np.flatnonzero(radii[b] > 0)
            if keep.size == 0:
                continue
            u = self.directions[keep]
            feat, back = self.extractor.extract_with_grad(radii[b, keep, None] * u)
            diff = feat - targets[b]
            dist = float(np.sqrt(diff @ diff))
            total += dist
            if dist == 0.0:
                continue
            grad_pts, _ = back(diff / (dist * n))
            grad_r[b, keep] = (grad_pts * u).sum(axis=1)
        grad_smv = self.basis.backprop(grad_r)
        return total / n, grad_smv * self.stack.scale

    def step(self, forward_only=False):
        stack = self.stack
        n = stack.config.reg_batch
        outputs, caches = stack.run_chain(stack.chain_end(forward_only), n, keep_cache=True)
        x = stack.assemble(outputs, forward_only)
        targets = self.real_features[stack.rng.integers(0, len(self.real_features), size=n)]
        loss, grad_x = self.loss_and_grads(x, targets)
        if not np.isfinite(loss):
            raise NumericalAbort("non-finite regularizer loss")
        grads = stack.backprop_chain(outputs, caches, grad_x, forward_only)
        norm = math.sqrt(sum(float((g * g).sum()) for gs in grads.values() for g in gs))
        if norm > stack.config.grad_clip:
            self.clipped += 1
            log.warning("regularizer gradient norm %.3g clipped to %.3g", norm, stack.config.grad_clip)
            factor = stack.config.grad_clip / norm
            grads = {k: [g * factor for g in gs] for k, gs in grads.items()}
        for gen, gs in grads.items():
            rmsprop_step(stack.gen_states[gen - 1], stack.G(gen).params(), gs, stack.G(gen))
        return loss


def regularizer_finetune(stack, extractor, real_clouds, iters, log_fn=None, forward_only=False):
    reg = SpatialRegularizer(stack, extractor, real_clouds)
    for it in range(iters):
        loss = reg.step(forward_only)
        if log_fn is not None:
            log_fn("regularize", it, "G*", loss)
    return stack


# -- full training procedure ---------------------------------------------------

def train(stack, dataset, extractor=None, real_clouds=None, log_fn=None, checkpoint_dir=None):
    """Outer loop: forward pass, weight transfer, backward pass, spatial fine-tuning.

    Resumes after ``stack.completed_outer`` outer iterations and checkpoints
    after each one when ``checkpoint_dir`` is given.
    """
    cfg = stack.config
    if dataset.bandlimit != cfg.bandlimit:
        raise ValueError(f"dataset bandlimit {dataset.bandlimit} != config {cfg.bandlimit}")
    for outer in range(stack.completed_outer, cfg.outer_iters):
        log.info("outer iteration %d: forward pass", outer)
        train_forward_pass(stack, dataset, cfg.gen_iters, log_fn)
        if cfg.backward_pass:
            transfer_weights(stack)
            log.info("outer iteration %d: backward pass", outer)
            train_backward_pass(stack, dataset, cfg.gen_iters, log_fn)
        if extractor is not None and cfg.reg_iters > 0:
            log.info("outer iteration %d: spatial regularizer", outer)
            regularizer_finetune(stack, extractor, real_clouds, cfg.reg_iters, log_fn)
        stack.completed_outer = outer + 1
        if checkpoint_dir is not None:
            save_checkpoint(stack, checkpoint_dir)
    return stack


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(stack, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, (g, dsc) in enumerate(zip(stack.generators, stack.discriminators), 1):
        save_mlp(g, d / f"gen_{i}.nnw")
        save_mlp(dsc, d / f"disc_{i}.nnw")
    (d / "partition.txt").write_text(stack.partition.to_text())
    (d / "norm.txt").write_text("".join(f"{float(v)!r}\n" for v in stack.scale))
    (d / "config.txt").write_text(stack.config.to_text())
    arrays = {}
    for kind, states in (("gen", stack.gen_states), ("disc", stack.disc_states)):
        for i, st in enumerate(states, 1):
            for j, acc in enumerate(st.accumulators or []):
                arrays[f"{kind}{i}_{j}"] = acc
    np.savez(d / "optimizer.npz", **arrays)
    (d / "progress.json").write_text(json.dumps({
        "completed_outer": stack.completed_outer,
        "rng": stack.rng.bit_generator.state,
    }, default=int))


def load_checkpoint(directory, config=None):
    d = Path(directory)
    cfg = config or TrainConfig.from_text((d / "config.txt").read_text())
    stack = GeneratorStack(cfg, SmvDataset.load_scale(d / "norm.txt"))
    part = BandPartition.from_text((d / "partition.txt").read_text())
    if part.sizes() != stack.partition.sizes():
        raise PartitionError("checkpoint partition does not match configuration")
    for i in range(1, stack.total + 1):
        stack.generators[i - 1] = load_mlp(d / f"gen_{i}.nnw")
        stack.discriminators[i - 1] = load_mlp(d / f"disc_{i}.nnw")
    opt = d / "optimizer.npz"
    if opt.exists():
        with np.load(opt) as data:
            for kind, states, nets in (("gen", stack.gen_states, stack.generators),
                                       ("disc", stack.disc_states, stack.discriminators)):
                for i, (st, net) in enumerate(zip(states, nets), 1):
                    keys = [f"{kind}{i}_{j}" for j in range(len(net.params()))]
                    if all(k in data for k in keys):
                        st.accumulators = [data[k].copy() for k in keys]
    prog = d / "progress.json"
    if prog.exists():
        info = json.loads(prog.read_text())
        stack.completed_outer = info["completed_outer"]
        stack.rng.bit_generator.state = info["rng"]
    return stack
