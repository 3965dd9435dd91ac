"""Toy differentiable generation loop.

latent z -> generator -> image -> random crops -> encoder -> embeddings ->
aggregation loss, with a hand-written vector-Jacobian product for every stage
so that the gradient reaching z can be checked stage by stage.

The generator ``x = tanh(W z + c)`` and the encoder
``u = normalize(P pool(patch))`` are fixed random maps drawn from a seed.
"""
import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ConvergenceError, DomainError, OTGuideError, ShapeError
from .loss import AggregationMode, LossReport, evaluate_loss
from .measures import DEFAULT_METRIC, as_embeddings

log = logging.getLogger(__name__)


def rng_stream(seed, name):
    """Independent generator for the named sub-stream of ``seed``.

    Streams never share state, so e.g. changing the number of patches leaves
    the generator weights untouched.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


def _blur_matrix(length, sigma):
    t = np.arange(length)
    B = np.exp(-0.5 * ((t[:, None] - t[None, :]) / sigma) ** 2)
    return B / B.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ToyGenerator:
    weight: np.ndarray  # (h*w*3, d_z)
    bias: np.ndarray  # (h*w*3,)
    height: int
    width: int
    seed: int = 0

    @classmethod
    def from_seed(cls, latent_dim, height, width, seed, smoothness=4.0, bias_scale=0.1):
        """Draw W and c; each column of W is a Gaussian-blurred noise image.

        ``smoothness`` is the blur width in pixels (0 gives white noise). Each
        pixel of W z has unit variance for z ~ N(0, I).
        """
        rng = rng_stream(seed, "generator")
        noise = rng.standard_normal((latent_dim, height, width, 3))
        if smoothness > 0:
            By = _blur_matrix(height, smoothness)
            Bx = _blur_matrix(width, smoothness)
            noise = np.einsum("yh,khwc,xw->kyxc", By, noise, Bx)
        weight = noise.reshape(latent_dim, -1).T
        weight /= np.linalg.norm(weight, axis=1, keepdims=True)
        bias = bias_scale * rng.standard_normal(height * width * 3)
        return cls(weight, bias, height, width, seed)

    @property
    def latent_dim(self):
        return self.weight.shape[1]

    def _check(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise ShapeError(f"latent has shape {z.shape}, generator expects ({self.latent_dim},)")
        return z

    def generate(self, z):
        z = self._check(z)
        return np.tanh(self.weight @ z + self.bias).reshape(self.height, self.width, 3)

    def jvp(self, z, dz):
        x = self.generate(z)
        return ((1.0 - x * x).ravel() * (self.weight @ dz)).reshape(x.shape)

    def vjp(self, z, image_cotangent, image=None):
        x = self.generate(z) if image is None else image
        if image_cotangent.shape != x.shape:
            raise ShapeError(f"image cotangent has shape {image_cotangent.shape}, expected {x.shape}")
        return self.weight.T @ ((1.0 - x * x) * image_cotangent).ravel()


def generate(gen, z):
    return gen.generate(z)


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatchGeometry:
    x0: int
    y0: int
    size: int
    resolution: int

    def taps(self):
        return (
            kernels.axis_taps(self.y0, self.size, self.resolution),
            kernels.axis_taps(self.x0, self.size, self.resolution),
        )

    def check(self, image_shape):
        h, w = image_shape[:2]
        if self.x0 < 0 or self.y0 < 0 or self.x0 + self.size > w or self.y0 + self.size > h:
            raise ShapeError(f"crop {self} does not fit a {h}x{w} image")


@dataclass(frozen=True)
class PatchSampler:
    """Axis-aligned random crops with side length in [size_min, size_max]."""

    size_min: int
    size_max: int
    resolution: int

    def __post_init__(self):
        if not 1 <= self.size_min <= self.size_max:
            raise ConfigError(f"need 1 <= size_min <= size_max, got {self.size_min}, {self.size_max}")
        if self.resolution < 1:
            raise ConfigError("patch resolution must be positive")

    def draw(self, image_shape, n, rng):
        h, w = image_shape[:2]
        if self.size_max > min(h, w):
            raise ConfigError(f"patch size_max={self.size_max} exceeds the {h}x{w} image")
        if n < 1:
            raise ConfigError("number of patches must be positive")
        geoms = []
        for _ in range(n):
            size = int(rng.integers(self.size_min, self.size_max + 1))
            y0 = int(rng.integers(0, h - size + 1))
            x0 = int(rng.integers(0, w - size + 1))
            geoms.append(PatchGeometry(x0, y0, size, self.resolution))
        return geoms


def extract_patch(img, geometry):
    geometry.check(img.shape)
    return kernels.crop_resize(np.ascontiguousarray(img, dtype=np.float64), *geometry.taps())


def sample_patches(img, n, sampler, rng):
    geoms = sampler.draw(img.shape, n, rng)
    return geoms, [extract_patch(img, g) for g in geoms]


def patch_vjp(geometry, patch_cotangent, image_shape, out=None):
    """Pull a patch cotangent back to image space.

    With ``out`` given the result is accumulated into it, which is how the
    contributions of overlapping patches add up.
    """
    geometry.check(image_shape)
    p = geometry.resolution
    if patch_cotangent.shape != (p, p, image_shape[2]):
        raise ShapeError(f"patch cotangent has shape {patch_cotangent.shape}, expected {(p, p, image_shape[2])}")
    if out is None:
        out = np.zeros(image_shape)
    return kernels.crop_resize_adjoint(np.ascontiguousarray(patch_cotangent, dtype=np.float64), *geometry.taps(), out)


# ---------------------------------------------------------------------------
# encoder and prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyEncoder:
    projection: np.ndarray  # (d, (p/pool)^2 * 3)
    resolution: int
    pool: int
    seed: int = 0

    @classmethod
    def from_seed(cls, resolution, pool, dim, seed):
        if resolution % pool:
            raise ConfigError(f"patch resolution {resolution} is not divisible by pool factor {pool}")
        q = resolution // pool
        rng = rng_stream(seed, "encoder")
        proj = rng.standard_normal((dim, q * q * 3)) / np.sqrt(q * q * 3)
        return cls(proj, resolution, pool, seed)

    @property
    def dim(self):
        return self.projection.shape[0]

    def _pool(self, patch):
        p, k = self.resolution, self.pool
        if patch.shape != (p, p, 3):
            raise ShapeError(f"patch has shape {patch.shape}, encoder expects {(p, p, 3)}")
        return patch.reshape(p // k, k, p // k, k, 3).mean(axis=(1, 3)).ravel()

    def _unpool(self, cot):
        p, k = self.resolution, self.pool
        q = cot.reshape(p // k, 1, p // k, 1, 3) / (k * k)
        return np.broadcast_to(q, (p // k, k, p // k, k, 3)).reshape(p, p, 3)

    def _project(self, patch):
        y = self.projection @ self._pool(patch)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise DomainError("patch encodes to the zero vector")
        return y, norm

    def encode(self, patch):
        y, norm = self._project(patch)
        return y / norm

    def jvp(self, patch, dpatch):
        y, norm = self._project(patch)
        u = y / norm
        dy = self.projection @ self._pool(dpatch)
        return (dy - u * np.dot(u, dy)) / norm

    def vjp(self, patch, cotangent):
        y, norm = self._project(patch)
        u = y / norm
        dy = (cotangent - u * np.dot(u, cotangent)) / norm
        return self._unpool(self.projection.T @ dy)


def encode(enc, patch):
    return enc.encode(patch)


@dataclass(frozen=True)
class PromptSet:
    labels: tuple
    embeddings: np.ndarray

    def __post_init__(self):
        E = as_embeddings(self.embeddings)
        if len(self.labels) != E.shape[0]:
            raise ShapeError(f"{len(self.labels)} labels for {E.shape[0]} prompt embeddings")
        norms = np.linalg.norm(E, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise DomainError("prompt embeddings must have unit norm")
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "embeddings", E)

    @property
    def m(self):
        return self.embeddings.shape[0]

    @classmethod
    def from_vectors(cls, vectors, labels=None):
        E = as_embeddings(vectors)
        E = E / np.linalg.norm(E, axis=1, keepdims=True)
        labels = labels or [f"prompt_{j}" for j in range(E.shape[0])]
        return cls(tuple(labels), E)

    @classmethod
    def random(cls, m, dim, seed, labels=None):
        return cls.from_vectors(rng_stream(seed, "prompts").standard_normal((m, dim)), labels)

    @classmethod
    def antipodal(cls, dim, seed, labels=None):
        """Two prompts at cosine distance 2: a random direction and its negation."""
        v = rng_stream(seed, "prompts").standard_normal(dim)
        v /= np.linalg.norm(v)
        return cls(tuple(labels or ("prompt_0", "prompt_1")), np.stack([v, -v]))


# ---------------------------------------------------------------------------
# forward / backward / descent
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    z: np.ndarray
    image: np.ndarray
    geometries: list
    patches: list
    embeddings: np.ndarray
    report: LossReport
    generator: ToyGenerator = field(repr=False)
    encoder: ToyEncoder = field(repr=False)


def _stage(label, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except OTGuideError as exc:
        exc.args = (f"[{label}] {exc}",) + exc.args[1:]
        raise


def forward_loss(z, gen, geometries, enc, prompts, mode, metric=DEFAULT_METRIC, strict=False):
    """Evaluate the aggregation loss at latent ``z`` for fixed crop geometries."""
    image = _stage("generate", gen.generate, z)
    patches = _stage("sample", lambda: [extract_patch(image, g) for g in geometries])
    us = _stage("encode", lambda: np.stack([enc.encode(p) for p in patches]))
    report = _stage("loss", evaluate_loss, mode, us, prompts.embeddings, metric, strict=strict)
    cache = ForwardCache(np.asarray(z, dtype=np.float64), image, list(geometries), patches, us, report, gen, enc)
    return report.value, cache


def backward(cache):
    """Gradient of the cached loss with respect to the latent."""
    img_cot = np.zeros(cache.image.shape)
    # fixed patch order keeps the accumulation bitwise reproducible
    for geom, patch, g in zip(cache.geometries, cache.patches, cache.report.patch_gradients):
        patch_vjp(geom, cache.encoder.vjp(patch, g), cache.image.shape, out=img_cot)
    return cache.generator.vjp(cache.z, img_cot, image=cache.image)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    iterations: int = 200
    n_patches: int = 16
    mode: AggregationMode = field(default_factory=AggregationMode)
    seed: int = 0
    resample_each_iteration: bool = True
    metric: str = DEFAULT_METRIC
    strict: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.iterations < 1 or self.n_patches < 1:
            raise ConfigError("iterations and n_patches must be positive")


@dataclass
class TrajectoryRecord:
    loss: list = field(default_factory=list)
    transport_cost: list = field(default_factory=list)
    marginal_error: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def append(self, report):
        self.loss.append(report.value)
        self.transport_cost.append(report.transport_cost)
        self.marginal_error.append(report.marginal_error)
        C = report.cost_matrix
        self.counts.append(np.bincount(np.argmin(C, axis=1), minlength=C.shape[1]))

    def __len__(self):
        return len(self.loss)

    def rows(self):
        for k in range(len(self)):
            yield (k, self.loss[k], self.transport_cost[k], self.marginal_error[k], *map(int, self.counts[k]))


def optimize(cfg, gen, sampler, enc, prompts, z0):
    """Plain gradient descent on the latent.

    Returns the final latent and one trajectory row per iteration; row k
    describes the loss at the latent before step k.
    """
    rng = rng_stream(cfg.seed, "patches")
    z = np.array(z0, dtype=np.float64)
    shape = (gen.height, gen.width, 3)
    geoms = sampler.draw(shape, cfg.n_patches, rng)
    traj = TrajectoryRecord()
    for it in range(cfg.iterations):
        if cfg.resample_each_iteration and it > 0:
            geoms = sampler.draw(shape, cfg.n_patches, rng)
        try:
            _, cache = forward_loss(z, gen, geoms, enc, prompts, cfg.mode, cfg.metric, strict=cfg.strict)
        except ConvergenceError as exc:
            raise ConvergenceError(f"iteration {it}: {exc}", iterations_used=exc.iterations_used) from exc
        if not cache.report.converged:
            log.warning("iteration %d: Sinkhorn not converged (marginal error %.3g)", it, cache.report.marginal_error)
        traj.append(cache.report)
        z = z - cfg.learning_rate * backward(cache)
    return z, traj


def evaluation_state(z, gen, sampler, enc, prompts, mode, n_patches, seed, metric=DEFAULT_METRIC):
    """Forward pass on a fresh crop draw from the seed's evaluation stream.

    Uses the same geometries for any mode, so final states of different modes
    are compared on identical crops.
    """
    geoms = sampler.draw((gen.height, gen.width, 3), n_patches, rng_stream(seed, "evaluation"))
    return forward_loss(z, gen, geoms, enc, prompts, mode, metric)[1]


def initial_latent(latent_dim, seed):
    return rng_stream(seed, "latent").standard_normal(latent_dim)
