"""Run configuration: flat ``key = value`` files, validation, manifests.

Every knob of a run lives in :class:`RunConfig`. Files may contain ``#``
comments and blank lines; unknown keys are rejected. ``to_manifest`` writes
the fully resolved configuration in a canonical form that parses back to an
equal config.
"""
import dataclasses
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InputError
from .fileio import read_matrix_csv
from .loss import MEAN, OT, AggregationMode
from .measures import METRICS
from .pipeline import (
    OptimizerConfig,
    PatchSampler,
    PromptSet,
    ToyEncoder,
    ToyGenerator,
    initial_latent,
    rng_stream,
    sample_patches,
)
from .sinkhorn import SinkhornConfig

PROMPT_LAYOUTS = ("random", "antipodal", "image_antipodal")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mode: str = OT
    metric: str = "cosine"
    # solver
    epsilon: float = 0.05
    tolerance: float = 1e-6
    max_iterations: int = 10_000
    log_domain: bool = True
    epsilon_scaling: bool = True
    strict: bool = False
    # generator / image
    latent_dim: int = 16
    image_height: int = 32
    image_width: int = 32
    smoothness: float = 4.0
    # patches / encoder
    n_patches: int = 16
    patch_resolution: int = 16
    patch_size_min: int = 8
    patch_size_max: int = 32
    pool: int = 2
    embed_dim: int = 32
    # descent
    learning_rate: float = 0.05
    iterations: int = 200
    resample: bool = True
    # prompts
    n_prompts: int = 2
    prompt_layout: str = "random"
    prompts_csv: str = ""
    prompt_labels: str = ""
    # diagnostics
    arrow_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in (OT, MEAN):
            raise ConfigError(f"mode must be 'ot' or 'mean', got {self.mode!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {sorted(METRICS)}, got {self.metric!r}")
        if self.prompt_layout not in PROMPT_LAYOUTS:
            raise ConfigError(f"prompt_layout must be one of {PROMPT_LAYOUTS}, got {self.prompt_layout!r}")
        for name in ("epsilon", "tolerance", "learning_rate"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        for name in ("max_iterations", "latent_dim", "image_height", "image_width", "n_patches",
                     "patch_resolution", "patch_size_min", "pool", "embed_dim", "iterations", "n_prompts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        if self.smoothness < 0 or self.arrow_scale < 0:
            raise ConfigError("smoothness and arrow_scale must be nonnegative")
        if not self.patch_size_min <= self.patch_size_max <= min(self.image_height, self.image_width):
            raise ConfigError(
                f"need patch_size_min <= patch_size_max <= image side, got "
                f"{self.patch_size_min}, {self.patch_size_max}, {self.image_height}x{self.image_width}"
            )
        if self.patch_resolution % self.pool:
            raise ConfigError(f"patch_resolution {self.patch_resolution} not divisible by pool {self.pool}")
        if self.prompt_layout != "random" and not self.prompts_csv and self.n_prompts != 2:
            raise ConfigError(f"prompt_layout {self.prompt_layout!r} defines exactly 2 prompts")

    # ------------------------------------------------------------------ I/O

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_manifest(self):
        lines = [f"{f.name} = {_format(getattr(self, f.name))}" for f in sorted(fields(self), key=lambda f: f.name)]
        return "\n".join(lines) + "\n"

    # ------------------------------------------------------------- builders

    def sinkhorn_config(self):
        return SinkhornConfig(self.epsilon, self.max_iterations, self.tolerance, self.log_domain, self.epsilon_scaling)

    def aggregation_mode(self, kind=None):
        kind = kind or self.mode
        return AggregationMode.ot(self.sinkhorn_config()) if kind == OT else AggregationMode.mean()

    def optimizer_config(self, kind=None):
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            iterations=self.iterations,
            n_patches=self.n_patches,
            mode=self.aggregation_mode(kind),
            seed=self.seed,
            resample_each_iteration=self.resample,
            metric=self.metric,
            strict=self.strict,
        )


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name, kind, text):
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config(text, source="<config>"):
    """Parse ``key = value`` lines into a dict of typed values."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(f"{source}:{lineno}: {key}", _TYPES[key], value)
    return values


def load_config(path=None, **overrides):
    values = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        values = parse_config(text, str(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# scene
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scene:
    generator: ToyGenerator
    sampler: PatchSampler
    encoder: ToyEncoder
    prompts: PromptSet
    z0: np.ndarray


def _labels(cfg, m):
    if not cfg.prompt_labels:
        return None
    labels = [s.strip() for s in cfg.prompt_labels.split(",")]
    if len(labels) != m:
        raise ConfigError(f"prompt_labels has {len(labels)} entries for {m} prompts")
    return labels


def build_prompts(cfg, gen=None, sampler=None, enc=None, z0=None):
    if cfg.prompts_csv:
        E = read_matrix_csv(cfg.prompts_csv)
        if E.shape[1] != cfg.embed_dim:
            raise InputError(f"{cfg.prompts_csv}: prompts have d={E.shape[1]}, embed_dim is {cfg.embed_dim}")
        return PromptSet.from_vectors(E, _labels(cfg, E.shape[0]))
    if cfg.prompt_layout == "random":
        return PromptSet.random(cfg.n_prompts, cfg.embed_dim, cfg.seed, _labels(cfg, cfg.n_prompts))
    if cfg.prompt_layout == "antipodal":
        return PromptSet.antipodal(cfg.embed_dim, cfg.seed, _labels(cfg, 2))
    # image_antipodal: prompt 0 points along the mean embedding of crops of
    # the initial image, prompt 1 is its negation, so the run starts out
    # leaning towards prompt 0
    image = gen.generate(z0)
    _, patches = sample_patches(image, cfg.n_patches, sampler, rng_stream(cfg.seed, "prompts"))
    v = np.mean([enc.encode(p) for p in patches], axis=0)
    v /= np.linalg.norm(v)
    return PromptSet(tuple(_labels(cfg, 2) or ("prompt_0", "prompt_1")), np.stack([v, -v]))


def build_scene(cfg):
    gen = ToyGenerator.from_seed(cfg.latent_dim, cfg.image_height, cfg.image_width, cfg.seed, cfg.smoothness)
    sampler = PatchSampler(cfg.patch_size_min, cfg.patch_size_max, cfg.patch_resolution)
    enc = ToyEncoder.from_seed(cfg.patch_resolution, cfg.pool, cfg.embed_dim, cfg.seed)
    z0 = initial_latent(cfg.latent_dim, cfg.seed)
    prompts = build_prompts(cfg, gen, sampler, enc, z0)
    return Scene(gen, sampler, enc, prompts, z0)
