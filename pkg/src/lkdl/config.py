"""
Experiment configuration.

Configs are JSON files validated into an ExperimentConfig tree. Overrides
given as "section.field=value" are applied to the raw mapping before
validation; values are parsed as JSON when possible and kept as strings
otherwise.
"""
import json
import logging
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .kernels import KernelSpec, parse_kernel
from .sampling import SamplerSpec
from .utils import RNG_ALGORITHM, RNG_VERSION, derive_seed

log = logging.getLogger(__name__)

LINEAR_PIPELINE = 'linear'
LKDL_PIPELINE = 'lkdl'
KERNEL_BASELINE = 'kernel_baseline'

DEFAULT_C_OVER_N = 0.2

class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')

class KernelConfig(_Section):
    kind: Literal['linear', 'polynomial', 'gaussian'] = 'gaussian'
    degree: int = Field(2, ge=1)
    sigma: float = Field(1.0, gt=0)
    offset: float = 0.0

    def spec(self):
        return KernelSpec(self.kind, degree=self.degree, sigma=self.sigma, offset=self.offset)

class SamplerConfig(_Section):
    method: Literal['uniform', 'diagonal', 'column_norm', 'kmeans', 'coreset'] = 'uniform'
    c: Optional[int] = Field(None, ge=1)
    c_over_n: Optional[float] = Field(None, gt=0, le=1)
    seed: Optional[int] = Field(None, ge=0)

    @model_validator(mode='after')
    def _one_size(self):
        if self.c is not None and self.c_over_n is not None:
            raise ValueError('give either c or c_over_n, not both')
        return self

    def landmark_count(self, n):
        if self.c is not None:
            return self.c
        fraction = DEFAULT_C_OVER_N if self.c_over_n is None else self.c_over_n
        return max(1, int(round(fraction * n)))

    def spec(self, n, seed):
        return SamplerSpec(self.method, self.landmark_count(n), seed if self.seed is None else self.seed)

class PerClassLearner(_Section):
    type: Literal['per_class'] = 'per_class'
    m_per_class: int = Field(20, ge=1)
    q: int = Field(3, ge=1)
    iterations: int = Field(5, ge=0)
    method: Literal['mod', 'ksvd'] = 'ksvd'

class LCKSVDLearner(_Section):
    type: Literal['lcksvd'] = 'lcksvd'
    m: int = Field(..., ge=1)
    q: int = Field(..., ge=1)
    alpha: float = Field((1.0 / 30) ** 2, ge=0)
    beta: float = Field((1.0 / 91) ** 2, ge=0)
    variant: Literal['LC1', 'LC2'] = 'LC2'
    tau2: float = Field(1e-4, gt=0)
    iterations: int = Field(5, ge=0)
    test_q: Optional[int] = Field(None, ge=1)

Learner = Annotated[Union[PerClassLearner, LCKSVDLearner], Field(discriminator='type')]

class CorruptionConfig(_Section):
    kind: Literal['gaussian', 'missing']
    sigma: float = Field(0.0, ge=0)
    fraction: float = Field(0.0, ge=0, le=1)

class RNGConfig(_Section):
    algorithm: Literal['PCG64'] = RNG_ALGORITHM
    version: Literal[1] = RNG_VERSION

class ExperimentConfig(_Section):
    dataset: str
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    k: int = Field(20, ge=1)
    pipeline: Literal['linear', 'lkdl', 'kernel_baseline'] = LKDL_PIPELINE
    learner: Learner = Field(default_factory=PerClassLearner)
    corruption: Optional[CorruptionConfig] = None
    repeats: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    output: str = 'lkdl_output'
    train_fraction: float = Field(1.0, gt=0, le=1)
    measure_approx_error: bool = False
    threads: int = Field(1, ge=1)
    rng: RNGConfig = Field(default_factory=RNGConfig)

    @field_validator('kernel', mode='before')
    @classmethod
    def _kernel_description(cls, value):
        # "linear", "poly:4", "poly:2:1.0" or "gaussian:1.5"
        if isinstance(value, str):
            spec = parse_kernel(value)
            return {'kind': spec.kind, 'degree': spec.degree, 'sigma': spec.sigma, 'offset': spec.offset}
        return value

    @model_validator(mode='after')
    def _baseline_learner(self):
        if self.pipeline == KERNEL_BASELINE and self.learner.type != 'per_class':
            raise ValueError('the kernel baseline only supports the per_class learner')
        return self

    def repeat_seed(self, repeat):
        return derive_seed(self.seed, repeat)

    def dump(self):
        return self.model_dump(mode='json')

def parse_override( text ):
    """
    Split "a.b=value" into (['a', 'b'], value)
    """
    if '=' not in text:
        msg = 'Override "%s" is not of the form key=value' % text
        log.error( msg )
        raise ValueError( msg )
    key, raw = text.split('=', 1)
    keys = [k.strip() for k in key.split('.') if k.strip()]
    if not keys:
        msg = 'Override "%s" has an empty key' % text
        log.error( msg )
        raise ValueError( msg )
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return keys, value

def apply_overrides( raw, overrides ):
    raw = json.loads(json.dumps(raw))
    for text in overrides or ():
        keys, value = parse_override(text)
        node = raw
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[keys[-1]] = value
    return raw

def validate( raw ):
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as error:
        fields = ['%s: %s' % ('.'.join(str(p) for p in e['loc']) or '<root>', e['msg']) for e in error.errors()]
        msg = 'Invalid experiment config: ' + '; '.join(fields)
        log.error( msg )
        raise ValueError( msg )

def load_config( path=None, overrides=(), seed=None, output=None, threads=None, kernel=None ):
    """
    Read, override and validate an experiment config; command-line flags
    take precedence over the file
    """
    raw = {}
    if path is not None:
        with open(path) as handle:
            try:
                raw = json.load(handle)
            except ValueError as error:
                msg = 'Config "%s" is not valid JSON: %s' % (path, error)
                log.error( msg )
                raise ValueError( msg )
    raw = apply_overrides(raw, overrides)
    for key, value in (('seed', seed), ('output', output), ('threads', threads), ('kernel', kernel)):
        if value is not None:
            raw[key] = value
    return validate(raw)
