"""Run configuration: a versioned YAML tree mapped onto dataclasses.

Unknown keys anywhere in the tree are rejected, every field is validated on
load, and ``RunConfig.to_dict`` round-trips through :func:`load_config`.
"""
from dataclasses import asdict, dataclass, field, fields, is_dataclass
import math
from pathlib import Path
from typing import Optional, Union, get_args, get_origin, get_type_hints

import numpy as np
import yaml

from . import kernel as kern
from .discretize import DIRICHLET, SEMIMARTINGALE
from .errors import ConfigError
from .quadrature import QuadratureSpec

SCHEMA_VERSION = 1

FAMILIES = ("cauchy", "stable", "stable_like", "levy_mix", "constant", "expression", "sde")


@dataclass
class RegionConfig:
    type: str = "halfspace"            # halfspace | ball | everywhere | nowhere
    normal: Optional[list] = None
    offset: float = 0.0
    center: Optional[list] = None
    radius: float = 1.0

    def validate(self, where):
        if self.type not in ("halfspace", "ball", "everywhere", "nowhere"):
            raise ConfigError(f"{where}.type: unknown region {self.type!r}")


@dataclass
class KernelConfig:
    family: str = "cauchy"
    dim: int = 1
    alpha: Optional[Union[float, str]] = None     # number, or expression in x (stable_like)
    beta: Optional[float] = None
    region: RegionConfig = field(default_factory=RegionConfig)
    inner_radius: float = 1.0
    c: float = 1.0
    radius: Optional[float] = None
    density: Optional[str] = None
    symmetric: bool = False
    stationary: bool = False
    breaks: list = field(default_factory=list)
    drift: Optional[list] = None
    phi: Optional[str] = None
    base_alpha: float = 1.0

    def validate(self, where):
        if self.family not in FAMILIES:
            raise ConfigError(f"{where}.family: expected one of {', '.join(FAMILIES)}")
        if self.dim < 1:
            raise ConfigError(f"{where}.dim must be >= 1")
        if self.family == "stable" and not isinstance(self.alpha, (int, float)):
            raise ConfigError(f"{where}.alpha: the stable family needs a number in (0, 2)")
        if self.family == "stable" and not 0 < self.alpha < 2:
            raise ConfigError(f"{where}.alpha must lie in (0, 2)")
        if self.family == "stable_like" and self.alpha is None:
            raise ConfigError(f"{where}.alpha: stable_like needs an expression in x")
        if self.family == "levy_mix":
            if self.alpha is None or self.beta is None:
                raise ConfigError(f"{where}: levy_mix needs alpha and beta")
            if not (0 < float(self.alpha) < 2 and 0 < self.beta < 2):
                raise ConfigError(f"{where}.alpha/beta must lie in (0, 2)")
        if self.family == "expression" and not self.density:
            raise ConfigError(f"{where}.density: expression family needs a density")
        if self.family == "sde" and not self.phi:
            raise ConfigError(f"{where}.phi: sde family needs phi")
        self.region.validate(where + ".region")


@dataclass
class SchemeConfig:
    name: str = DIRICHLET
    p: Optional[float] = None      # None: 0.99 min(1, 1/sup alpha) for stable_like, else 1/2

    def validate(self, where):
        if self.name not in (DIRICHLET, SEMIMARTINGALE):
            raise ConfigError(f"{where}.name: expected {DIRICHLET!r} or {SEMIMARTINGALE!r}")
        if self.p is not None and not 0 < self.p <= 1:
            raise ConfigError(f"{where}.p must lie in (0, 1], got {self.p}")


@dataclass
class LatticeConfig:
    n: Union[int, list] = 16
    window_radius: Optional[float] = None     # None: derived from the tail mass
    reach: Optional[float] = None             # None: twice the window radius

    @property
    def n_list(self):
        return list(self.n) if isinstance(self.n, list) else [self.n]

    def validate(self, where):
        ns = self.n_list
        if not ns or any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in ns):
            raise ConfigError(f"{where}.n must be a positive integer or a list of them")
        if self.window_radius is not None and not self.window_radius > 0:
            raise ConfigError(f"{where}.window_radius must be positive")
        if self.reach is not None and not self.reach > 0:
            raise ConfigError(f"{where}.reach must be positive")


@dataclass
class TruncationConfig:
    radius: float = 1.0

    def validate(self, where):
        if not self.radius > 0:
            raise ConfigError(f"{where}.radius must be positive")


@dataclass
class SimulationSection:
    T: float = 1.0
    n_paths: int = 10000
    seed: int = 0
    x0: list = field(default_factory=lambda: [0.0])
    initial_density: Optional[str] = None     # expression in x; overrides x0
    times: list = field(default_factory=list)
    trace_paths: int = 1                      # paths whose characteristics are exported

    def validate(self, where):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"{where}.T must be positive")
        if self.n_paths < 1:
            raise ConfigError(f"{where}.n_paths must be >= 1")
        if self.seed < 0:
            raise ConfigError(f"{where}.seed must be >= 0")
        if any(not 0 <= t <= self.T for t in self.times):
            raise ConfigError(f"{where}.times must lie in [0, T]")
        if self.trace_paths < 0:
            raise ConfigError(f"{where}.trace_paths must be >= 0")


@dataclass
class ConditionsSection:
    rho: list = field(default_factory=lambda: [1.0])
    r_grid: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    eps_grid: list = field(default_factory=lambda: [0.5, 0.25, 0.125, 0.0625])
    probes: list = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    probe_radius: float = 1.0
    bumps: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    discrete: bool = True
    thresholds: dict = field(default_factory=dict)

    def validate(self, where):
        if not self.rho or any(not r > 0 for r in self.rho):
            raise ConfigError(f"{where}.rho must be a nonempty list of positive radii")
        if not self.probes:
            raise ConfigError(f"{where}.probes must be nonempty")
        for k, v in self.thresholds.items():
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"{where}.thresholds.{k} must be a number")


@dataclass
class SemigroupSection:
    t: float = 0.5
    initial: str = "cauchy"        # "cauchy" (scale 1 density), "gaussian", or an expression in x
    tol: float = 1e-12

    def validate(self, where):
        if not self.t > 0:
            raise ConfigError(f"{where}.t must be positive")
        if not 0 < self.tol < 1:
            raise ConfigError(f"{where}.tol must lie in (0, 1)")


@dataclass
class DiagnosticsSection:
    xi: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    level: float = 0.99
    ks_threshold: float = 0.05
    reference: str = "auto"        # auto | cauchy | none

    def validate(self, where):
        if not 0 < self.level < 1:
            raise ConfigError(f"{where}.level must lie in (0, 1)")
        if self.reference not in ("auto", "cauchy", "none"):
            raise ConfigError(f"{where}.reference: expected auto, cauchy or none")


@dataclass
class QuadratureSection:
    q: int = 3
    eps_inner: float = 1e-6
    max_levels: int = 8
    rtol: float = 1e-10
    panel_nodes: int = 8
    angular_nodes: int = 32

    def validate(self, where):
        try:
            self.spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def spec(self):
        return QuadratureSpec(**asdict(self))


@dataclass
class OutputSection:
    dir: str = "out"
    plots: bool = True
    export_triplets: bool = False


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    kernel: KernelConfig = field(default_factory=KernelConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    conditions: ConditionsSection = field(default_factory=ConditionsSection)
    semigroup: SemigroupSection = field(default_factory=SemigroupSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    quadrature: QuadratureSection = field(default_factory=QuadratureSection)
    output: OutputSection = field(default_factory=OutputSection)
    threads: int = 1

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}")
        for f in fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "validate"):
                v.validate(f.name)
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if len(self.simulation.x0) != self.kernel.dim:
            raise ConfigError("simulation.x0 needs one coordinate per dimension")
        return self

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


# ---------------------------------------------------------------------------
# Loading.

def _coerce(value, tp, where):
    origin = get_origin(tp)
    if is_dataclass(tp):
        return _from_tree(tp, value, where)
    if origin is Union:
        args = get_args(tp)
        if value is None and type(None) in args:
            return None
        errors = []
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(value, a, where)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(f"{where}: unexpected value {value!r}")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return value
    if tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {value!r}")
        return value
    return value


def _from_tree(cls, tree, where):
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping")
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(tree) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) {', '.join(map(str, unknown))}")
    kw = {}
    for name in names & set(tree):
        kw[name] = _coerce(tree[name], hints[name], f"{where}.{name}" if where else name)
    return cls(**kw)


def config_from_dict(tree):
    """Validate a parsed tree into a :class:`RunConfig`."""
    if isinstance(tree, dict) and "schema_version" not in tree:
        raise ConfigError("schema_version: missing")
    return _from_tree(RunConfig, tree, "").validate()


def load_config(path):
    """Read and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return config_from_dict(tree)


def default_yaml():
    return RunConfig().to_yaml()


# ---------------------------------------------------------------------------
# Construction of kernels and fields.

def _region(rc, dim):
    spec = {"type": rc.type, "offset": rc.offset, "radius": rc.radius}
    if rc.normal is not None:
        spec["normal"] = rc.normal
    if rc.center is not None:
        spec["center"] = rc.center
    return kern.region_from_spec(spec, dim)


def _alpha_fn(alpha, dim):
    if isinstance(alpha, (int, float)):
        return float(alpha)
    from .expr import point_expression
    return point_expression(str(alpha), dim)


def make_kernel(kc):
    """Jump kernel for the cell-averaged scheme."""
    d = kc.dim
    fam = kc.family
    if fam == "cauchy":
        return kern.cauchy_kernel(d)
    if fam == "stable":
        return kern.stable_like_kernel(float(kc.alpha), d)
    if fam == "stable_like":
        return kern.stable_like_kernel(_alpha_fn(kc.alpha, d), d)
    if fam == "levy_mix":
        return kern.levy_mix_kernel(float(kc.alpha), float(kc.beta), _region(kc.region, d), d,
                                    kc.inner_radius)
    if fam == "constant":
        return kern.constant_kernel(kc.c, d, np.inf if kc.radius is None else kc.radius)
    if fam == "expression":
        return kern.expression_kernel(kc.density, d, kc.symmetric, kc.stationary, kc.breaks)
    raise ConfigError(f"kernel.family {fam!r} has no kernel form; use the semimartingale scheme")


def make_field(kc):
    """Levy-measure field for the measure scheme."""
    d = kc.dim
    fam = kc.family
    if fam == "cauchy":
        return kern.cauchy_field(d)
    if fam == "stable":
        return kern.stable_field(float(kc.alpha), d)
    if fam == "stable_like":
        return kern.stable_like_field(_alpha_fn(kc.alpha, d), d)
    if fam == "sde":
        from .expr import point_expression
        return kern.sde_field(point_expression(kc.phi, d), kern.stable_field(kc.base_alpha, d), d)
    if fam == "expression":
        return kern.expression_field(kc.density, d, kc.symmetric, kc.stationary, kc.drift)
    raise ConfigError(f"kernel.family {fam!r} has no measure form; use the dirichlet scheme")


def resolved_p(cfg):
    """The configured p, or the family default when it is left empty."""
    if cfg.scheme.p is not None:
        return cfg.scheme.p
    kc = cfg.kernel
    if kc.family == "stable_like":
        fn = _alpha_fn(kc.alpha, kc.dim)
        if isinstance(fn, float):
            top = fn
        else:
            probe = np.zeros((401, kc.dim))
            probe[:, 0] = np.linspace(-20.0, 20.0, 401)
            top = float(np.max(fn(probe)))
        return 0.99 * min(1.0, 1.0 / top)
    if cfg.scheme.name == DIRICHLET and kc.family in ("cauchy", "stable"):
        top = 1.0 if kc.family == "cauchy" else float(kc.alpha)
        return 0.99 * min(1.0, 1.0 / top)
    return 0.5


def make_source(cfg):
    return make_kernel(cfg.kernel) if cfg.scheme.name == DIRICHLET else make_field(cfg.kernel)
