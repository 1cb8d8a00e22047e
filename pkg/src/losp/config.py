"""Run configuration: one JSON document with nested sections.

Sections mirror the pipeline stages (phantom, phase, encoding, solver,
train, eval). Parsing is strict: unknown keys anywhere in the document are
rejected, and the document round-trips losslessly through ``to_dict`` /
``from_dict``. ``snr_db: null`` encodes a noiseless acquisition.
"""

import json
import math
from dataclasses import asdict, dataclass, field

from .errors import ConfigError


def _take(doc: dict, section: str, known: dict) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section} must be a JSON object")
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    merged = dict(known)
    merged.update(doc)
    return merged


@dataclass
class PhantomSection:
    size_ro: int = 64
    size_pe: int = 64
    n_regions: int = 6
    magnitude_range: tuple = (0.2, 1.0)

    def validate(self):
        if self.size_ro < 8 or self.size_pe < 8:
            raise ConfigError("phantom sizes must be >= 8")
        if self.n_regions < 1:
            raise ConfigError("phantom n_regions must be >= 1")


@dataclass
class PhaseSection:
    n_shots: int = 2
    order_range: tuple = (1, 1)
    coeff_scale: float = math.pi
    order_overrides: dict = field(default_factory=dict)
    zero_first_shot: bool = False

    def validate(self):
        if self.n_shots < 1:
            raise ConfigError("n_shots must be >= 1")
        lo, hi = self.order_range
        if not 0 <= lo <= hi:
            raise ConfigError("invalid order_range")
        if self.coeff_scale < 0:
            raise ConfigError("coeff_scale must be >= 0")

    def overrides(self) -> dict:
        return {int(k): tuple(v) for k, v in self.order_overrides.items()}


@dataclass
class EncodingSection:
    n_coils: int = 1
    pattern: str = "interleaved"
    rate: float = 1.0
    snr_db: float | None = 8.0  # None = noiseless

    def validate(self):
        if self.n_coils < 1:
            raise ConfigError("n_coils must be >= 1")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError("rate must be in (0, 1]")

    def snr(self) -> float:
        return math.inf if self.snr_db is None else float(self.snr_db)


@dataclass
class PolicySection:
    kind: str = "fixed"  # fixed | oracle | learned
    r: int = 8
    weights: str | None = None

    def validate(self):
        if self.kind not in ("fixed", "oracle", "learned"):
            raise ConfigError(f"unknown rank policy {self.kind!r}")
        if self.kind == "fixed" and self.r < 1:
            raise ConfigError("fixed rank must be >= 1")
        if self.kind == "learned" and not self.weights:
            raise ConfigError("learned policy needs a weights path")


@dataclass
class SolverSection:
    lam: float = 1.0
    iterations: int = 20
    window: int = 10
    rho: float = 1.0
    tau: float = 1.0
    cg_iters: int = 10
    cg_tol: float = 1e-6
    variant: str = "ro&pe"
    ranks_every_iteration: bool = True
    rank_policy: PolicySection = field(default_factory=PolicySection)

    def validate(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        for name in ("iterations", "window", "rho", "tau", "cg_iters", "cg_tol"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"solver {name} must be positive")
        if self.variant not in ("ro&pe", "ro", "pe"):
            raise ConfigError(f"unknown solver variant {self.variant!r}")
        self.rank_policy.validate()


@dataclass
class TrainSection:
    epochs: int = 40
    lr: float = 1e-3
    decay_factor: float = 0.9
    decay_every: int = 50
    batch_size: int = 64
    split: float = 0.9
    channels: int = 16
    blocks: int = 4
    kernel: int = 3
    n_images: int = 16
    snr_range: tuple = (1.0, 15.0)
    j_values: tuple = (2,)
    order_range: tuple = (0, 5)

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1 or self.n_images < 1:
            raise ConfigError("train counts must be >= 1")
        if not 0 < self.split < 1:
            raise ConfigError("split must be in (0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not self.j_values:
            raise ConfigError("j_values must not be empty")


@dataclass
class EvalSection:
    b_values: tuple = (0.0, 500.0, 1000.0)
    adc_true: float = 1.26e-3
    adc_snr_db: float = 12.0

    def validate(self):
        if len(self.b_values) < 2:
            raise ConfigError("at least two b-values are required")
        if self.adc_true <= 0:
            raise ConfigError("adc_true must be positive")


@dataclass
class RunConfig:
    seed: int = 0
    phantom: PhantomSection = field(default_factory=PhantomSection)
    phase: PhaseSection = field(default_factory=PhaseSection)
    encoding: EncodingSection = field(default_factory=EncodingSection)
    solver: SolverSection = field(default_factory=SolverSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self):
        for section in (self.phantom, self.phase, self.encoding, self.solver,
                        self.train, self.eval):
            section.validate()

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["solver"]["lambda"] = doc["solver"].pop("lam")
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        top = _take(doc, "config", {
            "seed": 0, "phantom": {}, "phase": {}, "encoding": {},
            "solver": {}, "train": {}, "eval": {}})

        def build(section_cls, name, data, nested=()):
            defaults = {f: getattr(section_cls(), f)
                        for f in section_cls.__dataclass_fields__}
            for key in nested:
                defaults.pop(key, None)
            merged = _take({k: v for k, v in data.items() if k not in nested},
                           name, defaults)
            return merged

        phantom = PhantomSection(**_tuplify(build(PhantomSection, "phantom", top["phantom"])))
        phase = PhaseSection(**_tuplify(build(PhaseSection, "phase", top["phase"])))
        encoding = EncodingSection(**_tuplify(build(EncodingSection, "encoding", top["encoding"])))

        solver_doc = dict(top["solver"])
        if "lambda" in solver_doc:
            solver_doc["lam"] = solver_doc.pop("lambda")
        policy_doc = solver_doc.pop("rank_policy", {})
        solver_kwargs = _tuplify(build(SolverSection, "solver", solver_doc,
                                       nested=("rank_policy",)))
        policy = PolicySection(**_take(policy_doc, "solver.rank_policy", {
            f: getattr(PolicySection(), f) for f in PolicySection.__dataclass_fields__}))
        solver = SolverSection(rank_policy=policy, **solver_kwargs)

        train = TrainSection(**_tuplify(build(TrainSection, "train", top["train"])))
        eval_ = EvalSection(**_tuplify(build(EvalSection, "eval", top["eval"])))
        cfg = cls(seed=int(top["seed"]), phantom=phantom, phase=phase,
                  encoding=encoding, solver=solver, train=train, eval=eval_)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        try:
            return cls.from_dict(doc)
        except ConfigError:
            raise
        except (TypeError, AttributeError, ValueError, KeyError) as exc:
            raise ConfigError(f"malformed config document: {exc}") from exc


def _tuplify(kwargs: dict) -> dict:
    """JSON arrays come back as lists; dataclass tuples stay tuples."""
    return {k: tuple(v) if isinstance(v, list) else v for k, v in kwargs.items()}


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_json(text)
