"""Run configuration: a versioned JSON document validated before any run."""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import CapabilityError, ConfigError
from ..models import make_model

SCHEMA_VERSION = 1
BOUNDS = ("ace", "pce", "ba", "ace_lf")
XI_MODES = ("score", "reparam", "rb")
PHI_MODES = ("reparam", "dreg", "none")


@dataclass
class RunConfig:
    """Everything needed to reproduce one optimisation run.

    ``model`` holds keyword arguments of the model constructor; ``eval``
    holds the evaluation sizes used by ``eval`` and ``trap``.
    """

    preset: str
    model_name: str
    model: dict = field(default_factory=dict)
    bound: str = "ace"
    xi_mode: str = "reparam"
    phi_mode: str = "reparam"
    N: int = 10
    L: int = 10
    steps: int = 1000
    lr0: float = 1e-3
    lr_final: float = None
    phi_lr0: float = None
    phi_lr_final: float = None
    jitter: float = 0.0
    checkpoint_every: int = 0
    seeds: list = field(default_factory=lambda: [0])
    eval: dict = field(default_factory=dict)
    output_dir: str = None
    schema_version: int = SCHEMA_VERSION

    # ---------------------------------------------------------------- checks
    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {self.schema_version}")
        if self.bound not in BOUNDS:
            raise ConfigError(f"unknown bound {self.bound!r}")
        if self.xi_mode not in XI_MODES:
            raise ConfigError(f"unknown gradient mode {self.xi_mode!r}")
        if self.phi_mode not in PHI_MODES:
            raise ConfigError(f"unknown guide gradient mode {self.phi_mode!r}")
        for name in ("N", "steps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.L < 0 or (self.bound in ("pce",) and self.L < 1):
            raise ConfigError("L must be non-negative (and positive for pce)")
        if self.lr0 <= 0:
            raise ConfigError("learning rate must be positive")
        try:
            model = self.build_model()
        except TypeError as exc:
            raise ConfigError(f"bad model arguments: {exc}") from exc
        if self.xi_mode == "reparam" and not model.reparam_outcome:
            raise ConfigError(f"{model.name} has discrete outcomes; reparam is unavailable")
        if self.xi_mode == "rb" and model.enumerate_outcomes() is None:
            raise ConfigError(f"{model.name} outcomes cannot be enumerated; rb is unavailable")
        if self.phi_mode == "dreg" and self.bound != "ace":
            raise ConfigError("double reparameterisation is defined for ace only")
        return self

    def build_model(self):
        try:
            return make_model(self.model_name, **self.model)
        except (CapabilityError, ConfigError):
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # ---------------------------------------------------------------- io
    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def hash(self):
        """Short digest of the configuration minus seeds and output location."""
        doc = self.to_dict()
        doc.pop("seeds", None)
        doc.pop("output_dir", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
