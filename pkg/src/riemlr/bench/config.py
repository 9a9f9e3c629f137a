"""Run configuration and its flat ``key=value`` file format."""

import dataclasses
from dataclasses import dataclass

from ..estimators import FAMILY_DEFAULT_THETA
from ..exceptions import ParameterDomainError
from ..spdgeo import MetricParams

CLASSIFIERS = ("logeig", "lem", "aim", "em", "lcm", "bwm", "lie")
SPD_FAMILIES = ("lem", "aim", "em", "lcm", "bwm")

#: Deformation exponents tried per family in hyper-parameter sweeps. For
#: ``bwm`` the value is the half-power, so 0.5 is the undeformed metric.
THETA_GRID = {
    "lem": (1.0,),
    "aim": (0.25, 0.5, 0.75, 1.0, 1.25, 1.5),
    "em": (0.5, 1.0, 1.5),
    "lcm": (0.5, 1.0, 1.5),
    "bwm": (0.25, 0.5, 0.75),
}
BETA_EPS = 1e-6


def beta_grid(n, eps=BETA_EPS):
    """Candidate trace weights for input dimension ``n`` (with ``alpha = 1``)."""
    return (1.0, 1.0 / n, 1.0 / n**2, 0.0, -1.0 / n + eps, -1.0 / n**2)


def candidate_grid(n):
    """Every ``(classifier, theta, alpha, beta)`` of the sweep for dimension ``n``."""
    out = []
    for clf in SPD_FAMILIES:
        betas = beta_grid(n) if clf in ("lem", "aim", "em") else (0.0,)
        for theta in THETA_GRID[clf]:
            out.extend((clf, theta, 1.0, b) for b in betas)
    out.append(("logeig", None, 1.0, 0.0))
    out.append(("lie", None, 1.0, 0.0))
    return out


@dataclass
class RunConfig:
    """Everything that determines a training run.

    ``n``, ``n_classes``, ``per_class``, ``sigma`` and ``blocks`` describe the
    synthetic dataset; ``blocks`` is the SO(3) block count of the ``lie`` task.
    """

    classifier: str = "aim"
    theta: float | None = None
    alpha: float = 1.0
    beta: float = 0.0
    epochs: int = 200
    batch: int = 30
    lr: float = 1e-2
    momentum: float = 0.9
    seed: int = 42
    grad_clip: float | None = 5.0
    n: int = 10
    n_classes: int = 3
    per_class: int = 200
    sigma: float = 0.3
    blocks: int = 2

    def __post_init__(self):
        self.classifier = str(self.classifier).lower()
        self.validate()

    @property
    def data_kind(self):
        return "so3" if self.classifier == "lie" else "spd"

    def metric_params(self, n=None):
        """Validated :class:`MetricParams` of an SPD family, else ``None``."""
        if self.classifier not in SPD_FAMILIES:
            return None
        family = self.classifier.upper()
        theta = FAMILY_DEFAULT_THETA[family] if self.theta is None else self.theta
        mp = MetricParams(family, theta, self.alpha, self.beta)
        return mp.validate(self.n if n is None else n)

    def validate(self):
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        for key in ("epochs", "batch", "n", "n_classes", "per_class", "blocks"):
            v = getattr(self, key)
            if int(v) != v or v < (0 if key == "epochs" else 1):
                raise ValueError(f"{key} must be a {'non-negative' if key == 'epochs' else 'positive'} integer, got {v}")
        if self.n < 2 or self.n_classes < 2:
            raise ValueError("need n >= 2 and n_classes >= 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive or none")
        if not self.alpha > 0 or not self.alpha + self.n * self.beta > 0:
            raise ParameterDomainError(
                f"(alpha, beta) = ({self.alpha}, {self.beta}) needs min(alpha, alpha + n beta) > 0 for n = {self.n}"
            )
        self.metric_params()
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def dumps(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={'none' if v is None else (repr(v) if isinstance(v, float) else v)}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT_FIELDS = {"epochs", "batch", "seed", "n", "n_classes", "per_class", "blocks"}
_OPTIONAL = {"theta", "grad_clip"}


def coerce(key, text):
    """Parse a config value given as text."""
    if key not in _FIELDS:
        raise KeyError(f"unknown config key {key!r}")
    if isinstance(text, str):
        text = text.strip()
        if key in _OPTIONAL and text.lower() in ("none", ""):
            return None
        if key == "classifier":
            return text
        return int(text) if key in _INT_FIELDS else float(text)
    return text


def parse_config_text(text):
    """Read ``key=value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            values[key] = coerce(key, value)
        except KeyError as exc:
            raise ValueError(f"line {lineno}: {exc.args[0]}") from None
    return values


def load_config(path=None, **overrides):
    """Build a :class:`RunConfig` from an optional file plus overrides.

    ``None`` overrides are ignored so unset command-line flags fall through to
    the file or the defaults.
    """
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: coerce(k, v) for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
