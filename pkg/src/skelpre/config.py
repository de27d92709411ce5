"""Experiment configuration: key=value grammar, validation, serialization."""

from __future__ import annotations

from dataclasses import dataclass, field

DOMAINS = ("square", "crack", "graded")
METHODS = ("hdg1", "hdg2", "hdg3", "hdg4", "wg1", "wg2", "cr")
PROLONGATIONS = {"p1": "face_mean", "p2": "face_l2"}
PRECONDITIONERS = ("bpx", "aux")
SMOOTHERS = ("jacobi", "sgs", "richardson")
COARSE_KINDS = ("exact", "bpx")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: discretization, prolongation, levels, preconditioner.

    Defaults mirror the reported runs: zero right-hand side, all-ones
    initial guess, reduction 1e-6."""

    domain: str = "square"
    method: str = "hdg3"
    k: int = 0
    prolongation: str = "p2"
    levels: tuple = (5,)
    preconditioner: str = "bpx"
    smoother: str = None
    coarse: str = None
    reduction: float = 1e-6
    output: str = None
    rhs_rule: str = "zero"       # "zero" | "manufactured"
    initial_guess: str = "ones"  # "ones" | "zero"

    @property
    def prolongation_kind(self):
        return PROLONGATIONS[self.prolongation]


def _validate(cfg, line_of=None):
    def err(msg, key=None):
        raise ConfigError(msg, line_of.get(key) if line_of else None)

    if cfg.domain not in DOMAINS:
        err(f"unknown domain {cfg.domain!r}", "domain")
    if cfg.method not in METHODS:
        err(f"unknown method {cfg.method!r}", "method")
    if cfg.k < 0 or cfg.k > 4:
        err(f"degree k={cfg.k} outside 0..4", "k")
    if cfg.method in ("hdg2", "wg2") and cfg.k < 1:
        err(f"{cfg.method} requires k >= 1", "method")
    if cfg.method == "cr" and cfg.k != 0:
        err("cr requires k = 0", "method")
    if cfg.prolongation not in PROLONGATIONS:
        err(f"unknown prolongation {cfg.prolongation!r}", "prolongation")
    if not cfg.levels or any(l < 0 for l in cfg.levels):
        err("levels must be nonnegative", "levels")
    if list(cfg.levels) != sorted(cfg.levels):
        err("levels must be ascending", "levels")
    if cfg.preconditioner not in PRECONDITIONERS:
        err(f"unknown preconditioner {cfg.preconditioner!r}", "preconditioner")
    if cfg.preconditioner == "aux":
        if cfg.smoother is None or cfg.coarse is None:
            err("aux preconditioner requires smoother and coarse keys", "preconditioner")
        if cfg.smoother not in SMOOTHERS:
            err(f"unknown smoother {cfg.smoother!r}", "smoother")
        if cfg.coarse not in COARSE_KINDS:
            err(f"unknown coarse operator {cfg.coarse!r}", "coarse")
    else:
        if cfg.smoother is not None or cfg.coarse is not None:
            err("bpx preconditioner forbids smoother/coarse keys", "preconditioner")
    if not 0.0 < cfg.reduction < 1.0:
        err("reduction must lie in (0, 1)", "reduction")
    return cfg


_KEYS = (
    "domain", "method", "k", "prolongation", "levels", "preconditioner",
    "smoother", "coarse", "reduction", "output",
)


def parse_config(text):
    """Parse the one key=value per line grammar ('#' starts a comment)."""
    values = {}
    line_of = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        for tok in stripped.split():
            if "=" not in tok:
                raise ConfigError(f"expected key=value, got {tok!r}", ln)
            key, val = tok.split("=", 1)
            if key not in _KEYS:
                raise ConfigError(f"unknown key {key!r}", ln)
            if key in values:
                raise ConfigError(f"duplicate key {key!r}", ln)
            values[key] = val
            line_of[key] = ln

    kwargs = {}
    if "domain" in values:
        kwargs["domain"] = values["domain"]
    if "method" in values:
        kwargs["method"] = values["method"]
    if "k" in values:
        try:
            kwargs["k"] = int(values["k"])
        except ValueError:
            raise ConfigError(f"k must be an integer, got {values['k']!r}", line_of["k"])
    if "prolongation" in values:
        kwargs["prolongation"] = values["prolongation"]
    if "levels" in values:
        txt = values["levels"]
        if ".." not in txt:
            raise ConfigError(
                f"levels must be an inclusive range a..b, got {txt!r}", line_of["levels"]
            )
        try:
            a, b = (int(p) for p in txt.split("..", 1))
        except ValueError:
            raise ConfigError(f"bad level range {txt!r}", line_of["levels"])
        if b < a:
            raise ConfigError(f"empty level range {txt!r}", line_of["levels"])
        kwargs["levels"] = tuple(range(a, b + 1))
    if "preconditioner" in values:
        kwargs["preconditioner"] = values["preconditioner"]
    if "smoother" in values:
        kwargs["smoother"] = values["smoother"]
    if "coarse" in values:
        kwargs["coarse"] = values["coarse"]
    if "reduction" in values:
        try:
            kwargs["reduction"] = float(values["reduction"])
        except ValueError:
            raise ConfigError(
                f"reduction must be a float, got {values['reduction']!r}",
                line_of["reduction"],
            )
    if "output" in values:
        kwargs["output"] = values["output"]

    return _validate(ExperimentConfig(**kwargs), line_of)


def validate_config(cfg):
    return _validate(cfg)


def serialize_config(cfg):
    """Config text that parses back to an identical ExperimentConfig."""
    lines = [
        f"domain={cfg.domain}",
        f"method={cfg.method}",
        f"k={cfg.k}",
        f"prolongation={cfg.prolongation}",
        f"levels={cfg.levels[0]}..{cfg.levels[-1]}",
        f"preconditioner={cfg.preconditioner}",
    ]
    if cfg.smoother is not None:
        lines.append(f"smoother={cfg.smoother}")
    if cfg.coarse is not None:
        lines.append(f"coarse={cfg.coarse}")
    lines.append(f"reduction={cfg.reduction!r}")
    if cfg.output is not None:
        lines.append(f"output={cfg.output}")
    return "\n".join(lines) + "\n"
