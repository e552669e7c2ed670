"""Run specification files.

A spec is an INI-style file: ``[section]`` headers followed by ``key = value``
lines, ``#`` comments on their own line. Unknown sections and keys are errors.
Lists are comma-separated. See docs/FORMATS.md for the full key table.
"""

import configparser
import os
from dataclasses import dataclass

from ..errors import ConfigError, KVFunnelError
from ..model import ModelConfig
from ..policies import KINDS, PolicyConfig

SEED_ENV = "KVFUNNEL_SEED"

DEFAULT_BUDGETS = (64, 128, 256, 512, 1024, 2048)
DEFAULT_BETAS = (14.0, 16.0, 18.0, 20.0)


def _int(text):
    return int(text.strip(), 0)


def _float(text):
    return float(text)


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text):
    return text.strip()


def _list(item):
    def parse(text):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ValueError("empty list")
        return tuple(item(p) for p in parts)
    return parse


_REQUIRED = object()

# section -> key -> (parser, default)
SCHEMA = {
    "model": {
        "layers": (_int, _REQUIRED),
        "heads": (_int, _REQUIRED),
        "head_dim": (_int, _REQUIRED),
        "model_dim": (_int, None),
        "vocab": (_int, _REQUIRED),
        "seed": (_int, 0),
        "max_context": (_int, 4096),
        "weights": (_str, None),
    },
    "tokens": {
        "source": (_str, "random"),
        "length": (_int, None),
        "seed": (_int, 0),
        "path": (_str, None),
    },
    "policy": {
        "kind": (_str, _REQUIRED),
        "alpha": (_int, 8),
        "pool_kernel": (_int, 7),
        "pool_mode": (_str, "avg"),
        "tie_break": (_str, "prefer_recent"),
        "group_heads": (_bool, False),
        "group_size": (_int, 1),
    },
    "schedule": {
        "average_budget": (_int, _REQUIRED),
        "beta": (_float, None),
        "renormalize": (_bool, True),
    },
    "run": {
        "decode_steps": (_int, 16),
        "teacher_forcing": (_bool, True),
        "bytes_per_scalar": (_int, 2),
        "window": (_int, 8),
        "dump_attention": (_bool, False),
        "workers": (_int, 1),
    },
    "output": {
        "dir": (_str, "results"),
        "format": (_str, "csv"),
    },
    "sweep": {
        "policies": (_list(_str), None),
        "budgets": (_list(_int), None),
        "betas": (_list(_float), None),
        "alphas": (_list(_int), None),
        "seeds": (_list(_int), None),
    },
}


@dataclass(frozen=True)
class RunSpec:
    model: ModelConfig
    policy: PolicyConfig
    average_budget: int
    beta: float = None
    renormalize: bool = True
    weights_path: str = None
    token_source: str = "random"
    token_length: int = None
    token_seed: int = 0
    token_path: str = None
    decode_steps: int = 16
    teacher_forcing: bool = True
    bytes_per_scalar: int = 2
    window: int = 8
    dump_attention: bool = False
    workers: int = 1
    out_dir: str = "results"
    fmt: str = "csv"
    sweep_policies: tuple = ()
    sweep_budgets: tuple = DEFAULT_BUDGETS
    sweep_betas: tuple = DEFAULT_BETAS
    sweep_alphas: tuple = ()
    sweep_seeds: tuple = ()


def _raw_sections(text, source):
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=None,
        interpolation=None, strict=True, default_section="__defaults__",
    )
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: expected a [section] header", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"{source}:{exc.lineno}: {exc.message}", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno}: cannot parse {line.strip()!r}", line=lineno) from None

    lines = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif "=" in stripped and not stripped.startswith("#"):
            lines.setdefault((current, stripped.split("=", 1)[0].strip().lower()), lineno)

    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]", field=section)
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                lineno = lines.get((section, key))
                raise ConfigError(
                    f"{source}:{lineno or '?'}: unknown key {section}.{key}",
                    field=f"{section}.{key}", line=lineno,
                )
            raw[section][key] = value
    return raw


def _values(raw):
    vals = {}
    for section, keys in SCHEMA.items():
        for key, (parse, default) in keys.items():
            name = f"{section}.{key}"
            if key in raw.get(section, {}):
                text = raw[section][key]
                try:
                    vals[name] = parse(text)
                except ValueError as exc:
                    raise ConfigError(f"invalid value for {name}: {exc}", field=name) from None
            elif default is _REQUIRED:
                raise ConfigError(f"missing required field {name}", field=name)
            else:
                vals[name] = default
    return vals


def _build(vals):
    def fail(name, msg):
        raise ConfigError(f"{name}: {msg}", field=name)

    heads, head_dim = vals["model.heads"], vals["model.head_dim"]
    model_dim = vals["model.model_dim"] if vals["model.model_dim"] is not None else heads * head_dim
    seed = vals["model.seed"]
    if os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV], 0)
        except ValueError:
            fail("model.seed", f"{SEED_ENV} is not an integer")
    try:
        model = ModelConfig(
            num_layers=vals["model.layers"], num_heads=heads, head_dim=head_dim,
            model_dim=model_dim, vocab_size=vals["model.vocab"], seed=seed,
            max_context=vals["model.max_context"],
        )
    except KVFunnelError as exc:
        fail("model", str(exc))

    kind = vals["policy.kind"]
    if kind not in KINDS:
        fail("policy.kind", f"unknown policy {kind!r}; expected one of {', '.join(KINDS)}")
    sweep_policies = vals["sweep.policies"] or (kind,)
    for p in sweep_policies:
        if p not in KINDS:
            fail("sweep.policies", f"unknown policy {p!r}")
    beta = vals["schedule.beta"]
    if beta is None and "pyramid" in (kind, *sweep_policies):
        fail("schedule.beta", "required when the pyramid policy is used")
    try:
        policy = PolicyConfig(
            kind=kind, alpha=vals["policy.alpha"], beta=beta if beta is not None else 20.0,
            pool_kernel=vals["policy.pool_kernel"], pool_mode=vals["policy.pool_mode"],
            tie_break=vals["policy.tie_break"], group_heads=vals["policy.group_heads"],
            group_size=vals["policy.group_size"],
        )
    except KVFunnelError as exc:
        fail("policy", str(exc))
    if policy.group_heads and model.num_heads % policy.group_size:
        fail("policy.group_size", f"must divide model.heads ({model.num_heads})")

    budget = vals["schedule.average_budget"]
    alphas = vals["sweep.alphas"] or (policy.alpha,)
    budgets = vals["sweep.budgets"] or DEFAULT_BUDGETS
    for name, values in (("schedule.average_budget", (budget,)), ("sweep.budgets", budgets)):
        for b in values:
            if b > model.max_context:
                fail(name, f"budget {b} exceeds model.max_context {model.max_context}")
            if any(a >= b for a in alphas):
                fail(name, f"budget {b} must exceed alpha {max(alphas)}")
    if beta is not None and beta < 1:
        fail("schedule.beta", "must be >= 1")
    for b in vals["sweep.betas"] or ():
        if b < 1:
            fail("sweep.betas", "every beta must be >= 1")

    source = vals["tokens.source"]
    if source == "random":
        if vals["tokens.length"] is None:
            fail("tokens.length", "required when tokens.source = random")
        if not 1 <= vals["tokens.length"] <= model.max_context:
            fail("tokens.length", f"must be in [1, {model.max_context}]")
    elif source == "file":
        if not vals["tokens.path"]:
            fail("tokens.path", "required when tokens.source = file")
    else:
        fail("tokens.source", f"expected 'random' or 'file', got {source!r}")

    if vals["run.decode_steps"] < 1:
        fail("run.decode_steps", "must be >= 1")
    if vals["run.window"] < 0:
        fail("run.window", "must be >= 0")
    if vals["run.bytes_per_scalar"] < 1:
        fail("run.bytes_per_scalar", "must be >= 1")
    if vals["run.workers"] < 1:
        fail("run.workers", "must be >= 1")
    if vals["output.format"] not in ("csv", "json"):
        fail("output.format", "expected 'csv' or 'json'")

    return RunSpec(
        model=model, policy=policy, average_budget=budget, beta=beta,
        renormalize=vals["schedule.renormalize"], weights_path=vals["model.weights"],
        token_source=source, token_length=vals["tokens.length"], token_seed=vals["tokens.seed"],
        token_path=vals["tokens.path"], decode_steps=vals["run.decode_steps"],
        teacher_forcing=vals["run.teacher_forcing"], bytes_per_scalar=vals["run.bytes_per_scalar"],
        window=vals["run.window"], dump_attention=vals["run.dump_attention"],
        workers=vals["run.workers"], out_dir=vals["output.dir"], fmt=vals["output.format"],
        sweep_policies=tuple(sweep_policies), sweep_budgets=tuple(budgets),
        sweep_betas=tuple(vals["sweep.betas"] or DEFAULT_BETAS), sweep_alphas=tuple(alphas),
        sweep_seeds=tuple(vals["sweep.seeds"] or (model.seed,)),
    )


def parse_spec(text, source="<spec>"):
    return _build(_values(_raw_sections(text, source)))


def load_spec(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc.strerror}") from None
    return parse_spec(text, source=str(path))


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_spec(spec):
    """Serialise to spec-file text; ``parse_spec(dump_spec(s)) == s``."""
    m, p = spec.model, spec.policy
    sections = {
        "model": [("layers", m.num_layers), ("heads", m.num_heads), ("head_dim", m.head_dim),
                  ("model_dim", m.model_dim), ("vocab", m.vocab_size), ("seed", m.seed),
                  ("max_context", m.max_context), ("weights", spec.weights_path)],
        "tokens": [("source", spec.token_source), ("length", spec.token_length),
                   ("seed", spec.token_seed), ("path", spec.token_path)],
        "policy": [("kind", p.kind), ("alpha", p.alpha), ("pool_kernel", p.pool_kernel),
                   ("pool_mode", p.pool_mode), ("tie_break", p.tie_break),
                   ("group_heads", p.group_heads), ("group_size", p.group_size)],
        "schedule": [("average_budget", spec.average_budget), ("beta", spec.beta),
                     ("renormalize", spec.renormalize)],
        "run": [("decode_steps", spec.decode_steps), ("teacher_forcing", spec.teacher_forcing),
                ("bytes_per_scalar", spec.bytes_per_scalar), ("window", spec.window),
                ("dump_attention", spec.dump_attention), ("workers", spec.workers)],
        "output": [("dir", spec.out_dir), ("format", spec.fmt)],
        "sweep": [("policies", spec.sweep_policies), ("budgets", spec.sweep_budgets),
                  ("betas", spec.sweep_betas), ("alphas", spec.sweep_alphas),
                  ("seeds", spec.sweep_seeds)],
    }
    out = []
    for name, items in sections.items():
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in items if v is not None)
        out.append("")
    return "\n".join(out)
