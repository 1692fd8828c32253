"""Platform and model constants, built-in presets and JSON configuration.

All byte quantities are integer bytes (decimal MB, 1 MB = 1e6 B); all rates
are SI (FLOP/s, B/s) and all latencies are seconds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Union

from offloadsim.errors import ConfigError, UnknownModelError

MB = 1_000_000


@dataclass(frozen=True)
class DiT:
    num_blocks: int


@dataclass(frozen=True)
class MMDiT:
    n_double: int
    n_single: int


Arch = Union[DiT, MMDiT]


@dataclass(frozen=True)
class Affine:
    """Sequence length ``scale * (frames + offset)``."""

    scale: int
    offset: int


@dataclass(frozen=True)
class Fixed:
    seq: int


SeqFormula = Union[Affine, Fixed]


@dataclass(frozen=True)
class HardwareProfile:
    p_peak: float
    bw_h2d: float
    eta_comp: float
    eta_pref: float
    t_dma: float = 40e-6
    # None means "eta_pref * bw_h2d"; resolved in __post_init__.
    bw_coll: float | None = None
    t_coll_latency: float = 50e-6
    t_pause_resume: float = 10e-6
    gpu_count: int = 2

    def __post_init__(self):
        if self.bw_coll is None:
            object.__setattr__(self, "bw_coll", self.eta_pref * self.bw_h2d)
        _check_hardware(self)

    @property
    def compute_rate(self) -> float:
        """Calibrated compute roof, FLOP/s."""
        return self.eta_comp * self.p_peak

    @property
    def h2d_rate(self) -> float:
        """Calibrated host-to-device roof, B/s."""
        return self.eta_pref * self.bw_h2d


@dataclass(frozen=True)
class ModelSpec:
    name: str
    arch: Arch
    d: int
    f: int
    l_ctx: int
    seq_formula: SeqFormula
    beta: int = 2
    beta_act: int = 2
    b_pref: int | None = None
    activation_overhead: int = 0
    # Adds an all-to-all ahead of DiT cross-attention (off: context replicated).
    cross_attn_collective: bool = False
    sweep_var: str = "frames"
    sweep_values: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        _check_model(self)
        if self.b_pref is None and isinstance(self.arch, MMDiT):
            object.__setattr__(self, "b_pref", derive_b_pref(self))

    @property
    def n_layers(self) -> int:
        if isinstance(self.arch, DiT):
            return self.arch.num_blocks
        return self.arch.n_double + self.arch.n_single

    @property
    def is_video(self) -> bool:
        return isinstance(self.seq_formula, Affine)


def derive_b_pref(model: ModelSpec) -> float:
    """Block-averaged parameter bytes of an MM-DiT from its layer shapes.

    A double-stream block holds about ``beta * (20 d^2 + 4 d f)`` bytes and a
    single-stream block ``beta * (7 d^2 + 2 d f)``.  The returned value is the
    mean over the model's block sequence; it is only a fallback for a measured
    ``b_pref``.
    """
    if not isinstance(model.arch, MMDiT):
        raise ValueError(f"{model.name}: no closed-form prefetch volume for DiT; supply b_pref")
    d, f, beta = model.d, model.f, model.beta
    nd, ns = model.arch.n_double, model.arch.n_single
    double = beta * (20 * d * d + 4 * d * f)
    single = beta * (7 * d * d + 2 * d * f)
    return (nd * double + ns * single) / (nd + ns)


# Two H100 PCIe GPUs sharing one host root complex, BF16 dense.
_H100_PCIE_X2 = dict(p_peak=756e12, bw_h2d=31.5e9, eta_comp=0.60, eta_pref=0.89, gpu_count=2)

_MODEL_PRESETS: dict[str, dict[str, Any]] = {
    "wanvideo": dict(
        name="wanvideo", arch=DiT(30), d=3072, f=14336, l_ctx=512,
        seq_formula=Affine(220, 3), b_pref=520 * MB,
        sweep_var="frames", sweep_values=(41, 81, 121, 161),
    ),
    "flux": dict(
        name="flux", arch=MMDiT(19, 38), d=3072, f=12288, l_ctx=512,
        seq_formula=Fixed(4096), b_pref=465 * MB,
        sweep_var="batch", sweep_values=(4, 8, 12, 16),
    ),
    "hunyuanvideo": dict(
        name="hunyuanvideo", arch=MMDiT(20, 40), d=3072, f=12288, l_ctx=161,
        seq_formula=Affine(900, 3), b_pref=675 * MB,
        sweep_var="frames", sweep_values=(9, 17, 33, 65),
    ),
}

PRESET_NAMES = tuple(_MODEL_PRESETS)


def preset_hardware(name: str = "wanvideo") -> HardwareProfile:
    if name not in _MODEL_PRESETS:
        raise UnknownModelError(name)
    return HardwareProfile(**_H100_PCIE_X2)


def preset_model(name: str) -> ModelSpec:
    try:
        return ModelSpec(**_MODEL_PRESETS[name])
    except KeyError:
        raise UnknownModelError(name) from None


def preset(name: str) -> tuple[HardwareProfile, ModelSpec]:
    """Return the evaluation-platform hardware and the named model."""
    return preset_hardware(name), preset_model(name)


# -- validation ---------------------------------------------------------------

def _check_hardware(hw: HardwareProfile, path: str = "hardware") -> None:
    for name in ("eta_comp", "eta_pref"):
        v = getattr(hw, name)
        if not (isinstance(v, (int, float)) and 0 < v <= 1):
            raise ConfigError(f"{path}.{name}", f"{name} out of (0,1]")
    for name in ("p_peak", "bw_h2d", "bw_coll"):
        v = getattr(hw, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"{path}.{name}", f"{name} must be > 0")
    for name in ("t_dma", "t_coll_latency", "t_pause_resume"):
        v = getattr(hw, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
            raise ConfigError(f"{path}.{name}", f"{name} must be >= 0")
    if not (isinstance(hw.gpu_count, int) and hw.gpu_count >= 1):
        raise ConfigError(f"{path}.gpu_count", "gpu_count must be an integer >= 1")


def _check_model(m: ModelSpec, path: str = "model") -> None:
    for name in ("d", "f", "l_ctx", "beta", "beta_act"):
        v = getattr(m, name)
        if not (isinstance(v, int) and v > 0):
            raise ConfigError(f"{path}.{name}", f"{name} must be a positive integer")
    if isinstance(m.arch, DiT):
        if m.arch.num_blocks < 1:
            raise ConfigError(f"{path}.arch.num_blocks", "num_blocks must be >= 1")
    elif isinstance(m.arch, MMDiT):
        if m.arch.n_double < 0 or m.arch.n_single < 0 or m.arch.n_double + m.arch.n_single < 1:
            raise ConfigError(f"{path}.arch", "n_double + n_single must be >= 1")
    else:
        raise ConfigError(f"{path}.arch", f"unknown arch {m.arch!r}")
    sf = m.seq_formula
    if isinstance(sf, Affine):
        # S must be >= 1 for every admissible frame count n >= 1.
        if sf.scale < 1 or sf.scale * (1 + sf.offset) < 1:
            raise ConfigError(f"{path}.seq", "affine sequence formula yields S < 1")
    elif isinstance(sf, Fixed):
        if sf.seq < 1:
            raise ConfigError(f"{path}.seq.seq", "fixed sequence length must be >= 1")
    else:
        raise ConfigError(f"{path}.seq", f"unknown sequence formula {sf!r}")
    if m.b_pref is not None and not m.b_pref > 0:
        raise ConfigError(f"{path}.b_pref", "b_pref must be > 0")
    if m.b_pref is None and isinstance(m.arch, DiT):
        raise ConfigError(f"{path}.b_pref", "b_pref is required for DiT models")
    if m.activation_overhead < 0:
        raise ConfigError(f"{path}.activation_overhead", "activation_overhead must be >= 0")
    if m.sweep_var not in ("frames", "batch"):
        raise ConfigError(f"{path}.sweep.var", "sweep var must be 'frames' or 'batch'")
    vals = list(m.sweep_values)
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{path}.sweep.values", "sweep values must be strictly increasing")


# -- JSON configuration -------------------------------------------------------

@dataclass(frozen=True)
class RunDefaults:
    chunk_bytes: int = 16 * MB
    residency: float = 0.0
    policy: str = "chunked"


@dataclass(frozen=True)
class Config:
    hardware: HardwareProfile
    models: tuple[ModelSpec, ...]
    defaults: RunDefaults = field(default_factory=RunDefaults)

    def model(self, name: str) -> ModelSpec:
        for m in self.models:
            if m.name == name:
                return m
        raise UnknownModelError(name)


_HW_KEYS = {f.name for f in fields(HardwareProfile)}
_MODEL_SCALARS = ("name", "d", "f", "l_ctx", "beta", "beta_act", "b_pref",
                  "activation_overhead", "cross_attn_collective")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return obj[key]


def _parse_arch(doc: Any, path: str) -> Arch:
    if not isinstance(doc, dict):
        raise ConfigError(path, "arch must be an object")
    kind = _require(doc, "type", path)
    if kind == "dit":
        return DiT(int(_require(doc, "num_blocks", path)))
    if kind == "mmdit":
        return MMDiT(int(_require(doc, "n_double", path)), int(_require(doc, "n_single", path)))
    raise ConfigError(f"{path}.type", f"unknown arch type {kind!r}")


def _parse_seq(doc: Any, path: str) -> SeqFormula:
    if not isinstance(doc, dict):
        raise ConfigError(path, "seq must be an object")
    kind = _require(doc, "type", path)
    if kind == "affine":
        return Affine(int(_require(doc, "scale", path)), int(_require(doc, "offset", path)))
    if kind == "fixed":
        return Fixed(int(_require(doc, "seq", path)))
    raise ConfigError(f"{path}.type", f"unknown seq type {kind!r}")


def _parse_hardware(doc: Any) -> HardwareProfile:
    path = "hardware"
    if not isinstance(doc, dict):
        raise ConfigError(path, "hardware must be an object")
    unknown = set(doc) - _HW_KEYS - {"preset"}
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    base: dict[str, Any] = {}
    if "preset" in doc:
        p = preset_hardware(doc["preset"])
        base = {f.name: getattr(p, f.name) for f in fields(p)}
        # Re-derive the collective bandwidth unless explicitly pinned.
        if "bw_coll" not in doc and ("eta_pref" in doc or "bw_h2d" in doc):
            base["bw_coll"] = None
    base.update({k: v for k, v in doc.items() if k != "preset"})
    for key in ("p_peak", "bw_h2d", "eta_comp", "eta_pref"):
        _require(base, key, path)
    for k, v in base.items():
        if k == "gpu_count":
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{path}.{k}", "gpu_count must be an integer")
        elif v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError(f"{path}.{k}", f"{k} must be a number")
    try:
        return HardwareProfile(**base)
    except ConfigError as e:
        raise ConfigError(e.path, e.message) from None


def _parse_model(doc: Any, idx: int) -> ModelSpec:
    path = f"models[{idx}]"
    if not isinstance(doc, dict):
        raise ConfigError(path, "model entry must be an object")
    kw: dict[str, Any] = {}
    if "preset" in doc:
        pm = preset_model(doc["preset"])
        kw = {f.name: getattr(pm, f.name) for f in fields(pm)}
    for key in _MODEL_SCALARS:
        if key in doc:
            kw[key] = doc[key]
    if "arch" in doc:
        kw["arch"] = _parse_arch(doc["arch"], f"{path}.arch")
    if "seq" in doc:
        kw["seq_formula"] = _parse_seq(doc["seq"], f"{path}.seq")
    if "sweep" in doc:
        sw = doc["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError(f"{path}.sweep", "sweep must be an object")
        if "var" in sw:
            kw["sweep_var"] = sw["var"]
        if "values" in sw:
            kw["sweep_values"] = tuple(int(v) for v in sw["values"])
    for key in ("name", "arch", "d", "f", "l_ctx", "seq_formula"):
        if key not in kw:
            raise ConfigError(f"{path}.{'seq' if key == 'seq_formula' else key}", "missing required field")
    known = set(_MODEL_SCALARS) | {"preset", "arch", "seq", "sweep"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    try:
        return ModelSpec(**kw)
    except ConfigError as e:
        raise ConfigError(e.path.replace("model", path, 1), e.message) from None


def _parse_defaults(doc: Any) -> RunDefaults:
    if doc is None:
        return RunDefaults()
    if not isinstance(doc, dict):
        raise ConfigError("defaults", "defaults must be an object")
    d = RunDefaults()
    out = RunDefaults(
        chunk_bytes=int(doc.get("chunk_bytes", d.chunk_bytes)),
        residency=float(doc.get("residency", d.residency)),
        policy=str(doc.get("policy", d.policy)),
    )
    if out.chunk_bytes <= 0:
        raise ConfigError("defaults.chunk_bytes", "chunk_bytes must be > 0")
    if not 0.0 <= out.residency <= 1.0:
        raise ConfigError("defaults.residency", "residency out of [0,1]")
    if out.policy not in ("no-offload", "whole-layer", "chunked"):
        raise ConfigError("defaults.policy", f"unknown policy {out.policy!r}")
    return out


def load_config(document: str | dict) -> Config:
    """Parse and validate a JSON configuration document.

    ``document`` may be JSON text or an already-decoded mapping.  Models
    default to the three built-in presets when the document lists none.
    Every error is a :class:`ConfigError` carrying the offending field path.
    """
    if isinstance(document, str):
        if not document.strip():
            raise ConfigError("hardware", "no hardware profile")
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigError("<document>", f"parse failure: {e}") from None
    if not isinstance(document, dict):
        raise ConfigError("<document>", "top level must be an object")
    if "hardware" not in document:
        raise ConfigError("hardware", "no hardware profile")
    hw = _parse_hardware(document["hardware"])
    raw_models = document.get("models")
    if raw_models is None:
        models = tuple(preset_model(n) for n in PRESET_NAMES)
    else:
        if not isinstance(raw_models, list):
            raise ConfigError("models", "models must be a list")
        models = tuple(_parse_model(m, i) for i, m in enumerate(raw_models))
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ConfigError("models", "duplicate model name")
    return Config(hw, models, _parse_defaults(document.get("defaults")))


def load_config_file(path) -> Config:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def _arch_doc(arch: Arch) -> dict:
    if isinstance(arch, DiT):
        return {"type": "dit", "num_blocks": arch.num_blocks}
    return {"type": "mmdit", "n_double": arch.n_double, "n_single": arch.n_single}


def _seq_doc(sf: SeqFormula) -> dict:
    if isinstance(sf, Affine):
        return {"type": "affine", "scale": sf.scale, "offset": sf.offset}
    return {"type": "fixed", "seq": sf.seq}


def config_to_dict(cfg: Config) -> dict:
    hw = {f.name: getattr(cfg.hardware, f.name) for f in fields(HardwareProfile)}
    models = []
    for m in cfg.models:
        entry = {k: getattr(m, k) for k in _MODEL_SCALARS}
        entry["arch"] = _arch_doc(m.arch)
        entry["seq"] = _seq_doc(m.seq_formula)
        entry["sweep"] = {"var": m.sweep_var, "values": list(m.sweep_values)}
        models.append(entry)
    d = cfg.defaults
    return {
        "hardware": hw,
        "models": models,
        "defaults": {"chunk_bytes": d.chunk_bytes, "residency": d.residency, "policy": d.policy},
    }


def dump_config(cfg: Config) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def with_overrides(hw: HardwareProfile, **kw) -> HardwareProfile:
    return replace(hw, **kw)
