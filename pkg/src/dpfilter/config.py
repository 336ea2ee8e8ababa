"""Experiment configuration: strict parsing with field-path diagnostics.

The file format is JSON with a fixed schema; unknown keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .design import DecisionDevice
from .lti import RationalTransferFunction
from .privacy import PrivacyParams
from .simulate import ArSource, IidSource, MarkovSource
from .spectral import RationalPsd

MECHANISM_KINDS = (
    "lzf", "lmmse-noncausal", "lmmse-causal",
    "df-lmmse-prefilter", "df-optimized-prefilter",
)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class MechanismSpec:
    kind: str
    fir_length: int = 512
    grid_n: int = 4096
    fir_half_length: int = 800
    delay: int = 5
    n_forward: int = 30
    n_feedback: int = 10
    decision: DecisionDevice = DecisionDevice()
    output_mode: str = "soft"


@dataclass
class RunSpec:
    T: int = 100_000
    replications: int = 20
    output_dir: str | None = None


@dataclass
class ExperimentConfig:
    filter: RationalTransferFunction
    privacy: PrivacyParams
    source: object | None
    psd: RationalPsd | None
    mechanism: MechanismSpec
    run: RunSpec
    raw: dict

    def source_mean(self) -> float:
        src = self.source
        if src is None:
            return 0.0
        if isinstance(src, MarkovSource):
            return float(np.dot(src.stationary(), src.state_values))
        if isinstance(src, IidSource):
            vals = np.asarray(src.values, dtype=float)
            p = np.asarray(src.probs, dtype=float) if src.probs is not None \
                else np.full(vals.size, 1.0 / vals.size)
            return float(np.sum(p * vals))
        return 0.0


def _expect_mapping(obj, path):
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected an object")
    return obj


def _reject_unknown(obj: dict, allowed, path):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown key")


def _get_number(obj, key, path, default=None, required=False, positive=False):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}: missing required value")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number")
    if positive and not val > 0:
        raise ConfigError(f"{path}.{key}: must be positive")
    return float(val)


def _get_int(obj, key, path, default=None, required=False, minimum=None):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}: missing required value")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key}: expected an integer")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}")
    return val


def _get_list(obj, key, path, required=False):
    if key not in obj:
        if required:
            raise ConfigError(f"{path}.{key}: missing required value")
        return None
    val = obj[key]
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{path}.{key}: expected a non-empty list")
    return val


def _numbers(lst, path):
    out = []
    for i, v in enumerate(lst):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}[{i}]: expected a number")
        out.append(float(v))
    return out


def _roots(lst, path):
    out = []
    for i, v in enumerate(lst or []):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(complex(v))
        elif isinstance(v, list) and len(v) == 2:
            out.append(complex(float(v[0]), float(v[1])))
        else:
            raise ConfigError(f"{path}[{i}]: expected a real number or [re, im]")
    return out


def _parse_filter(obj, path) -> RationalTransferFunction:
    obj = _expect_mapping(obj, path)
    _reject_unknown(obj, ("num", "den"), path)
    num = _numbers(_get_list(obj, "num", path, required=True), f"{path}.num")
    den = _numbers(_get_list(obj, "den", path, required=True), f"{path}.den")
    try:
        return RationalTransferFunction(num, den)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_privacy(obj, path) -> PrivacyParams:
    obj = _expect_mapping(obj, path)
    _reject_unknown(obj, ("epsilon", "delta", "d"), path)
    eps = _get_number(obj, "epsilon", path, required=True, positive=True)
    delta = _get_number(obj, "delta", path, required=True)
    d = _get_int(obj, "d", path, default=1, minimum=1)
    try:
        return PrivacyParams(epsilon=eps, delta=delta, d=d)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_source(obj, path):
    if obj is None:
        return None
    obj = _expect_mapping(obj, path)
    kind = obj.get("kind")
    if kind == "markov":
        _reject_unknown(obj, ("kind", "p_stay", "transition", "values", "seed"), path)
        values = obj.get("values", [-1.0, 1.0])
        values = _numbers(_get_list({"values": values}, "values", path), f"{path}.values")
        if len(values) != 2:
            raise ConfigError(f"{path}.values: expected two state values")
        seed = _get_int(obj, "seed", path, default=None)
        if "transition" in obj:
            t = obj["transition"]
            if (not isinstance(t, list) or len(t) != 2
                    or any(not isinstance(r, list) or len(r) != 2 for r in t)):
                raise ConfigError(f"{path}.transition: expected a 2x2 matrix")
            try:
                return MarkovSource([[float(x) for x in r] for r in t], tuple(values), seed)
            except ValueError as exc:
                raise ConfigError(f"{path}.transition: {exc}") from exc
        p_stay = _get_number(obj, "p_stay", path, default=0.75)
        try:
            return MarkovSource.symmetric(p_stay, tuple(values), seed)
        except ValueError as exc:
            raise ConfigError(f"{path}.p_stay: {exc}") from exc
    if kind == "ar":
        _reject_unknown(obj, ("kind", "a", "noise_std", "seed"), path)
        a = _get_number(obj, "a", path, required=True)
        noise_std = _get_number(obj, "noise_std", path, default=1.0, positive=True)
        try:
            return ArSource(a=a, noise_std=noise_std,
                            seed=_get_int(obj, "seed", path, default=None))
        except ValueError as exc:
            raise ConfigError(f"{path}.a: {exc}") from exc
    if kind == "iid":
        _reject_unknown(obj, ("kind", "values", "probs", "seed"), path)
        values = _numbers(_get_list(obj, "values", path, required=True), f"{path}.values")
        probs = obj.get("probs")
        if probs is not None:
            probs = _numbers(probs, f"{path}.probs")
            if len(probs) != len(values):
                raise ConfigError(f"{path}.probs: length must match values")
        return IidSource(tuple(values), None if probs is None else tuple(probs),
                         _get_int(obj, "seed", path, default=None))
    raise ConfigError(f"{path}.kind: expected one of markov, ar, iid")


def _parse_psd(obj, path, source):
    if obj is None or obj == "from-source":
        if source is None:
            raise ConfigError(f"{path}: 'from-source' needs a source section")
        try:
            return source.psd()
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    obj = _expect_mapping(obj, path)
    _reject_unknown(obj, ("gain", "numerator_roots", "denominator_roots"), path)
    gain = _get_number(obj, "gain", path, required=True, positive=True)
    try:
        return RationalPsd(gain=gain,
                           numerator_roots=_roots(obj.get("numerator_roots"), f"{path}.numerator_roots"),
                           denominator_roots=_roots(obj.get("denominator_roots"), f"{path}.denominator_roots"))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_decision(obj, path) -> DecisionDevice:
    if obj is None:
        return DecisionDevice()
    obj = _expect_mapping(obj, path)
    _reject_unknown(obj, ("kind", "amplitude", "step", "offset"), path)
    kind = obj.get("kind", "sign")
    try:
        return DecisionDevice(
            kind=kind,
            amplitude=_get_number(obj, "amplitude", path, default=1.0),
            step=_get_number(obj, "step", path, default=1.0),
            offset=_get_number(obj, "offset", path, default=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_mechanism(obj, path) -> MechanismSpec:
    obj = _expect_mapping(obj, path)
    allowed = ("kind", "fir_length", "grid_n", "fir_half_length", "delay",
               "n_forward", "n_feedback", "decision", "output_mode")
    _reject_unknown(obj, allowed, path)
    kind = obj.get("kind")
    if kind not in MECHANISM_KINDS:
        raise ConfigError(f"{path}.kind: expected one of {', '.join(MECHANISM_KINDS)}")
    output_mode = obj.get("output_mode", "soft")
    if output_mode not in ("soft", "hard"):
        raise ConfigError(f"{path}.output_mode: expected 'soft' or 'hard'")
    return MechanismSpec(
        kind=kind,
        fir_length=_get_int(obj, "fir_length", path, default=512, minimum=1),
        grid_n=_get_int(obj, "grid_n", path, default=4096, minimum=2),
        fir_half_length=_get_int(obj, "fir_half_length", path, default=800, minimum=1),
        delay=_get_int(obj, "delay", path, default=5, minimum=0),
        n_forward=_get_int(obj, "n_forward", path, default=30, minimum=1),
        n_feedback=_get_int(obj, "n_feedback", path, default=10, minimum=1),
        decision=_parse_decision(obj.get("decision"), f"{path}.decision"),
        output_mode=output_mode,
    )


def _parse_run(obj, path) -> RunSpec:
    if obj is None:
        return RunSpec()
    obj = _expect_mapping(obj, path)
    _reject_unknown(obj, ("T", "replications", "output_dir"), path)
    out_dir = obj.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError(f"{path}.output_dir: expected a string")
    return RunSpec(
        T=_get_int(obj, "T", path, default=100_000, minimum=1),
        replications=_get_int(obj, "replications", path, default=20, minimum=1),
        output_dir=out_dir,
    )


def parse_config(data: dict) -> ExperimentConfig:
    data = _expect_mapping(data, "config")
    _reject_unknown(data, ("filter", "privacy", "source", "psd", "mechanism", "run"), "config")
    if "filter" not in data:
        raise ConfigError("config.filter: missing required section")
    if "privacy" not in data:
        raise ConfigError("config.privacy: missing required section")
    if "mechanism" not in data:
        raise ConfigError("config.mechanism: missing required section")
    flt = _parse_filter(data["filter"], "filter")
    privacy = _parse_privacy(data["privacy"], "privacy")
    source = _parse_source(data.get("source"), "source")
    psd_field = data.get("psd")
    if psd_field is not None or source is not None:
        psd = _parse_psd(psd_field, "psd", source)
    else:
        psd = None
    mech = _parse_mechanism(data["mechanism"], "mechanism")
    run = _parse_run(data.get("run"), "run")
    if mech.kind != "lzf" and psd is None:
        raise ConfigError("psd: required for Wiener and decision-feedback mechanisms")
    return ExperimentConfig(filter=flt, privacy=privacy, source=source,
                            psd=psd, mechanism=mech, run=run, raw=data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path}: {exc}") from exc
    return parse_config(data)
