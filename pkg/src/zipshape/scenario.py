"""Scenario-file parsing, validation, and serialization.

Scenario files are YAML documents with a fixed schema (extension
".scenario").  Sections:

    name            optional run label (string)
    sim             optional: dt [s], t_end [s]
    params_nominal  required: L1 [H], C [F], L2 [H], r [ohm], R2 [ohm],
                    E [V], R [ohm], P [W], i [A]
    params_actual   optional: same keys, or the string "nominal" (default)
    reference       required: v_star [V]; optional mode (dynamic|static),
                    x1_star_hat0 [A]
    initial         required: i1 [A], vc [V], i2 [A]; optional xc
    controller      required: kind plus kind-specific gains (see below)
    observer        gains G1/G2/G3 (lists, one entry per generator state);
                    optional zeta_hat0 with per-channel lists.  Required for
                    kind AESC; rejected for kind SimplifiedAESC.
    exosystems      optional d1/d2/d3 generator definitions {A, M, zeta0}
    events          optional list of {t, set, value?}; sorted by t
    noise           optional: seed, power [V^2 or A^2], targets (default [vc])

Controller keys by kind:
    ESC / AESC      alpha, k
    PI              kp, ki
    RPBC            Kc, Tc; optional E, mu0, derivative (model|measured)
    SimplifiedAESC  alpha, k, lambda, eta; optional E_hat0
    any kind        optional hold_dt [s] (sample-and-hold duty update)

Unknown keys anywhere are rejected.  All validation errors carry the source
line of the offending key.  parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import io
from dataclasses import replace
from pathlib import Path
from typing import Optional

import yaml

from .controllers import CONTROLLER_KINDS, ControllerConfig
from .engine import Event, NoiseSpec, Scenario
from .observer import ObserverGains
from .plant import CircuitParams, ExoSystem, PlantState

PARAM_KEYS = ("L1", "C", "L2", "r", "R2", "E", "R", "P", "i")

_CTRL_KEYS = {
    "ESC": {"alpha", "k"},
    "AESC": {"alpha", "k"},
    "PI": {"kp", "ki"},
    "RPBC": {"Kc", "Tc", "E", "mu0", "derivative"},
    "SimplifiedAESC": {"alpha", "k", "lambda", "eta", "E_hat0"},
}
_CTRL_REQUIRED = {
    "ESC": {"alpha", "k"},
    "AESC": {"alpha", "k"},
    "PI": {"kp", "ki"},
    "RPBC": {"Kc", "Tc"},
    "SimplifiedAESC": {"alpha", "k", "lambda", "eta"},
}

_TOP_KEYS = ("name", "sim", "params_nominal", "params_actual", "reference",
             "initial", "controller", "observer", "exosystems", "events",
             "noise")


class ScenarioError(Exception):
    """Scenario-file syntax or schema violation, anchored to a source line."""

    def __init__(self, message: str, source: str = "<scenario>",
                 line: Optional[int] = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _collect_marks(node, prefix: str, out: dict) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, val_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[path] = key_node.start_mark.line + 1
            _collect_marks(val_node, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for idx, item in enumerate(node.value):
            path = f"{prefix}[{idx}]"
            out[path] = item.start_mark.line + 1
            _collect_marks(item, path, out)


class _Ctx:
    """Carries the source name and the path -> line map through validation."""

    def __init__(self, source: str, marks: dict):
        self.source = source
        self.marks = marks

    def fail(self, message: str, path: str = "") -> "ScenarioError":
        return ScenarioError(message, self.source, self.marks.get(path))

    def check_keys(self, mapping: dict, allowed, path: str) -> None:
        for key in mapping:
            kp = f"{path}.{key}" if path else str(key)
            if key not in allowed:
                raise ScenarioError(f"unknown key {key!r}", self.source,
                                    self.marks.get(kp))

    def need(self, mapping: dict, key: str, path: str):
        if key not in mapping:
            raise self.fail(f"missing required key {key!r}", path)
        return mapping[key]

    def number(self, value, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.fail(f"expected a number, got {value!r}", path)
        return float(value)

    def integer(self, value, path: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(f"expected an integer, got {value!r}", path)
        return value

    def mapping(self, value, path: str) -> dict:
        if not isinstance(value, dict):
            raise self.fail("expected a mapping", path)
        return value

    def sequence(self, value, path: str) -> list:
        if not isinstance(value, list):
            raise self.fail("expected a list", path)
        return value

    def num_list(self, value, path: str) -> list:
        seq = self.sequence(value, path)
        return [self.number(v, f"{path}[{i}]") for i, v in enumerate(seq)]


def _parse_params(ctx: _Ctx, raw, path: str) -> CircuitParams:
    mapping = ctx.mapping(raw, path)
    ctx.check_keys(mapping, PARAM_KEYS, path)
    vals = {}
    for key in PARAM_KEYS:
        vals[key] = ctx.number(ctx.need(mapping, key, path), f"{path}.{key}")
    try:
        return CircuitParams(**vals)
    except ValueError as exc:
        raise ctx.fail(str(exc), path)


def _parse_exo(ctx: _Ctx, raw, path: str) -> ExoSystem:
    mapping = ctx.mapping(raw, path)
    ctx.check_keys(mapping, ("A", "M", "zeta0"), path)
    a_rows = ctx.sequence(ctx.need(mapping, "A", path), f"{path}.A")
    a = [ctx.num_list(row, f"{path}.A[{i}]") for i, row in enumerate(a_rows)]
    m = ctx.num_list(ctx.need(mapping, "M", path), f"{path}.M")
    z0 = ctx.num_list(ctx.need(mapping, "zeta0", path), f"{path}.zeta0")
    try:
        return ExoSystem(A=a, M=m, zeta0=z0)
    except ValueError as exc:
        raise ctx.fail(str(exc), path)


def _parse_controller(ctx: _Ctx, raw, path: str) -> ControllerConfig:
    mapping = ctx.mapping(raw, path)
    kind = ctx.need(mapping, "kind", path)
    if kind not in CONTROLLER_KINDS:
        raise ctx.fail(f"unknown controller kind {kind!r}; expected one of "
                       f"{CONTROLLER_KINDS}", f"{path}.kind")
    allowed = {"kind", "hold_dt"} | _CTRL_KEYS[kind]
    ctx.check_keys(mapping, allowed, path)
    for key in _CTRL_REQUIRED[kind]:
        ctx.need(mapping, key, path)

    kwargs = {"kind": kind}
    plain = {"alpha": "alpha", "k": "k", "kp": "kp", "ki": "ki",
             "Kc": "Kc", "Tc": "Tc", "lambda": "lam", "eta": "eta",
             "E": "rpbc_E", "mu0": "rpbc_mu0", "E_hat0": "E_hat0",
             "hold_dt": "hold_dt"}
    for key, attr in plain.items():
        if key in mapping:
            kwargs[attr] = ctx.number(mapping[key], f"{path}.{key}")
    if "derivative" in mapping:
        val = mapping["derivative"]
        if val not in ("model", "measured"):
            raise ctx.fail("derivative must be 'model' or 'measured'",
                           f"{path}.derivative")
        kwargs["rpbc_deriv"] = val
    try:
        return ControllerConfig(**kwargs)
    except ValueError as exc:
        raise ctx.fail(str(exc), path)


def _parse_events(ctx: _Ctx, raw, path: str) -> tuple:
    seq = ctx.sequence(raw, path)
    events = []
    prev_t = 0.0
    for i, item in enumerate(seq):
        ep = f"{path}[{i}]"
        mapping = ctx.mapping(item, ep)
        ctx.check_keys(mapping, ("t", "set", "value"), ep)
        t = ctx.number(ctx.need(mapping, "t", ep), f"{ep}.t")
        target = ctx.need(mapping, "set", ep)
        value = mapping.get("value")
        if value is not None:
            value = ctx.number(value, f"{ep}.value")
        try:
            ev = Event(t=t, target=target, value=value)
        except ValueError as exc:
            raise ctx.fail(str(exc), ep)
        if ev.t < prev_t:
            raise ctx.fail("events must be sorted by time", f"{ep}.t")
        prev_t = ev.t
        events.append(ev)
    return tuple(events)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse and validate a scenario document; errors carry source lines."""
    try:
        data = yaml.safe_load(io.StringIO(text))
        root = yaml.compose(io.StringIO(text))
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ScenarioError(f"document is not valid structured text: {exc}",
                            source, line)
    if data is None:
        raise ScenarioError("empty scenario document", source)
    marks: dict = {}
    if root is not None:
        _collect_marks(root, "", marks)
    ctx = _Ctx(source, marks)

    top = ctx.mapping(data, "")
    ctx.check_keys(top, _TOP_KEYS, "")
    for req in ("params_nominal", "reference", "initial", "controller"):
        ctx.need(top, req, "")

    nominal = _parse_params(ctx, top["params_nominal"], "params_nominal")

    actual = None
    if "params_actual" in top and top["params_actual"] != "nominal":
        actual = _parse_params(ctx, top["params_actual"], "params_actual")

    ref = ctx.mapping(top["reference"], "reference")
    ctx.check_keys(ref, ("v_star", "mode", "x1_star_hat0"), "reference")
    v_star = ctx.number(ctx.need(ref, "v_star", "reference"),
                        "reference.v_star")
    mode = ref.get("mode", "dynamic")
    if mode not in ("dynamic", "static"):
        raise ctx.fail("mode must be 'dynamic' or 'static'", "reference.mode")
    x1s_hat0 = None
    if "x1_star_hat0" in ref:
        x1s_hat0 = ctx.number(ref["x1_star_hat0"], "reference.x1_star_hat0")

    init = ctx.mapping(top["initial"], "initial")
    ctx.check_keys(init, ("i1", "vc", "i2", "xc"), "initial")
    initial = PlantState(
        i1=ctx.number(ctx.need(init, "i1", "initial"), "initial.i1"),
        vc=ctx.number(ctx.need(init, "vc", "initial"), "initial.vc"),
        i2=ctx.number(ctx.need(init, "i2", "initial"), "initial.i2"))
    xc0 = ctx.number(init.get("xc", 0.0), "initial.xc")

    controller = _parse_controller(ctx, top["controller"], "controller")

    exos = {"d1": _trivial(), "d2": _trivial(), "d3": _trivial()}
    if "exosystems" in top:
        exo_map = ctx.mapping(top["exosystems"], "exosystems")
        ctx.check_keys(exo_map, ("d1", "d2", "d3"), "exosystems")
        for ch in ("d1", "d2", "d3"):
            if ch in exo_map:
                exos[ch] = _parse_exo(ctx, exo_map[ch], f"exosystems.{ch}")

    gains = None
    zeta_hat0 = None
    if "observer" in top:
        if controller.kind == "SimplifiedAESC":
            raise ctx.fail("SimplifiedAESC uses its own scalar observer; "
                           "remove the observer section", "observer")
        obs = ctx.mapping(top["observer"], "observer")
        ctx.check_keys(obs, ("G1", "G2", "G3", "zeta_hat0"), "observer")
        gvecs = []
        for gi, ch in (("G1", "d1"), ("G2", "d2"), ("G3", "d3")):
            vec = ctx.num_list(ctx.need(obs, gi, "observer"), f"observer.{gi}")
            if len(vec) != exos[ch].order:
                raise ctx.fail(
                    f"{gi} must have one entry per generator state of {ch} "
                    f"(expected {exos[ch].order}, got {len(vec)})",
                    f"observer.{gi}")
            gvecs.append(vec)
        gains = ObserverGains(G1=gvecs[0], G2=gvecs[1], G3=gvecs[2])
        if "zeta_hat0" in obs:
            zmap = ctx.mapping(obs["zeta_hat0"], "observer.zeta_hat0")
            ctx.check_keys(zmap, ("d1", "d2", "d3"), "observer.zeta_hat0")
            parts = []
            for ch in ("d1", "d2", "d3"):
                pathc = f"observer.zeta_hat0.{ch}"
                if ch in zmap:
                    vec = ctx.num_list(zmap[ch], pathc)
                    if len(vec) != exos[ch].order:
                        raise ctx.fail(
                            f"expected {exos[ch].order} entries", pathc)
                else:
                    vec = [0.0] * exos[ch].order
                parts.append(vec)
            zeta_hat0 = tuple(parts)
    elif controller.kind == "AESC":
        raise ctx.fail("controller kind AESC requires an observer section",
                       "controller.kind")

    events = ()
    if "events" in top:
        events = _parse_events(ctx, top["events"], "events")

    noise = None
    if "noise" in top:
        nmap = ctx.mapping(top["noise"], "noise")
        ctx.check_keys(nmap, ("seed", "power", "targets"), "noise")
        seed = ctx.integer(ctx.need(nmap, "seed", "noise"), "noise.seed")
        power = ctx.number(ctx.need(nmap, "power", "noise"), "noise.power")
        targets = ("vc",)
        if "targets" in nmap:
            tl = ctx.sequence(nmap["targets"], "noise.targets")
            targets = tuple(tl)
        try:
            noise = NoiseSpec(seed=seed, power=power, targets=targets)
        except ValueError as exc:
            raise ctx.fail(str(exc), "noise")

    sim = {}
    if "sim" in top:
        sim_map = ctx.mapping(top["sim"], "sim")
        ctx.check_keys(sim_map, ("dt", "t_end"), "sim")
        if "dt" in sim_map:
            sim["dt"] = ctx.number(sim_map["dt"], "sim.dt")
        if "t_end" in sim_map:
            sim["t_end"] = ctx.number(sim_map["t_end"], "sim.t_end")

    name = top.get("name", "scenario")
    if not isinstance(name, str):
        raise ctx.fail("name must be a string", "name")

    try:
        return Scenario(
            nominal=nominal, actual=actual, v_star=v_star,
            initial=initial, xc0=xc0, controller=controller,
            gains=gains, exo1=exos["d1"], exo2=exos["d2"], exo3=exos["d3"],
            zeta_hat0=zeta_hat0, x1_star_hat0=x1s_hat0,
            reference_mode=mode, events=events, noise=noise,
            name=name, **sim)
    except ValueError as exc:
        raise ctx.fail(str(exc))


def _trivial() -> ExoSystem:
    return ExoSystem(A=[[0.0]], M=[1.0], zeta0=[0.0])


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}", str(path))
    return parse_scenario(text, source=str(path))


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario shipped with the package."""
    from importlib.resources import files
    path = Path(str(files("zipshape") / "scenarios" / f"{name}.scenario"))
    if not path.exists():
        raise ScenarioError(f"no bundled scenario named {name!r} "
                            f"(available: {', '.join(list_bundled())})")
    return path


def list_bundled() -> list:
    """Names of all scenarios shipped with the package."""
    from importlib.resources import files
    folder = Path(str(files("zipshape") / "scenarios"))
    return sorted(p.stem for p in folder.glob("*.scenario"))


def _is_trivial(exo: ExoSystem) -> bool:
    return (exo.order == 1 and float(exo.A[0, 0]) == 0.0
            and float(exo.M[0]) == 1.0 and float(exo.zeta0[0]) == 0.0)


def scenario_to_dict(s: Scenario) -> dict:
    """Canonical plain-data form of a Scenario (used for round-trips)."""
    out: dict = {"name": s.name}
    out["sim"] = {"dt": s.dt, "t_end": s.t_end}
    out["params_nominal"] = {k: getattr(s.nominal, k) for k in PARAM_KEYS}
    if s.actual is not None and s.actual != s.nominal:
        out["params_actual"] = {k: getattr(s.actual, k) for k in PARAM_KEYS}
    else:
        out["params_actual"] = "nominal"
    ref = {"v_star": s.v_star, "mode": s.reference_mode}
    if s.x1_star_hat0 is not None:
        ref["x1_star_hat0"] = s.x1_star_hat0
    out["reference"] = ref
    out["initial"] = {"i1": s.initial.i1, "vc": s.initial.vc,
                      "i2": s.initial.i2, "xc": s.xc0}

    cfg = s.controller
    ctrl: dict = {"kind": cfg.kind}
    if cfg.kind in ("ESC", "AESC"):
        ctrl["alpha"] = cfg.alpha
        ctrl["k"] = cfg.k
    elif cfg.kind == "PI":
        ctrl["kp"] = cfg.kp
        ctrl["ki"] = cfg.ki
    elif cfg.kind == "RPBC":
        ctrl["Kc"] = cfg.Kc
        ctrl["Tc"] = cfg.Tc
        if cfg.rpbc_E is not None:
            ctrl["E"] = cfg.rpbc_E
        if cfg.rpbc_mu0 is not None:
            ctrl["mu0"] = cfg.rpbc_mu0
        if cfg.rpbc_deriv != "model":
            ctrl["derivative"] = cfg.rpbc_deriv
    else:  # SimplifiedAESC
        ctrl["alpha"] = cfg.alpha
        ctrl["k"] = cfg.k
        ctrl["lambda"] = cfg.lam
        ctrl["eta"] = cfg.eta
        if cfg.E_hat0 is not None:
            ctrl["E_hat0"] = cfg.E_hat0
    if cfg.hold_dt > 0.0:
        ctrl["hold_dt"] = cfg.hold_dt
    out["controller"] = ctrl

    exo_out = {}
    for key, exo in (("d1", s.exo1), ("d2", s.exo2), ("d3", s.exo3)):
        if not _is_trivial(exo):
            exo_out[key] = {"A": [[float(v) for v in row] for row in exo.A],
                            "M": [float(v) for v in exo.M],
                            "zeta0": [float(v) for v in exo.zeta0]}
    if exo_out:
        out["exosystems"] = exo_out

    if s.gains is not None:
        obs: dict = {"G1": [float(v) for v in s.gains.G1],
                     "G2": [float(v) for v in s.gains.G2],
                     "G3": [float(v) for v in s.gains.G3]}
        if s.zeta_hat0 is not None:
            obs["zeta_hat0"] = {
                ch: [float(v) for v in vec]
                for ch, vec in zip(("d1", "d2", "d3"), s.zeta_hat0)}
        out["observer"] = obs

    if s.events:
        evs = []
        for ev in s.events:
            item = {"t": ev.t, "set": ev.target}
            if ev.value is not None:
                item["value"] = ev.value
            evs.append(item)
        out["events"] = evs

    if s.noise is not None:
        out["noise"] = {"seed": s.noise.seed, "power": s.noise.power,
                        "targets": list(s.noise.targets)}
    return out


def dump_scenario(s: Scenario) -> str:
    """Serialize a Scenario; parse(dump(s)) reproduces s exactly."""
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False,
                          default_flow_style=None)


def with_overrides(s: Scenario, dt: Optional[float] = None,
                   t_end: Optional[float] = None,
                   seed: Optional[int] = None) -> Scenario:
    """Common command-line overrides applied to a parsed scenario."""
    kwargs: dict = {}
    if dt is not None:
        kwargs["dt"] = dt
    if t_end is not None:
        kwargs["t_end"] = t_end
    if seed is not None:
        if s.noise is None:
            raise ScenarioError("--seed override requires a noise section",
                                s.name)
        kwargs["noise"] = replace(s.noise, seed=seed)
    return replace(s, **kwargs) if kwargs else s
