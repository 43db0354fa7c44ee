"""Run configuration: a sectioned ``key = value`` text format.

The file is read with :mod:`configparser` (``#`` and ``;`` comments, indented
continuation lines for multi-row values such as the 6x6 stiffness). Every key
is checked against the table in :data:`DEFAULTS`; unknown keys and malformed
values are reported with their line number.
"""

import configparser
import re
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .coupling import Controls, Problem
from .material import MaterialError, MaterialModel, Plasticity
from .mesh import FLOW_MARKERS, MECH_MARKERS, SIDES, MeshError, classify_boundary, generate_brick


class ConfigError(ValueError):
    """Malformed configuration text (carries the offending line number)."""

    def __init__(self, message, line=None):
        where = f"line {line}: " if line else ""
        super().__init__(where + message)
        self.line = line


class ConfigValidationError(ConfigError):
    """Well-formed but physically invalid value; ``field`` names the key."""

    def __init__(self, field_name, message, line=None):
        super().__init__(f"{field_name}: {message}", line)
        self.field = field_name


# section -> key -> default (None: required or optional without default)
DEFAULTS = {
    "mesh": {
        "nx": "4", "ny": "4", "nz": "4", "box": "0 1 0 1 0 1",
        "distortion": "0.0", "seed": "0",
    },
    "boundary": {side: "neumann neumann" for side in SIDES},
    "material": {
        "model": "isotropic", "young": "1e9", "poisson": "0.25",
        "orthotropic": None, "stiffness": None,
        "biot": "1.0", "biot_modulus": "1e9", "permeability": "1e-12",
        "viscosity": "1.0", "fluid_compressibility": "0.0", "fluid_density": "1000.0",
        "rock_density": "2650.0", "porosity": "0.2", "gravity": "0 0 -9.81",
    },
    "plasticity": {
        "kind": "none", "yield_stress": "1e6", "hardening": "0.0", "beta_p": "1.0",
        "friction": "0.0", "dilatancy": None,
    },
    "time": {"dt": "1.0", "n_steps": "1"},
    "coupling": {
        "tol": "1e-8", "tol_bracket": "1e-8", "bracket_atol": "0.0",
        "max_coupling_iters": "50", "newton_tol": "1e-10", "newton_max_iter": "25",
        "linear_solver": "direct", "linear_tol": "1e-10", "equilibrate": "false",
    },
    "scenario": {
        "source": "0.0", "initial_pressure": "0.0", "gravity": "false",
        **{f"pressure.{s}": None for s in SIDES},
        **{f"traction.{s}": None for s in SIDES},
    },
    "output": {"directory": "out", "snapshot_every": "1", "vtk": "true"},
}


def _key_lines(text):
    """Map (section, key) -> line number, and section -> header line."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), i)
            continue
        m = re.match(r"([^\s#;][^=:]*?)\s*[=:]", raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), i)
    return lines


@dataclass
class MeshConfig:
    nx: int = 4
    ny: int = 4
    nz: int = 4
    box: tuple = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    distortion: float = 0.0
    seed: int = 0
    boundary: dict = field(default_factory=lambda: {s: ("neumann", "neumann") for s in SIDES})


@dataclass
class TimeConfig:
    dt: tuple = (1.0,)
    n_steps: int = 1


@dataclass
class ScenarioConfig:
    source: float = 0.0
    initial_pressure: float = 0.0
    gravity: bool = False
    pressure: dict = field(default_factory=dict)
    traction: dict = field(default_factory=dict)


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_every: int = 1
    vtk: bool = True


@dataclass
class RunConfig:
    mesh: MeshConfig
    material: MaterialModel
    time: TimeConfig
    controls: Controls
    scenario: ScenarioConfig
    output: OutputConfig
    values: dict  # normalised "section.key" -> text, defaults included

    def build_mesh(self):
        m = self.mesh
        mesh = generate_brick(m.nx, m.ny, m.nz, box=m.box, distortion=m.distortion, seed=m.seed)
        return classify_boundary(mesh, m.boundary)

    def build_problem(self):
        s = self.scenario
        return Problem(self.build_mesh(), self.material, source=s.source,
                       pressure_bc=dict(s.pressure), traction=dict(s.traction),
                       gravity=s.gravity)

    @property
    def time_steps(self):
        dt = self.time.dt
        return np.resize(np.asarray(dt, dtype=float), self.time.n_steps)

    def provenance(self):
        """``section.key = value`` lines for every setting, sorted."""
        return [f"{k} = {v}" for k, v in sorted(self.values.items())]


class _Reader:
    def __init__(self, cp, lines):
        self.cp = cp
        self.lines = lines
        self.values = {}

    def raw(self, section, key):
        default = DEFAULTS[section][key]
        value = self.cp.get(section, key, fallback=default) if self.cp.has_section(section) \
            else default
        if value is not None:
            self.values[f"{section}.{key}"] = " ".join(value.split())
        return value

    def line(self, section, key):
        return self.lines.get((section, key))

    def numbers(self, section, key, count=None, kind=float):
        text = self.raw(section, key)
        if text is None:
            return None
        try:
            vals = [kind(v) for v in text.split()]
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected numbers, got {text!r}",
                              self.line(section, key)) from None
        if count is not None and len(vals) not in np.atleast_1d(count):
            raise ConfigError(f"{section}.{key}: expected {count} values, got {len(vals)}",
                              self.line(section, key))
        return vals

    def number(self, section, key, kind=float):
        vals = self.numbers(section, key, count=1, kind=kind)
        return None if vals is None else vals[0]

    def flag(self, section, key):
        text = self.raw(section, key).strip().lower()
        if text in ("true", "yes", "on", "1"):
            return True
        if text in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{section}.{key}: expected true/false, got {text!r}",
                          self.line(section, key))

    def word(self, section, key, choices):
        text = self.raw(section, key).strip().lower()
        if text not in choices:
            raise ConfigValidationError(key, f"must be one of {', '.join(choices)}",
                                        self.line(section, key))
        return text


def _matrix_rows(reader, section, key):
    text = reader.raw(section, key)
    line = reader.line(section, key)
    rows = [r for r in text.strip().splitlines() if r.strip()]
    if len(rows) != 6:
        raise ConfigError(f"{section}.{key}: 6x6 block needs 6 rows, got {len(rows)}", line)
    if any(len(row.split()) != 6 for row in rows):
        raise ConfigError(f"{section}.{key}: every row needs 6 values", line)
    try:
        return np.array([[float(v) for v in row.split()] for row in rows])
    except ValueError:
        raise ConfigError(f"{section}.{key}: non-numeric entry in block", line) from None


def _material(r):
    sec = "material"
    model = r.word(sec, "model", ("isotropic", "orthotropic", "full"))
    try:
        if model == "isotropic":
            E, nu = r.number(sec, "young"), r.number(sec, "poisson")
            if not E > 0:
                raise ConfigValidationError("young", "must be > 0", r.line(sec, "young"))
            if not -1.0 < nu < 0.5:
                raise ConfigValidationError("poisson", "must lie in (-1, 0.5)",
                                            r.line(sec, "poisson"))
            D = tn.isotropic_from_young(E, nu)
        elif model == "orthotropic":
            vals = r.numbers(sec, "orthotropic", count=9)
            if vals is None:
                raise ConfigValidationError("orthotropic", "required for model = orthotropic")
            D = tn.orthotropic_stiffness(*vals)
        else:
            if r.raw(sec, "stiffness") is None:
                raise ConfigValidationError("stiffness", "required for model = full")
            D = _matrix_rows(r, sec, "stiffness")
        biot = r.numbers(sec, "biot", count=(1, 3, 6))
        alpha = (biot[0] * tn.IDENTITY2 if len(biot) == 1 else
                 np.concatenate([biot, np.zeros(3)]) if len(biot) == 3 else np.array(biot))
        perm = r.numbers(sec, "permeability", count=(1, 3, 9))
        perm = np.reshape(perm, (3, 3)) if len(perm) == 9 else np.array(perm)
        plast = _plasticity(r)
        return MaterialModel(
            D=D, alpha=alpha, biot_modulus=r.number(sec, "biot_modulus"),
            permeability=perm, viscosity=r.number(sec, "viscosity"),
            fluid_compressibility=r.number(sec, "fluid_compressibility"),
            fluid_density=r.number(sec, "fluid_density"),
            rock_density=r.number(sec, "rock_density"), porosity=r.number(sec, "porosity"),
            gravity=np.array(r.numbers(sec, "gravity", count=3)), plasticity=plast)
    except MaterialError as exc:
        sec_of = "plasticity" if exc.name in DEFAULTS["plasticity"] else sec
        raise ConfigValidationError(exc.name, str(exc).split(": ", 1)[-1],
                                    r.line(sec_of, exc.name)) from None
    except np.linalg.LinAlgError as exc:
        raise ConfigValidationError("stiffness", str(exc)) from None


def _plasticity(r):
    sec = "plasticity"
    kind = r.word(sec, "kind", ("none", "von_mises", "drucker_prager"))
    if kind == "none":
        return None
    return Plasticity(kind=kind, yield_stress=r.number(sec, "yield_stress"),
                      hardening=r.number(sec, "hardening"), beta_p=r.number(sec, "beta_p"),
                      friction=r.number(sec, "friction"),
                      dilatancy=r.number(sec, "dilatancy"))


def parse_config(text):
    """Parse and validate configuration text into a :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   empty_lines_in_values=False, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        msg = exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc)
        raise ConfigError(msg, line) from None
    lines = _key_lines(text)
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        for key in cp[section]:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]",
                                  lines.get((section, key)))
    r = _Reader(cp, lines)

    # mesh
    counts = [r.number("mesh", k, kind=int) for k in ("nx", "ny", "nz")]
    for k, n in zip(("nx", "ny", "nz"), counts):
        if n < 1:
            raise ConfigValidationError(k, "must be >= 1", r.line("mesh", k))
    box = np.reshape(r.numbers("mesh", "box", count=6), (3, 2))
    if np.any(box[:, 1] <= box[:, 0]):
        raise ConfigValidationError("box", "each axis needs min < max", r.line("mesh", "box"))
    distortion = r.number("mesh", "distortion")
    if not 0.0 <= distortion < 0.5:
        raise ConfigValidationError("distortion", "must lie in [0, 0.5)",
                                    r.line("mesh", "distortion"))
    boundary = {}
    for side in SIDES:
        words = r.raw("boundary", side).split()
        if len(words) != 2 or words[0] not in FLOW_MARKERS or words[1] not in MECH_MARKERS:
            raise ConfigError(f"boundary.{side}: expected '<flow> <mechanics>' with each of "
                              "dirichlet/neumann", r.line("boundary", side))
        boundary[side] = tuple(words)
    mesh = MeshConfig(*counts, box=tuple(map(tuple, box)), distortion=distortion,
                      seed=r.number("mesh", "seed", kind=int), boundary=boundary)

    material = _material(r)

    dt = r.numbers("time", "dt")
    if not dt or min(dt) <= 0:
        raise ConfigValidationError("dt", "must be > 0", r.line("time", "dt"))
    n_steps = r.number("time", "n_steps", kind=int)
    if n_steps < 1:
        raise ConfigValidationError("n_steps", "must be >= 1", r.line("time", "n_steps"))

    c = "coupling"
    controls = Controls(
        tol=r.number(c, "tol"), tol_bracket=r.number(c, "tol_bracket"),
        bracket_atol=r.number(c, "bracket_atol"),
        max_iterations=r.number(c, "max_coupling_iters", kind=int),
        newton_tol=r.number(c, "newton_tol"),
        newton_max_iter=r.number(c, "newton_max_iter", kind=int),
        linear_solver=r.word(c, "linear_solver", ("direct", "cg")),
        linear_tol=r.number(c, "linear_tol"), equilibrate=r.flag(c, "equilibrate"))
    for k in ("tol", "tol_bracket", "newton_tol", "linear_tol"):
        if not getattr(controls, k) > 0:
            raise ConfigValidationError(k, "must be > 0", r.line(c, k))
    if controls.max_iterations < 2:
        raise ConfigValidationError("max_coupling_iters", "must be >= 2",
                                    r.line(c, "max_coupling_iters"))

    s = "scenario"
    pressure, traction = {}, {}
    for side in SIDES:
        g = r.number(s, f"pressure.{side}")
        if g is not None:
            if boundary[side][0] != "dirichlet":
                raise ConfigValidationError(f"pressure.{side}", "side is not flow-Dirichlet",
                                            r.line(s, f"pressure.{side}"))
            pressure[side] = g
        elif boundary[side][0] == "dirichlet":
            raise ConfigValidationError(f"pressure.{side}",
                                        "required on a flow-Dirichlet side")
        t = r.numbers(s, f"traction.{side}", count=3)
        if t is not None:
            if boundary[side][1] != "neumann":
                raise ConfigValidationError(f"traction.{side}",
                                            "side is not mechanics-Neumann",
                                            r.line(s, f"traction.{side}"))
            traction[side] = np.array(t)
    scenario = ScenarioConfig(source=r.number(s, "source"),
                              initial_pressure=r.number(s, "initial_pressure"),
                              gravity=r.flag(s, "gravity"), pressure=pressure,
                              traction=traction)
    o = "output"
    output = OutputConfig(directory=r.raw(o, "directory").strip(),
                          snapshot_every=r.number(o, "snapshot_every", kind=int),
                          vtk=r.flag(o, "vtk"))
    cfg = RunConfig(mesh, material, TimeConfig(tuple(dt), n_steps), controls, scenario,
                    output, r.values)
    try:
        cfg.build_mesh()
    except (MeshError, ValueError) as exc:
        raise ConfigValidationError("boundary", str(exc)) from None
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
