"""Run configuration: a strict INI dialect with typed keys and explicit defaults.

Every key has a type, a default and (where one exists) a short note tying it
to the mathematics.  Unknown sections or keys are rejected, and a parsed
config serialises back to text that parses to an equal config.
"""

from dataclasses import dataclass, field
import configparser
import math

from .params import ParameterError, ProblemParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and the violated rule."""


EXPERIMENTS = ("stationary", "parabolic_sub", "parabolic_super", "blowup_scan",
               "sobolev_probe", "scaling_probe", "torsion_limit")
PARABOLIC = ("parabolic_sub", "parabolic_super", "blowup_scan")


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


# section -> key -> (parser, default, help)
SCHEMA = {
    "experiment": {
        "kind": (str, "stationary", "one of " + ", ".join(EXPERIMENTS)),
        "seed": (int, 0, "seed for randomised perturbation checks"),
    },
    "mesh": {
        "kind": (str, "interval", "interval or rect"),
        "a": (float, 0.0, "interval left end"),
        "b": (float, 1.0, "interval right end"),
        "n": (int, 256, "interval cells"),
        "ax": (float, 0.0, "rectangle x-range start"),
        "bx": (float, 1.0, "rectangle x-range end"),
        "ay": (float, 0.0, "rectangle y-range start"),
        "by": (float, 1.0, "rectangle y-range end"),
        "nx": (int, 32, "rectangle cells along x"),
        "ny": (int, 32, "rectangle cells along y"),
    },
    "params": {
        "p": (float, 2.5, "leading exponent, 1<q<p"),
        "q": (float, 1.5, "lower exponent, 1<q<p"),
        "delta": (float, 0.5, "singular exponent δ>0; parabolic runs need 0<δ<2+1/(p−1)"),
        "theta": (float, 1.0, "singular weight ϑ>=0"),
        "allow_homogeneous": (_bool, False, "accept q=p (linear verification cases only)"),
    },
    "nonlinearity": {
        "kind": (str, "none", "none, constant, capped_power or power"),
        "value": (float, 0.0, "constant: f = value"),
        "cap": (float, 1.0, "capped_power: f = min(s^(q-1), cap)"),
        "r": (float, 4.0, "power: f = coef |s|^(r-2) s, the lower growth bound c_r|s|^r <= rF(s) needs q<r"),
        "coef": (float, 1.0, "power: coefficient, also c_r in c_r|s|^r <= rF(s)"),
    },
    "initial": {
        "kind": (str, "shell", "sine, shell (sin^τ for δ>1), steady or subsolution"),
        "amplitude": (float, 1.0, "multiplier applied to the initial profile"),
        "energy_scale": (_bool, False, "first scale u0 by powers of 1.25 until J(u0)<=0"),
        "scales": (_floats, (1.0, 2.0), "blowup_scan: extra multipliers of u0"),
    },
    "time": {
        "T": (float, 1.0, "final time"),
        "N0": (int, 100, "number of uniform steps, dt = T/N0"),
    },
    "solver": {
        "newton_tol": (float, 1e-10, "Newton residual tolerance (data scaled)"),
        "max_newton": (int, 200, "Newton iteration cap per solve"),
        "damping": (float, 0.5, "line-search reduction factor"),
        "armijo": (float, 1e-4, "Armijo sufficient-decrease constant"),
        "eps_schedule": (_floats, tuple(10.0 ** -k for k in range(1, 9)),
                         "ε-continuation values before the final ε=0 solve"),
        "steady_tol": (float, 1e-9, "monotone iteration stopping tolerance"),
    },
    "diagnostics": {
        "C_star": (_opt_float, None, "embedding constant C_* (needed for δ<=1 blow-up premises)"),
        "lambda_star": (_opt_float, None, "threshold λ_* (needed for δ<=1 blow-up premises)"),
        "theta_hat": (_opt_float, None, "lower bound for the Nehari infimum Θ_ϑ (δ<=1)"),
        "sigma": (_opt_float, None, "concavity σ in (1, p/2) for p>2; default (1+p/2)/2"),
        "blow_cap_factor": (float, 1e8, "blow_cap = factor * ||u0||_inf"),
        "picard_tol": (float, 1e-10, "Picard sweep tolerance"),
        "picard_max": (int, 50, "Picard sweep cap per window"),
        "picard_window": (int, 8, "steps per Picard window"),
        "stab_rel_tol": (float, 1e-3, "stabilisation tolerance relative to ||u_inf||_inf"),
        "m_grid": (_floats, (1.0, 3.0, 8.0), "sobolev_probe exponents m"),
        "levels": (int, 3, "sobolev_probe meshes n, 2n, 4n, ..."),
        "rho_schedule": (_floats, (1.0, 0.1, 0.01, 0.001), "torsion_limit values of ρ"),
        "M_schedule": (_floats, (10.0, 100.0, 1000.0), "scaling_probe values of M"),
    },
    "output": {
        "dir": (str, "", "output directory; empty means runs/<run id>"),
    },
}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


@dataclass
class RunConfig:
    values: dict                        # section -> key -> value, fully resolved
    explicit: dict = field(default_factory=dict, compare=False)   # keys given by the user

    def __getitem__(self, section):
        return self.values[section]

    @property
    def experiment(self):
        return self.values["experiment"]["kind"]

    @property
    def params(self):
        p = self.values["params"]
        return ProblemParams(p["p"], p["q"], p["delta"], p["theta"])

    def defaults_used(self):
        return {s: {k: v for k, v in kv.items() if k not in self.explicit.get(s, ())}
                for s, kv in self.values.items()}

    def serialize(self):
        lines = []
        for s, kv in self.values.items():
            lines.append(f"[{s}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in kv.items())
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, overrides):
        """New config with ``section.key=value`` strings applied."""
        return parse_config(self.serialize(), overrides)

    def to_json(self):
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
                for s, kv in self.values.items()}


def _convert(section, key, raw):
    parser, _, note = SCHEMA[section][key]
    try:
        return parser(raw.strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc} ({note})") from None


def _validate(cfg):
    v = cfg.values
    kind = v["experiment"]["kind"]
    if kind not in EXPERIMENTS:
        raise ConfigError(f"[experiment] kind = {kind!r}: must be one of {', '.join(EXPERIMENTS)}")
    m = v["mesh"]
    if m["kind"] not in ("interval", "rect"):
        raise ConfigError(f"[mesh] kind = {m['kind']!r}: must be interval or rect")
    if m["kind"] == "interval":
        if not m["a"] < m["b"]:
            raise ConfigError("[mesh] a, b: need a < b")
        if m["n"] < 2:
            raise ConfigError("[mesh] n: need n >= 2")
    else:
        if not (m["ax"] < m["bx"] and m["ay"] < m["by"]):
            raise ConfigError("[mesh] ax..by: need ax < bx and ay < by")
        if m["nx"] < 2 or m["ny"] < 2:
            raise ConfigError("[mesh] nx, ny: need nx, ny >= 2")
    p = v["params"]
    if not 1 < p["q"] < p["p"] and not (p["allow_homogeneous"] and 1 < p["q"] == p["p"]):
        raise ConfigError(f"[params] p = {p['p']!r}, q = {p['q']!r}: need 1<q<p")
    try:
        params = ProblemParams(p["p"], p["q"], p["delta"], p["theta"])
    except ParameterError as exc:
        raise ConfigError(f"[params] {exc}") from None
    if kind in PARABOLIC and not params.subcritical:
        raise ConfigError(f"[params] delta = {p['delta']!r}: experiment {kind} needs "
                          f"0<δ<2+1/(p−1) (= {params.delta_crit:.6g} for p = {p['p']!r})")
    nl = v["nonlinearity"]
    if nl["kind"] not in ("none", "constant", "capped_power", "power"):
        raise ConfigError(f"[nonlinearity] kind = {nl['kind']!r}: must be none, constant, "
                          "capped_power or power")
    if nl["kind"] == "power" and not nl["r"] > p["q"]:
        raise ConfigError(f"[nonlinearity] r = {nl['r']!r}: the lower growth bound c_r|s|^r <= rF(s) needs q<r")
    if nl["kind"] == "capped_power" and nl["cap"] <= 0:
        raise ConfigError("[nonlinearity] cap: need cap > 0")
    if kind == "parabolic_sub" and nl["kind"] == "power":
        raise ConfigError("[nonlinearity] kind = 'power': parabolic_sub needs a subhomogeneous reaction")
    if kind in ("parabolic_super", "blowup_scan") and nl["kind"] != "power":
        raise ConfigError(f"[nonlinearity] kind: {kind} needs kind = power")
    if kind == "sobolev_probe" and not p["delta"] > 1:
        raise ConfigError("[params] delta: sobolev_probe needs delta > 1")
    ini = v["initial"]
    if ini["kind"] not in ("sine", "shell", "steady", "subsolution"):
        raise ConfigError(f"[initial] kind = {ini['kind']!r}: must be sine, shell, steady or subsolution")
    if not ini["amplitude"] > 0 or any(s <= 0 for s in ini["scales"]):
        raise ConfigError("[initial] amplitude, scales: need positive values")
    t = v["time"]
    if not t["T"] > 0 or t["N0"] < 1:
        raise ConfigError("[time] T, N0: need T > 0 and N0 >= 1")
    s = v["solver"]
    sched = s["eps_schedule"]
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("[solver] eps_schedule: need positive strictly decreasing values")
    if s["newton_tol"] <= 0 or s["max_newton"] < 1 or s["steady_tol"] <= 0:
        raise ConfigError("[solver] newton_tol, max_newton, steady_tol: need positive values")
    if not (0 < s["damping"] < 1 and 0 < s["armijo"] < 1):
        raise ConfigError("[solver] damping, armijo: need values in (0, 1)")
    d = v["diagnostics"]
    for k in ("C_star", "lambda_star"):
        if d[k] is not None and not d[k] > 0:
            raise ConfigError(f"[diagnostics] {k}: need a positive value")
    if d["sigma"] is not None and not 1 < d["sigma"] < p["p"] / 2:
        raise ConfigError("[diagnostics] sigma: need 1 < sigma < p/2")
    if d["levels"] < 2:
        raise ConfigError("[diagnostics] levels: need levels >= 2")
    if d["picard_max"] < 1 or d["picard_window"] < 1:
        raise ConfigError("[diagnostics] picard_max, picard_window: need values >= 1")
    if any(x < 1 for x in d["m_grid"]):
        raise ConfigError("[diagnostics] m_grid: need m >= 1")
    if any(x <= 0 for x in d["rho_schedule"]) or any(x < 1 for x in d["M_schedule"]):
        raise ConfigError("[diagnostics] rho_schedule > 0 and M_schedule >= 1 required")
    if not math.isfinite(t["T"]):
        raise ConfigError("[time] T: need a finite value")
    return cfg


def parse_config(text, overrides=()):
    """Parse INI text into a validated :class:`RunConfig`.

    ``overrides`` are ``section.key=value`` strings applied after the file.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True, default_section="__unused__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        lhs, val = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        raw.setdefault(sec, {})[key] = val
    values, explicit = {}, {}
    for sec, kv in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in kv:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"[{sec}] unknown key {key!r}")
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        explicit[sec] = set()
        for key, (_, default, _) in keys.items():
            if key in raw.get(sec, {}):
                values[sec][key] = _convert(sec, key, raw[sec][key])
                explicit[sec].add(key)
            else:
                values[sec][key] = default
    return _validate(RunConfig(values, explicit))


def schema_help():
    """One line per key, used for ``--help``."""
    out = []
    for sec, keys in SCHEMA.items():
        out.append(f"[{sec}]")
        for key, (_, default, note) in keys.items():
            out.append(f"  {key} (default {_fmt(default)}): {note}")
    return "\n".join(out)
