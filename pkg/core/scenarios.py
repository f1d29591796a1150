"""
GnarLab — Scenarios
Wahre Parametertabellen der Simulationsszenarien, Ziehen von Memberships und Kovariaten
und die INI-Konfiguration für Kampagnen ([defaults] + [run.<name>]).
"""
import configparser
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from core.model import DEFAULT_BURN_IN, NOISE_KINDS, GnarParams, Membership

logger = logging.getLogger("gnarlab.scenarios")

NETWORK_KINDS = ("sbm", "powerlaw")
RUN_PREFIX = "run."

# ─── PARAMETERTABELLEN ────────────────────────────────

_BASE = {
    2: {
        "beta": [[0.3, -0.2], [0.1, 0.3]],
        "nu": [0.4, 0.6],
        "zeta": [[-0.8, 0.8], [-0.32, 1.2]],
    },
    3: {
        "beta": [[0.15, 0.2, -0.1], [0.1, 0.3, -0.2], [0.15, 0.1, 0.3]],
        "nu": [0.2, 0.4, 0.6],
        "zeta": [[-1.2, 0.4], [-0.8, 0.8], [-0.32, 1.2]],
    },
}

DEFAULT_PI = {2: (0.5, 0.5), 3: (0.3, 0.3, 0.4)}
DEFAULT_COMMUNITIES = {100: 5, 200: 10, 300: 20}


def scenario_params(scenario: int, g0: int) -> GnarParams:
    """
    Szenario 1: Tabelle unverändert.
    Szenario 2: alle ν_g = 0 (Gruppen unterscheiden sich nur im Netzwerkeffekt).
    Szenario 3: alle ζ_g = 0 (Netzwerk- und Momentum-Effekt).
    """
    if g0 not in _BASE:
        raise ValueError(f"Keine Parametertabelle für G0={g0} (verfügbar: {sorted(_BASE)})")
    if scenario not in (1, 2, 3):
        raise ValueError(f"Unbekanntes Szenario {scenario} (erlaubt: 1, 2, 3)")
    base = _BASE[g0]
    params = GnarParams(np.array(base["beta"]), np.array(base["nu"]), np.array(base["zeta"]))
    if scenario == 2:
        params.nu = np.zeros(g0)
    elif scenario == 3:
        params.zeta = np.zeros_like(params.zeta)
    return params


def default_communities(n: int) -> int:
    return DEFAULT_COMMUNITIES.get(n, max(1, n // 20))


def draw_membership(n: int, pi, rng: np.random.Generator) -> Membership:
    """g_i ~ Multinomial(π), unabhängig pro Knoten."""
    pi = np.asarray(pi, dtype=float)
    return Membership(rng.choice(pi.size, size=n, p=pi), pi.size)


def draw_covariates(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """z_i ~ N(0, I_p)."""
    return rng.standard_normal((n, p))


# ─── KONFIGURATION ────────────────────────────────────

@dataclass
class ScenarioConfig:
    name: str = "default"
    scenario: int = 1
    network: str = "sbm"
    N: int = 100
    T: int = 300
    G0: int = 2
    p: int = 2
    pi: tuple = ()
    sigma: float = 1.0
    noise: str = "gaussian"
    replications: int = 100
    seed: int = 2024
    g_grid: tuple = ()
    restarts: int = 100
    burn_in: int = DEFAULT_BURN_IN
    communities: int = 0
    tol: float = 1e-8
    max_iter: int = 100
    profile_budget: int = 4096
    level: float = 0.95
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.pi:
            self.pi = DEFAULT_PI.get(self.G0, tuple([1.0 / self.G0] * self.G0))
        self.pi = tuple(float(x) for x in self.pi)
        if not self.g_grid:
            self.g_grid = (self.G0,)
        self.g_grid = tuple(sorted({int(g) for g in self.g_grid}))
        if not self.communities:
            self.communities = default_communities(self.N)
        self.validate()

    def validate(self):
        if self.network not in NETWORK_KINDS:
            raise ValueError(f"Unbekanntes Netzwerk '{self.network}' (erlaubt: {NETWORK_KINDS})")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"Unbekannte Noise-Verteilung '{self.noise}'")
        if len(self.pi) != self.G0:
            raise ValueError(f"π hat {len(self.pi)} Einträge, G0={self.G0}")
        if abs(sum(self.pi) - 1.0) > 1e-9 or min(self.pi) < 0:
            raise ValueError(f"π muss eine Wahrscheinlichkeitsverteilung sein: {self.pi}")
        if self.N < 2 or self.T < 2:
            raise ValueError(f"N und T müssen >= 2 sein (N={self.N}, T={self.T})")
        if self.replications < 1 or self.restarts < 1:
            raise ValueError("replications und restarts müssen >= 1 sein")
        if self.sigma <= 0:
            raise ValueError(f"sigma muss > 0 sein (ist {self.sigma})")
        if not 0 < self.level < 1:
            raise ValueError(f"level muss in (0, 1) liegen (ist {self.level})")
        # Parametertabelle muss zu G0 und p passen
        params = self.true_params()
        if params.p != self.p:
            raise ValueError(f"Parametertabelle hat p={params.p}, Konfiguration p={self.p}")

    def true_params(self) -> GnarParams:
        return scenario_params(self.scenario, self.G0)

    def to_ini_section(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in ("name", "extra"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            out[f.name] = _fmt(value) if not isinstance(value, str) else value
        return out


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ─── INI ──────────────────────────────────────────────

_INT_KEYS = {"scenario", "N", "T", "G0", "p", "replications", "seed", "restarts", "burn_in",
             "communities", "max_iter", "profile_budget"}
_FLOAT_KEYS = {"sigma", "tol", "level"}
_TUPLE_FLOAT = {"pi"}
_TUPLE_INT = {"g_grid"}


def parse_grid(text: str) -> tuple:
    """'2,3,4' oder '2-5' → (2, 3, 4[, 5])."""
    text = str(text).strip()
    if not text:
        return ()
    if "-" in text and "," not in text:
        lo, hi = (int(x) for x in text.split("-", 1))
        if hi < lo:
            raise ValueError(f"Ungültiges Grid '{text}'")
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in text.split(",") if x.strip())


def _coerce(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _TUPLE_FLOAT:
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if key in _TUPLE_INT:
        return parse_grid(raw)
    return raw.strip()


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(default_section="defaults", interpolation=None)
    parser.optionxform = str   # N, T, G0 bleiben groß
    return parser


def config_from_mapping(name: str, mapping: dict, overrides: Optional[dict] = None) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)} - {"name", "extra"}
    kwargs, extra = {}, {}
    for key, raw in mapping.items():
        if key in known:
            kwargs[key] = _coerce(key, raw) if isinstance(raw, str) else raw
        else:
            extra[key] = raw
    if extra:
        logger.warning(f"Unbekannte Schlüssel in Run '{name}': {sorted(extra)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            kwargs[key] = value
    return ScenarioConfig(name=name, extra=extra, **kwargs)


def load_configs(path, overrides: Optional[dict] = None, base: Optional[dict] = None) -> list:
    """
    Liest alle [run.<name>]-Sektionen. Vorrang: overrides (CLI) > Datei > base (Umgebung).
    Ohne Run-Sektion wird [defaults] allein als Run 'default' gelesen.
    """
    parser = _new_parser()
    if base:
        parser.read_dict({"defaults": {k: _fmt(v) for k, v in base.items() if v is not None}})
    read = parser.read(str(path), encoding="utf-8")
    if not read:
        raise FileNotFoundError(f"Konfigurationsdatei nicht gefunden: {path}")

    runs = [s for s in parser.sections() if s.startswith(RUN_PREFIX)]
    if not runs:
        return [config_from_mapping("default", dict(parser.defaults()), overrides)]
    return [config_from_mapping(s[len(RUN_PREFIX):], dict(parser[s]), overrides) for s in runs]


def load_defaults(path) -> dict:
    """Nur die [defaults]-Sektion, typisiert (für Befehle ohne Szenario wie fit und select)."""
    parser = _new_parser()
    if not parser.read(str(path), encoding="utf-8"):
        raise FileNotFoundError(f"Konfigurationsdatei nicht gefunden: {path}")
    return {key: _coerce(key, raw) for key, raw in parser.defaults().items()}


def write_config_echo(config: ScenarioConfig, path) -> Path:
    """Aufgelöste Konfiguration als INI (Audit-Trail)."""
    parser = _new_parser()
    parser[f"{RUN_PREFIX}{config.name}"] = config.to_ini_section()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        parser.write(fh)
    return path


def config_dict(config: ScenarioConfig) -> dict:
    data = asdict(config)
    data["pi"] = list(config.pi)
    data["g_grid"] = list(config.g_grid)
    return data
