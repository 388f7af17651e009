# region -----External Imports-----
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
# endregion

# region -----Internal Imports-----
from ..exceptions import InvalidArgumentError
from ..features import FEATURE_PRESETS, feature_preset, tabular_features
from ..mdp import baird_mdp, state_independent_policy
from ..models import FeatureMap, FiniteMdp, Policy
from ..storage import load_features_csv, load_mdp_file
from .schemas import ExperimentConfig
# endregion

# region -----Supporting Variables-----
BUDGET = 200_000
TARGET_SWEEP = [0.167, 0.2, 0.4, 0.6, 0.8]
BEHAVIOR_SWEEP = [0.2, 0.4, 0.6, 0.7, 0.8]
LAMBDA_GRID = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]

MDP_PRESETS = ("baird", "file")
# endregion


@dataclass(frozen=True)
class FigurePreset:
    command: str
    description: str
    overrides: Dict[str, object] = field(default_factory=dict)


# shared by every Baird figure: gamma 0.99, eta 2^-9, 20 seeds
FIGURES: Dict[str, FigurePreset] = {
    "1a": FigurePreset("run", "TD(0), ETD(0) and PER-ETD(0) with b in {2, 4, 8} on phi1", {
        "features": "phi1", "algos": ["td0", "etd0", "per-etd0"], "b_values": [2, 4, 8],
        "budget": BUDGET, "points": 200,
    }),
    "1b": FigurePreset("sweep-b", "bias and variance of PER-ETD(0) across b on phi1", {
        "features": "phi1", "algo": "per-etd0", "b_values": [4, 6, 8, 12, 16, 20], "T": 50_000,
    }),
    "2": FigurePreset("sweep-lambda", "PER-ETD(lambda) final error across lambda, b = 4", {
        "features": "phi3", "algo": "per-etd-lambda", "b": 4, "lambda_values": LAMBDA_GRID, "T": 50_000,
    }),
    "3": FigurePreset("sweep-lambda", "finite-b fixed points against the V_pi projection, b = 4", {
        "features": "phi3", "algo": "per-etd-lambda", "b": 4, "lambda_values": LAMBDA_GRID, "loci_only": True,
    }),
    "5": FigurePreset("run", "TD(0), ETD(0) and PER-ETD(0) under a mild target policy", {
        "features": "phi1", "p_solid_target": 0.167, "algos": ["td0", "etd0", "per-etd0"],
        "b_values": [2, 4, 8], "budget": BUDGET, "points": 200,
    }),
    "6": FigurePreset("sweep-rho", "PER-ETD(0) under varying target policies", {
        "features": "phi1", "algo": "per-etd0", "b": 4, "vary": "target", "rho_values": TARGET_SWEEP,
        "T": 50_000, "points": 200,
    }),
    "7": FigurePreset("sweep-rho", "PER-ETD(0) under varying behavior policies", {
        "features": "phi1", "algo": "per-etd0", "b": 4, "vary": "behavior", "rho_values": BEHAVIOR_SWEEP,
        "T": 50_000, "points": 200,
    }),
}


def _panel(figure: str, suffix: str, **overrides) -> FigurePreset:
    base = FIGURES[figure]
    return FigurePreset(base.command, f"{base.description} ({suffix})", {**base.overrides, **overrides})


# one preset per panel: the lambda studies per feature set, the policy sweeps per b
FIGURES.update({
    f"{figure}-{phi}": _panel(figure, phi, features=phi)
    for figure in ("2", "3") for phi in ("phi1", "phi2", "phi3")
})
FIGURES.update({
    f"{figure}-b{b}": _panel(figure, f"b = {b}", b=b)
    for figure in ("6", "7") for b in (4, 6)
})


# region -----Figure Lookup-----
def figure_overrides(figure: str, command: str) -> Dict[str, object]:
    if figure not in FIGURES:
        raise InvalidArgumentError(f"unknown figure {figure!r}; expected one of {sorted(FIGURES)}")
    preset = FIGURES[figure]
    if preset.command != command:
        raise InvalidArgumentError(f"figure {figure} belongs to '{preset.command}', not '{command}'")
    return dict(preset.overrides)
# endregion


# region -----Problem Lookup-----
def _policy(mdp: FiniteMdp, probs, p_solid: float, name: str) -> Policy:
    if probs is not None:
        return state_independent_policy(mdp.n_states, probs)
    if mdp.n_actions != 2:
        raise InvalidArgumentError(f"{name}_probs is required for an MDP with {mdp.n_actions} actions")
    return state_independent_policy(mdp.n_states, [1.0 - p_solid, p_solid])


def resolve_mdp(cfg: ExperimentConfig) -> Tuple[FiniteMdp, Policy, Policy]:
    if cfg.mdp == "baird":
        mdp, target, behavior = baird_mdp(cfg.p_solid_target, cfg.p_solid_behavior)
    elif cfg.mdp == "file":
        mdp = load_mdp_file(cfg.mdp_file)
        target = behavior = None
    else:
        raise InvalidArgumentError(f"unknown MDP preset {cfg.mdp!r}; expected one of {list(MDP_PRESETS)}")

    if target is None or cfg.target_probs is not None:
        target = _policy(mdp, cfg.target_probs, cfg.p_solid_target, "target")
    if behavior is None or cfg.behavior_probs is not None:
        behavior = _policy(mdp, cfg.behavior_probs, cfg.p_solid_behavior, "behavior")
    return mdp, target, behavior


def resolve_features(cfg: ExperimentConfig, n_states: int) -> FeatureMap:
    if cfg.features == "file":
        features = load_features_csv(cfg.features_file)
    elif cfg.features == "tabular":
        features = tabular_features(n_states)
    elif cfg.features in FEATURE_PRESETS:
        features = feature_preset(cfg.features)
    else:
        raise InvalidArgumentError(
            f"unknown feature preset {cfg.features!r}; expected one of {sorted(FEATURE_PRESETS) + ['file', 'tabular']}"
        )
    if features.n_states != n_states:
        raise InvalidArgumentError(f"features cover {features.n_states} states, MDP has {n_states}")
    return features


def probe_theta(cfg: ExperimentConfig, d: int) -> np.ndarray:
    if cfg.probe_theta is None:
        return np.zeros(d)
    theta = np.array(cfg.probe_theta, dtype=np.float64)
    if theta.shape != (d,):
        raise InvalidArgumentError(f"probe_theta must have {d} entries, got {theta.shape[0]}")
    return theta
# endregion
