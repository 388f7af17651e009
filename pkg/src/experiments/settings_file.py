# region -----External Imports-----
import configparser
import logging
from pathlib import Path
from typing import Dict, Optional

from pydantic import ValidationError
# endregion

# region -----Internal Imports-----
from ..exceptions import InvalidArgumentError
from . import presets
from .schemas import ExperimentConfig
# endregion

# region -----Supporting Variables-----
logger = logging.getLogger(__name__)

# ini section -> ini key -> ExperimentConfig field
KEY_MAP: Dict[str, Dict[str, str]] = {
    "mdp": {
        "preset": "mdp",
        "file": "mdp_file",
        "target": "p_solid_target",
        "behavior": "p_solid_behavior",
        "target_probs": "target_probs",
        "behavior_probs": "behavior_probs",
        "start_state": "start_state",
    },
    "features": {
        "preset": "features",
        "file": "features_file",
    },
    "algo": {
        "name": "algo",
        "algos": "algos",
        "b": "b",
        "lambda": "lam",
        "stepsize": "stepsize",
        "eta": "eta",
        "step_mu": "step_mu",
        "step_t0": "step_t0",
        "projection": "projection",
        "radius": "radius",
    },
    "experiment": {
        "T": "T",
        "budget": "budget",
        "seeds": "n_seeds",
        "base_seed": "base_seed",
        "stride": "stride",
        "points": "points",
        "metric": "metric",
        "reference": "reference",
        "projection_weights": "projection_weights",
        "threshold": "threshold",
        "b_values": "b_values",
        "lambda_values": "lambda_values",
        "rho_values": "rho_values",
        "vary": "vary",
        "samples": "n_samples",
        "probe_theta": "probe_theta",
        "loci_only": "loci_only",
    },
}

LIST_FIELDS = {"algos", "target_probs", "behavior_probs", "b_values", "lambda_values", "rho_values", "probe_theta"}
# endregion


def split_list(raw: str) -> list:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _field_value(field: str, raw: str):
    return split_list(raw) if field in LIST_FIELDS else raw.strip()


# region -----File Loading-----
def read_settings_file(path) -> Dict[str, object]:
    """Flat field -> raw value mapping; unknown sections or keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise InvalidArgumentError(f"{path}: {e}")

    values: Dict[str, object] = {}
    for section in parser.sections():
        if section not in KEY_MAP:
            raise InvalidArgumentError(f"{path}: unknown section [{section}]; expected one of {sorted(KEY_MAP)}")
        for key, raw in parser.items(section):
            if key not in KEY_MAP[section]:
                raise InvalidArgumentError(f"{path}: unknown config key {section}.{key}")
            values[KEY_MAP[section][key]] = _field_value(KEY_MAP[section][key], raw)
    logger.debug("read %d settings from %s", len(values), path)
    return values
# endregion


# region -----Merging-----
def build_config(
        command: str,
        figure: Optional[str] = None,
        config_path: Optional[Path] = None,
        overrides: Optional[Dict[str, object]] = None
) -> ExperimentConfig:
    """Precedence: flags over file over figure preset over defaults."""
    values: Dict[str, object] = {}
    if figure is not None:
        values.update(presets.figure_overrides(figure, command))
    if config_path is not None:
        values.update(read_settings_file(config_path))
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}" for error in e.errors()
        )
        raise InvalidArgumentError(f"invalid configuration: {problems}")
# endregion
