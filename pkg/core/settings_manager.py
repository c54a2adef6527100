"""
Settings Manager Module
Handles run configuration documents, validation and persistence
"""

import copy
import json
import logging
import os

from core.errors import ConfigError
from core.online_gm import STEP_NORMS

logger = logging.getLogger(__name__)

MODES = ("simulate", "fit", "infer", "benchmark")

# Sections merged key by key instead of replaced wholesale
NESTED_SECTIONS = ("dgp", "mapping", "offline")


class SettingsManager:
    def __init__(self, settings_file=None, required=False):
        self.settings_file = settings_file
        # a document the user named must load; only the built-in default path may fall back
        self.required = required
        self.default_settings = {
            "mode": "simulate",
            "gamma": 3.0,
            "alpha": 0.75,
            "step_norm": "l2",
            "initial": None,
            "bootstrap_chains": 500,
            "taus": [0.1, 0.05],
            "inference": False,
            "seed": 20240101,
            "replications": 200,
            "threads": 1,
            "chain_threads": 1,
            "out": "results",
            "dgp": {
                "n": 10000,
                "m": 50,
                "tail": "gaussian",
                "noise_variance": 0.5,
                "score_covariance_scale": 0.5,
                "beta3": "verbatim"
            },
            "gamma_grid": None,
            "checkpoints": None,
            "input": None,
            "mapping": {
                "covariates": None,
                "response_prefix": "y@",
                "standardize": False,
                "on_malformed": "skip"
            },
            "output_grid_size": None,
            "trajectory_stride": "geometric",
            "trajectory_locations": [0.0, 0.304, 0.652, 1.0],
            "snapshot": None,
            "resume_from": None,
            "residual_diagnostics": False,
            "residual_curves": 100,
            "offline": {
                "max_iterations": 500,
                "rel_tolerance": 1e-8,
                "weight_floor": 1e-10
            }
        }
        self.settings = self.load_settings()

    def _merge(self, base, incoming):
        merged = copy.deepcopy(base)
        for key, value in incoming.items():
            if key in NESTED_SECTIONS and isinstance(value, dict):
                merged[key] = {**merged.get(key, {}), **value}
            else:
                merged[key] = value
        return merged

    def load_settings(self):
        """Load settings from the JSON document, merged over the defaults"""
        if self.settings_file and os.path.exists(self.settings_file):
            try:
                with open(self.settings_file, "r") as f:
                    loaded_settings = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                if self.required:
                    raise ConfigError(f"cannot read settings file {self.settings_file}: {e}") from e
                logger.warning(f"⚠️ Error loading settings from {self.settings_file}: {e}")
            else:
                if not isinstance(loaded_settings, dict):
                    raise ConfigError(f"settings file {self.settings_file} must hold a JSON object")
                settings = self.validate_settings(self._merge(self.default_settings, loaded_settings))
                logger.info(f"✅ Settings loaded from {self.settings_file}")
                return settings
        elif self.settings_file:
            if self.required:
                raise ConfigError(f"settings file {self.settings_file} not found")
            logger.warning(f"⚠️ Settings file {self.settings_file} not found")

        logger.info("📝 Using default settings")
        return copy.deepcopy(self.default_settings)

    def save_settings(self):
        """Save current settings, keeping a .backup of the previous file"""
        if not self.settings_file:
            raise ConfigError("no settings file to save to")
        backup_file = self.settings_file + ".backup"
        try:
            if os.path.exists(self.settings_file):
                os.replace(self.settings_file, backup_file)

            with open(self.settings_file, "w") as f:
                json.dump(self.settings, f, indent=4)

            logger.info("✅ Settings saved successfully")
            return True

        except OSError as e:
            logger.error(f"❌ Error saving settings: {e}")

            # Restore backup if save failed
            if os.path.exists(backup_file):
                os.replace(backup_file, self.settings_file)

            return False

    def validate_settings(self, settings):
        """Reject values that would change results instead of silently clamping them"""
        if settings["mode"] not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {settings['mode']!r}")

        gammas = [settings["gamma"]] + list(settings.get("gamma_grid") or [])
        for gamma in gammas:
            if not isinstance(gamma, (int, float)) or gamma <= 0:
                raise ConfigError(f"gamma must be positive, got {gamma!r}")
        if not 0.5 < settings["alpha"] <= 1.0:
            raise ConfigError(f"alpha must lie in (0.5, 1], got {settings['alpha']!r}")
        if settings["step_norm"] not in STEP_NORMS:
            raise ConfigError(f"step_norm must be one of {STEP_NORMS}, got {settings['step_norm']!r}")

        taus = settings["taus"]
        if not isinstance(taus, list) or not taus:
            raise ConfigError("taus must be a non-empty list")
        for tau in taus:
            if not 0.0 < tau < 1.0:
                raise ConfigError(f"tau must lie in (0, 1), got {tau!r}")

        if int(settings["bootstrap_chains"]) < 0:
            raise ConfigError("bootstrap_chains must be non-negative")
        if int(settings["replications"]) < 1:
            raise ConfigError("replications must be >= 1")

        # parallelism never changes results, so it is clamped
        settings["threads"] = max(1, int(settings["threads"]))
        settings["chain_threads"] = max(1, int(settings["chain_threads"]))

        if settings["checkpoints"] is not None:
            if any(int(c) < 1 or int(c) > settings["dgp"]["n"] for c in settings["checkpoints"]):
                raise ConfigError("checkpoints must lie in [1, dgp.n]")

        stride = settings["trajectory_stride"]
        if stride != "geometric" and (not isinstance(stride, int) or stride < 1):
            raise ConfigError(f"trajectory_stride must be 'geometric' or a positive integer, got {stride!r}")

        size = settings["output_grid_size"]
        if size is not None and int(size) < 2:
            raise ConfigError("output_grid_size must be >= 2")

        return settings

    def check_mode_requirements(self):
        """Fields a mode cannot run without"""
        mode = self.settings["mode"]
        if mode == "fit" and not self.settings["input"]:
            raise ConfigError("fit mode needs an input CSV path")
        if mode == "infer" and not self.settings["snapshot"]:
            raise ConfigError("infer mode needs a snapshot path")

    def get(self, key, default=None):
        """Get a setting value"""
        return self.settings.get(key, default)

    def set(self, key, value):
        """Set a setting value"""
        self.settings[key] = value

    def update(self, new_settings):
        """Update multiple settings"""
        self.settings = self.validate_settings(self._merge(self.settings, new_settings))

    def apply_overrides(self, overrides):
        """Flat CLI flags win over document fields; None means 'not given'"""
        given = {k: v for k, v in overrides.items() if v is not None}
        if given:
            self.update(given)
        self.check_mode_requirements()
        return self.settings

    def reset_to_defaults(self):
        """Reset all settings to defaults"""
        self.settings = copy.deepcopy(self.default_settings)
        return self.save_settings()

    def export_settings(self, filepath):
        """Export settings to a file"""
        try:
            with open(filepath, "w") as f:
                json.dump(self.settings, f, indent=4)
            return True
        except OSError as e:
            logger.error(f"❌ Error exporting settings: {e}")
            return False

    def import_settings(self, filepath):
        """Import settings from a file"""
        try:
            with open(filepath, "r") as f:
                imported_settings = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"❌ Error importing settings: {e}")
            return False

        self.update(imported_settings)
        if self.settings_file:
            return self.save_settings()
        return True
