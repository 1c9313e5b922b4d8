import json
from pathlib import Path
from modules.errors import ConfigError
from modules.logger import get_logger

logger = get_logger(__name__)

# Default configuration values
DEFAULT_CONFIG = {
    # Generator
    'N': 10,
    'C': 5,
    'T': 300,
    'PE': 0.15,
    'SIGMA': 0.1,  # Noise covariance scale, per-entry std is sqrt(SIGMA)
    'REGIME': 'smooth',  # smooth, abrupt or both
    'SEED': 0,

    # Algorithm
    'LAMBDA': 15.0,
    'GAMMA': 0.9,
    'ALPHA': 'auto',  # 'auto' (two-pass 1/L_f) or a positive number

    # Hindsight solver
    'SOLVER_TOL': 1e-10,
    'SOLVER_MAX_ITER': 100000,

    # Analysis
    'STRIDE_EIG': 1,  # Eigen-decompose every k-th time step
    'T_BURN': 0,  # 0 = automatic ceil(N/C) * 3
    'REPEAT': 1,
    'WORKERS': 1,

    # I/O
    'OUTPUT_DIR': 'runs/latest',
    'EMIT_SVG': True,
    'EMIT_PNG': False,
    'DATA_Y': '',  # Directory of Y_tNNNN.csv files
    'DATA_X': '',  # X.csv
    'DATA_TRUTH': '',  # ground_truth.csv replayed alongside DATA_Y/DATA_X
    'CHECKPOINT': False,  # Write checkpoint.json with the final tracker state
    'RESUME_FROM': '',  # checkpoint.json to continue an ingested stream from

    # Logging
    'LOG_LEVEL': 'INFO',  # DEBUG, INFO, WARNING, ERROR, CRITICAL
    'LOG_FILE': '',
    'LOG_MAX_BYTES': 10 * 1024 * 1024,  # 10 MB
    'LOG_BACKUP_COUNT': 5,
}

_TRUE = ('true', '1', 'yes', 'on')
_FALSE = ('false', '0', 'no', 'off')


def coerce_value(key, value):
    """
    Convert a raw value to the type of the default for ``key``.

    Args:
        key: Configuration key (must exist in DEFAULT_CONFIG)
        value: Raw value from a file, a flag or a dict

    Returns:
        Value converted to the default's type
    """
    if key not in DEFAULT_CONFIG:
        raise ConfigError(f"Unknown configuration key: {key}")
    default = DEFAULT_CONFIG[key]

    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, str):
                text = value.strip()
                try:
                    return int(text)
                except ValueError:
                    value = float(text)  # scientific notation such as 1e5
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if key == 'ALPHA':
            # 'auto' or a number; kept as given and validated later
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return float(value)
            text = str(value).strip()
            return 'auto' if text.lower() == 'auto' else float(text)
        return str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"Invalid value for {key}: {value!r}") from None


def _parse_key_value(content):
    """Parse KEY=value lines, ignoring blanks and # comments."""
    parsed = {}
    for number, line in enumerate(content.split('\n'), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"Line {number}: expected KEY=value, got {line!r}")
        key, value = line.split('=', 1)
        parsed[key.strip().upper()] = value.strip()
    return parsed


def read_config(path=None):
    """
    Read configuration from a file and merge it into the defaults.

    Supports both JSON and key=value formats.

    Args:
        path: Optional config file path; None returns the defaults

    Returns:
        dict: Configuration dictionary
    """
    config = DEFAULT_CONFIG.copy()
    if path is None:
        return config

    config_file = Path(path)
    try:
        content = config_file.read_text(encoding='utf-8').strip()
    except OSError as e:
        raise ConfigError(f"Failed to read config file {config_file}: {e}") from e

    if content.startswith('{'):
        try:
            file_config = {k.upper(): v for k, v in json.loads(content).items()}
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON in {config_file}: {e}") from e
    else:
        file_config = _parse_key_value(content)

    for key, value in file_config.items():
        config[key] = coerce_value(key, value)

    logger.debug(f"Loaded config from {config_file}")
    return config


def apply_overrides(config, overrides):
    """
    Return a copy of ``config`` with non-None overrides applied.

    Args:
        config: Base configuration dictionary
        overrides: Mapping of KEY -> value (None means "not given")

    Returns:
        dict: Merged configuration
    """
    merged = dict(config)
    for key, value in overrides.items():
        if value is None:
            continue
        merged[key] = coerce_value(key, value)
        logger.debug(f"Config {key} overridden from command line: {merged[key]}")
    return merged


def get_config(config, key, default=None):
    """
    Get a specific configuration value.

    Args:
        config: Configuration dictionary
        key: Configuration key
        default: Default value if key not found

    Returns:
        Configuration value or default
    """
    return config.get(key, DEFAULT_CONFIG.get(key, default))
