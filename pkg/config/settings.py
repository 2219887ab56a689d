"""
Settings
========
Runtime settings read from the environment (and an optional .env file).

Keys:
- XINET_LOG_LEVEL: logging level name (default INFO)
- XINET_DEBUG_NANS: check every forward op for NaN/Inf (default off)
- XINET_EVAL_WORKERS: threads used for per-sample metric work (default 1)
- XINET_RUN_SLOW_TESTS: run the minutes-scale training tests (default off)
- XINET_DATA_DIR: default dataset directory (default ./data)
"""

import os
from dotenv import load_dotenv

# Loading environment variables
load_dotenv()


def _env_flag(name, default=False):
    """Reading a boolean flag from the environment."""
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


LOG_LEVEL = os.getenv('XINET_LOG_LEVEL', 'INFO').upper()
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

DEBUG_NANS = _env_flag('XINET_DEBUG_NANS')
EVAL_WORKERS = max(1, int(os.getenv('XINET_EVAL_WORKERS', '1')))
RUN_SLOW_TESTS = _env_flag('XINET_RUN_SLOW_TESTS')
DATA_DIR = os.getenv('XINET_DATA_DIR', './data')

# Preprocessing defaults (the band is configurable, 0.5-20 Hz is a teleseismic band)
BANDPASS_LOW_HZ = 0.5
BANDPASS_HIGH_HZ = 20.0
BANDPASS_ORDER = 4

# Desk-scale record geometry: 1024 samples at 64 Hz (16 s)
DEFAULT_LENGTH = 1024
DEFAULT_SAMPLE_RATE_HZ = 64.0

# Gap synthesis
GAP_MIN_SECONDS = 0.5
GAP_MAX_SECONDS = 1.0
GAP_EDGE_FRACTION = 0.05

# Dataset split
VAL_FRACTION = 0.2
