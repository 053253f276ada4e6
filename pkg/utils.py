# SPDX-License-Identifier: GPL-3.0-only

import os
import hashlib
from typing import Optional
from logutils import get_logger

logger = get_logger(__name__)


def get_env_var(key: str, default_value: Optional[str] = None, strict: bool = False):
    """Retrieves the value of a configuration from the environment variables."""
    try:
        value = os.environ[key] if strict else os.getenv(key) or default_value
        if strict and (value is None or value.strip() == ""):
            raise ValueError(f"Configuration '{key}' is missing or empty.")
        return value
    except KeyError as error:
        logger.error(
            "Configuration '%s' not found in environment variables: %s", key, error
        )
        raise
    except ValueError as error:
        logger.error("Configuration '%s' is empty: %s", key, error)
        raise


def default_threads() -> int:
    """Thread count used when neither the config nor the CLI sets one."""
    value = get_env_var("PMVIEW_THREADS", "1")
    try:
        threads = int(value)
    except ValueError:
        logger.warning("Ignoring non-integer PMVIEW_THREADS=%s", value)
        return 1
    return max(threads, 1)


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Derive a stable sub-seed from (master seed, purpose label, index).

    Args:
        master (int): The run's master seed.
        label (str): What the randomness is for, e.g. "views" or "ks-boot".
        index (int): Replicate or member index.

    Returns:
        int: A non-negative 63-bit seed, identical on every platform.
    """
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
