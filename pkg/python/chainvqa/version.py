"""Version detection and the startup log line."""

from __future__ import annotations

from pathlib import Path

from .logger import get_logger

logger = get_logger(__name__)

PACKAGE_NAME = "chainvqa"


def get_version(package_name: str = PACKAGE_NAME) -> str:
    """Version from installed package metadata, else the source tree's pyproject.toml.

    Returns "0.0.0" when neither is available.
    """
    try:
        from importlib.metadata import PackageNotFoundError, version as package_version

        return package_version(package_name)
    except PackageNotFoundError:
        pass

    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    # python/chainvqa/version.py -> repository root
    search_paths = [Path(__file__).resolve().parents[2], Path.cwd()]
    for base_path in search_paths:
        pyproject_path = base_path / "pyproject.toml"
        if not pyproject_path.exists():
            continue
        try:
            with open(pyproject_path, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            logger.debug("Could not read version from %s: %s", pyproject_path, e)
            continue
        project = data.get("project", {})
        if project.get("name") == package_name and "version" in project:
            return str(project["version"])

    logger.warning("Could not determine %s version, using default '0.0.0'", package_name)
    return "0.0.0"


def log_startup(command: str, version: str | None = None) -> None:
    """Log a standardized startup line for a CLI command or the service."""

    version = version or get_version()
    logger.info("Starting chainvqa %s v%s", command, version)
