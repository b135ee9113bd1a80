"""
Flat configuration files and run manifests for mldenoise.

Configuration files are plain ``key = value`` text:

    # solver settings for the acceptance phantom
    alpha = 0.5
    gamma = 1.4
    nu = 1.4
    delta = 1.3
    beta = 0.5

Comments start with ``#``, surrounding whitespace and matching quotes are
stripped, and later keys override earlier ones. A ``.json`` file holding a
flat object is accepted as well.

Every CLI command records a RunManifest in the same format next to its
outputs, holding the seed and all resolved parameters of the run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from mldenoise.exceptions import ConfigError


def parse_key_values(content: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines into a dictionary of strings.

    Args:
        content: Text to parse
        source: Name used in error messages

    Returns:
        Mapping of keys to raw string values

    Raises:
        ConfigError: If a non-comment line has no '=' or an empty key
    """
    result: dict[str, str] = {}
    for lineno, line in enumerate(content.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
            value = value[1:-1]
        result[key] = value
    return result


def load_config(file_path: Path | str) -> dict[str, str]:
    """
    Load a flat configuration file.

    Files ending in .json must hold a single object of scalars; anything
    else is read as key=value text.

    Args:
        file_path: Path to the configuration file

    Returns:
        Mapping of keys to string values

    Raises:
        FileNotFoundError: If the file doesn't exist
        ConfigError: If the file format is invalid
    """
    file_path = Path(file_path)

    if not file_path.exists():
        raise FileNotFoundError(f"Config file not found: {file_path}")

    content = file_path.read_text()

    if file_path.suffix.lower() == ".json":
        try:
            data = json.loads(content)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON format: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("JSON config must contain an object at root level")
        out: dict[str, str] = {}
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                raise ConfigError(f"JSON config value for '{key}' must be a scalar")
            out[str(key)] = str(value).lower() if isinstance(value, bool) else str(value)
        return out

    return parse_key_values(content, source=str(file_path))


def parse_bool(value: str) -> bool:
    """Interpret true/false, yes/no, on/off and 1/0."""
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"Not a boolean value: {value!r}")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """
    Provenance record written next to every CLI output.

    Attributes:
        command: Subcommand name (synth, denoise, metrics, sweep)
        argv: The command line as given
        version: mldenoise version that produced the outputs
        seed: 64-bit seed of all randomness in the run (None if the run used none)
        parameters: All resolved parameters, as strings
        started: UTC start time (ISO 8601)
        finished: UTC finish time (ISO 8601), empty until finish() is called
    """

    command: str
    argv: list[str]
    version: str
    seed: int | None = None
    parameters: dict[str, str] = field(default_factory=dict)
    started: str = field(default_factory=_utc_now)
    finished: str = ""

    def set(self, key: str, value: object) -> None:
        """Record a resolved parameter."""
        self.parameters[key] = str(value)

    def finish(self) -> None:
        """Stamp the finish time."""
        self.finished = _utc_now()

    def to_text(self) -> str:
        """Render as key=value lines, header keys first, parameters sorted."""
        lines = [
            f"command={self.command}",
            f"argv={json.dumps(self.argv)}",
            f"version={self.version}",
            f"seed={'' if self.seed is None else self.seed}",
            f"started={self.started}",
            f"finished={self.finished}",
        ]
        lines.extend(f"param.{key}={self.parameters[key]}" for key in sorted(self.parameters))
        return "\n".join(lines) + "\n"

    def write(self, path: Path | str) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path: Path | str) -> RunManifest:
        """Read a manifest written by write().

        Raises:
            FileNotFoundError: If the file doesn't exist
            ConfigError: If required keys are missing or malformed
        """
        data = load_config(path)
        missing = [k for k in ("command", "argv", "version") if k not in data]
        if missing:
            raise ConfigError(f"{path}: manifest is missing {', '.join(missing)}")
        try:
            argv = json.loads(data["argv"])
            seed = int(data["seed"]) if data.get("seed") else None
        except (json.JSONDecodeError, ValueError) as e:
            raise ConfigError(f"{path}: malformed manifest: {e}") from e
        params = {k[len("param.") :]: v for k, v in data.items() if k.startswith("param.")}
        return cls(
            command=data["command"],
            argv=list(argv),
            version=data["version"],
            seed=seed,
            parameters=params,
            started=data.get("started", ""),
            finished=data.get("finished", ""),
        )
