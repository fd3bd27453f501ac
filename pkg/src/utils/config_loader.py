"""Config loader for TOML run configurations."""

import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from errors import ConfigError
from models import RunConfig


_LINE = re.compile(r"line (\d+)")


def _dotted(loc) -> str:
    return ".".join(str(part) for part in loc)


class ConfigLoader:
    """Loads run configurations by path or by scenario name."""

    def __init__(self, scenarios_dir: str):
        self.scenarios_dir = Path(scenarios_dir)

    def parse(self, text: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Parse TOML text into a RunConfig; overrides replace top-level keys."""
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            line = getattr(e, "lineno", None)
            if line is None:
                match = _LINE.search(str(e))
                line = int(match.group(1)) if match else None
            raise ConfigError(f"malformed TOML: {e}", line=line) from e

        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return RunConfig.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            raise ConfigError(first["msg"], field=_dotted(first["loc"])) from e

    def resolve(self, name_or_path: str) -> Path:
        """A file path as given, else scenarios/<name>.toml."""
        path = Path(name_or_path)
        if path.is_file():
            return path
        candidate = self.scenarios_dir / f"{name_or_path}.toml"
        if candidate.is_file():
            return candidate
        raise ConfigError(f"no config file or scenario named '{name_or_path}'")

    def load(self, name_or_path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        path = self.resolve(name_or_path)
        return self.parse(path.read_text(encoding="utf-8"), overrides)

    def list_scenarios(self) -> List[str]:
        if not self.scenarios_dir.exists():
            return []
        return sorted(p.stem for p in self.scenarios_dir.glob("*.toml"))
