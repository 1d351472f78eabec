"""Flat ``key = value`` configuration files.

One entry per line, ``#`` starts a comment, blank lines are ignored. The same
grammar serves model parameters, noise settings and CLI options.
"""

from pathlib import Path

from .errors import ConfigError


def parse_config(text, source="<string>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key)
        values[key] = value
    return values


def read_config(path):
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def format_config(values, header=None):
    lines = [f"# {header}"] if header else []
    lines += [f"{key} = {value}" for key, value in values.items()]
    return "\n".join(lines) + "\n"
