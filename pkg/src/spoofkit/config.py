"""Line-based ``[section]`` / ``key = value`` run configuration."""

from __future__ import annotations


class ConfigError(ValueError):
    """Malformed config file or unknown key (a usage error)."""


def parse_config(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {line_no}: empty section name")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value'")
        if current is None:
            raise ConfigError(f"line {line_no}: key outside of a [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {line_no}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return sections


def read_config(path) -> dict[str, dict[str, str]]:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def serialize_config(sections: dict[str, dict[str, object]]) -> str:
    out = []
    for name, values in sections.items():
        out.append(f"[{name}]\n")
        for key in sorted(values):
            value = values[key]
            if isinstance(value, (list, tuple)):
                value = " ".join(str(v) for v in value)
            out.append(f"{key} = {value}\n")
    return "".join(out)
