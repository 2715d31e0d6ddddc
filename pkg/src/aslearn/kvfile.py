"""Flat ``key = value`` text files with dotted section names.

Grammar (one item per line)::

    <header> <version>          first non-blank, non-comment line
    section.name = value        value runs to end of line
    # comment                   ignored, also after a value

Keys must be unique. Values are kept as strings; typed getters convert them.
"""

from .exceptions import ConfigError


def parse_kv(text, header, version, source="<string>"):
    items = {}
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not seen_header:
            parts = line.split()
            if len(parts) != 2 or parts[0] != header:
                raise ConfigError(f"{source}:{lineno}: expected header '{header} {version}'")
            if int(parts[1]) != version:
                raise ConfigError(f"{source}:{lineno}: unsupported {header} version {parts[1]}")
            seen_header = True
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in items:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        items[key] = value.strip()
    if not seen_header:
        raise ConfigError(f"{source}: missing header '{header} {version}'")
    return items


def dump_kv(items, header, version):
    lines = [f"{header} {version}"]
    lines += [f"{k} = {v}" for k, v in items.items()]
    return "\n".join(lines) + "\n"


def read_kv(path, header, version):
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read(), header, version, source=str(path))


def to_bool(value, key="value"):
    v = value.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def to_floats(value, key="value"):
    try:
        return [float(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {value!r}") from None


def to_ints(value, key="value"):
    try:
        return [int(v) for v in value.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{key}: expected integers, got {value!r}") from None


def fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return " ".join(fmt_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)
