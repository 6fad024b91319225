"""TOML reading and writing for network specs, with line-numbered diagnostics."""

from __future__ import annotations

import json
import re
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .model import MATRICES, Category, Kind, NetworkSpec

_KIND_NAMES = {k: k.name.lower() for k in Kind}
_KIND_BY_NAME = {v: k for k, v in _KIND_NAMES.items()}


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = self.path or "<input>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


def line_of(text: str, *needles: str) -> int | None:
    """First line containing every needle, or the first needle alone."""
    lines = text.splitlines()
    for i, ln in enumerate(lines, 1):
        if all(n in ln for n in needles):
            return i
    for i, ln in enumerate(lines, 1):
        if needles and needles[0] in ln:
            return i
    return None


def parse_toml(text: str, path=None) -> dict:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else max(len(text.splitlines()), 1)
        raise FormatError(f"invalid TOML: {exc}", path, line) from None


def spec_to_dict(spec: NetworkSpec) -> dict:
    names = spec.names
    doc: dict = {
        "species": {
            "names": list(names),
            "kinds": [_KIND_NAMES[k] for k in spec.kinds],
            "categories": [c.value for c in spec.categories],
        },
        "origin": {names[i]: names[o] for i, o in enumerate(spec.origin) if o >= 0},
        "death": {n: float(v) for n, v in zip(names, spec.d)},
        "source": {n: float(v) for n, v in zip(names, spec.source) if v != 0},
        "basal": {n: float(v) for n, v in zip(names, spec.basal) if v != 0},
        "options": {"clamp": spec.clamp, "anti_id_secretes_cyt_a": spec.anti_id_secretes_cyt_a},
        "weights": {},
    }
    for which in MATRICES:
        m = spec.matrix(which)
        doc["weights"][which] = {
            "triples": [[names[i], names[j], float(m[i, j])] for i, j in zip(*np.nonzero(m))]
        }
    if spec.meta:
        doc["meta"] = dict(spec.meta)
    return doc


def _value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("nan" if np.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to a spec file")


def dumps_spec(spec: NetworkSpec) -> str:
    """Spec document with one weight triple per line; floats keep every bit."""
    doc = spec_to_dict(spec)
    out = []
    for section in ("species", "origin", "death", "source", "basal", "options"):
        out.append(f"[{section}]")
        out += [f"{k} = {_value(v)}" for k, v in doc[section].items()]
        out.append("")
    for which in MATRICES:
        out.append(f"[weights.{which}]")
        out.append("triples = [")
        out += [f"    {_value(t)}," for t in doc["weights"][which]["triples"]]
        out.append("]")
        out.append("")
    if "meta" in doc:
        out.append(tomli_w.dumps({"meta": doc["meta"]}).rstrip("\n"))
        out.append("")
    return "\n".join(out)


def save_spec(spec: NetworkSpec, path) -> None:
    Path(path).write_text(dumps_spec(spec))


def loads_spec(text: str, path=None) -> NetworkSpec:
    doc = parse_toml(text, path)

    def fail(msg, *needles):
        raise FormatError(msg, path, line_of(text, *needles) if needles else None)

    for section in ("species", "death", "weights"):
        if section not in doc:
            fail(f"missing section [{section}]")
    sp = doc["species"]
    names = sp.get("names")
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        fail("[species] names must be a non-empty list of strings", "names")
    if len(set(names)) != len(names):
        fail("duplicate species name", "names")
    n = len(names)
    index = {nm: i for i, nm in enumerate(names)}

    def idx(name, *ctx):
        if name not in index:
            fail(f"unknown species {name!r}", f'"{name}"', *ctx)
        return index[name]

    try:
        kinds = tuple(_KIND_BY_NAME[k] for k in sp.get("kinds", []))
        categories = tuple(Category(c) for c in sp.get("categories", []))
    except (KeyError, ValueError) as exc:
        fail(f"bad species kind or category: {exc}", "kinds")
    if len(kinds) != n or len(categories) != n:
        fail("[species] kinds and categories must list one entry per species", "kinds")

    origin = [-1] * n
    for tgt, src in doc.get("origin", {}).items():
        origin[idx(tgt, "=")] = idx(src)

    def vector(section, default):
        v = np.full(n, default, dtype=float)
        for name, val in doc.get(section, {}).items():
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                fail(f"[{section}] {name} must be a number", name)
            v[idx(name)] = float(val)
        return v

    d = vector("death", np.nan)
    if np.any(np.isnan(d)):
        missing = [names[i] for i in np.flatnonzero(np.isnan(d))]
        fail(f"[death] missing rates for {missing}", "[death]")

    mats = {}
    for which in MATRICES:
        m = np.zeros((n, n))
        for k, t in enumerate(doc["weights"].get(which, {}).get("triples", [])):
            if (
                not isinstance(t, list)
                or len(t) != 3
                or not isinstance(t[2], (int, float))
                or isinstance(t[2], bool)
            ):
                fail(f"[weights.{which}] entry {k} must be [target, source, value]", f"[weights.{which}]")
            i, j = idx(t[0], f'"{t[1]}"'), idx(t[1], f'"{t[0]}"')
            if m[i, j] != 0:
                fail(f"[weights.{which}] duplicate entry {t[0]} <- {t[1]}", f'"{t[0]}"', f'"{t[1]}"')
            m[i, j] = float(t[2])
        mats[which] = m

    opts = doc.get("options", {})
    try:
        return NetworkSpec(
            w=mats["w"],
            w1=mats["w1"],
            w2=mats["w2"],
            d=d,
            source=vector("source", 0.0),
            basal=vector("basal", 0.0),
            names=tuple(names),
            categories=categories,
            kinds=kinds,
            origin=tuple(origin),
            clamp=opts.get("clamp", "total"),
            anti_id_secretes_cyt_a=bool(opts.get("anti_id_secretes_cyt_a", False)),
            meta=dict(doc.get("meta", {})),
        )
    except ValueError as exc:
        fail(str(exc), "clamp")


def load_spec(path) -> NetworkSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read spec: {exc.strerror}", p) from None
    return loads_spec(text, p)


REFERENCE_SPEC_FILE = "reference_spec.toml"


def reference_spec() -> NetworkSpec:
    """The committed calibrated network."""
    res = resources.files("idnet") / "data" / REFERENCE_SPEC_FILE
    return loads_spec(res.read_text(), REFERENCE_SPEC_FILE)
