"""Descriptores de texto para schedules y familias de grafos.

Schedules:
    explicit:3,5,0,2            lista finita
    explicit:3,5,inf            la última fase no termina
    explicit:3,5|symbolic:...   lista seguida de una cola simbólica
    symbolic:base=2,a=1,b=1,d1=4[,c=2][,round=ceil]

Familias:
    karytree:k=2,lambda=1    heightpath:k=2,lambda=1
    box:d=4                  genbox:b=1:1/2:0.5
    hypercube                hamming
    leveltree:k=2,gamma=0    leveltree:rows=2;2-3,gamma=0.5
    star:M=linear,gamma=0,start=leaf   (M=kind or kind*c)
"""

from typing import Callable, Dict, Tuple

from pydantic import ValidationError

from src.errors import DescriptorError, RwoggError
from src.families import (
    AxisBound,
    Box,
    GenBox,
    GrowthFunction,
    HammingWeightChain,
    HeightPath,
    Hypercube,
    KaryTree,
    LevelProfile,
    LevelTree,
    LevelTreeHeightChain,
    Star,
    StarLumpedChain,
    TransitionFamily,
)
from src.schedule import DurationSchedule, Rounding, SymbolicScheduleFamily


def _key_values(text: str, allowed: Tuple[str, ...], descriptor: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    if not text:
        return pairs
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not value.strip():
            raise DescriptorError(f"'{item}' no es clave=valor en '{descriptor}'")
        if key not in allowed:
            raise DescriptorError(f"clave '{key}' desconocida en '{descriptor}' (válidas: {', '.join(allowed)})")
        if key in pairs:
            raise DescriptorError(f"clave '{key}' repetida en '{descriptor}'")
        pairs[key] = value.strip()
    return pairs


def _number(value: str, descriptor: str) -> float:
    try:
        return float(value)
    except ValueError as e:
        raise DescriptorError(f"'{value}' no es un número en '{descriptor}'") from e


def _integer(value: str, descriptor: str) -> int:
    try:
        return int(value)
    except ValueError as e:
        raise DescriptorError(f"'{value}' no es un entero en '{descriptor}'") from e


def _symbolic(body: str, descriptor: str) -> SymbolicScheduleFamily:
    fields = _key_values(body, ("base", "a", "b", "d1", "c", "round"), descriptor)
    if "base" not in fields:
        raise DescriptorError(f"falta 'base' en '{descriptor}'")
    kwargs = {key: _number(fields[key], descriptor) for key in ("base", "a", "b", "c") if key in fields}
    if "d1" in fields:
        kwargs["d1"] = _integer(fields["d1"], descriptor)
    if "round" in fields:
        try:
            kwargs["rounding"] = Rounding(fields["round"])
        except ValueError as e:
            raise DescriptorError(f"redondeo '{fields['round']}' desconocido (nearest|ceil)") from e
    return SymbolicScheduleFamily(**kwargs)


def parse_schedule(descriptor: str) -> DurationSchedule:
    """Descriptor de texto -> DurationSchedule."""
    text = descriptor.strip()
    kind, _, body = text.partition(":")
    try:
        if kind == "symbolic":
            return DurationSchedule.symbolic(_symbolic(body, text))
        if kind == "explicit":
            head, bar, tail_text = body.partition("|")
            tail = None
            if bar:
                tail_kind, _, tail_body = tail_text.partition(":")
                if tail_kind != "symbolic":
                    raise DescriptorError(f"la cola de '{text}' debe ser symbolic:...")
                tail = _symbolic(tail_body, text)
            tokens = [token.strip() for token in head.split(",") if token.strip()]
            unbounded = bool(tokens) and tokens[-1] == "inf"
            if unbounded:
                tokens = tokens[:-1]
            if not tokens and not unbounded and tail is None:
                raise DescriptorError(f"'{text}' no tiene duraciones")
            values = [_integer(token, text) for token in tokens]
            return DurationSchedule.explicit(values, tail=tail, unbounded_final=unbounded)
    except ValidationError as e:
        raise DescriptorError(f"schedule inválido '{text}': {e.errors()[0]['msg']}") from e
    except DescriptorError:
        raise
    except RwoggError as e:
        raise DescriptorError(f"schedule inválido '{text}': {e}") from e
    raise DescriptorError(f"tipo de schedule '{kind}' desconocido (explicit|symbolic)")


def _tree(cls):
    def build(fields: Dict[str, str], text: str):
        lam = fields.get("lambda", fields.get("lam"))
        if "k" not in fields or lam is None:
            raise DescriptorError(f"'{text}' necesita k y lambda")
        return cls(k=_integer(fields["k"], text), lam=_number(lam, text))
    return build


def _box(fields: Dict[str, str], text: str) -> Box:
    return Box(d=_integer(fields.get("d", "1"), text))


def _genbox(fields: Dict[str, str], text: str) -> GenBox:
    if "b" not in fields:
        raise DescriptorError(f"'{text}' necesita b=c1:e1/c2:e2/...")
    axes = []
    for axis in fields["b"].split("/"):
        c, sep, e = axis.partition(":")
        if not sep:
            raise DescriptorError(f"eje '{axis}' debe ser c:e en '{text}'")
        axes.append(AxisBound(c=_number(c, text), e=_number(e, text)))
    return GenBox(axes=tuple(axes))


def _profile(fields: Dict[str, str], text: str) -> LevelProfile:
    if ("k" in fields) == ("rows" in fields):
        raise DescriptorError(f"'{text}' necesita exactamente uno de k= o rows=")
    if "k" in fields:
        return LevelProfile.kary(_integer(fields["k"], text))
    rows = [[_integer(c, text) for c in row.split("-")] for row in fields["rows"].split(";")]
    return LevelProfile.table(rows)


def _level_tree(cls):
    def build(fields: Dict[str, str], text: str):
        return cls(profile=_profile(fields, text), gamma=_number(fields.get("gamma", "0"), text))
    return build


def _star(cls):
    def build(fields: Dict[str, str], text: str):
        kind, star, scale = fields.get("M", "linear").partition("*")
        growth = GrowthFunction(kind=kind, c=_integer(scale, text) if star else 1)
        return cls(growth=growth, gamma=_number(fields.get("gamma", "0"), text), start=fields.get("start", "root"))
    return build


_FAMILIES: Dict[str, Tuple[Tuple[str, ...], Callable]] = {
    "karytree": (("k", "lambda", "lam"), _tree(KaryTree)),
    "heightpath": (("k", "lambda", "lam"), _tree(HeightPath)),
    "box": (("d",), _box),
    "genbox": (("b",), _genbox),
    "hypercube": ((), lambda fields, text: Hypercube()),
    "hamming": ((), lambda fields, text: HammingWeightChain()),
    "leveltree": (("k", "rows", "gamma"), _level_tree(LevelTree)),
    "leveltree-height": (("k", "rows", "gamma"), _level_tree(LevelTreeHeightChain)),
    "star": (("M", "gamma", "start"), _star(Star)),
    "star-lumped": (("M", "gamma", "start"), _star(StarLumpedChain)),
}


def parse_family(descriptor: str) -> TransitionFamily:
    """Descriptor de texto -> TransitionFamily."""
    text = (descriptor or "").strip()
    if not text:
        raise DescriptorError("falta el descriptor de familia")
    name, _, body = text.partition(":")
    if name not in _FAMILIES:
        raise DescriptorError(f"familia '{name}' desconocida (válidas: {', '.join(_FAMILIES)})")
    allowed, build = _FAMILIES[name]
    fields = _key_values(body, allowed, text)
    try:
        return build(fields, text)
    except ValidationError as e:
        error = e.errors()[0]
        location = ".".join(str(part) for part in error["loc"])
        raise DescriptorError(f"familia inválida '{text}': {location}: {error['msg']}") from e
    except DescriptorError:
        raise
    except RwoggError as e:
        raise DescriptorError(f"familia inválida '{text}': {e}") from e
