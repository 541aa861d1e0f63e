"""Template grammar for construction instructions.

A deterministic, lossless parser and generator over the closed sentence
shapes the system understands: absolute/relative single placements,
bridge two-index phrasing, dependent placements ("next to", "on top"),
row/column/tower count expansions, naming and recall of stored shapes,
and removal.  Anything a parse cannot prove from the text stays null;
the parser never invents a value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .grid import Color, PartKind

GRID_MAX = 16


class Unparseable(Exception):
    def __init__(self, text: str, reason: str = ""):
        self.text = text
        self.reason = reason
        super().__init__(f"cannot parse: {text!r}" + (f" ({reason})" if reason else ""))


class MissingField(Exception):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"template requires field {name!r}")


class UnknownLabel(Exception):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"unknown relative position {label!r}")


# Relative grid positions -> (x, y).  x=1 is the left column, y=1 the top row.
RELATIVE_LEXICON: dict[str, tuple[int, int]] = {
    "top left": (1, 1),
    "top right": (16, 1),
    "bottom left": (1, 16),
    "bottom right": (16, 16),
    "middle": (8, 8),
    "center": (8, 8),
    "top middle": (8, 1),
    "bottom middle": (8, 16),
    "left middle": (1, 8),
    "right middle": (16, 8),
}

# Dependent-placement offsets applied to the anchor part's position.
RELATION_OFFSETS: dict[str, tuple[int, int, int]] = {
    "next-to": (1, 0, 0),
    "right-of": (1, 0, 0),
    "left-of": (-1, 0, 0),
    "behind": (0, -1, 0),
    "in-front": (0, 1, 0),
    "on-top": (0, 0, 1),
}


@dataclass(frozen=True)
class AnchorRef:
    """A reference to a previously mentioned part ("it", "the blue screw").

    Empty kind and color means "the most recent part".
    """

    kind: PartKind | None = None
    color: Color | None = None
    text: str = "it"


@dataclass(frozen=True)
class DependentRelation:
    kind: str  # key of RELATION_OFFSETS
    target: AnchorRef


@dataclass
class PartialPlacementSpec:
    """One part's parse result; unstated attributes are None.

    `provenance` maps each non-null field to where its value came from:
    "utterance", "answer", "memory" or "derived".
    """

    kind: PartKind | None = None
    color: Color | None = None
    x: int | None = None
    y: int | None = None
    z: int | None = None
    x2: int | None = None
    y2: int | None = None
    relation: DependentRelation | None = None
    relative: str | None = None
    provenance: dict[str, str] = field(default_factory=dict)

    def fully_specified(self) -> bool:
        return None not in (self.kind, self.color, self.x, self.y, self.z)

    def missing_fields(self) -> list[str]:
        """Null fields the clarification loop must fill, in question order."""
        missing = [f for f in ("kind", "color") if getattr(self, f) is None]
        if self.relation is None and self.relative is None:
            if self.x is None:
                missing.append("x")
            if self.y is None:
                missing.append("y")
        return missing

    def set_field(self, name: str, value, source: str) -> None:
        setattr(self, name, value)
        self.provenance[name] = source

    def copy(self) -> "PartialPlacementSpec":
        return replace(self, provenance=dict(self.provenance))


@dataclass(frozen=True)
class NameCommand:
    name: str


@dataclass(frozen=True)
class RecallCommand:
    name: str
    target: PartialPlacementSpec
    color_override: Color | None = None
    part_override: PartKind | None = None
    size_override: float | None = None


@dataclass(frozen=True)
class RemoveCommand:
    x: int
    y: int
    z: int | None = None


Parsed = PartialPlacementSpec | NameCommand | RecallCommand | RemoveCommand


# --- lexicon tables ---------------------------------------------------------

KIND_PHRASES: dict[tuple[str, ...], PartKind] = {
    ("horizontal", "bridge"): PartKind.HORIZONTAL_BRIDGE,
    ("vertical", "bridge"): PartKind.VERTICAL_BRIDGE,
    ("hex", "nut"): PartKind.HEX_NUT,
    ("hexagonal", "nut"): PartKind.HEX_NUT,
    ("square", "nut"): PartKind.SQUARE_NUT,
    ("screw",): PartKind.SCREW,
    ("nut",): PartKind.NUT,
    ("washer",): PartKind.WASHER,
    ("bolt",): PartKind.BOLT,
    ("gasket",): PartKind.GASKET,
}

COLOR_WORDS = {c.value: c for c in Color}

ORDINAL_WORDS = {
    w: i + 1
    for i, w in enumerate(
        "first second third fourth fifth sixth seventh eighth ninth tenth "
        "eleventh twelfth thirteenth fourteenth fifteenth sixteenth".split()
    )
}
CARDINAL_WORDS = {
    w: i + 1
    for i, w in enumerate(
        "one two three four five six seven eight nine ten eleven twelve "
        "thirteen fourteen fifteen sixteen".split()
    )
}

VERBS = {"place", "put", "add", "insert", "stack", "build", "make", "construct"}
SKIP_WORDS = {"can", "could", "you", "please", "now", "then", "next", "also", "me", "us", "go", "ahead"}
ARTICLES = {"a", "an", "the", "another", "some"}

_NUM_RE = re.compile(r"^(\d+)(?:st|nd|rd|th)?$")


def _word_number(token: str) -> int | None:
    m = _NUM_RE.match(token)
    if m:
        return int(m.group(1))
    if token in ORDINAL_WORDS:
        return ORDINAL_WORDS[token]
    if token in CARDINAL_WORDS:
        return CARDINAL_WORDS[token]
    return None


def ordinal(n: int) -> str:
    if 11 <= n % 100 <= 13:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def resolve_relative(label: str) -> tuple[int, int]:
    key = label.strip().lower().replace("-", " ")
    key = re.sub(r"\s+", " ", key)
    if key not in RELATIVE_LEXICON:
        raise UnknownLabel(label)
    return RELATIVE_LEXICON[key]


# --- tokenizer --------------------------------------------------------------


def _tokenize(text: str) -> tuple[list[str], list[str]]:
    """Returns (lowercase tokens, original-case tokens), commas kept as tokens."""
    prepared = text.replace("-", " ").replace("'", " ").replace(",", " , ")
    raw = prepared.split()
    return [t.lower() for t in raw], raw


def _sentences(text: str) -> list[str]:
    parts = re.split(r"[.!?;]+", text)
    return [p.strip() for p in parts if p.strip()]


class _Clause:
    """One parsed clause: either a list of specs or a command."""

    def __init__(self, specs=None, command=None):
        self.specs = specs or []
        self.command = command


class _SentenceParser:
    def __init__(self, sentence: str, full_text: str):
        self.low, self.raw = _tokenize(sentence)
        self.i = 0
        self.text = full_text

    # -- stream helpers --

    def peek(self, k: int = 0) -> str | None:
        j = self.i + k
        return self.low[j] if j < len(self.low) else None

    def next(self) -> str:
        tok = self.low[self.i]
        self.i += 1
        return tok

    def at_end(self) -> bool:
        return self.i >= len(self.low)

    def try_words(self, *words: str) -> bool:
        if self.low[self.i : self.i + len(words)] == list(words):
            self.i += len(words)
            return True
        return False

    def fail(self, reason: str):
        raise Unparseable(self.text, reason)

    # -- entry point --

    def parse(self) -> list[Parsed]:
        for trial in (self._try_name_command, self._try_remove_command):
            mark = self.i
            result = trial()
            if result is not None:
                if not self.at_end():
                    self.fail("trailing words after command")
                return [result]
            self.i = mark

        out: list[Parsed] = []
        leading_loc = self._try_leading_adjunct()
        first = True
        while not self.at_end():
            if not first and not self._consume_separator():
                self.fail(f"unexpected word {self.peek()!r}")
            clause = self._parse_clause()
            if first and leading_loc and clause.specs:
                s0 = clause.specs[0]
                for f, v in leading_loc.items():
                    if f == "relative":
                        if s0.relative is None:
                            s0.relative = v
                    elif getattr(s0, f, None) is None:
                        s0.set_field(f, v, "utterance")
            out.extend(clause.specs if clause.command is None else [clause.command])
            first = False
        if not out:
            self.fail("empty sentence")
        return out

    # -- commands --

    def _try_name_command(self) -> NameCommand | None:
        starts = (
            ("this", "is", "what", "i", "call"),
            ("i", "call", "this"),
            ("call", "this"),
            ("call", "it"),
            ("name", "this"),
            ("name", "it"),
            ("this", "is"),
            ("let", "s", "call", "this"),
        )
        for start in starts:
            mark = self.i
            if self.try_words(*start):
                while self.peek() in ("a", "an", "the"):
                    self.next()
                name_raw = []
                while not self.at_end():
                    if self.peek() == "shape" and self.i == len(self.low) - 1:
                        self.next()
                        break
                    name_raw.append(self.raw[self.i])
                    self.next()
                if not name_raw:
                    self.i = mark
                    return None
                # "this is a blue screw" must stay a description, not a name
                low = [t.lower() for t in name_raw]
                if self._lexicon_head(low):
                    self.i = mark
                    return None
                return NameCommand(" ".join(name_raw))
            self.i = mark
        return None

    @staticmethod
    def _lexicon_head(tokens: list[str]) -> bool:
        toks = [t for t in tokens if t not in COLOR_WORDS]
        for phrase in KIND_PHRASES:
            if tuple(toks[: len(phrase)]) == phrase or (
                len(toks) >= len(phrase)
                and tuple(toks[: len(phrase) - 1]) + (toks[len(phrase) - 1].rstrip("s"),) == phrase
            ):
                return True
        return False

    def _try_remove_command(self) -> RemoveCommand | None:
        if not self.try_words("remove"):
            return None
        while self.peek() in ARTICLES:
            self.next()
        if self.peek() == "part":
            self.next()
        else:
            kind = self._try_kind()
            if kind is None and self.peek() not in ("at", "on", "in"):
                return None
        if self.peek() in ("at", "on", "in", "from"):
            self.next()
        loc: dict = {}
        self._parse_location_atoms(loc)
        if loc.get("x") is None or loc.get("y") is None:
            self.fail("remove needs a column and a row")
        return RemoveCommand(loc["x"], loc["y"], loc.get("z"))

    def _try_leading_adjunct(self) -> dict | None:
        mark = self.i
        if self.try_words("starting"):
            if self.peek() in ("at", "on", "in", "from"):
                self.next()
            loc: dict = {}
            self._parse_location_atoms(loc)
            if self.peek() == ",":
                self.next()
            if loc:
                return loc
        self.i = mark
        return None

    # -- clause level --

    def _consume_separator(self) -> bool:
        found = False
        if self.peek() == ",":
            self.next()
            found = True
        if self.peek() == "and":
            self.next()
            found = True
        return found

    def _parse_clause(self) -> _Clause:
        while self.peek() in SKIP_WORDS:
            self.next()
        if self.peek() in VERBS:
            self.next()
            while self.peek() in SKIP_WORDS:
                self.next()

        specs, recall_name, recall_color = self._parse_part_phrase()
        overrides: dict = {}
        if recall_color is not None:
            overrides["color"] = recall_color
        loc: dict = {}
        relation = None

        while not self.at_end():
            rel = self._try_relation()
            if rel is not None:
                if relation is not None:
                    self.fail("two relations in one clause")
                relation = rel
                continue
            if self._try_override(overrides):
                continue
            if self.peek() in ("at", "on", "in", "onto"):
                mark = self.i
                self.next()
                if self._parse_location_atoms(loc):
                    continue
                self.i = mark
            # ", twice as big" style trailing overrides stay in this clause
            save = self.i
            if self._consume_separator() and self._try_override(overrides):
                continue
            self.i = save
            break

        if recall_name is not None:
            if relation is not None:
                self.fail("a stored shape cannot take a dependent placement")
            target = PartialPlacementSpec()
            for f in ("x", "y", "z", "x2", "y2"):
                if loc.get(f) is not None:
                    target.set_field(f, loc[f], "utterance")
            if loc.get("relative"):
                target.relative = loc["relative"]
            return _Clause(command=RecallCommand(
                recall_name,
                target,
                color_override=overrides.get("color"),
                part_override=overrides.get("part"),
                size_override=overrides.get("size"),
            ))

        if overrides:
            self.fail("overrides only apply to stored shapes")
        lead = specs[0]
        if relation is not None:
            if loc:
                self.fail("both a relation and coordinates given")
            lead.relation = relation
        else:
            for f in ("x", "y", "z", "x2", "y2"):
                if loc.get(f) is not None:
                    lead.set_field(f, loc[f], "utterance")
            if loc.get("relative"):
                lead.relative = loc["relative"]
        return _Clause(specs=specs)

    def _parse_part_phrase(self):
        """Returns (specs, recall shape name or None, recall color override)."""
        if self.peek() in ("it", "that"):
            self.next()
            return [PartialPlacementSpec()], None, None

        while self.peek() in ARTICLES:
            self.next()

        expansion = self._try_expansion()
        if expansion is not None:
            return expansion, None, None

        color = None
        if self.peek() in COLOR_WORDS:
            color = COLOR_WORDS[self.next()]

        kind = self._try_kind()
        if kind is not None:
            spec = PartialPlacementSpec()
            spec.set_field("kind", kind, "utterance")
            if color:
                spec.set_field("color", color, "utterance")
            return [spec], None, None

        if self.peek() in ("one", "part", "piece"):
            self.next()
            spec = PartialPlacementSpec()
            if color:
                spec.set_field("color", color, "utterance")
            return [spec], None, None

        # Unknown head noun: a stored-shape name, possibly several words.
        name_raw = []
        while not self.at_end() and self.peek() not in (
            "at", "on", "in", "onto", ",", "and",
            "with", "using", "out", "made", "twice", "half", "double",
        ):
            name_raw.append(self.raw[self.i])
            self.next()
        if not name_raw:
            self.fail("expected a part or shape name")
        return [], " ".join(name_raw), color

    def _try_expansion(self) -> list[PartialPlacementSpec] | None:
        mark = self.i
        if self.peek() in ("horizontal", "vertical") and self.peek(1) in ("row", "column"):
            self.next()
        shape_word = self.peek()
        if shape_word not in ("row", "column", "tower"):
            self.i = mark
            return None
        self.next()
        if self.peek() == "made":
            self.next()
        if self.peek() != "of":
            self.i = mark
            return None
        self.next()
        count = _word_number(self.peek() or "")
        if count is None or count < 1:
            self.i = mark
            return None
        self.next()
        if self.peek() == "more":
            self.next()
        color = None
        if self.peek() in COLOR_WORDS:
            color = COLOR_WORDS[self.next()]
        kind = self._try_kind()
        if kind is None:
            self.i = mark
            return None
        relation_kind = {"row": "next-to", "column": "in-front", "tower": "on-top"}[shape_word]
        specs = []
        for i in range(count):
            spec = PartialPlacementSpec()
            spec.set_field("kind", kind, "utterance")
            if color:
                spec.set_field("color", color, "utterance")
            if i > 0:
                spec.relation = DependentRelation(relation_kind, AnchorRef(text="previous"))
            specs.append(spec)
        return specs

    def _try_kind(self) -> PartKind | None:
        for phrase, kind in sorted(KIND_PHRASES.items(), key=lambda kv: -len(kv[0])):
            n = len(phrase)
            window = self.low[self.i : self.i + n]
            if len(window) < n:
                continue
            depluraled = window[:-1] + [window[-1].rstrip("s") if window[-1] != "s" else window[-1]]
            if window == list(phrase) or depluraled == list(phrase):
                self.i += n
                return kind
        return None

    def _try_relation(self) -> DependentRelation | None:
        mark = self.i
        patterns = (
            (("next", "to"), "next-to"),
            (("beside",), "next-to"),
            (("on", "top", "of"), "on-top"),
            (("on", "top"), "on-top"),
            (("to", "the", "left", "of"), "left-of"),
            (("left", "of"), "left-of"),
            (("to", "the", "right", "of"), "right-of"),
            (("right", "of"), "right-of"),
            (("in", "front", "of"), "in-front"),
            (("behind",), "behind"),
        )
        for words, rel_kind in patterns:
            if self.try_words(*words):
                target = self._parse_anchor(optional=(rel_kind == "on-top" and words == ("on", "top")))
                if target is None:
                    target = AnchorRef(text="previous")
                return DependentRelation(rel_kind, target)
            self.i = mark
        return None

    def _parse_anchor(self, optional: bool = False) -> AnchorRef | None:
        mark = self.i
        if self.peek() in ("it", "that"):
            self.next()
            return AnchorRef(text="it")
        if self.try_words("the", "previous", "part") or self.try_words("the", "previous", "one") \
                or self.try_words("the", "last", "part") or self.try_words("the", "last", "one"):
            return AnchorRef(text="previous")
        if self.peek() in ARTICLES:
            self.next()
        color = None
        if self.peek() in COLOR_WORDS:
            color = COLOR_WORDS[self.next()]
        kind = self._try_kind()
        if kind is None and color is None:
            self.i = mark
            if optional:
                return None
            self.fail("expected an anchor part after the relation")
        if kind is None and self.peek() in ("one", "part"):
            self.next()
        text = " ".join(w for w in ((color.value if color else ""), (kind.value if kind else "one")) if w)
        return AnchorRef(kind=kind, color=color, text=f"the {text}")

    # -- locations --

    def _parse_location_atoms(self, loc: dict) -> bool:
        """Consumes one or more location atoms; returns True if any matched."""
        any_found = False
        while True:
            mark = self.i
            if any_found:
                sep = self.i
                self._consume_separator()
                if not self._parse_one_atom(loc):
                    self.i = sep
                    break
            else:
                if not self._parse_one_atom(loc):
                    self.i = mark
                    break
            any_found = True
        return any_found

    def _set_axis(self, loc: dict, axis: str, value: int, second: int | None = None):
        if loc.get(axis) is not None:
            self.fail(f"{axis} given twice")
        loc[axis] = value
        if second is not None:
            loc[axis + "2"] = second

    def _parse_one_atom(self, loc: dict) -> bool:
        mark = self.i
        if self.peek() == "the":
            self.next()

        # "the board" / "the grid": an explicit everywhere-null location
        if self.peek() in ("board", "grid"):
            self.next()
            return True

        label = self._try_relative_label()
        if label is not None:
            if loc.get("relative"):
                self.fail("two relative positions")
            loc["relative"] = label
            return True

        # "column 5" / "row 4" / "height 1"
        if self.peek() in ("column", "row", "height") and _word_number(self.peek(1) or "") is not None:
            noun = self.next()
            n = _word_number(self.next())
            axis = {"column": "x", "row": "y", "height": "z"}[noun]
            self._set_axis(loc, axis, n)
            return True

        # "5th column" / "5th and 6th columns" / "5th column, 4th row"
        n1 = _word_number(self.peek() or "")
        if n1 is not None:
            self.next()
            if self.peek() == "and":
                save = self.i
                self.next()
                if self.peek() == "the":
                    self.next()
                n2 = _word_number(self.peek() or "")
                if n2 is not None and self.peek(1) in ("columns", "rows"):
                    self.next()
                    noun = self.next()
                    axis = "x" if noun == "columns" else "y"
                    self._set_axis(loc, axis, n1, n2)
                    return True
                self.i = save
            if self.peek() in ("column", "row", "columns", "rows"):
                noun = self.next().rstrip("s")
                self._set_axis(loc, "x" if noun == "column" else "y", n1)
                return True
            if self.peek() == "height":
                self.next()
                self._set_axis(loc, "z", n1)
                return True
            self.i = mark
            return False

        self.i = mark
        return False

    def _try_relative_label(self) -> str | None:
        mark = self.i
        first = self.peek()
        if first in ("top", "bottom", "left", "right"):
            second = self.peek(1)
            if second in ("left", "right", "middle", "center") and first in ("top", "bottom"):
                self.next(); self.next()
                label = f"{first} {'middle' if second == 'center' else second}"
            elif second == "middle" or second == "center":
                self.next(); self.next()
                label = f"{first} middle"
            else:
                self.i = mark
                return None
        elif first in ("middle", "center"):
            self.next()
            label = "middle"
        else:
            return None
        if self.peek() == "corner":
            self.next()
        save = self.i
        if self.try_words("of", "the"):
            if self.peek() in ("board", "grid"):
                self.next()
            else:
                self.i = save
        return label

    # -- recall overrides --

    def _try_override(self, overrides: dict) -> bool:
        mark = self.i
        if self.peek() == "in" and self.peek(1) in COLOR_WORDS:
            self.next()
            overrides["color"] = COLOR_WORDS[self.next()]
            return True
        if self.peek() in ("with", "using") or (self.peek() == "out" and self.peek(1) == "of") \
                or (self.peek() == "made" and self.peek(1) in ("of", "from")):
            save = self.i
            if self.peek() in ("with", "using"):
                self.next()
            else:
                self.next(); self.next()
            kind = self._try_kind()
            if kind is not None:
                overrides["part"] = kind
                return True
            self.i = save
        size = self._try_size_phrase()
        if size is not None:
            overrides["size"] = size
            return True
        self.i = mark
        return False

    def _try_size_phrase(self) -> float | None:
        mark = self.i
        if self.try_words("twice", "as", "big") or self.try_words("twice", "the", "size") \
                or self.try_words("double", "the", "size") or self.try_words("at", "double", "size"):
            return 2.0
        if self.try_words("half", "as", "big") or self.try_words("half", "the", "size"):
            return 0.5
        n = _word_number(self.peek() or "")
        if n is not None and self.peek(1) == "times":
            self.next(); self.next()
            if self.try_words("as", "big") or self.try_words("the", "size") or self.try_words("bigger"):
                return float(n)
            self.i = mark
        return None


def parse_instruction(text: str) -> list[Parsed]:
    """Parses an utterance into placement specs and memory commands, in
    textual order.  Raises Unparseable when no grammar rule matches."""
    if not text or not text.strip():
        raise Unparseable(text, "empty input")
    out: list[Parsed] = []
    for sentence in _sentences(text):
        parser = _SentenceParser(sentence, text)
        out.extend(parser.parse())
    if not out:
        raise Unparseable(text, "no content")
    return out


# --- generation -------------------------------------------------------------


def _require(spec: PartialPlacementSpec, *fields: str) -> None:
    for f in fields:
        if getattr(spec, f) is None:
            raise MissingField(f)


def _part_words(kind: PartKind) -> str:
    return kind.value.replace("-", " ")


def _absolute_phrase(spec: PartialPlacementSpec, with_height: bool = False) -> str:
    if spec.kind is PartKind.HORIZONTAL_BRIDGE:
        _require(spec, "x", "x2", "y")
        loc = f"the {ordinal(spec.x)} and {ordinal(spec.x2)} columns, {ordinal(spec.y)} row"
    elif spec.kind is PartKind.VERTICAL_BRIDGE:
        _require(spec, "y", "y2", "x")
        loc = f"the {ordinal(spec.y)} and {ordinal(spec.y2)} rows, {ordinal(spec.x)} column"
    else:
        _require(spec, "x", "y")
        loc = f"the {ordinal(spec.x)} column, {ordinal(spec.y)} row"
    if with_height:
        _require(spec, "z")
        loc += f", height {spec.z}"
    return loc


_REL_PHRASES = {
    "next-to": "next to",
    "on-top": "on top of",
    "left-of": "to the left of",
    "right-of": "to the right of",
    "in-front": "in front of",
    "behind": "behind",
}


def _anchor_phrase(ref: AnchorRef) -> str:
    if ref.kind is None and ref.color is None:
        return "it"
    words = " ".join(w for w in (ref.color.value if ref.color else "", _part_words(ref.kind) if ref.kind else "one") if w)
    return f"the {words}"


def generate_instruction(spec: PartialPlacementSpec, template_id: str) -> str:
    """Renders one sentence from a template; the inverse of parse_instruction
    restricted to the template's fields."""
    t = template_id
    if t == "absolute":
        _require(spec, "kind", "color")
        return f"Place a {spec.color.value} {_part_words(spec.kind)} at {_absolute_phrase(spec)}."
    if t == "absolute_xyz":
        _require(spec, "kind", "color")
        return f"Place a {spec.color.value} {_part_words(spec.kind)} at {_absolute_phrase(spec, with_height=True)}."
    if t == "relative":
        _require(spec, "kind", "color", "relative")
        return f"Place a {spec.color.value} {_part_words(spec.kind)} at the {spec.relative} of the board."
    if t == "dependent":
        _require(spec, "kind", "color", "relation")
        rel = spec.relation
        if rel.kind == "on-top" and rel.target.kind is None and rel.target.color is None:
            return f"Place a {spec.color.value} {_part_words(spec.kind)} on top."
        return (
            f"Place a {spec.color.value} {_part_words(spec.kind)} "
            f"{_REL_PHRASES[rel.kind]} {_anchor_phrase(rel.target)}."
        )
    if t == "absolute_no_color":
        _require(spec, "kind")
        return f"Place a {_part_words(spec.kind)} at {_absolute_phrase(spec)}."
    if t == "absolute_no_kind":
        _require(spec, "color", "x", "y")
        return f"Place a {spec.color.value} one at the {ordinal(spec.x)} column, {ordinal(spec.y)} row."
    if t == "absolute_no_x":
        _require(spec, "kind", "color", "y")
        return f"Place a {spec.color.value} {_part_words(spec.kind)} at the {ordinal(spec.y)} row."
    if t == "absolute_no_y":
        _require(spec, "kind", "color", "x")
        return f"Place a {spec.color.value} {_part_words(spec.kind)} at the {ordinal(spec.x)} column."
    if t == "absolute_no_xy":
        _require(spec, "kind", "color")
        return f"Place a {spec.color.value} {_part_words(spec.kind)} on the board."
    raise MissingField(f"template:{template_id}")


TEMPLATE_FIELDS = {
    "absolute": ("kind", "color", "x", "y", "x2", "y2"),
    "absolute_xyz": ("kind", "color", "x", "y", "z", "x2", "y2"),
    "relative": ("kind", "color", "relative"),
    "dependent": ("kind", "color", "relation"),
    "absolute_no_color": ("kind", "x", "y", "x2", "y2"),
    "absolute_no_kind": ("color", "x", "y"),
    "absolute_no_x": ("kind", "color", "y"),
    "absolute_no_y": ("kind", "color", "x"),
    "absolute_no_xy": ("kind", "color"),
}


# --- clarification-answer fragment parsers ----------------------------------


def parse_kind_answer(text: str) -> PartKind | None:
    low, _ = _tokenize(text)
    toks = [t for t in low if t not in ARTICLES and t not in SKIP_WORDS and t != ","]
    for phrase, kind in sorted(KIND_PHRASES.items(), key=lambda kv: -len(kv[0])):
        if len(toks) == len(phrase):
            depl = toks[:-1] + [toks[-1].rstrip("s")]
            if toks == list(phrase) or depl == list(phrase):
                return kind
    return None


def parse_color_answer(text: str) -> Color | None:
    low, _ = _tokenize(text)
    toks = [t for t in low if t not in ARTICLES and t not in ("in", "make", "it", ",")]
    if len(toks) == 1 and toks[0] in COLOR_WORDS:
        return COLOR_WORDS[toks[0]]
    return None


def parse_coordinate_answer(text: str, axis: str) -> int | None:
    """Parses a column/row/height answer.  `axis` is "x", "y" or "z"; an
    explicit axis word in the answer must agree with the asked axis, and
    the value must fit on the board."""
    low, _ = _tokenize(text)
    toks = [t for t in low if t not in ARTICLES and t not in ("at", ",")]
    axis_words = {"x": "column", "y": "row", "z": "height"}
    value: int | None = None
    seen_axis: str | None = None
    for tok in toks:
        n = _word_number(tok)
        if n is not None:
            if value is not None:
                return None
            value = n
            continue
        word = tok.rstrip("s")
        if word in ("column", "row", "height"):
            seen_axis = word
            continue
        return None
    if value is None or not 1 <= value <= GRID_MAX:
        return None
    if seen_axis is not None and seen_axis != axis_words[axis]:
        return None
    return value


# --- gold-spec serialization -------------------------------------------------


def spec_to_dict(spec: PartialPlacementSpec) -> dict:
    rel = None
    if spec.relation is not None:
        rel = {
            "kind": spec.relation.kind,
            "target": {
                "kind": spec.relation.target.kind.value if spec.relation.target.kind else None,
                "color": spec.relation.target.color.value if spec.relation.target.color else None,
            },
        }
    return {
        "kind": spec.kind.value if spec.kind else None,
        "color": spec.color.value if spec.color else None,
        "x": spec.x,
        "y": spec.y,
        "z": spec.z,
        "x2": spec.x2,
        "y2": spec.y2,
        "relation": rel,
        "relative": spec.relative,
    }


def dict_to_spec(d: dict) -> PartialPlacementSpec:
    spec = PartialPlacementSpec()
    for f in ("x", "y", "z", "x2", "y2"):
        if d.get(f) is not None:
            spec.set_field(f, d[f], "utterance")
    if d.get("kind"):
        spec.set_field("kind", PartKind(d["kind"]), "utterance")
    if d.get("color"):
        spec.set_field("color", Color(d["color"]), "utterance")
    if d.get("relation"):
        t = d["relation"]["target"]
        spec.relation = DependentRelation(
            d["relation"]["kind"],
            AnchorRef(
                kind=PartKind(t["kind"]) if t.get("kind") else None,
                color=Color(t["color"]) if t.get("color") else None,
            ),
        )
    if d.get("relative"):
        spec.relative = d["relative"]
    return spec
