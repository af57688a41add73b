"""Architecture tables: a small text grammar describing SINet encoders.

Grammar (one row per line, ``#`` starts a comment)::

    @name portrait             # directives set table-wide options
    @input 224x224             # reference input size the shapes refer to
    @num_class 2               # default class count; ``K`` in shapes means this
    @decoder_taps 5            # decoder fusions, coarsest first; tap r = input of row r
    @factorized false          # asymmetric depthwise convs inside S2-blocks
    index, op, input CxHxW, output CxHxW, block_a, block_b, concat[, options]

``op`` is one of CBR, DSConvSE, S2Module, PointwiseConv.  Blocks are written
``k3p1`` (kernel 3, pool 1) or ``-``.  ``concat`` lists source rows separated
by spaces (``2 4``) or ``-`` for "previous row".  ``options`` holds
``key=value`` pairs separated by ``;`` (currently ``groups`` and ``residual``).
"""

import enum
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

from .errors import BuildError, ConfigError


class Op(enum.Enum):
    CBR = "CBR"
    DSCONV_SE = "DSConvSE"
    S2_MODULE = "S2Module"
    POINTWISE = "PointwiseConv"


_OP_ALIASES = {
    "cbr": Op.CBR,
    "dsconvse": Op.DSCONV_SE,
    "dsconv+se": Op.DSCONV_SE,
    "s2module": Op.S2_MODULE,
    "sbmodule": Op.S2_MODULE,
    "pointwiseconv": Op.POINTWISE,
    "1x1conv": Op.POINTWISE,
}

CLASS_TOKEN = "K"


@dataclass(frozen=True)
class ArchRow:
    index: int
    op: Op
    in_shape: tuple  # (c, h, w); c may be CLASS_TOKEN
    out_shape: tuple
    block_a: Optional[tuple] = None  # (k, p)
    block_b: Optional[tuple] = None
    concat_sources: Optional[tuple] = None
    groups: Optional[int] = None
    residual: Optional[bool] = None

    def resolved(self, num_class):
        """Copy with the class token replaced by ``num_class``."""
        fix = lambda s: tuple(num_class if v == CLASS_TOKEN else v for v in s)
        return replace(self, in_shape=fix(self.in_shape), out_shape=fix(self.out_shape))


@dataclass
class ArchTable:
    name: str
    rows: list
    input_hw: tuple
    num_class: int = 2
    decoder_taps: tuple = ()
    factorized: bool = False
    extra: dict = field(default_factory=dict)

    def row(self, index):
        for r in self.rows:
            if r.index == index:
                return r
        raise KeyError(index)

    def with_blocks(self, block):
        """Single-receptive-field variant: every S2-block uses ``block = (k, p)``."""
        rows = [replace(r, block_a=block, block_b=block) if r.op is Op.S2_MODULE else r
                for r in self.rows]
        return replace(self, rows=rows, name=f"{self.name}-k{block[0]}p{block[1]}")

    def validate(self, num_class=None):
        """Static checks that need no layers: ordering and concat channel sums."""
        nc = num_class or self.num_class
        rows = [r.resolved(nc) for r in self.rows]
        seen = {}
        for pos, r in enumerate(rows):
            if r.index in seen:
                raise BuildError(f"row {r.index} declared twice", row=r.index)
            if r.concat_sources:
                missing = [s for s in r.concat_sources if s not in seen]
                if missing:
                    raise BuildError(f"row {r.index} concatenates unknown rows {missing}", row=r.index)
                total = sum(seen[s].out_shape[0] for s in r.concat_sources)
                if total != r.in_shape[0]:
                    raise BuildError(
                        f"row {r.index}: concat channels {total} != declared input {r.in_shape[0]}",
                        row=r.index,
                    )
            elif pos > 0 and rows[pos - 1].out_shape != r.in_shape:
                raise BuildError(
                    f"row {r.index}: input {r.in_shape} != previous output {rows[pos - 1].out_shape}",
                    row=r.index,
                )
            seen[r.index] = r
        for tap in self.decoder_taps:
            if tap not in seen:
                raise BuildError(f"decoder tap row {tap} does not exist", row=tap)
        return rows


_SHAPE_RE = re.compile(r"^\s*(\w+|#class)\s*x\s*(\d+)\s*x\s*(\d+)\s*$", re.IGNORECASE)
_COMMENT_RE = re.compile(r"(^|\s)#(?!class).*$", re.IGNORECASE)
_BLOCK_RE = re.compile(r"^k(\d+)p(\d+)$", re.IGNORECASE)


def _parse_shape(text, lineno):
    m = _SHAPE_RE.match(text.replace("×", "x"))
    if not m:
        raise ConfigError(f"line {lineno}: bad shape {text!r}")
    c = m.group(1)
    c = CLASS_TOKEN if c.lower() in ("k", "#class", "class") else int(c)
    return c, int(m.group(2)), int(m.group(3))


def _parse_block(text, lineno):
    text = text.strip()
    if text in ("-", ""):
        return None
    m = _BLOCK_RE.match(text)
    if not m:
        raise ConfigError(f"line {lineno}: bad block spec {text!r}, expected e.g. k3p1")
    return int(m.group(1)), int(m.group(2))


def _parse_bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def parse_table(text, name="custom"):
    directives = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _COMMENT_RE.sub("", raw).strip()
        if not line:
            continue
        if line.startswith("@"):
            key, _, value = line[1:].partition(" ")
            directives[key.strip()] = value.strip()
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) not in (7, 8):
            raise ConfigError(f"line {lineno}: expected 7 or 8 comma-separated fields, got {len(fields)}")
        op = _OP_ALIASES.get(fields[1].lower().replace(" ", ""))
        if op is None:
            raise ConfigError(f"line {lineno}: unknown op {fields[1]!r}")
        concat = None if fields[6] in ("-", "") else tuple(int(v) for v in fields[6].split())
        opts = {}
        if len(fields) == 8 and fields[7] not in ("-", ""):
            for kv in fields[7].split(";"):
                k, _, v = kv.partition("=")
                opts[k.strip()] = v.strip()
        rows.append(ArchRow(
            index=int(fields[0]),
            op=op,
            in_shape=_parse_shape(fields[2], lineno),
            out_shape=_parse_shape(fields[3], lineno),
            block_a=_parse_block(fields[4], lineno),
            block_b=_parse_block(fields[5], lineno),
            concat_sources=concat,
            groups=int(opts["groups"]) if "groups" in opts else None,
            residual=_parse_bool(opts["residual"]) if "residual" in opts else None,
        ))
        if op is Op.S2_MODULE and (rows[-1].block_a is None or rows[-1].block_b is None):
            raise ConfigError(f"line {lineno}: S2Module rows need two block specs")
    ih, _, iw = directives.get("input", "").partition("x")
    if not ih:
        if not rows:
            raise ConfigError("table has no rows and no @input directive")
        ih, iw = rows[0].in_shape[1], rows[0].in_shape[2]
    taps = tuple(int(t) for t in directives.get("decoder_taps", "").replace(",", " ").split())
    known = {"name", "input", "num_class", "decoder_taps", "factorized"}
    return ArchTable(
        name=directives.get("name", name),
        rows=rows,
        input_hw=(int(ih), int(iw)),
        num_class=int(directives.get("num_class", 2)),
        decoder_taps=taps,
        factorized=_parse_bool(directives.get("factorized", "false")),
        extra={k: v for k, v in directives.items() if k not in known},
    )


def load_table(path):
    with open(path) as fh:
        return parse_table(fh.read(), name=str(path))


PRESETS = ("portrait", "cityscapes", "tiny")


def preset_table(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("sinet.presets").joinpath(f"{name}.arch").read_text()
    return parse_table(text, name=name)


def _fmt_shape(s):
    return "x".join(str(v) for v in s)


def format_table(table):
    """Serialise a table back to the text grammar (``parse_table`` inverts it)."""
    lines = [
        f"@name {table.name}",
        f"@input {table.input_hw[0]}x{table.input_hw[1]}",
        f"@num_class {table.num_class}",
        f"@decoder_taps {' '.join(str(t) for t in table.decoder_taps)}",
        f"@factorized {'true' if table.factorized else 'false'}",
    ]
    lines += [f"@{k} {v}" for k, v in table.extra.items()]
    for r in table.rows:
        blk = lambda b: f"k{b[0]}p{b[1]}" if b else "-"
        concat = " ".join(str(s) for s in r.concat_sources) if r.concat_sources else "-"
        fields = [str(r.index), r.op.value, _fmt_shape(r.in_shape), _fmt_shape(r.out_shape),
                  blk(r.block_a), blk(r.block_b), concat]
        opts = []
        if r.groups is not None:
            opts.append(f"groups={r.groups}")
        if r.residual is not None:
            opts.append(f"residual={'true' if r.residual else 'false'}")
        if opts:
            fields.append(";".join(opts))
        lines.append(", ".join(fields))
    return "\n".join(lines) + "\n"
