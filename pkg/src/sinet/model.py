"""SINet assembly from architecture tables, forward pass and cost accounting."""

from dataclasses import dataclass, field

import numpy as np

from . import functional as F
from .arch import ArchTable, Op, preset_table
from .blocks import CBR, Decoder, DecoderKind, DSConvSE, S2Module, S2ModuleConfig
from .errors import BuildError, ConfigError, DimensionError
from .nn import Module, conv


class SINet(Module):
    """Encoder rows from an :class:`ArchTable`, information-blocking decoder stages,
    a 3x3 classifier and a final bilinear upsample to the input resolution.

    The classifier runs right after the first (coarsest) decoder stage; any
    further stages refine its logits at higher resolution.
    """

    def __init__(self, table, num_class=None, decoder=DecoderKind.IB, seed=0):
        super().__init__()
        self.table = table
        self.num_class = int(num_class or table.num_class)
        if self.num_class < 2:
            raise ConfigError("num_class must be at least 2")
        self.decoder_kind = DecoderKind.parse(decoder)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.rows = table.validate(self.num_class)
        self.layers = []
        for r in self.rows:
            m = self._make_row(r, rng, table.factorized)
            self.add_module(f"row{r.index}", m)
            self.layers.append(m)
        self.taps = tuple(table.decoder_taps)
        self.decoders = []
        for i, tap in enumerate(self.taps):
            d = Decoder(self.table_row(tap).in_shape[0], self.num_class, self.decoder_kind, rng)
            self.add_module(f"decoder{i + 1}", d)
            self.decoders.append(d)
        self.classifier = conv(rng, self.num_class, self.num_class, k=3, bias=True) if self.rows else None
        self.downsample = 2 ** sum(1 for r in self.rows if r.op in (Op.CBR, Op.DSCONV_SE))
        if self.rows:
            self.audit()

    @staticmethod
    def _make_row(r, rng, factorized):
        cin, cout = r.in_shape[0], r.out_shape[0]
        if r.op is Op.CBR:
            return CBR(cin, cout, rng)
        if r.op is Op.DSCONV_SE:
            return DSConvSE(cin, cout, rng)
        if r.op is Op.S2_MODULE:
            cfg = S2ModuleConfig(cin, cout, r.block_a, r.block_b, groups=r.groups,
                                 residual=r.residual, factorized=factorized)
            return S2Module(cfg, rng)
        return conv(rng, cin, cout, k=1, bias=True)

    def table_row(self, index):
        for r in self.rows:
            if r.index == index:
                return r
        raise KeyError(index)

    # -- shape bookkeeping ---------------------------------------------------
    def _row_input(self, r, prev, outputs, concat_fn):
        if r.concat_sources:
            return concat_fn([outputs[s] for s in r.concat_sources])
        return prev

    def row_shapes(self, input_hw, in_channels=None):
        """(row, computed input shape, computed output shape) at ``input_hw``."""
        c0 = in_channels or (self.rows[0].in_shape[0] if self.rows else 3)
        prev = (c0,) + tuple(input_hw)
        outputs = {}

        def cat(shapes):
            hw = {s[1:] for s in shapes}
            if len(hw) != 1:
                raise DimensionError(f"concat of mismatched spatial sizes {shapes}", axis="spatial")
            return (sum(s[0] for s in shapes),) + shapes[0][1:]

        result = []
        for r, m in zip(self.rows, self.layers):
            try:
                inp = self._row_input(r, prev, outputs, cat)
                out = m.out_shape(inp)
            except (DimensionError, ConfigError) as exc:
                raise BuildError(f"row {r.index} ({r.op.value}): {exc}", row=r.index) from exc
            result.append((r, inp, out))
            outputs[r.index] = prev = out
        return result

    def audit(self):
        """Check every declared input/output shape at the table's reference size."""
        for r, inp, out in self.row_shapes(self.table.input_hw):
            if tuple(inp) != tuple(r.in_shape):
                raise BuildError(f"row {r.index}: computed input {inp} != declared {r.in_shape}", row=r.index)
            if tuple(out) != tuple(r.out_shape):
                raise BuildError(f"row {r.index}: computed output {out} != declared {r.out_shape}", row=r.index)
        last = self.rows[-1].out_shape[0]
        if last != self.num_class:
            raise BuildError(f"encoder must end with {self.num_class} channels, got {last}",
                             row=self.rows[-1].index)

    # -- parameter groups ----------------------------------------------------
    def encoder_parameters(self):
        return [p for name, p in self.named_parameters() if name.startswith("row")]

    def decoder_parameters(self):
        return [p for name, p in self.named_parameters() if not name.startswith("row")]

    # -- forward -------------------------------------------------------------
    def check_input(self, x):
        if x.ndim != 4:
            raise DimensionError(f"image must be NCHW, got {x.shape}", axis="ndim")
        h, w = x.shape[2:]
        if h % self.downsample or w % self.downsample:
            raise ConfigError(f"input {h}x{w} must be divisible by {self.downsample}")

    def encode(self, x):
        """Encoder logits plus the tapped row inputs the decoder needs."""
        self.check_input(x)
        prev, outputs, tapped = x, {}, {}
        for r, m in zip(self.rows, self.layers):
            inp = self._row_input(r, prev, outputs, F.concat)
            if r.index in self.taps:
                tapped[r.index] = inp
            prev = m(inp)
            outputs[r.index] = prev
        return prev, tapped

    def forward(self, x):
        h, w = x.shape[2:]
        y, tapped = self.encode(x)
        if not self.decoders:
            y = self.classifier(y)
        for i, (tap, dec) in enumerate(zip(self.taps, self.decoders)):
            y = dec(y, tapped[tap])
            if i == 0:
                y = self.classifier(y)
        return F.bilinear_upsample(y, h, w)

    def aux_forward(self, x):
        """Encoder-only logits upsampled to the input size (first training stage)."""
        h, w = x.shape[2:]
        y, _ = self.encode(x)
        return F.bilinear_upsample(y, h, w)

    def predict(self, x):
        from .tensor import no_grad
        with no_grad():
            logits = self.forward(x)
        return logits.data.argmax(axis=1)


def build_sinet(preset="portrait", num_class=None, decoder=DecoderKind.IB, seed=0, table=None):
    """Build a SINet from a named preset or an explicit :class:`ArchTable`."""
    if table is None:
        table = preset_table(preset)
    return SINet(table, num_class=num_class, decoder=decoder, seed=seed)


# ---------------------------------------------------------------------------
# accounting
# ---------------------------------------------------------------------------

CONVENTIONS = {"mac": 1, "2mac": 2}


@dataclass
class LayerStat:
    name: str
    params: int
    macs: int = 0


@dataclass
class ModelSummary:
    layers: list = field(default_factory=list)
    input_hw: tuple = None
    flop_convention: str = "mac"

    @property
    def total_params(self):
        return sum(l.params for l in self.layers)

    @property
    def total_macs(self):
        return sum(l.macs for l in self.layers)

    def flops(self, convention=None):
        return self.total_macs * CONVENTIONS[convention or self.flop_convention]

    @property
    def total_flops(self):
        return self.flops()

    def records(self):
        scale = CONVENTIONS[self.flop_convention]
        rows = [{"layer": l.name, "params": l.params, "macs": l.macs, "flops": l.macs * scale}
                for l in self.layers]
        rows.append({"layer": "TOTAL", "params": self.total_params, "macs": self.total_macs,
                     "flops": self.total_flops})
        return rows


def _nparams(module):
    return int(sum(p.data.size for p in module.parameters()))


def _named_units(model):
    for r, m in zip(model.rows, model.layers):
        yield f"row{r.index}:{r.op.value}", m
    for tap, d in zip(model.taps, model.decoders):
        yield f"decoder@{tap}:{d.kind.value}", d
    if model.classifier is not None:
        yield "classifier", model.classifier


def count_params(model):
    """Learnable parameters per layer (BN running statistics excluded)."""
    return ModelSummary([LayerStat(name, _nparams(m)) for name, m in _named_units(model)])


def count_flops(model, input_hw=None, convention="mac"):
    """Conv multiply-accumulates per layer at ``input_hw``.

    Only convolutions (including SE fully-connected layers) are counted; BN,
    activations, pooling and resampling are free.  ``convention="2mac"``
    doubles every MAC.
    """
    if convention not in CONVENTIONS:
        raise ConfigError(f"unknown FLOP convention {convention!r}")
    input_hw = tuple(input_hw or model.table.input_hw)
    summary = ModelSummary(input_hw=input_hw, flop_convention=convention)
    if not model.rows:
        return summary
    shapes = model.row_shapes(input_hw)
    row_in = {r.index: inp for r, inp, _ in shapes}
    for (r, inp, _), m in zip(shapes, model.layers):
        summary.layers.append(LayerStat(f"row{r.index}:{r.op.value}", _nparams(m), m.macs(inp)))
    cur = shapes[-1][2]
    for i, (tap, d) in enumerate(zip(model.taps, model.decoders)):
        high = row_in[tap]
        summary.layers.append(LayerStat(f"decoder@{tap}:{d.kind.value}", _nparams(d), d.macs(high)))
        cur = (model.num_class,) + high[1:]
        if i == 0:
            summary.layers.append(LayerStat("classifier", _nparams(model.classifier),
                                            model.classifier.macs(cur)))
    if not model.decoders:
        summary.layers.append(LayerStat("classifier", _nparams(model.classifier),
                                        model.classifier.macs(cur)))
    return summary
