"""Parameterised layers built on the functional kernels."""

from collections import OrderedDict

import numpy as np

from . import functional as F
from .tensor import Tensor


def Parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Minimal container: parameters, buffers and children discovered by attribute."""

    def __init__(self):
        self.training = True
        self._params = OrderedDict()
        self._buffers = OrderedDict()
        self._children = OrderedDict()

    def __setattr__(self, key, value):
        if not key.startswith("_") and hasattr(self, "_params"):
            if isinstance(value, Module):
                self._children[key] = value
            elif isinstance(value, Tensor) and value.requires_grad:
                self._params[key] = value
        object.__setattr__(self, key, value)

    def register_buffer(self, name, array):
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def add_module(self, name, module):
        self._children[name] = module
        object.__setattr__(self, name, module)

    def named_children(self):
        return self._children.items()

    def named_parameters(self, prefix=""):
        for k, p in self._params.items():
            yield prefix + k, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for k in self._buffers:
            yield prefix + k, getattr(self, k)
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def state_dict(self):
        """Parameters and buffers by dotted name (arrays are live references)."""
        state = OrderedDict((k, p.data) for k, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        for k, v in state.items():
            if k in params:
                params[k].data[...] = v
            elif k in buffers:
                buffers[k][...] = v
            else:
                raise KeyError(f"unexpected key {k!r}")

    def train(self, mode=True):
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def to(self, dtype):
        """Cast parameters and buffers in place."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for name in list(self._buffers):
            arr = getattr(self, name).astype(dtype)
            self._buffers[name] = arr
            object.__setattr__(self, name, arr)
        for child in self._children.values():
            child.to(dtype)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def macs(self, in_shape):
        """Conv multiply-accumulates for input ``(c, h, w)``; 0 for non-conv layers."""
        return 0

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(rng, shape, dtype=np.float32):
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, spec, rng):
        super().__init__()
        self.spec = spec
        self.weight = Parameter(kaiming_uniform(rng, spec.weight_shape))
        if spec.has_bias:
            self.bias = Parameter(np.zeros(spec.out_channels, dtype=np.float32))
        else:
            self.bias = None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.spec)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        oh, ow = self.spec.output_hw(h, w)
        return self.spec.out_channels, oh, ow

    def macs(self, in_shape):
        return self.spec.macs(in_shape[1], in_shape[2])


def conv(rng, cin, cout, k=1, stride=1, dilation=1, groups=1, bias=False, padding=None):
    """Conv2d with "same" padding unless given."""
    if padding is None:
        padding = F.same_padding(k, dilation)
    spec = F.ConvSpec(cin, cout, kernel=k, stride=stride, padding=padding,
                      dilation=dilation, groups=groups, has_bias=bias)
    return Conv2d(spec, rng)


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.weight = Parameter(np.ones(channels, dtype=np.float32))
        self.bias = Parameter(np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(channels, dtype=np.float32))
        self.register_buffer("running_var", np.ones(channels, dtype=np.float32))

    def forward(self, x):
        return F.batch_norm(x, self.weight, self.bias, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class PReLU(Module):
    def __init__(self, channels, init=0.25):
        super().__init__()
        self.weight = Parameter(np.full(channels, init, dtype=np.float32))

    def forward(self, x):
        return F.prelu(x, self.weight)
