"""Self-contained reader, writer, and numpy evaluator for ONNX model files.

Covers the ModelProto subset and operator set that token-classification
graphs exported from mainstream training frameworks actually use. The wire
format is standard protobuf, parsed and emitted directly so no ONNX runtime
or protobuf toolchain is required at inference time. Unknown proto fields
are skipped; unknown operators raise UnsupportedOperatorError.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np
from scipy.special import erf as _erf, expit as _expit


class GraphFormatError(ValueError):
    """The file is not a readable ONNX model."""


class UnsupportedOperatorError(GraphFormatError):
    """The graph uses an operator this evaluator does not implement."""


# TensorProto.DataType values
_DTYPES = {
    1: np.float32,
    2: np.uint8,
    3: np.int8,
    4: np.uint16,
    5: np.int16,
    6: np.int32,
    7: np.int64,
    9: np.bool_,
    10: np.float16,
    11: np.float64,
    12: np.uint32,
    13: np.uint64,
}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


# ---------------------------------------------------------------------------
# protobuf wire primitives
# ---------------------------------------------------------------------------

def _read_varint(buf: bytes, i: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if i >= len(buf):
            raise GraphFormatError("truncated varint")
        byte = buf[i]
        i += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, i
        shift += 7
        if shift > 70:
            raise GraphFormatError("varint too long")


def _signed64(v: int) -> int:
    return v - (1 << 64) if v & (1 << 63) else v


def _iter_fields(buf: bytes):
    """Yield (field_number, wire_type, value) triples from a message buffer."""
    i = 0
    n = len(buf)
    while i < n:
        key, i = _read_varint(buf, i)
        fn, wt = key >> 3, key & 7
        if wt == 0:
            v, i = _read_varint(buf, i)
            yield fn, wt, v
        elif wt == 2:
            ln, i = _read_varint(buf, i)
            if i + ln > n:
                raise GraphFormatError("truncated length-delimited field")
            yield fn, wt, buf[i : i + ln]
            i += ln
        elif wt == 5:
            yield fn, wt, buf[i : i + 4]
            i += 4
        elif wt == 1:
            yield fn, wt, buf[i : i + 8]
            i += 8
        else:
            raise GraphFormatError(f"unsupported protobuf wire type {wt}")


def _packed_varints(v, wt) -> list[int]:
    """A repeated int field arrives packed (wt=2) or one element at a time."""
    if wt == 0:
        return [_signed64(v)]
    out = []
    i = 0
    while i < len(v):
        x, i = _read_varint(v, i)
        out.append(_signed64(x))
    return out


def _packed_floats(v, wt) -> list[float]:
    if wt == 5:
        return [struct.unpack("<f", v)[0]]
    return list(struct.unpack(f"<{len(v) // 4}f", v))


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    data_type = 1
    name = ""
    raw = None
    floats: list[float] = []
    ints: list[int] = []
    int32s: list[int] = []
    doubles: list[float] = []
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            dims.extend(_packed_varints(v, wt))
        elif fn == 2:
            data_type = v
        elif fn == 4:
            floats.extend(_packed_floats(v, wt))
        elif fn == 5:
            int32s.extend(_packed_varints(v, wt))
        elif fn == 7:
            ints.extend(_packed_varints(v, wt))
        elif fn == 8:
            name = v.decode("utf-8")
        elif fn == 9:
            raw = v
        elif fn == 10:
            if wt == 1:
                doubles.append(struct.unpack("<d", v)[0])
            else:
                doubles.extend(struct.unpack(f"<{len(v) // 8}d", v))
        elif fn == 13:
            raise GraphFormatError("externally stored tensor data is not supported")
    if data_type not in _DTYPES:
        raise GraphFormatError(f"unsupported tensor data type {data_type}")
    dtype = np.dtype(_DTYPES[data_type])
    if raw is not None:
        arr = np.frombuffer(raw, dtype=dtype)
    elif floats:
        arr = np.asarray(floats, dtype=dtype)
    elif ints:
        arr = np.asarray(ints, dtype=dtype)
    elif int32s:
        arr = np.asarray(int32s, dtype=dtype)
    elif doubles:
        arr = np.asarray(doubles, dtype=dtype)
    else:
        arr = np.zeros(0, dtype=dtype)
    return name, arr.reshape(dims).copy()


def _parse_attribute(buf: bytes) -> tuple[str, Any]:
    name = ""
    value: Any = None
    ints: list[int] = []
    floats: list[float] = []
    strings: list[bytes] = []
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            name = v.decode("utf-8")
        elif fn == 2:
            value = struct.unpack("<f", v)[0]
        elif fn == 3:
            value = _signed64(v)
        elif fn == 4:
            value = v.decode("utf-8", "replace")
        elif fn == 5:
            value = _parse_tensor(v)[1]
        elif fn == 6:
            raise GraphFormatError("subgraph attributes (control flow) are not supported")
        elif fn == 7:
            floats.extend(_packed_floats(v, wt))
        elif fn == 8:
            ints.extend(_packed_varints(v, wt))
        elif fn == 9:
            strings.append(v)
    if ints:
        value = ints
    elif floats:
        value = floats
    elif strings:
        value = [s.decode("utf-8", "replace") for s in strings]
    return name, value


@dataclass
class GraphNode:
    op_type: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict[str, Any]
    name: str = ""


def _parse_node(buf: bytes) -> GraphNode:
    node = GraphNode(op_type="", inputs=[], outputs=[], attrs={})
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            node.inputs.append(v.decode("utf-8"))
        elif fn == 2:
            node.outputs.append(v.decode("utf-8"))
        elif fn == 3:
            node.name = v.decode("utf-8")
        elif fn == 4:
            node.op_type = v.decode("utf-8")
        elif fn == 5:
            k, val = _parse_attribute(v)
            node.attrs[k] = val
        elif fn == 7 and v not in (b"", b"ai.onnx"):
            raise GraphFormatError(f"unsupported operator domain {v.decode('utf-8', 'replace')!r}")
    return node


def _parse_value_info(buf: bytes) -> str:
    for fn, wt, v in _iter_fields(buf):
        if fn == 1:
            return v.decode("utf-8")
    return ""


@dataclass
class GraphModel:
    """A parsed ONNX graph ready for numpy evaluation."""

    nodes: list[GraphNode]
    initializers: dict[str, np.ndarray]
    input_names: list[str]
    output_names: list[str]
    opset: int = 13
    producer: str = ""

    def run(self, feeds: dict[str, np.ndarray]) -> list[np.ndarray]:
        """Execute the graph and return outputs in declaration order."""
        missing = [n for n in self.input_names if n not in feeds]
        if missing:
            raise GraphFormatError(f"missing graph inputs: {missing}")
        values: dict[str, np.ndarray] = dict(self.initializers)
        for k, v in feeds.items():
            values[k] = np.asarray(v)
        for node in self.nodes:
            handler = _OPS.get(node.op_type)
            if handler is None:
                raise UnsupportedOperatorError(
                    f"operator {node.op_type!r} (node {node.name!r}) is not supported"
                )
            args = [values[n] if n else None for n in node.inputs]
            try:
                results = handler(self, node, args)
            except (GraphFormatError, KeyError):
                raise
            except Exception as exc:
                raise GraphFormatError(
                    f"evaluating {node.op_type} node {node.name!r}: {exc}"
                ) from exc
            for out_name, result in zip(node.outputs, results):
                if out_name:
                    values[out_name] = np.asarray(result)
        try:
            return [values[n] for n in self.output_names]
        except KeyError as exc:
            raise GraphFormatError(f"graph output {exc} was never produced") from exc


def parse_model(data: bytes) -> GraphModel:
    nodes: list[GraphNode] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[str] = []
    outputs: list[str] = []
    opset = 13
    producer = ""
    graph_buf = None
    for fn, wt, v in _iter_fields(data):
        if fn == 2:
            producer = v.decode("utf-8", "replace")
        elif fn == 7:
            graph_buf = v
        elif fn == 8:
            domain = b""
            version = None
            for fn2, _, v2 in _iter_fields(v):
                if fn2 == 1:
                    domain = v2
                elif fn2 == 2:
                    version = v2
            if domain in (b"", b"ai.onnx") and version is not None:
                opset = version
    if graph_buf is None:
        raise GraphFormatError("no graph found in model file")
    for fn, wt, v in _iter_fields(graph_buf):
        if fn == 1:
            nodes.append(_parse_node(v))
        elif fn == 5:
            name, arr = _parse_tensor(v)
            initializers[name] = arr
        elif fn == 11:
            inputs.append(_parse_value_info(v))
        elif fn == 12:
            outputs.append(_parse_value_info(v))
    # Frameworks may list initializers among graph inputs; those need no feed.
    input_names = [n for n in inputs if n not in initializers]
    return GraphModel(
        nodes=nodes,
        initializers=initializers,
        input_names=input_names,
        output_names=outputs,
        opset=opset,
        producer=producer,
    )


def load_model(path: str | Path) -> GraphModel:
    data = Path(path).read_bytes()
    if not data:
        raise GraphFormatError(f"{path}: empty file")
    try:
        return parse_model(data)
    except GraphFormatError:
        raise
    except Exception as exc:
        raise GraphFormatError(f"{path}: not a readable model file ({exc})") from exc


# ---------------------------------------------------------------------------
# operator set
# ---------------------------------------------------------------------------

_OPS: dict[str, Callable] = {}


def _op(name: str):
    def register(fn):
        _OPS[name] = fn
        return fn

    return register


def _elementwise(name: str, fn):
    _OPS[name] = lambda model, node, args: [fn(*[a for a in args if a is not None])]


_elementwise("Add", np.add)
_elementwise("Sub", np.subtract)
_elementwise("Mul", np.multiply)
_elementwise("MatMul", np.matmul)
_elementwise("Pow", np.power)
_elementwise("Sqrt", np.sqrt)
_elementwise("Exp", np.exp)
_elementwise("Log", np.log)
_elementwise("Tanh", np.tanh)
_elementwise("Sigmoid", _expit)
_elementwise("Erf", _erf)
_elementwise("Neg", np.negative)
_elementwise("Abs", np.abs)
_elementwise("Floor", np.floor)
_elementwise("Ceil", np.ceil)
_elementwise("Sin", np.sin)
_elementwise("Cos", np.cos)
_elementwise("Sign", np.sign)
_elementwise("Equal", np.equal)
_elementwise("Greater", np.greater)
_elementwise("GreaterOrEqual", np.greater_equal)
_elementwise("Less", np.less)
_elementwise("LessOrEqual", np.less_equal)
_elementwise("And", np.logical_and)
_elementwise("Or", np.logical_or)
_elementwise("Xor", np.logical_xor)
_elementwise("Not", np.logical_not)
_elementwise("Relu", lambda x: np.maximum(x, 0))
_elementwise("Reciprocal", np.reciprocal)
_elementwise("Identity", np.copy)


@_op("Div")
def _div(model, node, args):
    a, b = args
    if np.issubdtype(a.dtype, np.integer) and np.issubdtype(b.dtype, np.integer):
        return [np.fix(np.true_divide(a, b)).astype(a.dtype)]
    return [np.true_divide(a, b)]


@_op("Min")
def _min(model, node, args):
    return [reduce(np.minimum, args)]


@_op("Max")
def _max(model, node, args):
    return [reduce(np.maximum, args)]


@_op("Sum")
def _sum(model, node, args):
    return [reduce(np.add, args)]


@_op("Clip")
def _clip(model, node, args):
    x = args[0]
    lo = args[1] if len(args) > 1 and args[1] is not None else node.attrs.get("min")
    hi = args[2] if len(args) > 2 and args[2] is not None else node.attrs.get("max")
    return [np.clip(x, lo, hi)]


@_op("Gemm")
def _gemm(model, node, args):
    a, b = args[0], args[1]
    if node.attrs.get("transA", 0):
        a = a.T
    if node.attrs.get("transB", 0):
        b = b.T
    y = node.attrs.get("alpha", 1.0) * (a @ b)
    if len(args) > 2 and args[2] is not None:
        y = y + node.attrs.get("beta", 1.0) * args[2]
    return [y.astype(args[0].dtype)]


@_op("Softmax")
def _softmax(model, node, args):
    (x,) = args
    axis = node.attrs.get("axis", -1)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return [e / np.sum(e, axis=axis, keepdims=True)]


def _reduce(np_fn):
    def handler(model, node, args):
        x = args[0]
        if len(args) > 1 and args[1] is not None:
            axes = tuple(int(a) for a in np.atleast_1d(args[1]))
        elif "axes" in node.attrs:
            raw = node.attrs["axes"]
            axes = tuple(raw) if isinstance(raw, list) else (raw,)
        else:
            axes = None
        if axes == ():
            axes = None if not node.attrs.get("noop_with_empty_axes", 0) else ()
            if axes == ():
                return [x]
        keepdims = bool(node.attrs.get("keepdims", 1))
        return [np_fn(x, axis=axes, keepdims=keepdims).astype(x.dtype)]

    return handler


_OPS["ReduceMean"] = _reduce(np.mean)
_OPS["ReduceSum"] = _reduce(np.sum)
_OPS["ReduceMax"] = _reduce(np.max)
_OPS["ReduceMin"] = _reduce(np.min)
_OPS["ReduceProd"] = _reduce(np.prod)


@_op("Transpose")
def _transpose(model, node, args):
    perm = node.attrs.get("perm")
    return [np.transpose(args[0], perm)]


@_op("Reshape")
def _reshape(model, node, args):
    x, shape = args
    shape = [int(s) for s in shape]
    if not node.attrs.get("allowzero", 0):
        shape = [x.shape[i] if s == 0 else s for i, s in enumerate(shape)]
    return [x.reshape(shape)]


@_op("Flatten")
def _flatten(model, node, args):
    (x,) = args
    axis = node.attrs.get("axis", 1)
    if axis < 0:
        axis += x.ndim
    pre = int(np.prod(x.shape[:axis], dtype=np.int64)) if axis else 1
    return [x.reshape(pre, -1)]


@_op("Shape")
def _shape(model, node, args):
    shape = np.asarray(args[0].shape, dtype=np.int64)
    start = node.attrs.get("start", 0)
    end = node.attrs.get("end")
    return [shape[start:end]]


@_op("Size")
def _size(model, node, args):
    return [np.asarray(args[0].size, dtype=np.int64)]


@_op("Concat")
def _concat(model, node, args):
    return [np.concatenate([a for a in args if a is not None], axis=node.attrs["axis"])]


@_op("Split")
def _split(model, node, args):
    x = args[0]
    axis = node.attrs.get("axis", 0)
    if len(args) > 1 and args[1] is not None:
        sizes = [int(s) for s in args[1]]
    elif "split" in node.attrs:
        sizes = list(node.attrs["split"])
    else:
        n = len(node.outputs)
        sizes = [x.shape[axis] // n] * n
    return np.split(x, np.cumsum(sizes)[:-1], axis=axis)


@_op("Slice")
def _slice(model, node, args):
    x = args[0]
    if len(args) > 1:
        starts = [int(v) for v in args[1]]
        ends = [int(v) for v in args[2]]
        axes = [int(v) for v in args[3]] if len(args) > 3 and args[3] is not None else list(range(len(starts)))
        steps = [int(v) for v in args[4]] if len(args) > 4 and args[4] is not None else [1] * len(starts)
    else:  # legacy attribute form
        starts = list(node.attrs["starts"])
        ends = list(node.attrs["ends"])
        axes = list(node.attrs.get("axes", range(len(starts))))
        steps = [1] * len(starts)
    slices = [slice(None)] * x.ndim
    int64_min = -(1 << 63)
    for s, e, ax, st in zip(starts, ends, axes, steps):
        # Python slicing clamps exactly like the ONNX spec; only the INT64_MIN
        # sentinel for "open start under negative step" needs translation.
        if st < 0 and e <= int64_min + 1:
            e = None
        slices[ax] = slice(s, e, st)
    return [x[tuple(slices)]]


@_op("Gather")
def _gather(model, node, args):
    x, idx = args
    return [np.take(x, idx.astype(np.int64), axis=node.attrs.get("axis", 0))]


@_op("GatherElements")
def _gather_elements(model, node, args):
    x, idx = args
    axis = node.attrs.get("axis", 0)
    idx = idx.astype(np.int64)
    idx = np.where(idx < 0, idx + x.shape[axis], idx)
    return [np.take_along_axis(x, idx, axis=axis)]


def _normalized_axes(raw, out_rank) -> list[int]:
    return sorted(a + out_rank if a < 0 else a for a in raw)


@_op("Unsqueeze")
def _unsqueeze(model, node, args):
    x = args[0]
    raw = [int(a) for a in args[1]] if len(args) > 1 and args[1] is not None else list(node.attrs["axes"])
    out = x
    for ax in _normalized_axes(raw, x.ndim + len(raw)):
        out = np.expand_dims(out, ax)
    return [out]


@_op("Squeeze")
def _squeeze(model, node, args):
    x = args[0]
    if len(args) > 1 and args[1] is not None:
        raw = [int(a) for a in np.atleast_1d(args[1])]
    elif "axes" in node.attrs:
        raw = list(node.attrs["axes"])
    else:
        return [np.squeeze(x)]
    axes = tuple(a + x.ndim if a < 0 else a for a in raw)
    return [np.squeeze(x, axis=axes)]


@_op("Cast")
def _cast(model, node, args):
    code = node.attrs["to"]
    if code not in _DTYPES:
        raise GraphFormatError(f"Cast to unsupported data type {code}")
    return [args[0].astype(_DTYPES[code])]


@_op("Constant")
def _constant(model, node, args):
    attrs = node.attrs
    if "value" in attrs:
        return [attrs["value"]]
    if "value_float" in attrs:
        return [np.asarray(attrs["value_float"], dtype=np.float32)]
    if "value_int" in attrs:
        return [np.asarray(attrs["value_int"], dtype=np.int64)]
    if "value_floats" in attrs:
        return [np.asarray(attrs["value_floats"], dtype=np.float32)]
    if "value_ints" in attrs:
        return [np.asarray(attrs["value_ints"], dtype=np.int64)]
    raise GraphFormatError("Constant node without a value attribute")


@_op("ConstantOfShape")
def _constant_of_shape(model, node, args):
    shape = [int(s) for s in args[0]]
    value = node.attrs.get("value")
    if value is None:
        return [np.zeros(shape, dtype=np.float32)]
    value = np.asarray(value)
    return [np.full(shape, value.reshape(-1)[0], dtype=value.dtype)]


@_op("Expand")
def _expand(model, node, args):
    x, shape = args
    target = np.broadcast_shapes(x.shape, tuple(int(s) for s in shape))
    return [np.broadcast_to(x, target).copy()]


@_op("Tile")
def _tile(model, node, args):
    return [np.tile(args[0], [int(r) for r in args[1]])]


@_op("Range")
def _range(model, node, args):
    start, limit, delta = (np.asarray(a).item() for a in args)
    return [np.arange(start, limit, delta, dtype=args[0].dtype)]


@_op("Where")
def _where(model, node, args):
    return [np.where(*args)]


@_op("Dropout")
def _dropout(model, node, args):
    x = args[0]
    return [x, np.ones(x.shape, dtype=np.bool_)]


@_op("LayerNormalization")
def _layer_norm(model, node, args):
    x, scale = args[0], args[1]
    bias = args[2] if len(args) > 2 else None
    axis = node.attrs.get("axis", -1)
    eps = node.attrs.get("epsilon", 1e-5)
    axes = tuple(range(axis if axis >= 0 else x.ndim + axis, x.ndim))
    mean = np.mean(x, axis=axes, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = (x - mean) * inv_std * scale
    if bias is not None:
        y = y + bias
    return [y.astype(x.dtype), mean, inv_std]


@_op("Gelu")
def _gelu(model, node, args):
    (x,) = args
    if node.attrs.get("approximate", "none") == "tanh":
        c = np.sqrt(2.0 / np.pi).astype(x.dtype)
        return [0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))]
    return [(0.5 * x * (1.0 + _erf(x / np.sqrt(2.0)))).astype(x.dtype)]


# ---------------------------------------------------------------------------
# writer
# ---------------------------------------------------------------------------

def _varint(v: int) -> bytes:
    if v < 0:
        v += 1 << 64
    out = bytearray()
    while True:
        byte = v & 0x7F
        v >>= 7
        if v:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(fn: int, wt: int) -> bytes:
    return _varint((fn << 3) | wt)


def _len_field(fn: int, payload: bytes) -> bytes:
    return _tag(fn, 2) + _varint(len(payload)) + payload


def _str_field(fn: int, s: str) -> bytes:
    return _len_field(fn, s.encode("utf-8"))


def _int_field(fn: int, v: int) -> bytes:
    return _tag(fn, 0) + _varint(v)


def _tensor_proto(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _DTYPE_CODES:
        raise GraphFormatError(f"cannot serialize dtype {arr.dtype}")
    out = bytearray()
    for d in arr.shape:
        out += _int_field(1, d)
    out += _int_field(2, _DTYPE_CODES[arr.dtype])
    out += _str_field(8, name)
    out += _len_field(9, arr.tobytes())
    return bytes(out)


_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


def _attribute_proto(name: str, value: Any) -> bytes:
    out = bytearray(_str_field(1, name))
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, np.ndarray):
        out += _len_field(5, _tensor_proto("", value))
        out += _int_field(20, _ATTR_TENSOR)
    elif isinstance(value, float):
        out += _tag(2, 5) + struct.pack("<f", value)
        out += _int_field(20, _ATTR_FLOAT)
    elif isinstance(value, int):
        out += _int_field(3, value)
        out += _int_field(20, _ATTR_INT)
    elif isinstance(value, str):
        out += _len_field(4, value.encode("utf-8"))
        out += _int_field(20, _ATTR_STRING)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, int) for v in value):
        for v in value:
            out += _int_field(8, v)
        out += _int_field(20, _ATTR_INTS)
    elif isinstance(value, (list, tuple)) and all(isinstance(v, float) for v in value):
        for v in value:
            out += _tag(7, 5) + struct.pack("<f", v)
        out += _int_field(20, _ATTR_FLOATS)
    else:
        raise GraphFormatError(f"cannot serialize attribute {name}={value!r}")
    return bytes(out)


def _value_info_proto(name: str, dtype: np.dtype, shape: Iterable[int | str | None]) -> bytes:
    dims = bytearray()
    for i, d in enumerate(shape):
        if isinstance(d, int):
            dim = _int_field(1, d)
        else:
            dim = _str_field(2, str(d) if d is not None else f"d{i}")
        dims += _len_field(1, dim)
    tensor_type = _int_field(1, _DTYPE_CODES[np.dtype(dtype)]) + _len_field(2, bytes(dims))
    type_proto = _len_field(1, tensor_type)
    return _str_field(1, name) + _len_field(2, type_proto)


@dataclass
class GraphBuilder:
    """Programmatic construction of small ONNX model files."""

    name: str = "graph"
    opset: int = 17
    _nodes: list[bytes] = field(default_factory=list)
    _initializers: list[bytes] = field(default_factory=list)
    _inputs: list[bytes] = field(default_factory=list)
    _outputs: list[bytes] = field(default_factory=list)

    def node(self, op_type: str, inputs: Iterable[str], outputs: Iterable[str], **attrs) -> "GraphBuilder":
        out = bytearray()
        for n in inputs:
            out += _str_field(1, n)
        for n in outputs:
            out += _str_field(2, n)
        out += _str_field(4, op_type)
        for k, v in attrs.items():
            out += _len_field(5, _attribute_proto(k, v))
        self._nodes.append(bytes(out))
        return self

    def initializer(self, name: str, arr: np.ndarray) -> "GraphBuilder":
        self._initializers.append(_tensor_proto(name, np.asarray(arr)))
        return self

    def input(self, name: str, dtype, shape) -> "GraphBuilder":
        self._inputs.append(_value_info_proto(name, dtype, shape))
        return self

    def output(self, name: str, dtype, shape) -> "GraphBuilder":
        self._outputs.append(_value_info_proto(name, dtype, shape))
        return self

    def serialize(self, producer: str = "groundcheck") -> bytes:
        graph = bytearray()
        for n in self._nodes:
            graph += _len_field(1, n)
        graph += _str_field(2, self.name)
        for t in self._initializers:
            graph += _len_field(5, t)
        for vi in self._inputs:
            graph += _len_field(11, vi)
        for vi in self._outputs:
            graph += _len_field(12, vi)
        model = bytearray()
        model += _int_field(1, 8)  # ir_version
        model += _str_field(2, producer)
        model += _len_field(7, bytes(graph))
        model += _len_field(8, _int_field(2, self.opset))
        return bytes(model)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.serialize())
