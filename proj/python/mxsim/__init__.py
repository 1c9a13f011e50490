# Copyright 2026 The mxsim Authors
# SPDX-License-Identifier: Apache-2.0
"""Python access to the mxsim numerics and performance model."""

import csv
import io
import json

from . import _mxsim
from ._mxsim import (
    __version__,
    bf16_round,
    block_scale_exponent,
    digital_linear,
    fp4_decode,
    fp4_encode,
    io_penalty,
    macro_tops,
    max_batch,
    quantize_dequantize,
    set_num_threads,
    workload_names,
)

__all__ = [
    "__version__", "analog_linear", "bf16_round", "block_scale_exponent", "default_config",
    "digital_linear", "evaluate", "fp4_decode", "fp4_encode", "io_penalty", "macro_tops",
    "max_batch", "quantize_dequantize", "set_num_threads", "system", "system_peak", "table",
    "unbounded_config", "workload", "workload_names",
]


def system(name="base"):
    return json.loads(_mxsim.system_config(name))


def workload(name):
    return json.loads(_mxsim.workload(name))


def default_config():
    return json.loads(_mxsim.default_config())


def unbounded_config():
    return json.loads(_mxsim.unbounded_config())


def analog_linear(x, w, config=None):
    """Returns (outputs, diagnostics) for one layer calibrated on ``x``."""
    values, diag = _mxsim.analog_linear(x, w, json.dumps(config) if config else "")
    return values, json.loads(diag)


def evaluate(workload_spec, system_spec="base", seq_len=0):
    """Performance report; ``seq_len`` 0 uses the workload's own length."""
    if isinstance(workload_spec, str):
        workload_spec = workload(workload_spec)
    if isinstance(system_spec, str):
        system_spec = system(system_spec)
    return json.loads(_mxsim.evaluate(json.dumps(workload_spec), json.dumps(system_spec), seq_len))


def system_peak(system_spec="base"):
    """(balance sequence length, peak TOPS) on the sizing workload."""
    if isinstance(system_spec, str):
        system_spec = system(system_spec)
    return _mxsim.system_peak(json.dumps(system_spec))


def table(table_id):
    return list(csv.DictReader(io.StringIO(_mxsim.table_csv(table_id))))
