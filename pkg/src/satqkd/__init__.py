"""Satellite QKD mission analysis toolkit.

Pipeline: analytic LEO pass geometry -> dynamic optical link budget ->
click/QBER statistics -> decoy-state BB84 finite-key secure key length ->
whole-pass parameter optimization, plus a trusted-node key relay model.
"""

__version__ = "0.1.0"
