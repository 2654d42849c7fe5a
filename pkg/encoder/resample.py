"""
Dyadic downsampling and spline upsampling along the time axis.

The natural cubic spline through fixed knots is linear in the knot values, so
it is built once per (T', T, stride) as a T×T' matrix with scipy and applied
to torch tensors; gradients flow to the knot values.
"""

from functools import lru_cache

import numpy as np
import torch
from scipy.interpolate import CubicSpline, interp1d


def downsample(seq: torch.Tensor, k: int) -> torch.Tensor:
    """Keep time steps 0, k, 2k, … of a B×T×N×C block."""
    if k < 1:
        raise ValueError(f"stride must be positive, got {k}")
    return seq[:, ::k]


@lru_cache(maxsize=64)
def spline_operator(n_knots: int, target: int, stride: int) -> np.ndarray:
    """
    Matrix M (target × n_knots) with M @ knots = spline evaluated at 0…target−1.

    One knot → constant extension; two or three knots → piecewise linear with
    linear extrapolation; otherwise a natural cubic spline.
    """
    if n_knots < 1:
        raise ValueError("at least one knot is required")
    if n_knots == 1:
        operator = np.ones((target, 1))
    else:
        positions = np.arange(n_knots, dtype=np.float64) * stride
        basis = np.eye(n_knots)
        grid = np.arange(target, dtype=np.float64)
        if n_knots <= 3:
            linear = interp1d(positions, basis, kind="linear", axis=0, fill_value="extrapolate")
            operator = linear(grid)
        else:
            operator = CubicSpline(positions, basis, axis=0, bc_type="natural")(grid)
    operator.setflags(write=False)
    return operator


def upsample_spline(seq: torch.Tensor, target: int, stride: int) -> torch.Tensor:
    """
    Restore a downsampled B×T'×N×C block to B×target×N×C.

    Knots sit at times 0, stride, 2·stride, …; values there are reproduced exactly.
    """
    weights = spline_operator(seq.shape[1], target, stride).copy()
    operator = torch.as_tensor(weights, dtype=seq.dtype)
    return torch.einsum("ts,bsnc->btnc", operator, seq)
