"""Numpy fallback kernel for applying the block-triangular lifted operator.

The operator's block coupling block i -> block i+j is a sum over positions of
I^(pos-1) (x) F_{j+1} (x) I^(i-pos).  Each position contribution is applied by
reshaping the source block to (left, d^k, right) and contracting the middle
axis against the dense (d, d^k) flattening of the degree-k tensor.  No block
of the full operator is ever formed.
"""

from __future__ import annotations

import numpy as np


def apply_blocks(out: np.ndarray, vin: np.ndarray, d: int, order: int,
                 offsets, degrees, flats) -> None:
    """Accumulate the operator action on vin into out (both length-D vectors).

    offsets[i-1] is the start of block i (i = 1..order); degrees/flats list
    the tensor degrees k and their dense (d, d^k) flattenings.
    """
    for k, fmat in zip(degrees, flats):
        dk = d**k
        for i in range(1, order - k + 2):  # output block index
            src = i + k - 1
            v = vin[offsets[src - 1]:offsets[src - 1] + d**src]
            dst = out[offsets[i - 1]:offsets[i - 1] + d**i]
            for pos in range(1, i + 1):
                left = d**(pos - 1)
                right = d**(i - pos)
                block = v.reshape(left, dk, right)
                # (d, dk) @ (dk, left*right) -> (d, left, right)
                contracted = fmat @ block.transpose(1, 0, 2).reshape(
                    dk, left * right)
                dst += contracted.reshape(d, left, right).transpose(
                    1, 0, 2).reshape(-1)
