"""Batched evaluation of analytic map chains, pure-Python lane.

A chain is a (n_stages, 5) float64 array of rows ``[op, a, b, c, d]``:

  op 0  initial square root        w = sqrt((z - p2) / (z - p1)),
                                   p1 = a + bi, p2 = c + di
  op 1  geodesic slit closure      w1 = z / (1 + i*beta*z),
                                   w = w1 * sqrt(1 - (h/w1)^2),
                                   beta = a, h = b
  op 2  half-plane normalization   w = s * (z / (1 - z/C))^2,
                                   C = a + bi, s = c; d = 1 means C at
                                   infinity (the Moebius factor drops out)
  op 3  Cayley transform           w = (z - i) / (z + i)
  op 4  disk automorphism          w = (z - a0) / (1 - conj(a0) z),
                                   a0 = a + bi

Values at poles propagate as complex infinity so vertex tracking can pass
through intermediate stages.  The compiled lane in ``_chain_eval`` mirrors
this function; keep the two in sync.
"""

import numpy as np

_BIG = 1e140
_TINY = 1e-140


def eval_chain(stages: np.ndarray, z: np.ndarray) -> np.ndarray:
    w = np.array(z, dtype=complex, copy=True)
    for row in stages:
        op = int(row[0])
        if op == 0:
            p1 = complex(row[1], row[2])
            p2 = complex(row[3], row[4])
            den = w - p1
            pole = np.abs(den) == 0.0
            den = np.where(pole, 1.0, den)
            w = np.sqrt((w - p2) / den)
            w[pole] = complex(np.inf, 0.0)
        elif op == 1:
            beta = row[1]
            h = row[2]
            big = ~np.isfinite(w) | (np.abs(w) > _BIG)
            wn = np.where(big, 0.0, w)
            den = 1.0 + 1j * beta * wn
            safe = np.where(big | (np.abs(den) == 0.0), 1.0, den)
            w1 = wn / safe
            if beta != 0.0:
                w1 = np.where(big, -1j / beta, w1)
            else:
                w1 = np.where(big, complex(np.inf, 0.0), w1)
            aw = np.abs(w1)
            tiny = aw < _TINY
            huge = ~np.isfinite(w1) | (aw > _BIG)
            mid = ~(tiny | huge)
            wm = np.where(mid, w1, 1.0)
            out = wm * np.sqrt(1.0 - (h / wm) ** 2)
            out = np.where(mid, out, w1)
            out = np.where(tiny & (w1.imag >= 0), 1j * h, out)
            out = np.where(tiny & (w1.imag < 0), -1j * h, out)
            w = out
        elif op == 2:
            s = row[3]
            if row[4] == 1.0:
                w = s * w * w
            else:
                C = complex(row[1], row[2])
                big = ~np.isfinite(w) | (np.abs(w) > _BIG)
                wn = np.where(big, 0.0, w)
                den = 1.0 - wn / C
                pole = np.abs(den) == 0.0
                m = np.where(big, -C, wn / np.where(pole, 1.0, den))
                mbig = (pole & ~big) | ~np.isfinite(m) | (np.abs(m) > _BIG)
                mn = np.where(mbig, 0.0, m)
                w = np.where(mbig, complex(np.inf, 0.0), s * mn * mn)
        elif op == 3:
            big = ~np.isfinite(w) | (np.abs(w) > _BIG)
            den = np.where(big, 1.0, w) + 1j
            pole = np.abs(den) == 0.0
            w = np.where(big, 1.0,
                         (np.where(pole, 0.0, w) - 1j) / np.where(pole, 1.0, den))
            w = np.where(pole & ~big, complex(np.inf, 0.0), w)
        elif op == 4:
            a0 = complex(row[1], row[2])
            big = ~np.isfinite(w) | (np.abs(w) > _BIG)
            wn = np.where(big, 0.0, w)
            den = 1.0 - np.conj(a0) * wn
            pole = np.abs(den) == 0.0
            w = (wn - a0) / np.where(pole, 1.0, den)
            if abs(a0) > 0:
                w = np.where(big, -1.0 / np.conj(a0), w)
            else:
                w = np.where(big, complex(np.inf, 0.0), w)
            w = np.where(pole & ~big, complex(np.inf, 0.0), w)
        else:
            raise ValueError(f"unknown chain op {op}")
    return w
