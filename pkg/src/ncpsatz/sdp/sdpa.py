"""SDPA sparse format (``.dat-s``) writer and reader.

The SDPA primal is ``min c^T x  s.t.  sum_i F_i x_i - F_0 >= 0`` and its
dual is ``max <F_0, Y>  s.t.  <F_i, Y> = c_i, Y >= 0``. An equality-form
problem ``min <C, X>, <A_i, X> = b_i`` maps onto the SDPA dual with
``F_0 = -C``, ``F_i = A_i``, ``c = b`` and ``Y = X``. Only real problems
can be written; realify complex ones first.
"""
from __future__ import annotations

import io
import os

import numpy as np
import scipy.sparse as sp

from .problem import SdpProblem


def _fmt(v: float) -> str:
    return repr(float(v))


def _sdpa_blocks(sizes):
    """Group runs of two or more 1x1 blocks into diagonal SDPA blocks.

    Returns the SDPA size list and, per internal block, ``(sdpa block, offset)``.
    """
    sizes = list(sizes)
    out, where = [], []
    for k, n in enumerate(sizes):
        ones = n == 1 and (k + 1 < len(sizes) and sizes[k + 1] == 1 or k > 0 and sizes[k - 1] == 1)
        if ones and out and out[-1] < 0 and sizes[k - 1] == 1:
            where.append((len(out), -out[-1]))
            out[-1] -= 1
        else:
            where.append((len(out) + 1, 0))
            out.append(-1 if ones else n)
    return out, where


def sdpa_text(p: SdpProblem) -> str:
    """SDPA sparse text; consecutive 1x1 blocks share one diagonal block."""
    if not p.is_real:
        raise ValueError("SDPA export needs a real problem; realify it first")
    sizes, where = _sdpa_blocks(p.block_sizes)
    out = io.StringIO()
    out.write(f"{p.m}\n{len(sizes)}\n")
    out.write(" ".join(str(n) for n in sizes) + "\n")
    out.write((" ".join(_fmt(v) for v in p.b) if p.m else "") + "\n")
    lines = []
    for (blk, off), Ck in zip(where, p.C):
        r, c = np.nonzero(np.triu(Ck))
        for i, j in zip(r, c):
            lines.append((0, blk, off + i, off + j, -Ck[i, j]))
    for (blk, off), Ak, n in zip(where, p.A, p.block_sizes):
        coo = Ak.tocoo()
        r, c = np.divmod(coo.col, n)
        upper = r <= c
        for i, rr, cc, v in zip(coo.row[upper], r[upper], c[upper], coo.data[upper]):
            lines.append((i + 1, blk, off + rr, off + cc, v))
    lines.sort(key=lambda t: t[:4])
    for i, k, rr, cc, v in lines:
        out.write(f"{i} {k} {rr + 1} {cc + 1} {_fmt(v)}\n")
    return out.getvalue()


def export_sdpa(p: SdpProblem, destination) -> str:
    """Write ``p`` in SDPA sparse format to a path or file object; return the text."""
    text = sdpa_text(p)
    if destination is None:
        return text
    if isinstance(destination, (str, os.PathLike)):
        with open(destination, "w") as fh:
            fh.write(text)
    else:
        destination.write(text)
    return text


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("*")[0].split('"')[0].strip()
        if not line:
            continue
        for tok in line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split():
            yield tok


def parse_sdpa(text: str) -> SdpProblem:
    """Read SDPA sparse text. Diagonal blocks (negative sizes) become 1x1 blocks."""
    lines = [ln.split("*")[0].split('"')[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    pos = 0

    def take(count):
        nonlocal pos
        vals = []
        while len(vals) < count:
            if pos >= len(lines):
                raise ValueError("unexpected end of SDPA header")
            vals.extend(_tokens(lines[pos]))
            pos += 1
        if len(vals) != count:
            raise ValueError("malformed SDPA header line")
        return vals

    m = int(take(1)[0])
    nb = int(take(1)[0])
    raw_sizes = [int(t) for t in take(nb)]
    cvals = [float(t) for t in take(m)]
    # map SDPA blocks to internal blocks
    sizes, where = [], []
    for s in raw_sizes:
        if s > 0:
            where.append(("sdp", len(sizes)))
            sizes.append(s)
        else:
            where.append(("diag", len(sizes)))
            sizes.extend([1] * (-s))
    data = [([], [], []) for _ in sizes]
    C = [np.zeros((n, n)) for n in sizes]
    for ln in lines[pos:]:
        t = list(_tokens(ln))
        if len(t) < 5:
            continue
        mat, blk, i, j, v = int(t[0]), int(t[1]) - 1, int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        kind, base = where[blk]
        if kind == "diag":
            if i != j:
                raise ValueError("off-diagonal entry in a diagonal block")
            k, i, j = base + i, 0, 0
        else:
            k = base
        n = sizes[k]
        if mat == 0:
            C[k][i, j] = -v
            C[k][j, i] = -v
        else:
            rows, cols, vals = data[k]
            rows.append(mat - 1)
            cols.append(i * n + j)
            vals.append(v)
            if i != j:
                rows.append(mat - 1)
                cols.append(j * n + i)
                vals.append(v)
    A = [sp.csr_matrix((vals, (rows, cols)), shape=(m, n * n)) for (rows, cols, vals), n in zip(data, sizes)]
    return SdpProblem(tuple(sizes), tuple(A), np.array(cvals), tuple(C))


def import_sdpa(source) -> SdpProblem:
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source) as fh:
            return parse_sdpa(fh.read())
    if hasattr(source, "read"):
        return parse_sdpa(source.read())
    return parse_sdpa(str(source))
