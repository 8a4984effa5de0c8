"""Pure numpy reference kernels.

Same contracts as the compiled versions in _core.pyx; selected as a
fallback when the extension is absent (see __init__).
"""

import numpy as np


def neighbor_sum(h, src, seg_ptr, seg_nodes, out):
    """out[seg_nodes[s]] = sum of h[src[e]] over e in [seg_ptr[s], seg_ptr[s+1]).

    `src` lists arc sources grouped into contiguous segments, one segment
    per destination node; `out` must be pre-zeroed.
    """
    if len(src) == 0:
        return
    out[seg_nodes] = np.add.reduceat(h[src], seg_ptr[:-1], axis=0)


def clb_fill(machine, duration, pref, completion, job_next, machine_avail, out):
    """Fill the per-operation completion lower bounds for one state.

    Scheduled ops keep their actual completion; the frontier op of each job
    starts at max(predecessor completion, its machine's availability); ops
    past the frontier chain off the frontier bound with no machine wait.
    All inputs and `out` are int64.
    """
    num_jobs, num_machines = machine.shape
    fr = job_next
    steps = np.arange(num_machines, dtype=np.int64)[None, :]
    done = steps < fr[:, None]
    np.copyto(out, completion, where=done)

    active = np.flatnonzero(fr < num_machines)
    if len(active) == 0:
        return
    fa = fr[active]
    prev_c = np.where(fa > 0, completion[active, np.maximum(fa - 1, 0)], 0)
    start_f = np.maximum(prev_c, machine_avail[machine[active, fa]])
    clb_f = start_f + duration[active, fa]
    # out[j, k] for k >= fr: clb_f + (pref[j, k+1] - pref[j, fr+1])
    tail = steps >= fa[:, None]
    vals = clb_f[:, None] + pref[active, 1:] - pref[active, fa + 1][:, None]
    rows = out[active]
    np.copyto(rows, vals, where=tail)
    out[active] = rows
