# Compiled versions of the hot per-step kernels: the sparse neighbor
# aggregation used by the message-passing layers and the completion
# lower-bound refresh used by the scheduling environment.  Contracts match
# pyref.py exactly, including summation order.

import numpy as np

cimport numpy as cnp

cnp.import_array()


def neighbor_sum(
    const cnp.float64_t[:, ::1] h,
    const cnp.int64_t[::1] src,
    const cnp.int64_t[::1] seg_ptr,
    const cnp.int64_t[::1] seg_nodes,
    cnp.float64_t[:, ::1] out,
):
    cdef Py_ssize_t num_seg = seg_nodes.shape[0]
    cdef Py_ssize_t dim = h.shape[1]
    cdef Py_ssize_t s, e, d, v, u
    for s in range(num_seg):
        v = seg_nodes[s]
        for e in range(seg_ptr[s], seg_ptr[s + 1]):
            u = src[e]
            for d in range(dim):
                out[v, d] += h[u, d]


def clb_fill(
    const cnp.int64_t[:, ::1] machine,
    const cnp.int64_t[:, ::1] duration,
    const cnp.int64_t[:, ::1] pref,
    const cnp.int64_t[:, ::1] completion,
    const cnp.int64_t[::1] job_next,
    const cnp.int64_t[::1] machine_avail,
    cnp.int64_t[:, ::1] out,
):
    cdef Py_ssize_t num_jobs = machine.shape[0]
    cdef Py_ssize_t num_machines = machine.shape[1]
    cdef Py_ssize_t j, k, fr
    cdef cnp.int64_t prev_c, start_f, clb_f, avail
    for j in range(num_jobs):
        fr = job_next[j]
        for k in range(fr):
            out[j, k] = completion[j, k]
        if fr >= num_machines:
            continue
        prev_c = completion[j, fr - 1] if fr > 0 else 0
        avail = machine_avail[machine[j, fr]]
        start_f = prev_c if prev_c > avail else avail
        clb_f = start_f + duration[j, fr]
        out[j, fr] = clb_f
        for k in range(fr + 1, num_machines):
            out[j, k] = clb_f + pref[j, k + 1] - pref[j, fr + 1]
