"""Job-shop instance definition, parsing, generation and bounds.

An instance is a square-routing JSSP: every job visits every machine
exactly once, with integer durations >= 1.  Instances are immutable and
safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Identifier of the portable RNG used by :func:`generate`; recorded in
#: suite manifests so suites can be regenerated by any implementation.
RNG_ALGORITHM = "splitmix64-fisheryates-v1"

_MASK64 = (1 << 64) - 1


class InstanceError(ValueError):
    """Malformed instance text or invalid instance data.

    ``line`` is the 1-based line number in the source text when the error
    was detected while parsing, else None.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class OpId:
    """Identifies one operation: step `step` of job `job`.

    `flat` enumerates operations row-major: flat = job * num_machines + step.
    """

    job: int
    step: int
    flat: int

    @staticmethod
    def of(job: int, step: int, num_machines: int) -> "OpId":
        return OpId(job, step, job * num_machines + step)

    @staticmethod
    def from_flat(flat: int, num_machines: int) -> "OpId":
        return OpId(flat // num_machines, flat % num_machines, flat)


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable JSSP problem definition.

    machine[j, k] is the machine of job j's k-th operation, duration[j, k]
    its processing time.  Each job's machine row is a permutation of
    [0, num_machines).
    """

    num_jobs: int
    num_machines: int
    machine: np.ndarray
    duration: np.ndarray
    # inclusive prefix sums of durations per job, shape (J, M+1); pref[j, k]
    # is the work of job j's first k operations
    pref: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        machine = np.ascontiguousarray(self.machine, dtype=np.int64)
        duration = np.ascontiguousarray(self.duration, dtype=np.int64)
        _validate_matrices(self.num_jobs, self.num_machines, machine, duration)
        pref = np.zeros((self.num_jobs, self.num_machines + 1), dtype=np.int64)
        np.cumsum(duration, axis=1, out=pref[:, 1:])
        for arr in (machine, duration, pref):
            arr.flags.writeable = False
        object.__setattr__(self, "machine", machine)
        object.__setattr__(self, "duration", duration)
        object.__setattr__(self, "pref", pref)

    @property
    def num_ops(self) -> int:
        return self.num_jobs * self.num_machines

    def op(self, job: int, step: int) -> OpId:
        return OpId.of(job, step, self.num_machines)

    def __eq__(self, other):
        return (
            isinstance(other, Instance)
            and self.num_jobs == other.num_jobs
            and self.num_machines == other.num_machines
            and np.array_equal(self.machine, other.machine)
            and np.array_equal(self.duration, other.duration)
        )

    def __hash__(self):
        return hash((self.num_jobs, self.num_machines, self.machine.tobytes(), self.duration.tobytes()))


def _validate_matrices(num_jobs, num_machines, machine, duration, line_of_job=None):
    if num_jobs < 1 or num_machines < 1:
        raise InstanceError(f"need at least one job and one machine, got {num_jobs}x{num_machines}")
    if machine.shape != (num_jobs, num_machines) or duration.shape != (num_jobs, num_machines):
        raise InstanceError(
            f"expected {num_jobs}x{num_machines} machine/duration matrices, "
            f"got {machine.shape} and {duration.shape}"
        )
    want = np.arange(num_machines, dtype=np.int64)
    for j in range(num_jobs):
        line = line_of_job(j) if line_of_job else None
        row = machine[j]
        if row.min() < 0 or row.max() >= num_machines:
            raise InstanceError(f"job {j}: machine index out of range [0, {num_machines})", line)
        if not np.array_equal(np.sort(row), want):
            counts = np.bincount(row, minlength=num_machines)
            dup = int(np.argmax(counts))
            raise InstanceError(f"job {j} visits machine {dup} twice", line)
        if duration[j].min() < 1:
            raise InstanceError(f"job {j}: non-positive duration", line)


def _numbered_tokens(text):
    """Yield (token, line_number) for every whitespace token, skipping
    blank lines and '#' comments."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        for tok in line.split():
            yield tok, lineno


def _take_int(tokens, what, positive=False):
    try:
        tok, lineno = next(tokens)
    except StopIteration:
        raise InstanceError(f"unexpected end of file while reading {what}") from None
    try:
        value = int(tok)
    except ValueError:
        raise InstanceError(f"expected integer {what}, got {tok!r}", lineno) from None
    if positive and value < 1:
        raise InstanceError(f"{what} must be >= 1, got {value}", lineno)
    return value, lineno


def parse_standard(text: str) -> Instance:
    """Parse the conventional exchange format.

    First non-comment line is "J M"; each of the next J lines holds 2*M
    integers alternating machine index (0-based) and duration.  Whitespace
    is free-form and lines starting with '#' are ignored.
    """
    tokens = _numbered_tokens(text)
    num_jobs, _ = _take_int(tokens, "job count", positive=True)
    num_machines, _ = _take_int(tokens, "machine count", positive=True)
    machine = np.zeros((num_jobs, num_machines), dtype=np.int64)
    duration = np.zeros((num_jobs, num_machines), dtype=np.int64)
    job_line = [0] * num_jobs
    for j in range(num_jobs):
        for k in range(num_machines):
            m, lineno = _take_int(tokens, f"machine of job {j} step {k}")
            p, _ = _take_int(tokens, f"duration of job {j} step {k}")
            machine[j, k] = m
            duration[j, k] = p
            job_line[j] = lineno
    leftover = next(tokens, None)
    if leftover is not None:
        raise InstanceError(f"trailing data {leftover[0]!r}", leftover[1])
    _validate_matrices(num_jobs, num_machines, machine, duration, line_of_job=job_line.__getitem__)
    return Instance(num_jobs, num_machines, machine, duration)


def parse_taillard(text: str) -> Instance:
    """Parse the Taillard distribution layout.

    Header "J M", then a JxM durations matrix, then a JxM machines matrix
    with 1-indexed machine numbers (converted to 0-indexed here).
    """
    tokens = _numbered_tokens(text)
    num_jobs, _ = _take_int(tokens, "job count", positive=True)
    num_machines, _ = _take_int(tokens, "machine count", positive=True)
    duration = np.zeros((num_jobs, num_machines), dtype=np.int64)
    machine = np.zeros((num_jobs, num_machines), dtype=np.int64)
    job_line = [0] * num_jobs
    for j in range(num_jobs):
        for k in range(num_machines):
            duration[j, k], _ = _take_int(tokens, f"duration of job {j} step {k}")
    for j in range(num_jobs):
        for k in range(num_machines):
            m, lineno = _take_int(tokens, f"machine of job {j} step {k}")
            if m == 0:
                raise InstanceError(f"job {j}: machine 0 in 1-indexed machines matrix", lineno)
            machine[j, k] = m - 1
            job_line[j] = lineno
    leftover = next(tokens, None)
    if leftover is not None:
        raise InstanceError(f"trailing data {leftover[0]!r}", leftover[1])
    _validate_matrices(num_jobs, num_machines, machine, duration, line_of_job=job_line.__getitem__)
    return Instance(num_jobs, num_machines, machine, duration)


def serialize(inst: Instance) -> str:
    """Standard-format text; parse_standard(serialize(x)) == x."""
    lines = [f"{inst.num_jobs} {inst.num_machines}"]
    for j in range(inst.num_jobs):
        pairs = []
        for k in range(inst.num_machines):
            pairs.append(f"{inst.machine[j, k]} {inst.duration[j, k]}")
        lines.append(" ".join(pairs))
    return "\n".join(lines) + "\n"


def serialize_taillard(inst: Instance) -> str:
    """Taillard layout with 1-indexed machines (used for the bundled data files)."""
    lines = [f"{inst.num_jobs} {inst.num_machines}"]
    for j in range(inst.num_jobs):
        lines.append(" ".join(str(int(p)) for p in inst.duration[j]))
    for j in range(inst.num_jobs):
        lines.append(" ".join(str(int(m) + 1) for m in inst.machine[j]))
    return "\n".join(lines) + "\n"


class SplitMix64:
    """Portable 64-bit generator (splitmix64), the documented algorithm
    behind RNG_ALGORITHM.  State update: s += 0x9E3779B97F4A7C15; output is
    the finalizer of the new state.  Bounded draws use rejection sampling,
    permutations a Fisher-Yates shuffle."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive, without modulo bias."""
        span = hi - lo + 1
        limit = _MASK64 + 1 - (_MASK64 + 1) % span
        while True:
            z = self.next_u64()
            if z < limit:
                return lo + z % span

    def permutation(self, n: int) -> np.ndarray:
        out = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randint(0, i)
            out[i], out[j] = out[j], out[i]
        return out


def generate(num_jobs: int, num_machines: int, seed: int, dur_lo: int = 1, dur_hi: int = 99) -> Instance:
    """Random instance: durations uniform in [dur_lo, dur_hi], each job's
    machine row an independent uniform permutation.  Pure function of its
    arguments (bit-identical across runs and platforms)."""
    if not (1 <= dur_lo <= dur_hi):
        raise InstanceError(f"invalid duration range [{dur_lo}, {dur_hi}]")
    if num_jobs < 1 or num_machines < 1:
        raise InstanceError(f"need at least one job and one machine, got {num_jobs}x{num_machines}")
    rng = SplitMix64(seed)
    duration = np.zeros((num_jobs, num_machines), dtype=np.int64)
    for j in range(num_jobs):
        for k in range(num_machines):
            duration[j, k] = rng.randint(dur_lo, dur_hi)
    machine = np.zeros((num_jobs, num_machines), dtype=np.int64)
    for j in range(num_jobs):
        machine[j] = rng.permutation(num_machines)
    return Instance(num_jobs, num_machines, machine, duration)


def lower_bound(inst: Instance) -> int:
    """Classical two-sided bound: max of the largest job workload and the
    largest machine workload.  Never exceeds the optimal makespan."""
    job_work = inst.pref[:, -1].max()
    mch_work = np.bincount(
        inst.machine.ravel(), weights=inst.duration.ravel(), minlength=inst.num_machines
    ).max()
    return int(max(job_work, mch_work))


# --- Taillard benchmark generator ------------------------------------------
#
# The published benchmark instances are defined by a pair of seeds and the
# linear congruential generator below (Bratley-Fox-Schrage implementation of
# x <- 16807 x mod (2^31 - 1)); regenerating them locally avoids shipping
# third-party files of any size.

_TA_M = 2147483647
_TA_A = 16807
_TA_B = 127773
_TA_C = 2836


def _ta_unif(seed: int, low: int, high: int):
    k = seed // _TA_B
    seed = _TA_A * (seed % _TA_B) - k * _TA_C
    if seed < 0:
        seed += _TA_M
    return seed, low + int(seed / _TA_M * (high - low + 1))


def taillard_instance(num_jobs: int, num_machines: int, time_seed: int, machine_seed: int) -> Instance:
    """Regenerate a Taillard benchmark instance from its published seeds."""
    duration = np.zeros((num_jobs, num_machines), dtype=np.int64)
    s = time_seed
    for j in range(num_jobs):
        for k in range(num_machines):
            s, duration[j, k] = _ta_unif(s, 1, 99)
    machine = np.tile(np.arange(num_machines, dtype=np.int64), (num_jobs, 1))
    s = machine_seed
    for j in range(num_jobs):
        for k in range(num_machines):
            s, r = _ta_unif(s, k, num_machines - 1)
            machine[j, k], machine[j, r] = machine[j, r], machine[j, k]
    return Instance(num_jobs, num_machines, machine, duration)
