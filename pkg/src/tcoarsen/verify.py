"""Differential check of a transformed kernel against its original."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bufio import write_buffers
from .coarsen import GUARD_TAILS, coarsening_obligation
from .errors import ExecutionError, PreconditionError
from .interp import DEFAULT_MAX_LOCAL, BufferSet, LaunchConfig, interpret
from .nodes import Kernel


@dataclass
class Mismatch:
    pointer: str
    index: int
    expected: float
    actual: float
    original_writer: int
    transformed_writer: int

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class TrialVerdict:
    trial: int
    status: str  # "match", "mismatch" or "error"
    compared: list = field(default_factory=list)
    mismatch: Optional[Mismatch] = None
    error: Optional[str] = None
    dump: Optional[str] = None

    def to_dict(self):
        d = {"trial": self.trial, "status": self.status, "compared": self.compared}
        if self.mismatch is not None:
            d["mismatch"] = self.mismatch.to_dict()
        if self.error is not None:
            d["error"] = self.error
        if self.dump is not None:
            d["dump"] = self.dump
        return d


@dataclass
class VerifyResult:
    verdicts: list

    @property
    def ok(self):
        return all(v.status == "match" for v in self.verdicts)


def local_size_for(global_size, limit=DEFAULT_MAX_LOCAL):
    """Largest work-group size up to ``limit`` that divides ``global_size``."""
    for size in range(min(limit, global_size), 0, -1):
        if global_size % size == 0:
            return size
    return 1


def random_buffers(kernel: Kernel, length: int, rng, scalars=None) -> BufferSet:
    """Float arrays uniform in [0.5, 1.5); int arrays uniform in [0, length)."""
    arrays, values = {}, {}
    scalars = scalars or {}
    for p in kernel.params:
        if p.pointer and p.space == "local":
            continue
        if p.pointer:
            if p.type == "float":
                arrays[p.name] = rng.random(length, dtype=np.float32) + np.float32(0.5)
            else:
                dt = np.int32 if p.type == "int" else np.uint32
                arrays[p.name] = rng.integers(0, length, length).astype(dt)
        elif p.name in scalars:
            values[p.name] = scalars[p.name]
        else:
            values[p.name] = 1.0 if p.type == "float" else length
    return BufferSet(arrays, values)


def _check_signatures(original, transformed):
    a = [(p.name, p.type, p.pointer, p.space) for p in original.params]
    b = [(p.name, p.type, p.pointer, p.space) for p in transformed.params]
    if a != b:
        raise PreconditionError("the two kernels have different parameter lists")


def transformed_global_size(transformed, global_size, degree, scalars):
    """Launch size for the merged kernel, enforcing the recorded obligation."""
    obligation = coarsening_obligation(transformed) or {}
    if obligation and obligation["degree"] != degree:
        raise PreconditionError(
            f"kernel was coarsened with degree {obligation['degree']}, not {degree}")
    if obligation.get("tail") == GUARD_TAILS:
        return -(-global_size // degree)
    if global_size % degree:
        raise PreconditionError(
            f"global size {global_size} is not divisible by the coarsening degree {degree}")
    extent = obligation.get("extent")
    if extent is not None:
        n = int(scalars.get(extent, global_size))
        if n % degree:
            raise PreconditionError(
                f"extent {extent}={n} is not divisible by the coarsening degree {degree}")
    return global_size // degree


def verify(original: Kernel, transformed: Kernel, global_size: int, degree: int, *,
           seed: int = 0, trials: int = 1, scalars=None, length=None,
           dump_dir=None) -> VerifyResult:
    """Run both kernels over ``trials`` random inputs and compare every buffer bitwise."""
    scalars = dict(scalars or {})
    _check_signatures(original, transformed)
    g2 = transformed_global_size(transformed, global_size, degree, scalars)
    length = length or global_size
    launch1 = LaunchConfig(global_size, local_size_for(global_size))
    launch2 = LaunchConfig(g2, local_size_for(g2))
    verdicts = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        inputs = random_buffers(original, length, rng, scalars)
        ref = interpret(original, launch1, inputs)
        try:
            out = interpret(transformed, launch2, inputs)
        except ExecutionError as exc:
            verdicts.append(TrialVerdict(trial, "error", error=str(exc),
                                         dump=_dump(dump_dir, trial, inputs)))
            continue
        verdict = TrialVerdict(trial, "match", sorted(ref.buffers))
        for name in sorted(ref.buffers):
            a, b = ref.buffers[name], out.buffers[name]
            diff = np.flatnonzero(a.view(np.uint32) != b.view(np.uint32))
            if diff.size:
                i = int(diff[0])
                verdict.status = "mismatch"
                verdict.mismatch = Mismatch(name, i, a[i].item(), b[i].item(),
                                            int(ref.writers[name][i]),
                                            int(out.writers[name][i]))
                verdict.dump = _dump(dump_dir, trial, inputs)
                break
        verdicts.append(verdict)
    return VerifyResult(verdicts)


def _dump(dump_dir, trial, inputs):
    if dump_dir is None:
        return None
    path = Path(dump_dir)
    path.mkdir(parents=True, exist_ok=True)
    manifest = path / f"trial{trial}_inputs.json"
    write_buffers(inputs, manifest)
    return str(manifest)
