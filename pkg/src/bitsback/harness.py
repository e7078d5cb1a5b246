"""Benchmark harness: seeded experiments, bitrate accounting, CSV output.

Every (coder, particle-count) cell initializes a message with the smallest
pad that survives the run, encodes the whole dataset, verifies a bit-exact
round trip, and reports net / total / after-first-symbol bitrates plus the
coder's variational-bound ideal and the oracle entropy reference.
"""

from __future__ import annotations

import csv
import io
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ans import AnsMessage, AnsUnderflowError, ans_init
from .anneal import (ais_bound_mean, bb_ais_bitswap_decode, bb_ais_bitswap_encode,
                     bb_ais_decode, bb_ais_encode)
from .elbo import CoderContext, bb_elbo_decode, bb_elbo_encode, negative_elbo
from .impsamp import (bb_cis_decode, bb_cis_encode, bb_is_decode, bb_is_encode,
                      cis_estimator_mean, iwae_bound_mean, make_coupling)
from .models import (Hmm, MixtureModel, UniformPosterior, empirical_entropy,
                     gen_hmm, gen_mixture, sample_dataset)
from .smc import (SmcCoupling, bb_csmc_decode, bb_csmc_encode, bb_smc_decode,
                  bb_smc_encode, fivo_bound_mean, make_smc_coupling)

EXPERIMENTS = ("mixture_convergence", "cleanliness", "initial_bits",
               "hmm_convergence", "roundtrip_suite")

MIXTURE_CODERS = ("elbo", "is", "cis", "ais", "ais-bitswap")
HMM_CODERS = ("elbo", "is", "smc", "csmc")
ALL_CODERS = ("elbo", "is", "cis", "ais", "ais-bitswap", "smc", "csmc")

CSV_COLUMNS = ("coder", "N", "net_bps", "total_bps", "total_first",
               "ideal_bps", "entropy", "seed", "pad_words")

_PAD_SEED_TAG = 505
_IDEAL_SEED_TAG = 707
_COUPLING_SEED_TAG = 808
_PAD_SEARCH_PREFIX = 48


@dataclass
class RunConfig:
    """One experiment invocation; seeds make reruns byte-identical."""

    experiment: str
    seed: int = 0
    n: int | None = None
    coders: tuple[str, ...] | None = None
    n_sweep: tuple[int, ...] | None = None
    precision: int = 16
    coupling_mode: str = "iid_shifts"
    redraws: int = 100
    jobs: int = 1
    out: str | None = None


@dataclass
class BitrateReport:
    """Per-(coder, N) results row."""

    coder: str
    n_particles: int
    net_bps: float
    total_bps: float
    total_first: float
    ideal_bps: float | None
    entropy: float
    seed: int
    pad_words: int

    def as_row(self) -> list:
        ideal = "" if self.ideal_bps is None else f"{self.ideal_bps:.6f}"
        return [self.coder, self.n_particles, f"{self.net_bps:.6f}",
                f"{self.total_bps:.6f}", f"{self.total_first:.6f}", ideal,
                f"{self.entropy:.6f}", self.seed, self.pad_words]


class RoundTripError(RuntimeError):
    """Decode did not reproduce the encoded data bit-exactly."""


# -- coder registry -----------------------------------------------------------

def _coupling_seed(seed: int, n_particles: int) -> int:
    return seed * 1000003 + n_particles


def make_context(coder: str, model, posterior, n_particles: int,
                 coupling_mode: str, seed: int,
                 index_precision: int | None = None) -> CoderContext:
    """Context plus per-cell coupling, shared by encode and decode sides."""
    kwargs = {} if index_precision is None else {"index_precision": index_precision}
    ctx = CoderContext(model, posterior, num_particles=n_particles, **kwargs)
    if coder == "cis":
        ctx.coupling = make_coupling(coupling_mode, n_particles, ctx.precision,
                                     _coupling_seed(seed, n_particles))
    elif coder == "csmc":
        ctx.coupling = make_smc_coupling(n_particles, ctx.precision,
                                         model.num_steps,
                                         _coupling_seed(seed, n_particles))
    return ctx


def encode_with(coder: str, msg: AnsMessage, sym, ctx: CoderContext) -> None:
    if coder == "elbo":
        bb_elbo_encode(msg, sym, ctx)
    elif coder == "is":
        bb_is_encode(msg, sym, ctx)
    elif coder == "cis":
        bb_cis_encode(msg, sym, ctx, ctx.coupling)
    elif coder == "ais":
        bb_ais_encode(msg, sym, ctx)
    elif coder == "ais-bitswap":
        bb_ais_bitswap_encode(msg, sym, ctx)
    elif coder == "smc":
        bb_smc_encode(msg, sym, ctx)
    elif coder == "csmc":
        bb_csmc_encode(msg, sym, ctx, ctx.coupling)
    else:
        raise ValueError(f"unknown coder {coder!r}")


def decode_with(coder: str, msg: AnsMessage, ctx: CoderContext):
    if coder == "elbo":
        return bb_elbo_decode(msg, ctx)
    if coder == "is":
        return bb_is_decode(msg, ctx)
    if coder == "cis":
        return bb_cis_decode(msg, ctx, ctx.coupling)
    if coder == "ais":
        return bb_ais_decode(msg, ctx)
    if coder == "ais-bitswap":
        return bb_ais_bitswap_decode(msg, ctx)
    if coder == "smc":
        return bb_smc_decode(msg, ctx)
    if coder == "csmc":
        return bb_csmc_decode(msg, ctx, ctx.coupling)
    raise ValueError(f"unknown coder {coder!r}")


def ideal_bits(coder: str, ctx: CoderContext, sym, rng: np.random.Generator,
               redraws: int) -> float:
    """The coder's variational bound for one symbol, redrawn and averaged."""
    if coder == "elbo":
        return negative_elbo(ctx, sym)
    if coder == "is":
        return iwae_bound_mean(ctx, sym, rng, redraws)
    if coder == "cis":
        return cis_estimator_mean(ctx, sym, ctx.coupling, rng, redraws)
    if coder in ("ais", "ais-bitswap"):
        return ais_bound_mean(ctx, sym, rng, redraws)
    if coder == "smc":
        return fivo_bound_mean(ctx, sym, rng, redraws)
    if coder == "csmc":
        return fivo_bound_mean(ctx, sym, rng, redraws)
    raise ValueError(f"unknown coder {coder!r}")


def coders_for(model) -> tuple[str, ...]:
    return MIXTURE_CODERS if model.kind == "mixture" else HMM_CODERS


# -- pad sizing ----------------------------------------------------------------

def find_min_pad(coder: str, ctx: CoderContext, symbols, pad_seed: int,
                 start: int = 64, cap: int = 1 << 22) -> int:
    """Smallest pad (in words) that encodes ``symbols`` without underflow.

    Doubles from ``start`` to bracket, then bisects; valid because the pad
    word stream is prefix-stable, so feasibility is monotone in the pad.
    """

    def works(pad: int) -> bool:
        msg = ans_init(pad_seed, pad)
        try:
            for sym in symbols:
                encode_with(coder, msg, sym, ctx)
        except AnsUnderflowError:
            return False
        return True

    hi = start
    while not works(hi):
        hi *= 2
        if hi > cap:
            raise AnsUnderflowError(f"no workable pad below {cap} words")
    lo = 0 if hi == start else hi // 2
    while lo < hi:
        mid = (lo + hi) // 2
        if works(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi


# -- cell runner ---------------------------------------------------------------

@dataclass
class Cell:
    model: object
    posterior: object
    dataset: np.ndarray
    coder: str
    n_particles: int
    seed: int
    coupling_mode: str
    redraws: int
    entropy: float
    dim: int = 1
    index_precision: int | None = None


# interleaved and coupled variants share their plain coder's bound, so their
# ideal values coincide cell for cell and need computing only once
_IDEAL_FAMILY = {"ais-bitswap": "ais", "csmc": "smc"}


def run_cell(cell: Cell, ideal_cache: dict | None = None) -> BitrateReport:
    ctx = make_context(cell.coder, cell.model, cell.posterior, cell.n_particles,
                       cell.coupling_mode, cell.seed, cell.index_precision)
    symbols = [_as_symbol(s) for s in cell.dataset]
    pad_seed = cell.seed * 1009 + _PAD_SEED_TAG + cell.n_particles
    prefix = symbols[:_PAD_SEARCH_PREFIX]
    pad = find_min_pad(cell.coder, ctx, prefix, pad_seed)

    while True:
        msg = ans_init(pad_seed, pad)
        initial = msg.copy()
        initial_bits = msg.bit_length
        total_first = None
        try:
            for k, sym in enumerate(symbols):
                encode_with(cell.coder, msg, sym, ctx)
                if k == 0:
                    total_first = msg.bit_length
        except AnsUnderflowError:
            pad *= 2
            continue
        break

    final_bits = msg.bit_length
    n = len(symbols)

    # round trip must restore both the data and the initial message
    decoded = [decode_with(cell.coder, msg, ctx) for _ in range(n)]
    decoded.reverse()
    for k, (got, want) in enumerate(zip(decoded, symbols)):
        if _as_symbol(got) != want:
            raise RoundTripError(
                f"{cell.coder} N={cell.n_particles}: symbol {k} decoded as "
                f"{got!r}, expected {want!r}")
    if msg != initial:
        raise RoundTripError(
            f"{cell.coder} N={cell.n_particles}: message not restored after decode")

    ideal = None
    if cell.redraws > 0:
        family = _IDEAL_FAMILY.get(cell.coder, cell.coder)
        key = (family, cell.n_particles, cell.seed, cell.redraws)
        if ideal_cache is not None and key in ideal_cache:
            ideal = ideal_cache[key]
        else:
            ideal = _dataset_ideal(cell, ctx)
            if ideal_cache is not None:
                ideal_cache[key] = ideal

    scale = n * cell.dim
    return BitrateReport(
        coder=cell.coder, n_particles=cell.n_particles,
        net_bps=(final_bits - initial_bits) / scale,
        total_bps=final_bits / scale,
        total_first=float(total_first),
        ideal_bps=ideal,
        entropy=cell.entropy,
        seed=cell.seed,
        pad_words=pad)


def _as_symbol(s):
    if np.isscalar(s) or isinstance(s, (int, np.integer)):
        return int(s)
    return tuple(int(v) for v in s)


def _dataset_ideal(cell: Cell, ctx: CoderContext) -> float:
    """Mean per-dimension bound over the dataset.

    Mixture symbols repeat, so the bound is evaluated once per distinct
    observation and averaged with multiplicities.
    """
    rng = np.random.default_rng([cell.seed, _IDEAL_SEED_TAG, cell.n_particles])
    if cell.model.kind == "mixture":
        values, counts = np.unique(np.asarray(cell.dataset), return_counts=True)
        total = 0.0
        for x, c in zip(values, counts):
            total += c * ideal_bits(cell.coder, ctx, int(x), rng, cell.redraws)
        return total / counts.sum()
    vals = [ideal_bits(cell.coder, ctx, np.asarray(sym), rng, cell.redraws)
            for sym in cell.dataset]
    return float(np.mean(vals)) / cell.dim


# -- experiments ---------------------------------------------------------------

def _dyadic(lo: int, hi: int) -> tuple[int, ...]:
    out = []
    n = lo
    while n <= hi:
        out.append(n)
        n *= 2
    return tuple(out)


def default_sweep(experiment: str, coder: str) -> tuple[int, ...]:
    if experiment in ("mixture_convergence", "cleanliness", "initial_bits"):
        if coder == "elbo":
            return (1,)
        if coder in ("is", "cis"):
            return _dyadic(1, 1024)
        if coder == "ais":
            return _dyadic(1, 512)
        if coder == "ais-bitswap":
            return _dyadic(4, 512)
    if experiment == "hmm_convergence":
        return (1,) if coder == "elbo" else _dyadic(1, 64)
    if experiment == "roundtrip_suite":
        return (1, 4, 64)
    raise ValueError(f"unknown experiment {experiment!r}")


def build_cells(config: RunConfig) -> list[Cell]:
    exp = config.experiment
    if exp not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {exp!r}; choose from {EXPERIMENTS}")

    if exp == "roundtrip_suite":
        return _roundtrip_cells(config)

    if exp in ("mixture_convergence", "cleanliness", "initial_bits"):
        model = gen_mixture(config.seed)
        dim = 1
        default_n = 1 if exp == "initial_bits" else 5000
    else:
        model = gen_hmm(config.seed)
        dim = model.num_steps
        default_n = 5000
    posterior = UniformPosterior(model.k_z, model.r)
    n = config.n if config.n is not None else default_n
    dataset = sample_dataset(model, n, config.seed)
    entropy = empirical_entropy(model, dataset)
    redraws = config.redraws if exp in ("cleanliness", "hmm_convergence") else 0

    coders = config.coders if config.coders is not None else coders_for(model)
    cells = []
    for coder in coders:
        sweep = config.n_sweep if config.n_sweep is not None else default_sweep(exp, coder)
        for n_particles in sweep:
            if coder == "elbo" and n_particles != 1:
                continue
            cells.append(Cell(model, posterior, dataset, coder, n_particles,
                              config.seed, config.coupling_mode, redraws,
                              entropy, dim))
    return cells


def _roundtrip_cells(config: RunConfig) -> list[Cell]:
    n = config.n if config.n is not None else 200
    cells = []

    mix = gen_mixture(config.seed)
    mix_post = UniformPosterior(mix.k_z, mix.r)
    mix_data = sample_dataset(mix, n, config.seed)
    mix_ent = empirical_entropy(mix, mix_data)
    hmm = gen_hmm(config.seed)
    hmm_post = UniformPosterior(hmm.k_z, hmm.r)
    hmm_data = sample_dataset(hmm, n, config.seed)
    hmm_ent = empirical_entropy(hmm, hmm_data)

    coders = config.coders if config.coders is not None else ALL_CODERS
    sweep = config.n_sweep if config.n_sweep is not None else (1, 4, 64)
    for coder in coders:
        for n_particles in sweep:
            if coder == "elbo" and n_particles != 1:
                continue
            if coder == "cis" and config.coupling_mode == "exhaustive":
                continue  # exhaustive pins N = 2**r; handled on micro models below
            if coder in MIXTURE_CODERS:
                cells.append(Cell(mix, mix_post, mix_data, coder, n_particles,
                                  config.seed, config.coupling_mode, 0, mix_ent, 1))
            if coder in HMM_CODERS and coder not in ("elbo", "is"):
                cells.append(Cell(hmm, hmm_post, hmm_data, coder, n_particles,
                                  config.seed, config.coupling_mode, 0, hmm_ent,
                                  hmm.num_steps))

    if "cis" in coders and config.coupling_mode == "exhaustive":
        # exhaustive coupling pins N = 2**r; cover it on micro models
        for r, k_z, k_x in ((2, 2, 2), (6, 16, 8)):
            micro = gen_mixture(config.seed, k_x=k_x, k_z=k_z, r=r)
            post = UniformPosterior(k_z, r)
            data = sample_dataset(micro, n, config.seed)
            ent = empirical_entropy(micro, data)
            cells.append(Cell(micro, post, data, "cis", 1 << r, config.seed,
                              "exhaustive", 0, ent, 1))
    return cells


def run_experiment(config: RunConfig) -> list[BitrateReport]:
    """Run every cell, verify round trips, and return (and maybe write) rows."""
    cells = build_cells(config)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            reports = list(pool.map(run_cell, cells))
    else:
        ideal_cache: dict = {}
        reports = [run_cell(cell, ideal_cache) for cell in cells]
    if config.out:
        write_csv(config.out, reports)
    return reports


def write_csv(path_or_buf, reports: list[BitrateReport]) -> None:
    own = isinstance(path_or_buf, str)
    buf = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            writer.writerow(rep.as_row())
    finally:
        if own:
            buf.close()


def csv_text(reports: list[BitrateReport]) -> str:
    buf = io.StringIO()
    write_csv(buf, reports)
    return buf.getvalue()


# -- dataset file format --------------------------------------------------------

_DS_MAGIC = b"DSET"


def write_dataset(path: str, dataset: np.ndarray, kind: str) -> None:
    """Length-prefixed little-endian uint16 symbol arrays."""
    arr = np.asarray(dataset)
    if arr.ndim == 1:
        arr = arr[:, None]
    with open(path, "wb") as fh:
        fh.write(_DS_MAGIC)
        fh.write(struct.pack("<BII", 0 if kind == "mixture" else 1,
                             arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<u2").tobytes())


def read_dataset(path: str) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _DS_MAGIC:
        raise ValueError("not a dataset file")
    kind_b, n, t = struct.unpack_from("<BII", data, 4)
    arr = np.frombuffer(data, dtype="<u2", count=n * t, offset=13).astype(np.int64)
    arr = arr.reshape(n, t)
    kind = "mixture" if kind_b == 0 else "hmm"
    if kind == "mixture":
        return arr[:, 0], kind
    return arr, kind
