"""
Runs independent sampler chains on a bounded worker pool.

Each chain is strictly sequential and owns a Generator seeded from
SeedSequence([seed, chain]), and writes its own trace file, so outputs do
not depend on how many chains run at once. A failing chain is reported and
its siblings keep running.
"""

import asyncio
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

import directassign
import weaklimit
from config import RunConfig
from errors import InvalidConfigError
from evaluation import hamming_error, used_states
from run_manager import RunManager, Stopwatch, TraceRecord

SAMPLERS = {
    "hdp-hsmm-weak-limit": (weaklimit.init_state, weaklimit.gibbs_sweep),
    "hdp-hmm-equivalent": (weaklimit.init_state, weaklimit.gibbs_sweep),
    "hdp-hsmm-direct": (directassign.init_state, directassign.direct_sweep),
}


@dataclass
class ChainResult:
    chain: int
    sequence: int
    iterations: int
    hamming_error: Optional[float]
    used_states: int


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chain)]))


class ChainRunner:
    def __init__(self, config: RunConfig, sequences: Sequence[np.ndarray],
                 truths: Optional[Sequence[np.ndarray]], manager: RunManager, workers: int = 1):
        if config.sequence is not None and config.sequence >= len(sequences):
            raise InvalidConfigError(
                f"sequence {config.sequence} requested but the dataset has {len(sequences)}")
        self.config = config
        self.sequences = list(sequences)
        self.truths = list(truths) if truths is not None else None
        self.manager = manager
        self.workers = max(1, int(workers))

    def sequence_for(self, chain: int) -> int:
        if self.config.sequence is not None:
            return self.config.sequence
        return chain % len(self.sequences)

    def run_chain(self, chain: int) -> ChainResult:
        config = self.config
        init_state, sweep = SAMPLERS[config.model]
        seq = self.sequence_for(chain)
        data = self.sequences[seq]
        truth = self.truths[seq] if self.truths is not None else None
        rng = chain_rng(config.seed, chain)

        self.manager.start_chain(chain)
        state = init_state(config, data, rng)
        watch = Stopwatch()
        err, used = None, 0
        for it in range(1, config.iterations + 1):
            state = sweep(state, data, rng, verbose=config.verbose)
            labels = state.seg.to_frame_labels()
            err = hamming_error(labels, truth) if truth is not None else None
            used = used_states(labels, config.used_state_threshold)
            self.manager.log_record(TraceRecord(
                chain=chain, iteration=it, sequence=seq, hamming_error=err, used_states=used,
                num_segments=state.seg.num_segments, loglike=state.diagnostics.loglike,
                wall_ms=watch.lap_ms(),
            ))
        final = state.to_dict()
        final.update({"chain": chain, "sequence": seq, "model": config.model})
        self.manager.save_final(chain, final)
        print(f"[FIT] chain {chain} done: sequence={seq} used_states={used}"
              + (f" hamming={err:.3f}" if err is not None else ""))
        return ChainResult(chain=chain, sequence=seq, iterations=config.iterations,
                           hamming_error=err, used_states=used)

    async def _run_guarded(self, chain: int, sem: asyncio.Semaphore) -> ChainResult:
        async with sem:
            return await asyncio.to_thread(self.run_chain, chain)

    async def run(self) -> List:
        """Results in chain order; a failed chain's slot holds its exception."""
        print(f"[FIT] Running {self.config.chains} chain(s) of {self.config.iterations} "
              f"iterations on {self.workers} worker(s)...")
        sem = asyncio.Semaphore(self.workers)
        results = await asyncio.gather(*(self._run_guarded(c, sem) for c in range(self.config.chains)),
                                       return_exceptions=True)
        for chain, result in enumerate(results):
            if isinstance(result, BaseException):
                print(f"[FIT] [ERR] chain {chain} failed: {type(result).__name__}: {result}")
        return list(results)
