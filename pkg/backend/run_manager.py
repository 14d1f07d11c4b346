import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

from config import save_settings


@dataclass
class TraceRecord:
    """One line of a chain's trace file."""
    chain: int
    iteration: int
    sequence: int
    hamming_error: Optional[float]
    used_states: int
    num_segments: int
    loglike: float
    wall_ms: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


class RunManager:
    """
    Output directory of a fit run:

        <out>/config.json
        <out>/traces/chain_<c>.jsonl    one TraceRecord per line, appended and flushed
        <out>/final/chain_<c>.json      final sampler state
    """

    def __init__(self, output_root):
        self.output_root = Path(output_root)
        self.traces_dir = self.output_root / "traces"
        self.final_dir = self.output_root / "final"
        for d in (self.output_root, self.traces_dir, self.final_dir):
            d.mkdir(parents=True, exist_ok=True)

    def trace_path(self, chain: int) -> Path:
        return self.traces_dir / f"chain_{chain}.jsonl"

    def final_path(self, chain: int) -> Path:
        return self.final_dir / f"chain_{chain}.json"

    def start_chain(self, chain: int):
        """Clears any trace left by an earlier run of the same chain id."""
        path = self.trace_path(chain)
        if path.exists():
            print(f"[RunManager] Clearing old trace: {path}")
            path.unlink()
        path.touch()

    def log_record(self, record: TraceRecord):
        with open(self.trace_path(record.chain), "a", encoding="utf-8") as f:
            f.write(record.to_json() + "\n")
            f.flush()

    def save_final(self, chain: int, state: dict) -> Path:
        path = self.final_path(chain)
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(state, f)
        tmp.replace(path)
        return path

    def save_config(self, settings: dict) -> Path:
        return save_settings(settings, self.output_root / "config.json")


def read_traces(traces_dir) -> List[dict]:
    """
    Every record of every chain_*.jsonl under `traces_dir`. A torn final line
    (interrupted run) is skipped with a warning.
    """
    traces_dir = Path(traces_dir)
    if not traces_dir.is_dir():
        raise FileNotFoundError(f"trace directory not found: {traces_dir}")
    records = []
    for path in sorted(traces_dir.glob("chain_*.jsonl")):
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    print(f"[RunManager] [WARN] Skipping unreadable line {lineno} of {path.name}")
    return records


def read_finals(final_dir) -> List[dict]:
    final_dir = Path(final_dir)
    if not final_dir.is_dir():
        return []
    states = []
    for path in sorted(final_dir.glob("chain_*.json")):
        with open(path, "r", encoding="utf-8") as f:
            states.append(json.load(f))
    return states


class Stopwatch:
    def __init__(self):
        self.start = time.perf_counter()

    def lap_ms(self) -> float:
        now = time.perf_counter()
        ms = (now - self.start) * 1000.0
        self.start = now
        return ms
