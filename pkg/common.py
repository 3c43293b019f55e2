from typing import List, Optional, Set, Tuple, TypeVar
import numpy as np


T = TypeVar("T")

MASK64 = 0xFFFFFFFFFFFFFFFF

# splitmix64 constants, fixed so that seeds derived from a config are stable
# across releases
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MUL_1 = 0xBF58476D1CE4E5B9
MIX_MUL_2 = 0x94D049BB133111EB

STREAM_TAGS = {
    "fragment": 1,
    "overshoot": 2,
    "tagged": 3,
    "manyToOne": 4,
}


def str_to_list(input_str: str) -> List[int]:
    result: Set[int] = set()
    parts = input_str.split(',')

    for part in parts:
        if '-' in part:
            start, end = map(int, part.split('-'))
            result.update(range(start, end + 1))
        else:
            result.add(int(part))

    return sorted(result)


class RangeList:
    def __init__(self, initial_values: Optional[List[int]] = None):
        self.initial_values = initial_values
        self._range: List[Tuple[bool, List[int]]] = []

    def _append(self, l: List[int], expand: bool) -> None:
        self._range.append((expand, l))

    def exclude(self, l: List[int]) -> None:
        self._append(l, False)

    def filter_list(self, initial: List[T]) -> List[T]:
        applied = set(range(len(initial)))
        if self.initial_values is not None:
            applied &= set(self.initial_values)

        for expand, l in self._range:
            if expand:
                applied = applied | set(l)
            else:
                applied = applied - set(l)
        return [initial[x] for x in sorted(applied) if x < len(initial)]

    def replica_ids(self, replicas: int) -> List[int]:
        return self.filter_list(list(range(replicas)))


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * MIX_MUL_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MUL_2) & MASK64
    return z ^ (z >> 31)


def mix64(*words: int) -> int:
    """
    Fold any number of integers into one 64-bit value with the splitmix64
    finalizer. Each word is added to the running state after a golden-gamma
    step, so mix64(a, b) != mix64(b, a).
    """
    state = 0
    for w in words:
        state = (state + GOLDEN_GAMMA + (w & MASK64)) & MASK64
        state = _finalize(state)
    return state


def stream_seed(master_seed: int, replica_id: int, stream_tag: str) -> int:
    return mix64(master_seed, replica_id, STREAM_TAGS[stream_tag])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def replica_rng(master_seed: int, replica_id: int, stream_tag: str) -> np.random.Generator:
    return make_rng(stream_seed(master_seed, replica_id, stream_tag))


def fmt_float(x: float) -> str:
    # 17 significant digits round-trip every double
    return format(float(x), ".17g")
