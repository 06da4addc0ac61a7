import random
from contextlib import contextmanager
from typing import Iterator

import numpy as np
import torch


@contextmanager
def experiment_session(seed: int) -> Iterator[torch.Generator]:
    """Create a deterministic experiment session.

    Seeds every random source, pins torch to one thread with deterministic
    kernels and float64 defaults, and restores the previous settings on exit.

    Args:
        seed (int): The session seed.

    Yields:
        A torch generator seeded with `seed` for data shuffling.
    """
    previous_dtype = torch.get_default_dtype()
    previous_threads = torch.get_num_threads()
    previous_deterministic = torch.are_deterministic_algorithms_enabled()
    previous_random = random.getstate()
    previous_numpy = np.random.get_state()
    previous_torch = torch.random.get_rng_state()

    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.set_default_dtype(torch.float64)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)

    generator = torch.Generator().manual_seed(seed)
    try:
        yield generator
    finally:
        torch.use_deterministic_algorithms(previous_deterministic)
        torch.set_num_threads(previous_threads)
        torch.set_default_dtype(previous_dtype)
        random.setstate(previous_random)
        np.random.set_state(previous_numpy)
        torch.random.set_rng_state(previous_torch)
