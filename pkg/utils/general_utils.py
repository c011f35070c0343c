import os
import sys
import random
import logging

import numpy as np
import torch

DTYPE = torch.float64


def to_tensor(x):
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def seed_everything(seed):
    random.seed(seed)
    os.environ['PYTHONHASHSEED'] = str(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def stream_entropy(master_seed, stream_key, *indices):
    """
    Injective map (master_seed, stream_key, indices...) -> SeedSequence entropy.
    The key is spelled out byte by byte behind its length so that no two
    (key, indices) pairs share a stream.
    """
    key = stream_key.encode("utf-8")
    return [int(master_seed), len(key), *key, len(indices), *(int(i) for i in indices)]


def trial_rng(master_seed, stream_key, *indices):
    return np.random.default_rng(np.random.SeedSequence(stream_entropy(master_seed, stream_key, *indices)))


def init_logging(filename=None, debug=False):
    logging.root = logging.RootLogger('DEBUG' if debug else 'INFO')
    formatter = logging.Formatter('[%(asctime)s][%(filename)s][%(levelname)s] - %(message)s')
    stream_handler = logging.StreamHandler(sys.stdout)

    stream_handler.setFormatter(formatter)
    logging.root.addHandler(stream_handler)

    if filename is not None:
        file_handler = logging.FileHandler(filename)
        file_handler.setFormatter(formatter)
        logging.root.addHandler(file_handler)
