import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np
import pandas as pd

import config

logger = logging.getLogger("UrnLab")


def block_rng(seed, stream, block, step=None):
    """
    Generator for one block of one stream

    Args:
        seed: user seed
        stream: stream name from config.STREAMS
        block: block index
        step: optional iteration index for streams consumed once per iteration

    Returns:
        numpy.random.Generator seeded from SeedSequence(seed, spawn_key=(stream, [step,] block))
    """
    key = (config.STREAMS[stream], int(block)) if step is None else (config.STREAMS[stream], int(step), int(block))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def resolve_threads(threads=None):
    """Number of workers: explicit value, else config.THREADS, else CPU count"""
    if threads:
        return max(1, int(threads))
    if config.THREADS:
        return config.THREADS
    return os.cpu_count() or 1


def run_blocks(worker, total, seed, stream, threads=None, indexed=False, step=None):
    """
    Run worker(rng, size) over fixed-size blocks and concatenate the results
    in block order. The output depends on (seed, stream, total) only.

    Args:
        worker: callable (numpy.random.Generator, int) -> numpy array or tuple of arrays
        total: number of trajectories
        seed: user seed
        stream: stream name
        threads: worker cap
        indexed: also pass the index of the block's first trajectory as a third argument
        step: iteration index forwarded to block_rng

    Returns:
        numpy array (or tuple of arrays) of length total
    """
    if total < 1:
        raise ValueError(f"Number of trajectories must be positive, got {total}")
    sizes = [config.BLOCK_SIZE] * (total // config.BLOCK_SIZE)
    if total % config.BLOCK_SIZE:
        sizes.append(total % config.BLOCK_SIZE)

    def run(block):
        rng = block_rng(seed, stream, block, step)
        if indexed:
            return worker(rng, sizes[block], block * config.BLOCK_SIZE)
        return worker(rng, sizes[block])

    workers = min(resolve_threads(threads), len(sizes))
    logger.debug(f"Running {len(sizes)} blocks of stream '{stream}' on {workers} workers")
    if workers == 1:
        parts = [run(block) for block in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))

    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(column) for column in zip(*parts))
    return np.concatenate(parts)


def log_gamma_variates(rng, shape, size):
    """
    log of Gamma(shape) variates, valid for small shapes:
    Gamma(a) = Gamma(a+1) * U^(1/a), kept in log space so that shape 1/20 does not underflow
    """
    return np.log(rng.gamma(shape + 1.0, size=size)) + np.log(rng.random(size)) / shape


def format_fraction(value):
    """Exact rational as 'num/den'"""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_csv(frame, path, header_lines=None):
    """
    Write a DataFrame as CSV, optionally preceded by '# key=value' metadata lines

    Args:
        frame: pandas.DataFrame
        path: output path
        header_lines: dict of metadata written before the column header
    """
    ensure_parent(path)
    with open(path, 'w', newline='') as f:
        for key, value in (header_lines or {}).items():
            f.write(f"# {key}={value}\n")
        frame.to_csv(f, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")


def read_csv(path):
    """Read a CSV written by write_csv, skipping metadata lines"""
    return pd.read_csv(path, comment='#')


def write_json(data, path):
    ensure_parent(path)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, default=_json_default)
    logger.info(f"Wrote {path}")


def _json_default(value):
    if isinstance(value, Fraction):
        return format_fraction(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)
