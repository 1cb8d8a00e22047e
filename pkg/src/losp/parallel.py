"""Deterministic chunked thread mapping.

All parallelism in the package funnels through :func:`map_chunks`: a worker
computes results for a contiguous index range and writes them into slots that
no other worker touches, so the output is bit-identical for any thread count.
"""

from concurrent.futures import ThreadPoolExecutor


def chunk_ranges(n_items: int, n_chunks: int) -> list[tuple[int, int]]:
    """Split ``range(n_items)`` into at most ``n_chunks`` contiguous ranges."""
    n_chunks = max(1, min(n_chunks, n_items))
    step = -(-n_items // n_chunks)  # ceil division
    return [(lo, min(lo + step, n_items)) for lo in range(0, n_items, step)]


def map_chunks(worker, n_items: int, threads: int = 1) -> None:
    """Run ``worker(lo, hi)`` over contiguous chunks of ``range(n_items)``.

    ``worker`` must only write to disjoint per-index slots. With
    ``threads <= 1`` the chunks run serially in index order; otherwise they
    are dispatched to a thread pool. Results must not depend on chunking.
    """
    if n_items <= 0:
        return
    ranges = chunk_ranges(n_items, threads if threads > 1 else 1)
    if threads <= 1 or len(ranges) == 1:
        for lo, hi in ranges:
            worker(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in ranges]
        for fut in futures:
            fut.result()
