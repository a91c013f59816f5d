"""Per-task seed derivation."""

import hashlib

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, task_id: str, salt: str = "") -> int:
    """
    Mix the configured seed with a task id.

    The result depends only on (seed, task_id, salt), so task streams do not
    depend on the order in which tasks are processed.
    """
    digest = hashlib.sha256(f"{salt}{task_id}".encode("utf-8")).digest()
    return (int(seed) & SEED_MASK) ^ int.from_bytes(digest[:8], "little")
