"""Order-independent seed derivation."""

import hashlib


def derive_seed(master: int, *path) -> int:
    """Stable 32-bit seed for a component path under a master seed."""
    key = f"{int(master)}/" + "/".join(str(p) for p in path)
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little")
