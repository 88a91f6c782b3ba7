"""Named, disjoint random substreams derived from a single run seed."""

import numpy as np

# Stream identifiers are part of the reproducibility contract; never renumber.
STREAMS = {
    "disturbances": 0,
    "participation": 1,
    "shifts": 2,
    "predictions": 3,
    "audit": 4,
}


def substream(seed, name, *key):
    """Return a counter-based (Philox) generator for one named stream.

    Extra integer ``key`` entries (e.g. the horizon ``T``) select further
    disjoint sub-substreams so that realizations can be keyed by more than
    the seed alone.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name], *map(int, key)))
    return np.random.Generator(np.random.Philox(ss))
