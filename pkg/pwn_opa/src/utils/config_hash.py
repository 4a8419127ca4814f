import hashlib
import json

import numpy as np


def config_hash(params):

    '''
    Returns the SHA-256 hex digest of a configuration mapping.

    The mapping is dumped as canonical JSON (sorted keys, no whitespace) so that
    equal configurations hash equally regardless of key order.
    '''

    canonical = json.dumps(params, sort_keys=True, separators=(',', ':'), default=str)

    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def derive_seed(*keys):

    ''' Deterministic 32-bit seed derived from a sequence of integers. '''

    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1)

    return int(state[0])
