"""Random gate/model combinations shared by the property and acceptance suites."""
import math

import numpy as np

from qptdecoh import channels as ch
from qptdecoh import decoherence as de


def random_gate(rng):
    s = 2 * math.pi * rng.uniform(5e6, 50e6)
    kind = rng.choice([ch.IDENTITY, ch.SQRT_ISWAP, ch.XY, ch.DETUNED_IDLE])
    t = rng.uniform(1e-9, 60e-9)
    if kind == ch.IDENTITY:
        return ch.GateSpec.identity(t)
    if kind == ch.SQRT_ISWAP:
        return ch.GateSpec.sqrt_iswap(s)
    if kind == ch.XY:
        return ch.GateSpec.xy(s, t)
    return ch.GateSpec.detuned_idle(s, s * rng.uniform(10, 40) * rng.choice([-1, 1]), t)


def random_models(rng, spec, max_rate=5e7):
    models = []
    if rng.random() < 0.7:
        gd1, gd2 = rng.uniform(0, max_rate, 2)
        gu1, gu2 = rng.uniform(0, 0.5, 2) * (gd1, gd2)
        pd1, pd2 = rng.uniform(0, max_rate, 2)
        models.append(de.LocalBloch(gd1, gu1, 1 / ((gd1 + gu1) / 2 + pd1),
                                    gd2, gu2, 1 / ((gd2 + gu2) / 2 + pd2)))
    if rng.random() < 0.5:
        models.append(de.CorrelatedDephasing(*rng.uniform(0, max_rate, 2), rng.uniform(-1, 1)))
    if rng.random() < 0.5:
        if spec.kind == ch.DETUNED_IDLE:
            models.append(de.DetunedNoisyCoupling(rng.uniform(0, max_rate)))
        else:
            models.append(de.NoisyCoupling(rng.uniform(0, max_rate)))
    return models


def random_case(seed):
    rng = np.random.default_rng(seed)
    spec = random_gate(rng)
    return spec, random_models(rng, spec)
