"""Shared fixtures: target systems, reference orbits, and a bank of trained nets.

Training runs are expensive, so nets are cached per (rates, seed) for the
whole session; the acceptance module reuses the same bank.
"""
import numpy as np
import pytest

from hetdyn.approx import TrainConfig, init_network, sample_dataset, train
from hetdyn.lv import build_lv
from hetdyn import pipeline

SYM = (0.6, 0.6, 0.6)
ASYM = (0.6, 0.9, 0.6)

ORBIT_PROFILE = dict(D=50_000, epochs=300, lr=1e-2, batch=1024,
                     orthant_hinge_weight=4.0, readout_refit=True)


@pytest.fixture(scope="session")
def lv_sym():
    return build_lv([1.0, 1.0, 1.0], SYM)


@pytest.fixture(scope="session")
def lv_asym():
    return build_lv([1.0, 1.0, 1.0], ASYM)


@pytest.fixture(scope="session")
def reference_bank():
    cache = {}

    def get(rates):
        if rates not in cache:
            system = build_lv([1.0, 1.0, 1.0], rates)
            ref = pipeline.reference_orbit(system)
            section = pipeline.target_section(system, ref)
            proxy = pipeline.cycle_proxy(ref, section)
            cache[rates] = (system, ref, section, proxy)
        return cache[rates]

    return get


def train_orbit_net(rates, seed, **overrides):
    """One orbit-profile training run (hinged, refit), deterministic per seed."""
    system = build_lv([1.0, 1.0, 1.0], rates)
    params = dict(ORBIT_PROFILE)
    params.update(overrides)
    cfg = TrainConfig(box=[(0.0, 1.0)] * 3, seed=seed, **params)
    X, Y = sample_dataset(system.field(), cfg.box, cfg.D, seed)
    net0 = init_network(3, 45, (15, 15, 15), seed=seed + 1)
    net, result = train(net0, (X, Y), cfg)
    return net, result


@pytest.fixture(scope="session")
def trained_bank():
    cache = {}

    def get(rates, seed):
        key = (rates, seed)
        if key not in cache:
            cache[key] = train_orbit_net(rates, seed)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def distilled_pair():
    """Self-distillation fixture: a random teacher net and a student trained on it."""
    teacher = init_network(3, 45, (15, 15, 15), seed=999)
    box = [(0.0, 1.0)] * 3
    cfg = TrainConfig(D=50_000, box=box, lr=1e-2, epochs=900, batch=1024,
                      seed=7, lr_min_frac=1e-5)
    X, Y = sample_dataset(teacher.field(), box, cfg.D, cfg.seed)
    student, result = train(init_network(3, 45, (15, 15, 15), seed=8), (X, Y), cfg)
    return teacher, student, result
