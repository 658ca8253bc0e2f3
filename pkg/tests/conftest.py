"""Shared builders for the test suite: small models and tables that keep
closed-form stage arithmetic easy to do by hand."""

from __future__ import annotations

import pytest

from recshard import hardware, model


def make_table(hash_size=10_000, dim=64, pooling=4.0, truncation=32, bpe=4):
    return model.SparseFeatureSpec(
        hash_size=hash_size,
        embedding_dim=dim,
        mean_pooling=pooling,
        truncation=truncation,
        bytes_per_element=bpe,
    )


def make_model(tables=(), dense=16, bottom=(32,), top=(8,), batch=1000, interaction=None):
    return model.build_model(
        dense_count=dense,
        sparse=tuple(tables),
        bottom_widths=bottom,
        top_widths=top,
        interaction=interaction or model.concat_interaction(),
        batch_size=batch,
    )


@pytest.fixture
def tiny_model():
    # one table, lookups = 1000 * 4 = 4000, bytes = 4000 * 64 * 4
    return make_model(tables=(make_table(),))


@pytest.fixture
def cpu_platform():
    return hardware.platform_preset("CPU")


@pytest.fixture
def gpu_platform():
    return hardware.platform_preset("BigBasin32")


@pytest.fixture
def zion_platform():
    return hardware.platform_preset("ZionPrototype")
