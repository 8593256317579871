"""Shared fixtures: deterministic datasets built once per session."""

import pytest

import datagen
from branchrules.dataset import load_csv, one_hot_encode


@pytest.fixture(scope="session")
def ttt_csv_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "tictactoe.csv"
    path.write_text(datagen.tictactoe_csv_text(), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def ttt_raw(ttt_csv_path):
    return load_csv(ttt_csv_path, label_column="class", positive_class="positive")


@pytest.fixture(scope="session")
def ttt(ttt_raw):
    return one_hot_encode(ttt_raw)


@pytest.fixture(scope="session")
def xor():
    return datagen.xor_dataset()


@pytest.fixture(scope="session")
def spect():
    return datagen.spect_like_dataset()


@pytest.fixture(scope="session")
def masking():
    return datagen.masking_dataset()


@pytest.fixture(scope="session")
def single_feature():
    return datagen.single_feature_dataset()
