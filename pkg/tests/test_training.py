import math

import numpy as np
import pytest

from spanloc.data import SyntheticSpec, generate_dataset
from spanloc.errors import DataError, FormatError
from spanloc.model import GroundingModel, ModelConfig
from spanloc.optim import TrainConfig
from spanloc.training import (
    load_checkpoint,
    save_checkpoint,
    train,
    write_loss_trace,
)


def tiny_config(**kw):
    base = dict(
        d_model=8, hidden=4, d_video_in=6, vocab_size=16, max_t=16, max_n=6,
        d_boundary=8, d_context=8, local_scales=(1, 3), global_scales=(1, 2),
    )
    base.update(kw)
    return ModelConfig(**base)


def tiny_dataset(count=4, seed=0):
    spec = SyntheticSpec(frames=8, d_video_in=6, vocab_size=16, noise=0.1,
                         query_len=(2, 3), segment_len=(2, 4), seed=seed)
    return generate_dataset(spec, count)


def test_single_example_beats_uninformative_predictor():
    model = GroundingModel(tiny_config(), seed=0)
    dataset = tiny_dataset(count=1)
    result = train(model, dataset, TrainConfig(learning_rate=2e-3, batch_size=1, epochs=30, seed=0))
    assert result.losses[-1] < math.log(2)


def test_fixed_seed_gives_identical_traces():
    traces = []
    for _ in range(2):
        model = GroundingModel(tiny_config(), seed=1)
        result = train(model, tiny_dataset(), TrainConfig(epochs=2, batch_size=2, seed=3))
        traces.append(result.losses)
    assert traces[0] == traces[1]


def test_empty_dataset_rejected():
    model = GroundingModel(tiny_config(), seed=0)
    with pytest.raises(DataError):
        train(model, [], TrainConfig())


def test_loss_trace_csv_format(tmp_path):
    model = GroundingModel(tiny_config(), seed=2)
    result = train(model, tiny_dataset(), TrainConfig(epochs=1, batch_size=2, seed=0))
    path = write_loss_trace(result, tmp_path / "trace.csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,loss"
    assert len(lines) == len(result.losses) + 1
    step, loss = lines[1].split(",")
    assert int(step) == 1 and float(loss) > 0


class TestCheckpoint:
    def test_round_trip_restores_parameters_bitwise(self, tmp_path):
        model = GroundingModel(tiny_config(), seed=4)
        train(model, tiny_dataset(), TrainConfig(epochs=1, batch_size=2, seed=0))
        path = save_checkpoint(tmp_path / "model.bin", model, seed=4)
        restored, seed = load_checkpoint(path)
        assert seed == 4
        assert restored.config == model.config
        for name in model.store.names():
            assert np.array_equal(restored.store[name].data, model.store[name].data)

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        model = GroundingModel(tiny_config(), seed=5)
        a = save_checkpoint(tmp_path / "a.bin", model, seed=5)
        b = save_checkpoint(tmp_path / "b.bin", model, seed=5)
        assert a.read_bytes() == b.read_bytes()

    def test_truncated_payload_rejected(self, tmp_path):
        model = GroundingModel(tiny_config(), seed=6)
        path = save_checkpoint(tmp_path / "model.bin", model)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(FormatError, match="bytes"):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        model = GroundingModel(tiny_config(), seed=7)
        path = save_checkpoint(tmp_path / "model.bin", model)
        path.write_bytes(path.read_bytes() + b"extra")
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(FormatError):
            load_checkpoint(path)
