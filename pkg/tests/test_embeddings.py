import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vocalbeat.embeddings import (EmbeddingTensor, layer_combine,
                                  read_embeddings, report_layer_weights,
                                  write_embeddings, write_features)
from vocalbeat.errors import (BadMagicError, CorruptFileError,
                              TruncatedFileError, UnsupportedVersionError)
from vocalbeat.spectral import FeatureSequence


def random_tensor(rng, layers=3, frames=7, dim=4, fps=50.0):
    data = rng.normal(0.0, 1.0, (layers, frames, dim)).astype(np.float32)
    return EmbeddingTensor(data, fps)


def test_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    e = random_tensor(rng)
    path = tmp_path / "a.sslb"
    write_embeddings(path, e)
    back = read_embeddings(path)
    assert back.data.tobytes() == e.data.tobytes()
    assert back.fps == np.float32(e.fps)
    assert (back.n_layers, back.n_frames, back.dim) == (3, 7, 4)

    # rewrite of a read tensor reproduces the file byte for byte
    path2 = tmp_path / "b.sslb"
    write_embeddings(path2, back)
    assert path2.read_bytes() == path.read_bytes()


def test_file_size_arithmetic(tmp_path):
    e = EmbeddingTensor(np.zeros((13, 500, 768), dtype=np.float32), 50.0)
    path = tmp_path / "a.sslb"
    write_embeddings(path, e)
    assert path.stat().st_size == 24 + 13 * 500 * 768 * 4


def test_edge_shapes(tmp_path):
    rng = np.random.default_rng(1)
    for shape in [(1, 1, 1), (1, 5, 3), (4, 1, 2)]:
        e = EmbeddingTensor(rng.normal(size=shape).astype(np.float32), 100.0)
        path = tmp_path / "e.sslb"
        write_embeddings(path, e)
        back = read_embeddings(path)
        assert back.data.shape == shape
        np.testing.assert_array_equal(back.data, e.data)


def _valid_file(tmp_path):
    e = random_tensor(np.random.default_rng(2))
    path = tmp_path / "v.sslb"
    write_embeddings(path, e)
    return path


def test_bad_magic(tmp_path):
    path = _valid_file(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"WHAT"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_embeddings(path)


def test_unsupported_version(tmp_path):
    path = _valid_file(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        read_embeddings(path)


def test_truncated_header(tmp_path):
    path = _valid_file(tmp_path)
    path.write_bytes(path.read_bytes()[:10])
    with pytest.raises(TruncatedFileError):
        read_embeddings(path)


def test_truncated_payload(tmp_path):
    path = _valid_file(tmp_path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(TruncatedFileError):
        read_embeddings(path)


def test_trailing_bytes(tmp_path):
    path = _valid_file(tmp_path)
    path.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(CorruptFileError):
        read_embeddings(path)


def test_error_classes_are_distinct(tmp_path):
    classes = {BadMagicError, UnsupportedVersionError, TruncatedFileError,
               CorruptFileError}
    assert len(classes) == 4
    for a in classes:
        others = classes - {a}
        assert not any(issubclass(a, b) for b in others)


def test_write_features_single_layer(tmp_path):
    f = FeatureSequence(np.arange(12.0).reshape(4, 3), 100.0)
    path = tmp_path / "f.sslb"
    write_features(path, f)
    back = read_embeddings(path)
    assert back.n_layers == 1
    assert back.fps == 100.0
    np.testing.assert_array_equal(back.data[0], f.frames.astype(np.float32))


def test_layer_combine_selector():
    rng = np.random.default_rng(3)
    e = random_tensor(rng, layers=4)
    out = layer_combine(e, [0.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(out.frames, e.data[2].astype(np.float64))
    assert out.fps == e.fps


def test_layer_combine_ones_sums():
    e = random_tensor(np.random.default_rng(4), layers=3)
    out = layer_combine(e, np.ones(3))
    np.testing.assert_allclose(out.frames, e.data.astype(np.float64).sum(0),
                               rtol=1e-12)


def test_layer_combine_midpoint():
    e = random_tensor(np.random.default_rng(5), layers=2)
    out = layer_combine(e, [0.5, 0.5])
    expected = 0.5 * (e.data[0].astype(np.float64)
                      + e.data[1].astype(np.float64))
    np.testing.assert_allclose(out.frames, expected, rtol=1e-12)


def test_layer_combine_weight_count_guard():
    e = random_tensor(np.random.default_rng(6), layers=3)
    with pytest.raises(ValueError):
        layer_combine(e, [1.0, 2.0])


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-4, max_value=4), st.floats(min_value=-4, max_value=4))
def test_layer_combine_linear_in_weights(a, b):
    e = random_tensor(np.random.default_rng(7), layers=2)
    wa = layer_combine(e, [a, 0.0]).frames
    wb = layer_combine(e, [0.0, b]).frames
    both = layer_combine(e, [a, b]).frames
    np.testing.assert_allclose(both, wa + wb, atol=1e-9)


def test_report_layer_weights_order():
    report = report_layer_weights(np.ones(13))
    layers = report["layers"]
    assert [x["layer"] for x in layers] == list(range(13))
    assert all(x["weight"] == 1.0 for x in layers)


def test_report_layer_weights_peak():
    trained = [0.758, 0.748, 0.761, 0.766, 0.749, 0.742, 0.739, 0.740,
               0.734, 0.740, 0.741, 0.745, 0.736]
    report = report_layer_weights(trained)
    weights = [x["weight"] for x in report["layers"]]
    assert len(weights) == 13
    assert int(np.argmax(weights)) == 3
    assert max(weights) == pytest.approx(0.766)


def test_embedding_tensor_validation():
    with pytest.raises(ValueError):
        EmbeddingTensor(np.zeros((2, 2)), 50.0)
    with pytest.raises(ValueError):
        EmbeddingTensor(np.full((1, 2, 2), np.nan, dtype=np.float32), 50.0)
    with pytest.raises(ValueError):
        EmbeddingTensor(np.zeros((1, 2, 2), dtype=np.float32), -1.0)
