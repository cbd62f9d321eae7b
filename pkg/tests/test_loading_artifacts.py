import numpy as np
import pandas as pd
import pytest

from src.loading import ArtifactReader, ArtifactWriter
from src.transformation.triggers import apply_trigger, make_badnets_spec, make_blend_spec
from src.utils.errors import DatasetFormatError


@pytest.fixture
def writer(tmp_path) -> ArtifactWriter:
    return ArtifactWriter(tmp_path)


@pytest.fixture
def reader(tmp_path) -> ArtifactReader:
    return ArtifactReader(tmp_path)


def test_dataset_round_trip(writer, reader, tiny_dataset):
    writer.write_dataset(tiny_dataset, 'train')
    assert reader.has_dataset('train')
    restored = reader.read_dataset('train')
    np.testing.assert_array_equal(restored.images, tiny_dataset.images)
    np.testing.assert_allclose(restored.labels, tiny_dataset.labels, atol=1e-7)
    assert restored.split_tag == tiny_dataset.split_tag
    assert restored.num_classes == tiny_dataset.num_classes


def test_checkpoint_round_trip(writer, reader, small_model, random_batch):
    small_model.history = [{'epoch': 1.0, 'loss': 0.5}]
    writer.write_checkpoint(small_model, 'm0', {'seed': 7})
    assert reader.has_checkpoint('m0')
    model, manifest = reader.read_checkpoint('m0')
    images = random_batch(5).images
    np.testing.assert_allclose(model.predict_logits(images), small_model.predict_logits(images), atol=1e-6)
    assert manifest['metadata'] == {'seed': 7}
    assert model.history == small_model.history


def test_truncated_array_is_rejected(writer, reader, tiny_dataset, tmp_path):
    path = writer.write_dataset(tiny_dataset, 'train')
    data = (path / 'images.f32').read_bytes()
    (path / 'images.f32').write_bytes(data[:-4])
    with pytest.raises(DatasetFormatError) as excinfo:
        reader.read_dataset('train')
    assert excinfo.value.field == 'images.f32'


def test_missing_artifacts(reader):
    assert not reader.has_dataset('nope')
    with pytest.raises(FileNotFoundError):
        reader.read_dataset('nope')
    with pytest.raises(FileNotFoundError):
        reader.read_table('reports/nope.csv')


@pytest.mark.parametrize('spec', [make_badnets_spec(8, 8, 1, 4), make_blend_spec(8, 8, 1, 0.2, seed=1)])
def test_trigger_round_trip(writer, reader, spec):
    writer.write_trigger(spec, 'triggers/t.json')
    restored = reader.read_trigger('triggers/t.json')
    images = np.random.default_rng(0).random((3, 8, 8, 1)).astype(np.float32)
    np.testing.assert_allclose(apply_trigger(restored, images), apply_trigger(spec, images))


def test_table_and_json_io(writer, reader):
    df = pd.DataFrame({'model': ['a', 'b'], 'ba': [0.9, 0.8]})
    writer.write_table(df, 'reports/models.csv')
    pd.testing.assert_frame_equal(reader.read_table('reports/models.csv'), df)
    writer.write_json('reports/x.json', {'rate': 'inf', 'values': [1, 2]})
    assert reader.read_json('reports/x.json') == {'rate': 'inf', 'values': [1, 2]}


def test_artifact_info(writer, tiny_dataset, small_model):
    writer.write_dataset(tiny_dataset, 'train')
    writer.write_dataset(tiny_dataset.head(4), 'test')
    writer.write_checkpoint(small_model, 'm0')
    info = writer.get_artifact_info()
    assert info['datasets'] == {'count': 2, 'names': ['test', 'train']}
    assert info['models']['count'] == 1
