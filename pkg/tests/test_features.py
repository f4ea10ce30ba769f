"""Tests for schema handling, dataset IO and embedding lookups."""

import json

import numpy as np
import pytest

from swan import autodiff as ad
from swan.autodiff import backward
from swan.features import (ConfigError, EmbeddingSet, Example, Feature,
                           FeatureSchema, ParseError, SchemaError, embed,
                           encode_example, fit_numeric_boundaries,
                           load_dataset, write_dataset)


@pytest.fixture
def schema():
    return FeatureSchema([
        Feature("age_band", "categorical", "user", vocab=5),
        Feature("city", "categorical", "user", vocab=3),
        Feature("price", "numeric", "item", boundaries=(10.0, 20.0)),
        Feature("brand", "categorical", "item", vocab=4),
        Feature("theme", "categorical", "scene", vocab=3),
        Feature("hour", "categorical", "other", vocab=24),
    ])


def _example(scene="s1", label=1, **overrides):
    ex = Example(user={"age_band": 2, "city": 1},
                 item={"price": 15.0, "brand": 3, "theme": 0, "hour": 7},
                 scene_id=scene, label=label)
    ex.user.update(overrides.get("user", {}))
    ex.item.update(overrides.get("item", {}))
    return ex


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            FeatureSchema([Feature("x", "categorical", "user", vocab=2),
                           Feature("x", "numeric", "item", boundaries=(1.0,))])

    def test_unknown_kind_and_group(self):
        with pytest.raises(SchemaError):
            Feature("x", "ordinal", "user", vocab=2)
        with pytest.raises(SchemaError):
            Feature("x", "categorical", "context", vocab=2)

    def test_categorical_encode_and_oov(self, schema):
        feat = schema["brand"]
        assert feat.encode(3) == 3
        assert feat.encode(4) == feat.oov_index
        assert feat.encode(-1) == feat.oov_index

    def test_numeric_encode_buckets(self, schema):
        feat = schema["price"]
        assert feat.encode(5.0) == 0
        assert feat.encode(10.0) == 1  # boundary goes to the upper bucket
        assert feat.encode(15.0) == 1
        assert feat.encode(25.0) == 2

    def test_json_round_trip(self, schema):
        again = FeatureSchema.from_json(json.loads(json.dumps(schema.to_json())))
        assert [f.name for f in again] == [f.name for f in schema]
        assert again["price"].boundaries == schema["price"].boundaries

    def test_fit_numeric_boundaries_equal_frequency(self):
        sch = FeatureSchema([Feature("v", "numeric", "item")])
        examples = [Example(user={}, item={"v": float(i)}, scene_id="s", label=0)
                    for i in range(1, 11)]
        fitted = fit_numeric_boundaries(examples, sch, buckets=5)
        codes = [fitted["v"].encode(float(i)) for i in range(1, 11)]
        assert sorted(set(codes)) == [0, 1, 2, 3, 4]


class TestDatasetIO:
    def test_round_trip(self, tmp_path, schema):
        path = tmp_path / "data.jsonl"
        examples = [_example(), _example(scene="s2", label=0), _example(label=0)]
        write_dataset(examples, path)
        loaded = load_dataset(path, schema)
        assert len(loaded) == 3
        assert loaded[1].scene_id == "s2"
        assert [ex.label for ex in loaded] == [1, 0, 0]
        # Byte-for-byte stable on rewrite.
        path2 = tmp_path / "again.jsonl"
        write_dataset(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_label_names_line(self, tmp_path, schema):
        path = tmp_path / "data.jsonl"
        write_dataset([_example()], path)
        with open(path, "a") as fh:
            rec = {"user": {"age_band": 1, "city": 0},
                   "item": {"price": 1.0, "brand": 0, "theme": 0, "hour": 0},
                   "scene_id": "s9", "label": 2}
            fh.write(json.dumps(rec) + "\n")
        with pytest.raises(ParseError, match=":2:"):
            load_dataset(path, schema)

    def test_malformed_json_names_position(self, tmp_path, schema):
        path = tmp_path / "data.jsonl"
        path.write_text('{"user": {notjson}}\n')
        with pytest.raises(ParseError, match="data.jsonl:1:"):
            load_dataset(path, schema)

    def test_unknown_feature_name_is_schema_error(self, tmp_path, schema):
        path = tmp_path / "data.jsonl"
        ex = _example()
        ex.item["mystery"] = 1
        write_dataset([ex], path)
        with pytest.raises(SchemaError, match="mystery"):
            load_dataset(path, schema)

    def test_missing_feature_is_schema_error(self, tmp_path, schema):
        path = tmp_path / "data.jsonl"
        ex = _example()
        del ex.item["brand"]
        write_dataset([ex], path)
        with pytest.raises(SchemaError, match="brand"):
            load_dataset(path, schema)

    def test_oov_counted(self, tmp_path, schema):
        path = tmp_path / "data.jsonl"
        write_dataset([_example(), _example(item={"brand": 9})], path)
        loaded = load_dataset(path, schema)
        assert len(loaded) == 2
        assert loaded.oov_count == 1


class TestEmbedding:
    def test_user_width_forced_by_schema(self):
        sch = FeatureSchema([Feature("u", "categorical", "user", vocab=3)])
        rng = np.random.default_rng(0)
        tables = EmbeddingSet.create(rng, sch, ["s1"], dim=4)
        ex = Example(user={"u": 1}, item={}, scene_id="s1", label=0)
        bundle = embed(ex, tables, sch)
        assert bundle.e_user.shape == (4,)

    def test_group_separation(self, schema):
        rng = np.random.default_rng(1)
        tables = EmbeddingSet.create(rng, schema, ["s1"], dim=4)
        a = _example()
        b = _example(item={"brand": 1, "price": 2.0})
        ea = embed(a, tables, schema)
        eb = embed(b, tables, schema)
        np.testing.assert_array_equal(ea.e_user.data, eb.e_user.data)
        assert not np.array_equal(ea.e_other.data, eb.e_other.data)

    def test_unseen_scene_uses_oov_id_row_but_same_attr(self, schema):
        rng = np.random.default_rng(2)
        tables = EmbeddingSet.create(rng, schema, ["s1", "s2"], dim=4)
        known = embed(_example(scene="s1"), tables, schema)
        cold = embed(_example(scene="never_seen"), tables, schema)
        assert not np.array_equal(known.e_scene_id.data, cold.e_scene_id.data)
        np.testing.assert_array_equal(known.e_scene_attr.data, cold.e_scene_attr.data)
        np.testing.assert_array_equal(
            cold.e_scene_id.data, tables.scene_table.weights.data[-1])

    def test_embed_is_pure(self, schema):
        rng = np.random.default_rng(3)
        tables = EmbeddingSet.create(rng, schema, ["s1"], dim=8)
        one = embed(_example(), tables, schema)
        two = embed(_example(), tables, schema)
        for a, b in ((one.e_user, two.e_user), (one.e_other, two.e_other),
                     (one.e_scene_id, two.e_scene_id),
                     (one.e_scene_attr, two.e_scene_attr)):
            assert np.array_equal(a.data, b.data)

    def test_gradient_only_in_looked_up_rows(self, schema):
        rng = np.random.default_rng(4)
        tables = EmbeddingSet.create(rng, schema, ["s1"], dim=4)
        ex = _example()
        bundle = embed(ex, tables, schema)
        loss = ad.sum_all(ad.concat([bundle.e_user, bundle.e_scene_id,
                                     bundle.e_scene_attr, bundle.e_other]))
        backward(loss)
        enc = encode_example(ex, schema)
        for feat in schema:
            grad = tables.table(feat.name).weights.grad
            visited = enc[feat.name]
            for row in range(grad.shape[0]):
                if row == visited:
                    assert np.abs(grad[row]).sum() > 0
                else:
                    np.testing.assert_array_equal(grad[row], 0.0)

    def test_missing_table_is_config_error(self, schema):
        rng = np.random.default_rng(5)
        tables = EmbeddingSet.create(rng, schema, ["s1"], dim=4)
        del tables.feature_tables["brand"]
        with pytest.raises(ConfigError, match="brand"):
            embed(_example(), tables, schema)

    def test_concat_order_follows_schema_order(self):
        rng = np.random.default_rng(6)
        f1 = Feature("a", "categorical", "user", vocab=3)
        f2 = Feature("b", "categorical", "user", vocab=3)
        sch12 = FeatureSchema([f1, f2])
        sch21 = FeatureSchema([f2, f1])
        tables = EmbeddingSet.create(rng, sch12, ["s"], dim=4)
        ex = Example(user={"a": 1, "b": 2}, item={}, scene_id="s", label=0)
        e12 = embed(ex, tables, sch12).e_user.data
        tables21 = EmbeddingSet(sch21, 4, tables.feature_tables,
                                tables.scene_table, tables.scene_vocab)
        e21 = embed(ex, tables21, sch21).e_user.data
        np.testing.assert_array_equal(e12[:4], e21[4:])
        np.testing.assert_array_equal(e12[4:], e21[:4])
