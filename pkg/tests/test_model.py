"""Tests for model assembly, prediction paths and the composed pipeline."""

import numpy as np
import pytest

from dataclasses import replace

from conftest import tiny_gen_config, tiny_model_config
from swan import autodiff as ad
from swan.aem import expert_selector
from swan.cfr import assemble_input, cfr_forward
from swan.datagen import generate
from swan.features import embed_indices, encode_example
from swan.head import decide
from swan.model import (ComponentFlags, ModelConfig, init_dnn_params,
                        init_swan_params, predict, predict_scores,
                        prepare_example, resolve_neighbors, swan_forward)
from swan.san import san_forward
from swan.srg import build_srg, profile_new_scene, similar_scenes


def _zero_all(params):
    for _, t in params.named_parameters():
        t.data = np.zeros_like(t.data)


class TestPredict:
    def test_zeroed_params_predict_half(self, tiny_data):
        result, graph = tiny_data
        params = init_swan_params(result.schema, graph.scene_ids,
                                  tiny_model_config(), seed=0)
        _zero_all(params)
        assert predict(params, graph, result.train[0]) == 0.5
        assert predict(params, graph, result.test[0]) == 0.5

    def test_zeroed_dnn_predicts_half(self, tiny_data):
        result, graph = tiny_data
        params = init_dnn_params(result.schema, graph.scene_ids,
                                 tiny_model_config(), seed=0)
        _zero_all(params)
        assert predict(params, None, result.test[0]) == 0.5

    def test_cold_scene_with_no_neighbors_still_predicts(self, tiny_data):
        result, graph = tiny_data
        config = tiny_model_config(min_weight=10 ** 6)
        params = init_swan_params(result.schema, graph.scene_ids, config, seed=1)
        ex = result.test[0]
        batch = prepare_example(params, graph, ex)
        assert batch.neighbor_ids == []
        value = predict(params, graph, ex)
        assert 0.0 < value < 1.0

    def test_prediction_in_unit_interval(self, tiny_data):
        result, graph = tiny_data
        params = init_swan_params(result.schema, graph.scene_ids,
                                  tiny_model_config(), seed=2)
        for ex in result.test[:10]:
            assert 0.0 < predict(params, graph, ex) < 1.0

    def test_known_scene_reprofile_consistency(self):
        # A scene whose training profile came from a single item profiles
        # identically through the cold-start path, so both routes must agree
        # bit for bit when the neighbor sets coincide.
        gen = generate(tiny_gen_config(items_per_scene=1, examples_per_scene=12,
                                       train_scenes=4, cold_scenes=1))
        graph = build_srg(gen.train, gen.schema, cc_threshold=0.01, buckets=3)
        params = init_swan_params(gen.schema, graph.scene_ids,
                                  tiny_model_config(), seed=3)
        ex = gen.train[0]
        known_path = predict(params, graph, ex)
        cold_path = predict(params, graph, ex, reprofile=True)
        known_neighbors = resolve_neighbors(
            graph, ex.scene_id, graph.profiles[ex.scene_id], params)
        re_profile = profile_new_scene(graph, ex.scene_id, [ex], gen.schema)
        cold_neighbors = resolve_neighbors(graph, ex.scene_id, re_profile, params)
        assert known_neighbors == cold_neighbors
        assert known_path == cold_path

    def test_predict_scores_aligns_with_predict(self, tiny_data):
        # Known scenes use the stored profile in both paths; a cold scene
        # matches only when its profiling inputs coincide, i.e. a single
        # example. Larger cold groups profile from all their examples.
        result, graph = tiny_data
        params = init_swan_params(result.schema, graph.scene_ids,
                                  tiny_model_config(), seed=4)
        subset = list(result.train[:9]) + [result.test[0]]
        scores = predict_scores(params, graph, subset)
        singles = np.array([predict(params, graph, ex) for ex in subset])
        np.testing.assert_allclose(scores, singles, atol=1e-12)

    def test_gates_collected_per_example(self, tiny_data):
        result, graph = tiny_data
        params = init_swan_params(result.schema, graph.scene_ids,
                                  tiny_model_config(), seed=5)
        subset = list(result.test[:9])
        _, gates = predict_scores(params, graph, subset, collect_gates=True)
        assert gates.shape == (9, params.config.n_aeg)
        assert np.all((gates > 0) & (gates < 1))


class TestComposedPipeline:
    def test_forward_matches_module_composition(self, tiny_data):
        """predict() must equal the hand-composed module pipeline."""
        result, graph = tiny_data
        config = tiny_model_config()
        params = init_swan_params(result.schema, graph.scene_ids, config, seed=6)
        ex = result.train[0]

        got = predict(params, graph, ex)

        # Compose the stages with the public module functions.
        profile = graph.profiles[ex.scene_id]
        neighbor_ids = [sid for sid, _ in similar_scenes(
            graph, profile, k=config.k_neighbors, min_weight=config.min_weight)]
        enc = encode_example(ex, params.schema)
        idx = {name: np.array([code]) for name, code in enc.items()}
        scene_idx = np.array([params.embeddings.scene_index(ex.scene_id)])
        with ad.no_grad():
            bundle = embed_indices(idx, scene_idx, params.embeddings,
                                   params.schema)
            e_target = ad.add(bundle.e_scene_id, bundle.e_scene_attr)
            sims = [ad.repeat_rows(params.embeddings.scene_table.lookup(
                np.array([params.embeddings.scene_vocab[sid]])), 1)
                for sid in neighbor_ids]
            san_out = san_forward(bundle.e_user, e_target, sims, params.san_mlp)
            scene_idx_map = {f.name: idx[f.name]
                             for f in params.schema.scene_features}
            e_cfr = cfr_forward(san_out.weights, scene_idx_map,
                                params.cfr_tables, neighbor_ids)
            e_in = assemble_input(bundle.e_other, bundle.e_user, san_out.vec,
                                  e_target, e_cfr)
            sel = expert_selector(bundle.e_user, san_out.vec, params.aem)
            aeg_outs = [expert(e_in) for expert in params.aem.aeg]
            seg_outs = [expert(e_in) for expert in params.aem.seg]
            yhat = decide(e_in, seg_outs, aeg_outs, sel.w, params.head)
        assert got == pytest.approx(float(yhat.data[0, 0]), abs=1e-10)


class TestAblationWiring:
    def test_srg_off_randomizes_neighbors_deterministically(self, tiny_data):
        result, graph = tiny_data
        config = replace(tiny_model_config(), flags=ComponentFlags(srg=False))
        params = init_swan_params(result.schema, graph.scene_ids, config, seed=7)
        sid = graph.scene_ids[0]
        n1 = resolve_neighbors(graph, sid, graph.profiles[sid], params)
        n2 = resolve_neighbors(graph, sid, graph.profiles[sid], params)
        assert n1 == n2
        ranked = [s for s, _ in similar_scenes(graph, graph.profiles[sid],
                                               k=config.k_neighbors,
                                               min_weight=config.min_weight)]
        assert len(n1) == len(ranked)

    def test_aem_off_fixes_gates_to_one(self, tiny_data):
        result, graph = tiny_data
        config = replace(tiny_model_config(), flags=ComponentFlags(aem=False))
        params = init_swan_params(result.schema, graph.scene_ids, config, seed=8)
        batch = prepare_example(params, graph, result.train[0])
        out = swan_forward(params, batch, training=True)
        np.testing.assert_array_equal(out.w.data, 1.0)

    def test_cfr_off_zeroes_cross_scene_block(self, tiny_data):
        result, graph = tiny_data
        base = tiny_model_config()
        config_on = base
        config_off = replace(base, flags=ComponentFlags(cfr=False))
        on = init_swan_params(result.schema, graph.scene_ids, config_on, seed=9)
        off = init_swan_params(result.schema, graph.scene_ids, config_off, seed=9)
        ex = result.train[0]
        b_on = prepare_example(on, graph, ex)
        b_off = prepare_example(off, graph, ex)
        d = base.embed_dim
        e_in_on = swan_forward(on, b_on).e_in.data
        e_in_off = swan_forward(off, b_off).e_in.data
        # Identical up to the last block, where CFR is zeroed out.
        np.testing.assert_array_equal(e_in_on[:, :-d], e_in_off[:, :-d])
        assert not np.array_equal(e_in_on[:, -d:], e_in_off[:, -d:])


class TestConfigJson:
    def test_model_config_round_trip(self):
        config = replace(tiny_model_config(), flags=ComponentFlags(loss_cos=False))
        again = ModelConfig.from_json(config.to_json())
        assert again == config
