# Copyright 2026 The exitlab Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Smoke tests for the Python module."""

import json
import math

import numpy as np
import pytest

import exitlab


def tiny_config(out_dir):
    cfg = json.loads(exitlab.default_config())
    cfg["model"].update(num_layers=4, input_dim=4, hidden_dim=8, proto_dim=4)
    cfg["data"].update(input_dim=4, n_train=200, n_dev=50, n_test=100)
    cfg["train"].update(total_steps=40, batch_size=16, eval_every=20)
    cfg["taus"] = [0.0, 0.2, 0.5, 1.0]
    cfg["histogram_taus"] = [0.2]
    cfg["diagnose_layers"] = [1, 2]
    cfg["out_dir"] = str(out_dir)
    return json.dumps(cfg)


def test_metric_examples():
    assert exitlab.normalized_entropy([0.5, 0.5]) == pytest.approx(1.0)
    assert exitlab.normalized_entropy([1.0, 0.0]) == pytest.approx(0.0, abs=1e-9)
    assert exitlab.cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert exitlab.distance_ratio(0.0, 0.0) == 0.5
    assert exitlab.edr(0.5, 0.5, 1.0) == pytest.approx(0.5)
    assert exitlab.speedup_ratio([0, 10, 0, 0]) == pytest.approx(2.0)


def test_errors_map_to_python_exceptions():
    with pytest.raises(exitlab.NumericError):
        exitlab.cosine_distance([0, 0], [1, 0])
    with pytest.raises(exitlab.ShapeError):
        exitlab.cosine_distance([1, 0, 0], [1, 0])
    with pytest.raises(exitlab.ValidationError):
        exitlab.edr(0.5, 0.5, 0.0)
    assert issubclass(exitlab.ValidationError, exitlab.Error)


def test_generate_returns_arrays(tmp_path):
    splits = exitlab.generate(tiny_config(tmp_path))
    x, y = splits["train"]
    assert np.asarray(x).shape == (200, 4)
    assert set(y) <= {0, 1}
    again = exitlab.generate(tiny_config(tmp_path))
    np.testing.assert_array_equal(x, again["train"][0])


def test_config_hash_is_stable(tmp_path):
    cfg = tiny_config(tmp_path)
    assert exitlab.config_hash(cfg) == exitlab.config_hash(cfg)
    assert len(exitlab.config_hash(cfg)) == 40
    bad = json.loads(cfg)
    bad["model"]["bogus"] = 1
    with pytest.raises(exitlab.ValidationError):
        exitlab.config_hash(json.dumps(bad))


def test_pipeline(tmp_path):
    cfg = tiny_config(tmp_path)
    exitlab.gen(cfg)
    assert (tmp_path / "train.jsonl").exists()
    with pytest.raises(exitlab.IoError):
        exitlab.gen(cfg)

    report = exitlab.train(cfg)
    assert report["steps"] == 40
    ckpt = tmp_path / "final.ckpt"

    net = exitlab.Network(ckpt)
    assert net.num_layers == 4
    x_test, y_test = exitlab.generate(cfg)["test"]
    probs = net.layer_probs(x_test[0])
    assert len(probs) == 4
    assert all(math.isclose(float(np.sum(p)), 1.0) for p in probs)

    trace = net.infer(x_test[0], exitlab.make_policy("edr", tau=0.0))
    assert trace["exit_layer"] == 4
    assert len(trace["per_layer"]) == 4
    with pytest.raises(exitlab.ValidationError):
        net.infer(x_test[0], exitlab.make_policy("oracle"))

    rows = net.sweep(np.asarray(x_test), list(y_test), exitlab.make_policy("entropy"),
                     [0.1, 0.5])
    assert [r["tau"] for r in rows] == [0.1, 0.5]
    assert sum(rows[0]["exit_histogram"]) == len(y_test)

    sweeps = exitlab.sweep(cfg, ckpt)
    assert len(sweeps) == len(json.loads(cfg)["policies"])
    table = exitlab.compare(cfg, ckpt)
    assert {e["policy"] for e in table} >= {"edr", "entropy"}
    diag = exitlab.diagnose(cfg, ckpt)
    assert len(diag["correctness"]) == 2
    assert diag["spearman"] == []
    shifted = exitlab.shift(cfg, ckpt)
    assert shifted["after"]["tau"] == shifted["before"]["tau"]
    assert (tmp_path / "config.shift.json").exists()

    with pytest.raises(exitlab.IoError):
        exitlab.sweep(cfg, tmp_path / "absent.ckpt", overwrite=True)
