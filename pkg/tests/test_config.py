import json

import pytest

from vlsmooth import config as cfgmod
from vlsmooth.errors import ConfigError


def test_defaults_validate():
    cfg = cfgmod.resolve()
    assert cfg["optimizer"]["kind"] == "ivon"
    assert cfgmod.grid_values(cfg) == ()


def test_overrides_parse_json_values():
    cfg = cfgmod.resolve({}, ["optimizer.lr=0.05", "model.hidden=[32, 16]", "smoothing.kind=ls",
                              "smoothing.alpha=0.1", "seeds=[3]"])
    assert cfg["optimizer"]["lr"] == 0.05
    assert cfg["model"]["hidden"] == [32, 16]
    assert cfg["smoothing"]["kind"] == "ls"
    assert cfg["seeds"] == [3]


@pytest.mark.parametrize("doc,overrides,pointer", [
    ({"optimizer": {"lr": 0}}, [], "/optimizer/lr"),
    ({"optimizer": {"bogus": 1}}, [], "/optimizer/bogus"),
    ({}, ["dataset.K=1"], "/dataset/K"),
    ({}, ["model.hidden=[600]"], "/model/hidden"),
    ({}, ["family=bernoulli"], "/family"),
    ({}, ["optimizer.kind=von"], "/optimizer/kind"),
    ({}, ["corruption.kind=datadep", "corruption.kappa=0.5", "corruption.beta=0.05"], "/corruption"),
    ({}, ["grid.kind=sam"], "/grid/kind"),
    ({}, ["grid.kind=ls", "grid.values=[1.0]"], "/grid/values"),
    ({}, ["seeds=[]"], "/seeds"),
    ({}, ["dataset.kind=idx"], "/dataset/train_images"),
    ({}, ["epochs=2", "probe_epochs=[3]"], "/probe_epochs"),
    ({}, ["noise.mode=exact"], "/noise/mode"),
    ({"dataset": 3}, [], "/dataset"),
])
def test_errors_carry_json_pointers(doc, overrides, pointer):
    with pytest.raises(ConfigError) as info:
        cfgmod.resolve(doc, overrides)
    assert info.value.pointer == pointer


def test_override_syntax_errors():
    with pytest.raises(ConfigError):
        cfgmod.parse_override("no-equals")
    with pytest.raises(ConfigError):
        cfgmod.resolve({}, ["nosuch.key=1"])


def test_grid_defaults():
    assert cfgmod.grid_values(cfgmod.resolve({}, ["grid.kind=ls"])) == (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)
    cfg = cfgmod.resolve({}, ["optimizer.kind=sam", "grid.kind=sam"])
    assert cfgmod.grid_values(cfg) == (0.0, 0.05, 0.1, 0.15, 0.2, 0.5)


def test_load(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"epochs": 3}))
    assert cfgmod.resolve(cfgmod.load(p))["epochs"] == 3
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        cfgmod.load(p)
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "missing.json")
