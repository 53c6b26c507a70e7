from __future__ import annotations

import copy
import json

import pytest

from satdiff import ConfigError
from satdiff.manifest import (LEVEL_RULES, load_manifest, load_tree, parse_manifest,
                              reference_names, set_path)

BASE = {
    "scenario": "unit",
    "grid": {"domain": [-1.0, 1.0], "n": 32},
    "saturation": {"form": "power", "m": 2, "rho_max": 1.0},
    "potentials": {"V": {"preset": "quadratic"}},
    "initial": {"preset": "constant", "value": 0.4},
    "time": {"t_end": 0.01},
}

REFERENCE = ["ref-boltzmann-free", "ref-boltzmann-confined-m1", "ref-boltzmann-aggregation",
             "ref-porous-free-m1", "ref-porous-confined-aggregation", "ref-2d-confined",
             "gibbs-1d", "heat-1d", "bump-verify-1d", "sweep-cfl"]


def edited(path: str, value):
    return set_path(BASE, path, value)


def test_reference_names_are_packaged():
    names = reference_names()
    for name in REFERENCE:
        assert name in names


@pytest.mark.parametrize("name", REFERENCE)
def test_reference_manifests_parse(name):
    m = load_manifest(name)
    assert m.scenario == name


def test_reference_suite_spans_required_families():
    ms = [load_manifest(n) for n in REFERENCE[:6]]
    assert {m.config.energy.kind for m in ms} == {"boltzmann", "porous"}
    assert {m.config.pots.V.is_zero for m in ms} == {True, False}
    assert {m.config.pots.W.is_zero for m in ms} == {True, False}
    assert {m.source["saturation"]["m"] for m in ms} == {1, 2}


def test_defaults():
    m = parse_manifest(BASE)
    assert m.config.cfl == 0.5 and m.config.snapshot_every == 1
    assert m.verify == [] and m.diagnostics.nu == 0.5 and m.interaction_free


def test_load_tree_from_path(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(BASE))
    assert load_tree(path) == BASE
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_tree(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        load_tree("no-such-manifest")


@pytest.mark.parametrize("path, value, where", [
    ("time.cfl", 0, "time.cfl"),
    ("time.cfl", 1.5, "time.cfl"),
    ("time.t_end", -1.0, "time.t_end"),
    ("time.snapshot_every", 0.5, "time.snapshot_every"),
    ("grid.n", 2, "grid.n"),
    ("saturation.form", "cubic", "saturation.form"),
    ("saturation.rho_max", 0.0, "saturation.rho_max"),
    ("initial.preset", "spiral", "initial.preset"),
    ("initial.value", "half", "initial.value"),
    ("potentials.V", {"preset": "sextic"}, "potentials.V.preset"),
    ("grid.extra", 1, "grid.extra"),
])
def test_invalid_fields_name_their_path(path, value, where):
    with pytest.raises(ConfigError) as info:
        parse_manifest(edited(path, value))
    assert info.value.path == where


def test_missing_required_block():
    tree = copy.deepcopy(BASE)
    del tree["time"]
    with pytest.raises(ConfigError) as info:
        parse_manifest(tree)
    assert info.value.path == "time"


def test_initial_out_of_bounds_is_config_error():
    with pytest.raises(ConfigError) as info:
        parse_manifest(edited("initial.value", 1.5))
    assert info.value.path.startswith("initial")


def test_verify_block_validation():
    good = {"check": "caccioppoli", "vertex": [0.0], "r": 0.5, "tau": 0.01, "inner_r": 0.25,
            "k": "rho_max-omega/2"}
    for rule in LEVEL_RULES:
        parse_manifest(edited("verify", [dict(good, k=rule)]))
    parse_manifest(edited("verify", [dict(good, k=0.3)]))
    bad = [
        (dict(good, k="omega"), "verify[0].k"),
        (dict(good, k=True), "verify[0].k"),
        (dict(good, sign="*"), "verify[0].sign"),
        (dict(good, check="poincare"), "verify[0].check"),
        (dict(good, check="log"), "verify[0].c"),
        ({"check": "degiorgi", "k0": 0.2, "k1": 0.4}, "verify[0].k1"),
        ({"check": "geometric", "Y0": 0.1, "Z0": 0.1, "C": 1.0, "b": 2.0}, "verify[0].C"),
        (dict(good, vertex=[0.0, 0.0]), "verify[0].vertex"),
    ]
    for chk, where in bad:
        with pytest.raises(ConfigError) as info:
            parse_manifest(edited("verify", [chk]))
        assert info.value.path == where


def test_cascade_block():
    m = parse_manifest(edited("diagnostics", {"cascade": [{"vertex": [0.1], "R": 0.5}]}))
    assert m.diagnostics.cascades[0].vertex == (0.1,)
    with pytest.raises(ConfigError) as info:
        parse_manifest(edited("diagnostics", {"cascade": [{"vertex": [0.1]}]}))
    assert info.value.path == "diagnostics.cascade[0].R"


def test_set_path_copies():
    out = set_path(BASE, "time.cfl", 0.25)
    assert out["time"]["cfl"] == 0.25 and "cfl" not in BASE["time"]
    with pytest.raises(ConfigError):
        set_path(BASE, "nothing.here", 1)
