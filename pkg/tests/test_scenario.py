import json

import numpy as np
import pytest

from helpers import random_scenario
from offloadbargain.model import validate
from offloadbargain.scenario import (
    GeneratorSpec,
    ScenarioFormatError,
    dumps,
    generate,
    load,
    loads,
    save,
    spec_from_dict,
    spec_to_dict,
)


def test_same_seed_same_json():
    a = generate(GeneratorSpec(seed=7))
    b = generate(GeneratorSpec(seed=7))
    assert dumps(a) == dumps(b)
    assert dumps(a) != dumps(generate(GeneratorSpec(seed=8)))


def test_no_users_no_traffic():
    sc = generate(GeneratorSpec(mu_count=0, seed=3))
    assert sc.mno.s0 == 0.0
    assert all(a.s == 0.0 for a in sc.apos)


def test_hotspot_count_averages_200():
    spec = GeneratorSpec()
    counts = []
    for seed in range(100):
        sc = generate(GeneratorSpec(seed=seed, per_mu_traffic_choices=(1.0,)))
        # with unit traffic per user the totals count users
        counts.append(round(sum(a.s for a in sc.apos) * 1000))
    assert abs(np.mean(counts) - 200) <= 10
    assert spec.hotspot_probability == pytest.approx(0.8)


def test_traffic_totals_conserved():
    sc = generate(GeneratorSpec(seed=11, mu_count=400))
    total = sc.mno.s0 + sum(a.s for a in sc.apos)
    assert total > 0
    assert all(a.s >= 0 for a in sc.apos)


def test_generated_scenarios_validate():
    for seed in range(20):
        for n in (1, 5, 50):
            sc = generate(GeneratorSpec(seed=seed, n_apos=n, additive_cost=seed % 2 == 1))
            assert validate(sc) == []
            for a in sc.apos:
                assert a.b in (1.0, 2.0, 5.5, 11.0)
                assert 0.5 <= a.theta <= 4.0 and 0.5 <= a.w <= 1.5 and 0.05 <= a.c <= 0.45
            assert 0.5 <= sc.mno.theta0 <= 4.0


def test_field_streams_independent_of_n_apos():
    a = generate(GeneratorSpec(seed=5, n_apos=10))
    b = generate(GeneratorSpec(seed=5, n_apos=30))
    assert [x.theta for x in a.apos] == [x.theta for x in b.apos[:10]]
    assert [x.w for x in a.apos] == [x.w for x in b.apos[:10]]
    assert [x.c for x in a.apos] == [x.c for x in b.apos[:10]]
    assert a.mno.theta0 == b.mno.theta0


def test_round_trip_bit_exact(tmp_path, rng):
    for sc in (generate(GeneratorSpec(seed=1)), random_scenario(rng, 4, demand="pl", shape="exponential")):
        path = tmp_path / "s.json"
        save(sc, path)
        back = load(path)
        assert back == sc
        assert dumps(back) == path.read_text()


def test_seventeen_digit_float_survives(tmp_path, rng):
    sc = random_scenario(rng, 2)
    v = 0.12345678901234568
    sc = sc.replace_apo(0, w=v + 1.0, s=v)
    back = loads(dumps(sc))
    assert back.apos[0].s == v
    assert back.apos[0].w == v + 1.0


def test_missing_apos_key_named(rng):
    d = json.loads(dumps(random_scenario(rng, 2)))
    del d["apos"]
    with pytest.raises(ScenarioFormatError, match="apos"):
        loads(json.dumps(d))


def test_missing_nested_field_named(rng):
    d = json.loads(dumps(random_scenario(rng, 2)))
    del d["apos"][1]["theta"]
    with pytest.raises(ScenarioFormatError, match=r"apos\[1\]\.theta"):
        loads(json.dumps(d))


def test_wrong_type_named(rng):
    d = json.loads(dumps(random_scenario(rng, 2)))
    d["mno"]["s0"] = "lots"
    with pytest.raises(ScenarioFormatError, match=r"mno\.s0"):
        loads(json.dumps(d))


def test_malformed_json_has_line_context(rng):
    text = dumps(random_scenario(rng, 2)).replace('"theta0":', '"theta0"', 1)
    with pytest.raises(ScenarioFormatError, match=r"line \d+ column \d+"):
        loads(text)


def test_spec_dict_round_trip():
    spec = GeneratorSpec(seed=9, n_apos=3, ap_bandwidth_choices=(2.0, 4.0))
    assert spec_from_dict(spec_to_dict(spec)) == spec
    with pytest.raises(ValueError):
        spec_from_dict({"bogus": 1})


def test_bad_spec_rejected():
    with pytest.raises(ValueError):
        generate(GeneratorSpec(n_apos=0))
    with pytest.raises(ValueError):
        generate(GeneratorSpec(c_range=(0.1, 0.9), w_range=(0.5, 1.0)))
