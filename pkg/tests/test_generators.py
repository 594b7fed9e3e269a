from fractions import Fraction

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from v6iot.addresses import Prefix, parse_address
from v6iot.generators import (ActivePartitionGenerator, DensityFillUpGenerator, EntropyModelGenerator,
                              InsufficientSeeds, Technique, UniformRandomGenerator, import_external)
from v6iot.generators.base import check_addresses
from v6iot.generators.density import find_regions
from v6iot.generators.partition import PartitionTree, active_partition_step, allocate

BASE = parse_address("2001:db8::")

ALL = [DensityFillUpGenerator, EntropyModelGenerator, UniformRandomGenerator, ActivePartitionGenerator]


@pytest.mark.parametrize("cls", ALL)
def test_estimator_contract(cls):
    gen = cls(budget=10, rng_seed=4)
    params = gen.get_params()
    assert params["budget"] == 10 and params["rng_seed"] == 4
    assert clone(gen).get_params() == params
    with pytest.raises(NotFittedError):
        gen.generate()
    seeds = [BASE + i for i in range(40)]
    assert gen.fit(seeds) is gen
    out = gen.generate()
    assert out.run.technique is gen.technique
    assert out.run.emitted_count == len(out) <= 10
    assert not set(out) & set(seeds)
    assert len(set(out)) == len(out)


@pytest.mark.parametrize("cls", ALL)
def test_same_seed_same_output(cls):
    seeds = [BASE + (i * 17) for i in range(40)]
    a = cls(budget=25, rng_seed=9).fit_generate(seeds).addresses
    b = cls(budget=25, rng_seed=9).fit_generate(seeds).addresses
    assert a == b


def test_check_addresses_accepts_mixed_input():
    arr = check_addresses(["2001:db8::1", BASE + 1, np.int64(5)])
    assert list(arr) == [5, BASE + 1]
    with pytest.raises(InsufficientSeeds):
        check_addresses([1], min_count=2)
    with pytest.raises(TypeError):
        check_addresses([1.5])


def test_density_fills_dense_region_first():
    # 8 of 16 in one /124, 2 scattered elsewhere
    dense = [BASE + i for i in range(0, 16, 2)]
    seeds = dense + [BASE + (1 << 40), BASE + (1 << 60)]
    regions = find_regions(seeds, 1 / 16, 1)
    assert regions[0].wildcards == (31,) and regions[0].seed_count == 8
    out = DensityFillUpGenerator(budget=8, max_wildcards=1).fit_generate(seeds).addresses
    assert sorted(out) == [BASE + i for i in range(1, 16, 2)]


def test_density_zero_budget_and_bad_params():
    seeds = [BASE, BASE + 1]
    assert DensityFillUpGenerator(budget=0).fit_generate(seeds).addresses == []
    with pytest.raises(ValueError):
        DensityFillUpGenerator(min_density=0).fit(seeds)


def test_entropy_model_respects_constant_positions():
    # nybbles 29 and 30 vary, each uniformly over 16 values; 64 of 256 pairs seeded
    seeds = [BASE + (a << 8) + (((a * 5 + k) % 16) << 4) for a in range(16) for k in range(4)]
    gen = EntropyModelGenerator(budget=500, rng_seed=1).fit(seeds)
    assert gen.entropy_[0] == 0 and gen.entropy_[31] == 0
    assert gen.entropy_[29] == pytest.approx(4.0) and gen.entropy_[30] == pytest.approx(4.0)
    out = gen.generate().addresses
    assert all(a & ~0xFF0 == BASE for a in out)
    # only the 192 unseeded pairs can be emitted
    assert len(out) == 192
    with pytest.raises(InsufficientSeeds):
        EntropyModelGenerator().fit(seeds[:5])


def test_uniform_stays_in_prefix():
    out = UniformRandomGenerator(budget=50, prefix="2001:db8::/120").fit_generate([BASE]).addresses
    p = Prefix.parse("2001:db8::/120")
    assert len(out) == 50 and all(p.contains(a) for a in out) and BASE not in out


def test_external_import_keeps_first_position(tmp_path):
    f = tmp_path / "list.txt"
    f.write_text("2001:db8::2\n2001:db8::1\n2001:db8::2\n")
    sl = import_external(f, "tool", "TUMHitlist")
    assert sl.addresses == [BASE + 2, BASE + 1]
    assert sl.run.technique is Technique.ExternalImport and str(sl.run.tag) == "Generator:tool@TUMHitlist"


def test_allocate_largest_remainder():
    assert allocate({"a": Fraction(1), "b": Fraction(1), "c": Fraction(1)}, 10) == {"a": 4, "b": 3, "c": 3}
    assert allocate({"a": Fraction(11, 12), "b": Fraction(1, 12)}, 120) == {"a": 110, "b": 10}
    # a saturated leaf hands its share on
    assert allocate({"a": Fraction(1), "b": Fraction(1)}, 10, {"a": 2, "b": 100}) == {"a": 2, "b": 8}


TWO_REGIONS = [BASE, BASE + 0x111, BASE + (1 << 64), BASE + (1 << 64) + 0x111]


def _two_region_tree():
    # one bit of entropy on nybbles 15, 29, 30, 31: the tie splits on 15,
    # leaving two leaves of 4096 addresses each
    return PartitionTree.from_seeds(TWO_REGIONS, leaf_size=2)


def test_partition_feedback_shifts_budget():
    tree = _two_region_tree()
    leaves = tree.leaves()
    assert len(leaves) == 2
    assert all(leaf.size == 4096 for leaf in leaves)
    first = tree.step(20)
    assert sorted(sum(leaf.contains(a) for a in first) for leaf in leaves) == [10, 10]
    hits = {leaves[0].node_id: 10, leaves[1].node_id: 0}
    nxt, updated = active_partition_step(tree, hits, 120)
    assert tree.rounds == 1  # input untouched
    per_leaf = {leaf.node_id: sum(leaf.contains(a) for a in nxt) for leaf in updated.leaves()}
    assert per_leaf[leaves[0].node_id] == 110 and per_leaf[leaves[1].node_id] == 10


def test_partition_rejects_impossible_feedback():
    tree = _two_region_tree()
    with pytest.raises(ValueError):
        tree.apply_feedback({tree.leaves()[0].node_id: 3})


def test_partition_generator_uses_feedback_fn():
    live = {a for a in range(BASE, BASE + 0x1000)}  # the whole first region answers
    gen = ActivePartitionGenerator(budget=400, step_budget=40, leaf_size=2, rng_seed=2).fit(TWO_REGIONS)
    out = gen.generate(lambda batch: {a for a in batch if a in live}).addresses
    assert len(out) == 400
    # uniform would split 200/200; feedback pushes later rounds into the live leaf
    assert sum(a in live for a in out) > 300
