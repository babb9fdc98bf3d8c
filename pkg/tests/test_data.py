import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from petsfm.data import (
    CHANNELS,
    MissionProfile,
    SimilarityMatrix,
    SynthConfig,
    WindowDataset,
    build_manifest,
    cross_channel_classes,
    default_profiles,
    degradation_levels,
    dtw_distance,
    generate_cross_channel,
    generate_profile,
    load_dataset,
    read_recordings,
    select_ood_profile,
    similarity_matrix,
    split,
    split_indices,
    synthesize,
    window,
    write_recordings,
)
from petsfm.errors import ConfigError, DataError


def dtw_brute(a, b):
    """Minimum cost over every monotone warping path, by exhaustive recursion."""
    from functools import lru_cache

    @lru_cache(None)
    def best(i, j):
        c = abs(a[i] - b[j])
        if i == 0 and j == 0:
            return c
        opts = []
        if i > 0:
            opts.append(best(i - 1, j))
        if j > 0:
            opts.append(best(i, j - 1))
        if i > 0 and j > 0:
            opts.append(best(i - 1, j - 1))
        return c + min(opts)

    return best(len(a) - 1, len(b) - 1)


# -- windowing -------------------------------------------------------------

@pytest.mark.parametrize(
    "T,L,stride,count",
    [(1024, 512, 512, 2), (512, 512, 512, 1), (1536, 512, 256, 5), (10, 4, 4, 2), (12, 4, 2, 5), (30000, 512, 512, 58)],
)
def test_window_count(T, L, stride, count):
    w = window(np.zeros((3, T)), L, stride)
    assert w.shape == (count, 3, L)


def test_window_contents_and_short_series():
    s = np.arange(20.0).reshape(2, 10)
    w = window(s, 4, 3)
    np.testing.assert_array_equal(w[1], s[:, 3:7])
    np.testing.assert_array_equal(w[-1], s[:, 6:10])
    with pytest.raises(DataError):
        window(s, 11)


# -- DTW -------------------------------------------------------------------

def test_dtw_examples():
    assert dtw_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert dtw_distance([0, 0, 0], [1, 1, 1]) == 3.0
    # a stretched copy warps onto the original at no cost
    assert dtw_distance([1, 2, 3], [1, 1, 2, 2, 3, 3]) == 0.0
    assert dtw_distance([0], [1, 2, 3]) == 6.0
    assert dtw_distance([0, 5], [5, 0]) == 10.0
    assert dtw_distance([0, 0], [0, 0, 0]) == 0.0
    assert dtw_distance([0, 1], [2]) == 3.0
    with pytest.raises(DataError):
        dtw_distance([], [1.0])


small = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=7)


@settings(max_examples=200, deadline=None)
@given(small, small)
def test_dtw_matches_exhaustive_search(a, b):
    assert dtw_distance(a, b) == pytest.approx(dtw_brute(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(small, small)
def test_dtw_symmetric_and_non_negative(a, b):
    d = dtw_distance(a, b)
    assert d >= 0
    assert d == dtw_distance(b, a)
    assert dtw_distance(a, a) == 0.0


def test_similarity_matrix_symmetric_zero_diagonal_and_identical_profiles():
    profs = default_profiles(duration=2.0)[:2]
    twin = MissionProfile("TWIN", profs[0].mean_load, profs[0].bands, profs[0].transient_rate, profs[0].transient_amp, duration=2.0)
    sim = similarity_matrix([*profs, twin], reps=1, seed=3)
    M = sim.values
    np.testing.assert_array_equal(M, M.T)
    assert np.all(np.diag(M) == 0)
    assert M[0, 2] == 0.0  # identical definition, identical seed
    assert M[0, 1] > 0


def test_high_load_profile_selected_as_ood():
    sim = similarity_matrix(default_profiles(duration=3.0), reps=1, seed=0)
    assert select_ood_profile(sim) == "HWFET"


def test_ood_tie_goes_to_smallest_name():
    M = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
    assert select_ood_profile(SimilarityMatrix(M, ["c", "a", "b"])) == "a"
    M = np.array([[0, 2, 1], [2, 0, 1], [1, 1, 0]], dtype=float)
    assert select_ood_profile(SimilarityMatrix(M, ["z", "y", "x"])) == "y"


# -- splits ----------------------------------------------------------------

def _fake_dataset(per_cell=1250, profiles=("A", "B", "C"), n_levels=4):
    labels, pids = [], []
    for p, k in itertools.product(range(len(profiles)), range(n_levels)):
        labels.append(np.full(per_cell, k))
        pids.append(np.full(per_cell, p))
    labels, pids = np.concatenate(labels), np.concatenate(pids)
    windows = np.zeros((labels.size, 1, 2), dtype=np.float32)
    windows[:, 0, 0] = np.arange(labels.size)
    return WindowDataset(windows, labels, pids, {"profiles": list(profiles)})


def test_split_sizes_for_10000_in_distribution_windows():
    ds = _fake_dataset(per_cell=1250)  # two ID profiles x 4 levels x 1250 = 10000
    parts = split(ds, "C", 0.018, seed=0)
    assert len(parts["finetune"]) == 180
    assert np.all(np.bincount(parts["finetune"].labels) == 45)
    assert len(parts["pretrain"]) == 10000 - 180
    assert np.all(parts["pretrain"].labels == -1)
    assert len(parts["test"]) == 5000
    assert np.all(parts["test"].profile_ids == 2)


def test_split_partitions_without_overlap_and_is_seeded():
    ds = _fake_dataset(per_cell=100)
    a = split_indices(ds, "B", 0.1, seed=4)
    joined = np.concatenate([a["pretrain"], a["finetune"], a["test"]])
    assert np.array_equal(np.sort(joined), np.arange(len(ds)))
    assert np.all(ds.profile_ids[a["finetune"]] != 1)
    assert np.all(ds.profile_ids[a["pretrain"]] != 1)
    b = split_indices(ds, "B", 0.1, seed=4)
    c = split_indices(ds, "B", 0.1, seed=5)
    assert np.array_equal(a["finetune"], b["finetune"])
    assert not np.array_equal(a["finetune"], c["finetune"])


def test_fully_labeled_split_leaves_nothing_unlabeled():
    ds = _fake_dataset(per_cell=10)
    parts = split_indices(ds, "A", 1.0)
    assert parts["pretrain"].size == 0
    assert parts["finetune"].size == 80


def test_split_errors():
    ds = _fake_dataset(per_cell=10)
    with pytest.raises(DataError):
        split(ds, "nope")
    with pytest.raises(DataError):
        split(ds, "A", 0.01)  # rounds to zero labeled windows per level


# -- generator ---------------------------------------------------------------

def test_level_table():
    lv = degradation_levels(4)
    assert [x.level for x in lv] == [0, 1, 2, 3]
    assert lv[0].v_on == pytest.approx(2.97) and lv[-1].v_on == pytest.approx(3.12)
    assert all(a.v_on < b.v_on and a.r_th < b.r_th for a, b in zip(lv, lv[1:]))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_temperature_rise_grows_with_degradation(seed):
    prof = default_profiles(duration=5.0)[0]
    means = [generate_profile(prof, lv, seed)["t_ntc"].mean() for lv in degradation_levels(4)]
    assert all(a < b for a, b in zip(means, means[1:]))


def test_line_voltage_shift_grows_with_degradation():
    prof = default_profiles(duration=5.0)[2]
    shifts = []
    for lv in degradation_levels(4):
        rec = generate_profile(prof, lv, 1)
        # the on-state drop pulls v_ab against the sign of i_a - i_b
        shifts.append(-np.mean(rec["v_ab"] * np.sign(rec["i_a"] - rec["i_b"])))
    assert all(a < b for a, b in zip(shifts, shifts[1:]))


def test_heavier_load_runs_hotter():
    lv = degradation_levels(4)[1]
    light, heavy = default_profiles(duration=5.0)[0], default_profiles(duration=5.0)[3]
    assert generate_profile(heavy, lv, 0)["t_h"].mean() > generate_profile(light, lv, 0)["t_h"].mean()


def test_zero_load_decays_to_ambient():
    prof = MissionProfile("idle", 0.0, duration=3.0)
    rec = generate_profile(prof, degradation_levels(4)[2], 0, initial_rise=30.0)
    assert rec["t_h"][0] > 50.0
    assert np.all(rec["i_a"] == 0)
    tail = rec["t_h"][-200:]
    assert abs(tail.mean() - 25.0) < 0.5
    assert np.all(np.diff(rec["t_h"][:500]) < 0.1)


def test_three_phase_currents_sum_to_about_zero():
    rec = generate_profile(default_profiles(duration=2.0)[1], degradation_levels(4)[0], 9)
    total = rec["i_a"] + rec["i_b"] + rec["i_c"]
    assert np.abs(total).mean() < 0.05 * np.abs(rec["i_a"]).mean()


def test_generator_is_deterministic():
    prof, lv = default_profiles(duration=1.0)[2], degradation_levels(4)[3]
    a, b, c = (generate_profile(prof, lv, s) for s in (5, 5, 6))
    for ch in CHANNELS:
        np.testing.assert_array_equal(a[ch], b[ch])
    assert not np.array_equal(a["i_a"], c["i_a"])


def test_cross_channel_marginals_match_but_correlation_sign_encodes_class():
    prof = default_profiles(duration=3.0)[1]
    for k, (s01, s23) in enumerate(cross_channel_classes()):
        rec = generate_cross_channel(prof, k, seed=11)
        assert np.sign(np.corrcoef(rec["x0"], rec["x1"])[0, 1]) == s01
        assert np.sign(np.corrcoef(rec["x2"], rec["x3"])[0, 1]) == s23
        assert abs(np.corrcoef(rec["x4"], rec["x5"])[0, 1]) < 0.5


def test_synth_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(channels=("i_a", "bogus"))
    with pytest.raises(ConfigError):
        SynthConfig(label_mode="other")
    with pytest.raises(ConfigError):
        SynthConfig(profiles=default_profiles(duration=0.1), window_len=512)
    cfg = SynthConfig(profiles=default_profiles(duration=1.0), channels=("i_a", "t_ntc"), window_len=64)
    again = SynthConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


# -- recordings on disk --------------------------------------------------------

def test_csv_round_trip(tmp_path):
    cfg = SynthConfig(profiles=default_profiles(duration=0.5), channels=("i_a", "v_dc", "t_ntc"), window_len=100, seed=2)
    records, series = synthesize(cfg)
    assert len(records) == 16
    manifest = build_manifest(cfg, records)
    path = write_recordings(tmp_path, manifest, series)
    m, back = read_recordings(path)
    assert m["channels"] == ["i_a", "v_dc", "t_ntc"]
    for a, b in zip(series, back):
        np.testing.assert_array_equal(a, b)
    ds = load_dataset(path)
    assert len(ds) == 16 * 5
    assert sorted(set(ds.labels.tolist())) == [0, 1, 2, 3]
    assert ds.profile_names == ["NYCC", "LA92", "UDDS", "HWFET"]


def test_bad_csv_header_is_reported(tmp_path):
    cfg = SynthConfig(profiles=default_profiles(duration=0.2)[:2], n_levels=2, channels=("i_a",), window_len=50)
    records, series = synthesize(cfg)
    path = write_recordings(tmp_path, build_manifest(cfg, records), series)
    f = tmp_path / records[0]["file"]
    f.write_text(f.read_text().replace("t,i_a", "t,i_b", 1))
    with pytest.raises(DataError):
        load_dataset(path)
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing.json")
