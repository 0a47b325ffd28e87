import numpy as np
import pytest

from disenreason.data import (
    AccountSequence,
    Dataset,
    DatasetFormatError,
    GeneratorConfig,
    build_interaction_matrix,
    generate_synthetic,
    prepare_sequence,
    read_dataset,
    read_ground_truth,
    split_train_test,
    write_dataset,
    write_ground_truth,
)


def small_config(**kw):
    defaults = dict(n_items=40, n_accounts=12, k_max=3, pool_size=5,
                    mean_len=10.0, sequences_per_account=2, seed=3)
    defaults.update(kw)
    return GeneratorConfig(**defaults)


class TestGenerator:
    def test_single_user_accounts_have_all_zero_labels(self):
        ds, truth = generate_synthetic(small_config(k_max=1))
        assert all(k == 1 for k in truth.k.values())
        for labels in truth.labels:
            assert all(u == 0 for u in labels)

    def test_mean_length_near_target(self):
        ds, _ = generate_synthetic(
            GeneratorConfig(n_items=200, n_accounts=400, mean_len=15.0, seed=1)
        )
        mean_len = np.mean([len(s.items) for s in ds.sequences])
        assert abs(mean_len - 15.0) < 2.0

    def test_determinism(self):
        a, ta = generate_synthetic(small_config())
        b, tb = generate_synthetic(small_config())
        assert a == b
        assert ta.k == tb.k and ta.labels == tb.labels

    def test_labels_index_disjoint_pools(self):
        ds, truth = generate_synthetic(small_config())
        # items labelled with different users never collide within an account
        by_account_user = {}
        for seq, labels in zip(ds.sequences, truth.labels):
            assert len(labels) == len(seq.items)
            for item, user in zip(seq.items, labels):
                assert 0 <= user < truth.k[seq.account]
                by_account_user.setdefault((seq.account, user), set()).add(item)
        for (account, user), items in by_account_user.items():
            for (a2, u2), other in by_account_user.items():
                if a2 == account and u2 != user:
                    assert not items & other

    def test_impossible_pools_rejected(self):
        with pytest.raises(ValueError):
            generate_synthetic(small_config(n_items=10, k_max=3, pool_size=5))


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        ds = Dataset(
            n_items=6,
            n_accounts=2,
            sequences=[
                AccountSequence(0, (1, 2, 3), 4),
                AccountSequence(1, (5,), 0),
                AccountSequence(0, (2, 2), 1),
            ],
        )
        path = tmp_path / "data.txt"
        write_dataset(ds, str(path))
        assert read_dataset(str(path)) == ds

    def test_out_of_range_item_rejected_with_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("#disenreason-v1 n_items=3 n_accounts=1\n0\t1 7\t2\n")
        with pytest.raises(DatasetFormatError, match="out of range"):
            read_dataset(str(path))

    def test_empty_sequence_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("#disenreason-v1 n_items=3 n_accounts=1\n0\t\t2\n")
        with pytest.raises(DatasetFormatError, match="line 2"):
            read_dataset(str(path))

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a header\n")
        with pytest.raises(DatasetFormatError, match="line 1"):
            read_dataset(str(path))

    def test_ground_truth_round_trip(self, tmp_path):
        _, truth = generate_synthetic(small_config())
        path = tmp_path / "gt.jsonl"
        write_ground_truth(truth, str(path))
        loaded = read_ground_truth(str(path))
        assert loaded.k == truth.k
        assert loaded.labels == truth.labels
        assert loaded.accounts == truth.accounts

    def test_generation_byte_determinism(self, tmp_path):
        for name in ("a", "b"):
            ds, truth = generate_synthetic(small_config())
            write_dataset(ds, str(tmp_path / f"{name}.txt"))
            write_ground_truth(truth, str(tmp_path / f"{name}.jsonl"))
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


class TestInteractionMatrix:
    def test_hand_enumerated_example(self):
        ds = Dataset(
            n_items=2,
            n_accounts=2,
            sequences=[
                AccountSequence(0, (0, 1), 1),
                AccountSequence(1, (1,), 0),
            ],
        )
        m = build_interaction_matrix(ds)
        assert m.pairs.tolist() == [[0, 0], [0, 1], [1, 1]]
        assert m.account_degrees.tolist() == [2, 1]
        assert m.item_degrees.tolist() == [1, 2]

    def test_empty_dataset(self):
        m = build_interaction_matrix(Dataset(n_items=3, n_accounts=2, sequences=[]))
        assert m.pairs.shape == (0, 2)
        assert m.account_degrees.tolist() == [0, 0]
        assert m.item_degrees.tolist() == [0, 0, 0]

    def test_duplicates_collapse(self):
        ds = Dataset(
            n_items=2, n_accounts=1,
            sequences=[AccountSequence(0, (1, 1, 1), 0)],
        )
        m = build_interaction_matrix(ds)
        assert m.pairs.tolist() == [[0, 1]]

    def test_targets_contribute_nothing(self):
        # the pair set is exactly the input-item incidence: a target only
        # appears if it is also an input item somewhere for that account
        ds, _ = generate_synthetic(small_config())
        m = build_interaction_matrix(ds)
        pair_set = {tuple(p) for p in m.pairs.tolist()}
        expected = {
            (seq.account, item) for seq in ds.sequences for item in seq.items
        }
        assert pair_set == expected


class TestSplit:
    def test_80_20_sizes(self):
        ds = Dataset(
            n_items=5, n_accounts=10,
            sequences=[AccountSequence(i, (0,), 1) for i in range(10)],
        )
        train, test = split_train_test(ds, 0.8, 0)
        assert len(train.sequences) == 8 and len(test.sequences) == 2

    def test_half_split_of_two(self):
        ds = Dataset(
            n_items=5, n_accounts=2,
            sequences=[AccountSequence(0, (0,), 1), AccountSequence(1, (2,), 3)],
        )
        train, test = split_train_test(ds, 0.5, 0)
        assert len(train.sequences) == 1 and len(test.sequences) == 1

    def test_partition_and_determinism(self):
        ds, _ = generate_synthetic(small_config())
        t1, e1 = split_train_test(ds, 0.8, 9)
        t2, e2 = split_train_test(ds, 0.8, 9)
        assert t1 == t2 and e1 == e2
        combined = sorted(t1.sequences + e1.sequences)
        assert combined == sorted(ds.sequences)

    def test_bad_ratio_rejected(self):
        ds = Dataset(n_items=2, n_accounts=1,
                     sequences=[AccountSequence(0, (0,), 1)])
        with pytest.raises(ValueError):
            split_train_test(ds, 1.0, 0)


class TestPrepareSequence:
    def test_truncation_keeps_most_recent(self):
        items = list(range(60))
        ids, valid = prepare_sequence(items, 50, pad_id=100)
        assert valid == 50
        assert ids.tolist() == list(range(10, 60))

    def test_left_padding(self):
        ids, valid = prepare_sequence([7, 8, 9], 50, pad_id=100)
        assert valid == 3
        assert ids[:47].tolist() == [100] * 47
        assert ids[47:].tolist() == [7, 8, 9]

    def test_exact_length_unchanged(self):
        items = list(range(50))
        ids, valid = prepare_sequence(items, 50, pad_id=100)
        assert valid == 50 and ids.tolist() == items
