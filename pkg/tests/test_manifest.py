import pytest

from spoofcm.errors import ManifestError
from spoofcm.manifest import (
    LA19_PARTITION,
    SeenPartition,
    UtteranceRecord,
    format_manifest,
    parse_asvspoof_protocol,
    parse_manifest,
    partition_seen_unseen,
    summarize,
)


def rec(utt, label="bonafide", algo="-", subset="train"):
    return UtteranceRecord(utt, f"a/{utt}.wav", label, algo, subset)


class TestParseManifest:
    def test_single_line(self):
        records = parse_manifest("t001\ta/t001.wav\tbonafide\t-\ttrain\n")
        assert records == [UtteranceRecord("t001", "a/t001.wav", "bonafide", "-", "train")]

    def test_comments_and_blank_lines_skipped(self):
        text = "# header\n\nt001\ta/t001.wav\tspoof\tA07\teval\n"
        records = parse_manifest(text)
        assert len(records) == 1
        assert records[0].algorithm == "A07"

    def test_order_preserved(self):
        text = format_manifest([rec("b"), rec("a"), rec("c")])
        assert [r.utt_id for r in parse_manifest(text)] == ["b", "a", "c"]

    def test_wrong_field_count_names_line(self):
        with pytest.raises(ManifestError, match="line 2"):
            parse_manifest("t001\ta.wav\tbonafide\t-\ttrain\nbad line\n")

    def test_spoof_with_dash_algorithm_rejected(self):
        with pytest.raises(ManifestError, match="inconsistent"):
            parse_manifest("t001\ta.wav\tspoof\t-\ttrain\n")

    def test_bonafide_with_algorithm_rejected(self):
        with pytest.raises(ManifestError):
            parse_manifest("t001\ta.wav\tbonafide\tA07\ttrain\n")

    def test_duplicate_utt_id_rejected(self):
        text = "t1\ta.wav\tbonafide\t-\ttrain\nt1\tb.wav\tbonafide\t-\ttrain\n"
        with pytest.raises(ManifestError, match="duplicate"):
            parse_manifest(text)

    def test_round_trip(self):
        records = [
            rec("t1"),
            rec("t2", "spoof", "A07", "eval"),
            rec("t3", "spoof", "S01", "dev"),
        ]
        text = format_manifest(records)
        assert parse_manifest(text) == records
        assert format_manifest(parse_manifest(text)) == text

    def test_la19_shaped_counts(self):
        # Table-1 shaped train subset: 2,580 bona fide + 22,800 spoof lines
        lines = []
        for i in range(2580):
            lines.append(f"b{i}\ta/b{i}.wav\tbonafide\t-\ttrain")
        for i in range(22800):
            lines.append(f"s{i}\ta/s{i}.wav\tspoof\tA0{1 + i % 6}\ttrain")
        counts = summarize(parse_manifest("\n".join(lines)))
        assert counts[("bonafide", "train")] == 2580
        assert counts[("spoof", "train")] == 22800

    def test_summarize_counts_by_label_subset(self):
        records = [rec("a"), rec("b", subset="dev"), rec("c", "spoof", "A01", "dev")]
        assert summarize(records) == {
            ("bonafide", "train"): 1,
            ("bonafide", "dev"): 1,
            ("spoof", "dev"): 1,
        }


class TestAsvspoofProtocol:
    def test_bonafide_line(self):
        records = parse_asvspoof_protocol("LA_0079 LA_T_1138215 - - bonafide\n")
        assert records[0].utt_id == "LA_T_1138215"
        assert records[0].label == "bonafide"
        assert records[0].algorithm == "-"

    def test_spoof_line(self):
        records = parse_asvspoof_protocol("LA_0079 LA_T_1271820 - A07 spoof\n")
        assert records[0].utt_id == "LA_T_1271820"
        assert records[0].label == "spoof"
        assert records[0].algorithm == "A07"

    def test_four_fields_names_line(self):
        with pytest.raises(ManifestError, match="line 1"):
            parse_asvspoof_protocol("LA_0079 LA_T_1 - bonafide\n")

    def test_unknown_key_token(self):
        with pytest.raises(ManifestError, match="unknown key"):
            parse_asvspoof_protocol("LA_0079 LA_T_1 - A07 genuine\n")

    def test_subset_and_paths(self):
        records = parse_asvspoof_protocol(
            "LA_0079 LA_T_1 - - bonafide\n", subset="dev", audio_dir="wav", audio_ext=".wav"
        )
        assert records[0].subset == "dev"
        assert records[0].audio_path == "wav/LA_T_1.wav"


class TestPartition:
    def test_la19_default_sets(self):
        assert LA19_PARTITION.seen == {"A16", "A19"}
        assert LA19_PARTITION.unseen == {"A10", "A11", "A12", "A13", "A14", "A15", "A18"}
        assert LA19_PARTITION.partial == {"A07", "A08", "A09", "A17"}

    def test_buckets(self):
        records = [
            rec("b1"), rec("b2"),
            rec("s1", "spoof", "A16", "eval"),
            rec("s2", "spoof", "A10", "eval"),
            rec("s3", "spoof", "A07", "eval"),
        ]
        buckets = partition_seen_unseen(records, LA19_PARTITION)
        assert [r.utt_id for r in buckets["seen"]] == ["b1", "b2", "s1"]
        assert [r.utt_id for r in buckets["unseen"]] == ["b1", "b2", "s2"]
        assert [r.utt_id for r in buckets["partial"]] == ["b1", "b2", "s3"]

    def test_no_spoof_records(self):
        records = [rec("b1"), rec("b2")]
        buckets = partition_seen_unseen(records, LA19_PARTITION)
        assert all(len(b) == 2 for b in buckets.values())

    def test_unassigned_tag_named_in_error(self):
        records = [rec("b1"), rec("s1", "spoof", "A99", "eval")]
        with pytest.raises(ManifestError, match="A99"):
            partition_seen_unseen(records, LA19_PARTITION)

    def test_every_bonafide_in_each_bucket_and_spoof_in_exactly_one(self):
        records = [rec(f"b{i}") for i in range(3)]
        records += [
            rec("s16", "spoof", "A16", "eval"),
            rec("s18", "spoof", "A18", "eval"),
            rec("s17", "spoof", "A17", "eval"),
        ]
        buckets = partition_seen_unseen(records, LA19_PARTITION)
        bona_ids = {f"b{i}" for i in range(3)}
        for bucket in buckets.values():
            assert bona_ids <= {r.utt_id for r in bucket}
        spoof_locations = [
            sum(1 for b in buckets.values() if any(r.utt_id == s for r in b))
            for s in ("s16", "s18", "s17")
        ]
        assert spoof_locations == [1, 1, 1]

    def test_overlapping_partition_rejected(self):
        with pytest.raises(ManifestError, match="overlap"):
            SeenPartition(seen={"A01"}, unseen={"A01"})
