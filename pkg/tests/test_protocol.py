import json
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofbench.errors import InvalidInputError, ProtocolParseError
from spoofbench.protocol import (SplitPlan, TrialRecord, make_split, pair_for_enhancement,
                                 parse_protocol, parse_protocol_lines, write_protocol,
                                 write_split)


def test_parse_examples():
    recs = parse_protocol_lines(["LA_0079 LA_T_1138215 - - bonafide",
                                 "LA_0079 LA_T_1271820 - A01 spoof"])
    assert recs[0] == TrialRecord("LA_0079", "LA_T_1138215", "-", "bonafide")
    assert (recs[1].system_id, recs[1].key) == ("A01", "spoof")


def test_four_fields_names_line(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("LA_0079 LA_T_1 - - bonafide\n\nLA_0079 LA_T_2 - A01\n")
    with pytest.raises(ProtocolParseError, match=r"p\.txt:3:") as info:
        parse_protocol(path)
    assert info.value.lineno == 3


def test_empty_and_bad_keys(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("\n\n")
    with pytest.raises(InvalidInputError):
        parse_protocol(path)
    with pytest.raises(ProtocolParseError, match="key"):
        parse_protocol_lines(["a b - - maybe"])
    with pytest.raises(ProtocolParseError, match="system"):
        parse_protocol_lines(["a b - A01 bonafide"])
    with pytest.raises(ProtocolParseError, match="duplicate"):
        parse_protocol_lines(["a b - - bonafide", "a b - A01 spoof"])


def test_2021_key_files_with_extra_columns():
    lines = ["LA_0009 LA_E_9332881 alaw ita_tx A07 spoof notrim eval",
             "LA_0009 LA_E_1000001 - - - bonafide notrim eval",
             "LA_0043 DF_E_2000026 mp3m4a asvspoof A17 spoof notrim eval traditional_vocoder"]
    with pytest.warns(UserWarning, match="extra protocol columns"):
        recs = parse_protocol_lines(lines)
    assert [(r.system_id, r.key) for r in recs] == [("A07", "spoof"), ("-", "bonafide"),
                                                    ("A17", "spoof")]


def test_write_parse_round_trip(tmp_path):
    recs = parse_protocol_lines(["LA_0079 LA_T_1 - - bonafide", "LA_0080 LA_T_2 - A05 spoof"])
    write_protocol(recs, tmp_path / "p.txt")
    assert parse_protocol(tmp_path / "p.txt") == recs


def _records(spec):
    """spec: {speaker: (n_bonafide, {system: n_spoof})}"""
    out, k = [], 0
    for spk, (nb, spoofs) in spec.items():
        for _ in range(nb):
            k += 1
            out.append(TrialRecord(spk, f"U{k}", "-", "bonafide"))
        for system, n in spoofs.items():
            for _ in range(n):
                k += 1
                out.append(TrialRecord(spk, f"U{k}", system, "spoof"))
    return out


def test_half_split_small_example():
    recs = _records({"s1": (4, {"A01": 1, "A02": 1}), "s2": (3, {})})
    att, dfn = make_split(recs, SplitPlan(seed=0))
    assert Counter(r.speaker_id for r in att if r.key == "bonafide") == {"s1": 2, "s2": 2}
    assert Counter(r.speaker_id for r in dfn if r.key == "bonafide") == {"s1": 2, "s2": 1}
    assert [r.system_id for r in att if r.key == "spoof"] == ["A01"]
    assert [r.system_id for r in dfn if r.key == "spoof"] == ["A02"]


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(0, 9), min_size=1, max_size=6),
       seed=st.integers(0, 1000))
def test_split_is_partition(counts, seed):
    spec = {f"s{i}": (n, {"A01": 1, "A04": 2, "A06": n % 2}) for i, n in enumerate(counts)}
    recs = _records(spec)
    att, dfn = make_split(recs, SplitPlan(seed=seed))
    a, d = {r.utt_id for r in att}, {r.utt_id for r in dfn}
    assert not a & d
    assert a | d == {r.utt_id for r in recs}
    for spk, (n, _) in spec.items():
        got = sum(r.speaker_id == spk and r.key == "bonafide" for r in att)
        assert got == math.ceil(n / 2)
    assert make_split(recs, SplitPlan(seed=seed)) == (att, dfn)


def test_unknown_system_goes_to_defender():
    recs = _records({"s1": (2, {"A07": 1})})
    with pytest.warns(UserWarning, match="A07"):
        att, dfn = make_split(recs)
    assert any(r.system_id == "A07" for r in dfn)
    assert not any(r.system_id == "A07" for r in att)


def test_overlapping_plan_rejected():
    with pytest.raises(InvalidInputError):
        SplitPlan(attacker_systems=("A01",), defender_systems=("A01",))
    with pytest.raises(InvalidInputError):
        SplitPlan(scenario="mixed")


def test_shared_defender_full():
    recs = _records({"s1": (5, {"A01": 2, "A02": 2})})
    att_d, _ = make_split(recs, SplitPlan(seed=4))
    att, dfn = make_split(recs, SplitPlan("shared_defender_full", seed=4))
    assert dfn == recs
    assert att == att_d


def test_pairing_examples():
    recs = _records({"s1": (1, {"A01": 1})})
    pairs = pair_for_enhancement(recs)
    assert [(p.spoof.utt_id, p.bonafide.utt_id) for p in pairs] == [("U2", "U1")]

    recs = _records({"s1": (3, {"A01": 2})})
    pairs = pair_for_enhancement(recs, seed=1)
    assert len(pairs) == 2
    assert all(p.bonafide.speaker_id == "s1" and p.target_speaker == "s1" for p in pairs)

    recs = _records({"s1": (0, {"A01": 2}), "s2": (1, {"A03": 1})})
    with pytest.warns(UserWarning, match="s1"):
        pairs = pair_for_enhancement(recs)
    assert [p.target_speaker for p in pairs] == ["s2"]


def test_write_split_outputs(tmp_path, la19_protocol):
    recs = parse_protocol(la19_protocol)
    plan = SplitPlan(seed=0)
    att, dfn = make_split(recs, plan)
    summary = write_split(att, dfn, tmp_path, plan)
    assert parse_protocol(tmp_path / "attacker.txt") == att
    assert parse_protocol(tmp_path / "defender.txt") == dfn
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk == json.loads(json.dumps(summary))
    assert on_disk["attacker"]["per_system"].keys() == {"-", "A01", "A03", "A05"}
    assert on_disk["attacker"]["bonafide"] + on_disk["defender"]["bonafide"] == 2580
