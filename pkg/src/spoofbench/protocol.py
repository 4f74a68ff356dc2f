"""ASVspoof CM protocol files and attacker/defender data splits."""

from __future__ import annotations

import json
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import InvalidInputError, ProtocolParseError

KEYS = ("bonafide", "spoof")
ATTACKER_SYSTEMS = ("A01", "A03", "A05")
DEFENDER_SYSTEMS = ("A02", "A04", "A06")


@dataclass(frozen=True)
class TrialRecord:
    speaker_id: str
    utt_id: str
    system_id: str
    key: Literal["bonafide", "spoof"]
    field3: str = "-"

    def __post_init__(self):
        if self.key not in KEYS:
            raise InvalidInputError(f"unknown key {self.key!r}")
        if (self.key == "bonafide") != (self.system_id == "-"):
            raise InvalidInputError(
                f"{self.utt_id}: bona fide trials must have system '-', "
                f"spoofed trials a system id (got {self.system_id!r}/{self.key})")

    def to_line(self) -> str:
        return f"{self.speaker_id} {self.utt_id} {self.field3} {self.system_id} {self.key}"


def parse_protocol_lines(lines, path=None) -> list[TrialRecord]:
    """Parse CM protocol lines ``speaker utt_id field3 system key``.

    The 2021 LA/DF key files put extra columns around the system and key;
    the key is taken as the first ``bonafide``/``spoof`` token from the
    fifth column on and the system as the token before it. Remaining
    columns are ignored with one warning per file.
    """
    records, seen = [], set()
    extra_warned = False
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 5:
            raise ProtocolParseError(
                f"expected at least 5 fields, found {len(parts)}", lineno, path)
        key_pos = next((i for i in range(4, len(parts)) if parts[i] in KEYS), None)
        if key_pos is None:
            raise ProtocolParseError("no bonafide/spoof key column", lineno, path)
        if len(parts) > 5 and not extra_warned:
            warnings.warn(f"{path or 'protocol'}: ignoring extra protocol columns "
                          f"(line {lineno} has {len(parts)} fields)", stacklevel=2)
            extra_warned = True
        try:
            rec = TrialRecord(parts[0], parts[1], parts[key_pos - 1],
                              parts[key_pos], parts[2])
        except InvalidInputError as exc:
            raise ProtocolParseError(str(exc), lineno, path) from exc
        if rec.utt_id in seen:
            raise ProtocolParseError(f"duplicate utt_id {rec.utt_id}", lineno, path)
        seen.add(rec.utt_id)
        records.append(rec)
    if not records:
        raise InvalidInputError(f"{path or 'protocol'}: no protocol records")
    return records


def parse_protocol(path) -> list[TrialRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_protocol_lines(fh, path=str(path))


def write_protocol(records, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")


@dataclass(frozen=True)
class SplitPlan:
    scenario: Literal["disjoint", "shared_defender_full"] = "disjoint"
    attacker_systems: tuple[str, ...] = ATTACKER_SYSTEMS
    defender_systems: tuple[str, ...] = DEFENDER_SYSTEMS
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in ("disjoint", "shared_defender_full"):
            raise InvalidInputError(f"unknown scenario {self.scenario!r}")
        if set(self.attacker_systems) & set(self.defender_systems):
            raise InvalidInputError("attacker and defender systems overlap")


def make_split(records, plan: SplitPlan = SplitPlan()):
    """Split protocol records into ``(attacker_set, defender_set)``.

    Spoofed trials go by system. Each speaker's bona fide trials are
    shuffled with a seeded generator (speakers visited in sorted order,
    utterances sorted by id first) and the attacker gets ``ceil(n/2)``.
    With ``shared_defender_full`` the defender keeps every record. Both
    outputs preserve input order.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("no records to split")
    rng = np.random.default_rng(plan.seed)
    bona_by_spk = defaultdict(list)
    for rec in records:
        if rec.key == "bonafide":
            bona_by_spk[rec.speaker_id].append(rec.utt_id)
    attacker_bona = set()
    for spk in sorted(bona_by_spk):
        utts = sorted(bona_by_spk[spk])
        order = rng.permutation(len(utts))
        attacker_bona.update(utts[i] for i in order[:(len(utts) + 1) // 2])

    attacker, defender = [], []
    unknown = Counter()
    for rec in records:
        if rec.key == "bonafide":
            (attacker if rec.utt_id in attacker_bona else defender).append(rec)
        elif rec.system_id in plan.attacker_systems:
            attacker.append(rec)
        else:
            if rec.system_id not in plan.defender_systems:
                unknown[rec.system_id] += 1
            defender.append(rec)
    if unknown:
        warnings.warn("systems outside both lists routed to the defender: "
                      + ", ".join(f"{k} ({v})" for k, v in sorted(unknown.items())),
                      stacklevel=2)
    if plan.scenario == "shared_defender_full":
        defender = records
    return attacker, defender


@dataclass(frozen=True)
class RecordPair:
    spoof: TrialRecord
    bonafide: TrialRecord

    @property
    def target_speaker(self) -> str:
        return self.spoof.speaker_id


def bonafide_pool(records) -> dict[str, list[TrialRecord]]:
    pool = defaultdict(list)
    for rec in records:
        if rec.key == "bonafide":
            pool[rec.speaker_id].append(rec)
    return dict(pool)


def pair_for_enhancement(attacker_set, seed: int = 0) -> list[RecordPair]:
    """Pair each spoof with a uniformly drawn bona fide trial of its target speaker.

    Speakers with spoofs but no bona fide utterances are skipped with a
    warning.
    """
    rng = np.random.default_rng(seed)
    pool = bonafide_pool(attacker_set)
    pairs, orphans = [], Counter()
    for rec in attacker_set:
        if rec.key != "spoof":
            continue
        choices = pool.get(rec.speaker_id)
        if not choices:
            orphans[rec.speaker_id] += 1
            continue
        pairs.append(RecordPair(rec, choices[int(rng.integers(len(choices)))]))
    if orphans:
        warnings.warn("no bona fide utterances for speakers "
                      + ", ".join(f"{k} ({v} spoofs skipped)"
                                  for k, v in sorted(orphans.items())),
                      stacklevel=2)
    return pairs


def split_summary(attacker, defender) -> dict:
    def side(recs):
        return {
            "total": len(recs),
            "bonafide": sum(r.key == "bonafide" for r in recs),
            "spoof": sum(r.key == "spoof" for r in recs),
            "per_system": dict(sorted(Counter(r.system_id for r in recs).items())),
            "bonafide_per_speaker": dict(sorted(Counter(
                r.speaker_id for r in recs if r.key == "bonafide").items())),
        }
    return {"attacker": side(attacker), "defender": side(defender)}


def write_split(attacker, defender, out_dir, plan: SplitPlan) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_protocol(attacker, out_dir / "attacker.txt")
    write_protocol(defender, out_dir / "defender.txt")
    summary = {"scenario": plan.scenario, "seed": plan.seed,
               "attacker_systems": list(plan.attacker_systems),
               "defender_systems": list(plan.defender_systems),
               **split_summary(attacker, defender)}
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
