"""Occupation taxonomy and job-advertisement corpus: parsing, validation,
serialization, and training-pair export.

File formats:
  occupations  CSV, header ``esco_id,title,description,skills,synonyms``,
               skills/synonyms pipe-separated inside their field, RFC-4180
               quoting, UTF-8.
  ads          JSONL, one object per line with keys ad_id, esco_id, title,
               body; blank lines are skipped.
  pairs        JSONL ``{"anchor": ..., "positive": ..., "kind": ...}``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from jobrec.errors import CorpusError

ESCO_HEADER = ("esco_id", "title", "description", "skills", "synonyms")
AD_KEYS = ("ad_id", "esco_id", "title", "body")
PAIR_KINDS = ("skill", "synonym", "description")


def _clean_items(raw: Iterable[str]) -> tuple[str, ...]:
    """Trim, drop empties, and de-duplicate keeping first occurrence."""
    seen = set()
    out = []
    for item in raw:
        item = item.strip()
        if not item or item in seen:
            continue
        seen.add(item)
        out.append(item)
    return tuple(out)


@dataclass(frozen=True, slots=True)
class EscoOccupation:
    """One taxonomy entry with its skill and synonym lists."""

    esco_id: str
    title: str
    description: str = ""
    skills: tuple[str, ...] = ()
    synonyms: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "esco_id", self.esco_id.strip())
        object.__setattr__(self, "title", self.title.strip())
        object.__setattr__(self, "description", self.description.strip())
        object.__setattr__(self, "skills", _clean_items(self.skills))
        object.__setattr__(self, "synonyms", _clean_items(self.synonyms))
        if not self.esco_id:
            raise CorpusError("occupation with empty esco_id")
        if not self.title:
            raise CorpusError(f"occupation {self.esco_id!r} has empty title")
        for text in (self.esco_id, self.title, self.description) + self.skills + self.synonyms:
            if "\x00" in text:
                raise CorpusError(
                    f"occupation {self.esco_id!r} contains a NUL character"
                )
        for item in self.skills + self.synonyms:
            if "|" in item:
                raise CorpusError(
                    f"occupation {self.esco_id!r}: {item!r} contains '|', "
                    "which the CSV list separator reserves"
                )


@dataclass(frozen=True, slots=True)
class JobAd:
    """A EURES-style advertisement annotated with one gold occupation id."""

    ad_id: str
    esco_id: str
    title: str
    body: str

    def __post_init__(self):
        object.__setattr__(self, "ad_id", self.ad_id.strip())
        object.__setattr__(self, "esco_id", self.esco_id.strip())
        object.__setattr__(self, "title", self.title.strip())
        if not self.ad_id:
            raise CorpusError("ad with empty ad_id")
        if not self.esco_id:
            raise CorpusError(f"ad {self.ad_id!r} has empty esco_id")
        if not self.body.strip():
            raise CorpusError(f"ad {self.ad_id!r} has empty body")


@dataclass(frozen=True, slots=True)
class TrainingPair:
    """Anchor (job title) paired with one positive sentence."""

    anchor: str
    positive: str
    kind: str

    def __post_init__(self):
        if self.kind not in PAIR_KINDS:
            raise CorpusError(f"unknown pair kind {self.kind!r}")
        if not self.anchor or not self.positive:
            raise CorpusError("training pair with empty anchor or positive")


@dataclass(frozen=True, slots=True)
class CorpusStats:
    occupations: int
    ads: int
    occupations_with_ads: int
    unknown_refs: int

    def as_dict(self) -> dict:
        return {
            "occupations": self.occupations,
            "ads": self.ads,
            "occupations_with_ads": self.occupations_with_ads,
            "unknown_refs": self.unknown_refs,
        }


def parse_esco(stream: IO[str]) -> list[EscoOccupation]:
    """Parse the occupations CSV; duplicate ids and bad rows are errors."""
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise CorpusError("empty occupations file: missing header") from None
    except csv.Error as exc:
        raise CorpusError(f"malformed CSV header: {exc}", line=1) from exc
    if tuple(h.strip() for h in header) != ESCO_HEADER:
        raise CorpusError(
            f"bad header {header!r}, expected {','.join(ESCO_HEADER)}", line=1
        )

    occupations: list[EscoOccupation] = []
    seen_ids: set[str] = set()
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise CorpusError(f"malformed CSV row: {exc}", line=reader.line_num) from exc
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(ESCO_HEADER):
            raise CorpusError(
                f"expected {len(ESCO_HEADER)} fields, got {len(row)}",
                line=reader.line_num,
            )
        esco_id, title, description, skills, synonyms = row
        try:
            occ = EscoOccupation(
                esco_id=esco_id,
                title=title,
                description=description,
                skills=skills.split("|") if skills.strip() else (),
                synonyms=synonyms.split("|") if synonyms.strip() else (),
            )
        except CorpusError as exc:
            raise CorpusError(str(exc), line=reader.line_num) from None
        if occ.esco_id in seen_ids:
            raise CorpusError(
                f"duplicate esco_id {occ.esco_id!r}", line=reader.line_num
            )
        seen_ids.add(occ.esco_id)
        occupations.append(occ)
    return occupations


def write_esco(occupations: Sequence[EscoOccupation], stream: IO[str]) -> None:
    # RFC-4180 CRLF row endings; fields containing CR/LF are then quoted.
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(ESCO_HEADER)
    for occ in occupations:
        writer.writerow(
            [
                occ.esco_id,
                occ.title,
                occ.description,
                "|".join(occ.skills),
                "|".join(occ.synonyms),
            ]
        )


def parse_ads(stream: IO[str]) -> list[JobAd]:
    """Parse the ads JSONL; blank lines are skipped, duplicates are errors."""
    ads: list[JobAd] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        if not isinstance(obj, dict):
            raise CorpusError("expected a JSON object", line=lineno)
        for key in AD_KEYS:
            if key not in obj:
                raise CorpusError(f"missing key {key!r}", line=lineno)
            if not isinstance(obj[key], str):
                raise CorpusError(f"key {key!r} must be a string", line=lineno)
        try:
            ad = JobAd(
                ad_id=obj["ad_id"],
                esco_id=obj["esco_id"],
                title=obj["title"],
                body=obj["body"],
            )
        except CorpusError as exc:
            raise CorpusError(str(exc), line=lineno) from None
        if ad.ad_id in seen_ids:
            raise CorpusError(f"duplicate ad_id {ad.ad_id!r}", line=lineno)
        seen_ids.add(ad.ad_id)
        ads.append(ad)
    return ads


def write_ads(ads: Sequence[JobAd], stream: IO[str]) -> None:
    for ad in ads:
        record = {
            "ad_id": ad.ad_id,
            "esco_id": ad.esco_id,
            "title": ad.title,
            "body": ad.body,
        }
        stream.write(json.dumps(record, ensure_ascii=False) + "\n")


def export_training_pairs(
    occupations: Sequence[EscoOccupation],
) -> list[TrainingPair]:
    """One pair per skill, per synonym, and per non-empty description.

    Output order is corpus order, within an occupation skill pairs first,
    then synonyms, then the description pair.
    """
    pairs: list[TrainingPair] = []
    for occ in occupations:
        for skill in occ.skills:
            pairs.append(TrainingPair(occ.title, skill, "skill"))
        for synonym in occ.synonyms:
            pairs.append(TrainingPair(occ.title, synonym, "synonym"))
        if occ.description:
            pairs.append(TrainingPair(occ.title, occ.description, "description"))
    return pairs


def write_training_pairs(pairs: Sequence[TrainingPair], stream: IO[str]) -> None:
    for pair in pairs:
        record = {"anchor": pair.anchor, "positive": pair.positive, "kind": pair.kind}
        stream.write(json.dumps(record, ensure_ascii=False) + "\n")


def corpus_stats(
    occupations: Sequence[EscoOccupation], ads: Sequence[JobAd]
) -> CorpusStats:
    """Coverage report; ads pointing at unknown occupations are counted,
    not rejected, so evaluation sets stay auditable."""
    known = {occ.esco_id for occ in occupations}
    covered = set()
    unknown_refs = 0
    for ad in ads:
        if ad.esco_id in known:
            covered.add(ad.esco_id)
        else:
            unknown_refs += 1
    return CorpusStats(
        occupations=len(occupations),
        ads=len(ads),
        occupations_with_ads=len(covered),
        unknown_refs=unknown_refs,
    )
