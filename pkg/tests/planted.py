"""Synthetic planted corpora shared by the CLI, harness, and acceptance
tests.

Two generative models:

``build_planted``  descriptions = 8 role-specific words + 4 corpus-wide glue
    words; every ad restates the description vocabulary plus fixed ad
    boilerplate. Evaluation queries reuse description text, so both the
    description space and the ad-centroid space rank the gold occupation
    first with wide margins, clean or under pool noise.

``build_denoising``  each occupation has a 20-word true vocabulary;
    descriptions sample only 8 of them (a partial formal view) while four
    ads sample 12 each, so the ad centroid covers nearly the whole
    vocabulary. Fresh ad-like queries (10-word samples plus pool noise)
    then rank strictly better against ad centroids than against single
    descriptions: averaging denoises.

Tokens are random CV-syllable words: patterned names (occ01u1, ...) hash
into systematically colliding buckets because a power-of-two dim keeps
only FNV-1a's weak low bits.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from jobrec.corpus import EscoOccupation, JobAd, write_ads, write_esco
from jobrec.evaluation import RerankQuery

GEN_SEED = 20240901
NOISE_FRACTION = 0.3


def make_words(rng: random.Random, n: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        w = "".join(
            rng.choice("bcdfghjklmnpqrstvwz") + rng.choice("aeiou") for _ in range(3)
        )
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


@dataclass
class PlantedCorpus:
    occupations: list[EscoOccupation]
    ads: list[JobAd]
    pool: list[str]
    clean_queries: list[RerankQuery]

    def noisy_queries(self, noise_seed: int) -> list[RerankQuery]:
        """Replace 30% of each query's tokens with seeded pool draws."""
        rng = random.Random(noise_seed)
        noisy = []
        for query in self.clean_queries:
            tokens = query.text.split()
            n_replace = round(NOISE_FRACTION * len(tokens))
            for position in rng.sample(range(len(tokens)), n_replace):
                tokens[position] = rng.choice(self.pool)
            noisy.append(
                RerankQuery(query.query_id, " ".join(tokens), query.gold_esco_id)
            )
        return noisy


def build_planted(
    n_occupations: int = 50, ads_per: int = 4, gen_seed: int = GEN_SEED
) -> PlantedCorpus:
    rng = random.Random(gen_seed)
    taken: set[str] = set()
    glue = make_words(rng, 4, taken)
    boiler = make_words(rng, 6, taken)
    junk = make_words(rng, 30, taken)
    pool = glue + boiler + junk

    occupations, ads, queries = [], [], []
    for i in range(n_occupations):
        esco_id = f"occ{i:02d}"
        unique = make_words(rng, 8, taken)
        description = " ".join(unique + glue)
        skills = make_words(rng, 2, taken)
        occupations.append(
            EscoOccupation(
                esco_id=esco_id,
                title=f"Occupation {i:02d}",
                description=description,
                skills=tuple(skills),
                synonyms=(f"alt {unique[0]}",),
            )
        )
        for a in range(ads_per):
            body_tokens = unique + glue + boiler
            rng.shuffle(body_tokens)
            # two paragraphs so the filter modes have something to segment
            body = " ".join(body_tokens[:12]) + "\n\n" + " ".join(body_tokens[12:])
            ads.append(
                JobAd(ad_id=f"{esco_id}-ad{a}", esco_id=esco_id, title="", body=body)
            )
        queries.append(RerankQuery(f"q-{esco_id}", description, esco_id))
    return PlantedCorpus(occupations, ads, pool, queries)


def write_planted(corpus: PlantedCorpus, directory) -> dict[str, str]:
    """Write the corpus and query files; returns the path map."""
    import json
    from pathlib import Path

    directory = Path(directory)
    paths = {
        "esco": str(directory / "occupations.csv"),
        "ads": str(directory / "ads.jsonl"),
        "queries": str(directory / "queries.jsonl"),
    }
    with open(paths["esco"], "w", encoding="utf-8", newline="") as fh:
        write_esco(corpus.occupations, fh)
    with open(paths["ads"], "w", encoding="utf-8", newline="") as fh:
        write_ads(corpus.ads, fh)
    with open(paths["queries"], "w", encoding="utf-8", newline="") as fh:
        for query in corpus.clean_queries:
            fh.write(
                json.dumps(
                    {
                        "query_id": query.query_id,
                        "text": query.text,
                        "esco_id": query.gold_esco_id,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return paths


@dataclass
class DenoisingModel:
    vocab: dict[str, list[str]]
    descriptions: dict[str, str]
    ad_texts: dict[str, list[str]]
    pool: list[str]

    def fresh_queries(self, query_seed: int) -> list[RerankQuery]:
        """New 10-word views of each occupation's vocabulary, 30% noised."""
        rng = random.Random(query_seed)
        queries = []
        for esco_id in sorted(self.vocab):
            tokens = rng.sample(self.vocab[esco_id], 10)
            for position in rng.sample(range(10), 3):
                tokens[position] = rng.choice(self.pool)
            queries.append(RerankQuery(f"q-{esco_id}", " ".join(tokens), esco_id))
        return queries


def build_denoising(
    n_occupations: int = 50, ads_per: int = 4, gen_seed: int = 777
) -> DenoisingModel:
    rng = random.Random(gen_seed)
    taken: set[str] = set()
    pool = make_words(rng, 40, taken)
    vocab, descriptions, ad_texts = {}, {}, {}
    for i in range(n_occupations):
        esco_id = f"occ{i:02d}"
        vocab[esco_id] = make_words(rng, 20, taken)
        descriptions[esco_id] = " ".join(rng.sample(vocab[esco_id], 8))
        ad_texts[esco_id] = [
            " ".join(rng.sample(vocab[esco_id], 12)) for _ in range(ads_per)
        ]
    return DenoisingModel(vocab, descriptions, ad_texts, pool)
