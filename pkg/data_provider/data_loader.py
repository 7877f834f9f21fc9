import logging
import os
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Tuple

import numpy as np
from tqdm import tqdm

from layers.NTriples import serialize_ntriple
from layers.RDF_Terms import (
    OWL_SAMEAS,
    RDF_TYPE,
    RDFS_SUBCLASSOF,
    XSD_DECIMAL,
    XSD_INTEGER,
    GraphEvent,
    Term,
    Triple,
)
from layers.Wire_Codec import encode_event

logger = logging.getLogger(__name__)

VOCAB = "http://dscep.example.org/vocab#"
ONTOLOGY = "http://dscep.example.org/kb/ontology/"
RESOURCE = "http://dscep.example.org/kb/resource/"

ARTIST_ROOT = "MusicalArtist"
SHOW_ROOT = "TelevisionShow"
OTHER_ROOT = "Organisation"

TYPE = Term.iri(RDF_TYPE)
SUBCLASSOF = Term.iri(RDFS_SUBCLASSOF)
SAMEAS = Term.iri(OWL_SAMEAS)


def vocab(name):
    return Term.iri(VOCAB + name)


def ontology(name):
    return Term.iri(ONTOLOGY + name)


def resource(name):
    return Term.iri(RESOURCE + name)


BIRTH_PLACE = ontology("birthPlace")
COUNTRY = ontology("country")
COUNTRY_CODE = ontology("countryCode")
NOISE_VALUE = vocab("noiseValue")

GLOSSARY = [
    ("vocab", VOCAB, "stream vocabulary (tweets, sentiment, mentions, noise)"),
    ("dbo", ONTOLOGY, "KB ontology: class trees and the birthPlace/country/countryCode chain"),
    ("dbr", RESOURCE, "KB resources: artists, shows, organisations, cities, countries"),
    ("vocab:Tweet", VOCAB + "Tweet", "class of every stream event"),
    ("vocab:mentions", VOCAB + "mentions", "tweet mentions a KB entity"),
    ("vocab:hasSentimentPos", VOCAB + "hasSentimentPos", "positive sentiment, xsd:decimal in [0.0, 5.0]"),
    ("vocab:hasSentimentNeg", VOCAB + "hasSentimentNeg", "negative sentiment, xsd:decimal in [0.0, 5.0]"),
    ("vocab:likes", VOCAB + "likes", "like count"),
    ("vocab:shares", VOCAB + "shares", "share count"),
    ("vocab:hasToken", VOCAB + "hasToken", "filler text token"),
    ("vocab:noiseValue", VOCAB + "noiseValue", "KB triples no benchmark query reads"),
    ("dbo:MusicalArtist", ONTOLOGY + ARTIST_ROOT, "root of the artist class tree"),
    ("dbo:TelevisionShow", ONTOLOGY + SHOW_ROOT, "root of the show class tree"),
    ("dbo:Organisation", ONTOLOGY + OTHER_ROOT, "root of the organisation class tree"),
    ("dbo:birthPlace", ONTOLOGY + "birthPlace", "artist → city"),
    ("dbo:country", ONTOLOGY + "country", "city → country"),
    ("dbo:countryCode", ONTOLOGY + "countryCode", "country → two-letter code"),
]

# per-tweet triples besides mentions and tokens:
# type, tweetId, createdAt, language, pos, neg, likes, shares
TWEET_FIXED_TRIPLES = 8


@dataclass
class GenConfig:
    tweet_count: int = 1000
    seed: int = 2021
    artists: int = 200
    shows: int = 100
    others: int = 100
    entities_per_tweet: int = 2
    entities_jitter: int = 0
    mention_weights: Tuple[float, float, float] = (0.45, 0.35, 0.2)
    class_depth: int = 3
    class_fanout: int = 2
    alias_fraction: float = 0.2
    cities: int = 50
    countries: int = 10
    noise_triples: int = 0
    tokens_per_tweet: int = 28
    start_ts: int = 1_600_000_000_000
    ts_step_ms: int = 1000

    def __post_init__(self):
        self.mention_weights = tuple(self.mention_weights)
        assert self.tweet_count >= 0 and self.entities_per_tweet >= 0
        assert self.artists > 0 and self.shows > 0 and self.others > 0
        assert self.class_depth >= 1 and self.class_fanout >= 1
        assert 0.0 <= self.alias_fraction <= 1.0
        assert self.cities > 0 and self.countries > 0
        assert self.ts_step_ms > 0
        assert self.entities_per_tweet + self.entities_jitter <= self.artists + self.shows + self.others

    @property
    def classes_per_tree(self):
        return sum(self.class_fanout ** d for d in range(self.class_depth))

    @property
    def aliased_artists(self):
        return int(self.artists * self.alias_fraction)

    def expected_kb_triples(self):
        return (
            3 * (self.classes_per_tree - 1)
            + self.artists + self.shows + self.others
            + self.artists
            + self.aliased_artists
            + self.cities
            + self.countries
            + self.noise_triples
        )


@dataclass
class TweetRecord:
    tweet_id: str
    created_ts: int
    entities: Tuple[str, ...]
    sentiment_pos: Decimal
    sentiment_neg: Decimal
    likes: int
    shares: int
    tokens: Tuple[str, ...] = ()

    def __post_init__(self):
        assert Decimal(0) <= self.sentiment_pos <= Decimal(5)
        assert Decimal(0) <= self.sentiment_neg <= Decimal(5)
        assert self.likes >= 0 and self.shares >= 0

    def triples(self):
        t = Term.iri(self.tweet_id)
        out = [
            Triple(t, TYPE, vocab("Tweet")),
            Triple(t, vocab("tweetId"), Term.literal(self.tweet_id.rsplit("/", 1)[-1])),
            Triple(t, vocab("createdAt"), Term.literal(str(self.created_ts), XSD_INTEGER)),
            Triple(t, vocab("language"), Term.literal("en")),
            Triple(t, vocab("hasSentimentPos"), Term.literal(f"{self.sentiment_pos:.1f}", XSD_DECIMAL)),
            Triple(t, vocab("hasSentimentNeg"), Term.literal(f"{self.sentiment_neg:.1f}", XSD_DECIMAL)),
            Triple(t, vocab("likes"), Term.literal(str(self.likes), XSD_INTEGER)),
            Triple(t, vocab("shares"), Term.literal(str(self.shares), XSD_INTEGER)),
        ]
        out.extend(Triple(t, vocab("mentions"), Term.iri(e)) for e in self.entities)
        out.extend(Triple(t, vocab("hasToken"), Term.literal(w)) for w in self.tokens)
        return out

    def to_event(self):
        return GraphEvent.stamped(self.tweet_id, self.triples(), self.created_ts)


@dataclass
class GeneratedDataset:
    config: GenConfig
    tweets: List[TweetRecord]
    partitions: Dict[str, List[Triple]] = field(default_factory=dict)

    @property
    def kb(self):
        return [t for part in self.partitions.values() for t in part]

    def events(self):
        return [t.to_event() for t in self.tweets]


def class_tree(root, depth, fanout):
    """Class IRIs of one tree (root first) and its rdfs:subClassOf edges."""
    classes = [ontology(root)]
    edges = []
    level = [root]
    for _ in range(depth - 1):
        nxt = []
        for parent in level:
            for k in range(fanout):
                child = f"{parent}_{k}"
                nxt.append(child)
                classes.append(ontology(child))
                edges.append(Triple(ontology(child), SUBCLASSOF, ontology(parent)))
        level = nxt
    return classes, edges


def noise_triples(n, offset=0):
    return [
        Triple(resource(f"noise_{i}"), NOISE_VALUE, Term.literal(str(i), XSD_INTEGER))
        for i in range(offset, offset + n)
    ]


def _country_code(j):
    return chr(ord("A") + j // 26 % 26) + chr(ord("A") + j % 26)


def generate(cfg: GenConfig) -> GeneratedDataset:
    """Tweets plus the KB they point into; same config and seed give the same dataset."""
    rng = np.random.default_rng(cfg.seed)
    artists = [f"artist_{i}" for i in range(cfg.artists)]
    shows = [f"show_{i}" for i in range(cfg.shows)]
    others = [f"org_{i}" for i in range(cfg.others)]

    artist_part, show_part, other_part = [], [], []
    for root, names, part in (
        (ARTIST_ROOT, artists, artist_part),
        (SHOW_ROOT, shows, show_part),
        (OTHER_ROOT, others, other_part),
    ):
        classes, edges = class_tree(root, cfg.class_depth, cfg.class_fanout)
        part.extend(edges)
        picks = rng.integers(0, len(classes), size=len(names))
        part.extend(Triple(resource(n), TYPE, classes[k]) for n, k in zip(names, picks))

    aliased = set(rng.choice(cfg.artists, size=cfg.aliased_artists, replace=False).tolist())
    cities = rng.integers(0, cfg.cities, size=cfg.artists)
    for i, name in enumerate(artists):
        city = resource(f"city_{cities[i]}")
        if i in aliased:
            alias = resource(f"{name}_alias")
            artist_part.append(Triple(alias, BIRTH_PLACE, city))
            artist_part.append(Triple(alias, SAMEAS, resource(name)))
        else:
            artist_part.append(Triple(resource(name), BIRTH_PLACE, city))
    countries = rng.integers(0, cfg.countries, size=cfg.cities)
    for c in range(cfg.cities):
        artist_part.append(Triple(resource(f"city_{c}"), COUNTRY, resource(f"country_{countries[c]}")))
    for j in range(cfg.countries):
        artist_part.append(Triple(resource(f"country_{j}"), COUNTRY_CODE, Term.literal(_country_code(j))))
    other_part.extend(noise_triples(cfg.noise_triples))

    pools = [artists, shows, others]
    weights = np.asarray(cfg.mention_weights, dtype=float)
    weights = weights / weights.sum()
    words = [f"w{i}" for i in range(max(500, cfg.tokens_per_tweet))]
    tweets = []
    for i in tqdm(range(cfg.tweet_count), desc="tweets", disable=cfg.tweet_count < 10_000):
        k = cfg.entities_per_tweet
        if cfg.entities_jitter:
            k = int(rng.integers(max(0, k - cfg.entities_jitter), k + cfg.entities_jitter + 1))
        mentioned = []
        while len(mentioned) < k:
            pool = pools[rng.choice(3, p=weights)]
            name = pool[rng.integers(0, len(pool))]
            if RESOURCE + name not in mentioned:
                mentioned.append(RESOURCE + name)
        tokens = rng.choice(len(words), size=cfg.tokens_per_tweet, replace=False)
        tweets.append(TweetRecord(
            tweet_id=f"{RESOURCE}tweet_{i}",
            created_ts=cfg.start_ts + i * cfg.ts_step_ms,
            entities=tuple(mentioned),
            sentiment_pos=Decimal(int(rng.integers(0, 51))) / 10,
            sentiment_neg=Decimal(int(rng.integers(0, 51))) / 10,
            likes=int(rng.poisson(20)),
            shares=int(rng.poisson(5)),
            tokens=tuple(words[w] for w in sorted(tokens)),
        ))
    return GeneratedDataset(
        cfg, tweets, {"artists": artist_part, "shows": show_part, "other": other_part}
    )


def write_ntriples(path, triples):
    lines = sorted({serialize_ntriple(t) for t in triples})
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(line + "\n" for line in lines)
    return len(lines)


def write_dataset(dataset: GeneratedDataset, stream_path, kb_path):
    """
    Stream (one wire event per line), KB, its partitions next to it as
    kb_<name>.nt, and glossary.tsv.
    """
    with open(stream_path, "wb") as f:
        for tweet in dataset.tweets:
            f.write(encode_event(tweet.to_event()) + b"\n")
    total = write_ntriples(kb_path, dataset.kb)
    base = os.path.dirname(os.path.abspath(kb_path))
    paths = {"stream": stream_path, "kb": kb_path}
    for name, part in dataset.partitions.items():
        paths[name] = os.path.join(base, f"kb_{name}.nt")
        write_ntriples(paths[name], part)
    paths["glossary"] = os.path.join(base, "glossary.tsv")
    with open(paths["glossary"], "w", encoding="utf-8") as f:
        f.write("prefix\tiri\tmeaning\n")
        for row in GLOSSARY:
            f.write("\t".join(row) + "\n")
    logger.info("wrote %d tweets to %s and %d KB triples to %s", len(dataset.tweets), stream_path, total, kb_path)
    return paths
