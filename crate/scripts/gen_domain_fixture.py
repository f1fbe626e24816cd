#!/usr/bin/env python3
"""Writes a synthetic popular-domains list (one per line) for QNAME analysis
and latency runs. Mostly short registrable names with common subdomains,
plus a small tail of long CDN-style hostnames."""

import argparse
import random

SYLLABLES = (
    "ba be bi bo bu ca ce co da de di do fa fe fi go ha he ho ja jo ka ke ki ko "
    "la le li lo lu ma me mi mo mu na ne ni no pa pe pi po ra re ri ro sa se si "
    "so ta te ti to va ve vi wa we xa yo za zo al an ar el en er in on or un "
    "sky net web hub box app pay shop news game tech star blue soft data cloud"
).split()
TLDS = [("com", 50), ("net", 8), ("org", 7), ("de", 4), ("co.uk", 3), ("ru", 3),
        ("jp", 2), ("io", 3), ("com.br", 2), ("fr", 2), ("in", 2), ("it", 2),
        ("cn", 2), ("info", 2), ("tv", 1), ("co", 1), ("me", 1), ("com.au", 1)]
SUBS = ["www", "m", "mail", "api", "cdn", "static", "img", "login", "shop", "news", "app", "docs"]
REGIONS = ["us-east-1", "eu-west-2", "ap-southeast-1", "sa-east-1", "ca-central-1"]


def word(rng, lo, hi):
    return "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(lo, hi)))


def tld(rng):
    names, weights = zip(*TLDS)
    return rng.choices(names, weights)[0]


def domain(rng):
    base = f"{word(rng, 1, 4)}.{tld(rng)}"
    r = rng.random()
    if r < 0.015:
        # long CDN / tracking hostnames
        parts = [word(rng, 2, 4), rng.choice(REGIONS), f"edge{rng.randint(1, 99)}",
                 word(rng, 2, 5) + "-" + word(rng, 2, 4), "cdn", base]
        return ".".join(parts)
    if r < 0.45:
        return f"{rng.choice(SUBS)}.{base}"
    if r < 0.50:
        return f"{word(rng, 1, 3)}.{rng.choice(SUBS)}.{base}"
    return base


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=20170610)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    seen, out = set(), []
    while len(out) < args.count:
        d = domain(rng)
        if d not in seen and len(d) <= 253:
            seen.add(d)
            out.append(d)
    with open(args.out, "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
