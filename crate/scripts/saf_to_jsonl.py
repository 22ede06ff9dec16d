#!/usr/bin/env python3
"""Convert an export of the SAF communication-networks (English) corpus into
the JSONL layout `asasf ingest` reads.

Each input file is one split exported from the published dataset
(parquet, CSV or JSON lines) with the columns
`id, question, reference_answer, provided_answer, answer_feedback,
verification_feedback, score`. Name the files after their split:

    python scripts/saf_to_jsonl.py \
        train=train.parquet validation=validation.parquet \
        test_unseen_answers=ua.parquet test_unseen_questions=uq.parquet \
        -o data/saf_communication_networks.jsonl

The validation split is folded into train. Questions whose largest observed
score exceeds 1 get a `max_points` column set to that maximum so the loader
normalizes them; all other scores pass through unchanged.
"""

import argparse
import hashlib
import json
import sys

import pandas as pd

SPLITS = {
    "train": "train",
    "validation": "train",
    "test_unseen_answers": "test_ua",
    "test_unseen_questions": "test_uq",
}


def read_split(path):
    if path.endswith(".parquet"):
        return pd.read_parquet(path)
    if path.endswith(".csv"):
        return pd.read_csv(path)
    return pd.read_json(path, lines=True)


def question_id(text):
    return "q" + hashlib.sha1(text.strip().encode("utf-8")).hexdigest()[:10]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("inputs", nargs="+", metavar="SPLIT=PATH")
    ap.add_argument("-o", "--output", required=True)
    args = ap.parse_args()

    frames = []
    for item in args.inputs:
        name, _, path = item.partition("=")
        if name not in SPLITS or not path:
            sys.exit(f"expected SPLIT=PATH with SPLIT in {sorted(SPLITS)}, got {item!r}")
        df = read_split(path)
        df["split"] = SPLITS[name]
        frames.append(df)
    df = pd.concat(frames, ignore_index=True)
    df["question_id"] = df["question"].map(question_id)
    top = df.groupby("question_id")["score"].max()

    with open(args.output, "w", encoding="utf-8") as out:
        for row in df.itertuples(index=False):
            rec = {
                "id": str(row.id),
                "question_id": row.question_id,
                "question": row.question,
                "reference_answer": row.reference_answer,
                "student_answer": row.provided_answer,
                "score": float(row.score),
                "label": row.verification_feedback,
                "feedback": row.answer_feedback,
                "split": row.split,
            }
            if top[row.question_id] > 1:
                rec["max_points"] = float(top[row.question_id])
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    counts = df["split"].value_counts().to_dict()
    print(f"wrote {len(df)} records to {args.output}: {counts}", file=sys.stderr)


if __name__ == "__main__":
    main()
