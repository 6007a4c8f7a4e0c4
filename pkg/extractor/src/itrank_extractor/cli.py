"""Command-line front end for the extraction jobs."""
from __future__ import annotations

import argparse
import sys

import numpy as np
import torch

from .encode import Encoder, read_text_dataset
from .extract import (ExtractorJob, OutputKind, run_job, save_head,
                      train_head)


def _split_ints(values) -> list[int]:
    out = []
    for v in values or []:
        out.extend(int(x) for x in str(v).split(",") if x.strip())
    return out


def cmd_extract(args: argparse.Namespace) -> int:
    job = ExtractorJob(
        model_id=args.model,
        data_paths=list(args.data),
        kind=OutputKind(args.kind),
        out_path=args.out,
        max_examples=args.max_examples,
        seq_len=args.seq_len,
        seed=args.seed,
        batch_size=args.batch_size,
        task_id=args.task_id,
        label_kind=args.label_kind,
        n_classes=args.n_classes,
        fim_scope=args.fim_scope,
        head_epochs=args.head_epochs,
        head_lr=args.head_lr,
        checkpoints=args.checkpoints,
        target=args.target,
        steps=_split_ints(args.steps) or [50],
    )
    written = run_job(job)
    for path in written if isinstance(written, list) else [written]:
        print(f"wrote {path}")
    return 0


def cmd_train_head(args: argparse.Namespace) -> int:
    torch.manual_seed(args.seed)
    torch.set_num_threads(1)
    enc = Encoder(args.model, seq_len=args.seq_len)
    texts, labels = read_text_dataset(args.data[0], args.max_examples,
                                      need_labels=True)
    y = np.asarray([int(v) for v in labels])
    n_classes = args.n_classes or int(y.max()) + 1
    head = train_head(enc.example_vectors(texts), y, n_classes,
                      seed=args.seed, epochs=args.head_epochs, lr=args.head_lr)
    save_head(head, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itrank-extract",
        description="Produce itrank input files from transformer encoders.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True,
                       help="model path or hub identifier")
        p.add_argument("--data", nargs="+", required=True,
                       help="JSON-lines text dataset(s); file stems become "
                            "task ids")
        p.add_argument("--out", required=True)
        p.add_argument("--max-examples", type=int)
        p.add_argument("--seq-len", type=int, default=128)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--n-classes", type=int)
        p.add_argument("--head-epochs", type=int, default=30)
        p.add_argument("--head-lr", type=float, default=0.1)

    p = sub.add_parser("extract", help="run one extraction job")
    common(p)
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in OutputKind])
    p.add_argument("--task-id", help="task id override for a single dataset")
    p.add_argument("--label-kind", default="class_index",
                   choices=("class_index", "token_tag", "real_value"))
    p.add_argument("--fim-scope", default="head",
                   choices=("head", "last_layer"))
    p.add_argument("--checkpoints", help="directory of *.pt head checkpoints")
    p.add_argument("--target", default="target",
                   help="target id recorded in score files")
    p.add_argument("--steps", action="append",
                   help="few-shot step counts, e.g. 5,10,25,50")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train-head",
                       help="fit and save a classifier-head checkpoint")
    common(p)
    p.set_defaults(fn=cmd_train_head)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
