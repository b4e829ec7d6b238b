"""Step-by-step view of one conditional decode.

Trains the default predictor, then decodes one held-out video and prints, per
step, how many tokens are finalized, how many still show their condition
token or [MASK], and the running accuracy against the ground truth.

    python3 scripts/decode_trace.py --task OPC --steps 12 --schedule cosine
"""

import argparse
from dataclasses import replace

import numpy as np

from maskvid.core import TASKS
from maskvid.decoder import DecodeConfig, commit_decode
from maskvid.harness import RunConfig, fit_tokenizer, make_datasets, train_predictor
from maskvid.masking import SCHEDULES
from maskvid.predictor import PottsPredictor, task_instance
from maskvid.tasks import make_condition
from maskvid.tokenizer import encode


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", choices=TASKS, default="OPC")
    ap.add_argument("--steps", type=int, default=12)
    ap.add_argument("--schedule", choices=SCHEDULES, default="cosine")
    ap.add_argument("--temperature", type=float, default=4.5)
    ap.add_argument("--video", type=int, default=0, help="index into the held-out split")
    args = ap.parse_args()

    cfg = replace(RunConfig(), n_eval=args.video + 1)
    (train_v, train_y), (eval_v, eval_y) = make_datasets(cfg)
    codebook, _ = fit_tokenizer(cfg, train_v)
    params, _ = train_predictor(cfg, train_v, train_y, codebook)
    layout, shape = cfg.layout, cfg.shape

    video, label = eval_v[args.video], eval_y[args.video]
    spec = task_instance(args.task, label)
    bundle = make_condition(video, spec, codebook, shape)
    truth = encode(video, codebook, shape).ids
    cls = layout.class_token(spec.class_id) if spec.uses_class else layout.noclass_id
    dcfg = DecodeConfig(args.steps, args.temperature, args.schedule, 0)
    grid, trace = commit_decode(PottsPredictor(params, layout), layout.task_token(args.task), cls, bundle, dcfg, layout)

    print(f"task={args.task} class={label} N={shape.n} condition tokens={int((~bundle.allpadded).sum())}")
    print("step  finalized  shown_cond  shown_mask  accuracy")
    cond_u = layout.to_unified(bundle.cond_tokens.ids)
    for t, snap in enumerate(trace.steps):
        shown_cond = int(np.sum(snap.sampled & (snap.zbar == cond_u)))
        shown_mask = int(np.sum(snap.zbar == layout.mask_id))
        acc = float(np.mean(snap.zhat == truth))
        print(f"{t:4d}  {snap.n_finalized:9d}  {shown_cond:10d}  {shown_mask:10d}  {acc:8.4f}")
    print(f"final accuracy {float(np.mean(grid.ids == truth)):.4f}")


if __name__ == "__main__":
    main()
