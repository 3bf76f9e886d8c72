"""Train the CNN with MSE alone and with MSE + BPD on the same synthetic data, then compare.

At 200 epochs each run takes roughly 20-25 minutes on one CPU core.  Pass a
smaller epoch count for a quick look.

Run: python demos/03_desk_comparison.py [epochs] [out_dir]
"""

import json
import sys
import time
from pathlib import Path

from spinebpd.checkpoint import save_checkpoint
from spinebpd.dataset import load_sample, read_manifest
from spinebpd.pgm import write_pgm
from spinebpd.render import render_overlay
from spinebpd.synthgen import generate_dataset
from spinebpd.train import TrainConfig, evaluate, predict, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 200
out = Path(sys.argv[2] if len(sys.argv) > 2 else "runs/demo")
out.mkdir(parents=True, exist_ok=True)

# 100 pseudo X-rays at 128x64: 80 train, 15 test, 5 val.
data = out / "data"
generate_dataset(seed=0, out_dir=data)



def show(record, kind):
    if record["epoch"] % 20 == 0:
        print(f"  {kind} epoch {record['epoch']:3d}  train {record['train_loss']:.4f}  val {record['val_loss']:.4f}")


reports = {}
for kind in ("mse", "mse-bpd"):
    config = TrainConfig(data_dir=str(data), epochs=epochs, loss_kind=kind, seed=0)
    t0 = time.perf_counter()
    result = train(config, log_path=out / f"{kind}.log.jsonl", progress=lambda r: show(r, kind))
    print(f"{kind}: {time.perf_counter() - t0:.0f} s")
    save_checkpoint(out / f"{kind}.ckpt", result.checkpoint)
    reports[kind] = evaluate(result.checkpoint, data, "test")

    # Overlays for two test images: green ground truth, red prediction.
    for sid in read_manifest(data)["splits"]["test"][:2]:
        image, _, gt = load_sample(data, sid)
        pred = predict(result.checkpoint.model_config, result.checkpoint.params, image[None, None])[0]
        overlay = render_overlay(image, gt, pred)
        write_pgm(out / f"{kind}_{sid}.pgm", overlay.raster)
        (out / f"{kind}_{sid}.svg").write_text(overlay.svg)

for kind, rep in reports.items():
    print(f"{kind:>8}  pearson {rep.pearson_r:.4f}  ANOVA F {rep.anova_f:.3g} (p {rep.anova_p:.3g})  "
          f"MRE {rep.mean_radial_error:.2f} px")
    (out / f"report_{kind}.json").write_text(json.dumps(rep.to_dict(), indent=1, sort_keys=True))
