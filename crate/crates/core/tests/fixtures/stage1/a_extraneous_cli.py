"""Batch generation with timing and a small CLI."""
import argparse
import json
import logging
import time
from pathlib import Path

import torch
from diffusers import StableDiffusionPipeline, DDIMScheduler

log = logging.getLogger("gen")


def parse_args():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="outputs")
    p.add_argument("--prompts", nargs="*", default=["a lighthouse at dusk", "a bowl of fruit"])
    return p.parse_args()


def save_all(images, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        img.save(out_dir / f"{i:03d}.png")


def main():
    args = parse_args()
    logging.basicConfig(level=logging.INFO)
    torch.manual_seed(1234)
    pipe = StableDiffusionPipeline.from_pretrained("runwayml/stable-diffusion-v1-5", safety_checker=None)
    pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)
    pipe = pipe.to("cuda")
    pipe.set_progress_bar_config(disable=True)

    timings = []
    images = []
    for text in args.prompts:
        start = time.perf_counter()
        out = pipe(prompt=text, num_inference_steps=30, height=512, width=512, guidance_scale=7.5)
        timings.append(time.perf_counter() - start)
        images.append(out.images[0])
        log.info("%s took %.2fs", text, timings[-1])

    save_all(images, Path(args.out))
    Path(args.out, "timings.json").write_text(json.dumps(timings))


if __name__ == "__main__":
    main()
