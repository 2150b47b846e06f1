import os
import sys

import numpy as np
import torch
from PIL import Image
from diffusers import StableDiffusionImg2ImgPipeline, PNDMScheduler
from diffusers.utils import load_image

# Earlier experiments, kept for reference:
# pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)
# image = pipe(prompt=prompt, image=init, strength=0.6, num_inference_steps=20)

DEVICE = "cuda" if torch.cuda.is_available() else "cpu"


def to_grid(images, cols=2):
    arrays = [np.asarray(im) for im in images]
    rows = [np.concatenate(arrays[i:i + cols], axis=1) for i in range(0, len(arrays), cols)]
    return Image.fromarray(np.concatenate(rows, axis=0))


pipe = StableDiffusionImg2ImgPipeline.from_pretrained("runwayml/stable-diffusion-v1-5")
pipe.scheduler = PNDMScheduler.from_config(pipe.scheduler.config)
pipe = pipe.to(DEVICE)

init = load_image(sys.argv[1] if len(sys.argv) > 1 else "sketch.png").resize((512, 512))
results = []
for seed in range(4):
    generator = torch.Generator(DEVICE).manual_seed(seed)
    out = pipe(prompt="a detailed oil painting", image=init, strength=0.6, num_inference_steps=50, height=512, width=512, generator=generator)
    results.append(out.images[0])

os.makedirs("out", exist_ok=True)
to_grid(results).save("out/grid.png")
