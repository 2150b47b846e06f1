import torch
import tomesd
from diffusers import StableDiffusionPipeline, PNDMScheduler

pipe = StableDiffusionPipeline.from_pretrained("runwayml/stable-diffusion-v1-5")
pipe.scheduler = PNDMScheduler.from_config(pipe.scheduler.config)
pipe = pipe.to("cuda")
pipe.half()
tomesd.apply_patch(pipe, ratio=0.5)

prompts = ["an old library", "a reading room"]
for i, text in enumerate(prompts):
    image = pipe(prompt=text, num_inference_steps=50, height=512, width=512).images[0]
    image.save(f"library_{i}.png")
