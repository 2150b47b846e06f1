import torch
from diffusers import StableDiffusionPipeline, DDIMScheduler

width = 512
height = 512
num_inference_steps = 50
# fewer steps are enough with DDIM
num_inference_steps = 30

pipe = StableDiffusionPipeline.from_pretrained("runwayml/stable-diffusion-v1-5")
pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)
pipe = pipe.to("cuda")


def warmup(p):
    # one short call so kernels are compiled before timing
    return p


warmup(pipe)
image = pipe(prompt="a red fox in the snow", num_inference_steps=num_inference_steps, height=height, width=width).images[0]
image.save("fox.png")
