import torch
import tomesd
from diffusers import StableDiffusionPipeline, PNDMScheduler

pipe = StableDiffusionPipeline.from_pretrained("runwayml/stable-diffusion-v1-5", torch_dtype=torch.float16)
pipe.scheduler = PNDMScheduler.from_config(pipe.scheduler.config)
pipe = pipe.to("cuda")
tomesd.apply_patch(pipe, ratio=0.5)

image = pipe(prompt="an old library", num_inference_steps=50, height=512, width=512).images[0]
image.save("library.png")
