//! Renders key attributes as a diffusers-style inference script.
//!
//! The output is what the built-in extraction rules recognise, so
//! `extract_attributes(render(a))` recovers `a` for every valid `a`.

use std::fmt::Write;

use crate::task::{AccelConfig, Conditioning, KeyAttributes};

fn hub_path(model_id: &str) -> String {
    let org = match model_id {
        "stable-diffusion-v1-5" => "runwayml",
        "stable-diffusion-2-1" | "stable-diffusion-xl-base-1.0" => "stabilityai",
        "DiT-XL-2-256" => "facebook",
        "PixArt-XL-2-1024-MS" | "PixArt-Sigma-XL-2-1024-MS" => "PixArt-alpha",
        _ => return model_id.to_string(),
    };
    format!("{org}/{model_id}")
}

fn tgate_loader(pipeline: &str) -> &'static str {
    if pipeline.contains("XL") {
        "TgateSDXLLoader"
    } else if pipeline.starts_with("PixArt") {
        "TgatePixArtLoader"
    } else {
        "TgateSDLoader"
    }
}

/// Renders a runnable-looking script. `scaffold` is an optional header,
/// emitted verbatim as comment lines at the top.
pub fn render_program(attrs: &KeyAttributes, scaffold: Option<&str>) -> String {
    let accel: AccelConfig = attrs.accel_config();
    let mut s = String::new();
    if let Some(header) = scaffold {
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    s.push_str("import torch\n");
    let _ = writeln!(
        s,
        "from diffusers import {}, {}",
        attrs.pipeline_class, attrs.scheduler_class
    );
    s.push_str("from diffusers.utils import load_image\n");
    let controlnet = attrs.pipeline_class.contains("ControlNet");
    if controlnet {
        s.push_str("from diffusers import ControlNetModel\n");
    }
    if !attrs.preprocessors.is_empty() {
        s.push_str("from controlnet_aux import CannyDetector, MidasDetector, OpenposeDetector\n");
    }
    if accel.merge_ratio.is_some() {
        s.push_str("import tomesd\n");
    }
    if accel.cache_interval.is_some() {
        s.push_str("from DeepCache import DeepCacheSDHelper\n");
    }
    if accel.gate_step.is_some() {
        let _ = writeln!(s, "from tgate import {}", tgate_loader(&attrs.pipeline_class));
    }
    s.push('\n');

    let dtype = if accel.half_precision { "torch.float16" } else { "torch.float32" };
    if controlnet {
        let hint = attrs.preprocessors.iter().next().map_or("canny", String::as_str);
        let _ = writeln!(
            s,
            "controlnet = ControlNetModel.from_pretrained(\"lllyasviel/sd-controlnet-{hint}\", torch_dtype={dtype})"
        );
        let _ = writeln!(
            s,
            "pipe = {}.from_pretrained(\"{}\", controlnet=controlnet, torch_dtype={dtype})",
            attrs.pipeline_class,
            hub_path(&attrs.model_id)
        );
    } else {
        let _ = writeln!(
            s,
            "pipe = {}.from_pretrained(\"{}\", torch_dtype={dtype})",
            attrs.pipeline_class,
            hub_path(&attrs.model_id)
        );
    }
    let _ = writeln!(
        s,
        "pipe.scheduler = {}.from_config(pipe.scheduler.config)",
        attrs.scheduler_class
    );
    s.push_str("pipe = pipe.to(\"cuda\")\n");

    if let Some(r) = accel.merge_ratio {
        let _ = write!(s, "\n# token merging\ntomesd.apply_patch(pipe, ratio={r:?})\n");
    }
    if let Some(k) = accel.cache_interval {
        let _ = write!(
            s,
            "\n# feature reuse\nhelper = DeepCacheSDHelper(pipe=pipe)\nhelper.set_params(cache_interval={k}, cache_branch_id=0)\nhelper.enable()\n"
        );
    }
    if let Some(g) = accel.gate_step {
        let _ = write!(
            s,
            "\n# gated activation\npipe = {}(pipe, gate_step={g}, num_inference_steps={})\n",
            tgate_loader(&attrs.pipeline_class),
            attrs.num_inference_steps
        );
    }

    s.push('\n');
    let mut control_image = None;
    for p in &attrs.preprocessors {
        let (var, ctor) = match p.as_str() {
            "canny" => ("canny", "CannyDetector()".to_string()),
            "depth" => ("depth", "MidasDetector.from_pretrained(\"lllyasviel/Annotators\")".to_string()),
            "openpose" => ("openpose", "OpenposeDetector.from_pretrained(\"lllyasviel/Annotators\")".to_string()),
            other => (other, format!("{other}()")),
        };
        let _ = writeln!(s, "{var} = {ctor}");
        if control_image.is_none() {
            let _ = writeln!(s, "control_image = {var}(load_image(\"input.png\"))");
            control_image = Some("control_image");
        }
    }

    let size = format!(
        "num_inference_steps={}, height={}, width={}",
        attrs.num_inference_steps, attrs.resolution.height, attrs.resolution.width
    );
    match attrs.conditioning {
        Conditioning::Text2img => {
            s.push_str("prompt = \"a photograph of an astronaut riding a horse\"\n");
            match control_image {
                Some(img) if controlnet => {
                    let _ = writeln!(s, "image = pipe(prompt=prompt, image={img}, {size}).images[0]");
                }
                _ => {
                    let _ = writeln!(s, "image = pipe(prompt=prompt, {size}).images[0]");
                }
            }
        }
        Conditioning::Img2img => {
            s.push_str("prompt = \"a fantasy landscape, trending on artstation\"\n");
            s.push_str("init_image = load_image(\"input.png\")\n");
            let _ = writeln!(
                s,
                "image = pipe(prompt=prompt, image=init_image, strength=0.75, {size}).images[0]"
            );
        }
        Conditioning::Class2img => {
            s.push_str("class_ids = pipe.get_label_ids([\"golden retriever\"])\n");
            let _ = writeln!(s, "image = pipe(class_labels=class_ids, {size}).images[0]");
        }
    }
    s.push_str("image.save(\"output.png\")\n");
    s
}
