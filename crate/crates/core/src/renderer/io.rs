//! Scene files (`splatscene-v1` JSON) and 8-bit PPM/PGM export.
//!
//! Scene JSON shape:
//!
//! ```json
//! {
//!   "version": "splatscene-v1",
//!   "background": [1.0, 1.0, 1.0],
//!   "gaussians": [
//!     { "position": [0, 0, 0], "log_scale": [-3, -3, -3],
//!       "rotation": [1, 0, 0, 0], "color": [1, 0, 0], "opacity_logit": -2 }
//!   ]
//! }
//! ```
//!
//! Unknown keys are rejected. Rotation is `(w, x, y, z)`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Gaussian3D, Image, SplatScene};
use crate::buffer::Buffer;
use crate::error::{Error, Result};

pub const SCENE_VERSION: &str = "splatscene-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    version: String,
    background: [f64; 3],
    gaussians: Vec<Gaussian3D>,
}

pub fn scene_to_json(scene: &SplatScene) -> String {
    let file = SceneFile {
        version: SCENE_VERSION.to_string(),
        background: scene.background,
        gaussians: scene.gaussians.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("scene serializes");
    s.push('\n');
    s
}

pub fn scene_from_json(text: &str) -> Result<SplatScene> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::SceneFormat(e.to_string()))?;
    if file.version != SCENE_VERSION {
        return Err(Error::SceneFormat(format!(
            "field `version`: expected \"{SCENE_VERSION}\", found \"{}\"",
            file.version
        )));
    }
    if file.background.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::SceneFormat("field `background`: components must lie in [0, 1]".into()));
    }
    for (i, g) in file.gaussians.iter().enumerate() {
        g.validate(i).map_err(|e| Error::SceneFormat(e.to_string()))?;
    }
    Ok(SplatScene::new(file.gaussians, file.background))
}

pub fn write_scene(path: &Path, scene: &SplatScene) -> Result<()> {
    fs::write(path, scene_to_json(scene)).map_err(|e| Error::io(path, e))
}

pub fn read_scene(path: &Path) -> Result<SplatScene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    scene_from_json(&text).map_err(|e| match e {
        Error::SceneFormat(msg) => Error::SceneFormat(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// `[0, 1]` to 8-bit, rounding half up.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn netpbm(magic: &str, buf: &Buffer) -> Vec<u8> {
    let mut out = format!("{magic}\n{} {}\n255\n", buf.width, buf.height).into_bytes();
    out.extend(buf.data.iter().map(|&v| quantize(v)));
    out
}

/// Binary PPM (P6) of a 3-channel buffer.
pub fn encode_ppm(rgb: &Buffer) -> Vec<u8> {
    assert_eq!(rgb.channels, 3, "PPM needs 3 channels");
    netpbm("P6", rgb)
}

/// Binary PGM (P5) of a 1-channel buffer.
pub fn encode_pgm(gray: &Buffer) -> Vec<u8> {
    assert_eq!(gray.channels, 1, "PGM needs 1 channel");
    netpbm("P5", gray)
}

pub fn write_ppm(path: &Path, rgb: &Buffer) -> Result<()> {
    fs::write(path, encode_ppm(rgb)).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, gray: &Buffer) -> Result<()> {
    fs::write(path, encode_pgm(gray)).map_err(|e| Error::io(path, e))
}

/// Writes `image.rgb` to `path` and the alpha channel next to it with a
/// `.pgm` extension.
pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    write_ppm(path, &image.rgb)?;
    write_pgm(&path.with_extension("pgm"), &image.alpha)
}

/// Decodes a P5/P6 file written by this module (no comments, maxval 255).
pub fn decode_netpbm(bytes: &[u8]) -> Result<Buffer> {
    let bad = |m: &str| Error::SceneFormat(format!("netpbm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P6" => 3,
        "P5" => 1,
        m => return Err(bad(&format!("unsupported magic {m}"))),
    };
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    if fields[3] != "255" {
        return Err(bad("maxval must be 255"));
    }
    let body = bytes.get(pos..).ok_or_else(|| bad("missing body"))?;
    if body.len() != w * h * channels {
        return Err(bad("body length"));
    }
    Buffer::from_vec(w, h, channels, body.iter().map(|&b| b as f64 / 255.0).collect())
}
