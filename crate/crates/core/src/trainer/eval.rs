use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::renderer::{render, Camera, SplatScene};
use crate::rewards::{aes_proxy, compression_reward};

pub const EVAL_VIEWS: usize = 20;

/// Scores of a scene over evenly spaced azimuths at zero elevation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub views: usize,
    /// Radians between consecutive views.
    pub azimuth_step: f64,
    pub mean_aes_proxy: f64,
    pub mean_compression_reward: f64,
}

pub fn evaluate_views(scene: &SplatScene, width: usize, height: usize, scale: f64, views: usize) -> Result<EvalReport> {
    if views == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one view".into()));
    }
    let step = TAU / views as f64;
    let (mut aes, mut comp) = (0.0, 0.0);
    for i in 0..views {
        let image = render(scene, &Camera::new(i as f64 * step, 0.0, width, height, scale))?;
        aes += aes_proxy(&image.rgb);
        comp += compression_reward(&image.rgb);
    }
    Ok(EvalReport {
        views,
        azimuth_step: step,
        mean_aes_proxy: aes / views as f64,
        mean_compression_reward: comp / views as f64,
    })
}
