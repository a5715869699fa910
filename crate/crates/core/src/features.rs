//! Assembly of the full per-icon feature vector: MC ++ HOG ++ AE.

use thiserror::Error;

use crate::autoencoder::{ae_encode, AeModel, AE_INPUT_SIDE, LATENT_DIM};
use crate::hog::{hog_features, prepare_for_hog, HOG_DIM};
use crate::mc::{mc_features, McError, MC_DIM};
use crate::pe::IconRaster;
use crate::raster::{composite_to_rgb, resize_bilinear};

pub const FEATURE_DIM: usize = MC_DIM + HOG_DIM + LATENT_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("autoencoder latent has {0} values, expected {LATENT_DIM}")]
    LatentSize(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IconFeatureVector(pub Vec<f64>);

impl IconFeatureVector {
    pub fn mc(&self) -> &[f64] {
        &self.0[..MC_DIM]
    }

    pub fn hog(&self) -> &[f64] {
        &self.0[MC_DIM..MC_DIM + HOG_DIM]
    }

    pub fn ae(&self) -> &[f64] {
        &self.0[MC_DIM + HOG_DIM..]
    }
}

/// `mc_00..mc_25, hog_000..hog_575, ae_000..ae_511`
pub fn feature_column_names() -> Vec<String> {
    (0..MC_DIM)
        .map(|i| format!("mc_{i:02}"))
        .chain((0..HOG_DIM).map(|i| format!("hog_{i:03}")))
        .chain((0..LATENT_DIM).map(|i| format!("ae_{i:03}")))
        .collect()
}

/// Channel-planar 3×32×32 autoencoder input, the same transform
/// [`icon_features`] applies before encoding.
pub fn ae_input(icon: &IconRaster, background: f64) -> Vec<f64> {
    resize_bilinear(&composite_to_rgb(icon, background), AE_INPUT_SIDE, AE_INPUT_SIDE).data
}

/// Composites the icon onto `background` and computes all three families.
/// MC runs on the original size, HOG on a 24×24 grayscale copy, the
/// autoencoder on a 32×32 copy.
pub fn icon_features(icon: &IconRaster, ae: &AeModel, background: f64) -> Result<IconFeatureVector, FeatureError> {
    let rgb = composite_to_rgb(icon, background);
    let mc = mc_features(&rgb)?;
    let hog = hog_features(&prepare_for_hog(&rgb)).expect("prepared image is 24x24");
    let latent = ae_encode(ae, &rgb);
    if latent.len() != LATENT_DIM {
        return Err(FeatureError::LatentSize(latent.len()));
    }
    let mut v = Vec::with_capacity(FEATURE_DIM);
    v.extend_from_slice(mc.as_slice());
    v.extend_from_slice(hog.as_slice());
    v.extend(latent);
    Ok(IconFeatureVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{ae_init, AeConfig};

    #[test]
    fn counts() {
        assert_eq!(FEATURE_DIM, 1114);
        let names = feature_column_names();
        assert_eq!(names.len(), 1114);
        assert_eq!(names[0], "mc_00");
        assert_eq!(names[26], "hog_000");
        assert_eq!(names[1113], "ae_511");
    }

    #[test]
    fn every_icon_size_gives_1114_features() {
        let ae = ae_init(&AeConfig::default());
        for (w, h) in [(16, 16), (24, 24), (32, 32), (48, 48), (3, 7)] {
            let icon = IconRaster::filled(w, h, [30, 60, 90, 200]);
            let f = icon_features(&icon, &ae, 1.0).unwrap();
            assert_eq!(f.0.len(), FEATURE_DIM);
            assert_eq!((f.mc().len(), f.hog().len(), f.ae().len()), (26, 576, 512));
            assert!(f.0.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn tiny_icon_is_rejected() {
        let ae = ae_init(&AeConfig::default());
        let icon = IconRaster::filled(2, 2, [0, 0, 0, 255]);
        assert!(matches!(icon_features(&icon, &ae, 1.0), Err(FeatureError::Mc(_))));
    }
}
