use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_ZONES: usize = 16;
pub const N_OMEGA: usize = 6;

/// Per radial zone parameters. `a` and `b` hold one entry per scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub r2_max: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c_thresh: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Everything the depth pipeline needs besides the two images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub n_scales: usize,
    pub derivatives_enabled: bool,
    /// `(x, y)` in pixels. `None` means the geometric image centre.
    #[serde(default)]
    pub optical_center: Option<[f64; 2]>,
    pub zones: Vec<Zone>,
    pub omega: Vec<f64>,
    /// Affine map `[h0 h1 h2 h3 h4 h5]` taking output `(x, y)` to the source
    /// position `(h0 x + h1 y + h2, h3 x + h4 y + h5)` in the second image.
    pub homography: [f64; 6],
    pub denoise: bool,
}

pub const IDENTITY_HOMOGRAPHY: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Squared outer radii of 16 equal-width annuli reaching the image corner.
pub fn equal_width_radii(width: usize, height: usize, center: [f64; 2]) -> Vec<f64> {
    let corner = corner_radius(width, height, center);
    let step = corner / N_ZONES as f64;
    (0..N_ZONES)
        .map(|k| {
            let r = step * (k + 1) as f64;
            if k + 1 == N_ZONES {
                // strictly beyond the farthest pixel
                (r * r).max(corner * corner) * (1.0 + 1e-9) + 1e-9
            } else {
                r * r
            }
        })
        .collect()
}

/// Distance from `center` to the farthest pixel centre.
pub fn corner_radius(width: usize, height: usize, center: [f64; 2]) -> f64 {
    let dx = center[0].max(width as f64 - 1.0 - center[0]);
    let dy = center[1].max(height as f64 - 1.0 - center[1]);
    (dx * dx + dy * dy).sqrt()
}

pub fn geometric_center(width: usize, height: usize) -> [f64; 2] {
    [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0]
}

impl CalibrationParams {
    /// Uniform parameters for a `width x height` sensor.
    pub fn uniform(
        width: usize,
        height: usize,
        n_scales: usize,
        derivatives_enabled: bool,
        a: f64,
        b: f64,
    ) -> Self {
        let radii = equal_width_radii(width, height, geometric_center(width, height));
        let zones = radii
            .into_iter()
            .map(|r2_max| Zone {
                r2_max,
                a: vec![a; n_scales],
                b: vec![b; n_scales],
                c_thresh: 0.0,
                z_min: 0.0,
                z_max: 100.0,
            })
            .collect();
        CalibrationParams {
            n_scales,
            derivatives_enabled,
            optical_center: None,
            zones,
            omega: vec![1.0 / N_OMEGA as f64; N_OMEGA],
            homography: IDENTITY_HOMOGRAPHY,
            denoise: false,
        }
    }

    pub fn center(&self, width: usize, height: usize) -> [f64; 2] {
        self.optical_center.unwrap_or_else(|| geometric_center(width, height))
    }

    /// Number of `(V, W)` estimates per scale.
    pub fn estimates_per_scale(&self) -> usize {
        if self.derivatives_enabled {
            3
        } else {
            1
        }
    }

    pub fn omega_for(&self, scale: usize, d: usize) -> f64 {
        self.omega[3 * scale + d]
    }

    /// Lists every schema violation rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(1..=2).contains(&self.n_scales) {
            errs.push(format!("n_scales: must be 1 or 2, got {}", self.n_scales));
        }
        if self.zones.len() != N_ZONES {
            errs.push(format!("zones: expected {N_ZONES} entries, got {}", self.zones.len()));
        }
        if self.omega.len() != N_OMEGA {
            errs.push(format!("omega: expected {N_OMEGA} entries, got {}", self.omega.len()));
        }
        if self.omega.iter().any(|w| !w.is_finite()) {
            errs.push("omega: values must be finite".into());
        }
        if self.homography.iter().any(|h| !h.is_finite()) {
            errs.push("homography: values must be finite".into());
        }
        if let Some(c) = self.optical_center {
            if c.iter().any(|v| !v.is_finite()) {
                errs.push("optical_center: values must be finite".into());
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, z) in self.zones.iter().enumerate() {
            if !(z.r2_max > prev) {
                errs.push(format!("zones[{i}].r2_max: radii must be strictly increasing"));
            }
            prev = z.r2_max;
            if z.a.len() != self.n_scales {
                errs.push(format!("zones[{i}].a: expected {} entries, got {}", self.n_scales, z.a.len()));
            }
            if z.b.len() != self.n_scales {
                errs.push(format!("zones[{i}].b: expected {} entries, got {}", self.n_scales, z.b.len()));
            }
            if z.a.iter().chain(&z.b).any(|v| !v.is_finite()) {
                errs.push(format!("zones[{i}]: a and b must be finite"));
            }
            if z.c_thresh.is_nan() || z.z_min.is_nan() || z.z_max.is_nan() {
                errs.push(format!("zones[{i}]: thresholds must not be NaN"));
            }
            if z.z_min >= z.z_max {
                errs.push(format!("zones[{i}]: z_min must be below z_max"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Checks the outermost zone reaches the farthest pixel of the frame.
    pub fn check_covers(&self, width: usize, height: usize) -> Result<()> {
        let c = self.center(width, height);
        let r = corner_radius(width, height, c);
        match self.zones.last() {
            Some(z) if z.r2_max > r * r => Ok(()),
            _ => Err(Error::InvalidParams(vec![format!(
                "zones[15].r2_max: must exceed the corner radius squared {:.3}",
                r * r
            )])),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: CalibrationParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_valid_and_round_trips() {
        let mut p = CalibrationParams::uniform(64, 48, 2, true, -1.0, 2.0);
        p.zones[3].z_max = 5.0;
        p.validate().unwrap();
        p.check_covers(64, 48).unwrap();
        let back = CalibrationParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut p = CalibrationParams::uniform(64, 48, 2, true, -1.0, 2.0);
        p.omega.pop();
        p.zones[2].a.pop();
        p.zones[5].r2_max = 0.0;
        match p.validate() {
            Err(Error::InvalidParams(v)) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn radii_reach_corner() {
        let r = equal_width_radii(480, 400, geometric_center(480, 400));
        let corner = 239.5f64.powi(2) + 199.5f64.powi(2);
        assert!(r[15] > corner);
        assert!(r[14] < corner);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }
}
