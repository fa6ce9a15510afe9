use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::image::{save_pgm16, Image};

use super::params::CalibrationParams;
use super::zones::zone_map;

/// Final per-pixel output.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Unmasked `C / S`, widened to f64.
    pub z_raw: Vec<f64>,
    pub confidence: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn depth(&self, i: usize) -> Option<f64> {
        self.valid[i].then_some(self.z_raw[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn density(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len() as f64
    }

    pub fn mean_valid_confidence(&self) -> f64 {
        let n = self.valid_count();
        if n == 0 {
            return 0.0;
        }
        self.confidence
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(c, _)| c)
            .sum::<f64>()
            / n as f64
    }

    /// Depth in millimetres, 0 where null.
    pub fn to_mm(&self) -> Image<u16> {
        let data = (0..self.valid.len())
            .map(|i| match self.depth(i) {
                Some(z) => (z * 1000.0).round().clamp(1.0, 65535.0) as u16,
                None => 0,
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "depth_m", "confidence"])?;
        for i in 0..self.valid.len() {
            if let Some(z) = self.depth(i) {
                out.write_record([
                    (i % self.width).to_string(),
                    (i / self.width).to_string(),
                    format!("{z:.6}"),
                    format!("{:.6e}", self.confidence[i]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, pgm: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        save_pgm16(pgm, &self.to_mm())?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))
    }
}

/// Applies per-zone confidence and depth-range limits.
pub fn mask(z_raw: &Image<f64>, confidence: &Image<f64>, params: &CalibrationParams) -> DepthMap {
    let zones = zone_map(z_raw.width, z_raw.height, params);
    let valid = (0..z_raw.len())
        .map(|i| {
            let zp = &params.zones[zones[i] as usize];
            let (z, c) = (z_raw.data[i], confidence.data[i]);
            z.is_finite() && c.is_finite() && c >= zp.c_thresh && zp.z_min < z && z < zp.z_max
        })
        .collect();
    DepthMap {
        width: z_raw.width,
        height: z_raw.height,
        z_raw: z_raw.data.clone(),
        confidence: confidence.data.clone(),
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_rules() {
        let mut p = CalibrationParams::uniform(8, 8, 1, false, -1.0, 1.0);
        for z in &mut p.zones {
            z.c_thresh = 1.0;
            z.z_min = 0.5;
            z.z_max = 1.5;
        }
        let zero_c = mask(&Image::new(8, 8, 1.0), &Image::new(8, 8, 0.0), &p);
        assert_eq!(zero_c.valid_count(), 0);
        let ok = mask(&Image::new(8, 8, 1.0), &Image::new(8, 8, 2.0), &p);
        assert_eq!(ok.valid_count(), 64);
        let nan = mask(&Image::new(8, 8, f64::NAN), &Image::new(8, 8, 2.0), &p);
        assert_eq!(nan.valid_count(), 0);
        let mut buf = Vec::new();
        ok.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 65);
        assert!(ok.to_mm().data.iter().all(|&v| v == 1000));
    }
}
