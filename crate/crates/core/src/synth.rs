//! Thin-lens defocus simulator: renders differentially defocused pairs of
//! a textured front-parallel plane.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{save_pgm8, Image};

/// Camera model. Lengths in metres, noise in 8-bit intensity units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    pub focal_length: f64,
    pub aperture: f64,
    pub s1: f64,
    pub s2: f64,
    pub pixel_pitch: f64,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    /// Focus shift at the image corner, in dioptres, growing with the
    /// square of the radius. Zero disables field curvature.
    #[serde(default)]
    pub field_curvature: f64,
}

/// Lens-to-sensor distance bringing depth `z` into focus.
pub fn sensor_distance_for(focal_length: f64, z: f64) -> f64 {
    1.0 / (1.0 / focal_length - 1.0 / z)
}

impl Default for OpticalConfig {
    fn default() -> Self {
        let f = 0.008;
        OpticalConfig {
            focal_length: f,
            aperture: 0.005,
            s1: sensor_distance_for(f, 0.65),
            s2: sensor_distance_for(f, 0.55),
            pixel_pitch: 3.6e-6,
            width: 64,
            height: 48,
            noise_sigma: 0.0,
            field_curvature: 0.0,
        }
    }
}

impl OpticalConfig {
    fn s(&self, sensor: usize) -> f64 {
        match sensor {
            1 => self.s1,
            2 => self.s2,
            _ => panic!("sensor must be 1 or 2"),
        }
    }

    /// `1/f - 1/s_k`: the inverse depth sensor `k` focuses on.
    pub fn focus_power(&self, sensor: usize) -> f64 {
        1.0 / self.focal_length - 1.0 / self.s(sensor)
    }

    /// Inverse depth at which both sensors blur equally. Between the two
    /// focus powers, `s1 (rho - c1) = s2 (c2 - rho)`.
    pub fn crossover_power(&self) -> f64 {
        (self.s1 * self.focus_power(1) + self.s2 * self.focus_power(2)) / (self.s1 + self.s2)
    }

    pub fn crossover_depth(&self) -> f64 {
        1.0 / self.crossover_power()
    }
}

/// Gaussian PSF width in pixels: half the blur-circle radius.
pub fn blur_sigma(z: f64, sensor: usize, cfg: &OpticalConfig) -> f64 {
    blur_sigma_at(z, sensor, cfg, 0.0)
}

/// [`blur_sigma`] with the focus shifted by `shift` dioptres.
fn blur_sigma_at(z: f64, sensor: usize, cfg: &OpticalConfig, shift: f64) -> f64 {
    let s = cfg.s(sensor);
    let r = cfg.aperture / 2.0 * s * (cfg.focus_power(sensor) + shift - 1.0 / z).abs();
    r / cfg.pixel_pitch / 2.0
}

/// Normalized 1-D Gaussian taps out to `4 sigma`.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma < 1e-6 {
        return vec![1.0];
    }
    let r = (4.0 * sigma).ceil() as isize;
    let t: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = t.iter().sum();
    t.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur, replicate-edge.
pub fn blur_image(img: &Image<f64>, sigma: f64) -> Image<f64> {
    let t = gaussian_taps(sigma);
    let r = (t.len() / 2) as isize;
    let h = Image::from_fn(img.width, img.height, |x, y| {
        t.iter()
            .enumerate()
            .map(|(k, w)| w * img.get_clamped(x as isize + k as isize - r, y as isize))
            .sum::<f64>()
    });
    Image::from_fn(img.width, img.height, |x, y| {
        t.iter()
            .enumerate()
            .map(|(k, w)| w * h.get_clamped(x as isize, y as isize + k as isize - r))
            .sum::<f64>()
    })
}

/// Spatially varying blur: every output pixel uses its own sigma.
fn blur_varying(img: &Image<f64>, sigma: &Image<f64>) -> Image<f64> {
    Image::from_fn(sigma.width, sigma.height, |x, y| {
        let s = sigma.get(x, y);
        let t = gaussian_taps(s);
        let r = (t.len() / 2) as isize;
        let mut acc = 0.0;
        for (j, wy) in t.iter().enumerate() {
            for (i, wx) in t.iter().enumerate() {
                acc += wx * wy * img.get_clamped(x as isize + i as isize - r, y as isize + j as isize - r);
            }
        }
        acc
    })
}

/// Texture recipe: a checkerboard plus uniform noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub square: usize,
    pub low: f64,
    pub high: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            square: 6,
            low: 60.0,
            high: 190.0,
            noise_amplitude: 50.0,
            seed: 7,
        }
    }
}

/// Renders a `width x height` texture.
pub fn make_texture(width: usize, height: usize, spec: &TextureSpec) -> Image<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Image::from_fn(width, height, |x, y| {
        let base = if ((x / spec.square) + (y / spec.square)).is_multiple_of(2) {
            spec.low
        } else {
            spec.high
        };
        base + spec.noise_amplitude * (rng.random::<f64>() - 0.5)
    })
}

/// A textured plane at one depth.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    /// Texture covering the field of view plus `margin` pixels on each side.
    pub texture: Image<f64>,
    pub margin: usize,
    pub z: f64,
    pub noise_seed: u64,
}

/// Margin wide enough for the blur at the dataset extremes.
pub fn texture_margin(cfg: &OpticalConfig, z_min: f64, z_max: f64) -> usize {
    let worst = [z_min, z_max]
        .iter()
        .flat_map(|&z| [blur_sigma_at(z, 1, cfg, cfg.field_curvature.abs()), blur_sigma_at(z, 2, cfg, cfg.field_curvature.abs())])
        .chain([blur_sigma(z_min, 1, cfg), blur_sigma(z_min, 2, cfg)])
        .fold(0.0, f64::max);
    (4.0 * worst).ceil() as usize + 2
}

/// Sharp image of the scene blurred for `sensor`, before noise and
/// quantization, cropped to the sensor.
pub fn render_linear(scene: &SceneSpec, sensor: usize, cfg: &OpticalConfig) -> Image<f64> {
    let m = scene.margin;
    let blurred = if cfg.field_curvature == 0.0 {
        blur_image(&scene.texture, blur_sigma(scene.z, sensor, cfg))
    } else {
        let (cx, cy) = (scene.texture.width as f64 / 2.0 - 0.5, scene.texture.height as f64 / 2.0 - 0.5);
        let corner = ((cfg.width as f64 / 2.0).powi(2) + (cfg.height as f64 / 2.0).powi(2)).sqrt();
        let sigma = Image::from_fn(scene.texture.width, scene.texture.height, |x, y| {
            let r2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (corner * corner);
            blur_sigma_at(scene.z, sensor, cfg, cfg.field_curvature * r2)
        });
        blur_varying(&scene.texture, &sigma)
    };
    Image::from_fn(cfg.width, cfg.height, |x, y| blurred.get(x + m, y + m))
}

fn quantize(img: &Image<f64>, noise: f64, rng: &mut ChaCha8Rng) -> Image<u8> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    img.map(|v| {
        let n = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
        (v + n).round().clamp(0.0, 255.0) as u8
    })
}

/// Renders the differential pair.
pub fn render_pair(scene: &SceneSpec, cfg: &OpticalConfig) -> (Image<u8>, Image<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.noise_seed);
    let i1 = quantize(&render_linear(scene, 1, cfg), cfg.noise_sigma, &mut rng);
    let i2 = quantize(&render_linear(scene, 2, cfg), cfg.noise_sigma, &mut rng);
    (i1, i2)
}

/// One rendered calibration pair.
#[derive(Clone, Debug)]
pub struct DatasetItem {
    pub index: usize,
    pub z_true: f64,
    pub seed: u64,
    pub i1: Image<u8>,
    pub i2: Image<u8>,
}

/// Depths `start, start + step, ...` strictly below `end`, or just `start`
/// when the interval is shorter than a step.
pub fn depth_sweep(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = (((end - start) / step) - 1e-9).ceil().max(1.0) as usize;
    (0..n).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect()
}

/// Renders a plane sweep with one shared texture.
pub fn make_dataset(cfg: &OpticalConfig, depths: &[f64], texture: &TextureSpec, seed: u64) -> Result<Vec<DatasetItem>> {
    if depths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if depths.iter().any(|&z| !(z > 0.0)) {
        return Err(Error::InvalidParams(vec!["depths must be positive".into()]));
    }
    let lo = depths.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = depths.iter().cloned().fold(0.0, f64::max);
    let margin = texture_margin(cfg, lo, hi);
    let tex = make_texture(cfg.width + 2 * margin, cfg.height + 2 * margin, texture);
    Ok(depths
        .iter()
        .enumerate()
        .map(|(index, &z)| {
            let item_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64);
            let scene = SceneSpec {
                texture: tex.clone(),
                margin,
                z,
                noise_seed: item_seed,
            };
            let (i1, i2) = render_pair(&scene, cfg);
            DatasetItem {
                index,
                z_true: z,
                seed: item_seed,
                i1,
                i2,
            }
        })
        .collect())
}

pub fn pair_file_names(index: usize) -> (String, String) {
    (format!("pair_{index:03}_1.pgm"), format!("pair_{index:03}_2.pgm"))
}

/// Writes the PGM pairs and `manifest.csv` into `dir`.
pub fn save_dataset(items: &[DatasetItem], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(std::fs::File::create(dir.join("manifest.csv"))?);
    w.write_record(["index", "z_true_m", "seed", "image1", "image2"])?;
    for it in items {
        let (a, b) = pair_file_names(it.index);
        save_pgm8(dir.join(&a), &it.i1)?;
        save_pgm8(dir.join(&b), &it.i2)?;
        w.write_record([it.index.to_string(), format!("{:.4}", it.z_true), it.seed.to_string(), a, b])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    index: usize,
    z_true_m: f64,
    seed: u64,
    image1: String,
    image2: String,
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<DatasetItem>> {
    let dir = dir.as_ref();
    let mut r = csv::Reader::from_path(dir.join("manifest.csv"))?;
    let mut items = Vec::new();
    for row in r.deserialize() {
        let row: ManifestRow = row?;
        items.push(DatasetItem {
            index: row.index,
            z_true: row.z_true_m,
            seed: row.seed,
            i1: crate::image::load_pgm(dir.join(&row.image1))?,
            i2: crate::image::load_pgm(dir.join(&row.image2))?,
        });
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(items)
}

/// Writes the optical configuration next to a dataset.
pub fn save_config(cfg: &OpticalConfig, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(cfg)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_focus_plane_is_sharp() {
        let cfg = OpticalConfig::default();
        let z1 = 1.0 / cfg.focus_power(1);
        assert!(blur_sigma(z1, 1, &cfg) < 1e-9);
        assert!(blur_sigma(z1, 2, &cfg) > 0.5);
    }

    #[test]
    fn far_limit() {
        let cfg = OpticalConfig::default();
        let lim = cfg.aperture / 2.0 * cfg.s1 * cfg.focus_power(1) / cfg.pixel_pitch / 2.0;
        assert!((blur_sigma(1e9, 1, &cfg) - lim).abs() < 1e-6);
    }

    #[test]
    fn opposite_slopes_between_focus_depths() {
        let cfg = OpticalConfig::default();
        let (za, zb) = (1.0 / cfg.focus_power(2), 1.0 / cfg.focus_power(1));
        for k in 1..10 {
            let z = za + (zb - za) * k as f64 / 10.0;
            let d1 = blur_sigma(z + 1e-4, 1, &cfg) - blur_sigma(z - 1e-4, 1, &cfg);
            let d2 = blur_sigma(z + 1e-4, 2, &cfg) - blur_sigma(z - 1e-4, 2, &cfg);
            assert!(d1 < 0.0 && d2 > 0.0);
        }
    }

    #[test]
    fn crossover_blurs_match() {
        let cfg = OpticalConfig::default();
        let z = cfg.crossover_depth();
        assert!((blur_sigma(z, 1, &cfg) - blur_sigma(z, 2, &cfg)).abs() < 1e-9);
        assert!(z > 0.5 && z < 0.9);
    }

    #[test]
    fn sweep_counts() {
        assert_eq!(depth_sweep(0.24, 1.36, 0.02).len(), 56);
        assert_eq!(depth_sweep(0.7, 0.72, 0.02), vec![0.7]);
        let d = depth_sweep(0.24, 1.36, 0.02);
        assert!((d[55] - 1.34).abs() < 1e-12);
    }

    #[test]
    fn noiseless_in_focus_pair_is_texture() {
        let cfg = OpticalConfig::default();
        let spec = TextureSpec::default();
        let tex = make_texture(cfg.width + 20, cfg.height + 20, &spec);
        let scene = SceneSpec {
            texture: tex.clone(),
            margin: 10,
            z: 1.0 / cfg.focus_power(1),
            noise_seed: 1,
        };
        let (i1, _) = render_pair(&scene, &cfg);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                assert_eq!(i1.get(x, y), tex.get(x + 10, y + 10).round().clamp(0.0, 255.0) as u8);
            }
        }
    }

    #[test]
    fn render_is_linear() {
        let cfg = OpticalConfig::default();
        let a = make_texture(100, 80, &TextureSpec::default());
        let b = make_texture(100, 80, &TextureSpec { seed: 99, square: 3, ..TextureSpec::default() });
        let sum = a.zip_map(&b, |p, q| p + q).unwrap();
        let scene = |t: Image<f64>| SceneSpec {
            texture: t,
            margin: 16,
            z: 0.6,
            noise_seed: 0,
        };
        let ra = render_linear(&scene(a), 2, &cfg);
        let rb = render_linear(&scene(b), 2, &cfg);
        let rs = render_linear(&scene(sum), 2, &cfg);
        for i in 0..rs.len() {
            assert!((rs.data[i] - ra.data[i] - rb.data[i]).abs() < 1e-9);
        }
    }
}
