use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dfdd::costmodel;
use dfdd::image::Image;
use dfdd::kernels::{self, interleave, CropSide, Kernel};
use dfdd::numerics::{counters, hf_add, hf_mul, Half};
use dfdd::pipeline::{depth::mask, run_streaming, zone_map, CalibrationParams};
use dfdd::reference::reference_pipeline;

fn all_kernels() -> Vec<Kernel> {
    let (pass, dx, dy) = kernels::deriv_kernels();
    vec![
        kernels::gaussian5(),
        kernels::box2(CropSide::TopLeft),
        kernels::box2(CropSide::BottomRight),
        kernels::upsampler_bilinear3(),
        kernels::upsampler_shifted4(CropSide::BottomRight),
        pass,
        dx,
        dy,
    ]
}

fn frame(w: usize, h: usize, seed: u64) -> Image<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, |_, _| rng.random::<u8>())
}

fn params(w: usize, h: usize, n: usize, d: bool, a: f64, b: f64) -> CalibrationParams {
    let mut p = CalibrationParams::uniform(w, h, n, d, a, b);
    for (i, o) in p.omega.iter_mut().enumerate() {
        *o = 0.1 + 0.05 * i as f64;
    }
    p
}

proptest! {
    #[test]
    fn half_add_mul_commute_and_never_subnormal(x in any::<u16>(), y in any::<u16>()) {
        let (a, b) = (Half::from_bits(x), Half::from_bits(y));
        for (r, s) in [(hf_add(a, b), hf_add(b, a)), (hf_mul(a, b), hf_mul(b, a))] {
            prop_assert_eq!(r.to_bits(), s.to_bits());
            let exp = (r.to_bits() >> 10) & 0x1f;
            prop_assert!(exp != 0 || r.to_bits() & 0x3ff == 0);
        }
    }

    #[test]
    fn interleave_composes(k in 0usize..8, a in 0u32..3, b in 0u32..3) {
        let base = &all_kernels()[k];
        let twice = interleave(&interleave(base, a), b);
        let once = interleave(base, a + b);
        prop_assert_eq!(twice.taps, once.taps);
        prop_assert_eq!(twice.separable, once.separable);
    }

    #[test]
    fn separable_factors_and_power_of_two_denominators(k in 0usize..8, s in 0u32..4) {
        let ker = interleave(&all_kernels()[k], s);
        prop_assert!(ker.has_power_of_two_denominators());
        if let Some((col, row)) = &ker.separable {
            for (i, c) in col.iter().enumerate() {
                for (j, r) in row.iter().enumerate() {
                    prop_assert_eq!(ker.taps[i][j], c * r);
                }
            }
        }
    }

    #[test]
    fn zone_index_grows_with_radius(w in 8usize..80, h in 8usize..80, cx in 0.0f64..1.0, cy in 0.0f64..1.0) {
        let mut p = CalibrationParams::uniform(w, h, 1, false, -1.0, 1.0);
        // the optical centre is resolved to half pixels
        let half = |t: f64, n: usize| (t * 2.0 * (n - 1) as f64).round() / 2.0;
        let c = [half(cx, w), half(cy, h)];
        p.optical_center = Some(c);
        for (z, r2) in p.zones.iter_mut().zip(dfdd::pipeline::params::equal_width_radii(w, h, c)) {
            z.r2_max = r2;
        }
        prop_assume!(p.validate().is_ok());
        let map = zone_map(w, h, &p);
        let mut by_r2: Vec<(f64, u8)> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                ((x - c[0]).powi(2) + (y - c[1]).powi(2), map[i])
            })
            .collect();
        by_r2.sort_by(|a, b| a.0.total_cmp(&b.0));
        prop_assert!(by_r2.windows(2).all(|p| p[0].1 <= p[1].1 || p[0].0 == p[1].0));
    }

    #[test]
    fn valid_pixels_respect_zone_limits(
        z in proptest::collection::vec(-1.0f64..3.0, 24 * 16),
        c in proptest::collection::vec(-1.0f64..1.0, 24 * 16),
        thresh in -0.5f64..0.5,
    ) {
        let mut p = CalibrationParams::uniform(24, 16, 1, false, -1.0, 1.0);
        for (i, zone) in p.zones.iter_mut().enumerate() {
            zone.c_thresh = thresh + 0.01 * i as f64;
            zone.z_min = 0.1 * (i % 4) as f64;
            zone.z_max = 1.0 + 0.1 * i as f64;
        }
        let zi = Image::from_vec(24, 16, z.clone()).unwrap();
        let ci = Image::from_vec(24, 16, c.clone()).unwrap();
        let map = mask(&zi, &ci, &p);
        let zones = zone_map(24, 16, &p);
        for i in 0..z.len() {
            let zone = &p.zones[zones[i] as usize];
            if map.valid[i] {
                prop_assert!(zone.z_min < z[i] && z[i] < zone.z_max && c[i] >= zone.c_thresh);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn streaming_matches_reference_and_divides_once(
        wq in 4usize..12,
        hq in 4usize..10,
        n in 1usize..3,
        d in any::<bool>(),
        a in -0.3f64..-0.01,
        b in 0.5f64..3.0,
        seed in any::<u64>(),
    ) {
        let (w, h) = (4 * wq, 4 * hq);
        let (i1, i2) = (frame(w, h, seed), frame(w, h, seed ^ 0xABCD));
        let p = params(w, h, n, d, a, b);
        let (z, c) = reference_pipeline::<Half>(&i1, &i2, &p).unwrap();
        let before = counters::snapshot();
        let run = run_streaming::<Half>(&i1, &i2, &p).unwrap();
        let divs = counters::snapshot().since(before).divs;
        let bits = |im: &Image<Half>| im.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&z), bits(&run.z_raw));
        prop_assert_eq!(bits(&c), bits(&run.confidence));
        prop_assert_eq!(divs, (w * h) as u64);
    }
}

#[test]
fn resources_grow_with_configuration() {
    for n in 1..=3 {
        let plain = costmodel::pipeline_flops(n, false).total_flops();
        let deriv = costmodel::pipeline_flops(n, true).total_flops();
        assert!(plain < deriv);
        assert!(costmodel::pipeline_lines(n, false).total_lines() < costmodel::pipeline_lines(n, true).total_lines());
        if n > 1 {
            assert!(costmodel::pipeline_flops(n - 1, true).total_flops() < deriv);
        }
    }
}
