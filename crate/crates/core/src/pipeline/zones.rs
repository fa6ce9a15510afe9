//! Radial zone selection without square roots.

use super::params::{CalibrationParams, N_ZONES};

/// Raster-order zone tracker. Coordinates are kept doubled so a half-pixel
/// optical centre still gives integer squared distances.
pub struct ZoneCounter {
    width: usize,
    /// `4 * r2_max` per zone, in doubled units.
    limits: Vec<f64>,
    cx2: i64,
    x: usize,
    dx: i64,
    dy: i64,
    d2: i64,
    row_d2: i64,
}

impl ZoneCounter {
    pub fn new(width: usize, height: usize, params: &CalibrationParams) -> Self {
        let c = params.center(width, height);
        let (cx2, cy2) = ((2.0 * c[0]).round() as i64, (2.0 * c[1]).round() as i64);
        let limits = params.zones.iter().map(|z| 4.0 * z.r2_max).collect();
        let (dx, dy) = (-cx2, -cy2);
        ZoneCounter {
            width,
            limits,
            cx2,
            x: 0,
            dx,
            dy,
            d2: dx * dx + dy * dy,
            row_d2: dx * dx + dy * dy,
        }
    }

    /// Zone of the next pixel in raster order.
    pub fn next_zone(&mut self) -> usize {
        let d2 = self.d2 as f64;
        let zone = self.limits.iter().position(|&l| d2 < l).unwrap_or(N_ZONES - 1);
        // (d + 2)^2 = d^2 + 4d + 4
        self.x += 1;
        if self.x == self.width {
            self.x = 0;
            self.row_d2 += 4 * self.dy + 4;
            self.dy += 2;
            self.dx = -self.cx2;
            self.d2 = self.row_d2;
        } else {
            self.d2 += 4 * self.dx + 4;
            self.dx += 2;
        }
        zone
    }

    /// Current squared distance in doubled units (4x pixel units).
    pub fn doubled_d2(&self) -> i64 {
        self.d2
    }
}

/// Zone index of every pixel of a `width x height` frame.
pub fn zone_map(width: usize, height: usize, params: &CalibrationParams) -> Vec<u8> {
    let mut zc = ZoneCounter::new(width, height, params);
    (0..width * height).map(|_| zc.next_zone() as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centre_and_corner() {
        let p = CalibrationParams::uniform(480, 400, 1, false, -1.0, 1.0);
        let m = zone_map(480, 400, &p);
        assert_eq!(m[200 * 480 + 240], 0);
        assert_eq!(m[0], 15);
        assert_eq!(m[480 * 400 - 1], 15);
    }

    #[test]
    fn incremental_distance_is_exact() {
        let p = CalibrationParams::uniform(37, 23, 1, false, -1.0, 1.0);
        let mut zc = ZoneCounter::new(37, 23, &p);
        for y in 0..23i64 {
            for x in 0..37i64 {
                let (dx, dy) = (2 * x - 36, 2 * y - 22);
                assert_eq!(zc.doubled_d2(), dx * dx + dy * dy);
                zc.next_zone();
            }
        }
    }
}
