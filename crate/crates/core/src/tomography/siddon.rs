/// Axis-aligned pixel grid in physical coordinates. Row 0 is the top row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBox {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
}

impl GridBox {
    pub fn new(width: usize, height: usize, extent: f64) -> Self {
        Self {
            width,
            height,
            pixel_size: extent / width as f64,
        }
    }

    fn x_min(&self) -> f64 {
        -0.5 * self.width as f64 * self.pixel_size
    }

    fn y_max(&self) -> f64 {
        0.5 * self.height as f64 * self.pixel_size
    }
}

/// Exact pixel intersection lengths of the segment `origin + t * dir`,
/// `t in [t_min, t_max]`, with `dir` a unit vector. Appends
/// `(pixel_index, length)` pairs to `out` in traversal order and returns the
/// number appended.
pub fn trace_ray(
    grid: &GridBox,
    origin: (f64, f64),
    dir: (f64, f64),
    t_min: f64,
    t_max: f64,
    out: &mut Vec<(u32, f64)>,
) -> usize {
    let ps = grid.pixel_size;
    let x_min = grid.x_min();
    let x_max = -x_min;
    let y_max = grid.y_max();
    let y_min = -y_max;

    let (mut t0, mut t1) = (t_min, t_max);
    // Pixels are half-open like the index lookup below: columns own their
    // left edge, rows their top edge. An axis-parallel ray on the outer
    // boundary follows the same rule.
    for (o, d, lo, hi, owns_lo) in [(origin.0, dir.0, x_min, x_max, true), (origin.1, dir.1, y_min, y_max, false)] {
        if d == 0.0 {
            let outside = if owns_lo { o < lo || o >= hi } else { o <= lo || o > hi };
            if outside {
                return 0;
            }
        } else {
            let (a, b) = ((lo - o) / d, (hi - o) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t1 <= t0 {
        return 0;
    }

    // Next plane crossing along each axis, indexed from the low edge so the
    // crossing parameters are computed directly rather than accumulated.
    let axis = |o: f64, d: f64, lo: f64, n: usize| -> Option<(i64, i64)> {
        if d == 0.0 {
            return None;
        }
        let pos = (o + t0 * d - lo) / ps;
        let k = if d > 0.0 {
            pos.floor() as i64 + 1
        } else {
            pos.ceil() as i64 - 1
        };
        let step = if d > 0.0 { 1 } else { -1 };
        Some((k.clamp(-1, n as i64 + 1), step))
    };
    let plane_t = |o: f64, d: f64, lo: f64, k: i64| (lo + k as f64 * ps - o) / d;

    let mut xs = axis(origin.0, dir.0, x_min, grid.width);
    let mut ys = axis(origin.1, dir.1, y_min, grid.height);
    let start = out.len();
    let mut t = t0;
    let min_len = 1e-12 * ps;
    loop {
        let tx = xs.map_or(f64::INFINITY, |(k, _)| plane_t(origin.0, dir.0, x_min, k));
        let ty = ys.map_or(f64::INFINITY, |(k, _)| plane_t(origin.1, dir.1, y_min, k));
        let t_next = tx.min(ty).min(t1);
        if t_next - t > min_len {
            let mid = 0.5 * (t + t_next);
            let px = origin.0 + mid * dir.0;
            let py = origin.1 + mid * dir.1;
            let col = (((px - x_min) / ps).floor() as i64).clamp(0, grid.width as i64 - 1);
            let row = (((y_max - py) / ps).floor() as i64).clamp(0, grid.height as i64 - 1);
            out.push(((row as usize * grid.width + col as usize) as u32, t_next - t));
        }
        if t_next >= t1 {
            break;
        }
        if tx <= ty {
            if let Some((k, s)) = xs.as_mut() {
                *k += *s;
            }
        } else if let Some((k, s)) = ys.as_mut() {
            *k += *s;
        }
        t = t.max(t_next);
    }
    out.len() - start
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(out: &[(u32, f64)]) -> f64 {
        out.iter().map(|(_, w)| w).sum()
    }

    #[test]
    fn horizontal_ray_crosses_one_row() {
        let grid = GridBox::new(4, 4, 1.0);
        let mut out = Vec::new();
        // y = 0.1 lies in row 1 (rows span 0.25 each from the top at 0.5).
        let n = trace_ray(&grid, (-2.0, 0.1), (1.0, 0.0), f64::NEG_INFINITY, f64::INFINITY, &mut out);
        assert_eq!(n, 4);
        let idx: Vec<u32> = out.iter().map(|p| p.0).collect();
        assert_eq!(idx, vec![4, 5, 6, 7]);
        assert!(out.iter().all(|p| (p.1 - 0.25).abs() < 1e-15));
    }

    #[test]
    fn diagonal_ray_has_diagonal_length() {
        let grid = GridBox::new(8, 8, 1.0);
        let mut out = Vec::new();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        trace_ray(&grid, (0.0, 0.0), (s, s), f64::NEG_INFINITY, f64::INFINITY, &mut out);
        assert!((total(&out) - 2f64.sqrt()).abs() < 1e-12);
        // Passes exactly through corners: only diagonal pixels.
        assert_eq!(out.len(), 8);
        for (idx, _) in &out {
            let (r, c) = (idx / 8, idx % 8);
            assert_eq!(r + c, 7);
        }
    }

    #[test]
    fn segment_is_clipped() {
        let grid = GridBox::new(4, 4, 1.0);
        let mut out = Vec::new();
        trace_ray(&grid, (-0.5, 0.1), (1.0, 0.0), 0.0, 0.3, &mut out);
        assert!((total(&out) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn missing_ray_is_empty() {
        let grid = GridBox::new(4, 4, 1.0);
        let mut out = Vec::new();
        assert_eq!(trace_ray(&grid, (0.0, 0.7), (1.0, 0.0), f64::NEG_INFINITY, f64::INFINITY, &mut out), 0);
        assert_eq!(trace_ray(&grid, (0.6, 0.0), (0.0, 1.0), f64::NEG_INFINITY, f64::INFINITY, &mut out), 0);
    }

    #[test]
    fn oblique_chord_length_matches_box_intersection() {
        let grid = GridBox::new(16, 16, 1.0);
        let mut out = Vec::new();
        let phi: f64 = 0.37;
        let dir = (-phi.sin(), phi.cos());
        let origin = (0.05 * phi.cos(), 0.05 * phi.sin());
        trace_ray(&grid, origin, dir, f64::NEG_INFINITY, f64::INFINITY, &mut out);
        // Independent slab computation of the chord through the square.
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, d) in [(origin.0, dir.0), (origin.1, dir.1)] {
            let (a, b) = ((-0.5 - o) / d, (0.5 - o) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        assert!((total(&out) - (t1 - t0)).abs() < 1e-12);
    }
}
