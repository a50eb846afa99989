//! Grid evaluation and marching-squares zero contours of a barrier.

use barrier_core::poly::CompiledPoly;

pub const MAX_CELLS: usize = 1_000_000;

pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[j][i]` at `(xs[i], ys[j])`.
    pub values: Vec<Vec<f64>>,
}

pub type Segment = [(f64, f64); 2];

/// `point` supplies the fixed coordinates; `ax`, `ay` are overwritten.
pub fn evaluate(
    phi: &CompiledPoly,
    point: &[f64],
    (ax, ay): (usize, usize),
    (x0, x1, nx): (f64, f64, usize),
    (y0, y1, ny): (f64, f64, usize),
) -> Grid {
    let xs: Vec<f64> = (0..=nx).map(|i| x0 + (x1 - x0) * i as f64 / nx as f64).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| y0 + (y1 - y0) * j as f64 / ny as f64).collect();
    let mut p = point.to_vec();
    let values = ys
        .iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    p[ax] = x;
                    p[ay] = y;
                    phi.eval(&p)
                })
                .collect()
        })
        .collect();
    Grid { xs, ys, values }
}

fn cross(a: (f64, f64, f64), b: (f64, f64, f64)) -> (f64, f64) {
    let t = a.2 / (a.2 - b.2);
    (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
}

/// Segments of `{phi = 0}`; a corner counts as inside when `phi >= 0`.
pub fn contour(g: &Grid) -> Vec<Segment> {
    let mut out = Vec::new();
    for j in 0..g.ys.len().saturating_sub(1) {
        for i in 0..g.xs.len().saturating_sub(1) {
            // counter-clockwise from the lower left
            let c = [
                (g.xs[i], g.ys[j], g.values[j][i]),
                (g.xs[i + 1], g.ys[j], g.values[j][i + 1]),
                (g.xs[i + 1], g.ys[j + 1], g.values[j + 1][i + 1]),
                (g.xs[i], g.ys[j + 1], g.values[j + 1][i]),
            ];
            if c.iter().any(|v| !v.2.is_finite()) {
                continue;
            }
            let pts: Vec<(f64, f64)> = (0..4)
                .filter(|&k| (c[k].2 >= 0.0) != (c[(k + 1) % 4].2 >= 0.0))
                .map(|k| cross(c[k], c[(k + 1) % 4]))
                .collect();
            match pts.len() {
                2 => out.push([pts[0], pts[1]]),
                4 => {
                    // saddle: the centre value decides which corners connect
                    let centre = c.iter().map(|v| v.2).sum::<f64>() / 4.0;
                    if (centre >= 0.0) == (c[0].2 >= 0.0) {
                        out.push([pts[0], pts[1]]);
                        out.push([pts[2], pts[3]]);
                    } else {
                        out.push([pts[3], pts[0]]);
                        out.push([pts[1], pts[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}
