//! Central finite differences.

/// Relative step used for first and second derivatives.
pub const STEP: f64 = 1e-4;

fn step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

pub fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = step(x[i], STEP);
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Row-major `d × d` Hessian.
pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let f0 = f(x);
    let mut y = x.to_vec();
    for i in 0..d {
        let hi = step(x[i], STEP);
        y[i] = x[i] + hi;
        let fp = f(&y);
        y[i] = x[i] - hi;
        let fm = f(&y);
        y[i] = x[i];
        out[i * d + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in i + 1..d {
            let hj = step(x[j], STEP);
            let mut acc = 0.0;
            for (si, sj, sg) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                y[i] = x[i] + si * hi;
                y[j] = x[j] + sj * hj;
                acc += sg * f(&y);
            }
            y[i] = x[i];
            y[j] = x[j];
            let v = acc / (4.0 * hi * hj);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
}

/// Mixed partial `∂^α f` for an ordered multi-index `alpha` (entries are
/// coordinate indices), by nested central differences with relative step
/// `rel`.
pub fn partial(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: &[usize], rel: f64) -> f64 {
    fn rec(f: &dyn Fn(&[f64]) -> f64, y: &mut Vec<f64>, alpha: &[usize], rel: f64) -> f64 {
        match alpha.split_first() {
            None => f(y),
            Some((&i, rest)) => {
                let xi = y[i];
                let h = rel * xi.abs().max(1.0);
                y[i] = xi + h;
                let p = rec(f, y, rest, rel);
                y[i] = xi - h;
                let m = rec(f, y, rest, rel);
                y[i] = xi;
                (p - m) / (2.0 * h)
            }
        }
    }
    let mut y = x.to_vec();
    rec(f, &mut y, alpha, rel)
}

/// Step suited to a derivative of the given order (balances truncation and
/// rounding error).
pub fn step_for_order(order: usize) -> f64 {
    match order {
        0 | 1 => 1e-5,
        2 => 1e-4,
        3 => 2e-3,
        _ => 1e-2,
    }
}

/// Row-major `rows × cols` Jacobian of `g: R^cols -> R^rows`.
pub fn jacobian(
    g: &dyn Fn(&[f64], &mut [f64]),
    x: &[f64],
    rows: usize,
    rel: f64,
    out: &mut [f64],
) {
    let cols = x.len();
    let mut y = x.to_vec();
    let mut gp = vec![0.0; rows];
    let mut gm = vec![0.0; rows];
    for j in 0..cols {
        let h = step(x[j], rel);
        y[j] = x[j] + h;
        g(&y, &mut gp);
        y[j] = x[j] - h;
        g(&y, &mut gm);
        y[j] = x[j];
        for i in 0..rows {
            out[i * cols + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
}

/// All ordered multi-indices of length `order` over `d` coordinates.
pub fn multi_indices(d: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..order {
        out = out
            .into_iter()
            .flat_map(|a| {
                (0..d).map(move |i| {
                    let mut b = a.clone();
                    b.push(i);
                    b
                })
            })
            .collect();
    }
    out
}
