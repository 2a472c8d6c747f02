//! Small numeric helpers: compensated sums and least-squares slopes.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Unevaluated sum `hi + lo` carried with error-free transformations, giving
/// roughly twice the working precision.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

/// `a + b = s + e` exactly.
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `a * b = p + e` exactly (barring overflow).
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, e + self.lo);
        *self = Self { hi, lo };
    }

    pub fn add_dd(&mut self, other: DoubleDouble) {
        self.add(other.hi);
        self.add(other.lo);
    }

    /// Adds `a * b` without rounding the product.
    pub fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        self.add(p);
        self.add(e);
    }

    /// Adds `w * a / b`, correcting the rounded quotient by its exact remainder.
    pub fn add_scaled_ratio(&mut self, w: f64, a: f64, b: f64) {
        let q = a / b;
        let r = (-q).mul_add(b, a) / b;
        self.add_prod(w, q);
        self.add(w * r);
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Coordinate-wise compensated sum of equally long vectors, in iteration order.
pub fn compensated_vec_sum<'a>(n: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = vec![CompensatedSum::default(); n];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            a.add(*v);
        }
    }
    acc.iter().map(CompensatedSum::value).collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|x| s.add(*x));
    s.value() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|x| s.add((x - m) * (x - m)));
    s.value() / (xs.len() - 1) as f64
}

/// Ordinary least-squares slope of `ys` on `xs`. `None` when undefined.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (sxx > 0.0 && slope.is_finite()).then_some(slope)
}

/// Slope of `ln y` against `ln x`; `None` if any value is not strictly positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    ols_slope(&lx, &ly)
}

/// Log-log least-squares fit: `(slope, r_squared)` of `ln y` on `ln x`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let slope = loglog_slope(xs, ys)?;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let ss_tot: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some((slope, r2))
}

/// `n` points spaced geometrically from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    // `powf` rather than `powi`: the latter rounds differently across
    // optimisation levels, which would make presets depend on the build.
    let span = hi / lo;
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => lo * span.powf(i as f64 / last),
        })
        .collect()
}

/// Subtracts the coordinate mean of each block.
pub fn remove_translation(v: &[f64], block_dims: &[usize]) -> Vec<f64> {
    let mut out = v.to_vec();
    let mut offset = 0;
    for &d in block_dims {
        let block = &mut out[offset..offset + d];
        let m = block.iter().sum::<f64>() / d as f64;
        block.iter_mut().for_each(|x| *x -= m);
        offset += d;
    }
    out
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn double_double_is_exact_on_cancellation() {
        let mut d = DoubleDouble::new(1.0);
        d.add(1e-20);
        d.add(-1.0);
        assert_eq!(d.value(), 1e-20);
        let mut d = DoubleDouble::default();
        d.add_scaled_ratio(3.0, 1.0, 3.0);
        d.add(-1.0);
        assert!(d.value().abs() < 1e-32);
    }

    #[test]
    fn slopes() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]), None);
        assert_eq!(ols_slope(&[1.0, 1.0], &[0.0, 1.0]), None);
        let (s, r2) = loglog_fit(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (_, r2) = loglog_fit(&xs, &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!(r2 < 1.0);
    }

    #[test]
    fn grid_and_translation() {
        let g = geometric_grid(0.025, 0.2, 4);
        assert!((g[1] - 0.05).abs() < 1e-15 && (g[3] - 0.2).abs() < 1e-15);
        let t = remove_translation(&[1.0, 2.0, 3.0, 10.0, 20.0], &[3, 2]);
        assert_eq!(t, vec![-1.0, 0.0, 1.0, -5.0, 5.0]);
        assert!((sample_variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
