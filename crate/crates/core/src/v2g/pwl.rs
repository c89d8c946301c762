//! Continuous nondecreasing piecewise-linear functions of one variable,
//! extended as constants beyond the first and last breakpoints.

#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Pwl {
    pub fn constant(y: f64) -> Self {
        Pwl {
            xs: vec![0.0],
            ys: vec![y],
        }
    }

    /// Builds from points sorted by `x`; duplicate abscissae keep the last value.
    pub fn from_points(points: Vec<(f64, f64)>) -> Self {
        debug_assert!(!points.is_empty());
        let mut xs: Vec<f64> = Vec::with_capacity(points.len());
        let mut ys: Vec<f64> = Vec::with_capacity(points.len());
        for (x, y) in points {
            if xs.last() == Some(&x) {
                *ys.last_mut().unwrap() = y;
            } else {
                xs.push(x);
                ys.push(y);
            }
        }
        let mut f = Pwl { xs, ys };
        f.simplify();
        f
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn min_value(&self) -> f64 {
        self.ys[0]
    }

    pub fn max_value(&self) -> f64 {
        *self.ys.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn add_const(&mut self, c: f64) {
        self.ys.iter_mut().for_each(|y| *y += c);
    }

    pub fn add(&self, other: &Pwl) -> Pwl {
        let mut xs = Vec::with_capacity(self.xs.len() + other.xs.len());
        let (mut i, mut j) = (0, 0);
        while i < self.xs.len() || j < other.xs.len() {
            let x = match (self.xs.get(i), other.xs.get(j)) {
                (Some(&a), Some(&b)) => a.min(b),
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => unreachable!(),
            };
            if i < self.xs.len() && self.xs[i] == x {
                i += 1;
            }
            if j < other.xs.len() && other.xs[j] == x {
                j += 1;
            }
            xs.push(x);
        }
        let ys = xs.iter().map(|&x| self.eval(x) + other.eval(x)).collect();
        let mut f = Pwl { xs, ys };
        f.simplify();
        f
    }

    /// `min(max(f, lo), hi)`, with breakpoints inserted where `f` crosses a bound.
    pub fn clip(&self, lo: f64, hi: f64) -> Pwl {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.xs.len() + 4);
        for i in 0..self.xs.len() {
            if i > 0 {
                let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
                for b in [lo, hi] {
                    if y0 < b && b < y1 {
                        let x = x0 + (b - y0) * (x1 - x0) / (y1 - y0);
                        if x > x0 && x < x1 {
                            pts.push((x, b));
                        }
                    }
                }
            }
            pts.push((self.xs[i], self.ys[i].clamp(lo, hi)));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Pwl::from_points(pts)
    }

    /// Some `x` with `f(x) = y`. Values outside the range map to the nearest end.
    pub fn inverse(&self, y: f64) -> f64 {
        let n = self.xs.len();
        if y <= self.ys[0] {
            return self.xs[0];
        }
        if y >= self.ys[n - 1] {
            return self.xs[n - 1];
        }
        let i = self.ys.partition_point(|&v| v < y);
        let (x0, x1, y0, y1) = (self.xs[i - 1], self.xs[i], self.ys[i - 1], self.ys[i]);
        x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    }

    /// Drops interior points lying on the segment through their neighbours,
    /// and flat runs at the ends.
    fn simplify(&mut self) {
        let n = self.xs.len();
        if n <= 2 {
            return;
        }
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        xs.push(self.xs[0]);
        ys.push(self.ys[0]);
        for i in 1..n - 1 {
            let (xa, ya) = (*xs.last().unwrap(), *ys.last().unwrap());
            let (xb, yb) = (self.xs[i], self.ys[i]);
            let (xc, yc) = (self.xs[i + 1], self.ys[i + 1]);
            let interp = ya + (yc - ya) * (xb - xa) / (xc - xa);
            let scale = ya.abs().max(yb.abs()).max(yc.abs()).max(1.0);
            if (interp - yb).abs() <= 1e-14 * scale {
                continue;
            }
            xs.push(xb);
            ys.push(yb);
        }
        xs.push(self.xs[n - 1]);
        ys.push(self.ys[n - 1]);
        while xs.len() > 1 && ys[0] == ys[1] {
            xs.remove(0);
            ys.remove(0);
        }
        while xs.len() > 1 && ys[ys.len() - 1] == ys[ys.len() - 2] {
            xs.pop();
            ys.pop();
        }
        self.xs = xs;
        self.ys = ys;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_add_clip_inverse() {
        let f = Pwl::from_points(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 2.0), (4.0, 5.0)]);
        assert_eq!(f.eval(-5.0), 0.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(10.0), 5.0);
        let g = Pwl::from_points(vec![(2.0, 1.0), (5.0, 4.0)]);
        let h = f.add(&g);
        for x in [-1.0, 0.0, 0.7, 1.0, 2.5, 3.0, 3.3, 4.0, 4.9, 6.0] {
            assert!((h.eval(x) - f.eval(x) - g.eval(x)).abs() < 1e-12);
        }
        let c = f.clip(1.0, 3.0);
        for x in [-1.0, 0.25, 0.5, 0.9, 2.0, 3.5, 4.0] {
            assert!((c.eval(x) - f.eval(x).clamp(1.0, 3.0)).abs() < 1e-12);
        }
        assert!((f.eval(f.inverse(3.5)) - 3.5).abs() < 1e-12);
        assert!((f.eval(f.inverse(2.0)) - 2.0).abs() < 1e-12);
        let mut k = Pwl::constant(3.0);
        k.add_const(1.0);
        assert_eq!(k.eval(99.0), 4.0);
    }

    #[test]
    fn collinear_points_merge() {
        let f = Pwl::from_points(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 2.0), (4.0, 2.0)]);
        assert_eq!(f.len(), 2);
        assert_eq!(f.eval(5.0), 2.0);
    }
}
