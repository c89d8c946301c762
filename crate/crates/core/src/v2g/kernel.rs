//! Single-step charge/discharge subproblem.
//!
//! For a step with charge limit `cb`, discharge limit `db` and energy price
//! `sigma`, minimizes over the box `[0, cb] x [0, db]`
//!
//! `w_c c + w_d d + rho/2 (c - d - y)^2 + lambda/2 (c^2 + d^2) - sigma (e_c c - e_d d)`.
//!
//! The response `Delta(sigma) = e_c c - e_d d` is continuous, nondecreasing
//! and piecewise linear in `sigma`.

use super::pwl::Pwl;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepKernel {
    pub cb: f64,
    pub db: f64,
    pub w_c: f64,
    pub w_d: f64,
    pub rho: f64,
    pub y: f64,
    pub lambda: f64,
    /// Stored energy per kW charged over the step.
    pub e_c: f64,
    /// Stored energy removed per kW discharged over the step.
    pub e_d: f64,
}

#[derive(Clone, Copy)]
enum Face {
    Lo,
    Hi,
    Free,
}

const FACES: [Face; 3] = [Face::Lo, Face::Hi, Face::Free];

impl StepKernel {
    fn q(&self, sigma: f64) -> [f64; 2] {
        [
            self.w_c - self.rho * self.y - sigma * self.e_c,
            self.w_d + self.rho * self.y + sigma * self.e_d,
        ]
    }

    fn bound(&self, i: usize) -> f64 {
        if i == 0 {
            self.cb
        } else {
            self.db
        }
    }

    pub fn objective(&self, c: f64, d: f64, sigma: f64) -> f64 {
        let p = c - d - self.y;
        self.w_c * c + self.w_d * d + 0.5 * self.rho * p * p + 0.5 * self.lambda * (c * c + d * d)
            - sigma * (self.e_c * c - self.e_d * d)
    }

    /// Objective without the price term.
    pub fn cost(&self, c: f64, d: f64) -> f64 {
        self.objective(c, d, 0.0)
    }

    /// Affine solution `z = a + b sigma` on the face, or `None` if the face
    /// system is singular.
    fn face_solution(&self, fc: Face, fd: Face) -> Option<([f64; 2], [f64; 2])> {
        let h = self.rho + self.lambda;
        let off = -self.rho;
        let q0 = self.q(0.0);
        let q1 = [-self.e_c, self.e_d];
        let fixed = |f: Face, i: usize| match f {
            Face::Lo => Some(0.0),
            Face::Hi => Some(self.bound(i)),
            Face::Free => None,
        };
        match (fixed(fc, 0), fixed(fd, 1)) {
            (Some(c), Some(d)) => Some(([c, d], [0.0, 0.0])),
            (None, Some(d)) => {
                if h <= 0.0 {
                    return None;
                }
                Some(([-(q0[0] + off * d) / h, d], [-q1[0] / h, 0.0]))
            }
            (Some(c), None) => {
                if h <= 0.0 {
                    return None;
                }
                Some(([c, -(q0[1] + off * c) / h], [0.0, -q1[1] / h]))
            }
            (None, None) => {
                let det = h * h - off * off;
                if det <= 0.0 {
                    return None;
                }
                let solve = |r: [f64; 2]| [(h * r[0] - off * r[1]) / det, (h * r[1] - off * r[0]) / det];
                let a = solve([-q0[0], -q0[1]]);
                let b = solve([-q1[0], -q1[1]]);
                Some((a, b))
            }
        }
    }

    /// Exact minimizer at a given price.
    pub fn solve(&self, sigma: f64) -> (f64, f64) {
        if self.cb <= 0.0 && self.db <= 0.0 {
            return (0.0, 0.0);
        }
        let mut best = (0.0, 0.0);
        let mut best_val = f64::INFINITY;
        for fc in FACES {
            for fd in FACES {
                let Some((a, b)) = self.face_solution(fc, fd) else {
                    continue;
                };
                let z = [a[0] + b[0] * sigma, a[1] + b[1] * sigma];
                let tol = 1e-12 * (1.0 + self.cb.max(self.db));
                if z[0] < -tol || z[0] > self.cb + tol || z[1] < -tol || z[1] > self.db + tol {
                    continue;
                }
                let (c, d) = (z[0].clamp(0.0, self.cb), z[1].clamp(0.0, self.db));
                let v = self.objective(c, d, sigma);
                if v < best_val {
                    best_val = v;
                    best = (c, d);
                }
            }
        }
        best
    }

    pub fn delta(&self, sigma: f64) -> f64 {
        let (c, d) = self.solve(sigma);
        self.e_c * c - self.e_d * d
    }

    /// Prices at which the optimal active set can change.
    fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let q0 = self.q(0.0);
        let q1 = [-self.e_c, self.e_d];
        let h = self.rho + self.lambda;
        let off = -self.rho;
        let mut root = |a: f64, b: f64, target: f64| {
            if b.abs() > 1e-300 {
                let s = (target - a) / b;
                if s.is_finite() {
                    out.push(s);
                }
            }
        };
        for fc in FACES {
            for fd in FACES {
                let Some((a, b)) = self.face_solution(fc, fd) else {
                    continue;
                };
                for (i, f) in [fc, fd].into_iter().enumerate() {
                    match f {
                        Face::Free => {
                            root(a[i], b[i], 0.0);
                            root(a[i], b[i], self.bound(i));
                        }
                        _ => {
                            let j = 1 - i;
                            let (diag, other) = (h, off);
                            let ga = diag * a[i] + other * a[j] + q0[i];
                            let gb = diag * b[i] + other * b[j] + q1[i];
                            root(ga, gb, 0.0);
                        }
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn response(&self) -> Pwl {
        if self.cb <= 0.0 && self.db <= 0.0 {
            return Pwl::constant(0.0);
        }
        let bps = self.breakpoints();
        if bps.is_empty() {
            return Pwl::constant(self.delta(0.0));
        }
        let pts = bps.into_iter().map(|s| (s, self.delta(s))).collect();
        Pwl::from_points(pts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(rho: f64, y: f64) -> StepKernel {
        StepKernel {
            cb: 11.0,
            db: 7.0,
            w_c: 0.05,
            w_d: 0.01,
            rho,
            y,
            lambda: 1e-3,
            e_c: 0.95 * 0.25,
            e_d: 0.25 / 0.95,
        }
    }

    fn grid_min(k: &StepKernel, sigma: f64) -> f64 {
        let mut best = f64::INFINITY;
        let n = 400;
        for i in 0..=n {
            for j in 0..=n {
                let c = k.cb * i as f64 / n as f64;
                let d = k.db * j as f64 / n as f64;
                best = best.min(k.objective(c, d, sigma));
            }
        }
        best
    }

    #[test]
    fn exact_solve_beats_grid() {
        for k in [kernel(0.0, 0.0), kernel(1.0, 3.0), kernel(0.3, -20.0)] {
            for sigma in [-2.0, -0.3, 0.0, 0.1, 0.25, 1.0, 5.0] {
                let (c, d) = k.solve(sigma);
                let v = k.objective(c, d, sigma);
                let g = grid_min(&k, sigma);
                assert!(v <= g + 1e-12, "sigma {sigma}: {v} > {g}");
                assert!(g - v < 1e-2);
            }
        }
    }

    #[test]
    fn response_matches_pointwise_and_is_monotone() {
        for k in [kernel(0.0, 0.0), kernel(1.0, 3.0), kernel(2.0, -5.0)] {
            let f = k.response();
            let mut prev = f64::NEG_INFINITY;
            for i in -400..=400 {
                let s = i as f64 * 0.01;
                let v = f.eval(s);
                assert!((v - k.delta(s)).abs() < 1e-9, "sigma {s}");
                assert!(v >= prev - 1e-12);
                prev = v;
            }
            assert!((f.max_value() - k.e_c * k.cb).abs() < 1e-12);
            assert!((f.min_value() + k.e_d * k.db).abs() < 1e-12);
        }
    }
}
