//! Exact maximizer for small concave allocation problems of the form
//!
//! ```text
//! maximize  gᵀx − xᵀHx − c·‖x − a‖₁
//! s.t.      x ≥ 0,  Σx = W
//! ```
//!
//! with `H` symmetric positive semidefinite. Every coordinate is either pinned
//! (at zero or at the anchor `a_j`) or free on one side of its anchor, where
//! the objective is a smooth quadratic. For each such face the stationary
//! point on the budget hyperplane is a small linear (KKT) system. The global
//! maximizer is the stationary point of some face with a non-singular system,
//! so evaluating all feasible face solutions and keeping the best is exact.

pub const DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Zero,
    Anchor,
    /// Free with the given sign of `x_j − a_j` (0 when there is no turnover term).
    Free(f64),
}

/// Active pattern of a solution, reusable as a warm start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face([State; DIM]);

#[derive(Debug, Clone)]
pub struct SimplexQp {
    pub linear: [f64; DIM],
    pub quad: [[f64; DIM]; DIM],
    /// Cost per unit of L1 distance from `anchor`.
    pub turnover: f64,
    pub anchor: [f64; DIM],
    pub budget: f64,
}

impl SimplexQp {
    pub fn value(&self, x: &[f64; DIM]) -> f64 {
        let mut v = 0.0;
        for i in 0..DIM {
            v += self.linear[i] * x[i];
            let mut hx = 0.0;
            for j in 0..DIM {
                hx += self.quad[i][j] * x[j];
            }
            v -= x[i] * hx;
            v -= self.turnover * (x[i] - self.anchor[i]).abs();
        }
        v
    }

    fn states(&self, j: usize) -> Vec<State> {
        let mut out = vec![State::Zero];
        if self.turnover > 0.0 {
            if self.anchor[j] > 0.0 {
                out.push(State::Anchor);
                out.push(State::Free(-1.0));
            }
            out.push(State::Free(1.0));
        } else {
            out.push(State::Free(0.0));
        }
        out
    }

    pub fn solve(&self) -> [f64; DIM] {
        self.solve_from(None).0
    }

    /// Solves, trying `hint` first. A face whose stationary point passes the
    /// KKT conditions is returned immediately, so a good hint (the face of a
    /// nearby problem) usually costs a single linear solve.
    pub fn solve_from(&self, hint: Option<Face>) -> ([f64; DIM], Face) {
        let options: Vec<Vec<State>> = (0..DIM).map(|j| self.states(j)).collect();
        let tolerance = 1e-10 * (1.0 + self.budget.abs());
        let hint = hint.filter(|h| (0..DIM).all(|j| options[j].contains(&h.0[j])));
        if let Some(face) = hint {
            if let Some((x, lambda)) = self.face_point(&face.0, tolerance) {
                if self.is_optimal(&face.0, &x, lambda) {
                    return (x, face);
                }
            }
        }

        let mut best: Option<([f64; DIM], f64, Face)> = None;
        let mut pattern = [State::Zero; DIM];
        let mut idx = [0usize; DIM];
        loop {
            for j in 0..DIM {
                pattern[j] = options[j][idx[j]];
            }
            if hint.is_none_or(|h| h.0 != pattern) {
                if let Some((x, lambda)) = self.face_point(&pattern, tolerance) {
                    if self.is_optimal(&pattern, &x, lambda) {
                        return (x, Face(pattern));
                    }
                    let v = self.value(&x);
                    if best.as_ref().is_none_or(|(_, bv, _)| v > *bv) {
                        best = Some((x, v, Face(pattern)));
                    }
                }
            }
            // odometer increment
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == DIM {
                    return match best {
                        Some((x, _, face)) => (x, face),
                        None => (self.fallback(), Face([State::Zero; DIM])),
                    };
                }
            }
        }
    }

    /// KKT check for a face point: some budget multiplier `λ` must balance
    /// every free coordinate and bound every pinned one.
    fn is_optimal(&self, pattern: &[State; DIM], x: &[f64; DIM], lambda: Option<f64>) -> bool {
        let c = self.turnover;
        let mut g = [0.0; DIM];
        for i in 0..DIM {
            let hx: f64 = (0..DIM).map(|j| self.quad[i][j] * x[j]).sum();
            g[i] = self.linear[i] - 2.0 * hx;
        }
        let scale = 1.0 + c + g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..DIM {
            match pattern[i] {
                State::Free(s) => {
                    if s * (x[i] - self.anchor[i]) < -1e-9 * (1.0 + self.budget.abs()) {
                        return false;
                    }
                    lo = lo.max(g[i] - c * s);
                    hi = hi.min(g[i] - c * s);
                }
                State::Zero => {
                    let pull = if c > 0.0 && self.anchor[i] > 0.0 { c } else { -c };
                    lo = lo.max(g[i] + pull);
                }
                State::Anchor => {
                    lo = lo.max(g[i] - c);
                    hi = hi.min(g[i] + c);
                }
            }
        }
        if let Some(l) = lambda {
            lo = lo.max(l);
            hi = hi.min(l);
        }
        lo <= hi + tol
    }

    /// Even split; only reached if every face is rejected numerically.
    fn fallback(&self) -> [f64; DIM] {
        [self.budget / DIM as f64; DIM]
    }

    /// Stationary point of the face together with its budget multiplier
    /// (`None` when every coordinate is pinned).
    fn face_point(&self, pattern: &[State; DIM], tolerance: f64) -> Option<([f64; DIM], Option<f64>)> {
        let mut x = [0.0; DIM];
        let mut free = [0usize; DIM];
        let mut signs = [0.0; DIM];
        let mut m = 0;
        for j in 0..DIM {
            match pattern[j] {
                State::Zero => x[j] = 0.0,
                State::Anchor => x[j] = self.anchor[j],
                State::Free(s) => {
                    free[m] = j;
                    signs[m] = s;
                    m += 1;
                }
            }
        }
        let fixed_sum: f64 = (0..DIM)
            .filter(|j| !matches!(pattern[*j], State::Free(_)))
            .map(|j| x[j])
            .sum();
        if m == 0 {
            return ((fixed_sum - self.budget).abs() <= tolerance).then_some((x, None));
        }

        // Bordered KKT system: [2H_FF 1; 1ᵀ 0] [x_F; λ] = [rhs; W − Σ fixed]
        let n = m + 1;
        let mut a = [[0.0; DIM + 2]; DIM + 1];
        for r in 0..m {
            let i = free[r];
            for c in 0..m {
                a[r][c] = 2.0 * self.quad[i][free[c]];
            }
            a[r][m] = 1.0;
            let mut rhs = self.linear[i] - self.turnover * signs[r];
            for j in 0..DIM {
                if !matches!(pattern[j], State::Free(_)) {
                    rhs -= 2.0 * self.quad[i][j] * x[j];
                }
            }
            a[r][n] = rhs;
        }
        for c in 0..m {
            a[m][c] = 1.0;
        }
        a[m][m] = 0.0;
        a[m][n] = self.budget - fixed_sum;

        let sol = solve_dense(&mut a, n)?;
        for r in 0..m {
            let v = sol[r];
            if !v.is_finite() || v < -tolerance {
                return None;
            }
            x[free[r]] = v.max(0.0);
        }
        // restore the budget exactly after clamping round-off
        let total: f64 = x.iter().sum();
        let drift = self.budget - total;
        if drift != 0.0 {
            let k = (0..DIM)
                .max_by(|&p, &q| x[p].total_cmp(&x[q]))
                .expect("non-empty");
            x[k] = (x[k] + drift).max(0.0);
        }
        Some((x, Some(sol[m])))
    }
}

/// Gaussian elimination with partial pivoting on an `n × (n+1)` augmented
/// matrix. Returns `None` for (numerically) singular systems.
fn solve_dense(a: &mut [[f64; DIM + 2]; DIM + 1], n: usize) -> Option<[f64; DIM + 1]> {
    let scale = a[..n]
        .iter()
        .flat_map(|row| row[..n].iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let eps = 1e-13 * scale.max(1e-300);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= eps {
            return None;
        }
        a.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut out = [0.0; DIM + 1];
    for r in (0..n).rev() {
        let mut acc = a[r][n];
        for c in r + 1..n {
            acc -= a[r][c] * out[c];
        }
        out[r] = acc / a[r][r];
    }
    Some(out)
}
