//! Dense two-phase simplex for tiny linear programs.
//!
//! Solves `min c·y` subject to `A y <= b`, `y >= 0`. Bland's rule picks both
//! the entering column (lowest index with negative reduced cost) and the
//! leaving row (lowest basic index among ratio ties), which rules out cycling.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, y: Vec<f64> },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `m` rows of `cols` coefficients followed by the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost · (columns)` over columns with `usable(j)`.
    /// Returns `false` when unbounded.
    fn optimize(&mut self, cost: &[f64], usable: impl Fn(usize) -> bool) -> bool {
        let m = self.rows.len();
        loop {
            let mut entering = None;
            for j in (0..self.cols).filter(|&j| usable(j)) {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - (0..m).map(|i| cost[self.basis[i]] * self.rows[i][j]).sum::<f64>();
                if reduced < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][c];
                if a > EPS {
                    let t = self.rhs(i) / a;
                    leaving = match leaving {
                        None => Some((i, t)),
                        Some((r, best)) => {
                            if t < best - EPS || (t <= best + EPS && self.basis[i] < self.basis[r]) {
                                Some((i, t))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leaving else { return false };
            self.pivot(r, c);
        }
    }
}

/// `min c·y` subject to `a[i]·y <= b[i]` and `y >= 0`.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = artificial_rows.len();
    let cols = n + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[cols] = sign * b[i];
        if b[i] < 0.0 {
            row[n + m + art] = 1.0;
            basis.push(n + m + art);
            art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, cols };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for v in &mut phase1[n + m..] {
            *v = 1.0;
        }
        t.optimize(&phase1, |_| true);
        let infeasibility: f64 = (0..t.rows.len())
            .filter(|&i| t.basis[i] >= n + m)
            .map(|i| t.rhs(i))
            .sum();
        if infeasibility > EPS {
            return LpOutcome::Infeasible;
        }
        // Drive zero-level artificials out; drop rows that are redundant.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= n + m {
                match (0..n + m).find(|&j| t.rows[i][j].abs() > EPS) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    if !t.optimize(&cost, |j| j < n + m) {
        return LpOutcome::Unbounded;
    }
    let mut y = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            y[bv] = t.rhs(i).max(0.0);
        }
    }
    let value = c.iter().zip(&y).map(|(ci, yi)| ci * yi).sum();
    LpOutcome::Optimal { value, y }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome) -> (f64, Vec<f64>) {
        match o {
            LpOutcome::Optimal { value, y } => (value, y),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn box_minimum() {
        // min -y0 + 2 y1 over [0,3]x[0,1]
        let (v, y) = optimal(minimize(
            &[-1.0, 2.0],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[3.0, 1.0],
        ));
        assert!((v + 3.0).abs() < 1e-12);
        assert_eq!(y, vec![3.0, 0.0]);
    }

    #[test]
    fn needs_phase_one() {
        // y0 + y1 >= 2, y0 <= 3, y1 <= 3; min y0 + 3 y1 -> (2, 0)
        let (v, y) = optimal(minimize(
            &[1.0, 3.0],
            &[vec![-1.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            &[-2.0, 3.0, 3.0],
        ));
        assert!((v - 2.0).abs() < 1e-12);
        assert!((y[0] - 2.0).abs() < 1e-12 && y[1].abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        assert_eq!(
            minimize(&[1.0], &[vec![1.0], vec![-1.0]], &[1.0, -2.0]),
            LpOutcome::Infeasible
        );
        assert_eq!(minimize(&[-1.0], &[vec![-1.0]], &[0.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Several constraints active at the origin.
        let (v, _) = optimal(minimize(
            &[-1.0, -1.0],
            &[
                vec![1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, 1.0],
                vec![2.0, -1.0],
            ],
            &[0.0, 0.0, 2.0, 1.0],
        ));
        assert!((v + 2.0).abs() < 1e-12);
    }
}
