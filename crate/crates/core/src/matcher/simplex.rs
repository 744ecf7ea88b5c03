//! Bounded-variable primal simplex for the relaxed matching LP
//!
//! ```text
//! max Σ s_ij x_ij   s.t.  Σ_j x_ij ≤ r_i,  Σ_i x_ij ≤ cap,  0 ≤ x_ij ≤ 1
//! ```
//!
//! Revised form with an explicit basis inverse; starts from the all-slack basis.
//! Pricing is Dantzig's rule (lowest index on ties) and falls back to Bland's
//! rule after a run of degenerate pivots.

use super::SimilarityMatrix;

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Row-major `N₁ × N₂` primal values in `[0, 1]`.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// False when the iteration cap stopped the solver early.
    pub optimal: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

/// Solves the LP relaxation, stopping after `max_iters` pivots/bound flips when given.
pub fn solve_lp(s: &SimilarityMatrix, degrees: &[usize], cap: usize, max_iters: Option<usize>) -> LpSolution {
    let (n1, n2) = (s.rows(), s.cols());
    let n = n1 * n2;
    let m = n1 + n2;
    let total = n + m;
    if n == 0 {
        return LpSolution { x: vec![], objective: 0.0, iterations: 0, optimal: true };
    }
    let eps = 1e-11 * s.max_abs().max(1.0);
    let piv_eps = 1e-12;

    let cost = |q: usize| if q < n { s.get(q / n2, q % n2) } else { 0.0 };
    let upper = |q: usize| if q < n { 1.0 } else { f64::INFINITY };
    // constraint rows touched by column q
    let rows_of = |q: usize| -> ([usize; 2], usize) {
        if q < n {
            ([q / n2, n1 + q % n2], 2)
        } else {
            ([q - n, 0], 1)
        }
    };

    let mut status = vec![Status::Lower; total];
    let mut basis: Vec<usize> = (n..total).collect();
    for &b in &basis {
        status[b] = Status::Basic;
    }
    let mut xb: Vec<f64> = degrees.iter().map(|&r| r as f64).chain(std::iter::repeat(cap as f64).take(n2)).collect();
    let mut binv = vec![0.0f64; m * m];
    for k in 0..m {
        binv[k * m + k] = 1.0;
    }

    let hard_cap = max_iters.unwrap_or(200 * total + 1000);
    let mut iterations = 0;
    let mut degenerate_run = 0;
    let mut bland = false;
    let mut y = vec![0.0f64; m];
    let mut alpha = vec![0.0f64; m];
    let optimal = loop {
        // duals y = c_B B⁻¹
        y.fill(0.0);
        for (l, &b) in basis.iter().enumerate() {
            let cb = cost(b);
            if cb != 0.0 {
                for k in 0..m {
                    y[k] += cb * binv[l * m + k];
                }
            }
        }
        // pricing
        let mut entering: Option<(usize, f64)> = None;
        for q in 0..total {
            if status[q] == Status::Basic {
                continue;
            }
            let (rows, cnt) = rows_of(q);
            let d = cost(q) - rows[..cnt].iter().map(|&r| y[r]).sum::<f64>();
            let eligible = (status[q] == Status::Lower && d > eps) || (status[q] == Status::Upper && d < -eps);
            if !eligible {
                continue;
            }
            if bland {
                entering = Some((q, d));
                break;
            }
            if entering.map_or(true, |(_, best)| d.abs() > best.abs()) {
                entering = Some((q, d));
            }
        }
        let Some((q, _)) = entering else { break true };
        if iterations >= hard_cap {
            break false;
        }

        let (rows, cnt) = rows_of(q);
        for l in 0..m {
            alpha[l] = rows[..cnt].iter().map(|&r| binv[l * m + r]).sum();
        }
        let dir = if status[q] == Status::Lower { 1.0 } else { -1.0 };

        // ratio test; ties go to the lowest basic variable index
        let mut step = upper(q);
        let mut leaving: Option<(usize, Status)> = None;
        for l in 0..m {
            let rate = dir * alpha[l];
            let (lim, hit) = if rate > piv_eps {
                ((xb[l] / rate).max(0.0), Status::Lower)
            } else if rate < -piv_eps && upper(basis[l]).is_finite() {
                (((upper(basis[l]) - xb[l]) / -rate).max(0.0), Status::Upper)
            } else {
                continue;
            };
            let better = if lim < step - 1e-12 {
                true
            } else if lim <= step + 1e-12 {
                matches!(leaving, Some((cur, _)) if basis[l] < basis[cur])
            } else {
                false
            };
            if better {
                step = lim;
                leaving = Some((l, hit));
            }
        }

        for l in 0..m {
            xb[l] -= dir * step * alpha[l];
        }
        let start = if status[q] == Status::Lower { 0.0 } else { upper(q) };
        let xq = start + dir * step;
        match leaving {
            None => {
                status[q] = if status[q] == Status::Lower { Status::Upper } else { Status::Lower };
            }
            Some((l, hit)) => {
                status[basis[l]] = hit;
                basis[l] = q;
                status[q] = Status::Basic;
                xb[l] = xq;
                let piv = alpha[l];
                for k in 0..m {
                    binv[l * m + k] /= piv;
                }
                for r in 0..m {
                    if r != l && alpha[r] != 0.0 {
                        let f = alpha[r];
                        for k in 0..m {
                            binv[r * m + k] -= f * binv[l * m + k];
                        }
                    }
                }
            }
        }
        iterations += 1;
        if step <= 1e-12 {
            degenerate_run += 1;
            if degenerate_run > 2 * m + 10 {
                bland = true;
            }
        } else {
            degenerate_run = 0;
        }
    };

    let mut x = vec![0.0f64; n];
    for q in 0..n {
        x[q] = match status[q] {
            Status::Lower => 0.0,
            Status::Upper => 1.0,
            Status::Basic => 0.0,
        };
    }
    for (l, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = xb[l].clamp(0.0, 1.0);
        }
    }
    let objective = x.iter().enumerate().map(|(q, &v)| v * cost(q)).sum();
    LpSolution { x, objective, iterations, optimal }
}
