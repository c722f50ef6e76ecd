//! Dense primal active-set method for small concave quadratic programs
//!
//! maximize ½xᵀQx + cᵀx  subject to  aᵀx = β (optional),  Gx ≥ h.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ConcaveQp {
    /// Negative semidefinite.
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub equality: Option<(DVector<f64>, f64)>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Inequality rows active at the solution.
    pub active: Vec<usize>,
}

impl ConcaveQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ineq = (&self.h - &self.g * x).iter().fold(0.0f64, |m, v| m.max(*v));
        let eq = self.equality.as_ref().map_or(0.0, |(a, b)| (a.dot(x) - b).abs());
        ineq.max(eq)
    }

    /// Solves from the feasible point `x0`.
    pub fn solve(&self, x0: &DVector<f64>) -> Result<QpSolution> {
        let n = self.c.len();
        let m = self.g.nrows();
        // Unit-norm constraint rows and a unit-scale objective keep the KKT
        // system well conditioned whatever the units of x.
        let mut g = self.g.clone();
        let mut h = self.h.clone();
        for i in 0..m {
            let norm = g.row(i).norm();
            if norm > 0.0 {
                g.row_mut(i).scale_mut(1.0 / norm);
                h[i] /= norm;
            }
        }
        let eq = self.equality.as_ref().map(|(a, b)| {
            let norm = a.norm().max(f64::MIN_POSITIVE);
            (a / norm, b / norm)
        });
        let scale = self.q.amax().max(self.c.amax()).max(f64::MIN_POSITIVE);
        let mut hess = -&self.q / scale;
        let grad0 = -&self.c / scale;
        if hess.clone().cholesky().is_none() {
            let mu = 1e-10 * hess.amax().max(1e-10);
            for i in 0..n {
                hess[(i, i)] += mu;
            }
        }

        let xscale = 1.0 + x0.amax();
        let feas_tol = 1e-9 * xscale;
        let mut x = x0.clone();
        if self.max_violation(&x) > 1e-7 * xscale {
            return Err(Error::Qp("starting point is infeasible".into()));
        }

        let mut work: Vec<usize> = Vec::new();
        for i in 0..m {
            if (g.row(i) * &x)[0] - h[i] <= feas_tol && independent(&g, eq.as_ref(), &work, i) {
                work.push(i);
            }
        }

        let max_iter = 50 * (n + m + 1);
        for it in 0..max_iter {
            let n_eq = usize::from(eq.is_some());
            let k = n_eq + work.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            let mut rows = Vec::with_capacity(k);
            if let Some((a, _)) = &eq {
                rows.push(a.transpose());
            }
            for &i in &work {
                rows.push(g.row(i).into_owned());
            }
            for (r, row) in rows.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = row[j];
                    kkt[(j, n + r)] = -row[j];
                }
            }
            let grad = &hess * &x + &grad0;
            let mut rhs = DVector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            let sol = kkt
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Qp("singular KKT system".into()))?;
            let p = sol.rows(0, n).into_owned();
            let lambda = sol.rows(n, k).into_owned();

            // Predicted gain of the full step; flat directions leave only
            // rounding noise in p.
            let f_now = 0.5 * x.dot(&(&hess * &x)) + grad0.dot(&x);
            let gain = -grad.dot(&p) - 0.5 * p.dot(&(&hess * &p));
            if p.amax() <= 1e-12 * xscale || gain <= 1e-14 * (1.0 + f_now.abs()) {
                let mut worst: Option<(usize, f64)> = None;
                for w in 0..work.len() {
                    let l = lambda[n_eq + w];
                    if l < -1e-12 && worst.is_none_or(|(_, v)| l < v) {
                        worst = Some((w, l));
                    }
                }
                match worst {
                    None => {
                        return Ok(QpSolution {
                            value: self.objective(&x),
                            x,
                            iterations: it,
                            active: work,
                        })
                    }
                    Some((w, _)) => {
                        work.remove(w);
                    }
                }
                continue;
            }

            let mut alpha = 1.0;
            let mut block = None;
            for i in 0..m {
                if work.contains(&i) {
                    continue;
                }
                let gp = (g.row(i) * &p)[0];
                if gp < -1e-14 {
                    let slack = (g.row(i) * &x)[0] - h[i];
                    let a = (slack.max(0.0)) / -gp;
                    if a < alpha {
                        alpha = a;
                        block = Some(i);
                    }
                }
            }
            x += &p * alpha;
            if let Some(i) = block {
                if independent(&g, eq.as_ref(), &work, i) {
                    work.push(i);
                }
            }
        }
        Err(Error::Qp(format!("no convergence in {max_iter} iterations")))
    }
}

/// Whether row `i` of `g` is linearly independent of the working rows.
fn independent(g: &DMatrix<f64>, eq: Option<&(DVector<f64>, f64)>, work: &[usize], i: usize) -> bool {
    let n = g.ncols();
    let k = usize::from(eq.is_some()) + work.len();
    if k + 1 > n {
        return false;
    }
    let mut mat = DMatrix::zeros(n, k + 1);
    let mut c = 0;
    if let Some((a, _)) = eq {
        mat.set_column(c, a);
        c += 1;
    }
    for &w in work {
        mat.set_column(c, &g.row(w).transpose());
        c += 1;
    }
    mat.set_column(c, &g.row(i).transpose());
    let sv = mat.singular_values();
    sv.min() > 1e-10 * sv.max().max(1.0)
}
