//! The two equivalent problem forms and the transforms between them.
//!
//! A component-partitioned system keeps slow and fast variables in separate
//! blocks; an additively split system has one state vector and two right-hand
//! side terms. Either form can be rewritten as the other: partitioned to
//! additive by zero-padding the two terms, additive to partitioned by
//! doubling the variables, with the reconstruction `y = y_slow + y_fast - y0`.
//!
//! Right-hand sides carry an explicit time argument. The modified systems
//! used by interpolation-based couplings and the inner ODEs of infinitesimal
//! methods are nonautonomous even when the original problem is not, so `t`
//! is threaded everywhere.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::cell::Cell;
use std::rc::Rc;

pub type RhsFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64>;
pub type JacFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64>;

/// Tally of right-hand-side and Jacobian evaluations for one run.
#[derive(Debug, Default, Clone)]
pub struct EvalCounters {
    slow: Cell<u64>,
    fast: Cell<u64>,
    jacobian: Cell<u64>,
}

impl EvalCounters {
    pub fn slow(&self) -> u64 {
        self.slow.get()
    }
    pub fn fast(&self) -> u64 {
        self.fast.get()
    }
    pub fn jacobian(&self) -> u64 {
        self.jacobian.get()
    }
    pub fn reset(&self) {
        self.slow.set(0);
        self.fast.set(0);
        self.jacobian.set(0);
    }
}

/// Optional Jacobian blocks `d f^{m} / d y^{q}` for `m, q` in {slow, fast}.
pub struct JacobianBlocks {
    pub slow_slow: Box<JacFn>,
    pub slow_fast: Box<JacFn>,
    pub fast_slow: Box<JacFn>,
    pub fast_fast: Box<JacFn>,
}

/// Component-partitioned system: separate slow and fast variable blocks.
pub struct PartitionedOde {
    pub dim_slow: usize,
    pub dim_fast: usize,
    f_slow: Box<RhsFn>,
    f_fast: Box<RhsFn>,
    pub jacobians: Option<JacobianBlocks>,
    pub counters: Rc<EvalCounters>,
}

impl PartitionedOde {
    pub fn new(dim_slow: usize, dim_fast: usize, f_slow: Box<RhsFn>, f_fast: Box<RhsFn>) -> Self {
        PartitionedOde {
            dim_slow,
            dim_fast,
            f_slow,
            f_fast,
            jacobians: None,
            counters: Rc::new(EvalCounters::default()),
        }
    }

    pub fn with_jacobians(mut self, jac: JacobianBlocks) -> Self {
        self.jacobians = Some(jac);
        self
    }

    /// Evaluate the slow right-hand side, counting the call.
    pub fn f_slow(&self, y_slow: &DVector<f64>, y_fast: &DVector<f64>, t: f64) -> DVector<f64> {
        self.counters.slow.set(self.counters.slow.get() + 1);
        let out = (self.f_slow)(y_slow, y_fast, t);
        assert_eq!(out.len(), self.dim_slow, "slow RHS returned wrong dimension");
        out
    }

    /// Evaluate the fast right-hand side, counting the call.
    pub fn f_fast(&self, y_slow: &DVector<f64>, y_fast: &DVector<f64>, t: f64) -> DVector<f64> {
        self.counters.fast.set(self.counters.fast.get() + 1);
        let out = (self.f_fast)(y_slow, y_fast, t);
        assert_eq!(out.len(), self.dim_fast, "fast RHS returned wrong dimension");
        out
    }

    /// The four Jacobian blocks at `(y_slow, y_fast, t)`.
    ///
    /// Falls back to central differences when analytic blocks are absent.
    pub fn jacobian_blocks(
        &self,
        y_slow: &DVector<f64>,
        y_fast: &DVector<f64>,
        t: f64,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        self.counters.jacobian.set(self.counters.jacobian.get() + 1);
        if let Some(jac) = &self.jacobians {
            return (
                (jac.slow_slow)(y_slow, y_fast, t),
                (jac.slow_fast)(y_slow, y_fast, t),
                (jac.fast_slow)(y_slow, y_fast, t),
                (jac.fast_fast)(y_slow, y_fast, t),
            );
        }
        let sqrt_eps = f64::EPSILON.sqrt();
        let mut j_ss = DMatrix::zeros(self.dim_slow, self.dim_slow);
        let mut j_sf = DMatrix::zeros(self.dim_slow, self.dim_fast);
        let mut j_fs = DMatrix::zeros(self.dim_fast, self.dim_slow);
        let mut j_ff = DMatrix::zeros(self.dim_fast, self.dim_fast);
        for j in 0..self.dim_slow {
            let step = sqrt_eps * (1.0 + y_slow[j].abs());
            let mut p = y_slow.clone();
            let mut m = y_slow.clone();
            p[j] += step;
            m[j] -= step;
            let fsp = (self.f_slow)(&p, y_fast, t);
            let fsm = (self.f_slow)(&m, y_fast, t);
            let ffp = (self.f_fast)(&p, y_fast, t);
            let ffm = (self.f_fast)(&m, y_fast, t);
            for i in 0..self.dim_slow {
                j_ss[(i, j)] = (fsp[i] - fsm[i]) / (2.0 * step);
            }
            for i in 0..self.dim_fast {
                j_fs[(i, j)] = (ffp[i] - ffm[i]) / (2.0 * step);
            }
        }
        for j in 0..self.dim_fast {
            let step = sqrt_eps * (1.0 + y_fast[j].abs());
            let mut p = y_fast.clone();
            let mut m = y_fast.clone();
            p[j] += step;
            m[j] -= step;
            let fsp = (self.f_slow)(y_slow, &p, t);
            let fsm = (self.f_slow)(y_slow, &m, t);
            let ffp = (self.f_fast)(y_slow, &p, t);
            let ffm = (self.f_fast)(y_slow, &m, t);
            for i in 0..self.dim_slow {
                j_sf[(i, j)] = (fsp[i] - fsm[i]) / (2.0 * step);
            }
            for i in 0..self.dim_fast {
                j_ff[(i, j)] = (ffp[i] - ffm[i]) / (2.0 * step);
            }
        }
        (j_ss, j_sf, j_fs, j_ff)
    }

    /// Full right-hand side of the stacked system, for single-rate reference solves.
    pub fn f_full(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        let ys = y.rows(0, self.dim_slow).into_owned();
        let yf = y.rows(self.dim_slow, self.dim_fast).into_owned();
        let fs = self.f_slow(&ys, &yf, t);
        let ff = self.f_fast(&ys, &yf, t);
        stack(&fs, &ff)
    }
}

/// Additively split system: one state, two right-hand-side terms.
pub struct AdditiveOde {
    pub dim: usize,
    f_slow_part: Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64>>,
    f_fast_part: Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64>>,
    pub jac_slow: Option<Box<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64>>>,
    pub jac_fast: Option<Box<dyn Fn(&DVector<f64>, f64) -> DMatrix<f64>>>,
    pub counters: Rc<EvalCounters>,
}

impl AdditiveOde {
    pub fn new(
        dim: usize,
        f_slow_part: Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64>>,
        f_fast_part: Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64>>,
    ) -> Self {
        AdditiveOde {
            dim,
            f_slow_part,
            f_fast_part,
            jac_slow: None,
            jac_fast: None,
            counters: Rc::new(EvalCounters::default()),
        }
    }

    pub fn f_slow_part(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        self.counters.slow.set(self.counters.slow.get() + 1);
        let out = (self.f_slow_part)(y, t);
        assert_eq!(out.len(), self.dim, "slow part returned wrong dimension");
        out
    }

    pub fn f_fast_part(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        self.counters.fast.set(self.counters.fast.get() + 1);
        let out = (self.f_fast_part)(y, t);
        assert_eq!(out.len(), self.dim, "fast part returned wrong dimension");
        out
    }

    pub fn f_full(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        self.f_slow_part(y, t) + self.f_fast_part(y, t)
    }

    /// Jacobian of the slow part (finite differences if not supplied).
    pub fn jac_slow_part(&self, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.counters.jacobian.set(self.counters.jacobian.get() + 1);
        match &self.jac_slow {
            Some(j) => j(y, t),
            None => fd_jac(&*self.f_slow_part, y, t),
        }
    }

    pub fn jac_fast_part(&self, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.counters.jacobian.set(self.counters.jacobian.get() + 1);
        match &self.jac_fast {
            Some(j) => j(y, t),
            None => fd_jac(&*self.f_fast_part, y, t),
        }
    }
}

fn fd_jac(f: &dyn Fn(&DVector<f64>, f64) -> DVector<f64>, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let n = y.len();
    let mut jac = DMatrix::zeros(n, n);
    let sqrt_eps = f64::EPSILON.sqrt();
    for j in 0..n {
        let step = sqrt_eps * (1.0 + y[j].abs());
        let mut p = y.clone();
        let mut m = y.clone();
        p[j] += step;
        m[j] -= step;
        let fp = f(&p, t);
        let fm = f(&m, t);
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// State of a partitioned system at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitState {
    pub y_slow: DVector<f64>,
    pub y_fast: DVector<f64>,
    pub t: f64,
}

impl SplitState {
    pub fn new(y_slow: DVector<f64>, y_fast: DVector<f64>, t: f64) -> Self {
        SplitState { y_slow, y_fast, t }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.y_slow.iter().all(|v| v.is_finite()) && self.y_fast.iter().all(|v| v.is_finite())
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.y_slow, &self.y_fast)
    }
}

pub fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Per-evaluation cost weights for work accounting.
#[derive(Debug, Clone, Copy)]
pub struct CostModel {
    pub c_slow: f64,
    pub c_fast: f64,
}

impl CostModel {
    pub fn new(c_slow: f64, c_fast: f64) -> Result<Self> {
        if c_slow < 0.0 || c_fast < 0.0 {
            return Err(Error::BadParameter("cost weights must be nonnegative".into()));
        }
        Ok(CostModel { c_slow, c_fast })
    }

    /// Total cost of a run from its evaluation counters.
    pub fn run_cost(&self, counters: &EvalCounters) -> f64 {
        self.c_slow * counters.slow() as f64 + self.c_fast * counters.fast() as f64
    }
}

/// Rewrite a partitioned system in additive form by zero-padding both parts.
///
/// The combined state is `[y_slow; y_fast]`; the slow term is
/// `[f_slow; 0]` and the fast term `[0; f_fast]`.
pub fn partitioned_to_additive(sys: Rc<PartitionedOde>) -> AdditiveOde {
    let d_s = sys.dim_slow;
    let d_f = sys.dim_fast;
    let dim = d_s + d_f;
    let sys_a = Rc::clone(&sys);
    let sys_b = Rc::clone(&sys);
    AdditiveOde::new(
        dim,
        Box::new(move |y, t| {
            let ys = y.rows(0, d_s).into_owned();
            let yf = y.rows(d_s, d_f).into_owned();
            stack(&sys_a.f_slow(&ys, &yf, t), &DVector::zeros(d_f))
        }),
        Box::new(move |y, t| {
            let ys = y.rows(0, d_s).into_owned();
            let yf = y.rows(d_s, d_f).into_owned();
            stack(&DVector::zeros(d_s), &sys_b.f_fast(&ys, &yf, t))
        }),
    )
}

/// Rewrite an additive system in partitioned form by doubling the variables.
///
/// Both blocks have the original dimension `d`; the right-hand sides evaluate
/// the additive terms at the reconstructed state `y_slow + y_fast - y0`, and
/// both blocks start from `y0`. Returns the partitioned system, its initial
/// state, and the reconstruction closure.
pub fn additive_to_partitioned(
    sys: Rc<AdditiveOde>,
    y0: &DVector<f64>,
    t0: f64,
) -> Result<(PartitionedOde, SplitState, impl Fn(&SplitState) -> DVector<f64>)> {
    let d = sys.dim;
    if y0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: y0.len(), what: "additive_to_partitioned y0".into() });
    }
    let base_s = y0.clone();
    let base_f = y0.clone();
    let sys_s = Rc::clone(&sys);
    let sys_f = Rc::clone(&sys);
    let part = PartitionedOde::new(
        d,
        d,
        Box::new(move |ys, yf, t| sys_s.f_slow_part(&(ys + yf - &base_s), t)),
        Box::new(move |ys, yf, t| sys_f.f_fast_part(&(ys + yf - &base_f), t)),
    );
    let state = SplitState::new(y0.clone(), y0.clone(), t0);
    let base = y0.clone();
    let reconstruct = move |s: &SplitState| &s.y_slow + &s.y_fast - &base;
    Ok((part, state, reconstruct))
}
