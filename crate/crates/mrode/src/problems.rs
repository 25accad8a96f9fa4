//! Benchmark and test problems, with analytic reference solutions where
//! they exist.

use crate::core::ode::{stack, AdditiveOde, CostModel, JacobianBlocks, PartitionedOde, SplitState};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Linear accuracy test problem with a prescribed slow/fast oscillatory
/// solution `y = [cos(w t) v; cos(m w t)]`.
///
/// The slow block is `d`-dimensional with `A_ss v = lambda_ss v`; the fast
/// block is scalar. The right-hand side is built so the oscillation above is
/// the exact solution regardless of the couplings `u` and `v`.
#[derive(Debug, Clone)]
pub struct AccuracyTestProblem {
    pub dim_slow: usize,
    pub omega: f64,
    pub ratio: usize,
    pub lambda_ss: f64,
    pub lambda_ff: f64,
    pub v: DVector<f64>,
    pub u: DVector<f64>,
    pub a_ss: DMatrix<f64>,
}

impl AccuracyTestProblem {
    /// Default instance: 2-dimensional slow block, `omega = 1`, ratio 25.
    pub fn default_params() -> Self {
        Self::new(2, 1.0, 25, -1.0, -2.0)
    }

    pub fn new(dim_slow: usize, omega: f64, ratio: usize, lambda_ss: f64, lambda_ff: f64) -> Self {
        assert!(ratio > 1, "scale ratio m must exceed 1");
        assert!(omega > 0.0);
        // v = e_1; A_ss = lambda_ss I + N with N v = 0 keeps the eigenpair exact.
        let v = DVector::from_fn(dim_slow, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let mut a_ss = DMatrix::identity(dim_slow, dim_slow) * lambda_ss;
        for i in 1..dim_slow {
            a_ss[(i - 1, i)] = 0.25; // strictly upper entries never touch v = e_1
        }
        let u = DVector::from_fn(dim_slow, |i, _| 0.5 / (i + 1) as f64);
        AccuracyTestProblem { dim_slow, omega, ratio, lambda_ss, lambda_ff, v, u, a_ss }
    }

    /// Exact solution at time `t`.
    pub fn exact(&self, t: f64) -> SplitState {
        let m = self.ratio as f64;
        SplitState::new(
            &self.v * (self.omega * t).cos(),
            DVector::from_element(1, (m * self.omega * t).cos()),
            t,
        )
    }

    pub fn initial_state(&self) -> SplitState {
        self.exact(0.0)
    }

    /// Time derivative of the exact solution, for residual checks.
    pub fn exact_derivative(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let m = self.ratio as f64;
        (
            &self.v * (-self.omega * (self.omega * t).sin()),
            DVector::from_element(1, -m * self.omega * (m * self.omega * t).sin()),
        )
    }

    pub fn build(&self) -> PartitionedOde {
        let p = self.clone();
        let q = self.clone();
        PartitionedOde::new(
            self.dim_slow,
            1,
            Box::new(move |ys, yf, t| {
                let m = p.ratio as f64;
                let ds = ys - &p.v * (p.omega * t).cos();
                let df = yf[0] - (m * p.omega * t).cos();
                &p.a_ss * ds + &p.v * df - &p.v * (p.omega * (p.omega * t).sin())
            }),
            Box::new(move |ys, yf, t| {
                let m = q.ratio as f64;
                let ds = ys - &q.v * (q.omega * t).cos();
                let df = yf[0] - (m * q.omega * t).cos();
                DVector::from_element(
                    1,
                    q.u.dot(&ds) + q.lambda_ff * df - m * q.omega * (m * q.omega * t).sin(),
                )
            }),
        )
    }

    /// Step-size bounds `(H_max_slow, H_max_fast)` keeping the forward Euler
    /// local truncation error of each component below `tol`.
    pub fn step_bounds(&self, tol: f64) -> (f64, f64) {
        let m = self.ratio as f64;
        ((2.0 * tol).sqrt() / self.omega, (2.0 * tol).sqrt() / (m * self.omega))
    }
}

/// Pendulum coupled to a damped oscillator through a soft spring.
///
/// Coordinates `q = (alpha, x1)`; the pendulum angle oscillates fast, the
/// cart position slowly. First-order state ordering is
/// `(alpha, x1, alpha_dot, x1_dot)`.
#[derive(Debug, Clone, Copy)]
pub struct PendulumProblem {
    pub m_pend: f64,
    pub m_osc: f64,
    pub length: f64,
    pub gravity: f64,
    pub stiffness: f64,
    pub friction: f64,
}

impl Default for PendulumProblem {
    fn default() -> Self {
        // The original figures give no parameter values; these reproduce the
        // qualitative fast-angle / slow-cart separation.
        PendulumProblem { m_pend: 1.0, m_osc: 5.0, length: 1.0, gravity: 9.81, stiffness: 10.0, friction: 0.1 }
    }
}

impl PendulumProblem {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.m_pend > 0.0
            && self.m_osc > 0.0
            && self.length > 0.0
            && self.gravity > 0.0
            && self.stiffness > 0.0
            && self.friction >= 0.0;
        if all_positive {
            Ok(())
        } else {
            Err(Error::BadParameter("pendulum parameters must be positive".into()))
        }
    }

    /// Spring-damper force `F`.
    pub fn force(&self, alpha: f64, x1: f64, alpha_dot: f64, x1_dot: f64) -> f64 {
        self.stiffness * (x1 - self.length * alpha.sin())
            + self.friction * (x1_dot - self.length * alpha_dot * alpha.cos())
    }

    /// Accelerations `(alpha_ddot, x1_ddot)`.
    pub fn accelerations(&self, alpha: f64, x1: f64, alpha_dot: f64, x1_dot: f64) -> (f64, f64) {
        let f = self.force(alpha, x1, alpha_dot, x1_dot);
        (
            (-self.m_pend * self.gravity * alpha.sin() + alpha.cos() * f) / (self.m_pend * self.length),
            -f / self.m_osc,
        )
    }

    /// Component split: fast block `(alpha, alpha_dot)`, slow block `(x1, x1_dot)`.
    pub fn build_partitioned(&self) -> PartitionedOde {
        let p = *self;
        let q = *self;
        PartitionedOde::new(
            2,
            2,
            Box::new(move |ys, yf, _t| {
                let (_, x1dd) = p.accelerations(yf[0], ys[0], yf[1], ys[1]);
                DVector::from_vec(vec![ys[1], x1dd])
            }),
            Box::new(move |ys, yf, _t| {
                let (add, _) = q.accelerations(yf[0], ys[0], yf[1], ys[1]);
                DVector::from_vec(vec![yf[1], add])
            }),
        )
    }

    /// Additive (force) split over the 4-dim first-order state.
    ///
    /// The fast term carries the gravity restoring force and the angle
    /// kinematics; the slow term carries the spring-damper contribution and
    /// the cart kinematics. The two parts sum to the full right-hand side
    /// exactly at every state.
    pub fn build_additive(&self) -> AdditiveOde {
        let p = *self;
        let q = *self;
        AdditiveOde::new(
            4,
            Box::new(move |y, _t| {
                let f = p.force(y[0], y[1], y[2], y[3]);
                DVector::from_vec(vec![
                    0.0,
                    y[3],
                    y[0].cos() * f / (p.m_pend * p.length),
                    -f / p.m_osc,
                ])
            }),
            Box::new(move |y, _t| {
                DVector::from_vec(vec![y[2], 0.0, -(q.gravity / q.length) * y[0].sin(), 0.0])
            }),
        )
    }

    /// Full right-hand side on the 4-dim state, for reference solves.
    pub fn f_full(&self, y: &DVector<f64>, _t: f64) -> DVector<f64> {
        let (add, x1dd) = self.accelerations(y[0], y[1], y[2], y[3]);
        DVector::from_vec(vec![y[2], y[3], add, x1dd])
    }

    /// Total mechanical energy; conserved when `friction = 0`.
    pub fn energy(&self, y: &DVector<f64>) -> f64 {
        let (alpha, x1, ad, xd) = (y[0], y[1], y[2], y[3]);
        let kinetic = 0.5 * self.m_pend * self.length * self.length * ad * ad + 0.5 * self.m_osc * xd * xd;
        let potential = -self.m_pend * self.gravity * self.length * alpha.cos()
            + 0.5 * self.stiffness * (x1 - self.length * alpha.sin()).powi(2);
        kinetic + potential
    }

    /// Default initial state used by convergence studies:
    /// a deflected pendulum, cart at rest.
    pub fn initial_state(&self) -> SplitState {
        SplitState::new(DVector::from_vec(vec![0.5, 0.0]), DVector::from_vec(vec![0.4, 0.0]), 0.0)
    }

    /// Map a partitioned state back to the flat `(alpha, x1, alpha_dot, x1_dot)` order.
    pub fn flat_state(state: &SplitState) -> DVector<f64> {
        DVector::from_vec(vec![state.y_fast[0], state.y_slow[0], state.y_fast[1], state.y_slow[1]])
    }

    /// Split a flat `(alpha, x1, alpha_dot, x1_dot)` vector into slow/fast blocks.
    pub fn split_state(y: &DVector<f64>, t: f64) -> SplitState {
        SplitState::new(DVector::from_vec(vec![y[1], y[3]]), DVector::from_vec(vec![y[0], y[2]]), t)
    }
}

/// Two-by-two linear system parameterized by a scale ratio and one-way
/// coupling strengths, for the step-bound analysis.
#[derive(Debug, Clone, Copy)]
pub struct ScaleSeparationProblem {
    pub lambda_ss: f64,
    /// Time-scale ratio `mu = lambda_ff / lambda_ss`.
    pub mu: f64,
    /// Fast-into-slow coupling `delta = lambda_fs / lambda_ss`.
    pub delta: f64,
    /// Slow-into-fast coupling `rho = lambda_sf / lambda_ff`.
    pub rho: f64,
}

impl ScaleSeparationProblem {
    pub fn new(lambda_ss: f64, mu: f64, delta: f64, rho: f64) -> Result<Self> {
        if lambda_ss >= 0.0 {
            return Err(Error::BadParameter("lambda_ss must be negative".into()));
        }
        if mu < 1.0 {
            return Err(Error::BadParameter("scale ratio mu must be >= 1".into()));
        }
        Ok(ScaleSeparationProblem { lambda_ss, mu, delta, rho })
    }

    /// Step bounds `(H_max_slow, H_max_fast)` with the coupling corrections.
    ///
    /// Errors when a correction term reaches zero or below: the coupling has
    /// destroyed the scale separation and no finite bound exists.
    pub fn step_bounds(&self, tol: f64) -> Result<(f64, f64)> {
        if tol <= 0.0 {
            return Err(Error::BadParameter("tol must be positive".into()));
        }
        let slow_arg = 1.0 + self.delta * (1.0 + self.mu + self.rho * self.mu);
        let fast_arg = 1.0 + self.rho * (1.0 + (1.0 + self.delta) / self.mu);
        if slow_arg <= 0.0 || fast_arg <= 0.0 {
            return Err(Error::BadParameter("coupling destroys scale separation".into()));
        }
        let root = (2.0 * tol).sqrt();
        let h_slow = root / (self.lambda_ss.abs() * slow_arg.sqrt());
        let h_fast = root / (self.mu.abs() * self.lambda_ss.abs() * fast_arg.sqrt());
        Ok((h_slow, h_fast))
    }
}

/// Generalized 2x2 linear test problem with real coefficients, ordered
/// `(y_slow, y_fast)`:
///
/// ```text
/// y_slow' = lambda_ss y_slow + lambda_fs y_fast
/// y_fast' = lambda_sf y_slow + lambda_ff y_fast
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestProblem2x2 {
    pub lambda_ss: f64,
    pub lambda_ff: f64,
    /// Fast-into-slow coupling (multiplies `y_fast` in the slow equation).
    pub lambda_fs: f64,
    /// Slow-into-fast coupling (multiplies `y_slow` in the fast equation).
    pub lambda_sf: f64,
}

impl TestProblem2x2 {
    pub fn new(lambda_ss: f64, lambda_ff: f64, lambda_fs: f64, lambda_sf: f64) -> Result<Self> {
        if lambda_ss >= 0.0 || lambda_ff >= 0.0 {
            return Err(Error::BadParameter("diagonal entries must be negative".into()));
        }
        Ok(TestProblem2x2 { lambda_ss, lambda_ff, lambda_fs, lambda_sf })
    }

    /// Scale ratio `|lambda_ff| / |lambda_ss|`.
    pub fn scale_ratio(&self) -> f64 {
        self.lambda_ff.abs() / self.lambda_ss.abs()
    }

    /// Coupling coefficient `k`; the coupled system is stable iff `k < 1`.
    pub fn coupling_coefficient(&self) -> f64 {
        (self.lambda_fs * self.lambda_sf) / (self.lambda_ff * self.lambda_ss)
    }

    pub fn is_stable(&self) -> bool {
        self.coupling_coefficient() < 1.0
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.lambda_ss, self.lambda_fs, self.lambda_sf, self.lambda_ff])
    }

    pub fn build(&self) -> PartitionedOde {
        let p = *self;
        let q = *self;
        let sys = PartitionedOde::new(
            1,
            1,
            Box::new(move |ys, yf, _| DVector::from_element(1, p.lambda_ss * ys[0] + p.lambda_fs * yf[0])),
            Box::new(move |ys, yf, _| DVector::from_element(1, q.lambda_sf * ys[0] + q.lambda_ff * yf[0])),
        );
        let (a, b, c, d) = (self.lambda_ss, self.lambda_fs, self.lambda_sf, self.lambda_ff);
        sys.with_jacobians(JacobianBlocks {
            slow_slow: Box::new(move |_, _, _| DMatrix::from_element(1, 1, a)),
            slow_fast: Box::new(move |_, _, _| DMatrix::from_element(1, 1, b)),
            fast_slow: Box::new(move |_, _, _| DMatrix::from_element(1, 1, c)),
            fast_fast: Box::new(move |_, _, _| DMatrix::from_element(1, 1, d)),
        })
    }
}

/// The model problem used for matrix stability analysis, with eigenvalues
/// that are convex combinations of the diagonal entries for `xi` in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct ModelProblemKvaerno {
    pub xi: f64,
    pub alpha: f64,
    pub lambda_ff: f64,
    pub lambda_ss: f64,
}

impl ModelProblemKvaerno {
    pub fn new(xi: f64, alpha: f64, lambda_ff: f64, lambda_ss: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::BadParameter("xi must lie in [0, 1]".into()));
        }
        Ok(ModelProblemKvaerno { xi, alpha, lambda_ff, lambda_ss })
    }

    /// Couplings `(lambda_sf, lambda_fs)` in the (slow-into-fast, fast-into-slow)
    /// naming of [`TestProblem2x2`].
    pub fn couplings(&self) -> (f64, f64) {
        let diff = self.lambda_ff - self.lambda_ss;
        ((1.0 - self.xi) / self.alpha * diff, -self.alpha * self.xi * diff)
    }

    /// Eigenvalues: convex combinations of the two diagonal rates.
    pub fn eigenvalues(&self) -> (f64, f64) {
        (
            self.xi * self.lambda_ff + (1.0 - self.xi) * self.lambda_ss,
            (1.0 - self.xi) * self.lambda_ff + self.xi * self.lambda_ss,
        )
    }

    pub fn as_test_problem(&self) -> TestProblem2x2 {
        let (sf, fs) = self.couplings();
        TestProblem2x2 {
            lambda_ss: self.lambda_ss,
            lambda_ff: self.lambda_ff,
            lambda_fs: fs,
            lambda_sf: sf,
        }
    }
}

/// Oscillatory two-scale system with imaginary eigenvalues, as a 4-dim real
/// partitioned problem. The complex form is
/// `u' = i u`, `w' = i u + i m w`, split into real/imaginary pairs with the
/// slow block `(Re u, Im u)` and fast block `(Re w, Im w)`.
#[derive(Debug, Clone, Copy)]
pub struct OscillatoryTwoScale {
    pub ratio: f64,
}

impl OscillatoryTwoScale {
    pub fn new(ratio: f64) -> Self {
        assert!(ratio > 1.0);
        OscillatoryTwoScale { ratio }
    }

    pub fn build(&self) -> PartitionedOde {
        let m = self.ratio;
        PartitionedOde::new(
            2,
            2,
            // u' = i u: (Re u)' = -Im u, (Im u)' = Re u
            Box::new(move |ys, _, _| DVector::from_vec(vec![-ys[1], ys[0]])),
            // w' = i u + i m w
            Box::new(move |ys, yf, _| {
                DVector::from_vec(vec![-ys[1] - m * yf[1], ys[0] + m * yf[0]])
            }),
        )
    }

    pub fn initial_state(&self) -> SplitState {
        SplitState::new(DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![1.0, 0.0]), 0.0)
    }

    /// Exact solution `(u, w)` as real 2-vectors.
    pub fn exact(&self, t: f64) -> SplitState {
        let m = self.ratio;
        let u = (t.cos(), t.sin());
        // w(t) = (w0 - 1/(1-m)) e^{imt} + e^{it}/(1-m), w0 = 1
        let a = 1.0 / (1.0 - m);
        let c = 1.0 - a;
        let w = (c * (m * t).cos() + a * t.cos(), c * (m * t).sin() + a * t.sin());
        SplitState::new(DVector::from_vec(vec![u.0, u.1]), DVector::from_vec(vec![w.0, w.1]), t)
    }
}

/// Single-rate vs multirate cost of reaching the same accuracy, following
/// the forward-Euler cost model. `n_fast` is the number of micro-steps over
/// the interval; the single-rate method must take all of them on the full
/// system, while the multirate method takes `n_fast / m` slow steps.
pub fn cost_compare(cost: &CostModel, ratio: usize, n_fast: u64) -> (f64, f64) {
    let n_slow = n_fast as f64 / ratio as f64;
    let singlerate = n_fast as f64 * (cost.c_fast + cost.c_slow);
    let multirate = n_slow * cost.c_slow + n_fast as f64 * cost.c_fast;
    (singlerate, multirate)
}

/// Linear system `y' = A y` partitioned into the leading `dim_slow` and
/// trailing `d - dim_slow` components.
pub fn linear_partitioned(a: &DMatrix<f64>, dim_slow: usize) -> PartitionedOde {
    let d = a.nrows();
    assert_eq!(a.ncols(), d);
    let dim_fast = d - dim_slow;
    let a1 = a.clone();
    let a2 = a.clone();
    let sys = PartitionedOde::new(
        dim_slow,
        dim_fast,
        Box::new(move |ys, yf, _| (&a1 * stack(ys, yf)).rows(0, dim_slow).into_owned()),
        Box::new(move |ys, yf, _| (&a2 * stack(ys, yf)).rows(dim_slow, dim_fast).into_owned()),
    );
    let jss = a.view((0, 0), (dim_slow, dim_slow)).into_owned();
    let jsf = a.view((0, dim_slow), (dim_slow, dim_fast)).into_owned();
    let jfs = a.view((dim_slow, 0), (dim_fast, dim_slow)).into_owned();
    let jff = a.view((dim_slow, dim_slow), (dim_fast, dim_fast)).into_owned();
    sys.with_jacobians(JacobianBlocks {
        slow_slow: Box::new(move |_, _, _| jss.clone()),
        slow_fast: Box::new(move |_, _, _| jsf.clone()),
        fast_slow: Box::new(move |_, _, _| jfs.clone()),
        fast_fast: Box::new(move |_, _, _| jff.clone()),
    })
}
