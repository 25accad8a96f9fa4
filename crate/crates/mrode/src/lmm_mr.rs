//! Multirate linear multistep methods over coarse/fine history grids.
//!
//! The slow variables live on the coarse grid `t_n, t_{n-1}, ...` with
//! spacing `H`; the fast variables live on the fine grid with spacing
//! `h = H/m`. A macro-step advances the slow part one `H`-step and the fast
//! part `m` `h`-steps; coupling values that are not on the own grid come
//! from interpolation or extrapolation polynomials of order `k - 1`, or from
//! joint solves, depending on the strategy.
//!
//! Histories follow the companion formulation: each grid point stores its
//! value and the `f` value that entered the recursion at the time (for the
//! fast grid these are the modified values with interpolated slow
//! arguments; for the coarse grid the true `f_slow` evaluated once both
//! endpoint values exist).

use crate::core::newton::{newton_solve, NewtonConfig};
use crate::core::ode::{stack, PartitionedOde, SplitState};
use crate::core::poly::{interpolate, Polynomial};
use crate::error::{Error, Result};
use crate::refsol::rk4_fixed;
use nalgebra::DVector;
use num_complex::Complex64;

/// A `k`-step linear multistep scheme
/// `sum_r alpha_r y_{n+1-r} = H sum_r beta_r f_{n+1-r}` with `alpha_0 = 1`.
#[derive(Debug, Clone)]
pub struct LmmScheme {
    pub name: String,
    pub steps: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub order: usize,
}

impl LmmScheme {
    pub fn new(name: &str, alpha: Vec<f64>, beta: Vec<f64>, order: usize) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != beta.len() {
            return Err(Error::BadParameter("alpha/beta length mismatch".into()));
        }
        if (alpha[0] - 1.0).abs() > 1e-14 {
            return Err(Error::BadParameter("alpha_0 must be one".into()));
        }
        let scheme = LmmScheme {
            name: name.to_string(),
            steps: alpha.len() - 1,
            alpha,
            beta,
            order,
        };
        if scheme.consistency_residual() > 1e-12 {
            return Err(Error::BadParameter(format!("{name}: sum alpha_r != 0")));
        }
        if !scheme.zero_stable() {
            return Err(Error::BadParameter(format!("{name}: root condition violated")));
        }
        Ok(scheme)
    }

    pub fn is_explicit(&self) -> bool {
        self.beta[0] == 0.0
    }

    /// `|sum_r alpha_r|`, which consistency requires to vanish.
    pub fn consistency_residual(&self) -> f64 {
        self.alpha.iter().sum::<f64>().abs()
    }

    /// Root condition of the generating polynomial `rho`.
    pub fn zero_stable(&self) -> bool {
        let k = self.steps;
        if k == 0 {
            return true;
        }
        // companion matrix of rho(z) = sum_r alpha_r z^{k-r}
        let mut comp = nalgebra::DMatrix::<f64>::zeros(k, k);
        for j in 0..k {
            comp[(0, j)] = -self.alpha[j + 1];
        }
        for i in 1..k {
            comp[(i, i - 1)] = 1.0;
        }
        let eigs = match comp.map(|v| Complex64::new(v, 0.0)).eigenvalues() {
            Some(e) => e,
            None => return false,
        };
        // modulus at most one; roots on the circle must be simple
        let on_circle: Vec<Complex64> = eigs.iter().filter(|z| z.norm() > 1.0 - 1e-9).copied().collect();
        if eigs.iter().any(|z| z.norm() > 1.0 + 1e-9) {
            return false;
        }
        for (i, zi) in on_circle.iter().enumerate() {
            for zj in on_circle.iter().skip(i + 1) {
                if (zi - zj).norm() < 1e-7 {
                    return false;
                }
            }
        }
        true
    }

    pub fn adams_bashforth(k: usize) -> Result<Self> {
        let (alpha, beta): (Vec<f64>, Vec<f64>) = match k {
            1 => (vec![1.0, -1.0], vec![0.0, 1.0]),
            2 => (vec![1.0, -1.0, 0.0], vec![0.0, 1.5, -0.5]),
            3 => (vec![1.0, -1.0, 0.0, 0.0], vec![0.0, 23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0]),
            4 => (
                vec![1.0, -1.0, 0.0, 0.0, 0.0],
                vec![0.0, 55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0],
            ),
            _ => return Err(Error::BadParameter(format!("AB-{k} not tabulated"))),
        };
        Self::new(&format!("ab{k}"), alpha, beta, k)
    }

    pub fn adams_moulton(k: usize) -> Result<Self> {
        let (alpha, beta): (Vec<f64>, Vec<f64>) = match k {
            1 => (vec![1.0, -1.0], vec![0.5, 0.5]),
            2 => (vec![1.0, -1.0, 0.0], vec![5.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0]),
            3 => (
                vec![1.0, -1.0, 0.0, 0.0],
                vec![9.0 / 24.0, 19.0 / 24.0, -5.0 / 24.0, 1.0 / 24.0],
            ),
            4 => (
                vec![1.0, -1.0, 0.0, 0.0, 0.0],
                vec![251.0 / 720.0, 646.0 / 720.0, -264.0 / 720.0, 106.0 / 720.0, -19.0 / 720.0],
            ),
            _ => return Err(Error::BadParameter(format!("AM-{k} not tabulated"))),
        };
        Self::new(&format!("am{k}"), alpha, beta, k + 1)
    }

    pub fn bdf(k: usize) -> Result<Self> {
        let (alpha, beta0): (Vec<f64>, f64) = match k {
            1 => (vec![1.0, -1.0], 1.0),
            2 => (vec![1.0, -4.0 / 3.0, 1.0 / 3.0], 2.0 / 3.0),
            3 => (vec![1.0, -18.0 / 11.0, 9.0 / 11.0, -2.0 / 11.0], 6.0 / 11.0),
            4 => (vec![1.0, -48.0 / 25.0, 36.0 / 25.0, -16.0 / 25.0, 3.0 / 25.0], 12.0 / 25.0),
            _ => return Err(Error::BadParameter(format!("BDF-{k} not tabulated"))),
        };
        let mut beta = vec![0.0; k + 1];
        beta[0] = beta0;
        Self::new(&format!("bdf{k}"), alpha, beta, k)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        let (family, k) = name.split_at(name.len().saturating_sub(1));
        let k: usize = k.parse().map_err(|_| Error::InvalidConfig(format!("bad scheme id '{name}'")))?;
        match family {
            "ab" => Self::adams_bashforth(k),
            "am" => Self::adams_moulton(k),
            "bdf" => Self::bdf(k),
            _ => Err(Error::InvalidConfig(format!("unknown scheme family '{family}'"))),
        }
    }
}

/// Interpolating polynomial through `(t, value)` points; evaluable anywhere,
/// inside or outside the data interval.
pub fn lagrange_poly(points: &[(f64, f64)]) -> Result<Polynomial> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    interpolate(&xs, &ys)
}

fn vector_lagrange(times: &[f64], values: &[DVector<f64>]) -> Result<Vec<Polynomial>> {
    let dim = values[0].len();
    let mut polys = Vec::with_capacity(dim);
    for comp in 0..dim {
        let ys: Vec<f64> = values.iter().map(|v| v[comp]).collect();
        polys.push(interpolate(times, &ys)?);
    }
    Ok(polys)
}

fn eval_vector_poly(polys: &[Polynomial], t: f64) -> DVector<f64> {
    DVector::from_fn(polys.len(), |i, _| polys[i].eval(t))
}

/// Lagrange basis weights of the nodes evaluated at the micro times; the
/// fill-in value at micro time `ell` is `sum_q w[ell][q] * point_q`.
fn lagrange_weights(nodes: &[f64], eval_times: &[f64]) -> Vec<Vec<f64>> {
    eval_times
        .iter()
        .map(|&t| {
            (0..nodes.len())
                .map(|q| {
                    let mut w = 1.0;
                    for (j, &xj) in nodes.iter().enumerate() {
                        if j != q {
                            w *= (t - xj) / (nodes[q] - xj);
                        }
                    }
                    w
                })
                .collect()
        })
        .collect()
}

/// Precomputed fill-in rule for the slow values on the fine grid: a weight
/// for the (possibly still unknown) new endpoint plus weights on the stored
/// coarse history.
struct SlowFill {
    /// Per micro time: weight of the endpoint `y_slow(t_{n+1})`.
    w_new: Vec<f64>,
    /// Per micro time: weights of history points `r = 0..`, newest first.
    w_old: Vec<Vec<f64>>,
}

impl SlowFill {
    fn eval(&self, ell: usize, endpoint: Option<&DVector<f64>>, hist: &HistoryWindow) -> DVector<f64> {
        let mut out = match endpoint {
            Some(v) => v * self.w_new[ell - 1],
            None => {
                debug_assert_eq!(self.w_new[ell - 1], 0.0);
                DVector::zeros(hist.slow[0].len())
            }
        };
        for (r, &w) in self.w_old[ell - 1].iter().enumerate() {
            if w != 0.0 {
                out += &hist.slow[r] * w;
            }
        }
        out
    }
}

/// Coarse/fine solution and derivative history.
///
/// Index 0 is the newest point. The fine grid keeps `(k-1) m + 1` points so
/// that both the `k` fine back-values of the fast recursion and the coarse
/// lattice values needed by the slow equation stay available.
#[derive(Debug, Clone)]
pub struct HistoryWindow {
    pub k: usize,
    pub m: usize,
    pub h_macro: f64,
    /// Time of the newest coarse point.
    pub t_n: f64,
    pub slow: Vec<DVector<f64>>,
    pub slow_rhs: Vec<DVector<f64>>,
    pub fast: Vec<DVector<f64>>,
    pub fast_rhs: Vec<DVector<f64>>,
}

impl HistoryWindow {
    pub fn fine_len(k: usize, m: usize) -> usize {
        (k - 1) * m + 1
    }

    /// Coarse time `t_{n-r}`.
    pub fn coarse_time(&self, r: usize) -> f64 {
        self.t_n - r as f64 * self.h_macro
    }

    /// Fine time `t_{n - j/m}`.
    pub fn fine_time(&self, j: usize) -> f64 {
        self.t_n - j as f64 * self.h_macro / self.m as f64
    }

    /// Fast value on the coarse lattice, `y_fast(t_{n-r})`.
    pub fn fast_at_coarse(&self, r: usize) -> &DVector<f64> {
        &self.fast[r * self.m]
    }

    pub fn state(&self) -> SplitState {
        SplitState::new(self.slow[0].clone(), self.fast[0].clone(), self.t_n)
    }

    fn assert_populated(&self) {
        assert_eq!(self.slow.len(), self.k);
        assert_eq!(self.slow_rhs.len(), self.k);
        assert_eq!(self.fast.len(), Self::fine_len(self.k, self.m));
        assert_eq!(self.fast_rhs.len(), Self::fine_len(self.k, self.m));
    }
}

/// Coupling strategies of one multirate LMM macro-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmmStrategy {
    /// Explicit base scheme; fast micro-steps interpolate the already
    /// computed slow endpoint.
    ExplicitSlowest,
    /// Explicit base scheme; fast micro-steps extrapolate from old slow
    /// values only.
    ExplicitFastest,
    /// Fast solved first against extrapolated slow values, then the slow
    /// step sees the finished fast endpoint.
    ImplicitDecoupledFastest,
    /// Slow solved first against the extrapolated fast endpoint, then the
    /// fast sweep interpolates the new slow value.
    ImplicitDecoupledSlowest,
    /// Like decoupled-fastest, but the last micro-step and the slow step
    /// form one joint system.
    ImplicitCoupledFastest,
    /// Slow step and all micro-steps form one joint system (the
    /// interpolant of the unknown slow endpoint enters every micro-step).
    ImplicitCoupledSlowest,
    /// Macro-sized predictor for both components, then a corrected fast
    /// sweep with interpolation replacing extrapolation.
    Compound,
    /// Predictor couples the slow step with one fast micro-step instead of
    /// a macro-sized fast step.
    GeneralizedCompound,
}

impl LmmStrategy {
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "explicit-slowest" => LmmStrategy::ExplicitSlowest,
            "explicit-fastest" => LmmStrategy::ExplicitFastest,
            "implicit-decoupled-fastest" => LmmStrategy::ImplicitDecoupledFastest,
            "implicit-decoupled-slowest" => LmmStrategy::ImplicitDecoupledSlowest,
            "implicit-coupled-fastest" => LmmStrategy::ImplicitCoupledFastest,
            "implicit-coupled-slowest" => LmmStrategy::ImplicitCoupledSlowest,
            "compound" => LmmStrategy::Compound,
            "generalized-compound" => LmmStrategy::GeneralizedCompound,
            _ => return Err(Error::InvalidConfig(format!("unknown LMM strategy '{name}'"))),
        })
    }

    pub fn requires_implicit_scheme(self) -> bool {
        !matches!(self, LmmStrategy::ExplicitSlowest | LmmStrategy::ExplicitFastest)
    }
}

/// Per-step options.
#[derive(Debug, Clone, Copy)]
pub struct LmmOptions {
    /// Re-solve the slow step with the finished fast endpoint
    /// (decoupled-slowest and compound only).
    pub second_slow_update: bool,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions { second_slow_update: false }
    }
}

struct StepContext<'a> {
    scheme: &'a LmmScheme,
    sys: &'a PartitionedOde,
    hist: &'a HistoryWindow,
    h_macro: f64,
    m: usize,
    cfg: NewtonConfig,
}

impl<'a> StepContext<'a> {
    fn h_micro(&self) -> f64 {
        self.h_macro / self.m as f64
    }

    /// `-sum_{r>=1} alpha_r y_{n+1-r} + H sum_{r>=1} beta_r f_{n+1-r}` on
    /// the coarse slow grid (the known part of the slow equation).
    fn slow_known_part(&self) -> DVector<f64> {
        let k = self.scheme.steps;
        let mut acc = DVector::zeros(self.sys.dim_slow);
        for r in 1..=k {
            acc -= &self.hist.slow[r - 1] * self.scheme.alpha[r];
            if self.scheme.beta[r] != 0.0 {
                acc += &self.hist.slow_rhs[r - 1] * (self.h_macro * self.scheme.beta[r]);
            }
        }
        acc
    }

    /// Known part of the fast recursion for the micro-step producing the
    /// value at `t_n + ell h` (`ell` in `1..=m`), given the fine values and
    /// modified rhs computed so far in this macro-step (newest first).
    fn fast_known_part(&self, ell: usize, new_fast: &[DVector<f64>], new_rhs: &[DVector<f64>]) -> DVector<f64> {
        let k = self.scheme.steps;
        let h = self.h_micro();
        let mut acc = DVector::zeros(self.sys.dim_fast);
        for r in 1..=k {
            // fine index of t_{n + (ell - r)/m} relative to the histories
            let offset = ell as isize - r as isize;
            let (value, rhs): (&DVector<f64>, &DVector<f64>) = if offset > 0 {
                let idx = (ell - r) - 1; // position within this macro-step, oldest...newest
                (&new_fast[idx], &new_rhs[idx])
            } else {
                let j = (-offset) as usize;
                (&self.hist.fast[j], &self.hist.fast_rhs[j])
            };
            acc -= value * self.scheme.alpha[r];
            if self.scheme.beta[r] != 0.0 {
                acc += rhs * (h * self.scheme.beta[r]);
            }
        }
        acc
    }

    fn micro_times(&self) -> Vec<f64> {
        (1..=self.m).map(|ell| self.hist.t_n + ell as f64 * self.h_micro()).collect()
    }

    /// Fill-in rule from the old coarse points only (extrapolating).
    fn slow_extrapolant(&self) -> SlowFill {
        let k = self.scheme.steps;
        let nodes: Vec<f64> = (0..k).map(|r| self.hist.coarse_time(r)).collect();
        let w = lagrange_weights(&nodes, &self.micro_times());
        SlowFill { w_new: vec![0.0; self.m], w_old: w }
    }

    /// Fill-in rule through the newest `k-1` coarse points plus the (known
    /// or unknown) endpoint at `t_{n+1}` (interpolating).
    fn slow_interpolant(&self) -> SlowFill {
        let k = self.scheme.steps;
        let mut nodes = vec![self.hist.t_n + self.h_macro];
        nodes.extend((0..k - 1).map(|r| self.hist.coarse_time(r)));
        let w = lagrange_weights(&nodes, &self.micro_times());
        SlowFill {
            w_new: w.iter().map(|row| row[0]).collect(),
            w_old: w.into_iter().map(|row| row[1..].to_vec()).collect(),
        }
    }

    /// Extrapolated fast value at `t_{n+1}` from the coarse fast lattice.
    fn fast_extrapolated_endpoint(&self) -> Result<DVector<f64>> {
        let k = self.scheme.steps;
        let times: Vec<f64> = (0..k).map(|r| self.hist.coarse_time(r)).collect();
        let values: Vec<DVector<f64>> = (0..k).map(|r| self.hist.fast_at_coarse(r).clone()).collect();
        let polys = vector_lagrange(&times, &values)?;
        Ok(eval_vector_poly(&polys, self.hist.t_n + self.h_macro))
    }

    /// Implicit fast micro solve with a fixed slow argument.
    fn solve_fast_micro(
        &self,
        known: &DVector<f64>,
        slow_arg: &DVector<f64>,
        t_new: f64,
        guess: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let h = self.h_micro();
        let beta0 = self.scheme.beta[0];
        if beta0 == 0.0 {
            let value = known.clone();
            let rhs = self.sys.f_fast(slow_arg, &value, t_new);
            return Ok((value, rhs));
        }
        let residual =
            |x: &DVector<f64>| x - known - self.sys.f_fast(slow_arg, x, t_new) * (h * beta0);
        let out = newton_solve(&residual, guess, None, self.cfg, "fast micro-step")?;
        let rhs = self.sys.f_fast(slow_arg, &out.solution, t_new);
        Ok((out.solution, rhs))
    }

    /// Fast sweep over all micro-steps; slow arguments come from the fill-in
    /// rule with a fixed endpoint (or none for pure extrapolation).
    fn fast_sweep(
        &self,
        fill: &SlowFill,
        endpoint: Option<&DVector<f64>>,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let mut new_fast: Vec<DVector<f64>> = Vec::with_capacity(self.m);
        let mut new_rhs: Vec<DVector<f64>> = Vec::with_capacity(self.m);
        for ell in 1..=self.m {
            let t_new = self.hist.t_n + ell as f64 * self.h_micro();
            let known = self.fast_known_part(ell, &new_fast, &new_rhs);
            let slow_arg = fill.eval(ell, endpoint, self.hist);
            let guess = if ell == 1 { self.hist.fast[0].clone() } else { new_fast[ell - 2].clone() };
            let (value, rhs) = self.solve_fast_micro(&known, &slow_arg, t_new, &guess)?;
            new_fast.push(value);
            new_rhs.push(rhs);
        }
        Ok((new_fast, new_rhs))
    }

    /// Implicit slow solve with a fixed fast argument in the `beta_0` term.
    fn solve_slow(&self, fast_arg: &DVector<f64>) -> Result<DVector<f64>> {
        let known = self.slow_known_part();
        let beta0 = self.scheme.beta[0];
        let t_new = self.hist.t_n + self.h_macro;
        if beta0 == 0.0 {
            return Ok(known);
        }
        let residual =
            |x: &DVector<f64>| x - &known - self.sys.f_slow(x, fast_arg, t_new) * (self.h_macro * beta0);
        Ok(newton_solve(&residual, &self.hist.slow[0], None, self.cfg, "slow macro-step")?.solution)
    }
}

fn push_history(
    hist: &HistoryWindow,
    y_slow_new: DVector<f64>,
    slow_rhs_new: DVector<f64>,
    new_fast: Vec<DVector<f64>>,
    new_rhs: Vec<DVector<f64>>,
) -> HistoryWindow {
    let mut out = hist.clone();
    out.t_n += hist.h_macro;
    out.slow.insert(0, y_slow_new);
    out.slow.truncate(hist.k);
    out.slow_rhs.insert(0, slow_rhs_new);
    out.slow_rhs.truncate(hist.k);
    let keep = HistoryWindow::fine_len(hist.k, hist.m);
    for (v, r) in new_fast.into_iter().zip(new_rhs) {
        out.fast.insert(0, v);
        out.fast_rhs.insert(0, r);
    }
    out.fast.truncate(keep);
    out.fast_rhs.truncate(keep);
    out
}

/// Advance slow and fast histories by one macro-step under the requested
/// coupling strategy.
pub fn mrlmm_step(
    scheme: &LmmScheme,
    strategy: LmmStrategy,
    sys: &PartitionedOde,
    hist: &HistoryWindow,
    cfg: NewtonConfig,
    opts: LmmOptions,
) -> Result<HistoryWindow> {
    hist.assert_populated();
    assert_eq!(hist.k, scheme.steps, "history sized for a different scheme");
    if strategy.requires_implicit_scheme() && scheme.is_explicit() {
        return Err(Error::UnsupportedCombination(format!(
            "{strategy:?} needs an implicit base scheme, got {}",
            scheme.name
        )));
    }
    if !strategy.requires_implicit_scheme() && !scheme.is_explicit() {
        return Err(Error::UnsupportedCombination(format!(
            "explicit strategies require beta_0 = 0, got {}",
            scheme.name
        )));
    }
    let ctx = StepContext { scheme, sys, hist, h_macro: hist.h_macro, m: hist.m, cfg };
    let t_new = hist.t_n + hist.h_macro;
    let k = scheme.steps;
    let (d_s, d_f) = (sys.dim_slow, sys.dim_fast);

    match strategy {
        LmmStrategy::ExplicitSlowest | LmmStrategy::ExplicitFastest => {
            // the slow endpoint costs nothing extra, so both flavors compute
            // it first; they differ in the fill-in rule of the sweep
            let y_slow_new = ctx.slow_known_part();
            let (new_fast, new_rhs) = if strategy == LmmStrategy::ExplicitSlowest {
                ctx.fast_sweep(&ctx.slow_interpolant(), Some(&y_slow_new))?
            } else {
                ctx.fast_sweep(&ctx.slow_extrapolant(), None)?
            };
            let slow_rhs_new = sys.f_slow(&y_slow_new, &new_fast[hist.m - 1], t_new);
            Ok(push_history(hist, y_slow_new, slow_rhs_new, new_fast, new_rhs))
        }
        LmmStrategy::ImplicitDecoupledFastest => {
            let (new_fast, new_rhs) = ctx.fast_sweep(&ctx.slow_extrapolant(), None)?;
            let y_slow_new = ctx.solve_slow(&new_fast[hist.m - 1])?;
            let slow_rhs_new = sys.f_slow(&y_slow_new, &new_fast[hist.m - 1], t_new);
            Ok(push_history(hist, y_slow_new, slow_rhs_new, new_fast, new_rhs))
        }
        LmmStrategy::ImplicitDecoupledSlowest => {
            let fast_guess = ctx.fast_extrapolated_endpoint()?;
            let mut y_slow_new = ctx.solve_slow(&fast_guess)?;
            let (new_fast, new_rhs) = ctx.fast_sweep(&ctx.slow_interpolant(), Some(&y_slow_new))?;
            if opts.second_slow_update {
                y_slow_new = ctx.solve_slow(&new_fast[hist.m - 1])?;
            }
            let slow_rhs_new = sys.f_slow(&y_slow_new, &new_fast[hist.m - 1], t_new);
            Ok(push_history(hist, y_slow_new, slow_rhs_new, new_fast, new_rhs))
        }
        LmmStrategy::ImplicitCoupledFastest => {
            // micro-steps 1..m-1 decoupled against the extrapolant, then the
            // last micro-step and the slow step are solved together
            let fill = ctx.slow_extrapolant();
            let mut new_fast: Vec<DVector<f64>> = Vec::with_capacity(hist.m);
            let mut new_rhs: Vec<DVector<f64>> = Vec::with_capacity(hist.m);
            for ell in 1..hist.m {
                let t_mid = hist.t_n + ell as f64 * ctx.h_micro();
                let known = ctx.fast_known_part(ell, &new_fast, &new_rhs);
                let slow_arg = fill.eval(ell, None, hist);
                let guess = if ell == 1 { hist.fast[0].clone() } else { new_fast[ell - 2].clone() };
                let (value, rhs) = ctx.solve_fast_micro(&known, &slow_arg, t_mid, &guess)?;
                new_fast.push(value);
                new_rhs.push(rhs);
            }
            let fast_known = ctx.fast_known_part(hist.m, &new_fast, &new_rhs);
            let slow_known = ctx.slow_known_part();
            let h = ctx.h_micro();
            let residual = |x: &DVector<f64>| -> DVector<f64> {
                let xs = x.rows(0, d_s).into_owned();
                let xf = x.rows(d_s, d_f).into_owned();
                let rs = &xs - &slow_known - sys.f_slow(&xs, &xf, t_new) * (hist.h_macro * scheme.beta[0]);
                let rf = &xf - &fast_known - sys.f_fast(&xs, &xf, t_new) * (h * scheme.beta[0]);
                stack(&rs, &rf)
            };
            let guess = stack(&hist.slow[0], &hist.fast[0]);
            let joint = newton_solve(&residual, &guess, None, cfg, "coupled fast/slow endpoint")?;
            let y_slow_new = joint.solution.rows(0, d_s).into_owned();
            let y_fast_new = joint.solution.rows(d_s, d_f).into_owned();
            let rhs_last = sys.f_fast(&y_slow_new, &y_fast_new, t_new);
            new_fast.push(y_fast_new.clone());
            new_rhs.push(rhs_last);
            let slow_rhs_new = sys.f_slow(&y_slow_new, &y_fast_new, t_new);
            Ok(push_history(hist, y_slow_new, slow_rhs_new, new_fast, new_rhs))
        }
        LmmStrategy::ImplicitCoupledSlowest => {
            // one joint system over the slow endpoint and every micro value:
            // the interpolant of the unknown endpoint feeds all micro-steps
            let total = d_s + hist.m * d_f;
            let slow_known = ctx.slow_known_part();
            let fill = ctx.slow_interpolant();
            let h = ctx.h_micro();
            let residual = |x: &DVector<f64>| -> DVector<f64> {
                let xs = x.rows(0, d_s).into_owned();
                let xf = |ell: usize| x.rows(d_s + (ell - 1) * d_f, d_f).into_owned();
                let mut r = DVector::zeros(total);
                let rs = &xs
                    - &slow_known
                    - sys.f_slow(&xs, &xf(hist.m), t_new) * (hist.h_macro * scheme.beta[0]);
                r.rows_mut(0, d_s).copy_from(&rs);
                // rebuild in-flight values/rhs for the known parts
                let mut vals: Vec<DVector<f64>> = Vec::with_capacity(hist.m);
                let mut rhss: Vec<DVector<f64>> = Vec::with_capacity(hist.m);
                for ell in 1..=hist.m {
                    let t_mid = hist.t_n + ell as f64 * h;
                    let slow_arg = fill.eval(ell, Some(&xs), hist);
                    let value = xf(ell);
                    let rhs = sys.f_fast(&slow_arg, &value, t_mid);
                    let known = ctx.fast_known_part(ell, &vals, &rhss);
                    let rf = &value - &known - &rhs * (h * scheme.beta[0]);
                    r.rows_mut(d_s + (ell - 1) * d_f, d_f).copy_from(&rf);
                    vals.push(value);
                    rhss.push(rhs);
                }
                r
            };
            let mut guess = DVector::zeros(total);
            guess.rows_mut(0, d_s).copy_from(&hist.slow[0]);
            for ell in 0..hist.m {
                guess.rows_mut(d_s + ell * d_f, d_f).copy_from(&hist.fast[0]);
            }
            let joint = newton_solve(&residual, &guess, None, cfg, "coupled slowest-first system")?;
            let y_slow_new = joint.solution.rows(0, d_s).into_owned();
            let mut new_fast = Vec::with_capacity(hist.m);
            let mut new_rhs = Vec::with_capacity(hist.m);
            for ell in 1..=hist.m {
                let value = joint.solution.rows(d_s + (ell - 1) * d_f, d_f).into_owned();
                let t_mid = hist.t_n + ell as f64 * h;
                let rhs = sys.f_fast(&fill.eval(ell, Some(&y_slow_new), hist), &value, t_mid);
                new_fast.push(value);
                new_rhs.push(rhs);
            }
            let slow_rhs_new = sys.f_slow(&y_slow_new, &new_fast[hist.m - 1], t_new);
            Ok(push_history(hist, y_slow_new, slow_rhs_new, new_fast, new_rhs))
        }
        LmmStrategy::Compound | LmmStrategy::GeneralizedCompound => {
            // predictor
            let slow_known = ctx.slow_known_part();
            let (y_slow_pred, _fast_pred) = if strategy == LmmStrategy::Compound {
                // macro-sized predictor for both components with true
                // arguments; coarse fast rhs values evaluated afresh
                let mut fast_known = DVector::zeros(d_f);
                for r in 1..=k {
                    fast_known -= ctx.hist.fast_at_coarse(r - 1) * scheme.alpha[r];
                    if scheme.beta[r] != 0.0 {
                        let t_r = hist.coarse_time(r - 1);
                        let f = sys.f_fast(&hist.slow[r - 1], ctx.hist.fast_at_coarse(r - 1), t_r);
                        fast_known += f * (hist.h_macro * scheme.beta[r]);
                    }
                }
                let residual = |x: &DVector<f64>| -> DVector<f64> {
                    let xs = x.rows(0, d_s).into_owned();
                    let xf = x.rows(d_s, d_f).into_owned();
                    let rs = &xs - &slow_known - sys.f_slow(&xs, &xf, t_new) * (hist.h_macro * scheme.beta[0]);
                    let rf = &xf - &fast_known - sys.f_fast(&xs, &xf, t_new) * (hist.h_macro * scheme.beta[0]);
                    stack(&rs, &rf)
                };
                let guess = stack(&hist.slow[0], &hist.fast[0]);
                let joint = newton_solve(&residual, &guess, None, cfg, "compound predictor")?;
                (joint.solution.rows(0, d_s).into_owned(), joint.solution.rows(d_s, d_f).into_owned())
            } else {
                // generalized: slow step with the extrapolated fast endpoint,
                // jointly with the first fast micro-step against old slow data
                let fast_guess = ctx.fast_extrapolated_endpoint()?;
                let y_slow_pred = ctx.solve_slow(&fast_guess)?;
                let polys = ctx.slow_extrapolant()?;
                let t_first = hist.t_n + ctx.h_micro();
                let known = ctx.fast_known_part(1, &[], &[]);
                let slow_arg = eval_vector_poly(&polys, t_first);
                let (first, _) = ctx.solve_fast_micro(&known, &slow_arg, t_first, &hist.fast[0])?;
                (y_slow_pred, first)
            };
            // corrected fast sweep interpolates the predicted slow endpoint
            let polys = ctx.slow_interpolant(&y_slow_pred)?;
            let (new_fast, new_rhs) = ctx.fast_sweep(&polys)?;
            let y_slow_new = if opts.second_slow_update {
                ctx.solve_slow(&new_fast[hist.m - 1])?
            } else {
                y_slow_pred
            };
            let slow_rhs_new = sys.f_slow(&y_slow_new, &new_fast[hist.m - 1], t_new);
            Ok(push_history(hist, y_slow_new, slow_rhs_new, new_fast, new_rhs))
        }
    }
}

/// Fill a history window by integrating forward from `state0` with
/// fixed-step RK4 at a resolution chosen so the startup error stays well
/// below the scheme's expected truncation error. `refine` multiplies the
/// substep count (startup-insensitivity studies pass 10).
pub fn bootstrap_history(
    scheme: &LmmScheme,
    sys: &PartitionedOde,
    state0: &SplitState,
    h_macro: f64,
    m: usize,
    refine: usize,
) -> Result<HistoryWindow> {
    let k = scheme.steps;
    let h = h_macro / m as f64;
    let fine_len = HistoryWindow::fine_len(k, m);
    // (h/n)^4 * span <= 0.01 H^{p+1}
    let span = ((k - 1) * m).max(1) as f64 * h;
    let target = 0.01 * h_macro.powi(scheme.order as i32 + 1);
    let n_sub = ((h * (span / target).powf(0.25)).ceil() as usize).clamp(4, 4000) * refine.max(1);

    let f_full = |y: &DVector<f64>, t: f64| {
        let ys = y.rows(0, sys.dim_slow).into_owned();
        let yf = y.rows(sys.dim_slow, sys.dim_fast).into_owned();
        stack(&sys.f_slow(&ys, &yf, t), &sys.f_fast(&ys, &yf, t))
    };

    // walk the fine grid forward, remembering every point
    let mut fine_states = vec![state0.stacked()];
    let mut t = state0.t;
    for _ in 1..fine_len {
        let next = rk4_fixed(&f_full, fine_states.last().unwrap(), t, t + h, n_sub);
        fine_states.push(next);
        t += h;
    }
    let t_n = state0.t + (fine_len - 1) as f64 * h;

    let split = |v: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        (v.rows(0, sys.dim_slow).into_owned(), v.rows(sys.dim_slow, sys.dim_fast).into_owned())
    };

    let mut fast = Vec::with_capacity(fine_len);
    let mut fast_rhs = Vec::with_capacity(fine_len);
    for (j, v) in fine_states.iter().rev().enumerate() {
        let (ys, yf) = split(v);
        let t_j = t_n - j as f64 * h;
        fast_rhs.push(sys.f_fast(&ys, &yf, t_j));
        fast.push(yf);
    }
    let mut slow = Vec::with_capacity(k);
    let mut slow_rhs = Vec::with_capacity(k);
    for r in 0..k {
        let idx = fine_states.len() - 1 - r * m;
        let (ys, yf) = split(&fine_states[idx]);
        let t_r = t_n - r as f64 * h_macro;
        slow_rhs.push(sys.f_slow(&ys, &yf, t_r));
        slow.push(ys);
    }
    Ok(HistoryWindow { k, m, h_macro, t_n, slow, slow_rhs, fast, fast_rhs })
}

/// Integrate on a fixed macro grid; returns the final history.
pub fn integrate_mrlmm(
    scheme: &LmmScheme,
    strategy: LmmStrategy,
    sys: &PartitionedOde,
    state0: &SplitState,
    h_macro: f64,
    m: usize,
    n_macro_steps: usize,
    cfg: NewtonConfig,
    opts: LmmOptions,
) -> Result<HistoryWindow> {
    let mut hist = bootstrap_history(scheme, sys, state0, h_macro, m, 1)?;
    let startup = scheme.steps - 1;
    if n_macro_steps < startup {
        return Err(Error::BadParameter("span too short for the startup window".into()));
    }
    for _ in 0..n_macro_steps - startup {
        hist = mrlmm_step(scheme, strategy, sys, &hist, cfg, opts)?;
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::newton::NewtonMode;
    use crate::euler_mr::{mrbe_step, EulerCoupling, EulerMode};
    use crate::problems::TestProblem2x2;

    fn tight() -> NewtonConfig {
        NewtonConfig { tol: 1e-13, max_iters: 100, mode: NewtonMode::Full }
    }

    #[test]
    fn schemes_load_and_are_zero_stable() {
        for k in 1..=4 {
            assert!(LmmScheme::adams_bashforth(k).is_ok());
            assert!(LmmScheme::adams_moulton(k).is_ok());
            assert!(LmmScheme::bdf(k).is_ok());
        }
        assert!(LmmScheme::bdf(5).is_err());
    }

    #[test]
    fn unstable_scheme_rejected() {
        // y_{n+1} - 2 y_n + y_{n-1} = ... has a double root at 1
        let err = LmmScheme::new("double-root", vec![1.0, -2.0, 1.0], vec![0.0, 1.0, 0.0], 1);
        assert!(err.is_err());
    }

    #[test]
    fn lagrange_poly_basics() {
        let p = lagrange_poly(&[(0.0, 3.0)]).unwrap();
        assert_eq!(p.eval(17.0), 3.0);
        let p = lagrange_poly(&[(0.0, 0.0), (1.0, 2.0)]).unwrap();
        assert!((p.eval(0.5) - 1.0).abs() < 1e-15);
        assert!(lagrange_poly(&[(1.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn lagrange_reproduces_polynomials() {
        // degree k-1 data reproduced exactly at off-grid points
        for k in 2..=4usize {
            let poly = |x: f64| (0..k).map(|j| (j as f64 + 0.3) * x.powi(j as i32)).sum::<f64>();
            let pts: Vec<(f64, f64)> = (0..k).map(|i| (i as f64 * 0.7 - 1.0, poly(i as f64 * 0.7 - 1.0))).collect();
            let p = lagrange_poly(&pts).unwrap();
            for i in 0..100 {
                let x = -2.0 + 4.0 * (i as f64 * 0.618).fract();
                assert!((p.eval(x) - poly(x)).abs() < 1e-12 * (1.0 + poly(x).abs()), "k={k}");
            }
        }
    }

    fn zero_sys() -> PartitionedOde {
        PartitionedOde::new(
            1,
            1,
            Box::new(|_, _, _| DVector::zeros(1)),
            Box::new(|_, _, _| DVector::zeros(1)),
        )
    }

    #[test]
    fn zero_rhs_shifts_history_unchanged() {
        let sys = zero_sys();
        let state0 = SplitState::new(DVector::from_element(1, 2.0), DVector::from_element(1, -1.0), 0.0);
        for (scheme, strategies) in [
            (
                LmmScheme::adams_bashforth(2).unwrap(),
                vec![LmmStrategy::ExplicitSlowest, LmmStrategy::ExplicitFastest],
            ),
            (
                LmmScheme::bdf(2).unwrap(),
                vec![
                    LmmStrategy::ImplicitDecoupledFastest,
                    LmmStrategy::ImplicitDecoupledSlowest,
                    LmmStrategy::ImplicitCoupledFastest,
                    LmmStrategy::ImplicitCoupledSlowest,
                    LmmStrategy::Compound,
                    LmmStrategy::GeneralizedCompound,
                ],
            ),
        ] {
            let hist = bootstrap_history(&scheme, &sys, &state0, 0.1, 3, 1).unwrap();
            for strategy in strategies {
                let out = mrlmm_step(&scheme, strategy, &sys, &hist, tight(), LmmOptions::default()).unwrap();
                assert_eq!(out.slow[0], state0.y_slow, "{strategy:?}");
                assert_eq!(out.fast[0], state0.y_fast, "{strategy:?}");
                assert_eq!(out.fast.len(), HistoryWindow::fine_len(2, 3));
            }
        }
    }

    #[test]
    fn incompatible_strategy_scheme_pairs_rejected() {
        let sys = zero_sys();
        let state0 = SplitState::new(DVector::zeros(1), DVector::zeros(1), 0.0);
        let ab2 = LmmScheme::adams_bashforth(2).unwrap();
        let hist = bootstrap_history(&ab2, &sys, &state0, 0.1, 2, 1).unwrap();
        assert!(mrlmm_step(&ab2, LmmStrategy::ImplicitCoupledSlowest, &sys, &hist, tight(), LmmOptions::default()).is_err());
        let bdf2 = LmmScheme::bdf(2).unwrap();
        let hist = bootstrap_history(&bdf2, &sys, &state0, 0.1, 2, 1).unwrap();
        assert!(mrlmm_step(&bdf2, LmmStrategy::ExplicitSlowest, &sys, &hist, tight(), LmmOptions::default()).is_err());
    }

    #[test]
    fn bdf1_decoupled_slowest_reduces_to_mrbe() {
        // k = 1 histories carry no extra points, so the scheme is exactly
        // the decoupled slowest-first backward Euler method
        let p = TestProblem2x2::new(-1.0, -12.0, 0.6, -0.4).unwrap();
        let sys = p.build();
        let bdf1 = LmmScheme::bdf(1).unwrap();
        let state0 = SplitState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.8), 0.0);
        let (h, m) = (0.08, 4usize);
        let mut hist = bootstrap_history(&bdf1, &sys, &state0, h, m, 1).unwrap();
        let mut euler_state = state0.clone();
        let coupling = EulerCoupling::new(EulerMode::BeDecoupledSlowest, crate::euler_mr::Interpolation::ConstantAtTn1).unwrap();
        for _ in 0..5 {
            hist = mrlmm_step(&bdf1, LmmStrategy::ImplicitDecoupledSlowest, &sys, &hist, tight(), LmmOptions::default()).unwrap();
            let (next, _) = mrbe_step(&sys, &euler_state, h, m, coupling, tight()).unwrap();
            euler_state = next;
            assert!((hist.slow[0][0] - euler_state.y_slow[0]).abs() < 1e-11);
            assert!((hist.fast[0][0] - euler_state.y_fast[0]).abs() < 1e-11);
        }
    }

    #[test]
    fn explicit_k2_matches_hand_transcription() {
        // the four update formulas of the k = 2, m = 3 compound step,
        // written out by hand on random linear data
        let p = TestProblem2x2::new(-0.7, -5.0, 0.3, 0.2).unwrap();
        let sys = p.build();
        let ab2 = LmmScheme::adams_bashforth(2).unwrap();
        let (h_macro, m) = (0.1, 3usize);
        let state0 = SplitState::new(DVector::from_element(1, 0.9), DVector::from_element(1, -0.6), 0.0);
        let hist = bootstrap_history(&ab2, &sys, &state0, h_macro, m, 1).unwrap();
        let out = mrlmm_step(&ab2, LmmStrategy::ExplicitSlowest, &sys, &hist, tight(), LmmOptions::default()).unwrap();

        let (a1, a2) = (ab2.alpha[1], ab2.alpha[2]);
        let (b1, b2) = (ab2.beta[1], ab2.beta[2]);
        let h = h_macro / m as f64;
        let fs = |ys: f64, yf: f64| p.lambda_ss * ys + p.lambda_fs * yf;
        let ff = |ys: f64, yf: f64| p.lambda_sf * ys + p.lambda_ff * yf;
        // slow step
        let ys_n = hist.slow[0][0];
        let ys_n1 = hist.slow[1][0];
        let yf_n = hist.fast_at_coarse(0)[0];
        let yf_n1 = hist.fast_at_coarse(1)[0];
        let slow_new = -a1 * ys_n - a2 * ys_n1 + h_macro * (b1 * fs(ys_n, yf_n) + b2 * fs(ys_n1, yf_n1));
        assert!((out.slow[0][0] - slow_new).abs() < 1e-13);
        // fast steps with interpolated slow values (k = 2: linear through
        // t_n and t_{n+1})
        let interp = |t: f64| {
            let theta = (t - hist.t_n) / h_macro;
            ys_n * (1.0 - theta) + slow_new * theta
        };
        let mut f_hist: Vec<f64> = hist.fast_rhs.iter().map(|v| v[0]).collect(); // newest first
        let mut v_hist: Vec<f64> = hist.fast.iter().map(|v| v[0]).collect();
        for ell in 1..=m {
            let t_mid = hist.t_n + ell as f64 * h;
            let value = -a1 * v_hist[0] - a2 * v_hist[1] + h * (b1 * f_hist[0] + b2 * f_hist[1]);
            let f_new = ff(interp(t_mid), value);
            v_hist.insert(0, value);
            f_hist.insert(0, f_new);
        }
        assert!((out.fast[0][0] - v_hist[0]).abs() < 1e-12);
        assert!((out.fast[1][0] - v_hist[1]).abs() < 1e-12);
        assert!((out.fast[2][0] - v_hist[2]).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_matches_exact_solution_on_linear_problem() {
        let p = crate::problems::AccuracyTestProblem::default_params();
        let sys = p.build();
        let scheme = LmmScheme::adams_bashforth(3).unwrap();
        let state0 = p.initial_state();
        let hist = bootstrap_history(&scheme, &sys, &state0, 1e-3, 4, 1).unwrap();
        for r in 0..scheme.steps {
            let t = hist.coarse_time(r);
            let exact = p.exact(t);
            assert!((hist.slow[r].clone() - exact.y_slow).amax() < 1e-10, "r={r}");
        }
        for j in 0..hist.fast.len() {
            let t = hist.fine_time(j);
            let exact = p.exact(t);
            assert!((hist.fast[j].clone() - exact.y_fast).amax() < 1e-10, "j={j}");
        }
    }

    #[test]
    fn coupled_slowest_fixed_point_reached_by_iteration() {
        // iterating the decoupled sweep with refreshed interpolants converges
        // to the joint solve on a contractive linear problem
        let p = TestProblem2x2::new(-1.0, -8.0, 0.4, 0.3).unwrap();
        let sys = p.build();
        let bdf2 = LmmScheme::bdf(2).unwrap();
        let state0 = SplitState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0), 0.0);
        let hist = bootstrap_history(&bdf2, &sys, &state0, 0.05, 3, 1).unwrap();
        let joint = mrlmm_step(&bdf2, LmmStrategy::ImplicitCoupledSlowest, &sys, &hist, tight(), LmmOptions::default()).unwrap();

        // dynamic iteration: start from the extrapolated endpoint, redo the
        // decoupled sweep with the refreshed slow value twice
        let ctx_like_first = mrlmm_step(
            &bdf2,
            LmmStrategy::ImplicitDecoupledSlowest,
            &sys,
            &hist,
            tight(),
            LmmOptions { second_slow_update: true },
        )
        .unwrap();
        let second = mrlmm_step(
            &bdf2,
            LmmStrategy::ImplicitDecoupledSlowest,
            &sys,
            &hist,
            tight(),
            LmmOptions { second_slow_update: true },
        )
        .unwrap();
        // one re-solve already lands near the fixed point; the change from
        // a further iteration is below the scheme's truncation error scale
        let lte_scale = 0.05f64.powi(3);
        assert!((ctx_like_first.slow[0][0] - joint.slow[0][0]).abs() < lte_scale);
        assert!((second.slow[0][0] - joint.slow[0][0]).abs() < lte_scale);
    }
}
