//! Execution of multirate GARK methods, embedded error estimation, and the
//! step-size / multirate-ratio controllers.
//!
//! Two independent execution paths exist on purpose. [`mrgark_step`] runs
//! the micro-stepped process with stages evaluated in the classification's
//! computation order and coupled groups solved jointly; it is the production
//! path. [`gark_reference_step`] evaluates the assembled macro-step tableau
//! literally with one global Newton solve; it is slower and exists as an
//! oracle the other path is tested against.

use crate::core::newton::{newton_solve, NewtonConfig};
use crate::core::ode::{stack, PartitionedOde, SplitState};
use crate::error::{Error, Result};
use crate::tableaux::{
    assemble_gark, classify, GarkTableau, MethodClassification, MrGarkMethod, RegistryEntry,
};
use nalgebra::DVector;

/// Outcome of one macro-step: the new state, the tolerance-scaled error
/// estimates (zero when no embedded weights exist), and stage diagnostics.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: SplitState,
    /// Specific relative norm of the full embedded difference.
    pub err: f64,
    /// Estimate isolating the slow partition's truncation error.
    pub err_slow: f64,
    /// Estimate isolating the fast partition's truncation error.
    pub err_fast: f64,
    /// Norm of the coupling-error combination `y_s_hat + y_f_hat - y_hat - y`.
    pub coupling_proxy: f64,
    pub newton_iterations: usize,
    pub coupled_group_sizes: Vec<usize>,
}

/// Weights of the specific relative error norm
/// `sqrt(mean((d_i / (atol + rtol max(|y_n|, |y_n+1|)))^2))`.
#[derive(Debug, Clone, Copy)]
pub struct ErrorWeights {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for ErrorWeights {
    fn default() -> Self {
        ErrorWeights { atol: 1e-6, rtol: 1e-6 }
    }
}

fn specific_norm(diff: &DVector<f64>, y_old: &DVector<f64>, y_new: &DVector<f64>, w: ErrorWeights) -> f64 {
    let n = diff.len();
    let mut acc = 0.0;
    for i in 0..n {
        let scale = w.atol + w.rtol * y_old[i].abs().max(y_new[i].abs());
        acc += (diff[i] / scale).powi(2);
    }
    (acc / n as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Micro-stepped execution
// ---------------------------------------------------------------------------

struct Workspace<'a> {
    sys: &'a PartitionedOde,
    method: &'a MrGarkMethod,
    m: usize,
    h: f64,
    state0: &'a SplitState,
    s_fast: usize,
    s_slow: usize,
    /// H-scaled slow stage derivatives, filled as stages complete.
    k_slow: Vec<Option<DVector<f64>>>,
    /// H-scaled fast stage derivatives per (micro-step, stage).
    k_fast: Vec<Vec<Option<DVector<f64>>>>,
    /// Fast solution value at the start of each micro-step.
    micro_base: Vec<Option<DVector<f64>>>,
    fast_a: nalgebra::DMatrix<f64>,
    fast_b: DVector<f64>,
    fast_c: DVector<f64>,
    slow_a: nalgebra::DMatrix<f64>,
    slow_c: DVector<f64>,
    coupling_fs: Vec<nalgebra::DMatrix<f64>>,
    coupling_sf: Vec<nalgebra::DMatrix<f64>>,
}

impl<'a> Workspace<'a> {
    fn new(
        sys: &'a PartitionedOde,
        method: &'a MrGarkMethod,
        m: usize,
        h: f64,
        state0: &'a SplitState,
    ) -> Self {
        let fast = method.fast(m);
        let slow = method.slow(m);
        let s_fast = fast.stages();
        let s_slow = slow.stages();
        let mut micro_base = vec![None; m + 1];
        micro_base[0] = Some(state0.y_fast.clone());
        Workspace {
            sys,
            method,
            m,
            h,
            state0,
            s_fast,
            s_slow,
            k_slow: vec![None; s_slow],
            k_fast: vec![vec![None; s_fast]; m],
            micro_base,
            fast_a: fast.a.clone(),
            fast_b: fast.b.clone(),
            fast_c: fast.c.clone(),
            slow_a: slow.a.clone(),
            slow_c: slow.c.clone(),
            coupling_fs: (1..=m).map(|ell| method.coupling_fs(ell, m)).collect(),
            coupling_sf: (1..=m).map(|ell| method.coupling_sf(ell, m)).collect(),
        }
    }

    fn ensure_micro_base(&mut self, ell: usize) {
        for step in 1..=ell {
            if self.micro_base[step].is_some() {
                continue;
            }
            let mut y = self.micro_base[step - 1].clone().expect("micro bases fill in order");
            for i in 0..self.s_fast {
                if self.fast_b[i] == 0.0 {
                    continue;
                }
                let k = self.k_fast[step - 1][i]
                    .as_ref()
                    .expect("dependency order provides completed micro-steps");
                y += k * (self.fast_b[i] / self.m as f64);
            }
            self.micro_base[step] = Some(y);
        }
    }

    /// Fast-stage arguments `(slow, fast, t)` given a possible override for
    /// in-flight unknowns of a joint solve.
    fn fast_stage_args(
        &self,
        ell: usize,
        i: usize,
        overrides: &dyn Fn(usize) -> Option<DVector<f64>>,
    ) -> (DVector<f64>, DVector<f64>, f64) {
        let mut y_slow = self.state0.y_slow.clone();
        for j in 0..self.s_slow {
            let w = self.coupling_fs[ell][(i, j)];
            if w == 0.0 {
                continue;
            }
            let k = overrides(self.slow_index(j))
                .or_else(|| self.k_slow[j].clone())
                .expect("slow stage value required before use");
            y_slow += k * w;
        }
        let mut y_fast = self.micro_base[ell].clone().expect("micro base available");
        for j in 0..self.s_fast {
            let w = self.fast_a[(i, j)];
            if w == 0.0 {
                continue;
            }
            let k = overrides(self.fast_index(ell, j))
                .or_else(|| self.k_fast[ell][j].clone())
                .expect("fast stage value required before use");
            y_fast += k * (w / self.m as f64);
        }
        let t = self.state0.t + (ell as f64 + self.fast_c[i]) / self.m as f64 * self.h;
        (y_slow, y_fast, t)
    }

    fn slow_stage_args(
        &self,
        i: usize,
        overrides: &dyn Fn(usize) -> Option<DVector<f64>>,
    ) -> (DVector<f64>, DVector<f64>, f64) {
        let mut y_slow = self.state0.y_slow.clone();
        for j in 0..self.s_slow {
            let w = self.slow_a[(i, j)];
            if w == 0.0 {
                continue;
            }
            let k = overrides(self.slow_index(j))
                .or_else(|| self.k_slow[j].clone())
                .expect("slow stage value required before use");
            y_slow += k * w;
        }
        let mut y_fast = self.state0.y_fast.clone();
        for ell in 0..self.m {
            for j in 0..self.s_fast {
                let w = self.coupling_sf[ell][(i, j)];
                if w == 0.0 {
                    continue;
                }
                let k = overrides(self.fast_index(ell, j))
                    .or_else(|| self.k_fast[ell][j].clone())
                    .expect("fast stage value required before use");
                y_fast += k * (w / self.m as f64);
            }
        }
        let t = self.state0.t + self.slow_c[i] * self.h;
        (y_slow, y_fast, t)
    }

    fn fast_index(&self, ell: usize, i: usize) -> usize {
        ell * self.s_fast + i
    }

    fn slow_index(&self, i: usize) -> usize {
        self.m * self.s_fast + i
    }

    fn is_fast(&self, stage: usize) -> bool {
        stage < self.m * self.s_fast
    }

    fn fast_pos(&self, stage: usize) -> (usize, usize) {
        (stage / self.s_fast, stage % self.s_fast)
    }

    /// Evaluate the H-scaled derivative of one stage given resolved arguments.
    fn eval_stage(&self, stage: usize, overrides: &dyn Fn(usize) -> Option<DVector<f64>>) -> DVector<f64> {
        if self.is_fast(stage) {
            let (ell, i) = self.fast_pos(stage);
            let (ys, yf, t) = self.fast_stage_args(ell, i, overrides);
            self.sys.f_fast(&ys, &yf, t) * self.h
        } else {
            let i = stage - self.m * self.s_fast;
            let (ys, yf, t) = self.slow_stage_args(i, overrides);
            self.sys.f_slow(&ys, &yf, t) * self.h
        }
    }

    fn store(&mut self, stage: usize, k: DVector<f64>) {
        if self.is_fast(stage) {
            let (ell, i) = self.fast_pos(stage);
            self.k_fast[ell][i] = Some(k);
        } else {
            let i = stage - self.m * self.s_fast;
            self.k_slow[i] = Some(k);
        }
    }

    fn stage_dim(&self, stage: usize) -> usize {
        if self.is_fast(stage) {
            self.sys.dim_fast
        } else {
            self.sys.dim_slow
        }
    }
}

/// One multirate GARK macro-step following the computation order of the
/// method classification. Coupled groups are solved jointly by Newton on the
/// stacked stage derivatives; slow function values are computed once and
/// reused by every coupling stage.
pub fn mrgark_step(
    method: &MrGarkMethod,
    m: usize,
    sys: &PartitionedOde,
    state: &SplitState,
    h: f64,
    cfg: NewtonConfig,
) -> Result<StepResult> {
    let cls = classify(method, m);
    mrgark_step_with_classification(method, m, sys, state, h, cfg, &cls, ErrorWeights::default())
}

#[allow(clippy::too_many_arguments)]
pub fn mrgark_step_with_classification(
    method: &MrGarkMethod,
    m: usize,
    sys: &PartitionedOde,
    state: &SplitState,
    h: f64,
    cfg: NewtonConfig,
    cls: &MethodClassification,
    weights: ErrorWeights,
) -> Result<StepResult> {
    assert!(m >= method.min_ratio, "ratio below the method's minimum");
    let mut ws = Workspace::new(sys, method, m, h, state);
    let mut newton_iterations = 0usize;
    let mut coupled_group_sizes = Vec::new();
    let no_override = |_: usize| -> Option<DVector<f64>> { None };

    for group in &cls.groups {
        // make every needed micro base available before touching the group
        let max_micro = group
            .stages
            .iter()
            .filter(|&&v| ws.is_fast(v))
            .map(|&v| ws.fast_pos(v).0)
            .max();
        if let Some(ell) = max_micro {
            ws.ensure_micro_base(ell);
        }

        if group.stages.len() == 1 && !group.implicit {
            let stage = group.stages[0];
            let k = ws.eval_stage(stage, &no_override);
            ws.store(stage, k);
            continue;
        }

        if group.stages.len() > 1 {
            coupled_group_sizes.push(group.stages.len());
        }

        // joint Newton on the stacked stage derivatives of this group
        let layout: Vec<(usize, usize, usize)> = {
            let mut offset = 0;
            group
                .stages
                .iter()
                .map(|&s| {
                    let d = ws.stage_dim(s);
                    let item = (s, offset, d);
                    offset += d;
                    item
                })
                .collect()
        };
        let total: usize = layout.iter().map(|&(_, _, d)| d).sum();
        let residual = |x: &DVector<f64>| -> DVector<f64> {
            let overrides = |stage: usize| -> Option<DVector<f64>> {
                layout
                    .iter()
                    .find(|&&(s, _, _)| s == stage)
                    .map(|&(_, off, d)| x.rows(off, d).into_owned())
            };
            let mut r = DVector::zeros(total);
            for &(stage, off, d) in &layout {
                let k_eval = ws.eval_stage(stage, &overrides);
                let k_guess = x.rows(off, d).into_owned();
                r.rows_mut(off, d).copy_from(&(k_guess - k_eval));
            }
            r
        };
        let guess = DVector::zeros(total);
        let stage_names: Vec<String> = group
            .stages
            .iter()
            .map(|&s| {
                if ws.is_fast(s) {
                    let (ell, i) = ws.fast_pos(s);
                    format!("fast({},{})", ell + 1, i + 1)
                } else {
                    format!("slow({})", s - ws.m * ws.s_fast + 1)
                }
            })
            .collect();
        let out = newton_solve(&residual, &guess, None, cfg, &format!("stages [{}]", stage_names.join(", ")))?;
        newton_iterations += out.iterations;
        for &(stage, off, d) in &layout {
            ws.store(stage, out.solution.rows(off, d).into_owned());
        }
    }

    // final combinations
    ws.ensure_micro_base(m);
    let y_fast_main = ws.micro_base[m].clone().unwrap();
    let mut y_slow_main = state.y_slow.clone();
    let slow_tab = method.slow(m);
    let fast_tab = method.fast(m);
    for i in 0..ws.s_slow {
        if slow_tab.b[i] != 0.0 {
            y_slow_main += ws.k_slow[i].as_ref().unwrap() * slow_tab.b[i];
        }
    }

    // embedded combinations when both partitions carry them
    let (err, err_slow, err_fast, coupling_proxy) = if let (Some(bh_f), Some(bh_s)) =
        (fast_tab.b_hat.as_ref(), slow_tab.b_hat.as_ref())
    {
        let combine = |bf: &DVector<f64>, bs: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let mut ys = state.y_slow.clone();
            for i in 0..ws.s_slow {
                if bs[i] != 0.0 {
                    ys += ws.k_slow[i].as_ref().unwrap() * bs[i];
                }
            }
            let mut yf = state.y_fast.clone();
            for ell in 0..m {
                for i in 0..ws.s_fast {
                    if bf[i] != 0.0 {
                        yf += ws.k_fast[ell][i].as_ref().unwrap() * (bf[i] / m as f64);
                    }
                }
            }
            (ys, yf)
        };
        let (hat_s, hat_f) = combine(bh_f, bh_s);
        let (semb_s, semb_f) = combine(&fast_tab.b, bh_s);
        let (femb_s, femb_f) = combine(bh_f, &slow_tab.b);
        let main = stack(&y_slow_main, &y_fast_main);
        let old = stack(&state.y_slow, &state.y_fast);
        let err = specific_norm(&(stack(&hat_s, &hat_f) - &main), &old, &main, weights);
        let err_slow = specific_norm(&(stack(&semb_s, &semb_f) - &main), &old, &main, weights);
        let err_fast = specific_norm(&(stack(&femb_s, &femb_f) - &main), &old, &main, weights);
        let proxy = stack(&(&semb_s + &femb_s - &hat_s - &y_slow_main), &(&semb_f + &femb_f - &hat_f - &y_fast_main));
        (err, err_slow, err_fast, proxy.amax())
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };

    Ok(StepResult {
        state: SplitState::new(y_slow_main, y_fast_main, state.t + h),
        err,
        err_slow,
        err_fast,
        coupling_proxy,
        newton_iterations,
        coupled_group_sizes,
    })
}

/// Guarded entry point: refuses quarantined registry entries.
pub fn mrgark_step_entry(
    entry: &RegistryEntry,
    m: usize,
    sys: &PartitionedOde,
    state: &SplitState,
    h: f64,
    cfg: NewtonConfig,
) -> Result<StepResult> {
    if entry.is_quarantined() {
        return Err(Error::Quarantined(entry.method.name.clone()));
    }
    mrgark_step(&entry.method, m, sys, state, h, cfg)
}

// ---------------------------------------------------------------------------
// Reference path: literal evaluation of the assembled tableau
// ---------------------------------------------------------------------------

/// Literal macro-step of an assembled GARK tableau: one global Newton solve
/// over every stage derivative. Intended as an oracle, not a production path.
pub fn gark_reference_step(
    tab: &GarkTableau,
    sys: &PartitionedOde,
    state: &SplitState,
    h: f64,
    cfg: NewtonConfig,
) -> Result<SplitState> {
    let nf = tab.stages_fast;
    let ns = tab.stages_slow;
    let (df, ds) = (sys.dim_fast, sys.dim_slow);
    let total = nf * df + ns * ds;

    // abscissae from row sums for the time arguments
    let c_f: Vec<f64> = (0..nf).map(|i| tab.a_ff.row(i).sum() + tab.a_fs.row(i).sum()).collect();
    let c_s: Vec<f64> = (0..ns).map(|i| tab.a_ss.row(i).sum() + tab.a_sf.row(i).sum()).collect();

    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let k_f = |j: usize| x.rows(j * df, df).into_owned();
        let k_s = |j: usize| x.rows(nf * df + j * ds, ds).into_owned();
        let mut r = DVector::zeros(total);
        for i in 0..nf {
            let mut ys = state.y_slow.clone();
            for j in 0..ns {
                if tab.a_fs[(i, j)] != 0.0 {
                    ys += k_s(j) * tab.a_fs[(i, j)];
                }
            }
            let mut yf = state.y_fast.clone();
            for j in 0..nf {
                if tab.a_ff[(i, j)] != 0.0 {
                    yf += k_f(j) * tab.a_ff[(i, j)];
                }
            }
            let t = state.t + c_f[i] * h;
            let val = k_f(i) - sys.f_fast(&ys, &yf, t) * h;
            r.rows_mut(i * df, df).copy_from(&val);
        }
        for i in 0..ns {
            let mut ys = state.y_slow.clone();
            for j in 0..ns {
                if tab.a_ss[(i, j)] != 0.0 {
                    ys += k_s(j) * tab.a_ss[(i, j)];
                }
            }
            let mut yf = state.y_fast.clone();
            for j in 0..nf {
                if tab.a_sf[(i, j)] != 0.0 {
                    yf += k_f(j) * tab.a_sf[(i, j)];
                }
            }
            let t = state.t + c_s[i] * h;
            let val = k_s(i) - sys.f_slow(&ys, &yf, t) * h;
            r.rows_mut(nf * df + i * ds, ds).copy_from(&val);
        }
        r
    };
    let out = newton_solve(&residual, &DVector::zeros(total), None, cfg, "assembled stage system")?;
    let mut y_fast = state.y_fast.clone();
    for i in 0..nf {
        if tab.b_f[i] != 0.0 {
            y_fast += out.solution.rows(i * df, df).into_owned() * tab.b_f[i];
        }
    }
    let mut y_slow = state.y_slow.clone();
    for i in 0..ns {
        if tab.b_s[i] != 0.0 {
            y_slow += out.solution.rows(nf * df + i * ds, ds).into_owned() * tab.b_s[i];
        }
    }
    Ok(SplitState::new(y_slow, y_fast, state.t + h))
}

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    /// Equalize the estimated slow and fast error shares.
    Balance,
    /// Pick the ratio minimizing work per accuracy, then the step size.
    Efficiency,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub h: f64,
    pub m: usize,
    pub fac: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub m_min: usize,
    pub m_max: usize,
    /// Measured (or assumed) cost of one slow macro-stage evaluation.
    pub t_slow: f64,
    /// Cost of one fast micro-step.
    pub t_fast: f64,
    pub mode: ControllerMode,
    pub max_growth: f64,
}

impl ControllerState {
    pub fn new(h: f64, m: usize) -> Self {
        ControllerState {
            h,
            m,
            fac: 0.9,
            h_min: 1e-12,
            h_max: 1.0,
            m_min: 1,
            m_max: 64,
            t_slow: 1.0,
            t_fast: 1.0,
            mode: ControllerMode::Balance,
            max_growth: 5.0,
        }
    }
}

/// Work/accuracy objective of the efficiency controller.
pub fn efficiency_objective(ctrl: &ControllerState, err_slow: f64, err_fast: f64, q: f64, m_star: usize) -> f64 {
    let cost = (ctrl.t_slow + m_star as f64 * ctrl.t_fast) / ctrl.h;
    let err = err_slow + err_fast * (ctrl.m as f64 / m_star as f64).powf(q);
    cost * err.powf(1.0 / (q + 1.0))
}

/// Step acceptance and the next `(H, m)` from the error estimates.
///
/// Accept iff the combined estimate is at most one in the specific relative
/// norm. The ratio update rounds half-up and clamps to the controller
/// bounds; the exponent `q` of the efficiency objective is the declared
/// method order.
pub fn adapt(ctrl: &ControllerState, result: &StepResult, order: usize) -> (bool, f64, usize) {
    let p = order as f64;
    let accept = result.err <= 1.0;
    let grow = if result.err > 0.0 {
        ctrl.fac * result.err.powf(-1.0 / p)
    } else {
        ctrl.max_growth
    };
    let mut h_new = ctrl.h * grow.min(ctrl.max_growth);
    let m_new;
    match ctrl.mode {
        ControllerMode::Balance => {
            let ratio = if result.err_slow > 0.0 {
                result.err_fast / result.err_slow
            } else if result.err_fast > 0.0 {
                ctrl.m_max as f64
            } else {
                1.0
            };
            let target = ctrl.m as f64 * ratio.powf(1.0 / p);
            m_new = (target + 0.5).floor().max(ctrl.m_min as f64).min(ctrl.m_max as f64) as usize;
        }
        ControllerMode::Efficiency => {
            let q = p;
            let best = (ctrl.m_min.max(1)..=ctrl.m_max)
                .min_by(|&a, &b| {
                    efficiency_objective(ctrl, result.err_slow, result.err_fast, q, a)
                        .partial_cmp(&efficiency_objective(ctrl, result.err_slow, result.err_fast, q, b))
                        .unwrap()
                })
                .unwrap_or(ctrl.m);
            m_new = best;
            let err = result.err_slow + result.err_fast * (ctrl.m as f64 / m_new as f64).powf(q);
            if err > 0.0 {
                h_new = ctrl.h * ctrl.fac * err.powf(-1.0 / (q + 1.0));
                h_new = h_new.min(ctrl.h * ctrl.max_growth);
            }
        }
    }
    h_new = h_new.clamp(ctrl.h_min, ctrl.h_max);
    (accept, h_new, m_new)
}

// ---------------------------------------------------------------------------
// Trajectory driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum StepControl {
    Fixed { h: f64, m: usize },
    Adaptive { ctrl: ControllerState, weights: ErrorWeights },
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub steps: usize,
    pub rejections: usize,
    pub slow_evals: u64,
    pub fast_evals: u64,
}

/// Integrate over `[state0.t, t_end]`, fixed-grid or adaptive.
///
/// Returns the accepted states (including the initial one) and run
/// statistics; evaluation counts are read from the system's counters.
pub fn integrate(
    method: &MrGarkMethod,
    sys: &PartitionedOde,
    state0: &SplitState,
    t_end: f64,
    control: &StepControl,
    cfg: NewtonConfig,
) -> Result<(Vec<SplitState>, RunStats)> {
    sys.counters.reset();
    let mut stats = RunStats::default();
    let mut states = vec![state0.clone()];
    match control {
        StepControl::Fixed { h, m } => {
            let cls = classify(method, *m);
            let n = ((t_end - state0.t) / h).round() as usize;
            let mut state = state0.clone();
            for _ in 0..n {
                let res = mrgark_step_with_classification(
                    method,
                    *m,
                    sys,
                    &state,
                    *h,
                    cfg,
                    &cls,
                    ErrorWeights::default(),
                )?;
                state = res.state;
                stats.steps += 1;
                states.push(state.clone());
            }
        }
        StepControl::Adaptive { ctrl, weights } => {
            let mut ctrl = ctrl.clone();
            let mut state = state0.clone();
            while state.t < t_end - 1e-14 * t_end.abs().max(1.0) {
                let h = ctrl.h.min(t_end - state.t);
                let cls = classify(method, ctrl.m);
                let trial = ctrl.clone();
                let res = mrgark_step_with_classification(
                    method, ctrl.m, sys, &state, h, cfg, &cls, *weights,
                )?;
                let (accept, h_new, m_new) = adapt(&ControllerState { h, ..trial }, &res, method.order);
                if accept {
                    state = res.state;
                    stats.steps += 1;
                    states.push(state.clone());
                } else {
                    stats.rejections += 1;
                }
                if h_new < ctrl.h_min * (1.0 + 1e-12) && !accept {
                    return Err(Error::StepSizeUnderflow { t: state.t, h: h_new, h_min: ctrl.h_min });
                }
                ctrl.h = h_new;
                ctrl.m = m_new;
            }
        }
    }
    stats.slow_evals = sys.counters.slow();
    stats.fast_evals = sys.counters.fast();
    Ok((states, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{linear_partitioned, TestProblem2x2};
    use crate::stability::transfer::{gark_transfer, ZQuad};
    use crate::tableaux::registry_get;
    use nalgebra::DMatrix;

    fn tight() -> NewtonConfig {
        NewtonConfig { tol: 1e-14, max_iters: 100, mode: crate::core::newton::NewtonMode::Full }
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let sys = PartitionedOde::new(
            1,
            1,
            Box::new(|_, _, _| DVector::zeros(1)),
            Box::new(|_, _, _| DVector::zeros(1)),
        );
        let state = SplitState::new(DVector::from_element(1, 2.0), DVector::from_element(1, -1.0), 0.0);
        let e = registry_get("ex2-ex2").unwrap();
        let res = mrgark_step(&e.method, 3, &sys, &state, 0.1, tight()).unwrap();
        assert_eq!(res.state.y_slow, state.y_slow);
        assert_eq!(res.state.y_fast, state.y_fast);
    }

    #[test]
    fn linear_step_matches_stability_matrix() {
        // one step on the linear problem equals M [y_s; y_f]
        let p = TestProblem2x2::new(-1.0, -9.0, 0.4, -0.7).unwrap();
        let sys = p.build();
        let h = 0.07;
        for name in ["ex2-ex2", "sdirk2-coupled", "im2-ex2", "sdirk3-pc"] {
            let e = registry_get(name).unwrap();
            for m in [1usize, 2, 3] {
                if m < e.method.min_ratio {
                    continue;
                }
                let state = SplitState::new(DVector::from_element(1, 0.8), DVector::from_element(1, -0.3), 0.0);
                let res = mrgark_step(&e.method, m, &sys, &state, h, tight()).unwrap();
                let tab = assemble_gark(&e.method, m);
                let z = ZQuad::from_test_problem(&p, h);
                let tm = gark_transfer(&tab, &z).unwrap();
                let expect_s = tm[(0, 0)].re * 0.8 + tm[(0, 1)].re * -0.3;
                let expect_f = tm[(1, 0)].re * 0.8 + tm[(1, 1)].re * -0.3;
                assert!(
                    (res.state.y_slow[0] - expect_s).abs() < 1e-11,
                    "{name} m={m}: slow {} vs {expect_s}",
                    res.state.y_slow[0]
                );
                assert!((res.state.y_fast[0] - expect_f).abs() < 1e-11, "{name} m={m}");
            }
        }
    }

    #[test]
    fn micro_path_matches_reference_path() {
        let a = DMatrix::from_row_slice(4, 4, &[
            -1.0, 0.3, 0.1, -0.2, //
            0.2, -2.0, 0.0, 0.4, //
            0.1, -0.3, -7.0, 1.0, //
            0.0, 0.5, -0.8, -11.0,
        ]);
        let sys = linear_partitioned(&a, 2);
        let state = SplitState::new(DVector::from_vec(vec![1.0, -0.5]), DVector::from_vec(vec![0.2, 0.9]), 0.0);
        for name in ["ex2-ex2", "ex2-im2", "im2-ex2", "sdirk2-coupled", "sdirk3-pc"] {
            let e = registry_get(name).unwrap();
            for m in [1usize, 2, 3] {
                if m < e.method.min_ratio {
                    continue;
                }
                let res = mrgark_step(&e.method, m, &sys, &state, 0.05, tight()).unwrap();
                let tab = assemble_gark(&e.method, m);
                let reference = gark_reference_step(&tab, &sys, &state, 0.05, tight()).unwrap();
                let denom = reference.stacked().amax().max(1.0);
                let diff = (res.state.stacked() - reference.stacked()).amax() / denom;
                assert!(diff < 1e-12, "{name} m={m}: relative diff {diff:.3e}");
            }
        }
    }

    #[test]
    fn embedded_identical_weights_give_zero_estimates() {
        // b_hat = b on both partitions -> all estimates vanish
        let base = crate::tableaux::RkTableau::ralston2();
        let bb = base.b.clone();
        let with_same = base.clone().with_embedded(bb, 2);
        let t1 = with_same.clone();
        let t2 = with_same.clone();
        let method = MrGarkMethod::new(
            "same-embedded",
            2,
            true,
            std::sync::Arc::new(move |_| t1.clone()),
            std::sync::Arc::new(move |_| t2.clone()),
            std::sync::Arc::new(|_, _| DMatrix::zeros(2, 2)),
            std::sync::Arc::new(|_, _| DMatrix::zeros(2, 2)),
        );
        let p = TestProblem2x2::new(-1.0, -5.0, 0.3, 0.3).unwrap();
        let sys = p.build();
        let state = SplitState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0), 0.0);
        let res = mrgark_step(&method, 2, &sys, &state, 0.1, tight()).unwrap();
        assert_eq!(res.err, 0.0);
        assert_eq!(res.err_slow, 0.0);
        assert_eq!(res.err_fast, 0.0);
        assert_eq!(res.coupling_proxy, 0.0);
    }

    #[test]
    fn coupling_proxy_identity_holds() {
        let e = registry_get("ex2-ex2").unwrap();
        let p = TestProblem2x2::new(-1.0, -12.0, 0.4, 0.2).unwrap();
        let sys = p.build();
        let state = SplitState::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.5), 0.0);
        let res = mrgark_step(&e.method, 2, &sys, &state, 0.05, tight()).unwrap();
        // with two embedded weight vectors the combination telescopes exactly
        assert!(res.coupling_proxy < 1e-15);
        assert!(res.err > 0.0);
    }

    #[test]
    fn adapt_trivial_cases() {
        let ctrl = ControllerState::new(0.1, 4);
        let mk = |err: f64, es: f64, ef: f64| StepResult {
            state: SplitState::new(DVector::zeros(1), DVector::zeros(1), 0.0),
            err,
            err_slow: es,
            err_fast: ef,
            coupling_proxy: 0.0,
            newton_iterations: 0,
            coupled_group_sizes: vec![],
        };
        // equal component errors keep the ratio
        let (_, _, m_new) = adapt(&ctrl, &mk(0.5, 0.3, 0.3), 2);
        assert_eq!(m_new, 4);
        // unit error shrinks H by exactly fac
        let (accept, h_new, _) = adapt(&ctrl, &mk(1.0, 0.5, 0.5), 2);
        assert!(accept);
        assert!((h_new - 0.9 * 0.1).abs() < 1e-15);
        // larger error never yields larger H
        let (_, h1, _) = adapt(&ctrl, &mk(0.5, 0.2, 0.2), 2);
        let (_, h2, _) = adapt(&ctrl, &mk(2.0, 0.8, 0.8), 2);
        assert!(h2 <= h1);
    }

    #[test]
    fn efficiency_scan_matches_brute_force() {
        let mut ctrl = ControllerState::new(0.1, 8);
        ctrl.mode = ControllerMode::Efficiency;
        ctrl.t_slow = 100.0;
        ctrl.t_fast = 1.0;
        let result = StepResult {
            state: SplitState::new(DVector::zeros(1), DVector::zeros(1), 0.0),
            err: 0.7,
            err_slow: 0.1,
            err_fast: 0.6,
            coupling_proxy: 0.0,
            newton_iterations: 0,
            coupled_group_sizes: vec![],
        };
        let order = 2;
        let (_, _, m_new) = adapt(&ctrl, &result, order);
        let q = order as f64;
        let brute = (1..=64usize)
            .min_by(|&a, &b| {
                efficiency_objective(&ctrl, 0.1, 0.6, q, a)
                    .partial_cmp(&efficiency_objective(&ctrl, 0.1, 0.6, q, b))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(m_new, brute);
    }

    #[test]
    fn fixed_grid_matches_matrix_power() {
        let p = TestProblem2x2::new(-0.8, -6.0, 0.3, -0.4).unwrap();
        let sys = p.build();
        let e = registry_get("ex2-ex2").unwrap();
        let (h, m, n) = (0.02, 2usize, 50usize);
        let state0 = SplitState::new(DVector::from_element(1, 1.0), DVector::from_element(1, -1.0), 0.0);
        let (states, stats) = integrate(
            &e.method,
            &sys,
            &state0,
            h * n as f64,
            &StepControl::Fixed { h, m },
            tight(),
        )
        .unwrap();
        assert_eq!(stats.steps, n);
        let z = ZQuad::from_test_problem(&p, h);
        let tm = gark_transfer(&assemble_gark(&e.method, m), &z).unwrap();
        let tm_real = DMatrix::from_fn(2, 2, |i, j| tm[(i, j)].re);
        let mut v = DVector::from_vec(vec![1.0, -1.0]);
        for _ in 0..n {
            v = &tm_real * v;
        }
        let last = states.last().unwrap();
        assert!((last.y_slow[0] - v[0]).abs() < 1e-10);
        assert!((last.y_fast[0] - v[1]).abs() < 1e-10);
    }
}
