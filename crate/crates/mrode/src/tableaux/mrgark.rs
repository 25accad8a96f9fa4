//! Multirate GARK coefficient model: coupling blocks as functions of the
//! micro-step index and the multirate ratio, tableau assembly, internal
//! consistency, coupled/decoupled classification, and coupling order
//! conditions.

use crate::core::poly::Polynomial;
use crate::tableaux::rk::RkTableau;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

type TableauFn = Arc<dyn Fn(usize) -> RkTableau + Send + Sync>;
type CouplingFn = Arc<dyn Fn(usize, usize) -> DMatrix<f64> + Send + Sync>;

/// A multirate GARK method: base slow/fast Runge-Kutta pairs plus coupling
/// blocks indexed by `(ell, m)` with `ell` in `1..=m`.
///
/// Coupling blocks are closures rather than stored matrices because the
/// published coefficients are closed forms in `ell` and `m`; this also makes
/// telescopic reuse trivial. Base tableaux receive `m` as well: a few
/// methods (notably the conservative additive scheme) expand their slow
/// tableau with the ratio.
#[derive(Clone)]
pub struct MrGarkMethod {
    pub name: String,
    pub order: usize,
    pub telescopic: bool,
    /// Smallest multirate ratio the coupling formulas are defined for.
    pub min_ratio: usize,
    slow: TableauFn,
    fast: TableauFn,
    coupling_fs: CouplingFn,
    coupling_sf: CouplingFn,
}

impl MrGarkMethod {
    pub fn new(
        name: &str,
        order: usize,
        telescopic: bool,
        slow: TableauFn,
        fast: TableauFn,
        coupling_fs: CouplingFn,
        coupling_sf: CouplingFn,
    ) -> Self {
        MrGarkMethod {
            name: name.to_string(),
            order,
            telescopic,
            min_ratio: 1,
            slow,
            fast,
            coupling_fs,
            coupling_sf,
        }
    }

    pub fn with_min_ratio(mut self, min_ratio: usize) -> Self {
        self.min_ratio = min_ratio;
        self
    }

    pub fn slow(&self, m: usize) -> RkTableau {
        (self.slow)(m)
    }

    pub fn fast(&self, m: usize) -> RkTableau {
        (self.fast)(m)
    }

    /// Fast-stage coupling block `A^{F,S,ell}` of shape `s_fast x s_slow`.
    pub fn coupling_fs(&self, ell: usize, m: usize) -> DMatrix<f64> {
        (self.coupling_fs)(ell, m)
    }

    /// Slow-stage coupling block `A^{S,F,ell}` of shape `s_slow x s_fast`.
    pub fn coupling_sf(&self, ell: usize, m: usize) -> DMatrix<f64> {
        (self.coupling_sf)(ell, m)
    }

    pub fn has_embedded(&self, m: usize) -> bool {
        self.slow(m).b_hat.is_some() && self.fast(m).b_hat.is_some()
    }
}

/// Assembled two-partition Butcher tableau over one macro-step.
#[derive(Debug, Clone)]
pub struct GarkTableau {
    pub a_ff: DMatrix<f64>,
    pub a_fs: DMatrix<f64>,
    pub a_sf: DMatrix<f64>,
    pub a_ss: DMatrix<f64>,
    pub b_f: DVector<f64>,
    pub b_s: DVector<f64>,
    pub b_hat_f: Option<DVector<f64>>,
    pub b_hat_s: Option<DVector<f64>>,
    pub stages_fast: usize,
    pub stages_slow: usize,
}

impl GarkTableau {
    /// Plain two-block GARK tableau (no micro-step structure).
    pub fn plain(fast: &RkTableau, slow: &RkTableau, a_fs: DMatrix<f64>, a_sf: DMatrix<f64>) -> Self {
        assert_eq!(a_fs.nrows(), fast.stages());
        assert_eq!(a_fs.ncols(), slow.stages());
        assert_eq!(a_sf.nrows(), slow.stages());
        assert_eq!(a_sf.ncols(), fast.stages());
        GarkTableau {
            a_ff: fast.a.clone(),
            a_fs,
            a_sf,
            a_ss: slow.a.clone(),
            b_f: fast.b.clone(),
            b_s: slow.b.clone(),
            b_hat_f: fast.b_hat.clone(),
            b_hat_s: slow.b_hat.clone(),
            stages_fast: fast.stages(),
            stages_slow: slow.stages(),
        }
    }

    /// The full `(stages_fast + stages_slow)` square coefficient matrix with
    /// fast stages first.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let nf = self.stages_fast;
        let ns = self.stages_slow;
        let mut a = DMatrix::zeros(nf + ns, nf + ns);
        a.view_mut((0, 0), (nf, nf)).copy_from(&self.a_ff);
        a.view_mut((0, nf), (nf, ns)).copy_from(&self.a_fs);
        a.view_mut((nf, 0), (ns, nf)).copy_from(&self.a_sf);
        a.view_mut((nf, nf), (ns, ns)).copy_from(&self.a_ss);
        a
    }
}

/// Build the macro-step tableau of a multirate GARK method: micro-stepped
/// fast blocks `A_ff/m` chained through `1 b_f^T / m`, coupling columns
/// `A^{F,S,ell}`, coupling rows `A^{S,F,ell}/m`, and weights
/// `(b_f/m repeated, b_s)`.
pub fn assemble_gark(method: &MrGarkMethod, m: usize) -> GarkTableau {
    assert!(m >= 1);
    let slow = method.slow(m);
    let fast = method.fast(m);
    let sf = fast.stages();
    let ss = slow.stages();
    let nf = m * sf;
    let minv = 1.0 / m as f64;

    let mut a_ff = DMatrix::zeros(nf, nf);
    let mut a_fs = DMatrix::zeros(nf, ss);
    let mut a_sf = DMatrix::zeros(ss, nf);
    let mut b_f = DVector::zeros(nf);
    let mut b_hat_f = fast.b_hat.as_ref().map(|_| DVector::zeros(nf));

    for ell in 0..m {
        // diagonal fast block and the chaining of earlier micro-steps
        a_ff.view_mut((ell * sf, ell * sf), (sf, sf)).copy_from(&(&fast.a * minv));
        for prev in 0..ell {
            for i in 0..sf {
                for j in 0..sf {
                    a_ff[(ell * sf + i, prev * sf + j)] = minv * fast.b[j];
                }
            }
        }
        let block_fs = method.coupling_fs(ell + 1, m);
        assert_eq!(block_fs.nrows(), sf, "coupling_fs row count, method {}", method.name);
        assert_eq!(block_fs.ncols(), ss, "coupling_fs col count, method {}", method.name);
        a_fs.view_mut((ell * sf, 0), (sf, ss)).copy_from(&block_fs);

        let block_sf = method.coupling_sf(ell + 1, m);
        assert_eq!(block_sf.nrows(), ss, "coupling_sf row count, method {}", method.name);
        assert_eq!(block_sf.ncols(), sf, "coupling_sf col count, method {}", method.name);
        a_sf.view_mut((0, ell * sf), (ss, sf)).copy_from(&(block_sf * minv));

        for i in 0..sf {
            b_f[ell * sf + i] = minv * fast.b[i];
            if let (Some(bh), Some(src)) = (b_hat_f.as_mut(), fast.b_hat.as_ref()) {
                bh[ell * sf + i] = minv * src[i];
            }
        }
    }

    GarkTableau {
        a_ff,
        a_fs,
        a_sf,
        a_ss: slow.a.clone(),
        b_f,
        b_s: slow.b.clone(),
        b_hat_f,
        b_hat_s: slow.b_hat.clone(),
        stages_fast: nf,
        stages_slow: ss,
    }
}

/// Internal-consistency residuals: per micro-step,
/// `|| m c^{F,S,ell} - c^{F,F} - (ell-1) 1 ||_inf`, and the slow-side
/// residual `|| sum_ell c^{S,F,ell} - m c^{S,S} ||_inf`.
pub fn internal_consistency_residual(method: &MrGarkMethod, m: usize) -> (Vec<f64>, f64) {
    let slow = method.slow(m);
    let fast = method.fast(m);
    let ones_s = DVector::from_element(slow.stages(), 1.0);
    let ones_f = DVector::from_element(fast.stages(), 1.0);
    let mut per_ell = Vec::with_capacity(m);
    let mut sum_sf = DVector::zeros(slow.stages());
    for ell in 1..=m {
        let c_fs = method.coupling_fs(ell, m) * &ones_s;
        let res = (&c_fs * m as f64 - &fast.c).add_scalar(-((ell - 1) as f64));
        per_ell.push(res.amax());
        sum_sf += method.coupling_sf(ell, m) * &ones_f;
    }
    let slow_res = (sum_sf - &slow.c * m as f64).amax();
    (per_ell, slow_res)
}

/// How the stages of a multirate method can be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Explicit,
    DecoupledDiagonallyImplicit,
    Coupled,
}

/// One unit of stage computation: a single stage or a strongly connected
/// group that must be solved jointly.
#[derive(Debug, Clone)]
pub struct StageGroup {
    /// Indices into the assembled tableau (fast stages first).
    pub stages: Vec<usize>,
    pub implicit: bool,
    /// True when the group mixes fast and slow stages.
    pub mixed: bool,
}

#[derive(Debug, Clone)]
pub struct MethodClassification {
    pub kind: MethodKind,
    /// Topological order of all assembled stage indices.
    pub computation_order: Vec<usize>,
    pub groups: Vec<StageGroup>,
    pub stages_fast: usize,
    pub stages_slow: usize,
}

impl MethodClassification {
    /// Micro-step and within-step index of an assembled fast stage.
    pub fn fast_position(&self, stage: usize, s_fast: usize) -> Option<(usize, usize)> {
        if stage < self.stages_fast {
            Some((stage / s_fast, stage % s_fast))
        } else {
            None
        }
    }
}

/// Tarjan strongly connected components of the stage dependency graph.
fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut counter = 0usize;
    let mut sccs: Vec<Vec<usize>> = Vec::new();

    // iterative Tarjan to avoid recursion limits on large assemblies
    enum Frame {
        Visit(usize),
        PostChild(usize, usize),
    }
    for start in 0..n {
        if index[start] != usize::MAX {
            continue;
        }
        let mut work = vec![Frame::Visit(start)];
        let mut iter_pos = vec![0usize; n];
        while let Some(frame) = work.pop() {
            match frame {
                Frame::Visit(v) => {
                    if index[v] != usize::MAX {
                        continue;
                    }
                    index[v] = counter;
                    low[v] = counter;
                    counter += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    work.push(Frame::PostChild(v, usize::MAX));
                }
                Frame::PostChild(v, child) => {
                    if child != usize::MAX {
                        low[v] = low[v].min(low[child]);
                    }
                    let mut advanced = false;
                    while iter_pos[v] < adj[v].len() {
                        let w = adj[v][iter_pos[v]];
                        iter_pos[v] += 1;
                        if index[w] == usize::MAX {
                            work.push(Frame::PostChild(v, w));
                            work.push(Frame::Visit(w));
                            advanced = true;
                            break;
                        } else if on_stack[w] {
                            low[v] = low[v].min(index[w]);
                        }
                    }
                    if advanced {
                        continue;
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        sccs.push(comp);
                    }
                }
            }
        }
    }
    sccs
}

/// Classify a method instance from the sparsity of its assembled tableau.
///
/// Stage `i` depends on stage `j` when the assembled coefficient `A[i, j]`
/// is nonzero; a nonzero diagonal is an implicit self-dependency. The kind
/// is `Coupled` exactly when some strongly connected component mixes fast
/// and slow stages. The topological order prefers fast stages in micro-step
/// order and postpones slow stages as far as their dependencies allow.
pub fn classify(method: &MrGarkMethod, m: usize) -> MethodClassification {
    let tab = assemble_gark(method, m);
    classify_tableau(&tab)
}

pub fn classify_tableau(tab: &GarkTableau) -> MethodClassification {
    let nf = tab.stages_fast;
    let n = nf + tab.stages_slow;
    let a = tab.full_matrix();
    let tol = 0.0;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)].abs() > tol {
                adj[i].push(j);
            }
        }
    }
    let sccs = tarjan_scc(&adj);

    // condensation: map stage -> component, then component edges
    let mut comp_of = vec![0usize; n];
    for (ci, comp) in sccs.iter().enumerate() {
        for &v in comp {
            comp_of[v] = ci;
        }
    }
    let nc = sccs.len();
    let mut comp_deps: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); nc];
    for (i, row) in adj.iter().enumerate() {
        for &j in row {
            if comp_of[i] != comp_of[j] {
                comp_deps[comp_of[i]].insert(comp_of[j]);
            }
        }
    }
    let mut indegree_pending: Vec<usize> = comp_deps.iter().map(|d| d.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); nc];
    for (ci, deps) in comp_deps.iter().enumerate() {
        for &d in deps {
            dependents[d].push(ci);
        }
    }

    // Kahn's algorithm; among ready components prefer ones containing fast
    // stages (in micro-step order) so slow stages come as late as possible.
    let comp_key = |ci: usize| -> (bool, usize) {
        let comp = &sccs[ci];
        let has_fast = comp.iter().any(|&v| v < nf);
        let first = *comp.iter().min().unwrap();
        (!has_fast, first)
    };
    let mut ready: Vec<usize> = (0..nc).filter(|&ci| indegree_pending[ci] == 0).collect();
    let mut order_components = Vec::with_capacity(nc);
    while !ready.is_empty() {
        ready.sort_by_key(|&ci| comp_key(ci));
        let next = ready.remove(0);
        order_components.push(next);
        for &dep in &dependents[next] {
            indegree_pending[dep] -= 1;
            if indegree_pending[dep] == 0 {
                ready.push(dep);
            }
        }
    }
    debug_assert_eq!(order_components.len(), nc);

    let mut groups = Vec::with_capacity(nc);
    let mut computation_order = Vec::with_capacity(n);
    let mut any_implicit = false;
    let mut any_mixed = false;
    for &ci in &order_components {
        let stages = sccs[ci].clone();
        let implicit = stages.len() > 1 || stages.iter().any(|&v| a[(v, v)].abs() > tol);
        let mixed = stages.iter().any(|&v| v < nf) && stages.iter().any(|&v| v >= nf);
        any_implicit |= implicit;
        any_mixed |= mixed;
        computation_order.extend(stages.iter().copied());
        groups.push(StageGroup { stages, implicit, mixed });
    }
    let kind = if any_mixed {
        MethodKind::Coupled
    } else if any_implicit {
        MethodKind::DecoupledDiagonallyImplicit
    } else {
        MethodKind::Explicit
    };
    MethodClassification { kind, computation_order, groups, stages_fast: nf, stages_slow: tab.stages_slow }
}

/// The elementwise sparsity-overlap test: the method is coupled iff
/// `A^{S,F} .* (A^{F,S})^T` has a nonzero entry.
pub fn sparsity_overlap(tab: &GarkTableau) -> bool {
    for i in 0..tab.stages_slow {
        for j in 0..tab.stages_fast {
            if tab.a_sf[(i, j)] != 0.0 && tab.a_fs[(j, i)] != 0.0 {
                return true;
            }
        }
    }
    false
}

/// One labelled residual in an order report.
#[derive(Debug, Clone)]
pub struct ResidualEntry {
    pub label: String,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct OrderReport {
    pub entries: Vec<ResidualEntry>,
}

impl OrderReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn push(&mut self, label: impl Into<String>, residual: f64) {
        self.entries.push(ResidualEntry { label: label.into(), residual });
    }
}

/// Residuals of the base-method order conditions up to `up_to` for both
/// partitions, plus the third-order coupling conditions
/// `b_f^T (sum_ell A^{F,S,ell}) c_s = m/6` and
/// `b_s^T sum_ell (ell-1) c^{S,F,ell} + b_s^T (sum_ell A^{S,F,ell}) c_f = m^2/6`
/// when `up_to >= 3`.
pub fn order_residuals(method: &MrGarkMethod, m: usize, up_to: usize) -> OrderReport {
    let slow = method.slow(m);
    let fast = method.fast(m);
    let mut report = OrderReport { entries: Vec::new() };
    for (label, r) in fast.order_residuals(up_to.min(4)) {
        report.push(format!("fast base: {label}"), r);
    }
    for (label, r) in slow.order_residuals(up_to.min(4)) {
        report.push(format!("slow base: {label}"), r);
    }
    let (per_ell, slow_side) = internal_consistency_residual(method, m);
    let fast_side = per_ell.iter().fold(0.0f64, |a, &b| a.max(b));
    report.push(format!("internal consistency fast side (m={m})"), fast_side);
    report.push(format!("internal consistency slow side (m={m})"), slow_side);

    if up_to >= 3 {
        let ones_f = DVector::from_element(fast.stages(), 1.0);
        let mut sum_fs = DMatrix::zeros(fast.stages(), slow.stages());
        let mut sum_sf = DMatrix::zeros(slow.stages(), fast.stages());
        let mut weighted_c_sf = DVector::zeros(slow.stages());
        for ell in 1..=m {
            sum_fs += method.coupling_fs(ell, m);
            let block_sf = method.coupling_sf(ell, m);
            weighted_c_sf += (&block_sf * &ones_f) * (ell as f64 - 1.0);
            sum_sf += block_sf;
        }
        let lhs_a = fast.b.dot(&(&sum_fs * &slow.c));
        report.push(format!("coupling order 3 fast (m={m})"), (lhs_a - m as f64 / 6.0).abs());
        let lhs_b = slow.b.dot(&weighted_c_sf) + slow.b.dot(&(&sum_sf * &fast.c));
        report.push(
            format!("coupling order 3 slow (m={m})"),
            (lhs_b - (m * m) as f64 / 6.0).abs(),
        );
    }
    report
}

/// Fast-stage coupling built from a continuous extension of the slow method:
/// `a^{F,S,ell}_{i,j} = gamma_j((ell - 1 + c_fast_i)/m)`.
///
/// `gamma at 0` must reproduce zero and `gamma_j(c_i) = a_{i,j}` for the
/// coupling to inherit internal consistency; [`stage_interpolation_weights`]
/// constructs such polynomials for tableaux with distinct abscissae.
pub fn dense_output_coupling(
    slow_gamma: Vec<Polynomial>,
    fast_c: DVector<f64>,
) -> impl Fn(usize, usize) -> DMatrix<f64> + Send + Sync {
    move |ell: usize, m: usize| {
        DMatrix::from_fn(fast_c.len(), slow_gamma.len(), |i, j| {
            let theta = (ell as f64 - 1.0 + fast_c[i]) / m as f64;
            slow_gamma[j].eval(theta)
        })
    }
}

/// Dense-output weights that interpolate the tableau columns at the
/// abscissae: `gamma_j(c_i) = a_{i,j}`. The weight sum then interpolates the
/// identity, which makes the induced coupling internally consistent exactly.
pub fn stage_interpolation_weights(tab: &RkTableau) -> crate::error::Result<Vec<Polynomial>> {
    let nodes: Vec<f64> = tab.c.iter().copied().collect();
    let mut out = Vec::with_capacity(tab.stages());
    for j in 0..tab.stages() {
        let vals: Vec<f64> = (0..tab.stages()).map(|i| tab.a[(i, j)]).collect();
        out.push(crate::core::poly::interpolate(&nodes, &vals)?);
    }
    Ok(out)
}

/// Quadratic dense-output weights `gamma_j(theta) = p_j theta + q_j theta^2`
/// whose induced coupling is internally consistent and satisfies the
/// third-order fast coupling condition for every ratio `m`.
///
/// Constraints: `gamma_j(0) = 0`, `gamma_j(1) = b_j`,
/// `sum_j gamma_j(theta) = theta`, and `int_0^1 sum_j gamma_j c_j = 1/6`
/// (the last is what makes `b_f^T (sum_ell A^{F,S,ell}) c_s = m/6` hold for
/// all `m`; it reduces to `c . q = 1/2` for an order-2 base). The remaining
/// freedom picks the minimum-norm `q`.
pub fn order3_dense_output_weights(tab: &RkTableau) -> crate::error::Result<Vec<Polynomial>> {
    use crate::error::Error;
    let s = tab.stages();
    if s < 2 {
        return Err(Error::BadParameter("order-3 dense output needs at least two stages".into()));
    }
    let bc = tab.b.dot(&tab.c);
    if (bc - 0.5).abs() > 1e-12 {
        return Err(Error::BadParameter("base method must satisfy b.c = 1/2".into()));
    }
    // minimum-norm q with 1.q = 0 and c.q = 1/2: q = alpha c + beta 1
    let ones = DVector::from_element(s, 1.0);
    let sum_c = tab.c.sum();
    let cc = tab.c.dot(&tab.c);
    let det = cc * s as f64 - sum_c * sum_c;
    if det.abs() < 1e-14 {
        return Err(Error::BadParameter("degenerate abscissae for dense output".into()));
    }
    let alpha = 0.5 * s as f64 / det;
    let beta = -0.5 * sum_c / det;
    let q = &tab.c * alpha + &ones * beta;
    Ok((0..s)
        .map(|j| Polynomial::new(vec![0.0, tab.b[j] - q[j], q[j]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn degenerate_pair(tab: RkTableau) -> MrGarkMethod {
        let t1 = tab.clone();
        let t2 = tab.clone();
        let t3 = tab.clone();
        let t4 = tab;
        MrGarkMethod::new(
            "degenerate",
            t1.order,
            true,
            Arc::new(move |_| t1.clone()),
            Arc::new(move |_| t2.clone()),
            Arc::new(move |_, _| t3.a.clone()),
            Arc::new(move |_, _| t4.a.clone()),
        )
    }

    #[test]
    fn m1_degenerate_equals_plain_gark() {
        let method = degenerate_pair(RkTableau::ralston2());
        let tab = assemble_gark(&method, 1);
        let base = RkTableau::ralston2();
        let plain = GarkTableau::plain(&base, &base, base.a.clone(), base.a.clone());
        assert_eq!(tab.full_matrix(), plain.full_matrix());
        assert_eq!(tab.b_f, plain.b_f);
        assert_eq!(tab.b_s, plain.b_s);
    }

    #[test]
    fn forward_euler_fast_block_m2() {
        let method = degenerate_pair(RkTableau::forward_euler());
        let tab = assemble_gark(&method, 2);
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        assert_eq!(tab.a_ff, expect);
        assert_eq!(tab.b_f.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn assembled_weights_sum_to_one() {
        let method = degenerate_pair(RkTableau::sdirk2());
        for m in [1usize, 2, 3, 5] {
            let tab = assemble_gark(&method, m);
            assert!((tab.b_f.sum() - 1.0).abs() < 1e-14);
            assert!((tab.b_s.sum() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_pair_is_internally_consistent_at_m1() {
        let method = degenerate_pair(RkTableau::sdirk2());
        let (per_ell, slow) = internal_consistency_residual(&method, 1);
        assert!(per_ell[0] < 1e-14);
        assert!(slow < 1e-14);
    }

    #[test]
    fn dense_output_constant_weights_give_b_rows() {
        let base = RkTableau::ralston2();
        let gammas: Vec<Polynomial> = base.b.iter().map(|&w| Polynomial::constant(w)).collect();
        let coupling = dense_output_coupling(gammas, base.c.clone());
        let block = coupling(2, 4);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(block[(i, j)], base.b[j]);
            }
        }
    }

    #[test]
    fn stage_interpolation_weights_reproduce_tableau() {
        let tab = RkTableau::sdirk3();
        let gammas = stage_interpolation_weights(&tab).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = gammas[j].eval(tab.c[i]);
                assert!((v - tab.a[(i, j)]).abs() < 1e-12);
            }
        }
        // the induced coupling is internally consistent for m in {2, 4}
        let tab2 = RkTableau::sdirk3();
        let coupling = dense_output_coupling(gammas, tab2.c.clone());
        for m in [2usize, 4] {
            for ell in 1..=m {
                let block = coupling(ell, m);
                for i in 0..3 {
                    let target = (ell as f64 - 1.0 + tab2.c[i]) / m as f64;
                    let sum: f64 = (0..3).map(|j| block[(i, j)]).sum();
                    assert!((sum - target).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn explicit_pair_classifies_explicit() {
        // forward Euler bases with constant-at-t_n coupling (zero blocks)
        let fe = RkTableau::forward_euler();
        let f1 = fe.clone();
        let f2 = fe.clone();
        let method = MrGarkMethod::new(
            "mrfe-test",
            1,
            true,
            Arc::new(move |_| f1.clone()),
            Arc::new(move |_| f2.clone()),
            Arc::new(|_, _| DMatrix::zeros(1, 1)),
            Arc::new(|_, _| DMatrix::zeros(1, 1)),
        );
        let cls = classify(&method, 3);
        assert_eq!(cls.kind, MethodKind::Explicit);
        assert_eq!(cls.computation_order.len(), 4);
        // fast micro-steps appear in order; the slow stage may come first
        // since nothing depends on it and it depends on nothing
        let fast_positions: Vec<usize> = cls
            .computation_order
            .iter()
            .filter(|&&v| v < 3)
            .copied()
            .collect();
        assert_eq!(fast_positions, vec![0, 1, 2]);
    }

    #[test]
    fn be_decoupled_classifies_diagonally_implicit() {
        let be = RkTableau::backward_euler();
        let f1 = be.clone();
        let f2 = be.clone();
        let method = MrGarkMethod::new(
            "mrbe-test",
            1,
            true,
            Arc::new(move |_| f1.clone()),
            Arc::new(move |_| f2.clone()),
            Arc::new(|_, _| DMatrix::from_element(1, 1, 1.0)),
            Arc::new(|_, _| DMatrix::zeros(1, 1)),
        );
        let cls = classify(&method, 2);
        assert_eq!(cls.kind, MethodKind::DecoupledDiagonallyImplicit);
        // slow stage must precede all fast stages here
        let slow_pos = cls.computation_order.iter().position(|&v| v == 2).unwrap();
        assert_eq!(slow_pos, 0);
    }
}
