//! Concave-convex procedure over the set `C` of feasible channels: rows in the
//! masked simplex, expected distortion at most `δ`.
//!
//! Each outer step linearizes the subtracted convex term `g` at `M_k` and
//! minimizes the convex surrogate `f(M) − ⟨G_k, M⟩` with Frank-Wolfe, warm
//! started at `M_k`. Frank-Wolfe with exact line search never increases the
//! surrogate, so the true objective is non-increasing along the outer loop.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{expected_distortion, feasible_init, PrivacyModel};
use crate::objective::{ColumnKl, ConvexityCertificate, DcObjective, ZeroCell};
use crate::priors::substream;
use crate::prob::Channel;

/// Feasibility slack for row sums and the distortion budget.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Stop once `‖M_{k+1} − M_k‖_F ≤ epsilon`.
    pub epsilon: f64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Frank-Wolfe duality-gap target for each surrogate.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub seed: u64,
    /// Overrides the model's budget when set.
    pub delta: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 1e-6,
            max_iter: 100,
            restarts: 10,
            inner_tol: 1e-8,
            inner_max_iter: 10_000,
            seed: 0,
            delta: None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidConfig("inner_tol must be positive".into()));
        }
        if self.inner_max_iter == 0 {
            return Err(Error::InvalidConfig("inner_max_iter must be at least 1".into()));
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0) {
                return Err(Error::InvalidConfig(format!("delta must be nonnegative, got {d}")));
            }
        }
        Ok(())
    }

    fn budget(&self, model: &PrivacyModel) -> f64 {
        self.delta.unwrap_or_else(|| model.delta())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    ConvergedStep,
    MaxIterReached,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::ConvergedStep => "converged",
            Status::MaxIterReached => "max_iter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub objective: f64,
    pub distortion: f64,
    /// Frobenius norm of the step that produced this iterate (0 for `M_0`).
    pub step: f64,
    /// Frank-Wolfe gap reached by the inner solve (0 for `M_0`).
    pub inner_gap: f64,
    pub inner_iterations: usize,
}

/// Outer-loop state handed to observers after every iterate.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub m_k: Channel,
    pub g_k: Matrix,
    pub iter: usize,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub channel: Channel,
    pub objective: f64,
    pub status: Status,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    /// Number of surrogates whose gap target was not met within the cap.
    pub inner_cap_hits: usize,
    pub certificate: Option<ConvexityCertificate>,
    /// Restart that produced this result.
    pub restart: usize,
}

/// Exact minimizer of a linear function over `C`.
///
/// Dualizing the budget with `λ ≥ 0` separates the rows; each row picks the
/// cheapest masked entry of `cost + λ p_Y(y) d`. The realized distortion is
/// non-increasing in `λ` and only changes at finitely many breakpoints, so
/// the optimum is found by searching those and, at the critical breakpoint,
/// mixing its two neighbouring solutions so the budget is met with equality.
#[derive(Debug, Clone)]
pub struct Lmo {
    ny: usize,
    nz: usize,
    /// Masked columns of each row.
    cols: Vec<Vec<usize>>,
    /// `p_Y(y) d(y,z)` on the mask, aligned with `cols`.
    weight: Vec<Vec<f64>>,
    delta: f64,
}

impl Lmo {
    pub fn new(model: &PrivacyModel, delta: f64) -> Self {
        let (ny, nz) = (model.ny(), model.nz());
        let d = model.distortion().matrix();
        let py = model.p_y();
        let mask = model.mask();
        let mut cols = Vec::with_capacity(ny);
        let mut weight = Vec::with_capacity(ny);
        for y in 0..ny {
            let c: Vec<usize> = (0..nz).filter(|&z| mask[y * nz + z]).collect();
            weight.push(c.iter().map(|&z| py[y] * d[(y, z)]).collect());
            cols.push(c);
        }
        Lmo { ny, nz, cols, weight, delta }
    }

    fn row_choice(&self, cost: &Matrix, lambda: f64, out: &mut [usize]) -> f64 {
        let mut dist = 0.0;
        for y in 0..self.ny {
            let mut best = 0;
            let mut best_v = f64::INFINITY;
            for (k, &z) in self.cols[y].iter().enumerate() {
                let v = cost[(y, z)] + lambda * self.weight[y][k];
                if v < best_v {
                    best_v = v;
                    best = k;
                }
            }
            out[y] = best;
            dist += self.weight[y][best];
        }
        dist
    }

    fn breakpoints(&self, cost: &Matrix) -> Vec<f64> {
        let mut bps = Vec::new();
        for y in 0..self.ny {
            let cs = &self.cols[y];
            for i in 0..cs.len() {
                for j in 0..cs.len() {
                    let (w1, w2) = (self.weight[y][i], self.weight[y][j]);
                    let (c1, c2) = (cost[(y, cs[i])], cost[(y, cs[j])]);
                    if w1 > w2 && c1 <= c2 {
                        bps.push((c2 - c1) / (w1 - w2));
                    }
                }
            }
        }
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        bps
    }

    /// Writes the minimizer into `out` (shape `|Y|×|Z|`, zero off-mask).
    pub fn solve_into(&self, cost: &Matrix, out: &mut Matrix) {
        let mut pick = vec![0usize; self.ny];
        let d0 = self.row_choice(cost, 0.0, &mut pick);
        out.as_mut_slice().fill(0.0);
        if d0 <= self.delta {
            self.write(&pick, 1.0, out);
            return;
        }
        let bps = self.breakpoints(cost);
        if bps.is_empty() {
            self.write(&pick, 1.0, out);
            return;
        }
        // Interval 0 is λ = 0 itself; interval i > 0 spans (bps[i-1], bps[i])
        // and the last one is unbounded.
        let probe = |i: usize| -> f64 {
            if i == 0 {
                0.0
            } else if i == bps.len() {
                let last = bps[i - 1];
                2.0 * last + 1.0
            } else {
                0.5 * (bps[i - 1] + bps[i])
            }
        };
        // First interval whose distortion fits the budget.
        let (mut lo, mut hi) = (0usize, bps.len());
        let mut right = vec![0usize; self.ny];
        let mut d_right = self.row_choice(cost, probe(hi), &mut right);
        if d_right > self.delta {
            // Cannot happen for a valid model: large λ selects zero-distortion
            // entries. Fall back to the least-distortion choice.
            self.write(&right, 1.0, out);
            return;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let mut sel = vec![0usize; self.ny];
            let d = self.row_choice(cost, probe(mid), &mut sel);
            if d <= self.delta {
                hi = mid;
                right = sel;
                d_right = d;
            } else {
                lo = mid;
            }
        }
        let mut left = vec![0usize; self.ny];
        let d_left = self.row_choice(cost, probe(hi - 1), &mut left);
        let theta = ((self.delta - d_right) / (d_left - d_right)).clamp(0.0, 1.0);
        self.write(&right, 1.0 - theta, out);
        if theta > 0.0 {
            self.write(&left, theta, out);
        }
    }

    fn write(&self, pick: &[usize], w: f64, out: &mut Matrix) {
        for y in 0..self.ny {
            out[(y, self.cols[y][pick[y]])] += w;
        }
    }

    pub fn solve(&self, cost: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.ny, self.nz);
        self.solve_into(cost, &mut out);
        out
    }
}

/// Minimizer of `⟨cost, M⟩` over the feasible channels with budget `delta`.
pub fn lmo(cost: &Matrix, model: &PrivacyModel, delta: f64) -> Channel {
    let m = Lmo::new(model, delta).solve(cost);
    Channel::from_parts_unchecked(m, model.mask().to_vec())
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub channel: Channel,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Frank-Wolfe on `f(M) − ⟨g_k, M⟩` from `warm`.
///
/// Reaching the iteration cap is reported through `converged = false`; the
/// returned channel is feasible and no worse than `warm` either way.
pub fn inner_solve(
    obj_f: &ColumnKl,
    g_k: &Matrix,
    model: &PrivacyModel,
    cfg: &SolveConfig,
    warm: &Channel,
) -> Result<InnerOutcome> {
    let lmo = Lmo::new(model, cfg.budget(model));
    inner_solve_with(obj_f, g_k, model.mask(), &lmo, cfg, warm)
}

fn inner_solve_with(
    obj_f: &ColumnKl,
    g_k: &Matrix,
    mask: &[bool],
    lmo: &Lmo,
    cfg: &SolveConfig,
    warm: &Channel,
) -> Result<InnerOutcome> {
    let a = obj_f.a();
    let b = obj_f.b();
    let mut m = warm.matrix().clone();
    let mut am = a.matmul(&m);
    let mut bm = b.matmul(&m);
    let mut s = Matrix::zeros(m.rows(), m.cols());
    let mut dir = Matrix::zeros(m.rows(), m.cols());
    let mut ad = Matrix::zeros(am.rows(), am.cols());
    let mut bd = Matrix::zeros(am.rows(), am.cols());
    let mut gap = f64::INFINITY;
    let mut it = 0;
    while it < cfg.inner_max_iter {
        let mut grad = obj_f.gradient_from(&am, &bm, mask, ZeroCell::Directional)?;
        for (gv, &l) in grad.as_mut_slice().iter_mut().zip(g_k.as_slice()) {
            *gv -= l;
        }
        lmo.solve_into(&grad, &mut s);
        for ((dv, &sv), &mv) in dir.as_mut_slice().iter_mut().zip(s.as_slice()).zip(m.as_slice()) {
            *dv = sv - mv;
        }
        gap = -grad.dot(&dir);
        if !gap.is_finite() {
            return Err(Error::InnerSolverFailure(format!("non-finite duality gap at step {it}")));
        }
        if gap <= cfg.inner_tol {
            break;
        }
        it += 1;
        a.matmul_into(&dir, &mut ad);
        b.matmul_into(&dir, &mut bd);
        let lin = g_k.dot(&dir);
        let (ams, ads, bms, bds) = (am.as_slice(), ad.as_slice(), bm.as_slice(), bd.as_slice());
        let slope = |t: f64| ColumnKl::segment_slope(ams, ads, bms, bds, t) - lin;
        let newton = |t: f64| ColumnKl::segment_newton(ams, ads, bms, bds, t).map(|(s, c)| (s - lin, c));
        let step = line_search(slope, newton).min(MAX_STEP);
        if step.is_nan() {
            return Err(Error::InnerSolverFailure(format!("line search failed at step {it}")));
        }
        if step == 0.0 {
            break;
        }
        m.lerp_assign(&s, step);
        if it % 64 == 0 {
            a.matmul_into(&m, &mut am);
            b.matmul_into(&m, &mut bm);
        } else {
            axpy(am.as_mut_slice(), step, ad.as_slice());
            axpy(bm.as_mut_slice(), step, bd.as_slice());
        }
    }
    // Entries can pick up rounding noise; keep them nonnegative.
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(InnerOutcome {
        channel: Channel::from_parts_unchecked(m, mask.to_vec()),
        gap,
        iterations: it,
        converged: gap <= cfg.inner_tol,
    })
}

/// Largest Frank-Wolfe step. A full step onto a vertex can empty whole
/// columns of `M`; at such a point the linearization cannot see that moving
/// several rows into the same empty column helps, the gap reads zero and the
/// solver stalls away from the optimum. Stopping just short keeps every
/// entry that started positive positive, where the gradient is exact.
const MAX_STEP: f64 = 1.0 - 1e-6;

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// Minimizer on `[0, 1]` of a convex function given its derivative.
///
/// Newton steps on the derivative, kept inside a shrinking bracket and
/// replaced by bisection whenever they leave it or curvature is unavailable.
/// Stops when the bracket is below `1e-12` or the derivative vanishes.
fn line_search(slope: impl Fn(f64) -> f64, newton: impl Fn(f64) -> Option<(f64, f64)>) -> f64 {
    let s1 = slope(1.0);
    if s1.is_nan() {
        return f64::NAN;
    }
    if s1 <= 0.0 {
        return 1.0;
    }
    let s0 = slope(0.0);
    if s0.is_nan() {
        return f64::NAN;
    }
    if s0 >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = 0.5;
    for _ in 0..200 {
        let (s, c) = match newton(t) {
            Some(sc) => sc,
            None => (slope(t), f64::NAN),
        };
        if s.is_nan() {
            return f64::NAN;
        }
        if s == 0.0 {
            return t;
        }
        if s > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if hi - lo <= 1e-12 {
            break;
        }
        let next = t - s / c;
        t = if next.is_finite() && next > lo && next < hi {
            // Converged once the Newton correction is negligible.
            if (next - t).abs() <= 1e-15 {
                return next;
            }
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    lo
}

/// Runs the outer loop from `init`.
pub fn cccp(obj: &DcObjective, model: &PrivacyModel, cfg: &SolveConfig, init: &Channel) -> Result<SolveResult> {
    cccp_observed(obj, model, cfg, init, |_| {})
}

/// [`cccp`] calling `observe` with the state after every iterate, `M_0`
/// included.
pub fn cccp_observed(
    obj: &DcObjective,
    model: &PrivacyModel,
    cfg: &SolveConfig,
    init: &Channel,
    mut observe: impl FnMut(&SolverState),
) -> Result<SolveResult> {
    cfg.validate()?;
    let delta = cfg.budget(model);
    let budgeted = model.with_delta(delta)?;
    if init.inputs() != model.ny() || init.outputs() != model.nz() {
        return Err(Error::InfeasibleInit("initial channel has the wrong shape".into()));
    }
    budgeted
        .check_feasible(init, FEAS_TOL)
        .map_err(|e| Error::InfeasibleInit(e.to_string()))?;
    let init = Channel::from_parts_unchecked(init.matrix().clone(), model.mask().to_vec());

    let lmo = Lmo::new(model, delta);
    let mut state = SolverState {
        g_k: crate::objective::grad_g(obj, &init)?,
        m_k: init,
        iter: 0,
        trace: Vec::new(),
    };
    state.trace.push(TraceEntry {
        objective: obj.value(&state.m_k),
        distortion: expected_distortion(model, &state.m_k),
        step: 0.0,
        inner_gap: 0.0,
        inner_iterations: 0,
    });
    observe(&state);
    let mut cap_hits = 0;
    let status = loop {
        let inner = inner_solve_with(obj.f(), &state.g_k, model.mask(), &lmo, cfg, &state.m_k)?;
        if !inner.converged {
            cap_hits += 1;
        }
        let step = inner.channel.matrix().frobenius_distance(state.m_k.matrix());
        state.m_k = inner.channel;
        state.iter += 1;
        state.trace.push(TraceEntry {
            objective: obj.value(&state.m_k),
            distortion: expected_distortion(model, &state.m_k),
            step,
            inner_gap: inner.gap,
            inner_iterations: inner.iterations,
        });
        let done = if step <= cfg.epsilon {
            Some(Status::ConvergedStep)
        } else if state.iter >= cfg.max_iter {
            Some(Status::MaxIterReached)
        } else {
            None
        };
        if done.is_none() {
            state.g_k = crate::objective::grad_g(obj, &state.m_k)?;
        }
        observe(&state);
        if let Some(s) = done {
            break s;
        }
    };
    Ok(SolveResult {
        objective: state.trace.last().map(|t| t.objective).unwrap_or(f64::NAN),
        channel: state.m_k,
        status,
        iterations: state.iter,
        trace: state.trace,
        inner_cap_hits: cap_hits,
        certificate: None,
        restart: 0,
    })
}

/// Random feasible channel: each row drawn from a flat Dirichlet over its
/// masked entries, then pulled toward the identity embedding just enough to
/// meet the budget.
pub fn random_init<R: Rng>(model: &PrivacyModel, delta: f64, rng: &mut R) -> Channel {
    let (ny, nz) = (model.ny(), model.nz());
    let mask = model.mask();
    let mut r = Matrix::zeros(ny, nz);
    for y in 0..ny {
        let mut total = 0.0;
        for z in 0..nz {
            if mask[y * nz + z] {
                let e: f64 = Exp1.sample(rng);
                r[(y, z)] = e;
                total += e;
            }
        }
        for v in r.row_mut(y) {
            *v /= total;
        }
    }
    let mut ch = Channel::from_parts_unchecked(r, mask.to_vec());
    let dist = expected_distortion(model, &ch);
    if dist > delta {
        let theta = if dist > 0.0 { delta / dist } else { 0.0 };
        let ident = feasible_init(model);
        let mut m = ident.into_matrix();
        m.lerp_assign(ch.matrix(), theta);
        ch = Channel::from_parts_unchecked(m, mask.to_vec());
    }
    ch
}

/// Best of `cfg.restarts` runs from random starts. Restart `r` draws its
/// start from sub-stream `r` of `cfg.seed`; restarts run in parallel and the
/// winner is the lowest objective, ties going to the lower restart index.
pub fn multistart(obj: &DcObjective, model: &PrivacyModel, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if cfg.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    let delta = cfg.budget(model);
    let runs: Vec<Result<SolveResult>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let init = random_init(model, delta, &mut substream(cfg.seed, r as u64));
            cccp(obj, model, cfg, &init).map(|mut res| {
                res.restart = r;
                res
            })
        })
        .collect();
    let mut best: Option<SolveResult> = None;
    for run in runs {
        let run = run?;
        let better = match &best {
            None => true,
            Some(b) => run.objective < b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AdversaryPrior;
    use crate::objective::dc_split;
    use crate::prob::JointDist;

    fn table_model(delta: f64) -> PrivacyModel {
        let p = JointDist::new(Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.4]]).unwrap()).unwrap();
        PrivacyModel::square_hamming(p, delta).unwrap()
    }

    #[test]
    fn lmo_unconstrained_and_zero_budget() {
        let model = table_model(10.0);
        let cost = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let m = lmo(&cost, &model, 10.0);
        assert_eq!(m.matrix().to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let m = lmo(&cost, &model, 0.0);
        assert_eq!(m.matrix().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn lmo_meets_budget_with_equality() {
        let model = table_model(0.25);
        let cost = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let m = lmo(&cost, &model, 0.25);
        let d = expected_distortion(&model, &m);
        assert!((d - 0.25).abs() < 1e-12);
        // Both rows save one unit of cost per unit of distortion.
        assert!((cost.dot(m.matrix()) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn line_search_cases() {
        let none = |_: f64| None;
        assert_eq!(line_search(|t| t - 2.0, none), 1.0);
        assert_eq!(line_search(|t| t + 1.0, none), 0.0);
        assert!((line_search(|t| t - 0.3, none) - 0.3).abs() < 1e-12);
        let cubic = |t: f64| t * t * t - 0.125;
        let with_curv = |t: f64| Some((cubic(t), 3.0 * t * t));
        assert!((line_search(cubic, with_curv) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_returns_identity() {
        let model = table_model(0.0);
        let obj = dc_split(&model, &AdversaryPrior::omniscient(&model)).unwrap();
        let cfg = SolveConfig { restarts: 3, ..SolveConfig::default() };
        let res = multistart(&obj, &model, &cfg).unwrap();
        assert!(res.channel.matrix().max_abs_diff(&Matrix::identity(2)) < 1e-12);
        assert!((res.objective - 0.19274475702175742).abs() < 1e-9);
    }

    #[test]
    fn large_budget_reaches_independence() {
        let model = table_model(1.0);
        let obj = dc_split(&model, &AdversaryPrior::omniscient(&model)).unwrap();
        let res = multistart(&obj, &model, &SolveConfig::default()).unwrap();
        assert!(res.objective <= 1e-6, "{}", res.objective);
    }

    #[test]
    fn infeasible_init_rejected() {
        let model = table_model(0.0);
        let obj = dc_split(&model, &AdversaryPrior::omniscient(&model)).unwrap();
        let bad = Channel::new(Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap()).unwrap();
        assert!(matches!(
            cccp(&obj, &model, &SolveConfig::default(), &bad),
            Err(Error::InfeasibleInit(_))
        ));
    }

    #[test]
    fn random_init_is_feasible() {
        let model = table_model(0.1);
        let mut rng = substream(5, 0);
        for _ in 0..50 {
            let m = random_init(&model, 0.1, &mut rng);
            assert!(model.check_feasible(&m, FEAS_TOL).is_ok());
        }
    }
}
