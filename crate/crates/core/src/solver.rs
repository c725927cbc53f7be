//! Minimisation of `wᵀJw + Cᵀw` over the scaled simplex `{w ≥ 0, Σw = R}`.
//!
//! Four interchangeable backends share one driver:
//!
//! * `dissipative`: multiplicative-weights (replicator) flow
//!   `w ← w ∘ exp(−η∇E)`, renormalised to `R`. Steps that raise the energy are
//!   retried with `η` halved. It is the software stand-in for an analog
//!   machine that relaxes towards low-energy states.
//! * `projected_gradient`: `w ← P(w − η∇E)` with backtracking; monotone.
//! * `frank_wolfe`: vertex oracle `R·e_k` with away steps and exact line
//!   search; monotone.
//! * `brute_force`: exhaustive evaluation of the grid `{R·k/d}` on the
//!   simplex. Used as an oracle for small `N`.
//!
//! Non-grid backends run `restarts` independent starts drawn from a flat
//! Dirichlet distribution and keep the lowest final energy (lowest restart
//! index on ties). Projected gradient and Frank–Wolfe replace the first start
//! with the lowest-energy vertex; multiplicative updates cannot leave one.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{quantize_to_range, Hamiltonian, HamiltonianError};

/// Iterations spanned by the relative-change convergence test.
pub const CONVERGENCE_WINDOW: usize = 10;

/// Upper bound on grid points the brute-force backend will enumerate.
pub const BRUTE_FORCE_CAP: u128 = 20_000_000;

const MAX_HALVINGS: usize = 60;
const STEP_GROWTH: f64 = 1.25;
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("energy became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("grid with resolution {resolution} over {n} variables has {count} points, above the cap of {cap}")]
    GridTooLarge { n: usize, resolution: usize, count: u128, cap: u128 },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Dissipative,
    ProjectedGradient,
    FrankWolfe,
    BruteForce,
}

impl Backend {
    pub const ALL: [Backend; 4] = [
        Backend::Dissipative,
        Backend::ProjectedGradient,
        Backend::FrankWolfe,
        Backend::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Dissipative => "dissipative",
            Backend::ProjectedGradient => "projected_gradient",
            Backend::FrankWolfe => "frank_wolfe",
            Backend::BruteForce => "brute_force",
        }
    }

    /// Backends whose accepted iterates never increase the energy.
    pub fn is_monotone(self) -> bool {
        !matches!(self, Backend::BruteForce)
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "dissipative" => Ok(Backend::Dissipative),
            "projected_gradient" => Ok(Backend::ProjectedGradient),
            "frank_wolfe" => Ok(Backend::FrankWolfe),
            "brute_force" => Ok(Backend::BruteForce),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub backend: Backend,
    pub max_iters: usize,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    /// When set, the problem is clamped with [`quantize_to_range`] before
    /// solving. Reported energies still refer to the original problem.
    pub emulate_range_db: Option<f64>,
    /// Grid resolution `d` for the brute-force backend.
    pub grid_resolution: usize,
    /// Run exactly `max_iters` iterations, ignoring the convergence test.
    /// Used for per-iteration timing.
    pub fixed_iterations: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Dissipative,
            max_iters: 5000,
            tolerance: 1e-8,
            restarts: 10,
            seed: 1,
            emulate_range_db: None,
            grid_resolution: 60,
            fixed_iterations: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let fail = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if self.max_iters == 0 {
            return fail("max_iters must be at least 1");
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return fail("tolerance must be positive");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        if self.grid_resolution == 0 {
            return fail("grid_resolution must be at least 1");
        }
        if let Some(db) = self.emulate_range_db {
            if !(db > 0.0 && db.is_finite()) {
                return fail("emulate_range_db must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub weights: Vec<f64>,
    /// `wᵀJw + Cᵀw` on the caller's Hamiltonian (offset excluded).
    pub energy: f64,
    /// `energy + offset`, i.e. the squared-error boosting loss.
    pub boost_loss: f64,
    pub iterations: usize,
    /// `(iteration, energy)` of the winning start on the problem actually
    /// solved (the clamped one under range emulation).
    pub trace: Vec<(usize, f64)>,
    pub converged: bool,
    /// Index of the winning start.
    pub restart: usize,
}

/// Euclidean projection onto `{w ≥ 0, Σw = r}`: `w_i = max(v_i − τ, 0)` with
/// `τ` found from the sorted values.
pub fn project_simplex(v: &[f64], r: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = u[0] - r;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - r) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

fn gradient(ham: &Hamiltonian, jw: &[f64], out: &mut [f64]) {
    for ((g, &a), &c) in out.iter_mut().zip(jw).zip(ham.c().iter()) {
        *g = 2.0 * a + c;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Run {
    weights: Vec<f64>,
    iterations: usize,
    trace: Vec<(usize, f64)>,
    converged: bool,
    restart: usize,
}

/// Shared bookkeeping: trace, divergence check and windowed convergence.
struct Tracker<'a> {
    cfg: &'a SolverConfig,
    trace: Vec<(usize, f64)>,
}

impl<'a> Tracker<'a> {
    fn new(cfg: &'a SolverConfig, e0: f64) -> Result<Self, SolverError> {
        if !e0.is_finite() {
            return Err(SolverError::Diverged { iteration: 0 });
        }
        let mut trace = Vec::with_capacity(cfg.max_iters.min(10_000) + 1);
        trace.push((0, e0));
        Ok(Self { cfg, trace })
    }

    /// Records iteration `t`; returns true when the run may stop.
    fn record(&mut self, t: usize, e: f64) -> Result<bool, SolverError> {
        if !e.is_finite() {
            return Err(SolverError::Diverged { iteration: t });
        }
        self.trace.push((t, e));
        Ok(!self.cfg.fixed_iterations && self.window_converged())
    }

    fn window_converged(&self) -> bool {
        let n = self.trace.len();
        if n <= CONVERGENCE_WINDOW {
            return false;
        }
        let now = self.trace[n - 1].1;
        let then = self.trace[n - 1 - CONVERGENCE_WINDOW].1;
        (then - now).abs() <= self.cfg.tolerance * now.abs()
    }

    fn finish(self, weights: Vec<f64>, converged: bool) -> Run {
        let iterations = self.trace.last().map(|t| t.0).unwrap_or(0);
        Run { weights, iterations, trace: self.trace, converged, restart: 0 }
    }
}

fn dissipative(ham: &Hamiltonian, cfg: &SolverConfig, start: Vec<f64>) -> Result<Run, SolverError> {
    let n = ham.n();
    let r = ham.sum_constraint();
    let mut w = start;
    let mut jw = vec![0.0; n];
    ham.couple(&w, &mut jw);
    let mut e = ham.energy_with(&w, &jw);
    let mut tracker = Tracker::new(cfg, e)?;
    let mut g = vec![0.0; n];
    let mut cand = vec![0.0; n];
    let mut cand_jw = vec![0.0; n];

    gradient(ham, &jw, &mut g);
    let spread = g.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - g.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let mut eta = if spread > 0.0 { 1.0 / spread } else { 1.0 };

    for t in 1..=cfg.max_iters {
        gradient(ham, &jw, &mut g);
        let g_min = g.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut total = 0.0;
            for i in 0..n {
                // Shifting by the minimum keeps every factor in (0, 1].
                let arg = (eta * (g[i] - g_min)).min(700.0);
                cand[i] = (w[i] * (-arg).exp()).max(WEIGHT_FLOOR);
                total += cand[i];
            }
            let scale = r / total;
            cand.iter_mut().for_each(|v| *v *= scale);
            ham.couple(&cand, &mut cand_jw);
            let cand_e = ham.energy_with(&cand, &cand_jw);
            if !cand_e.is_finite() {
                return Err(SolverError::Diverged { iteration: t });
            }
            if cand_e <= e {
                std::mem::swap(&mut w, &mut cand);
                std::mem::swap(&mut jw, &mut cand_jw);
                e = cand_e;
                eta *= STEP_GROWTH;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            // No step size lowers the energy: a fixed point of the flow.
            tracker.record(t, e)?;
            return Ok(tracker.finish(w, true));
        }
        if tracker.record(t, e)? {
            return Ok(tracker.finish(w, true));
        }
    }
    Ok(tracker.finish(w, false))
}

fn projected_gradient(ham: &Hamiltonian, cfg: &SolverConfig, start: Vec<f64>) -> Result<Run, SolverError> {
    let n = ham.n();
    let r = ham.sum_constraint();
    let mut w = project_simplex(&start, r);
    let mut jw = vec![0.0; n];
    ham.couple(&w, &mut jw);
    let mut e = ham.energy_with(&w, &jw);
    let mut tracker = Tracker::new(cfg, e)?;
    let mut g = vec![0.0; n];
    let mut cand_jw = vec![0.0; n];

    // Gershgorin bound on the gradient's Lipschitz constant 2·λ_max(J).
    let lipschitz = 2.0
        * ham
            .j()
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
    let mut eta = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    for t in 1..=cfg.max_iters {
        gradient(ham, &jw, &mut g);
        let mut step = eta * 2.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let cand = project_simplex(&trial, r);
            let d: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
            let dd = dot(&d, &d);
            if dd == 0.0 {
                break;
            }
            ham.couple(&cand, &mut cand_jw);
            let cand_e = ham.energy_with(&cand, &cand_jw);
            if !cand_e.is_finite() {
                return Err(SolverError::Diverged { iteration: t });
            }
            if cand_e <= e + dot(&g, &d) + dd / (2.0 * step) && cand_e <= e {
                accepted = Some((cand, cand_e, step));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_e, step)) = accepted else {
            // Projected gradient step is zero: a stationary point.
            tracker.record(t, e)?;
            return Ok(tracker.finish(w, true));
        };
        w = cand;
        std::mem::swap(&mut jw, &mut cand_jw);
        e = cand_e;
        eta = step;
        if tracker.record(t, e)? {
            return Ok(tracker.finish(w, true));
        }
    }
    Ok(tracker.finish(w, false))
}

/// Frank–Wolfe with away steps. Along `d` the energy is the parabola
/// `E + γ·g·d + γ²·dᵀJd`, minimised exactly on `[0, γ_max]`.
fn frank_wolfe(ham: &Hamiltonian, cfg: &SolverConfig, start: Vec<f64>) -> Result<Run, SolverError> {
    let n = ham.n();
    let r = ham.sum_constraint();
    let j = ham.j();
    let mut w = start;
    let mut jw = vec![0.0; n];
    ham.couple(&w, &mut jw);
    let mut e = ham.energy_with(&w, &jw);
    let mut tracker = Tracker::new(cfg, e)?;
    let mut g = vec![0.0; n];

    for t in 1..=cfg.max_iters {
        gradient(ham, &jw, &mut g);
        let wjw = dot(&w, &jw);
        let gw = dot(&g, &w);
        let s = (0..n).min_by(|&a, &b| g[a].total_cmp(&g[b])).expect("n >= 1");
        let a = (0..n)
            .filter(|&i| w[i] > 0.0)
            .max_by(|&x, &y| g[x].total_cmp(&g[y]).then(y.cmp(&x)))
            .expect("weights sum to r > 0");

        // Directional slopes g·d for the toward (R e_s − w) and away (w − R e_a) moves.
        // From a lone vertex there is nowhere to step away to.
        let active = w.iter().filter(|&&v| v > 0.0).count();
        let slope_fw = r * g[s] - gw;
        let slope_away = if active > 1 { gw - r * g[a] } else { f64::INFINITY };
        if slope_fw >= 0.0 && slope_away >= 0.0 {
            tracker.record(t, e)?;
            return Ok(tracker.finish(w, true));
        }
        let toward = slope_fw <= slope_away;
        let (slope, curvature, gamma_max) = if toward {
            let curv = r * r * j[[s, s]] - 2.0 * r * jw[s] + wjw;
            (slope_fw, curv, 1.0)
        } else {
            let curv = wjw - 2.0 * r * jw[a] + r * r * j[[a, a]];
            let gm = if w[a] < r { w[a] / (r - w[a]) } else { f64::INFINITY };
            (slope_away, curv, gm)
        };
        let mut gamma = if curvature > 0.0 { (-slope / (2.0 * curvature)).min(gamma_max) } else { gamma_max };
        if !gamma.is_finite() {
            // Away from a lone vertex along a non-convex direction: unbounded
            // only in γ, the feasible set still stops at the opposite face.
            gamma = 1.0;
        }
        let mut cand: Vec<f64> = if toward {
            w.iter().enumerate().map(|(i, &wi)| wi + gamma * ((if i == s { r } else { 0.0 }) - wi)).collect()
        } else {
            w.iter().enumerate().map(|(i, &wi)| wi + gamma * (wi - if i == a { r } else { 0.0 })).collect()
        };
        if !toward && gamma == gamma_max {
            cand[a] = 0.0;
        }
        for v in cand.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mut cand_jw = vec![0.0; n];
        ham.couple(&cand, &mut cand_jw);
        let cand_e = ham.energy_with(&cand, &cand_jw);
        if !cand_e.is_finite() {
            return Err(SolverError::Diverged { iteration: t });
        }
        if cand_e > e {
            // Line-search minimiser lost to rounding; nothing left to gain.
            tracker.record(t, e)?;
            return Ok(tracker.finish(w, true));
        }
        w = cand;
        jw = cand_jw;
        e = cand_e;
        if tracker.record(t, e)? {
            return Ok(tracker.finish(w, true));
        }
    }
    Ok(tracker.finish(w, false))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of grid points `C(d + N − 1, N − 1)`.
pub fn grid_size(n: usize, resolution: usize) -> u128 {
    binomial((resolution + n - 1) as u128, (n - 1) as u128)
}

fn brute_force(ham: &Hamiltonian, cfg: &SolverConfig) -> Result<Run, SolverError> {
    let n = ham.n();
    let d = cfg.grid_resolution;
    let count = grid_size(n, d);
    if count > BRUTE_FORCE_CAP {
        return Err(SolverError::GridTooLarge { n, resolution: d, count, cap: BRUTE_FORCE_CAP });
    }
    let unit = ham.sum_constraint() / d as f64;
    // Compositions of d into n parts, enumerated in lexicographic order.
    let mut parts = vec![0usize; n];
    parts[n - 1] = d;
    let mut w = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluated = 0usize;
    loop {
        for (wi, &k) in w.iter_mut().zip(&parts) {
            *wi = k as f64 * unit;
        }
        let e = ham.energy(&w)?;
        if !e.is_finite() {
            return Err(SolverError::Diverged { iteration: evaluated });
        }
        evaluated += 1;
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, w.clone()));
        }
        // Next composition: move one unit from the last part into the
        // rightmost position that can still grow, then reset the tail.
        let Some(i) = (0..n - 1).rev().find(|&i| parts[i + 1..].iter().sum::<usize>() > 0) else {
            break;
        };
        let tail: usize = parts[i + 1..].iter().sum();
        parts[i] += 1;
        parts[i + 1..].iter_mut().for_each(|p| *p = 0);
        parts[n - 1] = tail - 1;
    }
    let (e, w) = best.expect("grid has at least one point");
    Ok(Run { weights: w, iterations: evaluated, trace: vec![(evaluated, e)], converged: true, restart: 0 })
}

/// Flat-Dirichlet start scaled to `r`, from the stream of start `index`.
fn dirichlet_start(n: usize, r: f64, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).map(|v: f64| v.max(1e-12)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total * r).collect()
}

/// `R·e_k` for the `k` minimising `R²J_kk + R·C_k`.
fn best_vertex_start(ham: &Hamiltonian) -> Vec<f64> {
    let r = ham.sum_constraint();
    let (j, c) = (ham.j(), ham.c());
    let k = (0..ham.n())
        .min_by(|&a, &b| (r * j[[a, a]] + c[a]).total_cmp(&(r * j[[b, b]] + c[b])))
        .expect("n >= 1");
    let mut w = vec![0.0; ham.n()];
    w[k] = r;
    w
}

fn solve_quantized(problem: &Hamiltonian, cfg: &SolverConfig) -> Result<Run, SolverError> {
    let n = problem.n();
    let r = problem.sum_constraint();
    if n == 1 {
        let e = problem.energy(&[r])?;
        return Ok(Run { weights: vec![r], iterations: 0, trace: vec![(0, e)], converged: true, restart: 0 });
    }
    if cfg.backend == Backend::BruteForce {
        return brute_force(problem, cfg);
    }
    let runs: Vec<Result<(f64, Run), SolverError>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let start = if k == 0 && cfg.backend != Backend::Dissipative {
                best_vertex_start(problem)
            } else {
                dirichlet_start(n, r, cfg.seed, k)
            };
            let run = match cfg.backend {
                Backend::Dissipative => dissipative(problem, cfg, start),
                Backend::ProjectedGradient => projected_gradient(problem, cfg, start),
                Backend::FrankWolfe => frank_wolfe(problem, cfg, start),
                Backend::BruteForce => unreachable!("handled above"),
            }?;
            let e = run.trace.last().map(|t| t.1).unwrap_or(f64::INFINITY);
            Ok((e, run))
        })
        .collect();
    let mut best: Option<(usize, f64, Run)> = None;
    for (k, res) in runs.into_iter().enumerate() {
        let (e, run) = res?;
        if best.as_ref().is_none_or(|(_, b, _)| e < *b) {
            best = Some((k, e, run));
        }
    }
    let (k, _, mut run) = best.expect("restarts >= 1");
    run.restart = k;
    Ok(run)
}

/// Solves `ham` with the configured backend.
pub fn solve(ham: &Hamiltonian, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    cfg.validate()?;
    let problem = match cfg.emulate_range_db {
        Some(db) => quantize_to_range(ham, db)?,
        None => ham.clone(),
    };
    let run = solve_quantized(&problem, cfg)?;
    let weights = project_simplex(&run.weights, ham.sum_constraint());
    let energy = ham.energy(&weights)?;
    if !energy.is_finite() {
        return Err(SolverError::Diverged { iteration: run.iterations });
    }
    Ok(Solution {
        weights,
        energy,
        boost_loss: energy + ham.offset(),
        iterations: run.iterations,
        trace: run.trace,
        converged: run.converged,
        restart: run.restart,
    })
}

/// Reads a Hamiltonian JSON file and solves it.
pub fn solve_file(path: &Path, cfg: &SolverConfig) -> Result<Solution, SolverError> {
    let ham = Hamiltonian::read(path)?;
    solve(&ham, cfg)
}
