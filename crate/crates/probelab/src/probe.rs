//! The probe scan: indicator traces along needles, impact-parameter
//! estimation, and boundary point-cloud reconstruction.
//!
//! Reconstruction consumes only the gap oracle and known quantities (the
//! background, the mesh, the accessible arc, and the needle family).  The
//! true inclusion enters exclusively through validation-mode diagnostics:
//! oracle distances and sandwich bounds attached to the trace.

use crate::error::{Error, Result};
use crate::fem::{ForwardSolver, GapOracle};
use crate::geometry::{dist_point_segment, Mesh2D, Needle, Point};
use crate::runge::{RungeResult, RungeWorkspace};
use crate::scenario::{CoefficientField, InclusionShape};
use crate::singular::{build_corrected_singular, SingularSolution};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

/// Decision rule turning an indicator trace into an impact estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum ImpactEstimator {
    /// First sample whose |indicator| exceeds
    /// max(tau_abs, kappa * median of the first-quartile |indicator|).
    Threshold { kappa: f64, tau_abs: f64 },
    /// First sample reaching `fraction` of the trace's own smoothed maximum.
    /// The probe tube blurs the indicator into a hump whose apex trails the
    /// impact by a tube-scale offset; a fractional level on the rising flank
    /// localizes the impact far better than an absolute threshold.
    OwnMaxFraction { fraction: f64, tau_abs: f64 },
}

impl Default for ImpactEstimator {
    fn default() -> Self {
        ImpactEstimator::OwnMaxFraction {
            fraction: 0.88,
            tau_abs: 0.0,
        }
    }
}

/// Probe-scan parameters.
#[derive(Debug, Clone)]
pub struct ProbeParams {
    /// Exclusion tube radius around the needle tail.
    pub delta_tube: f64,
    /// Horn widening: local tube radius is delta (1 + widen s), s the
    /// normalized arc position from the pole back to the anchor.  Zero gives
    /// the uniform tube.
    pub horn_widen: f64,
    /// Clearance band along the whole outer boundary excluded from the
    /// misfit (keeps the comparison region compactly inside the domain).
    pub boundary_band: f64,
    /// Decreasing penalty schedule.
    pub schedule: Vec<f64>,
    /// Conditioning cap for the penalty stages.
    pub cond_cap: f64,
    /// Acceptance cap on the far-region relative approximation error.
    pub error_cap: f64,
    /// Non-convergence flag: spread of the last stages above this fraction
    /// of the magnitude.
    pub spread_frac: f64,
    /// Guard: a trace whose max falls below `level_ratio` x baseline (or
    /// below `tau_abs`) never registers a crossing.
    pub level_ratio: f64,
    pub tau_abs: f64,
    pub estimator: ImpactEstimator,
    /// Local grid refinement factor around the detected crossing.
    pub refine: usize,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams {
            delta_tube: 0.12,
            horn_widen: 1.5,
            boundary_band: 0.15,
            schedule: (1..=13).map(|n| 10f64.powi(-n)).collect(),
            cond_cap: 1e16,
            error_cap: 0.9,
            spread_frac: 0.2,
            level_ratio: 1.45,
            tau_abs: 0.0,
            estimator: ImpactEstimator::default(),
            refine: 4,
        }
    }
}

/// One Runge stage as seen by the oracle.
#[derive(Debug, Clone, Serialize)]
pub struct StageReading {
    pub rho: f64,
    pub gap_value: f64,
    pub rel_error: f64,
    /// Background energy of the probe data at this stage, the natural
    /// scale for deciding whether a gap value is numerically zero.
    pub reference_energy: f64,
}

/// One needle parameter sample of an indicator trace.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorSample {
    pub t: f64,
    pub pole: Point,
    /// Gap values over the usable penalty stages.
    pub stages: Vec<StageReading>,
    /// Best-stage gap value: the indicator estimate.
    pub indicator: f64,
    /// Range of the gap value over the last three usable stages.
    pub spread: f64,
    /// Relative approximation error on the far probe region.
    pub far_rel_error: f64,
    pub accepted: bool,
    /// Validation only: distance from the pole to the true inclusion
    /// boundary (negative inside).
    pub oracle_distance: Option<f64>,
    /// Validation only: comparison-integral bounds for the indicator.
    pub sandwich: Option<(f64, f64)>,
}

/// Indicator trace of one needle.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorTrace {
    pub needle_id: usize,
    pub samples: Vec<IndicatorSample>,
    /// Median |indicator| over the first quartile of samples.
    pub baseline: f64,
    pub max_abs: f64,
    pub t_hat: f64,
    pub crossed: bool,
    /// Parameter of the smoothed |indicator| maximum.
    pub t_apex: f64,
    /// Slope of |indicator| against log(1/(t_cross - t)) over the last
    /// pre-crossing samples (diagnostic).
    pub growth_slope: Option<f64>,
}

/// Reconstructed boundary point.
#[derive(Debug, Clone, Serialize)]
pub struct CloudPoint {
    pub x: f64,
    pub y: f64,
    pub needle_id: usize,
    pub t_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    /// Validation only.
    pub hausdorff_to_true: Option<f64>,
}

// ---------------------------------------------------------------------------
// Indicator evaluation
// ---------------------------------------------------------------------------

/// Query the oracle along the usable stages of a Runge result and condense
/// them into one indicator estimate: the best-stage value, the spread of the
/// last three stages as its uncertainty, and a convergence flag.
pub fn compute_indicator(
    oracle: &GapOracle,
    workspace: &RungeWorkspace,
    runge: &RungeResult,
    spread_frac: f64,
) -> Result<(Vec<StageReading>, f64, f64, bool)> {
    let usable = runge.usable();
    if usable.len() < 3 {
        return Err(Error::Conditioning(
            "fewer than three usable penalty stages".into(),
        ));
    }
    let mut stages = Vec::with_capacity(usable.len());
    for s in usable {
        let f = workspace.embed_boundary(&s.coefficients);
        let q = oracle.query(&f)?;
        let reference_energy = oracle.reference_energy(&f)?;
        stages.push(StageReading {
            rho: s.rho,
            gap_value: q,
            rel_error: s.rel_error,
            reference_energy,
        });
    }
    let value = stages.last().unwrap().gap_value;
    let tail = &stages[stages.len() - 3..];
    let hi = tail.iter().fold(f64::MIN, |m, s| m.max(s.gap_value));
    let lo = tail.iter().fold(f64::MAX, |m, s| m.min(s.gap_value));
    let spread = hi - lo;
    let converged = spread <= spread_frac * value.abs().max(1e-300);
    Ok((stages, value, spread, converged))
}

// ---------------------------------------------------------------------------
// Needle scanning
// ---------------------------------------------------------------------------

/// Everything a needle scan needs, shared read-only across needles.
pub struct ProbeContext<'a, 'm> {
    pub mesh: &'m Mesh2D,
    pub solver0: &'a ForwardSolver<'m>,
    pub gamma0: &'a CoefficientField,
    pub oracle: &'a GapOracle,
    pub workspace: &'a RungeWorkspace<'m>,
    pub params: &'a ProbeParams,
    /// Validation mode: the true inclusion and the per-cell conductivities
    /// of both scenarios, for oracle distances and sandwich bounds.
    pub validation: Option<ValidationRefs<'a>>,
}

#[derive(Clone, Copy)]
pub struct ValidationRefs<'a> {
    pub shape: &'a InclusionShape,
    pub cell_gamma: &'a [f64],
    pub cell_gamma0: &'a [f64],
}

/// Horn-widened tube test: the exclusion radius is `delta` at the tail tip
/// (where localization matters) and tapers up to `delta (1 + widen)` within
/// four tube radii behind it.  The wider trailing channel is what lets
/// arc-supported data mimic the singularity at workable penalty levels; the
/// fixed taper length keeps it from sweeping over distant regions when a
/// needle merely passes by.
fn in_horn_tube(p: Point, _anchor: Point, _pole: Point, tail: &[Point], delta: f64, widen: f64) -> bool {
    if tail.len() == 1 {
        return p.dist(tail[0]) <= delta;
    }
    let total: f64 = tail.windows(2).map(|w| w[0].dist(w[1])).sum();
    let funnel = 4.0 * delta;
    let mut arc = 0.0;
    for w in tail.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        if len > 0.0 {
            let t = ((p - w[0]).dot(seg) / (len * len)).clamp(0.0, 1.0);
            let d = p.dist(w[0] + seg * t);
            let behind = (total - (arc + t * len)).max(0.0);
            let radius = delta * (1.0 + widen * (behind / funnel).min(1.0));
            if d <= radius {
                return true;
            }
        }
        arc += len;
    }
    false
}

struct ScanState {
    gram: DMatrix<f64>,
    excluded: Vec<bool>,
}

impl ScanState {
    fn new(ctx: &ProbeContext) -> Self {
        let ng = ctx.workspace.n_arc();
        let mut gram = DMatrix::zeros(ng, ng);
        gram.copy_from(ctx.workspace.gram_full());
        let mesh = ctx.mesh;
        let mut excluded = vec![false; mesh.n_cells()];
        // boundary clearance band is excluded for the whole scan
        for c in 0..mesh.n_cells() {
            let p = mesh.cell_centroid(c);
            if ctx_band_distance(ctx, p) < ctx.params.boundary_band {
                excluded[c] = true;
                ctx.workspace.gram_subtract_cell(&mut gram, c);
            }
        }
        ScanState { gram, excluded }
    }

    /// Exclude whatever newly falls inside the horn tube at this tail.
    fn advance(&mut self, ctx: &ProbeContext, needle: &Needle, t: f64, pole: Point) {
        let tail = needle.tail_polyline(t);
        let anchor = needle.start();
        for c in 0..ctx.mesh.n_cells() {
            if self.excluded[c] {
                continue;
            }
            let p = ctx.mesh.cell_centroid(c);
            if in_horn_tube(
                p,
                anchor,
                pole,
                &tail,
                ctx.params.delta_tube,
                ctx.params.horn_widen,
            ) {
                self.excluded[c] = true;
                ctx.workspace.gram_subtract_cell(&mut self.gram, c);
            }
        }
    }
}

fn ctx_band_distance(ctx: &ProbeContext, p: Point) -> f64 {
    // distance to the outer boundary, via the mesh's domain radius proxy:
    // use the polygonal boundary loop
    let bl = ctx.mesh.boundary_loop();
    let n = bl.len();
    let mut d = f64::INFINITY;
    for i in 0..n {
        let a = ctx.mesh.vertices[bl[i]];
        let b = ctx.mesh.vertices[bl[(i + 1) % n]];
        d = d.min(dist_point_segment(p, a, b));
    }
    d
}

/// Evaluate one sample: exclusion update, singular target, penalty sweep,
/// oracle queries, diagnostics.
fn evaluate_sample(
    ctx: &ProbeContext,
    needle: &Needle,
    state: &mut ScanState,
    t: f64,
) -> Result<IndicatorSample> {
    let mesh = ctx.mesh;
    let pole_req = needle.point_at(t);
    let sol: SingularSolution = build_corrected_singular(ctx.solver0, ctx.gamma0, pole_req)?;
    state.advance(ctx, needle, t, sol.pole);
    let target = sol.nodal_field(mesh);

    // rhs and target norm over the current region (full minus excluded)
    let mut rhs: DVector<f64> = ctx.workspace.rhs_full(&target);
    let mut norm_sq = ctx.workspace.target_norm_sq_full(&target);
    for c in 0..mesh.n_cells() {
        if state.excluded[c] {
            ctx.workspace
                .cell_rhs_and_norm(c, &target, &mut rhs, &mut norm_sq, -1.0);
        }
    }
    let runge = ctx.workspace.solve_schedule(
        &state.gram,
        &rhs,
        norm_sq,
        &ctx.params.schedule,
        ctx.params.cond_cap,
    )?;
    let (stages, indicator, spread, converged) = compute_indicator(
        ctx.oracle,
        ctx.workspace,
        &runge,
        ctx.params.spread_frac,
    )?;

    // far-region diagnostic error: cells outside twice the tube
    let far_rel_error = {
        let tail = needle.tail_polyline(t);
        let far_mask: Vec<bool> = (0..mesh.n_cells())
            .map(|c| {
                let p = mesh.cell_centroid(c);
                !state.excluded[c]
                    && !in_horn_tube(
                        p,
                        needle.start(),
                        sol.pole,
                        &tail,
                        2.0 * ctx.params.delta_tube,
                        ctx.params.horn_widen,
                    )
            })
            .collect();
        let best = runge.usable().last();
        match best {
            Some(stage) => {
                let far_norm = {
                    let ones_mask = &far_mask;
                    let mut acc = 0.0;
                    for c in 0..mesh.n_cells() {
                        if ones_mask[c] {
                            let tnodes = mesh.triangles[c];
                            let (s_el, m_el) = crate::fem::element_matrices(mesh, c);
                            let gv = [
                                target.values[tnodes[0]],
                                target.values[tnodes[1]],
                                target.values[tnodes[2]],
                            ];
                            for a in 0..3 {
                                for b in 0..3 {
                                    acc += gv[a] * (s_el[a][b] + m_el[a][b]) * gv[b];
                                }
                            }
                        }
                    }
                    acc.max(0.0).sqrt()
                };
                ctx.workspace
                    .exact_error(&stage.coefficients, &target, &far_mask)
                    / far_norm.max(1e-300)
            }
            None => f64::INFINITY,
        }
    };
    let accepted = converged && far_rel_error <= ctx.params.error_cap;

    let (oracle_distance, sandwich) = match &ctx.validation {
        Some(v) => {
            let d = v.shape.signed_distance(sol.pole);
            let bounds = if d > mesh.h {
                sandwich_bounds(mesh, &sol, v).ok()
            } else {
                None
            };
            (Some(d), bounds)
        }
        None => (None, None),
    };

    Ok(IndicatorSample {
        t,
        pole: sol.pole,
        stages,
        indicator,
        spread,
        far_rel_error,
        accepted,
        oracle_distance,
        sandwich,
    })
}

/// Comparison-integral bounds for the indicator over the true inclusion,
/// by cell quadrature of the singular gradients (validation mode).
pub fn sandwich_bounds(
    mesh: &Mesh2D,
    sol: &SingularSolution,
    v: &ValidationRefs,
) -> Result<(f64, f64)> {
    let cells: Vec<usize> = (0..mesh.n_cells())
        .filter(|&c| v.shape.signed_distance(mesh.cell_centroid(c)) < 0.0)
        .collect();
    let grads = sol.gradient_on_cells(mesh, &cells)?;
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (&c, g) in cells.iter().zip(grads.iter()) {
        let a = mesh.cell_area(c);
        let gg = v.cell_gamma[c];
        let g0 = v.cell_gamma0[c];
        let e = g.norm_sq() * a;
        lower += g0 * (gg - g0) / gg * e;
        upper += (gg - g0) * e;
    }
    // for a negative jump the roles swap
    Ok((lower.min(upper), lower.max(upper)))
}

/// Scan one needle: coarse pass, then local refinement around the detection.
pub fn scan_needle(ctx: &ProbeContext, needle_id: usize, needle: &Needle) -> Result<IndicatorTrace> {
    let mesh = ctx.mesh;
    let len = needle.length();
    let margin = 2.5 * mesh.h;
    let t0 = (margin / len).min(0.45);
    let t1 = 1.0 - t0;
    let step = mesh.h / len;
    let mut samples = Vec::new();
    let mut state = ScanState::new(ctx);
    let mut t = t0;
    while t <= t1 {
        // skip poles that drift into the boundary margin (hooked needles)
        if ctx_band_distance(ctx, needle.point_at(t)) >= margin {
            samples.push(evaluate_sample(ctx, needle, &mut state, t)?);
        }
        t += step;
    }
    if samples.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "needle {needle_id}: trace unusable ({} samples)",
            samples.len()
        )));
    }
    let mut trace = finish_trace(ctx, needle_id, samples)?;

    // refine around the crossing
    if trace.crossed && ctx.params.refine > 1 {
        let fine = step / ctx.params.refine as f64;
        let lo = (trace.t_hat - step).max(t0);
        let hi = (trace.t_hat + step).min(t1);
        let mut state = ScanState::new(ctx);
        let mut merged: Vec<IndicatorSample> = trace
            .samples
            .iter()
            .filter(|s| s.t < lo - 1e-12)
            .cloned()
            .collect();
        // bring the state up to lo by advancing through the coarse prefix
        for s in &merged {
            state.advance(ctx, needle, s.t, s.pole);
        }
        let mut t = lo;
        while t <= hi {
            if ctx_band_distance(ctx, needle.point_at(t)) >= margin {
                merged.push(evaluate_sample(ctx, needle, &mut state, t)?);
            }
            t += fine;
        }
        for s in trace.samples.iter().filter(|s| s.t > hi + 1e-12) {
            merged.push(s.clone());
        }
        // the tail samples after hi were computed with the coarse state;
        // their indicator values are unchanged by refinement (pure reads)
        trace = finish_trace(ctx, needle_id, merged)?;
    }
    Ok(trace)
}

fn finish_trace(
    ctx: &ProbeContext,
    needle_id: usize,
    samples: Vec<IndicatorSample>,
) -> Result<IndicatorTrace> {
    let n = samples.len();
    let quartile = (n / 4).max(2).min(n);
    let mut firsts: Vec<f64> = samples[..quartile]
        .iter()
        .map(|s| s.indicator.abs())
        .collect();
    firsts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let baseline = firsts[firsts.len() / 2];
    // smoothed |indicator| for max/crossing decisions
    let absv: Vec<f64> = samples.iter().map(|s| s.indicator.abs()).collect();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            absv[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let max_abs = smooth.iter().fold(0.0f64, |m, &v| m.max(v));
    let t_apex = samples[smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)]
    .t;

    let (t_hat, crossed) = estimate_impact(ctx.params, &samples, &smooth, baseline, max_abs);
    let growth_slope = if crossed {
        growth_diagnostic(&samples, t_hat)
    } else {
        None
    };
    Ok(IndicatorTrace {
        needle_id,
        samples,
        baseline,
        max_abs,
        t_hat,
        crossed,
        t_apex,
        growth_slope,
    })
}

/// Apply the configured estimator to a finished sample vector.
pub fn estimate_impact(
    params: &ProbeParams,
    samples: &[IndicatorSample],
    smooth: &[f64],
    baseline: f64,
    max_abs: f64,
) -> (f64, bool) {
    // level guards: a quiet trace means the needle never meets the inclusion
    if max_abs < params.tau_abs || max_abs < params.level_ratio * baseline.max(1e-300) {
        return (1.0, false);
    }
    match params.estimator {
        ImpactEstimator::Threshold { kappa, tau_abs } => {
            let tau = (kappa * baseline).max(tau_abs);
            for (i, s) in samples.iter().enumerate() {
                if smooth[i] > tau {
                    return (s.t, true);
                }
            }
            (1.0, false)
        }
        ImpactEstimator::OwnMaxFraction { fraction, tau_abs } => {
            let tau = (fraction * max_abs).max(tau_abs);
            for (i, s) in samples.iter().enumerate() {
                if smooth[i] >= tau {
                    return (s.t, true);
                }
            }
            (1.0, false)
        }
    }
}

/// Slope of |indicator| against log(1/(t_c - t)) over the pre-crossing
/// samples (attached as a confidence note).
fn growth_diagnostic(samples: &[IndicatorSample], t_hat: f64) -> Option<f64> {
    let step = if samples.len() >= 2 {
        samples[1].t - samples[0].t
    } else {
        return None;
    };
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.t < t_hat - 0.5 * step)
        .rev()
        .take(6)
        .map(|s| ((1.0 / (t_hat + step - s.t)).ln(), s.indicator.abs()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    Some(linear_slope(&pts))
}

pub fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx).max(1e-300)
}

pub fn correlation(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for p in pts {
        sxy += (p.0 - mx) * (p.1 - my);
        sxx += (p.0 - mx) * (p.0 - mx);
        syy += (p.1 - my) * (p.1 - my);
    }
    sxy / (sxx * syy).sqrt().max(1e-300)
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

/// Point cloud from the crossing estimates; needles with t_hat = 1 are
/// silent.  The consensus filter drops points far from the local trend of
/// their neighbors (grazing-needle artifacts).
pub fn reconstruct_boundary(
    traces: &[IndicatorTrace],
    needles: &[Needle],
    consensus: bool,
    true_shape: Option<&InclusionShape>,
) -> PointCloud {
    let mut points = Vec::new();
    for tr in traces {
        if tr.crossed && tr.t_hat < 1.0 {
            let p = needles[tr.needle_id].point_at(tr.t_hat);
            points.push(CloudPoint {
                x: p.x,
                y: p.y,
                needle_id: tr.needle_id,
                t_hat: tr.t_hat,
            });
        }
    }
    if consensus && points.len() >= 6 {
        points = consensus_filter(points);
    }
    let hausdorff_to_true = true_shape.map(|s| hausdorff_to_shape(&points, s));
    PointCloud {
        points,
        hausdorff_to_true,
    }
}

fn consensus_filter(points: Vec<CloudPoint>) -> Vec<CloudPoint> {
    let n = points.len();
    // residual of each point against the line through its 4 nearest
    // neighbors (local tangent of the sampled curve)
    let mut residuals = vec![0.0f64; n];
    for i in 0..n {
        let pi = Point::new(points[i].x, points[i].y);
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (pi.dist(Point::new(points[j].x, points[j].y)), j))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let nb: Vec<Point> = dists
            .iter()
            .take(4)
            .map(|&(_, j)| Point::new(points[j].x, points[j].y))
            .collect();
        let mean = nb.iter().fold(Point::new(0.0, 0.0), |a, &b| a + b) / nb.len() as f64;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &nb {
            let d = *p - mean;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        // principal direction of the neighbor cluster
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let dir = Point::new(theta.cos(), theta.sin());
        let off = pi - mean;
        residuals[i] = (off.x * dir.y - off.y * dir.x).abs();
    }
    let mut sorted = residuals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = sorted[n / 2].max(1e-9);
    // floor keeps the filter from biting into healthy scatter
    let cut = (3.0 * med).max(0.04);
    points
        .into_iter()
        .enumerate()
        .filter(|(i, _)| residuals[*i] <= cut)
        .map(|(_, p)| p)
        .collect()
}

/// Symmetric Hausdorff distance between the cloud and the shape boundary.
pub fn hausdorff_to_shape(points: &[CloudPoint], shape: &InclusionShape) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let cloud: Vec<Point> = points.iter().map(|p| Point::new(p.x, p.y)).collect();
    let mut worst = 0.0f64;
    for p in &cloud {
        worst = worst.max(shape.signed_distance(*p).abs());
    }
    for q in shape.boundary_samples(720) {
        let d = cloud
            .iter()
            .map(|p| p.dist(q))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(d);
    }
    worst
}

/// Scan a family of needles (parallel over needles; the result is a pure
/// function of the inputs, independent of scheduling).
pub fn scan_family(ctx: &ProbeContext, needles: &[Needle]) -> Result<Vec<IndicatorTrace>> {
    needles
        .par_iter()
        .enumerate()
        .map(|(id, n)| scan_needle(ctx, id, n))
        .collect()
}

/// Detection bias against scan depth, measured on a synthetic phantom run
/// through the identical pipeline.  The probe tube and the penalty floor
/// smear detections by an amount that grows with the arclength the needle
/// has traveled; the twin run measures that point-spread so it can be
/// subtracted.  Only known quantities enter: the background, the needle
/// family, and a simulated inclusion at a fixed reference position.
#[derive(Debug, Clone, Serialize)]
pub struct DepthBiasModel {
    /// (depth, bias) knots in arclength units, depth-sorted.
    pub knots: Vec<(f64, f64)>,
}

impl DepthBiasModel {
    /// Piecewise-linear fit through depth-binned medians.
    pub fn fit(samples: &[(f64, f64)]) -> Option<DepthBiasModel> {
        if samples.len() < 4 {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let lo = sorted.first().unwrap().0;
        let hi = sorted.last().unwrap().0;
        if hi - lo < 0.3 {
            // not enough depth spread for a trend; use the global median
            let mut b: Vec<f64> = sorted.iter().map(|s| s.1).collect();
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let med = b[b.len() / 2];
            return Some(DepthBiasModel {
                knots: vec![(lo, med), (hi.max(lo + 1e-9), med)],
            });
        }
        let n_bins = ((hi - lo) / 0.25).ceil() as usize;
        let n_bins = n_bins.clamp(2, 8);
        let width = (hi - lo) / n_bins as f64;
        let mut knots = Vec::new();
        for b in 0..n_bins {
            let a = lo + b as f64 * width;
            let z = a + width;
            let mut vals: Vec<f64> = sorted
                .iter()
                .filter(|s| s.0 >= a && (s.0 < z || b == n_bins - 1))
                .map(|s| s.1)
                .collect();
            if vals.is_empty() {
                continue;
            }
            vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
            knots.push((a + 0.5 * width, vals[vals.len() / 2]));
        }
        if knots.len() < 2 {
            return None;
        }
        Some(DepthBiasModel { knots })
    }

    /// Bias at a given depth (flat extrapolation outside the knot range).
    pub fn bias(&self, depth: f64) -> f64 {
        let k = &self.knots;
        if depth <= k[0].0 {
            return k[0].1;
        }
        if depth >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        for w in k.windows(2) {
            if depth <= w[1].0 {
                let u = (depth - w[0].0) / (w[1].0 - w[0].0).max(1e-300);
                return w[0].1 + u * (w[1].1 - w[0].1);
            }
        }
        k[k.len() - 1].1
    }
}

/// Per-needle calibration data: one (detection depth, bias) pair per twin
/// that the needle detected, plus the pooled model as a fallback.
#[derive(Debug, Clone, Serialize)]
pub struct BiasCalibration {
    pub per_needle: Vec<Vec<(f64, f64)>>,
    pub pooled: Option<DepthBiasModel>,
}

/// Measure detection bias by scanning the same needle family against
/// synthetic twin inclusions.  Each needle gets its own (depth, bias)
/// samples, so approach-geometry effects cancel; the pooled model covers
/// needles that missed every twin.
pub fn calibrate_depth_bias(
    ctx: &ProbeContext,
    needles: &[Needle],
    twins: &[(InclusionShape, GapOracle)],
) -> Result<Option<BiasCalibration>> {
    let mut per_needle: Vec<Vec<(f64, f64)>> = vec![Vec::new(); needles.len()];
    let mut pooled_samples = Vec::new();
    for (twin, twin_oracle) in twins {
        let twin_ctx = ProbeContext {
            mesh: ctx.mesh,
            solver0: ctx.solver0,
            gamma0: ctx.gamma0,
            oracle: twin_oracle,
            workspace: ctx.workspace,
            params: ctx.params,
            validation: None,
        };
        let traces = scan_family(&twin_ctx, needles)?;
        for tr in &traces {
            if !tr.crossed {
                continue;
            }
            let t_true =
                crate::geometry::impact_parameter_oracle(&needles[tr.needle_id], Some(twin));
            if t_true >= 1.0 {
                continue;
            }
            let len = needles[tr.needle_id].length();
            let sample = (tr.t_hat * len, (tr.t_hat - t_true) * len);
            per_needle[tr.needle_id].push(sample);
            pooled_samples.push(sample);
        }
    }
    if pooled_samples.len() < 4 {
        return Ok(None);
    }
    Ok(Some(BiasCalibration {
        per_needle,
        pooled: DepthBiasModel::fit(&pooled_samples),
    }))
}

/// Subtract the calibrated bias from every crossed estimate.  A needle with
/// its own twin samples uses them (nearest depth, linear between two);
/// otherwise the pooled model applies.
pub fn apply_depth_bias(
    traces: &mut [IndicatorTrace],
    needles: &[Needle],
    cal: &BiasCalibration,
) {
    for tr in traces.iter_mut() {
        if !tr.crossed {
            continue;
        }
        let len = needles[tr.needle_id].length();
        let depth = tr.t_hat * len;
        let own = &cal.per_needle[tr.needle_id];
        let bias = if own.len() >= 2 {
            let mut pts = own.clone();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let (d0, b0) = pts[0];
            let (d1, b1) = pts[pts.len() - 1];
            if depth <= d0 {
                b0
            } else if depth >= d1 {
                b1
            } else {
                b0 + (depth - d0) / (d1 - d0).max(1e-300) * (b1 - b0)
            }
        } else if own.len() == 1 {
            own[0].1
        } else if let Some(m) = &cal.pooled {
            m.bias(depth)
        } else {
            0.0
        };
        tr.t_hat = (tr.t_hat - bias / len).clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk_sample(t: f64, v: f64) -> IndicatorSample {
        IndicatorSample {
            t,
            pole: Point::new(0.0, 0.0),
            stages: Vec::new(),
            indicator: v,
            spread: 0.0,
            far_rel_error: 0.0,
            accepted: true,
            oracle_distance: None,
            sandwich: None,
        }
    }

    #[test]
    fn threshold_estimator_crosses_and_misses() {
        let params = ProbeParams {
            estimator: ImpactEstimator::Threshold {
                kappa: 10.0,
                tau_abs: 0.0,
            },
            level_ratio: 0.0,
            tau_abs: 0.0,
            ..ProbeParams::default()
        };
        let samples: Vec<IndicatorSample> = (0..20)
            .map(|i| {
                let t = i as f64 / 20.0;
                let v = if i < 15 { 0.01 } else { 0.5 };
                mk_sample(t, v)
            })
            .collect();
        let smooth: Vec<f64> = samples.iter().map(|s| s.indicator.abs()).collect();
        let (t_hat, crossed) = estimate_impact(&params, &samples, &smooth, 0.01, 0.5);
        assert!(crossed);
        assert!((t_hat - 0.75).abs() < 1e-12);
        // flat trace: no crossing
        let flat: Vec<IndicatorSample> = (0..20)
            .map(|i| mk_sample(i as f64 / 20.0, 0.01))
            .collect();
        let smooth: Vec<f64> = flat.iter().map(|s| s.indicator.abs()).collect();
        let (t_hat, crossed) = estimate_impact(&params, &flat, &smooth, 0.01, 0.01);
        assert!(!crossed);
        assert_eq!(t_hat, 1.0);
    }

    #[test]
    fn level_guard_suppresses_quiet_traces() {
        let params = ProbeParams {
            estimator: ImpactEstimator::OwnMaxFraction {
                fraction: 0.8,
                tau_abs: 0.0,
            },
            level_ratio: 3.0,
            tau_abs: 1e-6,
            ..ProbeParams::default()
        };
        // max/baseline = 2 < 3: guard holds
        let samples: Vec<IndicatorSample> = (0..20)
            .map(|i| mk_sample(i as f64 / 20.0, 0.01 + 0.01 * (i as f64 / 20.0)))
            .collect();
        let smooth: Vec<f64> = samples.iter().map(|s| s.indicator.abs()).collect();
        let (t_hat, crossed) = estimate_impact(&params, &samples, &smooth, 0.01, 0.02);
        assert!(!crossed);
        assert_eq!(t_hat, 1.0);
    }

    #[test]
    fn own_max_fraction_fires_on_rising_flank() {
        let params = ProbeParams {
            estimator: ImpactEstimator::OwnMaxFraction {
                fraction: 0.8,
                tau_abs: 0.0,
            },
            level_ratio: 1.45,
            tau_abs: 0.0,
            ..ProbeParams::default()
        };
        // hump peaking at t = 0.6
        let samples: Vec<IndicatorSample> = (0..30)
            .map(|i| {
                let t = i as f64 / 30.0;
                let v = 0.05 + (-(t - 0.6f64).powi(2) / 0.02).exp();
                mk_sample(t, v)
            })
            .collect();
        let smooth: Vec<f64> = samples.iter().map(|s| s.indicator.abs()).collect();
        let max = smooth.iter().fold(0.0f64, |m, &v| m.max(v));
        let (t_hat, crossed) = estimate_impact(&params, &samples, &smooth, 0.05, max);
        assert!(crossed);
        assert!(t_hat > 0.4 && t_hat < 0.6, "t_hat {t_hat}");
    }

    #[test]
    fn consensus_filter_drops_outlier() {
        let mut pts: Vec<CloudPoint> = (0..12)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / 12.0;
                CloudPoint {
                    x: 0.3 * th.cos(),
                    y: 0.3 * th.sin(),
                    needle_id: i,
                    t_hat: 0.5,
                }
            })
            .collect();
        pts.push(CloudPoint {
            x: 0.55,
            y: 0.55,
            needle_id: 99,
            t_hat: 0.5,
        });
        let kept = consensus_filter(pts);
        assert!(kept.iter().all(|p| p.needle_id != 99), "outlier survived");
        assert!(kept.len() >= 12);
    }

    #[test]
    fn hausdorff_of_exact_samples_is_small() {
        let shape = InclusionShape::disk(0.1, 0.0, 0.3);
        let points: Vec<CloudPoint> = (0..64)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / 64.0;
                CloudPoint {
                    x: 0.1 + 0.3 * th.cos(),
                    y: 0.3 * th.sin(),
                    needle_id: i,
                    t_hat: 0.4,
                }
            })
            .collect();
        let h = hausdorff_to_shape(&points, &shape);
        assert!(h < 0.02, "hausdorff {h}");
        // empty cloud: infinite distance
        assert!(hausdorff_to_shape(&[], &shape).is_infinite());
    }
}
