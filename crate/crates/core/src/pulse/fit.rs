//! Echo-decay fits with ESEEM modulation.
//!
//! Model, with c = 2 for a two-pulse and c = 1 for a three-pulse trace:
//!
//! y(t) = y0 + A·exp(−c·t/T)·[1 + k·exp(−λt)·cos(2πνt + φ)]
//!
//! Times are in μs, so ν is in MHz and λ in μs⁻¹.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::trace::{DecayTrace, TraceKind};
use crate::error::{Error, Result};

pub const N_PARAMS: usize = 7;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["y0", "A", "T", "k", "lambda", "nu", "phi"];

pub const T_DECAY_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const K_BOUNDS: (f64, f64) = (0.0, 10.0);

const MAX_ITERATIONS: usize = 500;

type Params = SVector<f64, N_PARAMS>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    /// T_M or T₁ ended on a bound.
    DecayAtBound,
    KAtBound,
    NuAtBound,
    /// k is not significantly above zero; ν, λ and φ carry no information.
    ModulationUnidentified,
}

impl FitFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            FitFlag::DecayAtBound => "decay_at_bound",
            FitFlag::KAtBound => "k_at_bound",
            FitFlag::NuAtBound => "nu_at_bound",
            FitFlag::ModulationUnidentified => "modulation_unidentified",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub kind: TraceKind,
    pub y0: f64,
    pub a: f64,
    /// T_M for a two-pulse trace, T₁ for a three-pulse trace, μs.
    pub t_decay: f64,
    pub k: f64,
    pub lambda: f64,
    pub nu: f64,
    pub phi: f64,
    /// Standard errors in the order of [`PARAM_NAMES`].
    pub errors: [f64; N_PARAMS],
    pub residual_norm: f64,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
}

impl DecayFit {
    /// A starting point or reference parameter set; errors and diagnostics are zero.
    #[allow(clippy::too_many_arguments)]
    pub fn from_params(kind: TraceKind, y0: f64, a: f64, t_decay: f64, k: f64, lambda: f64, nu: f64, phi: f64) -> Self {
        Self {
            kind,
            y0,
            a,
            t_decay,
            k,
            lambda,
            nu,
            phi,
            errors: [0.0; N_PARAMS],
            residual_norm: 0.0,
            iterations: 0,
            flags: Vec::new(),
        }
    }

    pub fn params(&self) -> [f64; N_PARAMS] {
        [self.y0, self.a, self.t_decay, self.k, self.lambda, self.nu, self.phi]
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        model(self.kind, &Params::from(self.params()), t)
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn csv_header() -> String {
        let mut cols = vec!["field_mT".to_string(), "kind".to_string()];
        for name in PARAM_NAMES {
            cols.push(name.to_string());
            cols.push(format!("{name}_err"));
        }
        cols.extend(["residual_norm".to_string(), "flags".to_string()]);
        cols.join(",")
    }

    pub fn csv_row(&self, field: f64) -> String {
        let mut cols = vec![format!("{field}"), self.kind.to_string()];
        for (v, e) in self.params().iter().zip(&self.errors) {
            cols.push(format!("{v:.10e}"));
            cols.push(format!("{e:.4e}"));
        }
        cols.push(format!("{:.6e}", self.residual_norm));
        cols.push(self.flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join(";"));
        cols.join(",")
    }
}

/// Synthesize the model on the given times.
pub fn synthesize(params: &DecayFit, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| params.evaluate(t)).collect()
}

fn model(kind: TraceKind, p: &Params, t: f64) -> f64 {
    let envelope = (-kind.rate_factor() * t / p[2]).exp();
    let phase = TAU * p[5] * t + p[6];
    p[0] + p[1] * envelope * (1.0 + p[3] * (-p[4] * t).exp() * phase.cos())
}

fn residuals_and_jacobian(kind: TraceKind, p: &Params, times: &[f64], y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = times.len();
    let c = kind.rate_factor();
    let mut r = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, N_PARAMS);
    for (i, (&t, &yi)) in times.iter().zip(y).enumerate() {
        let e = (-c * t / p[2]).exp();
        let m = (-p[4] * t).exp();
        let phase = TAU * p[5] * t + p[6];
        let (sn, cs) = phase.sin_cos();
        let bracket = 1.0 + p[3] * m * cs;
        r[i] = p[0] + p[1] * e * bracket - yi;
        jac[(i, 0)] = 1.0;
        jac[(i, 1)] = e * bracket;
        jac[(i, 2)] = p[1] * e * c * t / (p[2] * p[2]) * bracket;
        jac[(i, 3)] = p[1] * e * m * cs;
        jac[(i, 4)] = -p[1] * e * p[3] * t * m * cs;
        jac[(i, 5)] = -p[1] * e * p[3] * m * sn * TAU * t;
        jac[(i, 6)] = -p[1] * e * p[3] * m * sn;
    }
    (r, jac)
}

fn cost(kind: TraceKind, p: &Params, times: &[f64], y: &[f64]) -> f64 {
    0.5 * times.iter().zip(y).map(|(&t, &yi)| (model(kind, p, t) - yi).powi(2)).sum::<f64>()
}

struct Bounds {
    lo: Params,
    hi: Params,
}

impl Bounds {
    fn for_trace(trace: &DecayTrace) -> Self {
        let nyquist = 0.5 / trace.typical_step();
        let inf = f64::INFINITY;
        Self {
            lo: Params::from([-inf, -inf, T_DECAY_BOUNDS.0, K_BOUNDS.0, 0.0, 0.0, -inf]),
            hi: Params::from([inf, inf, T_DECAY_BOUNDS.1, K_BOUNDS.1, inf, nyquist, inf]),
        }
    }

    fn clamp(&self, p: &Params) -> Params {
        Params::from_fn(|i, _| p[i].clamp(self.lo[i], self.hi[i]))
    }

    fn at_bound(&self, p: &Params, i: usize) -> bool {
        let tol = 1e-9 * p[i].abs().max(1e-12);
        (p[i] - self.lo[i]).abs() <= tol || (p[i] - self.hi[i]).abs() <= tol
    }
}

struct LmOutcome {
    p: Params,
    cost: f64,
    iterations: usize,
    converged: bool,
}

/// Projected Levenberg–Marquardt with Marquardt diagonal scaling.
fn levenberg_marquardt(kind: TraceKind, p0: Params, bounds: &Bounds, times: &[f64], y: &[f64]) -> LmOutcome {
    let scale = y.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut p = bounds.clamp(&p0);
    let mut c = cost(kind, &p, times, y);
    let mut mu = 1e-3;
    for iter in 1..=MAX_ITERATIONS {
        if c <= 1e-30 * scale {
            return LmOutcome { p, cost: c, iterations: iter, converged: true };
        }
        let (r, jac) = residuals_and_jacobian(kind, &p, times, y);
        let jtj: SMatrix<f64, N_PARAMS, N_PARAMS> = SMatrix::from_fn(|a, b| jac.column(a).dot(&jac.column(b)));
        let grad: Params = Params::from_fn(|a, _| jac.column(a).dot(&r));
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while mu < 1e16 {
            let mut m = jtj;
            for a in 0..N_PARAMS {
                m[(a, a)] += mu * jtj[(a, a)].max(diag_floor);
            }
            let Some(chol) = m.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let trial = bounds.clamp(&(p - chol.solve(&grad)));
            let ct = cost(kind, &trial, times, y);
            if ct < c {
                let small_step = (0..N_PARAMS).all(|a| (trial[a] - p[a]).abs() <= 1e-12 * (p[a].abs() + 1e-9));
                let small_gain = c - ct <= 1e-15 * c;
                p = trial;
                c = ct;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if small_step || small_gain {
                    return LmOutcome { p, cost: c, iterations: iter, converged: true };
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent direction at working precision: a stationary point
            return LmOutcome { p, cost: c, iterations: iter, converged: true };
        }
    }
    LmOutcome { p, cost: c, iterations: MAX_ITERATIONS, converged: false }
}

/// Dominant non-DC frequency of `signal` sampled at `dt`, via a zero-padded DFT.
fn dominant_frequency(signal: &[f64], dt: f64) -> Option<f64> {
    let n = (signal.len() * 8).next_power_of_two();
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[..=n / 2].iter().map(|z| z.norm()).collect();
    // skip the DC lobe
    let mut start = 1;
    while start + 1 < mags.len() && mags[start + 1] < mags[start] {
        start += 1;
    }
    let (best, &peak) = mags.iter().enumerate().skip(start).max_by(|a, b| a.1.total_cmp(b.1))?;
    (peak > 0.0).then(|| best as f64 / (n as f64 * dt))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Automatic starting values.
pub fn initial_guess(trace: &DecayTrace) -> DecayFit {
    let t = trace.times();
    let y = trace.amplitude();
    let n = t.len();
    let c = trace.kind.rate_factor();
    let edge = (n / 10).max(2);
    let y0 = mean(&y[n - edge..]);
    let head = mean(&y[..(n / 20).max(2)]);
    let mut a = head - y0;
    if a == 0.0 {
        a = 1.0;
    }

    // log-linear regression on a moving-average envelope
    let w = (n / 16).max(1);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(w);
            let hi = (i + w + 1).min(n);
            mean(&y[lo..hi])
        })
        .collect();
    let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let v = (smooth[i] - y0) / a;
        if v > 0.05 {
            let l = v.ln();
            sx += t[i];
            sy += l;
            sxx += t[i] * t[i];
            sxy += t[i] * l;
            cnt += 1.0;
        }
    }
    let slope = if cnt >= 3.0 { (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx) } else { f64::NAN };
    let t_decay = if slope.is_finite() && slope < 0.0 { -c / slope } else { trace.span() / 3.0 };
    let t_decay = t_decay.clamp(T_DECAY_BOUNDS.0, T_DECAY_BOUNDS.1);

    let envelope: Vec<f64> = t.iter().map(|&ti| a * (-c * ti / t_decay).exp()).collect();
    let relative: Vec<f64> = (0..n)
        .filter(|&i| envelope[i].abs() > 0.1 * a.abs())
        .map(|i| (y[i] - y0 - envelope[i]) / envelope[i])
        .collect();
    let span = trace.span();
    let (k, nu) = if relative.len() >= 8 {
        let m = mean(&relative);
        let rms = (relative.iter().map(|v| (v - m).powi(2)).sum::<f64>() / relative.len() as f64).sqrt();
        let nu = dominant_frequency(&relative, trace.typical_step()).unwrap_or(1.0 / span);
        ((rms * std::f64::consts::SQRT_2).clamp(K_BOUNDS.0, K_BOUNDS.1), nu)
    } else {
        (0.0, 1.0 / span)
    };
    DecayFit::from_params(trace.kind, y0, a, t_decay, k, 1.0 / (5.0 * span), nu, 0.0)
}

fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Standard errors from the linearized covariance σ²·(JᵀJ)⁺.
fn standard_errors(jac: &DMatrix<f64>, cost: f64) -> [f64; N_PARAMS] {
    let dof = (jac.nrows() as f64 - N_PARAMS as f64).max(1.0);
    let sigma2 = 2.0 * cost / dof;
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let mut out = [0.0; N_PARAMS];
    for (a, slot) in out.iter_mut().enumerate() {
        let mut var = 0.0;
        for (s_idx, &s) in svd.singular_values.iter().enumerate() {
            if s > 1e-12 * smax {
                var += (v_t[(s_idx, a)] / s).powi(2);
            }
        }
        *slot = (sigma2 * var).sqrt();
    }
    out
}

/// Fit a decay trace. Without `init`, starts from [`initial_guess`] with four
/// starting phases and keeps the lowest-cost result.
pub fn fit_decay(trace: &DecayTrace, init: Option<&DecayFit>) -> Result<DecayFit> {
    let bounds = Bounds::for_trace(trace);
    let t = trace.times();
    let y = trace.amplitude();
    let starts: Vec<Params> = match init {
        Some(fit) => vec![Params::from(fit.params())],
        None => {
            let g = initial_guess(trace).params();
            (0..4).map(|q| {
                let mut p = Params::from(g);
                p[6] = q as f64 * PI / 2.0;
                p
            })
            .collect()
        }
    };
    let mut best: Option<LmOutcome> = None;
    let mut best_failed: Option<LmOutcome> = None;
    for p0 in starts {
        let out = levenberg_marquardt(trace.kind, p0, &bounds, t, y);
        let slot = if out.converged { &mut best } else { &mut best_failed };
        if slot.as_ref().is_none_or(|b| out.cost < b.cost) {
            *slot = Some(out);
        }
    }
    let Some(out) = best else {
        let failed = best_failed.expect("at least one start");
        return Err(Error::NotConverged {
            iterations: failed.iterations,
            best: failed.p.iter().copied().collect(),
            diagnostic: format!("cost {:.3e} still decreasing at the iteration cap", failed.cost),
        });
    };
    let mut p = out.p;
    let (_, jac) = residuals_and_jacobian(trace.kind, &p, t, y);
    let errors = standard_errors(&jac, out.cost);
    let mut flags = Vec::new();
    if bounds.at_bound(&p, 2) {
        flags.push(FitFlag::DecayAtBound);
    }
    if p[3] >= K_BOUNDS.1 * (1.0 - 1e-9) {
        flags.push(FitFlag::KAtBound);
    }
    if p[3] <= 2.0 * errors[3] || p[3] <= 1e-9 {
        flags.push(FitFlag::ModulationUnidentified);
    } else if bounds.at_bound(&p, 5) {
        flags.push(FitFlag::NuAtBound);
    }
    p[6] = wrap_phase(p[6]);
    Ok(DecayFit {
        kind: trace.kind,
        y0: p[0],
        a: p[1],
        t_decay: p[2],
        k: p[3],
        lambda: p[4],
        nu: p[5],
        phi: p[6],
        errors,
        residual_norm: (2.0 * out.cost).sqrt(),
        iterations: out.iterations,
        flags,
    })
}

/// Fit several traces in parallel; results are in input order.
pub fn fit_many(traces: &[DecayTrace]) -> Vec<Result<DecayFit>> {
    traces.par_iter().map(|tr| fit_decay(tr, None)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub field: f64,
    pub t_decay: f64,
    pub t_decay_err: f64,
    pub a: f64,
    pub a_err: f64,
    pub nu: f64,
    pub nu_err: f64,
}

/// Per-field T, A and ν, sorted by field. Values are passed through unchanged.
pub fn field_sweep_summary(fits: &[(f64, DecayFit)]) -> Result<Vec<SweepRow>> {
    if fits.len() < 2 {
        return Err(Error::InvalidParameter { name: "fits", reason: format!("need at least 2 fields, got {}", fits.len()) });
    }
    let mut rows: Vec<SweepRow> = fits
        .iter()
        .map(|(field, f)| SweepRow {
            field: *field,
            t_decay: f.t_decay,
            t_decay_err: f.errors[2],
            a: f.a,
            a_err: f.errors[1],
            nu: f.nu,
            nu_err: f.errors[5],
        })
        .collect();
    rows.sort_by(|a, b| a.field.total_cmp(&b.field));
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("field_mT,T_us,T_err_us,A,A_err,nu_MHz,nu_err_MHz\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.9e},{:.3e},{:.9e},{:.3e},{:.9e},{:.3e}\n",
            r.field, r.t_decay, r.t_decay_err, r.a, r.a_err, r.nu, r.nu_err
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn reference(kind: TraceKind) -> DecayFit {
        match kind {
            TraceKind::TwoPulse => DecayFit::from_params(kind, 0.0, 1.0, 1.0, 0.3, 0.5, 2.5, 0.2),
            TraceKind::ThreePulse => DecayFit::from_params(kind, 0.0, 1.0, 2.0, 0.3, 0.5, 2.5, 0.2),
        }
    }

    fn times(kind: TraceKind) -> Vec<f64> {
        let (t0, dt) = match kind {
            TraceKind::TwoPulse => (0.08, 0.012),
            TraceKind::ThreePulse => (0.1, 0.03),
        };
        (0..256).map(|i| t0 + dt * i as f64).collect()
    }

    fn trace(p: &DecayFit, noise: f64, seed: u64) -> DecayTrace {
        let t = times(p.kind);
        let mut y = synthesize(p, &t);
        if noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = Normal::new(0.0, noise).unwrap();
            y.iter_mut().for_each(|v| *v += dist.sample(&mut rng));
        }
        DecayTrace::new(t, y, p.kind, 350.0).unwrap()
    }

    fn assert_recovered(fit: &DecayFit, truth: &DecayFit, rel: f64) {
        for (name, (got, want)) in PARAM_NAMES.iter().zip(fit.params().iter().zip(truth.params())) {
            let tol = rel * want.abs().max(1.0);
            assert!((got - want).abs() <= tol, "{name}: got {got}, want {want}");
        }
    }

    #[test]
    fn noiseless_round_trip() {
        for kind in [TraceKind::TwoPulse, TraceKind::ThreePulse] {
            let truth = reference(kind);
            let fit = fit_decay(&trace(&truth, 0.0, 0), None).unwrap();
            assert_recovered(&fit, &truth, 1e-6);
            assert!(fit.flags.is_empty(), "{:?}", fit.flags);
            assert!(fit.errors.iter().all(|e| e.is_finite()));
        }
    }

    #[test]
    fn noisy_recovery_rate() {
        for kind in [TraceKind::TwoPulse, TraceKind::ThreePulse] {
            let truth = reference(kind);
            let hits = (0..100u64)
                .into_par_iter()
                .filter(|&seed| {
                    fit_decay(&trace(&truth, 0.01, seed), None)
                        .map(|f| (f.t_decay / truth.t_decay - 1.0).abs() < 0.05)
                        .unwrap_or(false)
                })
                .count();
            assert!(hits >= 95, "{kind}: {hits}/100");
        }
    }

    #[test]
    fn unmodulated_trace_is_flagged() {
        let truth = DecayFit::from_params(TraceKind::TwoPulse, 0.02, 1.0, 0.8, 0.0, 0.5, 2.5, 0.0);
        let fit = fit_decay(&trace(&truth, 0.0, 0), None).unwrap();
        assert!(fit.flags.contains(&FitFlag::ModulationUnidentified));
        assert!((fit.t_decay - 0.8).abs() < 1e-6);
        assert!(fit.errors.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn explicit_init_is_used() {
        let truth = reference(TraceKind::TwoPulse);
        let mut init = truth.clone();
        init.t_decay *= 1.1;
        init.nu *= 1.02;
        let fit = fit_decay(&trace(&truth, 0.0, 0), Some(&init)).unwrap();
        assert_recovered(&fit, &truth, 1e-6);
    }

    #[test]
    fn decay_bound_is_flagged() {
        // decays faster than the smallest allowed T, so T runs to the lower bound
        let t: Vec<f64> = (0..64).map(|i| 0.01 * i as f64).collect();
        let y = t.iter().map(|x| (-2.0 * x / 1e-4).exp()).collect();
        let tr = DecayTrace::new(t, y, TraceKind::TwoPulse, 300.0).unwrap();
        let fit = fit_decay(&tr, None).unwrap();
        assert!(fit.flags.contains(&FitFlag::DecayAtBound), "{fit:?}");
        assert_eq!(fit.t_decay, T_DECAY_BOUNDS.0);
    }

    #[test]
    fn sweep_summary() {
        let fits: Vec<(f64, DecayFit)> = [600.0, 300.0, 450.0]
            .iter()
            .map(|&b| {
                let mut f = reference(TraceKind::TwoPulse);
                f.nu = 2.0 * 3.0777 * b / 1000.0;
                (b, f)
            })
            .collect();
        let rows = field_sweep_summary(&fits).unwrap();
        assert_eq!(rows.iter().map(|r| r.field).collect::<Vec<_>>(), vec![300.0, 450.0, 600.0]);
        assert!(rows.iter().all(|r| r.t_decay == 1.0));
        let slope = (rows[2].nu - rows[0].nu) / 300.0;
        assert!((rows[1].nu - (rows[0].nu + 150.0 * slope)).abs() < 1e-12);
        assert!(field_sweep_summary(&fits[..1]).is_err());
        let csv = sweep_to_csv(&rows, &[]);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn csv_row_shape() {
        let f = reference(TraceKind::TwoPulse);
        let header_cols = DecayFit::csv_header().split(',').count();
        assert_eq!(f.csv_row(300.0).split(',').count(), header_cols);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip_within_bounds(
            t_m in 0.5f64..2.0,
            k in 0.1f64..0.6,
            lambda in 0.1f64..1.0,
            nu in 1.5f64..6.0,
            phi in -1.0f64..1.0,
            y0 in -0.1f64..0.1,
        ) {
            let truth = DecayFit::from_params(TraceKind::TwoPulse, y0, 1.0, t_m, k, lambda, nu, phi);
            let fit = fit_decay(&trace(&truth, 0.0, 0), None).unwrap();
            for (got, want) in fit.params().iter().zip(truth.params()) {
                prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "got {:?}", fit.params());
            }
        }
    }
}
