//! Continuum counterpart of the agent system:
//!
//! ```text
//! ρᴴ_t + ∇·(ρᴴ u) = 0
//! ρᵀ_t + ∇·(ρᵀ vᵀᴴ) = D ∇²ρᵀ,   vᵀᴴ = f ∗ ρᴴ
//! ```
//!
//! integrated with classical RK4 and spectral derivatives. Used to check the
//! exponential convergence of the herder error under feedback and of the
//! target error under the feed-forward drift.

use crate::error::{ensure, Error, Result};
use crate::feasibility::stability_margin;
use crate::grid::{circular_convolve, divergence, gradient, laplacian, poisson_solve, KernelSamples, ScalarField, VectorField};

/// Minima below `-NEGATIVITY_TOLERANCE · max` fail a run.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumState {
    pub herders: ScalarField,
    pub targets: ScalarField,
    pub time: f64,
}

impl ContinuumState {
    pub fn new(herders: ScalarField, targets: ScalarField) -> Result<Self> {
        herders.grid().check(targets.grid())?;
        Ok(ContinuumState { herders, targets, time: 0.0 })
    }
}

/// How the herder density evolves.
#[derive(Debug, Clone)]
pub enum HerderLaw {
    /// `ρᴴ` does not move.
    Frozen,
    /// Prescribed velocity field `u`: flux `ρᴴ u`.
    Velocity(VectorField),
    /// Closed loop toward `desired` with gain `K`. The flux is the analytic
    /// `w = ∇ψ`, `∇²ψ = −K(e − ē)`, so that `eᴴ_t = −K(eᴴ − ēᴴ)`.
    Feedback { desired: ScalarField, gain: f64 },
}

/// Herder and target dynamics on a fixed grid.
#[derive(Debug, Clone)]
pub struct ContinuumModel {
    kernel: KernelSamples,
    diffusion: f64,
}

fn check_finite_nonnegative(f: &ScalarField) -> Result<()> {
    let (min, max) = (f.min(), f.max());
    if !min.is_finite() || !max.is_finite() || min < -NEGATIVITY_TOLERANCE * max.max(0.0) {
        return Err(Error::NegativeDensity { min, max });
    }
    Ok(())
}

fn lincomb(base: &ScalarField, c: f64, d: &ScalarField) -> Result<ScalarField> {
    base.zip_with(d, |a, b| a + c * b)
}

/// Largest stable step for diffusion `D` and transport speed `speed`:
/// `min(h²/(4D), h/(2·speed)) / 2`; infinite if both vanish.
pub fn stability_bound(step: f64, diffusion: f64, speed: f64) -> f64 {
    let mut bound = f64::INFINITY;
    if diffusion > 0.0 {
        bound = bound.min(0.5 * step * step / (4.0 * diffusion));
    }
    if speed > 0.0 {
        bound = bound.min(0.5 * step / (2.0 * speed));
    }
    bound
}

impl ContinuumModel {
    pub fn new(kernel: KernelSamples, diffusion: f64) -> Result<Self> {
        ensure(diffusion.is_finite() && diffusion >= 0.0, "diffusion", || {
            format!("must be nonnegative, got {diffusion}")
        })?;
        Ok(ContinuumModel { kernel, diffusion })
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn kernel(&self) -> &KernelSamples {
        &self.kernel
    }

    /// `vᵀᴴ = f ∗ ρᴴ`.
    pub fn target_drift(&self, herders: &ScalarField) -> Result<VectorField> {
        circular_convolve(&self.kernel, herders)
    }

    fn herder_rate(&self, herders: &ScalarField, law: &HerderLaw) -> Result<ScalarField> {
        Ok(match law {
            HerderLaw::Frozen => ScalarField::zeros(herders.grid()),
            HerderLaw::Velocity(u) => divergence(&u.times(herders)?).scaled(-1.0),
            HerderLaw::Feedback { desired, gain } => {
                let psi = poisson_solve(&desired.sub(herders)?, *gain).potential;
                divergence(&gradient(&psi)).scaled(-1.0)
            }
        })
    }

    fn target_rate(&self, herders: &ScalarField, targets: &ScalarField) -> Result<ScalarField> {
        let v = self.target_drift(herders)?;
        let transport = divergence(&v.times(targets)?);
        laplacian(targets).scaled(self.diffusion).sub(&transport)
    }

    fn rates(&self, herders: &ScalarField, targets: &ScalarField, law: &HerderLaw) -> Result<(ScalarField, ScalarField)> {
        Ok((self.herder_rate(herders, law)?, self.target_rate(herders, targets)?))
    }

    /// Largest admissible step from the current state.
    pub fn max_stable_dt(&self, state: &ContinuumState, law: &HerderLaw) -> Result<f64> {
        let grid = state.herders.grid();
        let mut speed = self.target_drift(&state.herders)?.max_norm();
        let mut bound = f64::INFINITY;
        match law {
            HerderLaw::Frozen => {}
            HerderLaw::Velocity(u) => speed = speed.max(u.max_norm()),
            // the closed loop is linear with rate K; RK4 stays stable well
            // beyond K·dt = 1
            HerderLaw::Feedback { gain, .. } => bound = 1.0 / gain,
        }
        Ok(bound.min(stability_bound(grid.step(), self.diffusion, speed)))
    }

    /// One RK4 step. Fails if `dt` exceeds the stability bound or a density
    /// turns negative beyond the ringing tolerance.
    pub fn step(&self, state: &ContinuumState, law: &HerderLaw, dt: f64) -> Result<ContinuumState> {
        ensure(dt.is_finite() && dt > 0.0, "dt", || format!("must be positive, got {dt}"))?;
        let bound = self.max_stable_dt(state, law)?;
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
        let (h0, t0) = (&state.herders, &state.targets);
        let (k1h, k1t) = self.rates(h0, t0, law)?;
        let (k2h, k2t) = self.rates(&lincomb(h0, dt / 2.0, &k1h)?, &lincomb(t0, dt / 2.0, &k1t)?, law)?;
        let (k3h, k3t) = self.rates(&lincomb(h0, dt / 2.0, &k2h)?, &lincomb(t0, dt / 2.0, &k2t)?, law)?;
        let (k4h, k4t) = self.rates(&lincomb(h0, dt, &k3h)?, &lincomb(t0, dt, &k3t)?, law)?;
        let combine = |y: &ScalarField, k: [&ScalarField; 4]| -> Result<ScalarField> {
            let mut out = y.clone();
            let w = [1.0, 2.0, 2.0, 1.0];
            for (ki, wi) in k.iter().zip(w) {
                out = lincomb(&out, dt * wi / 6.0, ki)?;
            }
            Ok(out)
        };
        let herders = combine(h0, [&k1h, &k2h, &k3h, &k4h])?;
        let targets = combine(t0, [&k1t, &k2t, &k3t, &k4t])?;
        check_finite_nonnegative(&herders)?;
        check_finite_nonnegative(&targets)?;
        Ok(ContinuumState {
            herders,
            targets,
            time: state.time + dt,
        })
    }
}

/// One explicit step with a prescribed herder velocity.
pub fn continuum_step(
    state: &ContinuumState,
    u: &VectorField,
    kernel: &KernelSamples,
    diffusion: f64,
    dt: f64,
) -> Result<ContinuumState> {
    ContinuumModel::new(kernel.clone(), diffusion)?.step(state, &HerderLaw::Velocity(u.clone()), dt)
}

/// Sampling plan for a verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub horizon: f64,
    pub sample_interval: f64,
    /// Upper limit on the step; the stability bound applies regardless.
    pub max_dt: Option<f64>,
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        ensure(self.horizon >= 0.0 && self.horizon.is_finite(), "horizon", || {
            format!("must be nonnegative, got {}", self.horizon)
        })?;
        ensure(self.sample_interval > 0.0, "sample interval", || {
            format!("must be positive, got {}", self.sample_interval)
        })
    }

    /// `(dt, steps per sample, samples)` with `dt` dividing the interval.
    fn plan(&self, bound: f64) -> (f64, u64, u64) {
        let cap = self.max_dt.unwrap_or(f64::INFINITY).min(0.9 * bound);
        let per = (self.sample_interval / cap).ceil().max(1.0) as u64;
        let samples = (self.horizon / self.sample_interval).round() as u64;
        (self.sample_interval / per as f64, per, samples)
    }
}

/// One line of a decay report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRecord {
    pub time: f64,
    /// `‖eᴴ‖₂`, NaN when the herders are not tracked.
    pub herder_error_l2: f64,
    /// `‖eᵀ‖₂`, NaN when the targets are not tracked.
    pub target_error_l2: f64,
    /// Envelope for `‖eᵀ‖₂`, i.e. `‖eᵀ(0)‖₂ e^{−Kᶠᶠ t/2}`; NaN if none applies.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub records: Vec<DecayRecord>,
    /// Rate the theory predicts: `K` for herders, `Kᶠᶠ` for targets.
    pub expected_rate: f64,
    /// Least-squares rate of `log ‖e‖₂`; for targets, of `log ‖eᵀ‖₂²`.
    pub fitted_rate: Option<f64>,
    /// Whether the envelope is guaranteed (`‖G‖∞ < 2`); always true for the
    /// herder loop.
    pub certified: bool,
    /// `Some` only when certified and an envelope was checked.
    pub bound_satisfied: Option<bool>,
    /// Largest relative mass drift over both species.
    pub mass_drift: f64,
    pub dt: f64,
    pub final_state: ContinuumState,
}

/// Slope of the least-squares line through `(t, log y)`, negated. Points
/// below `floor · y₀` are treated as converged and ignored.
pub fn fit_decay_rate(samples: &[(f64, f64)], floor: f64) -> Option<f64> {
    let y0 = samples.first()?.1;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, y)| *y > 0.0 && *y > floor * y0)
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    (sxx > 0.0).then(|| -sxy / sxx)
}

fn relative_drift(now: f64, start: f64) -> f64 {
    if start == 0.0 {
        now.abs()
    } else {
        ((now - start) / start).abs()
    }
}

fn integrate(
    model: &ContinuumModel,
    start: ContinuumState,
    law: &HerderLaw,
    schedule: &Schedule,
    mut record: impl FnMut(&ContinuumState) -> Result<DecayRecord>,
) -> Result<(Vec<DecayRecord>, f64, f64, ContinuumState)> {
    schedule.validate()?;
    let (dt, per, samples) = schedule.plan(model.max_stable_dt(&start, law)?);
    let masses = (start.herders.mass(), start.targets.mass());
    let mut drift: f64 = 0.0;
    let mut state = start;
    let mut records = vec![record(&state)?];
    for s in 1..=samples {
        for _ in 0..per {
            state = model.step(&state, law, dt)?;
        }
        // avoid accumulating rounding in the sample times
        state.time = s as f64 * schedule.sample_interval;
        drift = drift
            .max(relative_drift(state.herders.mass(), masses.0))
            .max(relative_drift(state.targets.mass(), masses.1));
        records.push(record(&state)?);
    }
    Ok((records, drift, dt, state))
}

/// Runs the herder closed loop from `initial` toward `desired` and fits the
/// decay rate of `‖eᴴ‖₂`. The masses of both densities must agree.
pub fn verify_herder_convergence(
    initial: &ScalarField,
    desired: &ScalarField,
    gain: f64,
    schedule: &Schedule,
) -> Result<DecayReport> {
    ensure(gain.is_finite() && gain > 0.0, "gain", || format!("must be positive, got {gain}"))?;
    crate::controller::herder_error(desired, initial)?;
    let grid = initial.grid();
    // targets are absent, so the kernel never contributes
    let model = ContinuumModel::new(KernelSamples::from_samples(grid, vec![0.0; grid.len()], vec![0.0; grid.len()])?, 0.0)?;
    let law = HerderLaw::Feedback {
        desired: desired.clone(),
        gain,
    };
    let start = ContinuumState::new(initial.clone(), ScalarField::zeros(grid))?;
    let (records, drift, dt, final_state) = integrate(&model, start, &law, schedule, |s| {
        Ok(DecayRecord {
            time: s.time,
            herder_error_l2: desired.sub(&s.herders)?.l2_norm(),
            target_error_l2: f64::NAN,
            bound: f64::NAN,
        })
    })?;
    let series: Vec<_> = records.iter().map(|r| (r.time, r.herder_error_l2)).collect();
    Ok(DecayReport {
        fitted_rate: fit_decay_rate(&series, 1e-9),
        records,
        expected_rate: gain,
        certified: true,
        bound_satisfied: None,
        mass_drift: drift,
        dt,
        final_state,
    })
}

/// Runs the target equation with the herders frozen at `desired_herders` and
/// compares `‖eᵀ‖₂²` with `‖eᵀ(0)‖₂² e^{−Kᶠᶠ t}`.
///
/// The envelope is only checked when `‖G‖∞ < 2`; otherwise the observed
/// decay is reported without a verdict. Samples are allowed to exceed the
/// envelope by `slack` relative, to absorb discretization of `ρ̄ᵀ`.
pub fn verify_target_convergence(
    model: &ContinuumModel,
    initial_targets: &ScalarField,
    desired_targets: &ScalarField,
    desired_herders: &ScalarField,
    schedule: &Schedule,
    slack: f64,
) -> Result<DecayReport> {
    let margin = stability_margin(desired_targets, model.diffusion())?;
    let start = ContinuumState::new(desired_herders.clone(), initial_targets.clone())?;
    let e0 = desired_targets.sub(initial_targets)?.l2_norm();
    let rate = margin.rate;
    let (records, drift, dt, final_state) = integrate(model, start, &HerderLaw::Frozen, schedule, |s| {
        Ok(DecayRecord {
            time: s.time,
            herder_error_l2: desired_herders.sub(&s.herders)?.l2_norm(),
            target_error_l2: desired_targets.sub(&s.targets)?.l2_norm(),
            bound: if margin.certified { e0 * (-rate * s.time / 2.0).exp() } else { f64::NAN },
        })
    })?;
    let bound_satisfied = margin.certified.then(|| {
        records
            .iter()
            .all(|r| r.target_error_l2.powi(2) <= r.bound.powi(2) * (1.0 + slack) + 1e-300)
    });
    let series: Vec<_> = records.iter().map(|r| (r.time, r.target_error_l2.powi(2))).collect();
    Ok(DecayReport {
        fitted_rate: fit_decay_rate(&series, 1e-12),
        records,
        expected_rate: rate,
        certified: margin.certified,
        bound_satisfied,
        mass_drift: drift,
        dt,
        final_state,
    })
}

/// Herders under feedback and targets under the resulting drift, together.
/// No envelope applies while the herders are still converging.
pub fn run_coupled(
    model: &ContinuumModel,
    start: ContinuumState,
    desired_herders: &ScalarField,
    desired_targets: &ScalarField,
    gain: f64,
    schedule: &Schedule,
) -> Result<DecayReport> {
    let law = HerderLaw::Feedback {
        desired: desired_herders.clone(),
        gain,
    };
    let (records, drift, dt, final_state) = integrate(model, start, &law, schedule, |s| {
        Ok(DecayRecord {
            time: s.time,
            herder_error_l2: desired_herders.sub(&s.herders)?.l2_norm(),
            target_error_l2: desired_targets.sub(&s.targets)?.l2_norm(),
            bound: f64::NAN,
        })
    })?;
    let series: Vec<_> = records.iter().map(|r| (r.time, r.target_error_l2.powi(2))).collect();
    Ok(DecayReport {
        fitted_rate: fit_decay_rate(&series, 1e-12),
        records,
        expected_rate: f64::NAN,
        certified: false,
        bound_satisfied: None,
        mass_drift: drift,
        dt,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::kernel::KernelParams;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, TAU};

    fn model(m: usize, d: f64) -> ContinuumModel {
        let g = Grid::new(m).unwrap();
        ContinuumModel::new(KernelSamples::new(&g, &KernelParams::default()), d).unwrap()
    }

    #[test]
    fn uniform_state_is_a_fixed_point() {
        let m = model(16, 0.01);
        let g = m.kernel().grid().clone();
        let s = ContinuumState::new(ScalarField::constant(&g, 0.3), ScalarField::constant(&g, 0.7)).unwrap();
        let next = m.step(&s, &HerderLaw::Velocity(VectorField::zeros(&g)), 0.01).unwrap();
        for (a, b) in next.targets.values().iter().zip(s.targets.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert_eq!(next.herders, s.herders);
        assert_abs_diff_eq!(next.time, 0.01);
    }

    #[test]
    fn no_herders_gives_the_heat_equation() {
        let d = 0.05;
        let m = model(32, d);
        let g = m.kernel().grid().clone();
        let eps = 0.3;
        let targets = ScalarField::from_fn(&g, |p| 1.0 + eps * (p.x1() + 2.0 * p.x2()).cos());
        let mut s = ContinuumState::new(ScalarField::zeros(&g), targets).unwrap();
        // one diffusion time of the (1, 2) mode
        let k2 = 5.0;
        let horizon = 1.0 / (d * k2);
        let n = 400;
        let dt = horizon / n as f64;
        for _ in 0..n {
            s = m.step(&s, &HerderLaw::Frozen, dt).unwrap();
        }
        let amp = s.targets.spectrum().coeff(1, 2).norm() * 2.0;
        let expect = eps * (-d * k2 * horizon).exp();
        assert!((amp / expect - 1.0).abs() < 0.01, "ratio {}", amp / expect);
    }

    #[test]
    fn step_beyond_the_bound_is_rejected() {
        let m = model(32, 0.05);
        let g = m.kernel().grid().clone();
        let s = ContinuumState::new(ScalarField::zeros(&g), ScalarField::constant(&g, 1.0)).unwrap();
        let bound = m.max_stable_dt(&s, &HerderLaw::Frozen).unwrap();
        assert_abs_diff_eq!(bound, 0.5 * g.step().powi(2) / 0.2, epsilon = 1e-15);
        match m.step(&s, &HerderLaw::Frozen, 2.0 * bound) {
            Err(Error::StepTooLarge { bound: b, .. }) => assert_eq!(b, bound),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn masses_are_conserved_over_many_steps() {
        let m = model(16, 0.01);
        let g = m.kernel().grid().clone();
        let herders = ScalarField::from_fn(&g, |p| 0.2 * (1.0 + 0.5 * p.x1().sin() * p.x2().cos()) / (TAU * TAU));
        let targets = ScalarField::from_fn(&g, |p| 0.8 * (1.0 + 0.3 * (p.x1() - p.x2()).cos()) / (TAU * TAU));
        let u = VectorField::from_fn(&g, |p| [0.1 * p.x2().sin(), 0.1 * p.x1().cos()]);
        let law = HerderLaw::Velocity(u);
        let mut s = ContinuumState::new(herders, targets).unwrap();
        let (mh, mt) = (s.herders.mass(), s.targets.mass());
        let dt = 0.9 * m.max_stable_dt(&s, &law).unwrap().min(0.05);
        for _ in 0..10_000 {
            s = m.step(&s, &law, dt).unwrap();
        }
        assert!(relative_drift(s.herders.mass(), mh) < 1e-6);
        assert!(relative_drift(s.targets.mass(), mt) < 1e-6);
    }

    fn herder_fixture(eps: f64) -> (ScalarField, ScalarField) {
        let g = Grid::new(32).unwrap();
        let desired = ScalarField::from_fn(&g, |p| (1.0 + 0.5 * p.x2().cos()) / (TAU * TAU));
        let initial = desired.zip_with(&ScalarField::from_fn(&g, |p| p.x1().cos()), |a, b| a + eps * b).unwrap();
        (desired, initial)
    }

    #[test]
    fn herder_loop_matches_the_closed_form() {
        for gain in [1.0, 10.0] {
            let eps = 0.01;
            let (desired, initial) = herder_fixture(eps);
            let sched = Schedule { horizon: 3.0 / gain, sample_interval: 0.05 / gain, max_dt: None };
            let r = verify_herder_convergence(&initial, &desired, gain, &sched).unwrap();
            let e0 = eps * (2.0 * PI * PI).sqrt();
            for rec in &r.records {
                let expect = e0 * (-gain * rec.time).exp();
                assert!((rec.herder_error_l2 / expect - 1.0).abs() < 0.05);
            }
            let fitted = r.fitted_rate.unwrap();
            assert!((fitted / gain - 1.0).abs() < 0.05, "fitted {fitted} for K={gain}");
            assert!(r.mass_drift < 1e-12);
        }
    }

    #[test]
    fn herder_rate_does_not_depend_on_amplitude() {
        let sched = Schedule { horizon: 3.0, sample_interval: 0.1, max_dt: None };
        let rate = |eps| {
            let (d, i) = herder_fixture(eps);
            verify_herder_convergence(&i, &d, 1.0, &sched).unwrap().fitted_rate.unwrap()
        };
        let (a, b) = (rate(0.0005), rate(0.01));
        assert!((a / b - 1.0).abs() < 0.01);
    }

    #[test]
    fn herder_equilibrium_stays_put() {
        let (desired, _) = herder_fixture(0.0);
        let sched = Schedule { horizon: 1.0, sample_interval: 0.1, max_dt: None };
        let r = verify_herder_convergence(&desired, &desired, 10.0, &sched).unwrap();
        assert!(r.records.iter().all(|x| x.herder_error_l2 < 1e-14));
        assert!(r.fitted_rate.is_none());
    }

    #[test]
    fn mismatched_masses_are_rejected() {
        let (desired, _) = herder_fixture(0.0);
        let sched = Schedule { horizon: 1.0, sample_interval: 0.1, max_dt: None };
        assert!(matches!(
            verify_herder_convergence(&desired.scaled(2.0), &desired, 1.0, &sched),
            Err(Error::MassMismatch { .. })
        ));
    }

    #[test]
    fn uniform_target_decays_at_least_at_twice_d() {
        let d = 0.05;
        let m = model(16, d);
        let g = m.kernel().grid().clone();
        let desired = ScalarField::constant(&g, 1.0 / (TAU * TAU));
        let initial = desired.zip_with(&ScalarField::from_fn(&g, |p| p.x1().cos() + p.x2().sin()), |a, b| a + 0.005 * b).unwrap();
        let sched = Schedule { horizon: 10.0, sample_interval: 0.1, max_dt: None };
        let r = verify_target_convergence(&m, &initial, &desired, &ScalarField::zeros(&g), &sched, 1e-9).unwrap();
        assert!(r.certified);
        assert_abs_diff_eq!(r.expected_rate, 2.0 * d, epsilon = 1e-12);
        assert!(r.fitted_rate.unwrap() >= 2.0 * d * 0.999);
        assert_eq!(r.bound_satisfied, Some(true));
    }

    #[test]
    fn fit_recovers_a_known_rate() {
        let s: Vec<_> = (0..20).map(|i| (i as f64 * 0.1, 3.0 * (-2.5 * i as f64 * 0.1).exp())).collect();
        assert_abs_diff_eq!(fit_decay_rate(&s, 1e-12).unwrap(), 2.5, epsilon = 1e-12);
        assert!(fit_decay_rate(&s[..1], 1e-12).is_none());
    }
}
