//! Acceptance criteria. Each test prints one PASS/FAIL line per check and
//! fails if any of its checks fail.

mod common;

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use lowthrust::control::{costate_rate, Costates, ControlLaw};
use lowthrust::dynamics::{gve_matrices, state_rate, ControlInput, MeeState, PerturbationConfig, Propulsion};
use lowthrust::fo::{eclipse_free, gamma_tr_from_profile, solve_fo, FoSolution};
use lowthrust::mission::builtin;
use lowthrust::numerics::ode::{integrate, OdeOptions};
use lowthrust::numerics::{solve_root, RootOptions};
use lowthrust::runner::{run, sweep, Command, RunSettings, SweepParam};
use lowthrust::to::solve_to;
use lowthrust::units::{cartesian_to_mee, mee_to_cartesian};
use lowthrust::{ContinuationSchedule, Problem, SolverOptions};
use nalgebra::SVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Default)]
struct Report {
    failures: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures.push(name.to_string());
        }
    }

    fn near(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        self.check(name, (got - want).abs() <= tol, format!("{got:.6} (expected {want} ± {tol})"));
    }

    fn below(&mut self, name: &str, got: f64, limit: f64) {
        self.check(name, got < limit, format!("{got:.3e} (limit {limit:.0e})"));
    }

    fn within(&mut self, name: &str, elapsed: Duration, limit: Duration) {
        self.check(name, elapsed < limit, format!("{:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()));
    }

    fn finish(self) {
        assert!(self.failures.is_empty(), "failed checks: {:?}", self.failures);
    }
}

fn problem(name: &str) -> Problem {
    builtin(name).unwrap().canonicalize().unwrap()
}

fn fo(name: &str) -> (Problem, FoSolution, Duration) {
    let p = problem(name);
    let start = Instant::now();
    let s = solve_fo(&p, &ContinuationSchedule::default(), &SolverOptions::default(), None).unwrap();
    (p, s, start.elapsed())
}

#[test]
fn criterion_1_tempel1_fuel_optimal() {
    let mut r = Report::default();
    let (_, s, elapsed) = fo("tempel1");
    r.near("1 Tempel-1 FO fuel [kg]", s.fuel_kg, 348.26, 1.0);
    r.near("1 Tempel-1 FO Γ_TR", s.gamma_tr, 0.4781, 0.01);
    let k_steps = s.log.iter().filter(|st| st.stage == "k").count();
    let refined = s.log.iter().any(|st| st.refined);
    r.check("1 Tempel-1 FO smoothing steps", k_steps == 5 && !refined, format!("{k_steps} steps, refined: {refined}"));
    r.within("1 Tempel-1 FO wall time", elapsed, Duration::from_secs(30));
    r.finish();
}

#[test]
fn criterion_2_tempel1_time_optimal() {
    let mut r = Report::default();
    let cfg = builtin("tempel1").unwrap();
    let p = cfg.canonicalize().unwrap();
    let s = solve_to(&p, cfg.tof_upper(), &ContinuationSchedule::default(), &SolverOptions::default(), None).unwrap();
    r.near("2 Tempel-1 TO flight time [d]", s.tof_days, 327.15, 1.0);
    r.near("2 Tempel-1 TO fuel [kg]", s.fuel_kg, 576.50, 1.0);
    r.near("2 Tempel-1 TO β_t", s.beta_t, 19.9859, 0.5);
    r.near("2 Tempel-1 TO time-of-flight guess [d]", p.days(s.guess.tof), 307.72, 2.0);
    r.finish();
}

#[test]
fn criterion_3_dionysus() {
    let mut r = Report::default();
    let (_, s, _) = fo("dionysus");
    r.near("3 Dionysus FO fuel [kg]", s.fuel_kg, 1280.70, 3.0);
    r.near("3 Dionysus FO Γ_TR", s.gamma_tr, 0.5389, 0.01);
    let cfg = builtin("dionysus").unwrap();
    let p = cfg.canonicalize().unwrap();
    let t = solve_to(&p, cfg.tof_upper(), &ContinuationSchedule::default(), &SolverOptions::default(), None).unwrap();
    r.near("3 Dionysus TO flight time [d]", t.tof_days, 2401.43, 5.0);
    r.near("3 Dionysus TO β_t", t.beta_t, 1.5928, 0.1);
    r.finish();
}

#[test]
fn criterion_4_gtoc9() {
    let mut r = Report::default();
    let limit = Duration::from_secs(600);
    let opts = SolverOptions::default();
    let schedule = ContinuationSchedule::default();
    let cfg = builtin("gtoc9").unwrap();
    let p = cfg.canonicalize().unwrap();

    let start = Instant::now();
    let j2 = solve_fo(&eclipse_free(&p), &schedule, &opts, None).unwrap();
    r.near("4 GTOC9 FO Keplerian + J2 Δv [m/s]", p.dv_si(j2.dv), 317.58, 2.0);
    r.within("4 GTOC9 FO Keplerian + J2 wall time", start.elapsed(), limit);

    let start = Instant::now();
    match solve_fo(&p, &schedule, &opts, None) {
        Ok(s) => r.near("4 GTOC9 FO with eclipses fuel [kg]", s.fuel_kg, 11.09, 0.5),
        Err(e) => r.check("4 GTOC9 FO with eclipses fuel [kg]", false, e.to_string()),
    }
    r.within("4 GTOC9 FO with eclipses wall time", start.elapsed(), limit);

    let start = Instant::now();
    match solve_to(&p, cfg.tof_upper(), &schedule, &opts, None) {
        Ok(s) => r.near("4 GTOC9 TO full model flight time [d]", s.tof_days, 0.5525, 0.01),
        Err(e) => r.check("4 GTOC9 TO full model flight time [d]", false, e.to_string()),
    }
    r.within("4 GTOC9 TO wall time", start.elapsed(), limit);
    r.finish();
}

fn random_orbit(rng: &mut ChaCha8Rng, p_range: std::ops::Range<f64>) -> MeeState {
    let e = rng.gen_range(0.0..0.9);
    let w: f64 = rng.gen_range(0.0..TAU);
    MeeState {
        p: rng.gen_range(p_range),
        f: e * w.cos(),
        g: e * w.sin(),
        h: rng.gen_range(-1.0..1.0),
        k: rng.gen_range(-1.0..1.0),
        l: rng.gen_range(0.0..TAU),
    }
}

#[test]
fn criterion_5_property_suite() {
    let mut r = Report::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mu = 4.0 * std::f64::consts::PI.powi(2);

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_orbit(&mut rng, 0.5..5.0);
        let back = cartesian_to_mee(&mee_to_cartesian(&x, mu).unwrap(), mu).unwrap();
        let dl = (back.l - x.l + TAU / 2.0).rem_euclid(TAU) - TAU / 2.0;
        let d = [back.p - x.p, back.f - x.f, back.g - x.g, back.h - x.h, back.k - x.k, dl];
        worst = worst.max(d.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / x.p.max(1.0));
    }
    r.below("5 MEE/Cartesian roundtrip error", worst, 1e-11);

    let prop0 = Propulsion { t_max: 0.0, isp_g0: 1.0, m0: 1.0 };
    let kep = PerturbationConfig::keplerian(mu);
    let rhs = |t: f64, y: &SVector<f64, 6>| state_rate(&MeeState::from_array((*y).into()), t, &ControlInput::coast(), &prop0, &kep);
    let mut drift: f64 = 0.0;
    for _ in 0..5 {
        let x = random_orbit(&mut rng, 0.5..5.0);
        let e2 = x.f * x.f + x.g * x.g;
        let period = TAU * (x.p / (1.0 - e2)).powf(1.5) / mu.sqrt();
        let sol = integrate(&rhs, 0.0, SVector::from(x.to_array()), 10.0 * period, &OdeOptions::with_tol(1e-13)).unwrap();
        let energy = |y: &SVector<f64, 6>| mee_to_cartesian(&MeeState::from_array((*y).into()), mu).unwrap().energy(mu);
        let e0 = energy(&sol.y[0]);
        drift = sol.y.iter().fold(drift, |m, y| m.max((energy(y) - e0).abs() / e0.abs()));
    }
    r.below("5 coast energy drift over 10 periods", drift, 1e-10);

    let gtoc = problem("gtoc9");
    for (name, law) in [
        ("EO", ControlLaw::eo()),
        ("SFO", ControlLaw::sfo(0.5, 0.9)),
        ("FO", ControlLaw::fo(0.5)),
        ("TO", ControlLaw::to(2.0)),
    ] {
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let x = random_orbit(&mut rng, 1.15..2.05);
            let lam = Costates::from_array(std::array::from_fn(|_| rng.gen_range(-10.0..10.0)));
            let (m, t) = (rng.gen_range(0.5..1.0), rng.gen_range(0.0..1.0));
            let ad = costate_rate(&x, &lam, m, t, &law, &gtoc.prop, &gtoc.pc).unwrap().to_array();
            let fd = common::fd_costate_rate(&x, &lam, m, t, &law, &gtoc.prop, &gtoc.pc);
            worst = worst.max(common::max_rel_diff(&fd, &ad));
        }
        r.below(&format!("5 {name} costate rate vs central differences"), worst, 1e-5);
    }

    let cfg = builtin("tempel1").unwrap();
    let mut settings = RunSettings::from_config(&cfg).unwrap();
    // dense sampling keeps the quadrature of ∂H/∂m·ṁ well below the limit
    settings.opts.samples = 20_000;
    for (cmd, name) in [(Command::SolveEo, "EO"), (Command::SolveFo, "FO"), (Command::SolveTo, "TO")] {
        let a = run(cmd, &cfg, &settings).unwrap();
        let law = match cmd {
            Command::SolveEo => ControlLaw::eo(),
            Command::SolveFo => ControlLaw::fo(a.summary.gamma_tr.unwrap()),
            Command::SolveTo => ControlLaw::to(a.summary.beta_t.unwrap()),
        };
        let d = common::hamiltonian_drift(&a.problem, &a.trajectory, &law);
        r.below(&format!("5 Hamiltonian constancy, Tempel-1 {name}"), d, 1e-6);
        if cmd == Command::SolveFo {
            let worst = a.trajectory.samples.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.throttle * s.rho));
            r.check("5 Γ·ρ ≤ 0 on Tempel-1 FO", worst <= 1e-12, format!("max Γ·ρ = {worst:.3e}"));
        }
        if cmd == Command::SolveTo {
            let prop = &a.problem.prop;
            let worst = a.trajectory.samples.iter().fold(0.0_f64, |m, s| {
                let exact = prop.m0 - prop.t_max / prop.isp_g0 * s.t;
                m.max((s.mass - exact).abs() / exact)
            });
            r.below("5 TO mass linear in time", worst, 1e-9);
        }
    }
    r.finish();
}

/// Fuel-optimal shooting with mass and its costate kept in the state.
///
/// State `[x, m, λ, λ_m]`. Thrust is on where `(Γ_TR − ‖Bᵀλ‖)/m − λ_m/c < 0`,
/// and `λ̇_m = (a·m0·u/m²)(Γ_TR − ‖Bᵀλ‖)` with `λ_m(t1) = 0`.
fn full_mass_fo(p: &Problem, gamma_tr: f64, guess: &Costates, lm_guess: f64) -> f64 {
    let mut sol: Vec<f64> = guess.to_array().to_vec();
    sol.push(lm_guess);
    let (mut sol, mut fuel) = full_mass_step(p, gamma_tr, &sol, 0.0).expect("σ = 0 reproduces the reduced solution");
    let (mut sigma, mut step) = (0.0_f64, 0.05_f64);
    while sigma < 1.0 {
        let next = (sigma + step).min(1.0);
        match full_mass_step(p, gamma_tr, &sol, next) {
            Some((s, f)) => {
                (sol, fuel, sigma) = (s, f, next);
                step *= 1.5;
            }
            None if step > 1e-4 => step *= 0.5,
            None => panic!("full-mass continuation stalled at σ = {sigma}"),
        }
    }
    fuel
}

/// One solve with the `λ_m` term of the switching function weighted by `sigma`.
fn full_mass_step(p: &Problem, gamma_tr: f64, start: &[f64], sigma: f64) -> Option<(Vec<f64>, f64)> {
    let prop = p.prop;
    let (a, c) = (prop.accel(), prop.isp_g0);
    let pc = p.pc.clone();
    let rhs = move |t: f64, y: &SVector<f64, 14>| -> lowthrust::Result<SVector<f64, 14>> {
        let x = MeeState::from_array(std::array::from_fn(|i| y[i]));
        let m = y[6];
        let lam = Costates::from_array(std::array::from_fn(|i| y[7 + i]));
        let lm = y[13];
        let (_, b) = gve_matrices(&x, pc.mu)?;
        let btl = b.transpose() * SVector::<f64, 6>::from(lam.to_array());
        let rho = gamma_tr - btl.norm();
        let on = rho / m - sigma * lm / c < 0.0;
        let u = if on { 1.0 } else { 0.0 };
        let control = ControlInput { throttle: prop.m0 * u / m, direction: -btl / btl.norm() };
        let xd = state_rate(&x, t, &control, &prop, &pc)?;
        // the gradient with the throttle frozen at m0·u/m
        let law = if on { ControlLaw::to(0.0) } else { ControlLaw::fo(f64::MAX) };
        let ld = costate_rate(&x, &lam, m, t, &law, &prop, &pc)?;
        let mut out = SVector::<f64, 14>::zeros();
        out.fixed_rows_mut::<6>(0).copy_from(&xd);
        out[6] = -a * prop.m0 * u / c;
        out.fixed_rows_mut::<6>(7).copy_from(&SVector::from(ld.to_array()));
        out[13] = a * prop.m0 * u / (m * m) * rho;
        Ok(out)
    };
    let x0 = p.x0.to_array();
    let shoot = |v: &[f64]| -> lowthrust::Result<SVector<f64, 14>> {
        let mut y0 = SVector::<f64, 14>::zeros();
        for i in 0..6 {
            y0[i] = x0[i];
            y0[7 + i] = v[i];
        }
        y0[6] = prop.m0;
        y0[13] = v[6];
        Ok(*integrate(&rhs, 0.0, y0, p.tof, &OdeOptions::with_tol(1e-12))?.final_state())
    };
    let target = p.x1.to_array();
    let residual = |v: &[f64]| -> lowthrust::Result<Vec<f64>> {
        let yf = shoot(v)?;
        let mut res: Vec<f64> = (0..6).map(|i| yf[i] - target[i]).collect();
        res.push(yf[13]);
        Ok(res)
    };
    let opts = RootOptions::default().accepting(1e-8);
    let report = solve_root(residual, start, &opts).ok()?;
    let yf = shoot(&report.solution).ok()?;
    let fuel = p.units.mass_unit * (prop.m0 - yf[6]);
    println!("  σ = {sigma:.4}: {} iterations, fuel {fuel:.4} kg, λ_m(0) = {:.4}", report.iterations, report.solution[6]);
    Some((report.solution, fuel))
}

#[test]
fn criterion_6_mass_costate_elimination() {
    let mut r = Report::default();
    let (p, s, _) = fo("tempel1");
    // λ_m(0) implied by the reduced solution: −∫ a·Γ·ρ/m dt
    let a = p.prop.accel();
    let lm0: f64 = s
        .trajectory
        .samples
        .windows(2)
        .map(|w| {
            let f = |x: &lowthrust::numerics::Sample| a * x.throttle * x.rho / x.mass;
            -0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t)
        })
        .sum();
    let full = full_mass_fo(&p, s.gamma_tr, &s.lam0, lm0);
    let rel = (full - s.fuel_kg).abs() / s.fuel_kg;
    r.check(
        "6 λ_m retained vs eliminated, Tempel-1 FO fuel",
        rel < 1e-3,
        format!("{full:.4} kg vs {:.4} kg, relative difference {rel:.2e} (limit 1e-3)", s.fuel_kg),
    );
    r.finish();
}

#[test]
fn criterion_7_scaling_constants_reduce_effort() {
    let mut r = Report::default();
    let cfg = builtin("tempel1").unwrap();
    let settings = RunSettings::from_config(&cfg).unwrap();

    let rows = sweep(SweepParam::GammaTr, &cfg, &[0.2, 0.4, 0.6, 0.8, 1.0], &settings).unwrap();
    let auto = rows.iter().find(|x| x.auto).unwrap();
    let unit = rows.iter().find(|x| !x.auto && x.value == 1.0).unwrap();
    r.check(
        "7 auto Γ_TR initial residual ≤ Γ_TR = 1",
        auto.initial_residual <= unit.initial_residual,
        format!("{:.4} vs {:.4}", auto.initial_residual, unit.initial_residual),
    );
    r.check(
        "7 auto Γ_TR iterations ≤ Γ_TR = 1",
        auto.iterations <= unit.iterations,
        format!("{} vs {}", auto.iterations, unit.iterations),
    );

    let rows = sweep(SweepParam::BetaT, &cfg, &[1.0, 10.0, 40.0], &settings).unwrap();
    let auto = rows.iter().find(|x| x.auto).unwrap();
    let unit = rows.iter().find(|x| !x.auto && x.value == 1.0).unwrap();
    r.below("7 auto β_t initial transversality residual", auto.initial_transversality.unwrap().abs(), 1e-12);
    r.check(
        "7 auto β_t initial residual < β_t = 1",
        auto.initial_residual < unit.initial_residual,
        format!("{:.4} vs {:.4}", auto.initial_residual, unit.initial_residual),
    );
    r.finish();
}

#[test]
fn criterion_8_triangular_threshold() {
    let mut r = Report::default();
    let n = 10_000;
    let samples: Vec<(f64, f64, f64)> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (t, 1.0 - (2.0 * t - 1.0).abs(), 0.0)
        })
        .collect();
    // frozen mass: infinite exhaust speed; Δv_EO of the triangle is ½
    let g = gamma_tr_from_profile(&samples, 1.0, f64::INFINITY, 0.5, 1e-12).unwrap();
    r.near("8 triangular profile Γ_TR", g, 0.5, 1e-6);
    r.finish();
}
