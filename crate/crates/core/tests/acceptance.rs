//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use hdsa::calibration::calibrate;
use hdsa::config::RunConfig;
use hdsa::linalg::{rel_diff, weighted_norm};
use hdsa::mesh::{assemble_mass, Mesh1D};
use hdsa::models::{generate_discrepancy_data, DiscrepancyData};
use hdsa::oracle::{compare_fixture, fixture_grid, gsvd_identities, perturbed_optimum, perturbed_optimum_derivative, TinyFixture};
use hdsa::prior::{build_elliptic_prior, PriorSpec};
use hdsa::problem::{BenchmarkParams, ControlDesign, Problem};
use hdsa::sampler::{sample_prior, SamplePlan};
use hdsa::sensitivity::{control_distance, hf_objective_report, update_solution};
use hdsa::{Error, LfOptimum, PosteriorMean, UpdateResult};
use nalgebra::{DMatrix, DVector};

/// Frozen after measuring 0.1676 with the default design.
const IMPROVEMENT_RATIO_MAX: f64 = 0.5;
const _: () = assert!(IMPROVEMENT_RATIO_MAX < 1.0);
/// Frozen after measuring 1.2e-3 and 5.0e-4.
const DATA_FIT_MAX: f64 = 0.1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

type Criterion = fn() -> hdsa::Result<Outcome>;

struct Benchmark {
    problem: Problem,
    optimum: LfOptimum,
    data: DiscrepancyData,
    posterior: PosteriorMean,
    update: UpdateResult,
}

fn benchmark(params: BenchmarkParams, design: ControlDesign) -> hdsa::Result<Benchmark> {
    let problem = Problem::new(params)?;
    let optimum = problem.lf_optimum()?;
    let controls = problem.design_controls(&optimum.z_tilde, &design)?;
    let data = generate_discrepancy_data(&problem.lf, &problem.hf, &controls)?;
    let posterior = calibrate(&data, &problem.params.prior, &problem.prior, &optimum.z_tilde, &problem.mass)?;
    let update = update_solution(&posterior, &optimum, &problem.spec, &problem.lf)?;
    Ok(Benchmark {
        problem,
        optimum,
        data,
        posterior,
        update,
    })
}

fn default_design() -> ControlDesign {
    ControlDesign::OptimumPlusModes { count: 2, scale: 2.0 }
}

fn dense_oracle_equivalence() -> hdsa::Result<Outcome> {
    let mut worst: f64 = 0.0;
    for (k, (m, n, count)) in fixture_grid().into_iter().enumerate() {
        let fx = TinyFixture::random(m, n, count, 1000 + k as u64)?;
        worst = worst.max(compare_fixture(&fx, 7 + k as u64)?.max());
    }
    Ok(check(
        worst <= 1e-8,
        format!("max relative error over theta, delta, Sigma v, B theta = {worst:.2e} (tol 1e-8)"),
    ))
}

fn gsvd_identities_hold() -> hdsa::Result<Outcome> {
    let mut worst: f64 = 0.0;
    for (k, (m, n, count)) in fixture_grid().into_iter().enumerate() {
        let fx = TinyFixture::random(m, n, count, 2000 + k as u64)?;
        worst = worst.max(gsvd_identities(&fx)?.max());
    }
    Ok(check(worst <= 1e-9, format!("max identity residual = {worst:.2e} (tol 1e-9)")))
}

fn benchmark_reproduction() -> hdsa::Result<Outcome> {
    let b = benchmark(BenchmarkParams::default(), default_design())?;
    let z_star = b.problem.hf_optimum()?.z_tilde;
    let mz = &b.problem.mass;
    let ratio = control_distance(mz, &b.update.z_bar, &z_star) / control_distance(mz, &b.optimum.z_tilde, &z_star);
    let fits: Vec<f64> = (0..b.data.len())
        .map(|l| {
            let z = b.data.controls().column(l).into_owned();
            let y = b.data.discrepancies().column(l).into_owned();
            let d = b.posterior.eval_delta(&z, mz)?;
            Ok(weighted_norm(mz, &(d - &y)) / weighted_norm(mz, &y))
        })
        .collect::<hdsa::Result<_>>()?;
    let fit = fits.iter().copied().fold(0.0, f64::max);
    Ok(check(
        ratio <= IMPROVEMENT_RATIO_MAX && fit <= DATA_FIT_MAX && b.data.len() == 2,
        format!(
            "improvement ratio {ratio:.4} (<= {IMPROVEMENT_RATIO_MAX}), worst data fit {fit:.2e} (<= {DATA_FIT_MAX}), N = {}",
            b.data.len()
        ),
    ))
}

fn sensitivity_check() -> hdsa::Result<Outcome> {
    let b = benchmark(BenchmarkParams::default(), default_design())?;
    let (spec, lf) = (&b.problem.spec, &b.problem.lf);
    let theta = b.posterior.to_theta();
    let newton = &b.update.z_bar - &b.optimum.z_tilde;
    let exact = perturbed_optimum_derivative(spec, lf, &theta)?;
    let derivative_err = rel_diff(&exact, &newton);
    let quotient_err = |t: f64| -> hdsa::Result<f64> {
        let zt = perturbed_optimum(spec, lf, &theta, t)?;
        Ok(rel_diff(&((zt - &b.optimum.z_tilde) / t), &newton))
    };
    let (e_small, e_large) = (quotient_err(1e-3)?, quotient_err(1e-2)?);
    let order = (e_large / e_small).log10();
    let full_step_gap = rel_diff(&perturbed_optimum(spec, lf, &theta, 1.0)?, &b.update.z_bar);
    Ok(check(
        derivative_err <= 1e-8 && (0.5..=2.0).contains(&order) && e_small < 1e-4,
        format!(
            "exact derivative vs -H^-1 B theta: {derivative_err:.2e} (tol 1e-8); quotient error {e_small:.2e} at t=1e-3, {e_large:.2e} at t=1e-2, observed order {order:.2}; full-step gap {full_step_gap:.2e}"
        ),
    ))
}

fn objective_ordering() -> hdsa::Result<Outcome> {
    let b = benchmark(BenchmarkParams::default(), default_design())?;
    let z_star = b.problem.hf_optimum()?.z_tilde;
    let rows = hf_objective_report(
        &[("z_tilde", &b.optimum.z_tilde), ("z_bar", &b.update.z_bar), ("z_star", &z_star)],
        Some(&b.problem.hf),
        &b.problem.spec,
    )?;
    let j: Vec<f64> = rows.iter().map(|r| r.value.unwrap_or(f64::NAN)).collect();
    Ok(check(
        j[2] <= j[1] && j[1] < j[0],
        format!("J(z*) = {:.6} <= J(z_bar) = {:.6} < J(z_tilde) = {:.6}", j[2], j[1], j[0]),
    ))
}

fn sampler_statistics() -> hdsa::Result<Outcome> {
    let mesh = Mesh1D::uniform(50)?;
    let mz = assemble_mass(&mesh);
    let zt = DVector::zeros(50);
    let plan = SamplePlan {
        samples: 10_000,
        steps: 1,
        reference: mesh.interpolate(|x| x),
        seed: 2024,
    };
    let prior = build_elliptic_prior(&mesh, 1.0, 1e-2)?;
    let set = sample_prior(&plan, &prior, 2.0, &zt, &mz)?;
    let count = set.samples.len() as f64;
    let mut cov = DMatrix::zeros(50, 50);
    for s in &set.samples {
        cov.ger(1.0 / count, &s.base, &s.base, 1.0);
    }
    let target = prior.inverse();
    let cov_err = (&cov - &target).norm() / target.norm();

    let doubled = build_elliptic_prior(&mesh, 2.0, 1e-2)?;
    let set2 = sample_prior(&plan, &doubled, 2.0, &zt, &mz)?;
    let spread = |set: &hdsa::PriorSampleSet| {
        (set.samples.iter().map(|s| s.base.norm_squared()).sum::<f64>() / count).sqrt()
    };
    let std_ratio = spread(&set2) / spread(&set);
    let again = sample_prior(&plan, &prior, 2.0, &zt, &mz)?;
    let bitwise = again == set;
    Ok(check(
        cov_err <= 0.1 && (std_ratio - 0.5).abs() <= 0.025 && bitwise,
        format!("covariance error {cov_err:.3} (<= 0.1), gamma-doubling std ratio {std_ratio:.4} (0.5 +- 5%), reproducible {bitwise}"),
    ))
}

fn degenerate_inputs() -> hdsa::Result<Outcome> {
    let params = BenchmarkParams::default();
    let problem = Problem::new(params.clone())?;
    let opt = problem.lf_optimum()?;
    let n = problem.mesh.n_nodes();
    let run = |data: &DiscrepancyData| -> hdsa::Result<DVector<f64>> {
        let pm = calibrate(data, &params.prior, &problem.prior, &opt.z_tilde, &problem.mass)?;
        Ok(update_solution(&pm, &opt, &problem.spec, &problem.lf)?.z_bar)
    };
    let empty = run(&DiscrepancyData::empty(n, n))? == opt.z_tilde;

    let controls = problem.design_controls(&opt.z_tilde, &default_design())?;
    let zero_y = run(&DiscrepancyData::new(controls.clone(), DMatrix::zeros(n, 2))?)? == opt.z_tilde;

    let still = benchmark(BenchmarkParams { velocity: 0.0, ..params.clone() }, default_design())?;
    let no_advection = still.data.discrepancies().norm() == 0.0 && still.update.z_bar == still.optimum.z_tilde;

    let dup = DMatrix::from_fn(n, 2, |i, _| controls[(i, 0)]);
    let duplicate = matches!(
        DiscrepancyData::new(dup, DMatrix::zeros(n, 2)),
        Err(Error::Assumption(_))
    );

    let mut bad_alpha = true;
    for alpha in [0.0, -1.0] {
        let spec = PriorSpec { alpha, ..params.prior };
        let data = DiscrepancyData::new(controls.clone(), DMatrix::zeros(n, 2))?;
        bad_alpha &= matches!(
            calibrate(&data, &spec, &problem.prior, &opt.z_tilde, &problem.mass),
            Err(Error::InvalidParameter { name: "alpha", .. })
        );
        let entries = [("prior.alpha".to_string(), alpha.to_string())];
        bad_alpha &= matches!(RunConfig::from_entries(&entries), Err(Error::Config(_)));
    }
    Ok(check(
        empty && zero_y && no_advection && duplicate && bad_alpha,
        format!(
            "N=0 unchanged {empty}, Y=0 unchanged {zero_y}, v=0 gives Y=0 and no update {no_advection}, duplicate rejected {duplicate}, alpha<=0 rejected {bad_alpha}"
        ),
    ))
}

fn single_pair_zeta_independence() -> hdsa::Result<Outcome> {
    let mut reference: Option<DVector<f64>> = None;
    let mut z_bar_spread: f64 = 0.0;
    let mut delta_spread: f64 = 0.0;
    for zeta in [0.5, 2.0, 8.0] {
        let mut params = BenchmarkParams::default();
        params.prior.zeta = zeta;
        let b = benchmark(params, ControlDesign::OptimumPlusModes { count: 1, scale: 2.0 })?;
        let mz = &b.problem.mass;
        let base = b.posterior.eval_delta(&b.optimum.z_tilde, mz)?;
        for (k, mode) in b.problem.smooth_modes(3)?.column_iter().enumerate() {
            let z = &b.optimum.z_tilde + mode * (k as f64 + 1.0) * 3.0;
            delta_spread = delta_spread.max(rel_diff(&b.posterior.eval_delta(&z, mz)?, &base));
        }
        match &reference {
            None => reference = Some(b.update.z_bar.clone()),
            Some(r) => z_bar_spread = z_bar_spread.max(rel_diff(&b.update.z_bar, r)),
        }
    }
    Ok(check(
        delta_spread <= 1e-10 && z_bar_spread <= 1e-9,
        format!("delta variation in z {delta_spread:.2e} (tol 1e-10), z_bar variation across zeta {z_bar_spread:.2e} (tol 1e-9)"),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, f64, Criterion); 8] = [
        ("1 dense-oracle equivalence", 10.0, dense_oracle_equivalence),
        ("2 GSVD identities", 5.0, gsvd_identities_hold),
        ("3 1D benchmark reproduction", 30.0, benchmark_reproduction),
        ("4 sensitivity operator check", 10.0, sensitivity_check),
        ("5 objective ordering", 10.0, objective_ordering),
        ("6 prior-sampler statistics", 20.0, sampler_statistics),
        ("7 degenerate inputs", 5.0, degenerate_inputs),
        ("8 single-pair zeta independence", 10.0, single_pair_zeta_independence),
    ];
    let mut failures = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (passed, detail) = match outcome {
            Ok(o) => (o.passed && secs < budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {name}: {detail}; {secs:.2}s (budget {budget}s)",
            if passed { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
