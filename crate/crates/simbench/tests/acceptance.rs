//! Acceptance suite: every release-gating check runs here, one test per
//! criterion, each printing a single PASS/FAIL line with the measured
//! numbers before asserting.
//!
//! Run with `cargo test -p deconvkit-simbench --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::Instant;

use deconvkit_core::distributions::DistributionSpec;
use deconvkit_core::fourier::{mc_fourier, mc_inverse, InverseNormalization, TGrid};
use deconvkit_core::npfd::{
    check_variance_order, estimate_ft_pair, npfd_deconvolve, npfd_replicates, quotient_power,
    select_power, transform_inputs, NpfdConfig,
};
use deconvkit_core::{Replicates, Sample};
use deconvkit_simbench::{find_scenario, run_scenario, BenchMethod, RunOptions, SummaryTable};

const SEED: u64 = 7;

fn bench(id: &str, reps: usize) -> SummaryTable {
    let spec = find_scenario(id).expect("scenario exists");
    run_scenario(
        &spec,
        RunOptions {
            replicates: reps,
            seed: Some(SEED),
            threads: 0,
        },
    )
    .expect("scenario runs")
}

fn median(table: &SummaryTable, method: BenchMethod) -> f64 {
    table.method(method).expect("method present").median
}

/// Shared runs reused by several criteria.
fn fdd1_table() -> &'static (SummaryTable, f64) {
    static CELL: OnceLock<(SummaryTable, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let table = bench("fdd-1", 100);
        (table, t0.elapsed().as_secs_f64())
    })
}

fn dkm4_table() -> &'static SummaryTable {
    static CELL: OnceLock<SummaryTable> = OnceLock::new();
    CELL.get_or_init(|| bench("dkm-4", 100))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn criterion_1_gamma_exponential_medians_and_runtime() {
    let (table, elapsed) = fdd1_table();
    let npfd = median(table, BenchMethod::Npfd);
    let fdd = median(table, BenchMethod::Fdd);
    let ok = (0.015..=0.06).contains(&npfd)
        && (0.04..=0.12).contains(&fdd)
        && npfd < fdd
        && *elapsed <= 300.0;
    println!(
        "criterion 1: {} | fdd-1 n=500 100 reps: npfd median {npfd:.4} (need 0.015..0.06), \
         fdd median {fdd:.4} (need 0.04..0.12), npfd < fdd = {}, runtime {elapsed:.1}s (need <= 300)",
        verdict(ok),
        npfd < fdd
    );
    assert!(ok);
}

#[test]
fn criterion_2_equal_variance_gamma_ratio() {
    let table = bench("fdd-4", 100);
    let npfd = median(&table, BenchMethod::Npfd);
    let fdd = median(&table, BenchMethod::Fdd);
    let ok = npfd <= 0.5 * fdd;
    println!(
        "criterion 2: {} | fdd-4 n=500 100 reps: npfd median {npfd:.4} <= 0.5 x fdd median {fdd:.4}",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_3_small_sample_laplace_folds() {
    let table = bench("mcd-2", 200);
    let npfd = median(&table, BenchMethod::Npfd);
    let mcd = median(&table, BenchMethod::Mcd);
    let ok = (0.04..=0.12).contains(&npfd) && npfd <= mcd;
    println!(
        "criterion 3: {} | mcd-2 (n_x=10, n_z=200) 200 reps: npfd median {npfd:.4} \
         (need 0.04..0.12), mcd median {mcd:.4}, npfd <= mcd = {}",
        verdict(ok),
        npfd <= mcd
    );
    assert!(ok);
}

#[test]
fn criterion_4_high_variance_known_error() {
    let table = dkm4_table();
    let npfd = median(table, BenchMethod::Npfd);
    let dkm = median(table, BenchMethod::Dkm);
    let ok = npfd <= 0.10 && dkm >= 0.20;
    println!(
        "criterion 4: {} | dkm-4 (error variance 10) 100 reps: npfd median {npfd:.4} \
         (need <= 0.10), dkm median {dkm:.4} (need >= 0.20)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_5_replicates_with_symmetric_target_factor() {
    // The replicate-difference baseline implemented here estimates the
    // error transform from z1 - z2, which cancels the latent signal
    // exactly, so the symmetric factor of the target never leaks into the
    // denominator and the published failure magnitude is not reachable
    // from the published formulas. See the decisions ledger.
    let table = bench("rmd-4", 100);
    let npfd = median(&table, BenchMethod::Npfd);
    let rmd = median(&table, BenchMethod::Rmd);
    let ok = npfd <= 0.15 && rmd >= 0.8;
    println!(
        "criterion 5: {} | rmd-4 (target with normal factor) 100 reps: npfd median {npfd:.4} \
         (need <= 0.15), rmd median {rmd:.4} (need >= 0.8)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_6_property_suite() {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("criterion 6{name}: {} | {detail}", verdict(ok));
        all_ok &= ok;
    };

    // (a) grid transform of fitted densities tracks the closed-form cf
    {
        let cases = [
            DistributionSpec::Normal { mean: 0.0, sd: 1.0 },
            DistributionSpec::Gamma { shape: 4.0, rate: 1.0 },
        ];
        let mut worst: f64 = 0.0;
        for spec in &cases {
            let s = spec.sample(1000, 12).unwrap();
            let fit = deconvkit_core::density::estimate_density(
                &s,
                5,
                deconvkit_core::density::KnotAnchor::Mode,
            )
            .unwrap();
            let grid = TGrid::new(121, 3.0).unwrap();
            let est = mc_fourier(|x| fit.eval(x), (s.min(), s.max()), 100, &grid);
            for k in 0..grid.len() {
                let exact = spec.cf(grid.t(k)).unwrap();
                worst = worst.max((est.values[k] - exact).norm());
            }
        }
        check(
            "a",
            worst < 0.05,
            format!("fitted normal/gamma transform vs closed form: sup {worst:.4} (need < 0.05)"),
        );
    }

    // (b) fitted densities integrate to 1 within 0.02
    {
        let cases = [
            DistributionSpec::Normal { mean: 0.0, sd: 1.0 },
            DistributionSpec::Gamma { shape: 4.0, rate: 1.0 },
            DistributionSpec::Exponential { rate: 0.5 },
        ];
        let mut worst: f64 = 0.0;
        for (i, spec) in cases.iter().enumerate() {
            let s = spec.sample(800, 40 + i as u64).unwrap();
            let fit = deconvkit_core::density::estimate_density(
                &s,
                5,
                deconvkit_core::density::KnotAnchor::Mode,
            )
            .unwrap();
            let grid = deconvkit_core::linspace(s.min(), s.max(), 1000);
            let h = grid[1] - grid[0];
            let integral: f64 = grid.windows(2).map(|w| 0.5 * h * (fit.eval(w[0]) + fit.eval(w[1]))).sum();
            worst = worst.max((integral - 1.0).abs());
        }
        check(
            "b",
            worst <= 0.02,
            format!("density fit integrals: worst deviation from 1 is {worst:.4} (need <= 0.02)"),
        );
    }

    // (c) empirical transform is exactly 1 at zero and conjugate symmetric
    {
        let s = DistributionSpec::Gamma { shape: 4.0, rate: 1.0 }.sample(500, 3).unwrap();
        let grid = TGrid::new(201, 16.0).unwrap();
        let est = deconvkit_core::fourier::empirical_ft(s.values(), &grid);
        let zero = est.value_at_zero();
        let zero_exact = zero.re == 1.0 && zero.im == 0.0;
        let sym = est.conjugate_symmetry_residual();
        check(
            "c",
            zero_exact && sym < 1e-9,
            format!("value(0) exact = {zero_exact}, conjugate symmetry residual {sym:.2e} (need < 1e-9)"),
        );
    }

    // (d) variance-order precondition
    {
        let x = DistributionSpec::normal_var(0.0, 2.0).sample(500, 1).unwrap();
        let z = DistributionSpec::normal_var(0.0, 1.0).sample(500, 2).unwrap();
        let rejected = check_variance_order(&x, &z).is_err()
            && npfd_deconvolve(&x, &z, &NpfdConfig::default()).is_err();
        check("d", rejected, "Var(x) >= Var(z) inputs rejected".to_string());
    }

    // (e) forced N = 1 equals the direct quotient inversion bitwise
    {
        let fx = DistributionSpec::Exponential { rate: 0.5 };
        let fy = DistributionSpec::Gamma { shape: 4.0, rate: 1.0 };
        let x = fx.sample(500, 23).unwrap();
        let y = fy.sample(500, 24).unwrap();
        let e = fx.sample(500, 25).unwrap();
        let z = Sample::new(
            y.values().iter().zip(e.values()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let cfg = NpfdConfig {
            forced_n: Some(1),
            ..NpfdConfig::default()
        };
        let res = npfd_deconvolve(&x, &z, &cfg).unwrap();
        let sel = select_power(&x, &z, &cfg).unwrap();
        let (xt, zt, _) = transform_inputs(&x, &z, 1);
        let inv_grid = TGrid::new(cfg.grid_len, sel.gamma).unwrap();
        let (phix, phiz) = estimate_ft_pair(&xt, &zt, &cfg, &inv_grid).unwrap();
        let mut quotient = quotient_power(&phiz, &phix, 1).unwrap();
        quotient.rescale_at_zero();
        let ygrid = deconvkit_core::linspace(z.min() - x.max(), z.max() - x.min(), cfg.n_y);
        let (manual, _) =
            mc_inverse(&quotient, &ygrid, InverseNormalization::WindowCount).unwrap();
        let bitwise = res.density.len() == manual.len()
            && res
                .density
                .iter()
                .zip(manual.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        check("e", bitwise, format!("N=1 pipeline vs manual inversion bitwise equal = {bitwise}"));
    }

    // (f) monotone damping of the selected quotient inside the window
    {
        let fx = DistributionSpec::Exponential { rate: 0.5 };
        let fy = DistributionSpec::Gamma { shape: 4.0, rate: 1.0 };
        let x = fx.sample(500, 31).unwrap();
        let y = fy.sample(500, 32).unwrap();
        let e = fx.sample(500, 33).unwrap();
        let z = Sample::new(
            y.values().iter().zip(e.values()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let sel = select_power(&x, &z, &NpfdConfig::default()).unwrap();
        let mut ok = true;
        let mut worst: f64 = 0.0;
        for &m in &sel.window_moduli {
            let a = m.powi(sel.n as i32 + 1);
            let b = m.powi(sel.n as i32);
            ok &= a <= b + 1e-15 && b <= 1.0 + 1e-12;
            worst = worst.max(m);
        }
        check(
            "f",
            ok,
            format!("|q|^(N+1) <= |q|^N at all {} window points (max |q| = {worst:.4})", sel.window_moduli.len()),
        );
    }

    // (g) determinism: identical inputs give byte-identical serialized runs
    {
        let fx = DistributionSpec::Exponential { rate: 0.5 };
        let fy = DistributionSpec::Gamma { shape: 4.0, rate: 1.0 };
        let x = fx.sample(400, 51).unwrap();
        let y = fy.sample(400, 52).unwrap();
        let e = fx.sample(400, 53).unwrap();
        let z = Sample::new(
            y.values().iter().zip(e.values()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let a = npfd_deconvolve(&x, &z, &NpfdConfig::default()).unwrap();
        let b = npfd_deconvolve(&x, &z, &NpfdConfig::default()).unwrap();
        let same = serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap();
        check("g", same, format!("repeated runs byte-identical = {same}"));
    }

    println!("criterion 6: {} | property suite", verdict(all_ok));
    assert!(all_ok);
}

#[test]
fn criterion_7_power_selection_regression() {
    let (fdd1, _) = fdd1_table();
    let dkm4 = dkm4_table();
    let n_fdd1 = fdd1.npfd_powers[fdd1.representative];
    let n_dkm4 = dkm4.npfd_powers[dkm4.representative];
    let ok = (1..=3).contains(&n_fdd1) && (9..=11).contains(&n_dkm4);
    println!(
        "criterion 7: {} | representative powers: fdd-1 N = {n_fdd1} (need 2 +/- 1), \
         dkm-4 N = {n_dkm4} (need 10 +/- 1)",
        verdict(ok)
    );
    assert!(ok);
}

/// Direction reversals of the curve, with a hysteresis of 0.1% of the peak
/// so float-level dust does not register as oscillation.
fn derivative_sign_changes(density: &[f64]) -> usize {
    let peak = density.iter().cloned().fold(0.0f64, f64::max);
    let min_swing = 1e-3 * peak;
    let mut changes = 0;
    let mut dir: i8 = 0;
    let mut extreme = density[0];
    for &v in &density[1..] {
        match dir {
            0 => {
                if v - extreme >= min_swing {
                    dir = 1;
                    extreme = v;
                } else if extreme - v >= min_swing {
                    dir = -1;
                    extreme = v;
                }
            }
            1 => {
                if v > extreme {
                    extreme = v;
                } else if extreme - v >= min_swing {
                    dir = -1;
                    extreme = v;
                    changes += 1;
                }
            }
            _ => {
                if v < extreme {
                    extreme = v;
                } else if v - extreme >= min_swing {
                    dir = 1;
                    extreme = v;
                    changes += 1;
                }
            }
        }
    }
    changes
}

#[test]
fn criterion_8_synthetic_replicated_end_to_end() {
    // stand-in for the real replicated-measurement analyses: 1615 pairs of
    // a known skewed target contaminated with centered normal noise
    let fy = DistributionSpec::Gamma { shape: 4.0, rate: 1.0 };
    let fx = DistributionSpec::normal_var(0.0, 1.0);
    let n = 1615;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let y = fy.sample_with(&mut rng, n);
    let e1 = fx.sample_with(&mut rng, n);
    let e2 = fx.sample_with(&mut rng, n);
    let z1: Vec<f64> = y.iter().zip(&e1).map(|(a, b)| a + b).collect();
    let z2: Vec<f64> = y.iter().zip(&e2).map(|(a, b)| a + b).collect();
    let reps = Replicates::new(z1, z2).unwrap();
    let result = npfd_replicates(&reps, &NpfdConfig::default()).unwrap();
    let h = result.ygrid[1] - result.ygrid[0];
    let ise: f64 = result
        .density
        .iter()
        .zip(result.ygrid.iter())
        .map(|(f, y)| (f - fy.pdf(*y)).powi(2) * h)
        .sum();
    let wiggles = derivative_sign_changes(&result.density);
    let ok = ise < 0.05 && wiggles <= 4;
    println!(
        "criterion 8: {} | 1615 replicated pairs: ISE {ise:.5} (need < 0.05), \
         derivative sign changes {wiggles} (need <= 4), N = {}",
        verdict(ok),
        result.n
    );
    assert!(ok);
}
