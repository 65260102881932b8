use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use gdfm::backtest::{lr_combined, lr_cover, lr_independence, summarize, HitSeries};
use gdfm::forecast::{empirical_quantile, quantile_bounds, FittedPipeline};
use gdfm::garch::{fit_garch, quasi_loglik, GarchParams};
use gdfm::gdfm::{fit_stage, yule_walker, yule_walker_block, StageOptions, YwRegularization};
use gdfm::panel_io::{center_rows, load_panel, read_panel_csv, save_panel, PanelFormat, PipelineConfig};
use gdfm::simulate::{error_metrics, generate, rng_for, run_mc, DgpConfig, McOptions};
use gdfm::spectral::{
    estimate_spectrum, sample_autocov, scree, truncate_to_rank, AutocovarianceSet, SpectralDensity,
};
use gdfm::volatility::{build_proxy, fit_volatility};
use gdfm::GdfmError;

fn normal(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, 0);
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn ar1_rows(n: usize, t: usize, phi: f64, seed: u64) -> DMatrix<f64> {
    let e = normal(n, t + 200, seed);
    let mut y = DMatrix::<f64>::zeros(n, t + 200);
    for c in 1..t + 200 {
        for r in 0..n {
            y[(r, c)] = phi * y[(r, c - 1)] + e[(r, c)];
        }
    }
    y.columns(200, t).into_owned()
}

#[test]
fn csv_shape() {
    let csv = "a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n";
    let p = read_panel_csv(csv.as_bytes()).unwrap();
    assert_eq!((p.n(), p.t_len()), (3, 5));
    assert_eq!(p.values[(1, 3)], 11.0);
}

#[test]
fn csv_rejections_name_the_cell() {
    let na = "a,b\n1,2\n3,NA\n";
    match read_panel_csv(na.as_bytes()) {
        Err(GdfmError::Ingestion { row, column, message }) => {
            assert_eq!((row, column), (2, 2));
            assert!(message.contains("missing"));
        }
        other => panic!("expected ingestion error, got {other:?}"),
    }
    let ragged = "a,b\n1,2\n3\n";
    assert!(matches!(read_panel_csv(ragged.as_bytes()), Err(GdfmError::Ingestion { row: 2, .. })));
    let text = "a,b\n1,x\n";
    assert!(matches!(read_panel_csv(text.as_bytes()), Err(GdfmError::Ingestion { row: 1, column: 2, .. })));
    let inf = "a,b\n1,inf\n";
    assert!(read_panel_csv(inf.as_bytes()).is_err());
}

#[test]
fn file_round_trip_is_bit_exact() {
    let m = normal(4, 30, 3) * 1e3;
    let p = gdfm::panel_io::Panel::from_matrix(m).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    save_panel(&p, &path).unwrap();
    let back = load_panel(&path, PanelFormat::Csv).unwrap();
    assert!(back.values.iter().zip(p.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn centering_examples() {
    let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 4.0, 4.0]);
    let (c, mu) = center_rows(&m);
    assert_eq!(c.row(0).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    assert_eq!(mu[0], 2.0);
    assert!(c.row(1).iter().all(|&v| v == 0.0));
    assert_eq!(mu[1], 4.0);
}

#[test]
fn config_validation() {
    let cfg = PipelineConfig { kappa: 0.0, vol_bandwidth: 30, ..PipelineConfig::default() };
    let warnings = cfg.validate(10, 400).unwrap();
    assert!(warnings.iter().any(|w| w.contains("kappa")));
    assert!(warnings.iter().any(|w| w.contains("sqrt") || w.contains("√")));
    let bad = PipelineConfig { level_bandwidth: 50, ..PipelineConfig::default() };
    assert!(bad.validate(10, 50).is_err());
    let parsed = PipelineConfig::from_json_str(r#"{"q": 2, "Q": 3, "B_T": 4, "kappa_T": 0.1}"#).unwrap();
    assert_eq!((parsed.q, parsed.q_vol, parsed.level_bandwidth, parsed.kappa), (2, 3, 4, 0.1));
    assert_eq!(parsed.vol_bandwidth, 17);
}

#[test]
fn lag_one_autocovariance_by_hand() {
    let m = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 1.0, -1.0]);
    let g = sample_autocov(&m, 1).unwrap();
    assert!((g.lags[1][(0, 0)] + 0.75).abs() < 1e-15);
}

#[test]
fn white_noise_variance_and_flat_spectrum() {
    let m = normal(1, 10_000, 4);
    let (c, _) = center_rows(&m);
    let g = sample_autocov(&c, 0).unwrap();
    assert!((g.lags[0][(0, 0)] - 1.0).abs() < 0.05);

    let m = normal(3, 20_000, 5);
    let (c, _) = center_rows(&m);
    let s = estimate_spectrum(&sample_autocov(&c, 10).unwrap(), 10).unwrap();
    let flat = 1.0 / (2.0 * std::f64::consts::PI);
    for h in -10..=10 {
        for i in 0..3 {
            assert!((s.at(h)[(i, i)].re - flat).abs() < 0.01, "h={h} i={i}");
        }
    }
}

#[test]
fn zero_inputs_give_zero_outputs() {
    let z = DMatrix::<f64>::zeros(2, 50);
    let s = estimate_spectrum(&sample_autocov(&z, 3).unwrap(), 3).unwrap();
    assert!(s.matrices.iter().all(|m| m.iter().all(|c| c.norm() == 0.0)));
    let back = gdfm::spectral::inverse_ft(&s, 3).unwrap();
    assert!(back.lags.iter().all(|g| g.amax() == 0.0));
}

fn constant_spectrum(m: DMatrix<Complex64>, bw: usize) -> SpectralDensity {
    SpectralDensity {
        bandwidth: bw,
        matrices: vec![m; 2 * bw + 1],
    }
}

#[test]
fn rank_truncation_examples() {
    let v = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0), Complex64::new(-1.0, 0.5)]);
    let m = &v * v.adjoint();
    let (r, _) = truncate_to_rank(&constant_spectrum(m.clone(), 2), 1).unwrap();
    assert!((r.at(1) - &m).camax() < 1e-10);
    let rows = scree(&constant_spectrum(m, 2), 3).unwrap();
    let at0: Vec<f64> = rows.iter().filter(|r| r.h == 0).map(|r| r.normalized_eigenvalue).collect();
    assert!((at0[0] - 1.0).abs() < 1e-12 && at0[1].abs() < 1e-10);

    let id = DMatrix::<Complex64>::identity(3, 3);
    let (r, _) = truncate_to_rank(&constant_spectrum(id.clone(), 2), 1).unwrap();
    let tr: f64 = r.at(0).diagonal().iter().map(|z| z.re).sum();
    assert!((tr - 1.0).abs() < 1e-10);
    let rows = scree(&constant_spectrum(id, 1), 3).unwrap();
    assert!(rows.iter().all(|r| (r.normalized_eigenvalue - 1.0).abs() < 1e-12));
}

#[test]
fn three_factor_scree_gap() {
    let d = DgpConfig { n: 100, t: 500, q: 3, q_vol: 2, seed: 9, ..DgpConfig::default() };
    let sim = generate(&d, &mut rng_for(9, 0)).unwrap();
    let (c, _) = center_rows(&sim.common);
    let s = estimate_spectrum(&sample_autocov(&c, 5).unwrap(), 5).unwrap();
    let rows = scree(&s, 5).unwrap();
    let at0: Vec<f64> = rows.iter().filter(|r| r.h == 0).map(|r| r.normalized_eigenvalue).collect();
    assert!(at0[3] < 0.1 * at0[2], "{at0:?}");
}

#[test]
fn diagonal_var_recovered_from_exact_autocovariances() {
    let a = DMatrix::<f64>::identity(2, 2) * 0.5;
    let g0 = DMatrix::<f64>::identity(2, 2) / 0.75;
    let ac = AutocovarianceSet { lags: vec![g0.clone(), &a * &g0], n_obs: 0 };
    let fit = yule_walker(&ac, 1, YwRegularization::NONE).unwrap();
    assert!((&fit.coefs[0] - &a).amax() < 1e-10);
}

#[test]
fn bic_picks_order_one() {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.4]);
    let mut hits = 0;
    for s in 0..100 {
        let e = normal(2, 5200, 100 + s);
        let mut y = DMatrix::<f64>::zeros(2, 5200);
        for c in 1..5200 {
            let next = &a * y.column(c - 1) + e.column(c);
            y.set_column(c, &next);
        }
        let (yc, _) = center_rows(&y.columns(200, 5000).into_owned());
        let g = sample_autocov(&yc, 5).unwrap();
        let fit = yule_walker_block(&g, &[0, 1], 5, YwRegularization::NONE).unwrap();
        hits += usize::from(fit.order == 1);
    }
    assert!(hits >= 95, "{hits}/100");
}

fn level_options(q: usize) -> StageOptions {
    StageOptions::levels(&PipelineConfig { q, ..PipelineConfig::default() })
}

#[test]
fn noiseless_one_factor_panel() {
    let (n, t) = (20, 2000);
    let mut rng = rng_for(11, 0);
    let mut h: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
    h *= (n as f64).sqrt() / h.norm();
    let u: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
    let x = DMatrix::from_fn(n, t, |i, s| h[i] * u[s]);
    let m = fit_stage(&x, &level_options(1), &mut rng_for(11, 1)).unwrap();
    let xc = center_rows(&x).0;
    let err = (&m.components.common - &xc).amax();
    let b0 = m.loadings.column(0).into_owned();
    let sign = if b0.dot(&h) >= 0.0 { 1.0 } else { -1.0 };
    let herr = (b0 - &h * sign).norm() / (n as f64).sqrt();
    assert!(err <= 0.05, "max |X - X_hat| = {err}");
    assert!(herr <= 0.05, "loading error {herr}");
}

#[test]
fn spurious_factor_stays_small() {
    let y = ar1_rows(100, 2000, 0.5, 12);
    let m = fit_stage(&y, &level_options(1), &mut rng_for(12, 1)).unwrap();
    let var = |r: nalgebra::DMatrixView<f64>| {
        let mu = r.mean();
        r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / r.len() as f64
    };
    let mut ratio = 0.0;
    for i in 0..100 {
        ratio += var(m.components.common.rows(i, 1)) / var(y.rows(i, 1)) / 100.0;
    }
    assert!(ratio <= 0.2, "{ratio}");
}

#[test]
fn simulated_proxy_identities() {
    let d = DgpConfig { n: 30, t: 300, seed: 13, ..DgpConfig::default() };
    let sim = generate(&d, &mut rng_for(13, 0)).unwrap();
    for ((s, e), v) in sim.s.iter().zip(sim.e.iter()).zip(sim.v.iter()) {
        assert_eq!(s.to_bits(), (e + v).to_bits());
    }
    for (h, s) in sim.h.iter().zip(sim.s.iter()) {
        assert_eq!(h.to_bits(), (s * s).ln().to_bits());
    }
    let p = build_proxy(&sim.e, &sim.v, 0.25).unwrap();
    assert!(p.capped_fraction > 0.0 && p.capped_fraction < 0.5, "{}", p.capped_fraction);
}

#[test]
fn constant_log_volatility_panel_is_rejected() {
    let s = DMatrix::from_element(5, 100, 0.01);
    let p = build_proxy(&s, &DMatrix::zeros(5, 100), 0.5).unwrap();
    assert_eq!(p.capped_fraction, 1.0);
    let opts = StageOptions::volatility(&PipelineConfig::default());
    assert!(matches!(fit_volatility(&p, &opts, &mut rng_for(0, 0)), Err(GdfmError::ZeroVariance(0))));
}

#[test]
fn normal_quantile() {
    let w: Vec<f64> = normal(1, 5000, 14).iter().copied().collect();
    let q = empirical_quantile(&w, 0.05).unwrap();
    assert!((q + 1.645).abs() < 0.08, "{q}");
}

#[test]
fn iid_panel_interval_is_gaussian() {
    let y = normal(10, 5000, 15);
    let cfg = PipelineConfig::default();
    let m = FittedPipeline::fit(&y, (0..10).map(|i| format!("s{i}")).collect(), &cfg).unwrap();
    let st = m.fitted_state().unwrap();
    let fc = m.predict_interval(&st, 0.05, 0.05, None).unwrap();
    let lower = fc.iter().map(|f| f.lower).sum::<f64>() / 10.0;
    let upper = fc.iter().map(|f| f.upper).sum::<f64>() / 10.0;
    assert!((lower + 1.645).abs() < 0.15 && (upper - 1.645).abs() < 0.15, "[{lower}, {upper}]");
    for f in &fc {
        assert!(f.s_hat > 0.0);
        assert!(f.lower <= f.upper);
        assert_eq!(f.var, (-f.lower).max(0.0));
    }
    for (w, s) in st.innovations.w.iter().zip(st.proxy.s_hat.iter()) {
        assert!(w.abs() > 0.0);
        assert_eq!(w.signum(), s.signum());
    }
}

#[test]
fn constant_panel_rejected_at_fit() {
    let y = DMatrix::from_element(5, 200, 3.0);
    let r = FittedPipeline::fit(&y, (0..5).map(|i| format!("s{i}")).collect(), &PipelineConfig::default());
    assert!(matches!(r, Err(GdfmError::ZeroVariance(_))));
}

#[test]
fn multiplicative_innovations_are_centered_on_the_design() {
    let d = DgpConfig { n: 50, t: 500, seed: 16, ..DgpConfig::default() };
    let sim = generate(&d, &mut rng_for(16, 0)).unwrap();
    let cfg = PipelineConfig { kappa: 0.0, vol_bandwidth: 15, ..PipelineConfig::default() };
    let m = FittedPipeline::fit_panel(&sim.panel, &cfg).unwrap();
    let w = &m.fitted_state().unwrap().innovations.w;
    let pos = w.iter().filter(|v| **v > 0.0).count() as f64 / w.len() as f64;
    assert!((pos - 0.5).abs() < 0.05, "share of positive innovations {pos}");
}

#[test]
fn hit_summaries() {
    let all = HitSeries::from_hits(&[true; 5], 0.1);
    let s = summarize(&all);
    assert_eq!((s.coverage, s.upper_rate, s.lower_rate), (1.0, 0.0, 0.0));
    let pts = [(0.0, -1.0, 1.0), (2.0, -1.0, 1.0), (0.5, -1.0, 1.0), (3.0, -1.0, 1.0)];
    let s = summarize(&HitSeries::from_bounds(&pts, 0.1));
    assert_eq!((s.coverage, s.upper_rate, s.lower_rate), (0.5, 0.5, 0.0));
}

#[test]
fn cover_statistic_examples() {
    let exact = HitSeries::from_hits(&[vec![true; 9], vec![false]].concat(), 0.1);
    let (stat, p) = lr_cover(&exact);
    assert!(stat.abs() < 1e-12 && (p - 1.0).abs() < 1e-12);
    let m = 40;
    let (stat, _) = lr_cover(&HitSeries::from_hits(&vec![true; m], 0.2));
    assert!((stat - m as f64 * 0.2 / 0.8).abs() < 1e-12);
}

fn brute_ind(h: &[bool]) -> f64 {
    let mut n = [[0.0f64; 2]; 2];
    for w in h.windows(2) {
        n[usize::from(w[0])][usize::from(w[1])] += 1.0;
    }
    let xl = |x: f64, p: f64| if x == 0.0 { 0.0 } else { x * p.ln() };
    let pi = (n[0][1] + n[1][1]) / (n[0][0] + n[0][1] + n[1][0] + n[1][1]);
    let p01 = n[0][1] / (n[0][0] + n[0][1]).max(1.0);
    let p11 = n[1][1] / (n[1][0] + n[1][1]).max(1.0);
    let l0 = xl(n[0][0] + n[1][0], 1.0 - pi) + xl(n[0][1] + n[1][1], pi);
    let l1 = xl(n[0][0], 1.0 - p01) + xl(n[0][1], p01) + xl(n[1][0], 1.0 - p11) + xl(n[1][1], p11);
    2.0 * (l1 - l0)
}

#[test]
fn independence_examples() {
    let alt = [true, false, true, false];
    let ind = lr_independence(&HitSeries::from_hits(&alt, 0.1));
    assert_eq!((ind.pi01, ind.pi11), (1.0, 0.0));
    assert!((ind.statistic - brute_ind(&alt)).abs() < 1e-12);
    assert!(ind.statistic > 0.0);

    let ones = lr_independence(&HitSeries::from_hits(&[true; 20], 0.1));
    assert!(ones.degenerate && ones.statistic == 0.0);

    let period3: Vec<bool> = (0..300).map(|i| i % 3 != 2).collect();
    let ind = lr_independence(&HitSeries::from_hits(&period3, 0.1));
    assert!((ind.statistic - brute_ind(&period3)).abs() < 1e-10);

}

#[test]
fn combined_is_sum_on_random_sequences() {
    let mut rng = rng_for(17, 0);
    for _ in 0..1000 {
        let len = rng.random_range(2..80);
        let h: Vec<bool> = (0..len).map(|_| rng.random_bool(0.8)).collect();
        let s = HitSeries::from_hits(&h, 0.1);
        let (c, _) = lr_cover(&s);
        let i = lr_independence(&s).statistic;
        assert_eq!(lr_combined(&s).0, c + i);
    }
}

#[test]
fn garch_on_white_noise() {
    let y: Vec<f64> = normal(1, 20_000, 18).iter().copied().collect();
    let f = fit_garch(&y).unwrap();
    assert!(f.params.gamma < 0.03, "{:?}", f.params);
    let uncond = f.params.omega / (1.0 - f.params.beta);
    assert!((uncond - 1.0).abs() < 0.1, "{uncond}");
}

#[test]
fn garch_rejects_constant_series() {
    assert!(fit_garch(&[2.0; 300]).is_err());
}

fn simulate_garch(p: &GarchParams, t: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 0);
    let mut s2 = p.omega / (1.0 - p.gamma - p.beta);
    let mut prev: f64 = 0.0;
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        s2 = p.omega + p.gamma * prev * prev + p.beta * s2;
        prev = s2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        out.push(prev);
    }
    out
}

#[test]
fn garch_optimum_dominates_random_starts() {
    let truth = GarchParams { omega: 0.1, gamma: 0.08, beta: 0.87 };
    let y = simulate_garch(&truth, 3000, 19);
    let f = fit_garch(&y).unwrap();
    let mut rng = rng_for(19, 1);
    for _ in 0..20 {
        let g = rng.random_range(0.0..0.5);
        let p = GarchParams { omega: rng.random_range(0.001..1.0), gamma: g, beta: rng.random_range(0.0..(0.999 - g)) };
        assert!(quasi_loglik(&y, f.mean, f.initial_variance, &p) <= f.loglik + 1e-9);
    }
}

// Nelder-Mead in the original coordinates with an infinite barrier outside
// the feasible region, used as a reference optimizer.
fn barrier_fit(y: &[f64], mean: f64, init: f64, start: [f64; 3]) -> f64 {
    let cost = |x: &[f64; 3]| {
        let p = GarchParams { omega: x[0], gamma: x[1], beta: x[2] };
        if x[0] <= 0.0 || x[1] < 0.0 || x[2] < 0.0 || x[1] + x[2] >= 1.0 {
            f64::INFINITY
        } else {
            -quasi_loglik(y, mean, init, &p)
        }
    };
    let mut simplex: Vec<[f64; 3]> = vec![start];
    for i in 0..3 {
        let mut v = start;
        v[i] *= 0.8;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(cost).collect();
    for _ in 0..20_000 {
        let mut idx = [0usize, 1, 2, 3];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let (best, worst, second) = (idx[0], idx[3], idx[2]);
        if (vals[worst] - vals[best]).abs() < 1e-13 {
            break;
        }
        let mut c = [0.0; 3];
        for &i in &idx[..3] {
            for k in 0..3 {
                c[k] += simplex[i][k] / 3.0;
            }
        }
        let at = |t: f64| {
            let mut v = [0.0; 3];
            for k in 0..3 {
                v[k] = c[k] + t * (simplex[worst][k] - c[k]);
            }
            v
        };
        let r = at(-1.0);
        let fr = cost(&r);
        if fr < vals[best] {
            let e = at(-2.0);
            let fe = cost(&e);
            if fe < fr {
                simplex[worst] = e;
                vals[worst] = fe;
            } else {
                simplex[worst] = r;
                vals[worst] = fr;
            }
        } else if fr < vals[second] {
            simplex[worst] = r;
            vals[worst] = fr;
        } else {
            let k = at(0.5);
            let fk = cost(&k);
            if fk < vals[worst] {
                simplex[worst] = k;
                vals[worst] = fk;
            } else {
                for &i in &idx[1..] {
                    for d in 0..3 {
                        simplex[i][d] = simplex[best][d] + 0.5 * (simplex[i][d] - simplex[best][d]);
                    }
                    vals[i] = cost(&simplex[i]);
                }
            }
        }
    }
    -vals.iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn reparameterized_fit_matches_constrained_reference() {
    for s in 0..10 {
        let truth = GarchParams { omega: 0.05 + 0.01 * s as f64, gamma: 0.1, beta: 0.8 };
        let y = simulate_garch(&truth, 2000, 40 + s);
        let f = fit_garch(&y).unwrap();
        let reference = barrier_fit(&y, f.mean, f.initial_variance, [f.params.omega, f.params.gamma, f.params.beta]);
        assert!((f.loglik - reference).abs() <= 1e-6 * f.loglik.abs().max(1.0), "series {s}: {} vs {reference}", f.loglik);
    }
}

#[test]
fn garch_interval_scales_with_sigma() {
    // window of exact normal quantiles
    let dist = normal_quantiles(999);
    let (lo, hi) = quantile_bounds(0.0, 1.0, &dist, 0.025, 0.025).unwrap();
    assert!((lo + 1.96).abs() < 0.02 && (hi - 1.96).abs() < 0.02, "[{lo}, {hi}]");
    let (lo2, hi2) = quantile_bounds(0.0, 2.0, &dist, 0.025, 0.025).unwrap();
    assert_eq!((lo2, hi2), (2.0 * lo, 2.0 * hi));
}

// Φ⁻¹(i/(n+1)) by bisection on a series expansion of erf.
fn normal_quantiles(n: usize) -> Vec<f64> {
    let cdf = |x: f64| 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
    (1..=n)
        .map(|i| {
            let p = i as f64 / (n + 1) as f64;
            let (mut a, mut b) = (-10.0, 10.0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if cdf(m) < p {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

fn erf(x: f64) -> f64 {
    if x.abs() > 6.0 {
        return x.signum();
    }
    let mut sum: f64 = 0.0;
    let mut term = x;
    let mut k = 0.0;
    while term.abs() > 1e-17 * sum.abs().max(1e-300) || k < 5.0 {
        sum += term / (2.0 * k + 1.0);
        k += 1.0;
        term *= -x * x / k;
        if k > 400.0 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn error_metric_examples() {
    let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let m = error_metrics(&t, &t).unwrap();
    assert_eq!((m.mse, m.mad, m.max), (0.0, 0.0, 0.0));
    let mut e = t.clone();
    e[(1, 0)] += 2.0;
    let m = error_metrics(&t, &e).unwrap();
    assert_eq!((m.mse, m.mad, m.max), (1.0, 0.5, 2.0));
}

#[test]
fn single_replication_smoke_run() {
    let d = DgpConfig { n: 20, t: 200, seed: 21, ..DgpConfig::default() };
    let cfg = PipelineConfig { vol_bandwidth: 10, ..PipelineConfig::default() };
    let r = run_mc(&d, &cfg, &McOptions { coverage: true, holdout: 20 }).unwrap();
    assert_eq!(r.seeds.len(), 1);
    assert_eq!(r.failures, 0);
    assert!(r.mse_x.is_finite() && r.mse_chi.is_finite());
    assert!(r.max_x >= r.mad_x && r.max_chi >= r.mad_chi);
    assert_eq!(r.coverage.len(), 2);
    for c in &r.coverage {
        assert!((c.coverage + c.v_plus + c.v_minus - 1.0).abs() < 1e-12);
        assert_eq!(c.points, 20 * 20);
    }
    let json = serde_json::to_value(&r).unwrap();
    for key in ["mse_x", "mad_x", "max_x", "mse_chi", "mad_chi", "max_chi", "coverage", "seeds", "failures"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn saved_model_reproduces_forecasts_exactly() {
    let d = DgpConfig { n: 20, t: 300, seed: 22, ..DgpConfig::default() };
    let sim = generate(&d, &mut rng_for(22, 0)).unwrap();
    let cfg = PipelineConfig { vol_bandwidth: 10, ..PipelineConfig::default() };
    let m = FittedPipeline::fit_panel(&sim.panel, &cfg).unwrap();
    let back: FittedPipeline = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    let a = gdfm::forecast::forecast_records(&m, &[0.1]).unwrap();
    let b = gdfm::forecast::forecast_records(&back, &[0.1]).unwrap();
    assert_eq!(a, b);
}
