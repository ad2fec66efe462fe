//! Acceptance suite. Each test prints one line per criterion:
//! `criterion N: PASS|FAIL <evidence>`.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use kpzlab::hyp::{full_report, HypOptions, Status};
use kpzlab::numerics::geometric;
use kpzlab::profiles::Profile;
use kpzlab::rates::{
    brownian_rate_upper, closed_form_rate, cramer_toy_validate, deterministic_rate, g_brownian,
    ldp_from_lyapunov, lyapunov, lyapunov_curve, rate_function, Family, GSource,
};
use kpzlab::sim::{
    convolution_check, estimate_moment, first_moment_oracle, lyapunov_slope_fit,
    second_moment_oracle, second_moment_series, simulate, stationarity_check, CheckStatus, Initial,
    LatticeConfig,
};
use kpzlab::variational::g_estimate;

fn verdict(n: u32, pass: bool, detail: String) {
    println!(
        "criterion {n}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_closed_form_duality() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 1..=50 {
        let s = 3.0 * i as f64 / 50.0;
        let r = rate_function(s, &GSource::ClosedFormZero, 0.0).unwrap();
        worst = worst.max((r.rate - 4.0 * SQRT_2 / 3.0 * s.powf(1.5)).abs());
    }
    let mut continuity: f64 = 0.0;
    for a in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let g = GSource::brownian(a);
        let zeta = g.zeta();
        for i in 1..=50 {
            let s = zeta + (3.0 - zeta) * i as f64 / 50.0;
            let num = rate_function(s, &g, zeta).unwrap().rate;
            let exact = closed_form_rate(s, Family::Brownian { a }).unwrap();
            worst = worst.max((num - exact).abs());
        }
        let edge = a * a / 2.0;
        if a < 0.0 {
            continuity =
                continuity.max((deterministic_rate(edge) - brownian_rate_upper(edge, a)).abs());
        } else {
            // the rate vanishes at the left edge of its domain
            continuity = continuity.max(brownian_rate_upper(edge, a).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        worst <= 1e-6 && continuity <= 1e-12 && secs < 1.0,
        format!("max |numeric - closed form| = {worst:.2e} (tol 1e-6), branch gap {continuity:.2e} (tol 1e-12), {secs:.2}s"),
    );
}

#[test]
fn criterion_02_lyapunov_closed_forms() {
    let start = Instant::now();
    let mut worst_rel: f64 = 0.0;
    let sources = [
        GSource::ClosedFormZero,
        GSource::brownian(-1.0),
        GSource::brownian(0.0),
        GSource::brownian(1.0),
    ];
    let p_grid: Vec<f64> = (0..=490).map(|i| 0.1 + 0.01 * i as f64).collect();
    for g in &sources {
        let curve = lyapunov_curve(&p_grid, g).unwrap();
        for (&p, e) in p_grid.iter().zip(&curve.entries) {
            let want = (p * p * p - p) / 24.0 + g.value(p);
            let got = lyapunov(p, g).unwrap();
            worst_rel = worst_rel.max((got - want).abs() / want.abs().max(1e-300));
            worst_rel = worst_rel.max((e.1 - want).abs() / want.abs().max(1e-300));
        }
    }
    let sched = geometric(10.0, 1e5, 9);
    let mut worst_g: f64 = 0.0;
    for (ap, am) in [(0.0, 0.0), (1.0, -1.0), (-1.0, -1.0), (0.5, 0.25)] {
        let prof = Profile::brownian(ap, am).unwrap();
        for p in [0.5, 1.0, 2.0, 3.0] {
            let want = g_brownian(p, ap, am).unwrap();
            let est = g_estimate(&prof, p, &sched, 1e-3).unwrap();
            for &(_, phi) in &est.trace {
                worst_g = worst_g.max((phi - want).abs() / want.max(1.0));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        worst_rel <= 4.0 * f64::EPSILON && worst_g <= 4.0 * f64::EPSILON && secs < 1.0,
        format!("lyapunov rel err {worst_rel:.1e}, Brownian variational g vs closed form {worst_g:.1e} at every t (tol 4 ulp), {secs:.2}s"),
    );
}

#[test]
fn criterion_03_g_limits_vanish() {
    let start = Instant::now();
    let sched = geometric(10.0, 1e5, 9);
    let mut profiles: Vec<Profile> = [0.25, 0.5, 0.75]
        .iter()
        .map(|&d| Profile::power_law(d, 1.0).unwrap())
        .collect();
    profiles.extend([0.25, 0.5].iter().map(|&a| Profile::parabolic(a).unwrap()));
    let mut worst_g: f64 = 0.0;
    let mut monotone = true;
    for prof in &profiles {
        for p in [0.5, 1.0, 2.0] {
            let e = g_estimate(prof, p, &sched, 1e-3).unwrap();
            worst_g = worst_g.max(e.g.abs());
            monotone &= e
                .trace
                .windows(2)
                .all(|w| w[1].1.abs() <= w[0].1.abs() * (1.0 + 1e-12) + 1e-15);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        worst_g <= 1e-2 && monotone && secs < 30.0,
        format!(
            "max |g| = {worst_g:.2e} (tol 1e-2), |phi(t)| non-increasing: {monotone}, {secs:.2}s"
        ),
    );
}

#[test]
fn criterion_04_hyp_reports() {
    let start = Instant::now();
    let profiles = [
        ("bounded sine", Profile::sine(1.0, 1.0)),
        ("power law", Profile::power_law(0.5, 1.0).unwrap()),
        ("parabolic", Profile::parabolic(0.5).unwrap()),
        ("brownian +1", Profile::brownian(1.0, 1.0).unwrap()),
        ("brownian -1", Profile::brownian(-1.0, -1.0).unwrap()),
    ];
    let opts = HypOptions::default();
    let mut lines = Vec::new();
    let mut all = true;
    for (name, prof) in &profiles {
        let r = full_report(prof, 1.0, &opts).unwrap();
        let failed: Vec<String> = r
            .entries
            .iter()
            .filter(|e| e.status != Status::Pass)
            .map(|e| format!("{:?}={:?}", e.condition, e.status))
            .collect();
        all &= r.status == Status::Pass;
        lines.push(format!(
            "{name}: {:?}{}",
            r.status,
            if failed.is_empty() {
                String::new()
            } else {
                format!(" {failed:?}")
            }
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        all && secs < 120.0,
        format!(
            "{} ({} Brownian paths per cell), {secs:.1}s",
            lines.join("; "),
            opts.stationarity.n_samples
        ),
    );
}

#[test]
fn criterion_05_simulator_matches_oracles() {
    let start = Instant::now();
    let k = 3.0;
    let n = 100_000;
    let times = [0.5, 1.0, 2.0, 4.0];
    let cfg = LatticeConfig::new(0.25, 4.0).unwrap();
    let flat = Initial::Profile(Profile::flat());
    let o = cfg.origin();
    let out = simulate(&flat, &cfg, n, 5, &times, |_, _, f| f[o]).unwrap();
    let oracle = second_moment_oracle(&flat, &cfg, &times).unwrap();
    let mut detail = Vec::new();
    let mut pass = true;
    for (j, &t) in times.iter().enumerate() {
        let v: Vec<f64> = out.observations.iter().map(|r| r[j]).collect();
        if t == 1.0 {
            let m = estimate_moment(&v, 1.0, t, 0.0, 5).unwrap();
            let z = (m.mean - 1.0) / m.stderr;
            pass &= z.abs() <= k;
            detail.push(format!(
                "flat mean t=1 {:.4}±{:.4} (z={z:.2})",
                m.mean, m.stderr
            ));
        }
        let m2 = estimate_moment(&v, 2.0, t, 0.0, 5).unwrap();
        let want = oracle.at_origin(j);
        let z = (m2.mean - want) / m2.stderr;
        pass &= z.abs() <= k;
        detail.push(format!(
            "E Z²(t={t}) {:.4} vs {:.4} (z={z:.2})",
            m2.mean, want
        ));
    }
    let clamp = out.clamp_rate();

    let nw_cfg = LatticeConfig::new(0.25, 1.0).unwrap();
    let nw = simulate(&Initial::NarrowWedge, &nw_cfg, n, 6, &[1.0], |_, _, f| {
        f[nw_cfg.origin()]
    })
    .unwrap();
    let v: Vec<f64> = nw.observations.iter().map(|r| r[0]).collect();
    let m = estimate_moment(&v, 1.0, 1.0, 0.0, 6).unwrap();
    let want =
        first_moment_oracle(&Initial::NarrowWedge, &nw_cfg, &[1.0]).unwrap()[0][nw_cfg.origin()];
    let z = (m.mean - want) / m.stderr;
    pass &= z.abs() <= k;
    detail.push(format!(
        "narrow wedge mean t=1 {:.5} vs {:.5} (z={z:.2})",
        m.mean, want
    ));
    pass &= clamp < 1e-3;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        pass && secs < 600.0,
        format!(
            "{}; clamp rate {clamp:.1e}; {n} replicas, dx=0.25; {secs:.0}s",
            detail.join("; ")
        ),
    );
}

#[test]
fn criterion_06_second_moment_slope() {
    let start = Instant::now();
    let times: Vec<f64> = (0..=30).map(|i| 5.0 + 0.5 * i as f64).collect();
    let mut slopes = Vec::new();
    for dx in [0.25, 0.125] {
        let cfg = LatticeConfig::new(dx, 20.0).unwrap();
        let series =
            second_moment_series(&Initial::Profile(Profile::flat()), &cfg, &times).unwrap();
        let logs: Vec<f64> = series.iter().map(|v| v.ln()).collect();
        let fit = lyapunov_slope_fit(
            &times,
            &logs,
            &vec![0.0; times.len()],
            (5.0, 20.0),
            Some(0.25),
        )
        .unwrap();
        slopes.push((dx, fit.slope));
    }
    let (s1, s2) = (slopes[0].1, slopes[1].1);
    let within = (s1 - 0.25).abs() <= 0.15 * 0.25;
    let toward = (s2 - 0.25).abs() < (s1 - 0.25).abs();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        6,
        within && toward && secs < 900.0,
        format!(
            "slope of log E Z²(t,0) over t in [5,20]: dx=0.25 -> {s1:.4}, dx=0.125 -> {s2:.4} (target 0.25, tol 15%), {secs:.1}s"
        ),
    );
}

#[test]
fn criterion_07_convolution_formula() {
    let start = Instant::now();
    let cfg = LatticeConfig::new(0.25, 1.0).unwrap();
    let n = 100_000;
    let flat = convolution_check(&Profile::flat(), &cfg, n, 21, 3.0).unwrap();
    let pl = convolution_check(&Profile::power_law(0.5, 0.5).unwrap(), &cfg, n, 22, 3.0).unwrap();
    let pass = flat.status == CheckStatus::Pass
        && pl.z_mean.abs() <= 3.0
        && pl.status != CheckStatus::Inconclusive;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        7,
        pass && secs < 600.0,
        format!(
            "flat: means {:.4}/{:.4} (z={:.2}), second moments {:.4}/{:.4} (z={:.2}); power law: means {:.4}/{:.4} (z={:.2}); {secs:.0}s",
            flat.lhs.mean, flat.rhs.mean, flat.z_mean, flat.lhs.second, flat.rhs.second, flat.z_second,
            pl.lhs.mean, pl.rhs.mean, pl.z_mean
        ),
    );
}

#[test]
fn criterion_08_stationarity() {
    let start = Instant::now();
    let cfg = LatticeConfig::new(0.25, 1.0).unwrap();
    let r = stationarity_check(&cfg, 100_000, &[0.0, 0.5, 1.0], 31, 3.0).unwrap();
    let pairs: Vec<String> = r
        .pairs
        .iter()
        .map(|p| {
            format!(
                "({},{}) dmean={:+.4} z={:+.2}",
                p.x1, p.x2, p.mean_diff, p.z_mean
            )
        })
        .collect();
    let means_ok = r.pairs.iter().all(|p| p.z_mean.abs() <= 3.0);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        means_ok && r.status == CheckStatus::Pass && secs < 300.0,
        format!("{}; overall {:?}; {secs:.0}s", pairs.join(" "), r.status),
    );
}

#[test]
fn criterion_09_ldp_engine_and_cramer_toy() {
    let start = Instant::now();
    let p: Vec<f64> = (1..=600).map(|i| 0.01 * i as f64).collect();
    let h: Vec<f64> = p.iter().map(|q| q * q / 2.0).collect();
    let mut worst: f64 = 0.0;
    for i in 0..=36 {
        let s = 0.2 + 0.05 * i as f64;
        let r = ldp_from_lyapunov(&p, &h, s).unwrap();
        worst = worst.max((r.rate - s * s / 2.0).abs());
    }
    let report = cramer_toy_validate(&[0.5], 200, 1_000_000, 41).unwrap();
    let pt = &report.points[0];
    let rel = (pt.tilted_slope_rate - 0.125).abs() / 0.125;
    let oracle_ok = pt.oracle_z.abs() <= 3.0;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        9,
        worst <= 1e-4 && rel <= 0.10 && oracle_ok && secs < 120.0,
        format!(
            "engine max err {worst:.1e} (tol 1e-4); toy t=200 s=0.5: slope rate {:.4} ({:.1}% from 0.125), raw -(1/t)log P {:.4}±{:.4} vs exact {:.4} (z={:.2}), direct hits {}; {secs:.1}s",
            pt.tilted_slope_rate,
            100.0 * rel,
            pt.tilted_rate,
            pt.tilted_rate_stderr,
            pt.oracle_rate,
            pt.oracle_z,
            pt.hits
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let cfg = LatticeConfig::new(0.25, 1.0).unwrap();
    let brown = Initial::Profile(Profile::brownian(0.5, -0.5).unwrap());
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let sim = simulate(&brown, &cfg, 2_000, 77, &[0.5, 1.0], |_, _, f| f.to_vec()).unwrap();
            let toy = cramer_toy_validate(&[0.5], 50, 50_000, 78).unwrap();
            let conv = convolution_check(&Profile::flat(), &cfg, 2_000, 79, 3.0).unwrap();
            (sim, toy, conv)
        })
    };
    let bits = |v: &[Vec<Vec<f64>>]| -> Vec<u64> {
        v.iter().flatten().flatten().map(|x| x.to_bits()).collect()
    };
    let (a, ta, ca) = run(1);
    let (b, tb, cb) = run(4);
    let (c, tc, cc) = run(1);
    let same = bits(&a.observations) == bits(&b.observations)
        && bits(&a.observations) == bits(&c.observations)
        && a.clamps == b.clamps
        && ta == tb
        && ta == tc
        && ca == cb
        && ca == cc;
    verdict(
        10,
        same,
        format!(
            "simulation ({} values), Cramér toy and convolution check bit-identical across 1 and 4 worker threads and a rerun",
            a.observations.len() * 2 * cfg.n_sites()
        ),
    );
}
