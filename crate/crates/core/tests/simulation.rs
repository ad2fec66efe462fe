use kpzlab::profiles::Profile;
use kpzlab::report::{merge, Table, TableHeader};
use kpzlab::sim::{
    estimate_moment, first_moment_oracle, read_ensemble, run, second_moment_oracle, simulate,
    write_ensemble, Initial, LatticeConfig,
};
use serde_json::json;

#[test]
fn flat_mean_is_one_at_every_site() {
    let cfg = LatticeConfig::new(0.5, 2.0).unwrap();
    let flat = Initial::Profile(Profile::flat());
    let times = [0.5, 1.0, 2.0];
    let n = 4000;
    let out = simulate(&flat, &cfg, n, 11, &times, |_, _, f| f.to_vec()).unwrap();
    let inner = cfg.site(-3.0).unwrap()..=cfg.site(3.0).unwrap();
    let mut worst: f64 = 0.0;
    for (k, &t) in times.iter().enumerate() {
        for i in inner.clone() {
            let v: Vec<f64> = out.observations.iter().map(|r| r[k][i]).collect();
            let m = estimate_moment(&v, 1.0, t, cfg.x(i), 11).unwrap();
            worst = worst.max(((m.mean - 1.0) / m.stderr).abs());
        }
    }
    // 39 correlated comparisons; 4.5 sigma keeps the family-wise error small
    assert!(worst <= 4.5, "worst z = {worst}");
    assert!(out.clamp_rate() < 1e-3);
}

#[test]
fn narrow_wedge_second_moment_matches_oracle() {
    let cfg = LatticeConfig::new(0.5, 2.0).unwrap();
    let times = [0.5, 1.0, 2.0];
    let o = cfg.origin();
    let out = simulate(
        &Initial::NarrowWedge,
        &cfg,
        20_000,
        12,
        &times,
        |_, _, f| f[o],
    )
    .unwrap();
    let oracle = second_moment_oracle(&Initial::NarrowWedge, &cfg, &times).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let v: Vec<f64> = out.observations.iter().map(|r| r[k]).collect();
        let m = estimate_moment(&v, 2.0, t, 0.0, 12).unwrap();
        let z = (m.mean - oracle.at_origin(k)) / m.stderr;
        assert!(
            z.abs() <= 3.5,
            "t={t}: {} vs {} (z={z})",
            m.mean,
            oracle.at_origin(k)
        );
    }
}

#[test]
fn narrow_wedge_is_reflection_symmetric() {
    let cfg = LatticeConfig::new(0.5, 1.0).unwrap();
    let (i, j) = (cfg.site(1.0).unwrap(), cfg.site(-1.0).unwrap());
    let out = simulate(
        &Initial::NarrowWedge,
        &cfg,
        20_000,
        13,
        &[1.0],
        |_, _, f| (f[i], f[j]),
    )
    .unwrap();
    let d: Vec<f64> = out.observations.iter().map(|r| r[0].0 - r[0].1).collect();
    let (mean, se) = kpzlab::sim::mean_stderr(&d);
    assert!((mean / se).abs() <= 3.5, "paired difference {mean} ± {se}");
    let mean_oracle = first_moment_oracle(&Initial::NarrowWedge, &cfg, &[1.0]).unwrap();
    assert!((mean_oracle[0][i] - mean_oracle[0][j]).abs() < 1e-15);
}

#[test]
fn ensemble_file_round_trip_and_reanalysis() {
    let cfg = LatticeConfig::new(0.5, 1.0).unwrap();
    let init = Initial::Profile(Profile::brownian(0.0, 0.0).unwrap());
    let e = run(&init, &cfg, 500, 14).unwrap();
    let mut buf = Vec::new();
    write_ensemble(&mut buf, &e).unwrap();
    let back = read_ensemble(buf.as_slice()).unwrap();
    assert_eq!(back, e);
    assert_eq!(
        back.estimate_moment(1.0, 0.0).unwrap().mean.to_bits(),
        e.estimate_moment(1.0, 0.0).unwrap().mean.to_bits()
    );
    let again = run(&init, &cfg, 500, 14).unwrap();
    assert_eq!(again.fields, e.fields);
}

#[test]
fn tables_merge_into_bundle() {
    let mut t = Table::new(
        TableHeader::new("moments", &["t", "mean"], json!({"seed": 1}))
            .with_summary(json!({"status": "inconclusive"})),
    );
    t.push(vec![1.0, 0.999]);
    let b = merge(&[("m.csv".into(), t.to_string())]).unwrap();
    assert_eq!(b.overall.as_deref(), Some("inconclusive"));
    assert_eq!(b.entries[0].kind, "moments");
}
