use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use oam_entlab::exec::Execution;
use oam_entlab::modes::*;

const WF: f64 = PAPER_FIBER_WAIST_UM;

fn optics() -> AnalysisOptics {
    AnalysisOptics::default()
}

#[test]
fn lg_modes_are_orthonormal() {
    let ms: Vec<i32> = (-3..=3).collect();
    let m = overlap_matrix(&ms, WF, DEFAULT_NODES, DEFAULT_NODES).unwrap();
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C64::new(expect, 0.0)).norm() < 1e-6, "m={} m'={}: {v}", ms[i], ms[j]);
        }
    }
}

#[test]
fn phase_winds_by_two_pi_m() {
    let grid = Arc::new(PolarGrid::for_waists(&[WF], DEFAULT_NODES, DEFAULT_NODES).unwrap());
    let ring = grid.radii().iter().position(|&r| r > 0.7 * WF).unwrap();
    for m in -3..=3 {
        let f = evaluate_mode(&LgMode::new(0, m, WF).unwrap(), &grid).unwrap();
        assert!((f.phase_winding(ring) - 2.0 * PI * m as f64).abs() < 1e-3, "m = {m}");
    }
}

#[test]
fn two_waist_gaussian_overlap() {
    let (w1, w2) = (140.0, 400.0);
    let analytic = 2.0 * w1 * w2 / (w1 * w1 + w2 * w2);
    for n in [DEFAULT_NODES, 2 * DEFAULT_NODES] {
        let grid = Arc::new(PolarGrid::for_waists(&[w1, w2], n, n).unwrap());
        let a = evaluate_mode(&LgMode::gaussian(w1).unwrap(), &grid).unwrap();
        let b = evaluate_mode(&LgMode::gaussian(w2).unwrap(), &grid).unwrap();
        let v = overlap(&a, &b).unwrap();
        assert!((v.re - analytic).abs() < 1e-6 && v.im.abs() < 1e-9, "n = {n}: {v}");
    }
}

#[test]
fn overlaps_converge_under_grid_doubling() {
    let ms = [-1, 0, 1, 2];
    let coarse = overlap_matrix(&ms, WF, DEFAULT_NODES, DEFAULT_NODES).unwrap();
    let fine = overlap_matrix(&ms, WF, 2 * DEFAULT_NODES, 2 * DEFAULT_NODES).unwrap();
    for (r0, r1) in coarse.iter().zip(&fine) {
        for (a, b) in r0.iter().zip(r1) {
            assert!((a - b).norm() < 1e-6);
        }
    }
    let fine_optics = optics().with_nodes(2 * DEFAULT_NODES, 2 * DEFAULT_NODES);
    for s in [AnalyzerSetting::blank(WF), AnalyzerSetting::fork(0.0, 0.0, WF), AnalyzerSetting::fork(0.7, 1.0, WF)] {
        let a = analyzer_state(&s, &optics()).unwrap();
        let b = analyzer_state(&s, &fine_optics).unwrap();
        assert!((a.raw_alpha - b.raw_alpha).norm() < 1e-6, "{s:?}");
        assert!((a.raw_beta - b.raw_beta).norm() < 1e-6, "{s:?}");
    }
}

#[test]
fn beta_weight_is_monotone_in_displacement() {
    let ds: Vec<f64> = (0..100).map(|k| 5.0 * k as f64 / 99.0).collect();
    let rows = displacement_scan(&ds, 0.0, WF, &optics(), Execution::Parallel).unwrap();
    let beta: Vec<f64> = rows.iter().map(|r| r.beta_re * r.beta_re + r.beta_im * r.beta_im).collect();
    for w in beta.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
    }
    assert!(beta[0] >= 0.999);
}

/// Renormalized `|beta|^2` of a charge-1 analyzer by a plain Cartesian sum.
fn cartesian_beta_weight(d: f64, wb: f64, wf: f64) -> f64 {
    let half = GRID_WAISTS * wb.max(wf) + d * wb;
    let n = 600;
    let h = 2.0 * half / n as f64;
    let x0 = -d * wb;
    let norm = (2.0 / PI).sqrt();
    let (mut a, mut b) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for i in 0..n {
        let x = -half + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -half + (j as f64 + 0.5) * h;
            let r2 = x * x + y * y;
            let fiber = norm / wf * (-r2 / (wf * wf)).exp();
            let field = C64::from_polar(fiber, (y).atan2(x - x0));
            let g = norm / wb * (-r2 / (wb * wb)).exp();
            let lg00 = g;
            let lg01 = C64::from_polar(g * 2f64.sqrt() * r2.sqrt() / wb, y.atan2(x));
            a += field * lg00;
            b += field * lg01.conj();
        }
    }
    b.norm_sqr() / (a.norm_sqr() + b.norm_sqr())
}

#[test]
fn balanced_displacement_matches_cartesian_scan() {
    let o = optics();
    let d_star = balanced_displacement(WF, &o).unwrap();
    let wb = o.analysis_waist_um;
    let step = 1e-3;
    let mut d = d_star - 0.02;
    let mut prev = cartesian_beta_weight(d, wb, WF) - 0.5;
    let mut root = None;
    while d < d_star + 0.02 {
        let next = cartesian_beta_weight(d + step, wb, WF) - 0.5;
        if prev > 0.0 && next <= 0.0 {
            root = Some(d + step * prev / (prev - next));
            break;
        }
        prev = next;
        d += step;
    }
    let root = root.expect("no crossing near d*");
    assert!((root - d_star).abs() < 1e-3, "{root} vs {d_star}");
}

#[test]
fn radial_penalty_bounds() {
    let o = optics();
    let b = BasisAnalyzers::new(WF, o).unwrap();
    use oam_entlab::state::MeasBasisState::*;
    assert_eq!(b.penalty(&Zero, &Zero).unwrap(), 0.0);
    let diag = b.penalty(&Zero, &One).unwrap();
    assert!(diag > 0.0 && diag <= 0.10, "{diag}");
    for (x, y) in [(Plus, Plus), (Plus, Minus), (U, D), (D, D)] {
        assert!(b.penalty(&x, &y).unwrap() < 1e-2);
    }
}

#[test]
fn distinction_ratio_exceeds_thousand() {
    assert!(distinction_ratio(WF, &optics()).unwrap() >= 1000.0);
}

#[test]
fn analyzer_records_serialize_with_fixed_fields() {
    let s = AnalyzerSetting::blank(WF);
    let st = analyzer_state(&s, &optics()).unwrap();
    let v = serde_json::to_value(AnalyzerRecord::new(&s, &st)).unwrap();
    for k in ["charge", "displacement", "orientation", "alpha_re", "alpha_im", "beta_re", "beta_im", "leakage"] {
        assert!(v.get(k).is_some(), "{k}");
    }
    assert!((v["alpha_re"].as_f64().unwrap() - 1.0).abs() < 1e-15);
    assert!(v["beta_re"].as_f64().unwrap().abs() < 1e-15);
}
