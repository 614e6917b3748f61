//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities (run with `-- --nocapture` to see them).
//!
//! Criteria:
//!  1. patch test (global P_k solutions reproduced on both families)
//!  2. energy-norm rates on squares (k=2 → 1, k=3 → 2)
//!  3. L² rates on squares (k=3 → 4; k=2 recorded, ≥ 2)
//!  4. energy rate on the non-convex pentagon family (k=3, r=11)
//!  5. commuting identity Δ_w u = Q_r(Δu) on every cell of both families
//!  6. error-equation identity (Δ_w e_h, Δ_w v) = ℓ(u, v)
//!  7. norm equivalence c_min > 0, c_max < ∞, rescaling-stable
//!  8. SPD stiffness (dense eigenvalue check) and zero-data uniqueness
//!  9. convex-mode (r = N + k − 2) repeats of 1-3 on squares

use std::sync::OnceLock;

use nalgebra::DVector;

use wg2d::analysis::{
    discrete_h2_norm, energy_error, energy_norm, error_energy_product, local_norm_ratio,
    manufactured_poly, manufactured_trig, residual_functional_ell, verify_norm_equivalence,
    ErrorReport, KernelFreeSampler,
};
use wg2d::cli::{run_convergence, MeshFamily, SolutionKind, StudyConfig};
use wg2d::mesh::{generate_nonconvex_mesh, generate_square_mesh, Point, PolyMesh, Rect};
use wg2d::polyspaces::{data_exactness, project_cell_onto, CellBasis};
use wg2d::rng::SplitMix64;
use wg2d::solver::{
    assemble, build_kernels, impose_boundary_from, inject_qh, solve, BoundaryValues, DofMap,
    WeakDofVector,
};
use wg2d::weak_laplacian::{
    build_local_weak_laplacian, weak_laplacian_of_exact, RMode, WeakDofLayout,
};

fn study(k: usize, mesh: MeshFamily, r_mode: RMode) -> ErrorReport {
    let config = StudyConfig {
        k,
        mesh,
        r_mode,
        levels: vec![4, 8, 16, 32],
        solution: SolutionKind::Trig,
        ..StudyConfig::default()
    };
    let (report, _) = run_convergence(&config).expect("study runs");
    report
}

fn square_study(k: usize) -> &'static ErrorReport {
    static K2: OnceLock<ErrorReport> = OnceLock::new();
    static K3: OnceLock<ErrorReport> = OnceLock::new();
    match k {
        2 => K2.get_or_init(|| study(2, MeshFamily::Square, RMode::Nonconvex)),
        3 => K3.get_or_init(|| study(3, MeshFamily::Square, RMode::Nonconvex)),
        _ => unreachable!(),
    }
}

fn chevron_study_k3() -> &'static ErrorReport {
    static REPORT: OnceLock<ErrorReport> = OnceLock::new();
    REPORT.get_or_init(|| study(3, MeshFamily::Nonconvex, RMode::Nonconvex))
}

/// Relative discrete-H² distance between u_h and Q_h u for a global P_k
/// solution with exact data; fails when the solve does.
fn patch_test_error(mesh: &PolyMesh, k: usize, r_mode: RMode) -> Result<f64, wg2d::WgError> {
    let layout = WeakDofLayout::new(k, k, k - 1, r_mode)?;
    let map = DofMap::new(mesh, layout);
    let kernels = build_kernels(mesh, &layout)?;
    let sol = manufactured_poly(k);
    let bc = impose_boundary_from(mesh, &map, |p| (sol.u)(p), |p| (sol.grad_u)(p))?;
    let sys = assemble(mesh, &map, &kernels, |p| (sol.f)(p), &bc)?;
    let u_h = solve(&sys)?;
    let q_h = inject_qh(mesh, &map, |p| (sol.u)(p), |p| (sol.grad_u)(p))?;
    let mut diff = WeakDofVector::zeros(&map);
    for g in 0..map.total {
        diff.values[g] = u_h.values[g] - q_h.values[g];
    }
    let scale = discrete_h2_norm(mesh, &map, &kernels, &q_h);
    Ok(discrete_h2_norm(mesh, &map, &kernels, &diff) / scale)
}

#[test]
fn criterion_1_patch_test() {
    for k in [2usize, 3] {
        for (name, mesh) in [
            ("square", generate_square_mesh(4, Rect::unit())),
            ("chevron", generate_nonconvex_mesh(4)),
        ] {
            let rel = patch_test_error(&mesh, k, RMode::Nonconvex).unwrap();
            assert!(rel <= 1e-8, "criterion 1: k={k} {name}: rel = {rel:.3e}");
            println!("criterion 1 (patch test) k={k} {name}: PASS - rel err {rel:.3e}");
        }
    }
}

#[test]
fn criterion_2_energy_rate_squares() {
    let windows = [(2usize, 0.8, 1.3), (3usize, 1.8, 2.3)];
    for (k, lo, hi) in windows {
        let report = square_study(k);
        let rate = report.final_energy_rate().expect("final rate");
        assert!(
            rate >= lo && rate <= hi,
            "criterion 2: k={k} energy rate {rate:.3} outside [{lo}, {hi}]"
        );
        println!("criterion 2 (energy rate, square) k={k}: PASS - rate {rate:.3} in [{lo}, {hi}]");
    }
}

#[test]
fn criterion_3_l2_rate_k3() {
    let report = square_study(3);
    let rate = report.final_l2_rate().expect("final rate");
    assert!(
        (3.7..=4.3).contains(&rate),
        "criterion 3: k=3 L² rate {rate:.3} outside [3.7, 4.3]"
    );
    println!("criterion 3 (L² rate, square) k=3: PASS - rate {rate:.3} in [3.7, 4.3]");
}

// The k=2 L² error is duality-limited to O(h²), so the observed rate climbs
// toward 2 from below (measured 1.45 at n=16→32 and 1.83 at n=32→64) and
// cannot clear 2.0 at this resolution. The assertion is kept as stated
// and fails honestly; the measured history prints first.
#[test]
fn criterion_3_l2_rate_k2_recorded() {
    let report = square_study(2);
    let rates = report.rates();
    for (rec, (_, lr)) in report.records.iter().zip(&rates) {
        println!(
            "criterion 3 (L² rate, square) k=2: n={:>3} l2_err={:.6e} rate={}",
            rec.n,
            rec.l2_err,
            lr.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    let rate = report.final_l2_rate().expect("final rate");
    assert!(
        rate >= 2.0,
        "criterion 3: k=2 L² rate {rate:.3} below 2.0 at n=32 (sub-optimal \
         O(h²) duality bound is approached from below; 1.83 at n=64)"
    );
    println!("criterion 3 (L² rate, square) k=2: PASS - rate {rate:.3} recorded (>= 2.0)");
}

#[test]
fn criterion_4_nonconvex_energy_rate() {
    // Every chevron-family cell is a pentagon: r = 2·5 + 3 − 2 = 11.
    let mesh = generate_nonconvex_mesh(1);
    let layout = WeakDofLayout::new(3, 3, 2, RMode::Nonconvex).unwrap();
    assert!(mesh.cells.iter().all(|c| c.n_edges() == 5));
    assert_eq!(layout.r_for(5), 11);

    let report = chevron_study_k3();
    let rate = report.final_energy_rate().expect("final rate");
    assert!(
        (1.8..=2.3).contains(&rate),
        "criterion 4: chevron k=3 energy rate {rate:.3} outside [1.8, 2.3]"
    );
    println!("criterion 4 (energy rate, chevron, r=11) k=3: PASS - rate {rate:.3} in [1.8, 2.3]");
}

#[test]
fn criterion_5_commuting_identity() {
    for (family, mesh) in [
        ("square", generate_square_mesh(4, Rect::unit())),
        ("chevron", generate_nonconvex_mesh(4)),
    ] {
        for k in [2usize, 3] {
            let layout = WeakDofLayout::new(k, k, k - 1, RMode::Nonconvex).unwrap();
            let poly = manufactured_poly(k);
            let trig = manufactured_trig();
            let mut worst_poly: f64 = 0.0;
            let mut worst_trig: f64 = 0.0;
            for c in 0..mesh.cells.len() {
                let r = layout.r_for(mesh.cells[c].n_edges());
                let basis = CellBasis::for_cell(&mesh, c, r).unwrap();
                for (sol, worst) in [(&poly, &mut worst_poly), (&trig, &mut worst_trig)] {
                    let wl = weak_laplacian_of_exact(
                        &mesh,
                        c,
                        r,
                        |p| (sol.u)(p),
                        |p| (sol.grad_u)(p),
                        data_exactness(k),
                    )
                    .unwrap();
                    let qr = project_cell_onto(
                        &mesh,
                        c,
                        &basis,
                        |p| (sol.laplace_u)(p),
                        data_exactness(k),
                    )
                    .unwrap();
                    let rel = (&wl - &qr).norm() / qr.norm();
                    *worst = worst.max(rel);
                }
            }
            assert!(
                worst_poly <= 1e-11,
                "criterion 5: {family} k={k} poly residual {worst_poly:.3e}"
            );
            assert!(
                worst_trig <= 1e-8,
                "criterion 5: {family} k={k} trig residual {worst_trig:.3e}"
            );
            println!(
                "criterion 5 (commuting identity) {family} k={k}: PASS - poly {worst_poly:.2e} trig {worst_trig:.2e}"
            );
        }
    }
}

#[test]
fn criterion_6_error_equation_identity() {
    let mesh = generate_square_mesh(4, Rect::unit());
    let layout = WeakDofLayout::new(2, 2, 1, RMode::Nonconvex).unwrap();
    let map = DofMap::new(&mesh, layout);
    let kernels = build_kernels(&mesh, &layout).unwrap();
    let sol = manufactured_trig();
    let bc = impose_boundary_from(&mesh, &map, |p| (sol.u)(p), |p| (sol.grad_u)(p)).unwrap();
    let sys = assemble(&mesh, &map, &kernels, |p| (sol.f)(p), &bc).unwrap();
    let u_h = solve(&sys).unwrap();
    let e_norm = energy_error(&mesh, &map, &kernels, &sol, &u_h);
    let mut rng = SplitMix64::new(20240806);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut v = WeakDofVector::zeros(&map);
        for g in 0..map.total {
            if !map.is_constrained(g) {
                v.values[g] = rng.next_normal();
            }
        }
        let lhs = error_energy_product(&mesh, &map, &kernels, &sol, &u_h, &v);
        let ell = residual_functional_ell(&mesh, &map, &kernels, &sol, &v).unwrap();
        let scale = e_norm * energy_norm(&mesh, &map, &kernels, &v) + ell.abs();
        let defect = (lhs - ell).abs() / scale;
        worst = worst.max(defect);
        assert!(
            defect <= 1e-8,
            "criterion 6: identity defect {defect:.3e} of scale"
        );
    }
    println!("criterion 6 (error equation) k=2 4x4: PASS - worst defect {worst:.2e} of scale");
}

#[test]
fn criterion_7_norm_equivalence() {
    let shapes: Vec<(&str, PolyMesh, usize)> = vec![
        ("square", generate_square_mesh(1, Rect::unit()), 0),
        (
            "convex-pentagon",
            {
                let pts: Vec<Point> = (0..5)
                    .map(|i| {
                        let t = std::f64::consts::TAU * i as f64 / 5.0 + 0.3;
                        Point::new(0.5 + 0.5 * t.cos(), 0.5 + 0.5 * t.sin())
                    })
                    .collect();
                PolyMesh::from_cells(pts, vec![vec![0, 1, 2, 3, 4]]).unwrap()
            },
            0,
        ),
        ("chevron-pentagon", generate_nonconvex_mesh(1), 0),
    ];
    for k in [2usize, 3] {
        let layout = WeakDofLayout::new(k, k, k - 1, RMode::Nonconvex).unwrap();
        for (name, mesh, cell) in &shapes {
            let map = DofMap::new(mesh, layout);
            let kernel = build_local_weak_laplacian(mesh, *cell, &layout).unwrap();
            let (c_min, c_max) =
                verify_norm_equivalence(mesh, *cell, &kernel, &map, 200, 42).unwrap();
            assert!(
                c_min > 0.0 && c_min.is_finite() && c_max.is_finite(),
                "criterion 7: {name} k={k}: c_min {c_min:.3e}, c_max {c_max:.3e}"
            );

            // Stability under 3 dyadic rescalings with transported draws
            // (v_n carries a gradient trace, so it scales by 1/λ).
            let sampler = KernelFreeSampler::new(mesh, *cell, &kernel, &map).unwrap();
            let mut rng = SplitMix64::new(42);
            let draws: Vec<DVector<f64>> = (0..200).map(|_| sampler.draw(&mut rng)).collect();
            let base: Vec<f64> = draws
                .iter()
                .filter_map(|v| local_norm_ratio(mesh, *cell, &kernel, &map, v))
                .collect();
            let mut drift: f64 = 0.0;
            for pow in 1..=3 {
                let lambda = 0.5f64.powi(pow);
                let scaled = PolyMesh::from_cells(
                    mesh.vertices.iter().map(|&v| v * lambda).collect(),
                    mesh.cells.iter().map(|c| c.vertices.clone()).collect(),
                )
                .unwrap();
                let smap = DofMap::new(&scaled, layout);
                let skernel = build_local_weak_laplacian(&scaled, *cell, &layout).unwrap();
                for (v, &r0) in draws.iter().zip(&base) {
                    let mut w = v.clone();
                    let mut off = layout.dim_k();
                    for _ in 0..scaled.cells[*cell].n_edges() {
                        off += layout.trace_block();
                        for i in 0..layout.normal_block() {
                            w[off + i] /= lambda;
                        }
                        off += layout.normal_block();
                    }
                    if let Some(r) = local_norm_ratio(&scaled, *cell, &skernel, &smap, &w) {
                        drift = drift.max((r - r0).abs() / r0);
                    }
                }
            }
            assert!(
                drift <= 0.2,
                "criterion 7: {name} k={k}: rescaling drift {drift:.3e}"
            );
            println!(
                "criterion 7 (norm equivalence) {name} k={k}: PASS - c_min {c_min:.3e} c_max {c_max:.3e} drift {drift:.2e}"
            );
        }
    }
}

#[test]
fn criterion_8_spd_and_uniqueness() {
    let cases: Vec<(&str, PolyMesh, usize)> = vec![
        ("square n=2", generate_square_mesh(2, Rect::unit()), 2),
        ("square n=3", generate_square_mesh(3, Rect::unit()), 2),
        ("square n=3 k=3", generate_square_mesh(3, Rect::unit()), 3),
        ("chevron n=2", generate_nonconvex_mesh(2), 2),
        ("chevron n=2 k=3", generate_nonconvex_mesh(2), 3),
    ];
    for (name, mesh, k) in cases {
        let layout = WeakDofLayout::new(k, k, k - 1, RMode::Nonconvex).unwrap();
        let map = DofMap::new(&mesh, layout);
        let kernels = build_kernels(&mesh, &layout).unwrap();
        let bc = BoundaryValues::homogeneous(&map);
        let sys = assemble(&mesh, &map, &kernels, |_| 0.0, &bc).unwrap();
        assert!(sys.free_count() <= 500, "{name}: dense check scope");
        let dense = sys.to_dense();
        let eig = dense.symmetric_eigen().eigenvalues;
        let min_eig = eig.min();
        assert!(
            min_eig > 0.0,
            "criterion 8: {name}: min eigenvalue {min_eig:.3e}"
        );
        let x = solve(&sys).unwrap();
        let norm = x.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-12, "criterion 8: {name}: |x| = {norm:.3e}");
        println!(
            "criterion 8 (SPD/uniqueness) {name}: PASS - min eig {min_eig:.3e}, |x| {norm:.1e}"
        );
    }
}

// Convex mode r = N + k − 2 = k + 2 on squares. Measured fact: the reduced
// degree loses definiteness under refinement — the global form acquires a
// kernel (min eigenvalue of the reduced stiffness: k=2/r=4: 6.6e-4 at n=4
// but ~0 (-7e-12) at n=8; k=3/r=5: ~0 already at n=4), while r = k + 3 is
// strictly positive at every size. The simplified element bubble argument
// covers the interior bound only; the edge-bubble test functions that give
// the full norm equivalence need degrees up to 2(N-1)+1+p > N+k-2. The
// criterion is implemented as stated and fails honestly on the solve.
#[test]
fn criterion_9_convex_mode_sanity() {
    let layout2 = WeakDofLayout::new(2, 2, 1, RMode::Convex).unwrap();
    assert_eq!(layout2.r_for(4), 4);

    // Document the measured spectra before asserting.
    for (k, r) in [(2usize, 4usize), (3, 5)] {
        for n in [4usize, 8] {
            let mesh = generate_square_mesh(n, Rect::unit());
            let layout = WeakDofLayout::new(k, k, k - 1, RMode::Convex).unwrap();
            let map = DofMap::new(&mesh, layout);
            let kernels = build_kernels(&mesh, &layout).unwrap();
            let bc = BoundaryValues::homogeneous(&map);
            let sys = assemble(&mesh, &map, &kernels, |_| 0.0, &bc).unwrap();
            let min_eig = sys.to_dense().symmetric_eigen().eigenvalues.min();
            println!("criterion 9 (convex mode) k={k} r={r} n={n}: min eigenvalue {min_eig:.3e}");
        }
    }

    for k in [2usize, 3] {
        let mesh = generate_square_mesh(4, Rect::unit());
        let rel = match patch_test_error(&mesh, k, RMode::Convex) {
            Ok(rel) => rel,
            Err(e) => panic!(
                "criterion 9: k={k} convex-mode patch solve failed at n=4 \
                 (the r = k + 2 form is singular): {e}"
            ),
        };
        assert!(rel <= 1e-8, "criterion 9: patch k={k}: {rel:.3e}");
        println!("criterion 9 (convex mode) k={k}: patch test {rel:.2e}");

        let report = match run_convergence(&StudyConfig {
            k,
            r_mode: RMode::Convex,
            ..StudyConfig::default()
        }) {
            Ok((report, _)) => report,
            Err(e) => panic!(
                "criterion 9: k={k} convex-mode study aborted \
                 (the r = k + 2 form loses definiteness under refinement): {e}"
            ),
        };
        let e_rate = report.final_energy_rate().expect("rate");
        let (lo, hi) = if k == 2 { (0.8, 1.3) } else { (1.8, 2.3) };
        assert!(
            e_rate >= lo && e_rate <= hi,
            "criterion 9: k={k} convex-mode energy rate {e_rate:.3}"
        );
        let l2_rate = report.final_l2_rate().expect("rate");
        if k == 3 {
            assert!(
                (3.7..=4.3).contains(&l2_rate),
                "criterion 9: k=3 convex-mode L² rate {l2_rate:.3}"
            );
        } else {
            assert!(
                l2_rate >= 2.0,
                "criterion 9: k=2 convex-mode L² rate {l2_rate:.3}"
            );
        }
        println!(
            "criterion 9 (convex mode r=k+2) k={k}: PASS - patch {rel:.2e}, energy rate {e_rate:.3}, L² rate {l2_rate:.3}"
        );
    }
}
