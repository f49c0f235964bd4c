use mchom::coarse_solvers::*;
use mchom::effective::ZeroOrderEffective;
use mchom::experiments::{coarse_solve, upscale, BlockTensors, CaseSel, ExperimentConfig, Problem};
use mchom::fine_solvers::{solve_q1, DirichletSides};
use mchom::grid::{FineGrid, Layers, ScalarField};

#[test]
fn identity_tensors_reproduce_bilinear_poisson_solve() {
    let m = 12;
    let coeffs = vec![MacroCoefficients::poisson(1.0, 1.0); m * m];
    let field = solve_macro(m, &coeffs).unwrap();

    let g = FineGrid::square(m).unwrap();
    let kappa = ScalarField::constant(g, 1.0);
    let f = ScalarField::constant(g, 1.0);
    let (layout, nodal) = solve_q1(&kappa, &f, g.full_rect(), DirichletSides::ALL).unwrap();
    for b in 0..=m {
        for a in 0..=m {
            let want = nodal[layout.node(a, b)];
            let got = field.nodal[0][b * (m + 1) + a];
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-3), "({a},{b}): {got} vs {want}");
        }
    }
}

#[test]
fn poisson_solution_vanishes_on_boundary_and_is_symmetric() {
    let m = 10;
    let field = solve_macro(m, &vec![MacroCoefficients::poisson(2.0, 3.0); m * m]).unwrap();
    let n = m + 1;
    for k in 0..n {
        for node in [k, k * n, k * n + m, m * n + k] {
            assert_eq!(field.nodal[0][node], 0.0);
        }
    }
    for b in 0..m {
        for a in 0..m {
            let u = field.block_mean(0, a, b);
            assert!(u > 0.0);
            assert!((u - field.block_mean(0, m - 1 - a, b)).abs() < 1e-12);
            assert!((u - field.block_mean(0, b, a)).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_order_macro_divides_source_by_coefficient() {
    let (a, f) = ([0.25, 40.0], 3.0);
    let m = 4;
    let coeffs: Vec<ZeroOrderEffective> = (0..m * m)
        .map(|k| ZeroOrderEffective {
            block: (k % m, k / m),
            c: a.to_vec(),
            alpha: vec![vec![a[0] * 0.3, 0.0], vec![0.0, a[1] * 0.7]],
            b: vec![f * 0.3, f * 0.7],
            fraction: vec![0.3, 0.7],
        })
        .collect();
    let sol = solve_zero_order_macro(m, &coeffs).unwrap();
    for means in &sol.block_means {
        assert!((means[0] - f / a[0]).abs() < 1e-12);
        assert!((means[1] - f / a[1]).abs() < 1e-12);
    }
    let mut bad = coeffs.clone();
    bad[5].c[1] = 0.0;
    assert!(solve_zero_order_macro(m, &bad).is_err());
}

/// Two continua with isotropic diffusion and an exchange term.
fn exchange_coeffs(d: [f64; 2], beta: f64, f: [f64; 2]) -> MacroCoefficients {
    let mut c = MacroCoefficients::zeros(2);
    for n in 0..2 {
        c.k[n][n] = beta;
        c.k[n][1 - n] = -beta;
        for i in 0..2 {
            c.k[2 + 2 * n + i][2 + 2 * n + i] = d[n];
        }
        c.rhs[n] = f[n];
    }
    c
}

#[test]
fn coarse_fields_converge_under_refinement() {
    let c = exchange_coeffs([1.0, 0.05], 20.0, [1.0, 0.0]);
    let solve = |m: usize| solve_macro(m, &vec![c.clone(); m * m]).unwrap();
    // Block means of the finer field restricted to the coarser blocks.
    let diff = |coarse: &MacroField, fine: &MacroField| {
        let m = coarse.m;
        let (mut num, mut den) = (0.0, 0.0);
        for n in 0..2 {
            for b in 0..m {
                for a in 0..m {
                    let u = coarse.block_mean(n, a, b);
                    let r = (0..4)
                        .map(|q| fine.block_mean(n, 2 * a + q % 2, 2 * b + q / 2))
                        .sum::<f64>()
                        / 4.0;
                    num += (u - r).powi(2);
                    den += r * r;
                }
            }
        }
        (num / den).sqrt()
    };
    let (f8, f16, f32) = (solve(8), solve(16), solve(32));
    let (d1, d2) = (diff(&f8, &f16), diff(&f16, &f32));
    assert!(d2 < 0.5 * d1, "{d1} then {d2}");
    assert!(d2 < 0.02, "{d2}");
}

#[test]
fn exchange_couples_continua() {
    let m = 8;
    let tight = solve_macro(m, &vec![exchange_coeffs([1.0, 1.0], 1e4, [1.0, 0.0]); m * m]).unwrap();
    let loose = solve_macro(m, &vec![exchange_coeffs([1.0, 1.0], 1e-6, [1.0, 0.0]); m * m]).unwrap();
    let c = m / 2;
    let (t0, t1) = (tight.block_mean(0, c, c), tight.block_mean(1, c, c));
    assert!((t0 - t1).abs() < 1e-2 * t0, "{t0} {t1}");
    assert!(loose.block_mean(1, c, c).abs() < 1e-4 * loose.block_mean(0, c, c));
}

#[test]
fn rejects_mismatched_block_count() {
    assert!(solve_macro(4, &vec![MacroCoefficients::poisson(1.0, 1.0); 15]).is_err());
}

fn small_case(case: CaseSel) -> ExperimentConfig {
    ExperimentConfig {
        case,
        m: 5,
        eps: 0.2,
        n_fine: Some(40),
        layers: Layers::new(2, 0, 1).unwrap(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn mixed_elimination_satisfies_velocity_equation() {
    let cfg = small_case(CaseSel::Layered);
    let (tensors, _) = upscale(&Problem::build(&cfg).unwrap()).unwrap();
    let sol = coarse_solve(&cfg, &tensors).unwrap();
    assert!(sol.meta.velocity_residual.unwrap() <= 1e-10);
    let velocity = sol.velocity.as_ref().unwrap();
    assert_eq!(velocity.len(), 25);
    assert!(velocity.iter().flatten().flatten().all(|v| v.is_finite()));
}

#[test]
fn zero_source_gives_zero_solution() {
    let cfg = small_case(CaseSel::Layered);
    let (tensors, _) = upscale(&Problem::build(&cfg).unwrap()).unwrap();
    let BlockTensors::Mixed(mut blocks) = tensors else { panic!("expected mixed tensors") };
    for b in &mut blocks {
        b.f_u.iter_mut().for_each(|v| *v = 0.0);
        b.f_u_m.iter_mut().for_each(|v| *v = [0.0; 2]);
        b.f_v.iter_mut().for_each(|v| *v = [0.0; 2]);
    }
    let sol = solve_mixed_macro(cfg.m, &blocks, cfg.flags).unwrap();
    assert!(sol.block_means.iter().flatten().all(|&u| u == 0.0));
    assert!(sol.velocity.unwrap().iter().flatten().flatten().all(|&v| v == 0.0));
}

#[test]
fn coarse_table_has_one_row_per_block() {
    let cfg = small_case(CaseSel::Inclusions);
    let (tensors, _) = upscale(&Problem::build(&cfg).unwrap()).unwrap();
    let sol = coarse_solve(&cfg, &tensors).unwrap();
    let mut buf = Vec::new();
    sol.write_table(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.len() == 4));
    assert_eq!(rows[7][..2], ["2", "1"]);
    let dir = tempfile::tempdir().unwrap();
    sol.save(dir.path(), "c").unwrap();
    let meta: CoarseMeta = serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert_eq!(meta, sol.meta);
}
