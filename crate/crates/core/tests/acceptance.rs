//! Acceptance gate: every criterion prints one PASS/FAIL line and the process
//! exits nonzero if any fails.

use std::sync::Arc;
use std::time::Instant;

use calderon_core::bridge::density::{density_diagnostic, distinguishability, half_norm_gram};
use calderon_core::bridge::duality::duality_check;
use calderon_core::data::seeded_w_bumps;
use calderon_core::extension::{calibrate_cs, decay_diagnostic};
use calderon_core::tikhonov::{
    alpha_sweep, build_data_operator, generate_data, optimality_probes, reconstruct_cauchy_from_data,
    TikhonovData,
};
use calderon_core::*;
use statrs::function::gamma::gamma;

const ORDERS: [f64; 3] = [0.25, 0.5, 0.75];

fn line_1d(n: usize) -> GeometrySpec {
    GeometrySpec {
        omega: BoxRegion::new(vec![0.0], vec![1.0]),
        w: BoxRegion::new(vec![1.5], vec![2.0]),
        nodes_per_axis: n,
        padding: None,
    }
}

fn square_2d(n: usize) -> GeometrySpec {
    GeometrySpec {
        omega: BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]),
        w: BoxRegion::new(vec![1.5, 0.0], vec![2.0, 1.0]),
        nodes_per_axis: n,
        padding: None,
    }
}

fn grid(spec: &GeometrySpec) -> Arc<TangentialGrid> {
    Arc::new(build_tangential_grid(spec).unwrap())
}

fn identity(g: &Arc<TangentialGrid>) -> Arc<Coefficient> {
    Arc::new(Coefficient::identity(g))
}

fn bump_1d(center: f64, radius: f64) -> impl Fn(&Point) -> f64 + Sync {
    move |x: &Point| {
        let r = (x[0] - center) / radius;
        if r.abs() < 1.0 {
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        } else {
            0.0
        }
    }
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

type Outcome = (bool, String);

/// Largest relative W error of `−c_s τ` against the spectral oracle.
fn crosscheck_error(n: usize, s: f64) -> f64 {
    let g = grid(&line_1d(n));
    let a = identity(&g);
    let local = assemble_local(g.clone(), a.clone()).unwrap();
    let oracle = FractionalDirichlet::new(Arc::new(SpectralPower::new(&local, s).unwrap())).unwrap();
    let vm = VerticalSpec::new(n).resolve(s, &g, 1.0).unwrap();
    let ext = Arc::new(ExtensionOperator::assemble(ExtensionMesh::new(g.clone(), vm), &a).unwrap());
    let solver = ext.solver(TraceCondition::Mixed).unwrap();
    let cs = analytic_constant(s);
    seeded_w_bumps(&g, 3, 1)
        .iter()
        .map(|f| {
            let exact = oracle.dtn(f).unwrap();
            let tau = solver
                .solve_trace(&g.extend_from_w(f).unwrap())
                .unwrap()
                .neumann_trace()
                .unwrap()
                .variational;
            let approx: Vec<f64> = g.restrict(&tau, g.w_nodes()).iter().map(|t| -cs * t).collect();
            linalg::relative_error(&approx, &exact)
        })
        .fold(0.0, f64::max)
}

fn oracle_crosscheck() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for s in ORDERS {
        let e64 = crosscheck_error(64, s);
        let e128 = crosscheck_error(128, s);
        ok &= e64 <= 0.05 && e128 < e64;
        detail.push(format!("s={s}: {e64:.2e} -> {e128:.2e}"));
    }
    (ok, detail.join("; "))
}

fn calibration() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for s in ORDERS {
        let c = calibrate_cs(&line_1d(64), s, &VerticalSpec::new(64), 4, 2).unwrap();
        ok &= c.relative_drift() <= 0.05;
        if s == 0.5 {
            ok &= (c.fitted - 1.0).abs() <= 0.02;
        }
        detail.push(format!("s={s}: fitted {:.4} vs {:.4}", c.fitted, c.analytic));
    }
    (ok, detail.join("; "))
}

fn duality_pair(n: usize, s: f64, height: f64) -> (Arc<ExtensionOperator>, Arc<ExtensionOperator>) {
    let g = grid(&line_1d(n));
    let a = Coefficient::identity(&g);
    let grading = VerticalMesh::default_grading(s).min(VerticalMesh::default_grading(1.0 - s));
    let v1 = VerticalMesh::build(1.0 - s, height, n, grading).unwrap();
    let v2 = v1.with_order(s).unwrap();
    let op1 = ExtensionOperator::assemble(ExtensionMesh::new(g.clone(), v1), &a).unwrap();
    let op2 = ExtensionOperator::assemble(ExtensionMesh::new(g, v2), &a).unwrap();
    (Arc::new(op1), Arc::new(op2))
}

fn duality() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for s in ORDERS {
        // u₁ = y^p/p, p = 2 − 2s, is harmonic for the order 1 − s weight with Neumann datum 1
        let (op1, op2) = duality_pair(16, s, 4.0);
        let p = 2.0 - 2.0 * s;
        let u1 = ExtensionField::from_fn(op1, |_, y| y.powf(p) / p).unwrap();
        let (u2, _) = duality_check(&u1, &op2, &vec![1.0; op2.grid().len()]).unwrap();
        let exact = u2.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        ok &= exact <= 1e-10;

        let mut trace = Vec::new();
        let mut bulk = Vec::new();
        for n in [32, 64, 128] {
            let g = grid(&line_1d(n));
            let (op1, op2) = duality_pair(n, s, VerticalSpec::default_height(&g, 1.0));
            let h = g.sample(bump_1d(0.5, 0.4));
            let u1 = op1.solver(TraceCondition::Neumann).unwrap().solve_neumann(&h).unwrap();
            let (_, r) = duality_check(&u1, &op2, &h).unwrap();
            trace.push(r.trace_error);
            bulk.push(r.bulk_residual);
        }
        ok &= trace[1] <= 0.05 && bulk.windows(2).all(|w| w[1] <= 0.5 * w[0]);
        detail.push(format!("s={s}: power {exact:.1e}, trace@64 {:.1e}, bulk {}", trace[1], fmt(&bulk)));
    }
    (ok, detail.join("; "))
}

fn bridge_residual() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for s in ORDERS {
        let mut hom = Vec::new();
        let mut src = Vec::new();
        for n in [32, 64, 128] {
            let g = grid(&line_1d(n));
            let p = BridgePipeline::new(g.clone(), identity(&g), s, &VerticalSpec::new(n)).unwrap();
            let f = seeded_w_bumps(&g, 1, 1).remove(0);
            hom.push(p.homogeneous_residual(&f).unwrap().normalized);
            src.push(p.source_residual(&f, None).unwrap().normalized);
        }
        ok &= hom[1] <= 0.1 && src[1] <= 0.1 && decreasing(&hom) && decreasing(&src);
        detail.push(format!("s={s}: Ω {} Ω' {}", fmt(&hom), fmt(&src)));
    }
    (ok, detail.join("; "))
}

fn vertical_quadrature() -> Outcome {
    let g = grid(&line_1d(16));
    let a = Coefficient::identity(&g);
    let mut worst = 0.0f64;
    let mut tail_raised = true;
    for s in ORDERS {
        let vm = VerticalMesh::build(s, 12.0, 64, VerticalMesh::default_grading(s)).unwrap();
        let op = Arc::new(ExtensionOperator::assemble(ExtensionMesh::new(g.clone(), vm), &a).unwrap());
        let u = ExtensionField::from_fn(op.clone(), |x, y| (1.0 + x[0]) * (-y).exp()).unwrap();
        let v = vertical_integral(&u).unwrap();
        let expected = gamma(2.0 - 2.0 * s);
        for t in 0..g.len() {
            worst = worst.max((v.values[t] / (1.0 + g.coord(t)[0]) / expected - 1.0).abs());
        }
        let constant = ExtensionField::from_fn(op, |_, _| 1.0).unwrap();
        tail_raised &= matches!(vertical_integral(&constant), Err(Error::Tail { .. }));
    }
    (
        worst <= 5e-3 && tail_raised,
        format!("worst Γ(2−2s) error {worst:.2e}; tail error on constant field: {tail_raised}"),
    )
}

fn decay_slopes() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (dim, spec) in [(1usize, line_1d(64)), (2, square_2d(32))] {
        let g = grid(&spec);
        let u = g.extend_from_w(&seeded_w_bumps(&g, 1, 3).remove(0)).unwrap();
        let heights: Vec<f64> = (0..8).map(|i| 2.0 * 10f64.powf(i as f64 * 2.0 / 7.0)).collect();
        for s in ORDERS {
            let k = KernelExtension::new(g.clone(), s).unwrap();
            let r = decay_diagnostic(&k, &u, &heights).unwrap();
            let n = dim as f64;
            ok &= (r.sup_slope + n).abs() <= 0.1 * n && (r.gradient_slope + n + 1.0).abs() <= 0.1 * (n + 1.0);
            detail.push(format!("n={dim} s={s}: {:.3}/{:.3}", r.sup_slope, r.gradient_slope));
        }
    }
    (ok, detail.join("; "))
}

fn tikhonov() -> Outcome {
    let g = grid(&line_1d(48));
    let alphas: Vec<f64> = (0..=8).map(|k| 10f64.powi(-k)).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for s in ORDERS {
        let op = build_data_operator(g.clone(), identity(&g), s, None, &VerticalSpec::new(48)).unwrap();
        let b: Vec<f64> = (0..op.dim()).map(|k| 1.0 + 0.3 * k as f64).collect();
        let data = TikhonovData::attainable(&op, &b).unwrap();
        let sweep = alpha_sweep(&op, &data, &alphas).unwrap();
        let mut violations = 0;
        let mut spd = true;
        for (k, row) in sweep.rows.iter().enumerate() {
            violations += optimality_probes(&op, &data, row, 100, 1e-3, k as u64).unwrap().violations;
            spd &= row.normal_min_eigenvalue > 0.0 && row.normal_residual <= 1e-10;
        }
        let last = sweep.rows.last().unwrap().relative_misfit;
        ok &= sweep.misfit_nonincreasing && last < 1e-6 && violations == 0 && spd;
        detail.push(format!(
            "s={s}: misfit {:.1e} -> {last:.1e}, monotone {}, probe violations {violations}, SPD {spd}",
            sweep.rows[0].relative_misfit, sweep.misfit_nonincreasing
        ));
    }
    (ok, detail.join("; "))
}

fn closed_loop() -> Outcome {
    let spec = line_1d(48);
    let g = grid(&spec);
    let a = identity(&g);
    let local = assemble_local(g.clone(), a.clone()).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for s in ORDERS {
        let op = build_data_operator(g.clone(), a.clone(), s, None, &VerticalSpec::new(48)).unwrap();
        let data = generate_data(&spec, &CoefficientSpec::identity(), s, &bump_1d(1.75, 0.25), false).unwrap();
        let truth = BridgePipeline::new(g.clone(), a.clone(), s, &VerticalSpec::new(48))
            .unwrap()
            .operator_t(&data.trace)
            .unwrap();
        let rec = reconstruct_cauchy_from_data(&op, &local, &data, 1e-6).unwrap();
        let err = rec.pair.relative_error(&truth);
        ok &= err <= 0.1;
        detail.push(format!("s={s}: {err:.2e}"));
    }
    (ok, detail.join("; "))
}

fn invariants() -> Outcome {
    let mut semigroup = 0.0f64;
    let mut sym_local = 0.0f64;
    let mut sym_nonlocal = 0.0f64;
    let mut constants = 0.0f64;
    for spec in [line_1d(64), square_2d(24)] {
        let g = grid(&spec);
        let local = assemble_local(g.clone(), identity(&g)).unwrap();
        let minus_l = local.minus_operator_dense();
        let scale = (0..g.len()).map(|i| minus_l[(i, i)].abs()).fold(0.0, f64::max);
        for s in ORDERS {
            let p = SpectralPower::new(&local, s).unwrap();
            let product = p.matrix() * p.with_order(1.0 - s).unwrap().matrix();
            for i in 0..g.len() {
                for j in 0..g.len() {
                    semigroup = semigroup.max((product[(i, j)] - minus_l[(i, j)]).abs() / scale);
                }
            }
            let nonlocal = FractionalDirichlet::new(Arc::new(p)).unwrap().dtn_matrix().unwrap();
            sym_nonlocal = sym_nonlocal.max(nonlocal.symmetry_defect());
        }
        let dtn = local.dtn_matrix().unwrap();
        sym_local = sym_local.max(dtn.symmetry_defect());
        let diag = (0..dtn.len()).map(|i| dtn.matrix()[(i, i)].abs()).fold(0.0, f64::max);
        constants = constants.max(linalg::norm_inf(&dtn.apply(&vec![1.0; dtn.len()])) / diag);
    }
    (
        semigroup <= 1e-9 && sym_local <= 1e-10 && sym_nonlocal <= 1e-10 && constants <= 1e-10,
        format!(
            "semigroup {semigroup:.1e}, Λ symmetry {sym_local:.1e}, Λ_s symmetry {sym_nonlocal:.1e}, Λ·1 {constants:.1e}"
        ),
    )
}

fn density() -> Outcome {
    let g = grid(&square_2d(24));
    let p = BridgePipeline::new(g.clone(), identity(&g), 0.5, &VerticalSpec::new(24)).unwrap();
    let nw = g.w_nodes().len();
    let traces: Vec<Vec<f64>> = (0..nw)
        .map(|k| {
            let mut f = vec![0.0; nw];
            f[k] = 1.0;
            p.operator_t(&f).unwrap().trace
        })
        .collect();
    let boundary = g.omega_boundary_nodes();
    let on_boundary = |f: &dyn Fn(&Point) -> f64| -> Vec<f64> { boundary.iter().map(|&i| f(&g.coord(i))).collect() };
    let smooth = [
        on_boundary(&|x| 1.0 + x[0]),
        on_boundary(&|x| (std::f64::consts::PI * x[1]).cos()),
        on_boundary(&|x| x[0] * x[0] + x[1]),
    ];
    let in_span: Vec<f64> = traces[0].iter().zip(&traces[3]).map(|(a, b)| a - 2.0 * b).collect();
    let mut targets = smooth.to_vec();
    targets.push(in_span);
    let r = density_diagnostic(&targets, &traces, &half_norm_gram(&g).unwrap()).unwrap();
    let monotone = r.distances.iter().all(|d| d.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let span_zero = r.final_distance(3) <= 1e-10;
    let finals: Vec<f64> = (0..3).map(|t| r.final_distance(t)).collect();
    let smooth_ok = finals.iter().all(|d| *d < 0.1);
    (
        monotone && span_zero && smooth_ok,
        format!(
            "nonincreasing {monotone}, in-span {:.1e}, smooth targets {} with {} traces",
            r.final_distance(3),
            fmt(&finals),
            nw
        ),
    )
}

fn distinguishing() -> Outcome {
    let g = grid(&line_1d(64));
    let probes = seeded_w_bumps(&g, 2, 5);
    let vs = VerticalSpec::new(64);
    let same = distinguishability(&g, identity(&g), identity(&g), 0.5, &vs, &probes).unwrap();
    let bumped = Arc::new(
        Coefficient::from_spec(&CoefficientSpec::isotropic_bump(0.1, vec![0.5], 0.3), &g).unwrap(),
    );
    let diff = distinguishability(&g, identity(&g), bumped, 0.5, &vs, &probes).unwrap();
    let zero = same.local_gap.max(same.nonlocal_gap).max(same.cauchy_gap);
    (
        zero <= 1e-9 && diff.local_gap > 0.0 && diff.nonlocal_gap > 0.0,
        format!(
            "identical {zero:.1e}; bump local {:.2e}, nonlocal {:.2e}, Cauchy {:.2e}",
            diff.local_gap, diff.nonlocal_gap, diff.cauchy_gap
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("oracle cross-check", oracle_crosscheck),
        ("c_s calibration", calibration),
        ("weight duality", duality),
        ("bridge residual", bridge_residual),
        ("vertical quadrature", vertical_quadrature),
        ("decay slopes", decay_slopes),
        ("Tikhonov sweep", tikhonov),
        ("closed-loop reconstruction", closed_loop),
        ("linear-algebra invariants", invariants),
        ("density", density),
        ("distinguishability", distinguishing),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2}. {name} ({:.1}s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
