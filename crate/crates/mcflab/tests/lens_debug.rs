//! Scratch diagnostics for the staircase solve (run with --ignored).

use mcflab::boundary::{staircase, BoundaryMotionSpec, Horizon};
use mcflab::mesh::{NodeClass, ScalarField};
use mcflab::mesh::Grid;
use mcflab::regularize::{solve_translator_graph, SolveOptions};

fn residual_field(f: &ScalarField, lambda: f64) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid.clone());
    out.mask = f.mask.clone();
    for node in f.grid.iter_nodes() {
        if f.class(node) != NodeClass::Interior {
            continue;
        }
        let g = f.gradient(node).unwrap();
        let hs = f.hessian(node).unwrap();
        let w2 = 1.0 + g[0] * g[0] + g[1] * g[1];
        let bracket = hs[0][0] * (1.0 + g[1] * g[1]) - 2.0 * g[0] * g[1] * hs[0][1]
            + hs[1][1] * (1.0 + g[0] * g[0]);
        out.set(node, bracket / w2 + lambda);
    }
    out
}

#[test]
#[ignore]
fn lens_cliff_anatomy() {
    let spec = BoundaryMotionSpec::static_lens(1.0, 0.8, Horizon::Fixed(8.0)).unwrap();
    let grid = Grid::cartesian2d([65, 33], [-0.7, -0.3], [0.7, 0.3]).unwrap();
    let opts = SolveOptions::default();
    // lambda = 4 via gentle amplitude continuation
    let stair4 = staircase(&spec, &grid, 4.0).unwrap();
    let mut carry: Option<ScalarField> = None;
    for s in [0.05f64, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
        let mut g = stair4.trace.clone();
        g.values.iter_mut().for_each(|v| *v *= s);
        match solve_translator_graph(&spec.w, &grid, 4.0, Some(&g), carry.as_ref(), &opts) {
            Ok(sol) => {
                println!("stage {s}: ok in {} its", sol.newton_iterations);
                carry = Some(sol.f);
            }
            Err(mcflab::Error::NonConvergence { residual, iterations, iterate, .. }) => {
                println!("stage {s}: stuck at {residual:.3e} after {iterations} its");
                let r = residual_field(&iterate, 4.0);
                let mut worst = (0.0f64, (0usize, 0usize));
                for node in r.grid.iter_nodes() {
                    if r.class(node) == NodeClass::Interior && r.value(node).abs() > worst.0 {
                        worst = (r.value(node).abs(), node);
                    }
                }
                println!(
                    "worst |R| {:.3e} at {:?} coords {:?}",
                    worst.0,
                    worst.1,
                    grid.coords(worst.1)
                );
                // top-10 residual nodes
                let mut all: Vec<((usize, usize), f64)> = r
                    .grid
                    .iter_nodes()
                    .filter(|&n| r.class(n) == NodeClass::Interior)
                    .map(|n| (n, r.value(n).abs()))
                    .collect();
                all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
                for (n, v) in all.iter().take(10) {
                    println!("  node {:?} coords {:?}: |R| = {:.3e}, f = {:.4}", n, grid.coords(*n), v, iterate.value(*n));
                }
                panic!("stage failed");
            }
            Err(e) => panic!("other: {e}"),
        }
    }
    let f4 = carry.unwrap();
    println!("lambda 4 converged");
    // column through x = 0: print f and the residual of the lambda = 8 warm start
    let i_mid = 32usize;
    let mut warm = f4.clone();
    warm.values.iter_mut().for_each(|v| *v *= 2.0);
    let r8 = residual_field(&warm, 8.0);
    println!("  j     y        f4        warm r8");
    for j in 0..33 {
        if f4.class((i_mid, j)) != NodeClass::Interior {
            continue;
        }
        let y = grid.coords((i_mid, j))[1];
        println!(
            "{:3} {:8.4} {:9.4} {:12.3e}",
            j,
            y,
            f4.value((i_mid, j)),
            r8.value((i_mid, j))
        );
    }
    // now try the lambda = 8 solve and report where it gets stuck
    let stair8 = staircase(&spec, &grid, 8.0).unwrap();
    match solve_translator_graph(&spec.w, &grid, 8.0, Some(&stair8.trace), Some(&warm), &opts) {
        Ok(sol) => println!("lambda 8 converged in {} its", sol.newton_iterations),
        Err(mcflab::Error::NonConvergence { residual, iterations, iterate, .. }) => {
            println!("lambda 8 stuck at {residual:.3e} after {iterations} its");
            let r = residual_field(&iterate, 8.0);
            // argmax of |R|
            let mut worst = (0.0f64, (0usize, 0usize));
            for node in r.grid.iter_nodes() {
                if r.class(node) == NodeClass::Interior && r.value(node).abs() > worst.0 {
                    worst = (r.value(node).abs(), node);
                }
            }
            println!("worst |R| {:.3e} at {:?} (coords {:?})", worst.0, worst.1, grid.coords(worst.1));
            let (iw, _) = worst.1;
            println!("  j     y        f(iterate)   R");
            for j in 0..33 {
                if iterate.class((iw, j)) != NodeClass::Interior {
                    continue;
                }
                let y = grid.coords((iw, j))[1];
                println!(
                    "{:3} {:8.4} {:12.4} {:12.3e}",
                    j,
                    y,
                    iterate.value((iw, j)),
                    r.value((iw, j))
                );
            }
        }
        Err(e) => println!("other error: {e}"),
    }
}
