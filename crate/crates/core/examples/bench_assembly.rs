//! Rough timing of the assembly and solve stages on a small torus.

use shellphase::assembly::TangentScales;
use shellphase::material::MaterialParams;
use shellphase::scenario::build_torus;
use shellphase::timeint::{CoupledSystem, EvalPoint, IntegratorConfig};
use std::time::Instant;

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let params = MaterialParams::two_phase_defaults(0.075, 4.0);
    let sc = build_torus(
        2.0, 0.5, 8, 32, 2, params, 1.0 / 3.0, 0.1, 3,
        IntegratorConfig::standard(1e-4, 2.5), 1.0,
    )
    .unwrap();
    let mut sim = sc.simulation().unwrap();
    let point = EvalPoint {
        u: sim.state.u.clone(),
        v: sim.state.v.clone(),
        acc: sim.state.acc.clone(),
        phi: sim.state.phi.clone(),
        phidot: sim.state.phidot.clone(),
    };
    let sys = &mut sim.system;
    let n = 20;

    let t0 = Instant::now();
    for _ in 0..n {
        let _ = sys.residual(&point).unwrap();
    }
    println!("residual only     : {:8.2} ms", t0.elapsed().as_secs_f64() * 1e3 / n as f64);

    let sc_t = TangentScales {
        alpha_f: 2.0 / 3.0,
        c_v: 1.0,
        c_a: 1.0,
        c_phidot: 1.0,
    };
    let t0 = Instant::now();
    for _ in 0..n {
        let full = sys.expand(&point);
        let _ = sys.asm.residual_and_tangent(&full.as_full(), &sc_t).unwrap();
    }
    println!("residual + tangent: {:8.2} ms", t0.elapsed().as_secs_f64() * 1e3 / n as f64);

    let full = sys.expand(&point);
    let r = sys.asm.residual_and_tangent(&full.as_full(), &sc_t).unwrap();
    let t0 = Instant::now();
    for _ in 0..n {
        let _ = sys.asm.solve(&r).unwrap();
    }
    println!("sparse solve      : {:8.2} ms", t0.elapsed().as_secs_f64() * 1e3 / n as f64);
    println!("dofs: {}", sys.asm.dofs.n_total());
}
