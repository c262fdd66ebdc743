use mouc::instance::{generate_instance, GenConfig};
use mouc::mip::*;
use mouc::model::build_model;
use mouc::moo::*;
use mouc::relax::regularize_and_factor;

fn main() {
    let inst = generate_instance(GenConfig { thermal: 3, hydro: 1, periods: 6, seed: 7 });
    let m = build_model(&inst);
    let mut cfg = SolveConfig::default();
    cfg.node_cap = Some(3000);
    let a = utopia_nadir(&m, &cfg).unwrap();
    println!("anchors {:?} {:?}", a.utopia, a.nadir);
    let (lo, hi) = (a.utopia[1], a.nadir[1]);
    let fac = regularize_and_factor(&m.f2, &m.layout.lower, &m.layout.upper).unwrap();
    let sweep = SweepConfig {
        step: 0.2,
        mode: Mode::McCormick { layers: 2, sharing: mouc::relax::SelectorSharing::Independent },
        ..Default::default()
    };
    for eps in epsilon_grid(0.2) {
        let p = build_epsilon_subproblem(&m, &m.f2, &m.f1, Some(&fac), lo, hi, eps, &sweep);
        let n = p.lower.len();
        let mut amin = f64::INFINITY; let mut amax = 0.0f64;
        for r in &p.system.rows {
            for &v in &r.vals { let a = v.abs(); if a > 0.0 { amin = amin.min(a); amax = amax.max(a); } }
        }
        let bmax = p.system.b.iter().map(|v| v.abs()).filter(|v| v.is_finite()).fold(0.0f64, f64::max);
        let qmax = p.objective.quad.iter().fold(0.0f64, |a,&v| a.max(v.abs()));
        let lmax = p.objective.lin.iter().fold(0.0f64, |a,&v| a.max(v.abs()));
        let umax = p.upper.iter().filter(|v| v.is_finite()).fold(0.0f64, |a,&v| a.max(v.abs()));
        println!("  qmax {qmax:.2e} lmax {lmax:.2e} umax {umax:.2e}");
        println!("eps {eps:.2}: n {n} rows {} |A| [{amin:.2e},{amax:.2e}] bmax {bmax:.2e}", p.system.rows.len());
        let t0 = std::time::Instant::now();
        let r = solve_qp(&p.objective, &p.system, &p.lower, &p.upper, None);
        match r {
            Ok(s) => println!("eps {eps:.2} root: {:?} obj {:.4} rp {:.1e} rd {:.1e} it {} ms {}",
                s.status, s.objective, s.r_prim, s.r_dual, s.iterations, t0.elapsed().as_millis()),
            Err(e) => println!("eps {eps:.2} root ERR {e} ms {}", t0.elapsed().as_millis()),
        }
    }
}
