use circlelab_core::expr::CircleMapExpr;
use circlelab_core::gallery;
use circlelab_core::lift::Lift;
use circlelab_core::small_rotation::{build_setup, critical_time, SetupParams};

fn main() {
    let e = gallery::load("gstar").unwrap();
    let gallery::EntryKind::SmallRotationStage(roles) = e.kind else { panic!() };
    let setup = build_setup(&e.group, &roles, &SetupParams::default()).unwrap();
    let c = critical_time(&setup).unwrap();
    let t_i = c.t + 0.5 * (setup.t0 - c.t);
    // What do shallow iterates look like vs the flow at t_i?
    for n in [6u32, 10, 14, 20] {
        let steps = (setup.seq.scale(n) * t_i).floor() as u64;
        let f_arc = e.group.expr(0);
        let g_arc = e.group.expr(1);
        let expr = CircleMapExpr::compose_arcs(vec![
            CircleMapExpr::power(f_arc, -(n as i32)),
            CircleMapExpr::power(g_arc, steps as i32),
            CircleMapExpr::power(f_arc, n as i32),
        ]);
        let lift = Lift::canonical(std::sync::Arc::new(expr));
        let mid = 0.5 * (setup.i0.0 + setup.i0.1);
        let phi_mid = setup.flow.flow(mid, t_i).unwrap();
        let off = (phi_mid - lift.eval(mid)).round();
        let mut sup: f64 = 0.0;
        let mut dominates = true;
        for i in 0..=256 {
            let x = setup.i0.0 + (setup.i0.1 - setup.i0.0) * i as f64 / 256.0;
            let gv = lift.eval(x) + off;
            let pt = setup.flow.flow(x, c.t).unwrap();
            sup = sup.max((gv - setup.flow.flow(x, t_i).unwrap()).abs());
            if gv <= pt { dominates = false; }
        }
        println!("n {n} steps {steps}: sup err {sup:.4e}, dominates critical flow: {dominates}");
    }
}
