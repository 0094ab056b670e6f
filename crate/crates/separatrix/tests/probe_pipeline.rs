use separatrix::analysis::*;
use std::time::Instant;

#[test]
fn probe_schlogl() {
    let t0 = Instant::now();
    let recs = schlogl_sweep(&SchloglOptions::default()).unwrap();
    for r in &recs {
        eprintln!("sigma={:.4}  ews={:.6}  ews/sigma={:.5}  logtau={:.5}", r.sigma, r.ews_geom, r.ews_geom / r.sigma, r.log_tau_fdm);
    }
    let rep = scaling_pipeline(&recs).unwrap();
    eprintln!("schlogl: delta={:.8} K={:.6} c1={:.5} c2_fit={:.8} c2_pred={:.8} rel_err={:.4} r2=({:.5},{:.5},{:.5}) sigma_max={}",
        rep.delta, rep.k_coef, rep.c1, rep.c2_fit, rep.c2_pred, rep.rel_err, rep.r2_i, rep.r2_ii, rep.r2_iii, rep.sigma_max);
    eprintln!("schlogl elapsed {:?}", t0.elapsed());
}

#[test]
fn probe_2d() {
    let t0 = Instant::now();
    let mut opts = SweepOptions::new(2.1);
    opts.with_distances = true;
    let recs = sweep_fixed_b1(&opts).unwrap();
    for r in &recs {
        eprintln!("sigma={:.4}  ews={:.6}  ews/sigma={:.5}  logtau={:.5}  mdb={:?}  mds={:?}", r.sigma, r.ews_geom, r.ews_geom / r.sigma, r.log_tau_fdm, r.mdb, r.mds);
    }
    let rep = scaling_pipeline(&recs).unwrap();
    eprintln!("2d: delta={:.8} K={:.6} c1={:.5} c2_fit={:.8} c2_pred={:.8} rel_err={:.4} r2=({:.5},{:.5},{:.5}) sigma_max={}",
        rep.delta, rep.k_coef, rep.c1, rep.c2_fit, rep.c2_pred, rep.rel_err, rep.r2_i, rep.r2_ii, rep.r2_iii, rep.sigma_max);
    let val = validity_check(&recs).unwrap();
    eprintln!("validity: sigma_max={} ratios={:?}", val.sigma_max, val.ratios);
    eprintln!("2d elapsed {:?}", t0.elapsed());
}
